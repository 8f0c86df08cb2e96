//! Time-varying AR(2)-AGARCH(1,1) processes with abrupt breaks.
//!
//! The crate covers closed-form solutions, predictors and moments of the
//! mean ([`tvar`]) and variance ([`tvgarch`]) processes, a Monte Carlo
//! simulator used as an oracle ([`sim`]), quasi-maximum-likelihood fitting
//! of univariate break-dummy and sign-regime GJR models ([`qml`]), the
//! bivariate UEDCC-AGARCH spillover model ([`bivariate`]), variance-break
//! scanning ([`breaks`]), portmanteau diagnostics ([`diagnostics`]) and the
//! file formats used by the command-line tool ([`io`]).

pub mod bivariate;
pub mod breaks;
pub mod diagnostics;
pub mod error;
pub mod io;
pub mod numeric;
pub mod optim;
pub mod params;
pub mod qml;
pub mod tvar;
pub mod sim;
pub mod tvgarch;

pub use error::{Error, Result};
