//! Portmanteau tests on standardized residuals.

use nalgebra::Matrix2;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::chi2_sf;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Portmanteau {
    pub statistic: f64,
    pub p_value: f64,
    pub lags: usize,
    pub df: usize,
}

/// Ljung–Box `Q(lags)` on `x` or on `x²`.
pub fn ljung_box(residuals: &[f64], lags: usize, squared: bool) -> Result<Portmanteau> {
    let n = residuals.len();
    if lags == 0 || n <= lags {
        return Err(Error::Domain(format!("need more than {lags} observations and lags >= 1, got {n}")));
    }
    let x: Vec<f64> = if squared {
        residuals.iter().map(|r| r * r).collect()
    } else {
        residuals.to_vec()
    };
    let mean = x.iter().sum::<f64>() / n as f64;
    let dev: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let denom: f64 = dev.iter().map(|d| d * d).sum();
    if !(denom > 1e-300 * n as f64) {
        return Err(Error::Degenerate("constant series".into()));
    }
    let t = n as f64;
    let mut q = 0.0;
    for k in 1..=lags {
        let num: f64 = (k..n).map(|i| dev[i] * dev[i - k]).sum();
        let rho = num / denom;
        q += rho * rho / (t - k as f64);
    }
    let statistic = t * (t + 2.0) * q;
    Ok(Portmanteau {
        statistic,
        p_value: chi2_sf(statistic, lags),
        lags,
        df: lags,
    })
}

/// Hosking's multivariate portmanteau for bivariate residuals, `χ²(4·lags)`.
pub fn hosking_q(residuals: &[[f64; 2]], lags: usize) -> Result<Portmanteau> {
    hosking_q_adjusted(residuals, lags, 0)
}

/// As [`hosking_q`] on residuals of a fitted VAR(`var_order`): `χ²(4·(lags - var_order))`.
pub fn hosking_q_adjusted(residuals: &[[f64; 2]], lags: usize, var_order: usize) -> Result<Portmanteau> {
    let n = residuals.len();
    if var_order >= lags {
        return Err(Error::Domain(format!("lags {lags} must exceed the VAR order {var_order}")));
    }
    if lags == 0 || n <= lags {
        return Err(Error::Domain(format!("need more than {lags} observations and lags >= 1, got {n}")));
    }
    let t = n as f64;
    let mean = residuals.iter().fold([0.0; 2], |m, r| [m[0] + r[0] / t, m[1] + r[1] / t]);
    let dev: Vec<[f64; 2]> = residuals.iter().map(|r| [r[0] - mean[0], r[1] - mean[1]]).collect();
    let cov = |k: usize| -> Matrix2<f64> {
        let mut c = Matrix2::zeros();
        for i in k..n {
            for a in 0..2 {
                for b in 0..2 {
                    c[(a, b)] += dev[i][a] * dev[i - k][b];
                }
            }
        }
        c / t
    };
    let c0 = cov(0);
    let c0_inv = c0
        .try_inverse()
        .filter(|m| m.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::Degenerate("singular residual covariance".into()))?;
    let mut q = 0.0;
    for k in 1..=lags {
        let ck = cov(k);
        q += (ck.transpose() * c0_inv * ck * c0_inv).trace() / (t - k as f64);
    }
    let statistic = t * t * q;
    let df = 4 * (lags - var_order);
    Ok(Portmanteau {
        statistic,
        p_value: chi2_sf(statistic, df),
        lags,
        df,
    })
}
