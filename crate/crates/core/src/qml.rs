//! Gaussian quasi-maximum-likelihood fits of the univariate AR-AGARCH(1,1)
//! models: a plain GJR variance, a GJR variance whose coefficients shift by
//! break dummies, and a GARCH variance whose coefficients switch with the
//! sign of the previous return.
//!
//! The first `mean_lags` observations condition the mean equation and the
//! variance recursion starts at the sample variance of the returns. Both the
//! log-likelihood and its gradient are computed in one pass; the gradient
//! carries `∂h_t/∂θ` through the recursion.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::diagnostics::{ljung_box, Portmanteau};
use crate::error::{Error, Result};
use crate::optim::{minimize_multistart, OptimOptions};
use crate::params::{BreakSchedule, GarchRegime, TvGarchSpec};

const LN_2PI: f64 = 1.837_877_066_409_345_3;
/// Log-likelihood reported when the variance recursion leaves `h > 0`.
pub const PENALTY: f64 = -1e12;

/// Which increments a break carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DummyMask {
    pub omega: bool,
    pub alpha: bool,
    pub gamma: bool,
    pub beta: bool,
}

impl DummyMask {
    pub const ALL: DummyMask = DummyMask {
        omega: true,
        alpha: true,
        gamma: true,
        beta: true,
    };
    pub const NONE: DummyMask = DummyMask {
        omega: false,
        alpha: false,
        gamma: false,
        beta: false,
    };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VarianceKind {
    Plain,
    /// `breaks[i]` is the index of the first observation with `D_i = 1`.
    BreakDummies { breaks: Vec<usize>, free: Vec<DummyMask> },
    /// `ω⁻, α⁻, β⁻` switched on by `r_{t-1} < 0`.
    SignRegime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnivariateModelSpec {
    pub mean_lags: usize,
    pub variance: VarianceKind,
    /// Include the `γ S⁻ ε²` terms.
    pub asymmetry: bool,
}

impl UnivariateModelSpec {
    pub fn plain_gjr(mean_lags: usize) -> Self {
        Self {
            mean_lags,
            variance: VarianceKind::Plain,
            asymmetry: true,
        }
    }

    pub fn with_breaks(mean_lags: usize, breaks: Vec<usize>, free: DummyMask) -> Self {
        let free = vec![free; breaks.len()];
        Self {
            mean_lags,
            variance: VarianceKind::BreakDummies { breaks, free },
            asymmetry: true,
        }
    }

    pub fn sign_regime(mean_lags: usize) -> Self {
        Self {
            mean_lags,
            variance: VarianceKind::SignRegime,
            asymmetry: false,
        }
    }

    /// Checks the spec against a sample of `n` returns.
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.mean_lags > 2 {
            return Err(Error::InvalidSpec(format!("mean lags must be 0, 1 or 2, got {}", self.mean_lags)));
        }
        if let VarianceKind::BreakDummies { breaks, free } = &self.variance {
            if breaks.len() != free.len() {
                return Err(Error::LengthMismatch {
                    what: "dummy masks",
                    expected: breaks.len(),
                    got: free.len(),
                });
            }
            let mut edges = vec![self.mean_lags];
            edges.extend(breaks.iter().copied());
            edges.push(n);
            for w in edges.windows(2) {
                if w[1] <= w[0] || w[1] - w[0] < 50 {
                    return Err(Error::InvalidSchedule(format!(
                        "breaks {breaks:?} must be increasing, inside the sample of {n} and at least 50 observations apart"
                    )));
                }
            }
        } else if n < self.mean_lags + 50 {
            return Err(Error::Degenerate(format!("{n} observations are too few")));
        }
        Ok(())
    }

    /// Parameter names in vector order.
    pub fn parameter_names(&self) -> Vec<String> {
        let mut names = vec!["mu".to_string()];
        names.extend((1..=self.mean_lags).map(|j| format!("phi{j}")));
        names.extend(self.terms().into_iter().map(|t| t.name));
        names
    }

    fn terms(&self) -> Vec<Term> {
        use Activation::*;
        use Role::*;
        let mut terms = vec![Term::new(Omega, Always, "omega".into()), Term::new(Alpha, Always, "alpha".into())];
        if self.asymmetry {
            terms.push(Term::new(Gamma, Always, "gamma".into()));
        }
        terms.push(Term::new(Beta, Always, "beta".into()));
        match &self.variance {
            VarianceKind::Plain => {}
            VarianceKind::BreakDummies { breaks, free } => {
                for (i, (&b, m)) in breaks.iter().zip(free).enumerate() {
                    let i = i + 1;
                    if m.omega {
                        terms.push(Term::new(Omega, After(b), format!("omega{i}")));
                    }
                    if m.alpha {
                        terms.push(Term::new(Alpha, After(b), format!("alpha{i}")));
                    }
                    if m.gamma && self.asymmetry {
                        terms.push(Term::new(Gamma, After(b), format!("gamma{i}")));
                    }
                    if m.beta {
                        terms.push(Term::new(Beta, After(b), format!("beta{i}")));
                    }
                }
            }
            VarianceKind::SignRegime => {
                terms.push(Term::new(Omega, NegReturn, "omega-".into()));
                terms.push(Term::new(Alpha, NegReturn, "alpha-".into()));
                terms.push(Term::new(Beta, NegReturn, "beta-".into()));
            }
        }
        terms
    }

    pub fn parameter_count(&self) -> usize {
        1 + self.mean_lags + self.terms().len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Role {
    Omega,
    Alpha,
    Gamma,
    Beta,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Activation {
    Always,
    After(usize),
    NegReturn,
}

#[derive(Debug, Clone)]
struct Term {
    role: Role,
    act: Activation,
    name: String,
}

impl Term {
    fn new(role: Role, act: Activation, name: String) -> Self {
        Self { role, act, name }
    }

    fn active(&self, t: usize, r_prev: f64) -> bool {
        match self.act {
            Activation::Always => true,
            Activation::After(b) => t >= b,
            Activation::NegReturn => r_prev < 0.0,
        }
    }
}

/// Likelihood pass output.
#[derive(Debug, Clone)]
pub struct LoglikEval {
    pub value: f64,
    /// Set when some `h_t ≤ 0`; `value` is then [`PENALTY`].
    pub penalized: bool,
    pub gradient: Vec<f64>,
    /// Per-observation gradients, when requested.
    pub scores: Option<Vec<Vec<f64>>>,
    pub residuals: Vec<f64>,
    pub variances: Vec<f64>,
}

fn population_variance(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n
}

fn evaluate(returns: &[f64], spec: &UnivariateModelSpec, params: &[f64], want_scores: bool) -> Result<LoglikEval> {
    let k = spec.parameter_count();
    if params.len() != k {
        return Err(Error::LengthMismatch {
            what: "parameters",
            expected: k,
            got: params.len(),
        });
    }
    let p = spec.mean_lags;
    let n = returns.len();
    if n <= p + 1 {
        return Err(Error::Degenerate(format!("{n} observations are too few")));
    }
    if let Some(i) = returns.iter().position(|r| !r.is_finite()) {
        return Err(Error::Degenerate(format!("non-finite return at index {i}")));
    }
    let terms = spec.terms();
    let mu = params[0];
    let phi = &params[1..1 + p];
    let vparams = &params[1 + p..];
    let h_init = population_variance(returns);

    let mut value = 0.0;
    let mut gradient = vec![0.0; k];
    let mut scores = want_scores.then(|| Vec::with_capacity(n - p));
    let mut residuals = Vec::with_capacity(n - p);
    let mut variances = Vec::with_capacity(n - p);
    let mut dh = vec![0.0; k];
    let mut deps_prev = vec![0.0; k];
    let mut deps = vec![0.0; k];
    let mut h_prev = 0.0;
    let mut eps_prev = 0.0;
    let mut penalized = false;
    for t in p..n {
        let mut eps = returns[t] - mu;
        deps.iter_mut().for_each(|d| *d = 0.0);
        deps[0] = -1.0;
        for j in 0..p {
            eps -= phi[j] * returns[t - 1 - j];
            deps[1 + j] = -returns[t - 1 - j];
        }
        let h = if t == p {
            dh.iter_mut().for_each(|d| *d = 0.0);
            h_init
        } else {
            let r_prev = returns[t - 1];
            let neg = eps_prev < 0.0;
            let e2 = eps_prev * eps_prev;
            let (mut omega, mut a, mut beta) = (0.0, 0.0, 0.0);
            for (term, &x) in terms.iter().zip(vparams) {
                if !term.active(t, r_prev) {
                    continue;
                }
                match term.role {
                    Role::Omega => omega += x,
                    Role::Alpha => a += x,
                    Role::Gamma if neg => a += x,
                    Role::Gamma => {}
                    Role::Beta => beta += x,
                }
            }
            for j in 0..k {
                dh[j] = beta * dh[j] + 2.0 * a * eps_prev * deps_prev[j];
            }
            for (v, term) in terms.iter().enumerate() {
                if !term.active(t, r_prev) {
                    continue;
                }
                dh[1 + p + v] += match term.role {
                    Role::Omega => 1.0,
                    Role::Alpha => e2,
                    Role::Gamma if neg => e2,
                    Role::Gamma => 0.0,
                    Role::Beta => h_prev,
                };
            }
            omega + a * e2 + beta * h_prev
        };
        if !(h > 0.0 && h.is_finite()) {
            penalized = true;
            break;
        }
        let lt = -0.5 * (LN_2PI + h.ln() + eps * eps / h);
        value += lt;
        let c_h = -0.5 * (1.0 / h - eps * eps / (h * h));
        let c_e = -eps / h;
        let st: Vec<f64> = (0..k).map(|j| c_h * dh[j] + c_e * deps[j]).collect();
        for j in 0..k {
            gradient[j] += st[j];
        }
        if let Some(s) = scores.as_mut() {
            s.push(st);
        }
        residuals.push(eps);
        variances.push(h);
        h_prev = h;
        eps_prev = eps;
        std::mem::swap(&mut deps_prev, &mut deps);
    }
    if penalized {
        return Ok(LoglikEval {
            value: PENALTY,
            penalized: true,
            gradient: vec![0.0; k],
            scores: None,
            residuals,
            variances,
        });
    }
    Ok(LoglikEval {
        value,
        penalized,
        gradient,
        scores,
        residuals,
        variances,
    })
}

/// Gaussian quasi-log-likelihood at natural parameters (see
/// [`UnivariateModelSpec::parameter_names`] for the order).
pub fn loglik(returns: &[f64], spec: &UnivariateModelSpec, params: &[f64]) -> Result<LoglikEval> {
    evaluate(returns, spec, params, false)
}

/// Analytic gradient of [`loglik`].
pub fn loglik_gradient(returns: &[f64], spec: &UnivariateModelSpec, params: &[f64]) -> Result<Vec<f64>> {
    Ok(evaluate(returns, spec, params, false)?.gradient)
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn softplus_inv(y: f64) -> f64 {
    let y = y.max(1e-8);
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Maps optimizer coordinates to natural parameters: `ω = exp`, `α = softplus`,
/// `γ = softplus - α`, `β = logistic`; mean and dummy coefficients are untouched.
struct Transform {
    p: usize,
    asym: bool,
}

impl Transform {
    fn new(spec: &UnivariateModelSpec) -> Self {
        Self {
            p: spec.mean_lags,
            asym: spec.asymmetry,
        }
    }

    fn idx(&self) -> (usize, usize, Option<usize>, usize) {
        let o = 1 + self.p;
        if self.asym {
            (o, o + 1, Some(o + 2), o + 3)
        } else {
            (o, o + 1, None, o + 2)
        }
    }

    fn to_natural(&self, u: &[f64]) -> Vec<f64> {
        let mut x = u.to_vec();
        let (io, ia, ig, ib) = self.idx();
        x[io] = u[io].exp();
        x[ia] = softplus(u[ia]);
        if let Some(ig) = ig {
            x[ig] = softplus(u[ig]) - x[ia];
        }
        x[ib] = logistic(u[ib]);
        x
    }

    fn to_unconstrained(&self, x: &[f64]) -> Vec<f64> {
        let mut u = x.to_vec();
        let (io, ia, ig, ib) = self.idx();
        u[io] = x[io].max(1e-12).ln();
        u[ia] = softplus_inv(x[ia]);
        if let Some(ig) = ig {
            u[ig] = softplus_inv(x[ia] + x[ig]);
        }
        let b = x[ib].clamp(1e-6, 1.0 - 1e-6);
        u[ib] = (b / (1.0 - b)).ln();
        u
    }

    /// Chain rule: gradient in `u` from gradient in natural parameters.
    fn pull_back(&self, u: &[f64], g: &[f64]) -> Vec<f64> {
        let mut out = g.to_vec();
        let (io, ia, ig, ib) = self.idx();
        out[io] = g[io] * u[io].exp();
        let sa = logistic(u[ia]);
        out[ia] = g[ia] * sa;
        if let Some(ig) = ig {
            out[ia] -= g[ig] * sa;
            out[ig] = g[ig] * logistic(u[ig]);
        }
        let b = logistic(u[ib]);
        out[ib] = g[ib] * b * (1.0 - b);
        out
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Drop insignificant dummy increments one at a time at this level and refit.
    pub prune_level: Option<f64>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            prune_level: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ParamEstimate {
    pub name: String,
    pub value: f64,
    /// Robust (sandwich) standard error.
    pub se: f64,
    pub t_stat: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SecondOrderCheck {
    /// `c̄` of the pre-break regime.
    pub base: f64,
    /// `c̄ + Σ c̄_i`, the post-break persistence.
    pub cumulative: f64,
    pub satisfied: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SignPersistence {
    /// From the positive-return state, `α + β (+ γ/2)`.
    pub r_plus: f64,
    /// Adds half of `α⁻ + β⁻`.
    pub r_minus: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub converged: bool,
    pub iterations: usize,
    pub evaluations: usize,
    pub method: String,
    pub starts: usize,
    pub optimizer: &'static str,
    pub se_method: &'static str,
    pub h_init: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitDiagnostics {
    pub lb: Portmanteau,
    pub lb_squared: Portmanteau,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitResult {
    pub model: UnivariateModelSpec,
    pub n_obs: usize,
    pub params: Vec<ParamEstimate>,
    pub log_likelihood: f64,
    /// `c̄_ℓ` per segment, the pre-break segment first.
    pub persistence: Vec<f64>,
    pub second_order: SecondOrderCheck,
    pub sign_persistence: Option<SignPersistence>,
    pub diagnostics: Option<FitDiagnostics>,
    pub convergence: ConvergenceReport,
    #[serde(skip)]
    pub standardized_residuals: Vec<f64>,
    pub warnings: Vec<String>,
}

impl FitResult {
    pub fn values(&self) -> Vec<f64> {
        self.params.iter().map(|p| p.value).collect()
    }

    pub fn get(&self, name: &str) -> Option<&ParamEstimate> {
        self.params.iter().find(|p| p.name == name)
    }

    /// Aligned text table in the layout of the published estimates.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        for p in &self.params {
            let mark = match p.p_value {
                v if v < 0.01 => "a",
                v if v < 0.05 => "b",
                v if v < 0.10 => "c",
                _ => "",
            };
            s.push_str(&format!("{:<10} {:>10.4}{:<1} ({:.4})\n", p.name, p.value, mark, p.se));
        }
        s.push_str(&format!("{:<10} {:>10.1}\n", "LogL", self.log_likelihood));
        if let Some(d) = &self.diagnostics {
            s.push_str(&format!("{:<10} {:>10.3} [{:.3}]\n", "LB(5)", d.lb.statistic, d.lb.p_value));
            s.push_str(&format!("{:<10} {:>10.3} [{:.3}]\n", "LB2(5)", d.lb_squared.statistic, d.lb_squared.p_value));
        }
        s
    }
}

/// Per-segment regimes (pre-break first) from break-dummy estimates.
pub fn segment_regimes(spec: &UnivariateModelSpec, params: &[f64]) -> Vec<GarchRegime> {
    let terms = spec.terms();
    let vparams = &params[1 + spec.mean_lags..];
    let breaks: Vec<usize> = match &spec.variance {
        VarianceKind::BreakDummies { breaks, .. } => breaks.clone(),
        _ => vec![],
    };
    (0..=breaks.len())
        .map(|seg| {
            // a time point inside segment `seg`
            let t = if seg == 0 { 0 } else { breaks[seg - 1] };
            let mut r = GarchRegime::new(0.0, 0.0, 0.0, 0.0);
            for (term, &x) in terms.iter().zip(vparams) {
                let on = match term.act {
                    Activation::Always => true,
                    Activation::After(b) => t >= b,
                    Activation::NegReturn => false,
                };
                if on {
                    match term.role {
                        Role::Omega => r.omega += x,
                        Role::Alpha => r.alpha += x,
                        Role::Gamma => r.gamma += x,
                        Role::Beta => r.beta += x,
                    }
                }
            }
            r
        })
        .collect()
}

/// The fitted break model as a time-varying spec referenced at the last observation.
pub fn to_tv_garch_spec(spec: &UnivariateModelSpec, params: &[f64], n: usize) -> Result<TvGarchSpec> {
    let mut regimes = segment_regimes(spec, params);
    regimes.reverse();
    let offsets = match &spec.variance {
        VarianceKind::BreakDummies { breaks, .. } => breaks.iter().rev().map(|b| (n - b) as u64).collect(),
        _ => vec![],
    };
    TvGarchSpec::new(regimes, BreakSchedule::from_offsets(offsets)?)
}

/// Sandwich covariance `H⁻¹ S H⁻¹`.
pub fn sandwich(hessian: &DMatrix<f64>, outer: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(hessian.clone());
    let (lo, hi) = eig
        .eigenvalues
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v.abs()), hi.max(v.abs())));
    let condition = hi / lo;
    if !(condition < 1e14) {
        return Err(Error::Singular { condition });
    }
    let hinv = hessian
        .clone()
        .try_inverse()
        .ok_or(Error::Singular { condition })?;
    Ok(&hinv * outer * &hinv)
}

/// Hessian by central differences of an analytic gradient, symmetrized.
pub fn hessian_from_gradient(grad: &dyn Fn(&[f64]) -> Vec<f64>, x: &[f64]) -> DMatrix<f64> {
    let k = x.len();
    let mut h = DMatrix::zeros(k, k);
    let mut xp = x.to_vec();
    for j in 0..k {
        let step = 1e-5 * x[j].abs().max(1e-3);
        xp[j] = x[j] + step;
        let gp = grad(&xp);
        xp[j] = x[j] - step;
        let gm = grad(&xp);
        xp[j] = x[j];
        for i in 0..k {
            h[(i, j)] = (gp[i] - gm[i]) / (2.0 * step);
        }
    }
    (&h + h.transpose()) * 0.5
}

/// Robust standard errors at `estimates`.
pub fn robust_se(returns: &[f64], spec: &UnivariateModelSpec, estimates: &[f64]) -> Result<Vec<f64>> {
    let ev = evaluate(returns, spec, estimates, true)?;
    if ev.penalized {
        return Err(Error::NonPositiveVariance {
            index: ev.variances.len() + spec.mean_lags,
            value: f64::NAN,
        });
    }
    let k = estimates.len();
    let scores = ev.scores.expect("requested");
    let mut outer = DMatrix::zeros(k, k);
    for s in &scores {
        let v = nalgebra::DVector::from_column_slice(s);
        outer += &v * v.transpose();
    }
    let grad = |x: &[f64]| evaluate(returns, spec, x, false).map(|e| e.gradient).unwrap_or_else(|_| vec![f64::NAN; k]);
    let hess = hessian_from_gradient(&grad, estimates);
    let cov = sandwich(&hess, &outer)?;
    Ok((0..k).map(|i| cov[(i, i)].max(0.0).sqrt()).collect())
}

fn starting_points(returns: &[f64], spec: &UnivariateModelSpec) -> Vec<Vec<f64>> {
    let k = spec.parameter_count();
    let p = spec.mean_lags;
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let var = population_variance(returns);
    let grid: &[(f64, f64, f64)] = if spec.asymmetry {
        &[(0.05, 0.05, 0.88), (0.10, 0.05, 0.80), (0.02, 0.04, 0.94)]
    } else {
        &[(0.05, 0.0, 0.90), (0.10, 0.0, 0.80), (0.03, 0.0, 0.95)]
    };
    grid.iter()
        .map(|&(a, g, b)| {
            let mut x = vec![0.0; k];
            x[0] = mean;
            let o = 1 + p;
            x[o] = var * (1.0 - a - b - g / 2.0);
            x[o + 1] = a;
            if spec.asymmetry {
                x[o + 2] = g;
                x[o + 3] = b;
            } else {
                x[o + 2] = b;
            }
            x
        })
        .collect()
}

/// Fits the model by Gaussian QML.
pub fn fit(returns: &[f64], spec: &UnivariateModelSpec, options: FitOptions) -> Result<FitResult> {
    let mut spec = spec.clone();
    loop {
        let result = fit_once(returns, &spec, options)?;
        let Some(level) = options.prune_level else {
            return Ok(result);
        };
        let VarianceKind::BreakDummies { free, .. } = &mut spec.variance else {
            return Ok(result);
        };
        // weakest dummy increment above the level
        let worst = result
            .params
            .iter()
            .filter(|p| p.name.chars().last().is_some_and(|c| c.is_ascii_digit()) && !p.name.starts_with("phi"))
            .filter(|p| p.p_value > level || !p.p_value.is_finite())
            .max_by(|a, b| a.p_value.total_cmp(&b.p_value));
        let Some(worst) = worst else {
            return Ok(result);
        };
        let split = worst.name.find(|c: char| c.is_ascii_digit()).expect("indexed name");
        let (role, idx) = worst.name.split_at(split);
        let i: usize = idx.parse::<usize>().expect("index") - 1;
        let mask = &mut free[i];
        match role {
            "omega" => mask.omega = false,
            "alpha" => mask.alpha = false,
            "gamma" => mask.gamma = false,
            "beta" => mask.beta = false,
            _ => unreachable!("dummy names are role plus index"),
        }
    }
}

fn fit_once(returns: &[f64], spec: &UnivariateModelSpec, options: FitOptions) -> Result<FitResult> {
    spec.validate(returns.len())?;
    if let Some(i) = returns.iter().position(|r| !r.is_finite()) {
        return Err(Error::Degenerate(format!("non-finite return at index {i}")));
    }
    let tr = Transform::new(spec);
    let n_eff = (returns.len() - spec.mean_lags) as f64;
    let objective = |u: &[f64]| -> f64 {
        let x = tr.to_natural(u);
        match evaluate(returns, spec, &x, false) {
            Ok(e) if !e.penalized => -e.value / n_eff,
            _ => f64::INFINITY,
        }
    };
    let gradient = |u: &[f64]| -> Vec<f64> {
        let x = tr.to_natural(u);
        match evaluate(returns, spec, &x, false) {
            Ok(e) if !e.penalized => tr.pull_back(u, &e.gradient).into_iter().map(|g| -g / n_eff).collect(),
            _ => vec![f64::NAN; u.len()],
        }
    };
    let starts: Vec<Vec<f64>> = starting_points(returns, spec)
        .iter()
        .map(|x| tr.to_unconstrained(x))
        .collect();
    let opts = OptimOptions {
        max_iter: options.max_iter,
        grad_tol: 1e-7,
        f_tol: 1e-13,
    };
    let best = minimize_multistart(&objective, &gradient, &starts, opts)
        .ok_or_else(|| Error::Convergence("no start reached a finite likelihood".into()))?;
    let mut warnings = vec![];
    if !best.converged {
        warnings.push(format!("optimizer stopped after {} iterations without meeting tolerances", best.iterations));
    }
    let x = tr.to_natural(&best.x);
    let ev = evaluate(returns, spec, &x, false)?;
    if ev.penalized {
        return Err(Error::Convergence("optimum violates variance positivity".into()));
    }
    let se = match robust_se(returns, spec, &x) {
        Ok(se) => se,
        Err(e) => {
            warnings.push(format!("standard errors unavailable: {e}"));
            vec![f64::NAN; x.len()]
        }
    };
    let normal = Normal::standard();
    let params = spec
        .parameter_names()
        .into_iter()
        .zip(x.iter().zip(&se))
        .map(|(name, (&value, &se))| {
            let t_stat = value / se;
            ParamEstimate {
                name,
                value,
                se,
                t_stat,
                p_value: if t_stat.is_finite() { 2.0 * normal.sf(t_stat.abs()) } else { f64::NAN },
            }
        })
        .collect();
    let regimes = segment_regimes(spec, &x);
    let persistence: Vec<f64> = regimes.iter().map(|r| r.persistence()).collect();
    let base = persistence[0];
    let cumulative = *persistence.last().expect("one segment");
    let second_order = SecondOrderCheck {
        base,
        cumulative,
        satisfied: base < 1.0 && cumulative < 1.0,
    };
    if !second_order.satisfied {
        warnings.push("second-order condition fails".into());
    }
    if regimes.iter().any(|r| r.alpha < 0.0 || r.beta < 0.0 || r.alpha + r.gamma < 0.0) {
        warnings.push("a segment has negative α, β or α+γ".into());
    }
    let sign_persistence = matches!(spec.variance, VarianceKind::SignRegime).then(|| {
        let get = |name: &str| {
            spec.parameter_names()
                .iter()
                .position(|n| n == name)
                .map(|i| x[i])
                .unwrap_or(0.0)
        };
        let r_plus = get("alpha") + get("beta") + get("gamma") / 2.0;
        SignPersistence {
            r_plus,
            r_minus: r_plus + (get("alpha-") + get("beta-")) / 2.0,
        }
    });
    let z: Vec<f64> = ev
        .residuals
        .iter()
        .zip(&ev.variances)
        .map(|(e, h)| e / h.sqrt())
        .collect();
    let diagnostics = match (ljung_box(&z, 5, false), ljung_box(&z, 5, true)) {
        (Ok(lb), Ok(lb_squared)) => Some(FitDiagnostics { lb, lb_squared }),
        _ => None,
    };
    Ok(FitResult {
        model: spec.clone(),
        n_obs: returns.len(),
        params,
        log_likelihood: ev.value,
        persistence,
        second_order,
        sign_persistence,
        diagnostics,
        convergence: ConvergenceReport {
            converged: best.converged,
            iterations: best.iterations,
            evaluations: best.evaluations,
            method: best.method.to_string(),
            starts: starts.len(),
            optimizer: "multi-start BFGS (analytic gradient, Armijo backtracking) with Nelder-Mead fallback",
            se_method: "sandwich H^-1 S H^-1, Hessian by differencing the analytic gradient",
            h_init: "sample variance of returns",
        },
        standardized_residuals: z,
        warnings,
    })
}
