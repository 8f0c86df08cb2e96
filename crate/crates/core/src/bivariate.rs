//! Bivariate AR(2) mean with UEDCC-AGARCH(1,1) variances and DCC correlations.
//!
//! Variances follow `h_t = ω + A* ε²_{t-1} + B* h_{t-1}` with
//! `A* = A + Γ S_{t-1} + diag(d⁻) A⁻ + Σ D_l A_l` and
//! `B* = B + diag(d⁺) B⁺ + Σ D_l B_l`, where `d⁻_i` (`d⁺_i`) flags a negative
//! (positive) return of the other series at `t-1` and `D_l` switches on at a
//! break. Correlations use the residual definition `ε = e ⊙ q^{-1/2} ⊙ h^{1/2}`,
//! so the recursion `Q_t = (1-α_D-β_D) Q̄ + α_D e e' + β_D Q_{t-1}` runs on
//! `e = z ⊙ diag(Q)^{1/2}` with `z = ε/√h`.

use nalgebra::{DMatrix, DVector, Matrix4};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::diagnostics::{hosking_q, hosking_q_adjusted, Portmanteau};
use crate::error::{Error, Result};
use crate::optim::{minimize_multistart, numerical_gradient, OptimOptions};
use crate::qml::{hessian_from_gradient, sandwich, ParamEstimate};
use crate::sim::{path_rng, ShockDist};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

pub type Mat2 = [[f64; 2]; 2];

/// Shift of the cross-diagonal spillovers from observation `start` onwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BreakShift {
    pub start: usize,
    /// `[α¹²_l, α²¹_l]`.
    pub alpha: [f64; 2],
    /// `[β¹²_l, β²¹_l]`.
    pub beta: [f64; 2],
}

/// Sign-regime spillovers: `[x₁₂, x₂₁]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SignShifts {
    pub alpha_minus: [f64; 2],
    pub beta_plus: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DccParams {
    pub alpha: f64,
    pub beta: f64,
    pub q_bar: Mat2,
}

impl DccParams {
    pub fn constant(rho: f64) -> Self {
        Self {
            alpha: 0.0,
            beta: 0.0,
            q_bar: [[1.0, rho], [rho, 1.0]],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BivariateSpec {
    pub mu: [f64; 2],
    pub phi1: Mat2,
    pub phi2: Mat2,
    pub omega: [f64; 2],
    pub a: Mat2,
    /// Diagonal of `Γ`.
    pub gamma: [f64; 2],
    pub b: Mat2,
    #[serde(default)]
    pub break_shifts: Vec<BreakShift>,
    #[serde(default)]
    pub sign_shifts: Option<SignShifts>,
    pub dcc: DccParams,
}

impl BivariateSpec {
    /// Two GJR processes with constant correlation `rho`.
    pub fn decoupled(omega: [f64; 2], alpha: [f64; 2], gamma: [f64; 2], beta: [f64; 2], rho: f64) -> Self {
        Self {
            mu: [0.0; 2],
            phi1: [[0.0; 2]; 2],
            phi2: [[0.0; 2]; 2],
            omega,
            a: [[alpha[0], 0.0], [0.0, alpha[1]]],
            gamma,
            b: [[beta[0], 0.0], [0.0, beta[1]]],
            break_shifts: vec![],
            sign_shifts: None,
            dcc: DccParams::constant(rho),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut comp = Matrix4::zeros();
        for i in 0..2 {
            for j in 0..2 {
                comp[(i, j)] = self.phi1[i][j];
                comp[(i, j + 2)] = self.phi2[i][j];
            }
            comp[(i + 2, i)] = 1.0;
        }
        let radius = comp
            .complex_eigenvalues()
            .iter()
            .fold(0.0f64, |m, z| m.max(z.norm()));
        if radius >= 1.0 - 1e-12 {
            return Err(Error::InvalidSpec(format!("mean equation is not stationary (radius {radius})")));
        }
        let d = &self.dcc;
        if !(d.alpha >= 0.0 && d.beta >= 0.0 && d.alpha + d.beta < 1.0) {
            return Err(Error::InvalidSpec(format!("DCC needs α,β ≥ 0 and α+β < 1: {}, {}", d.alpha, d.beta)));
        }
        let q = d.q_bar;
        if (q[0][1] - q[1][0]).abs() > 1e-12 || !(q[0][0] > 0.0) || !(q[0][0] * q[1][1] - q[0][1] * q[1][0] > 0.0) {
            return Err(Error::InvalidSpec("Q̄ must be symmetric positive definite".into()));
        }
        if self.omega.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::InvalidSpec("ω must be positive".into()));
        }
        if self.break_shifts.windows(2).any(|w| w[1].start <= w[0].start) {
            return Err(Error::InvalidSchedule("break shifts must be increasing".into()));
        }
        Ok(())
    }

    /// `A*` and `B*` given the sign state of the previous shocks and returns.
    fn effective(&self, t: usize, eps_prev: [f64; 2], r_prev: [f64; 2]) -> (Mat2, Mat2) {
        let mut a = self.a;
        let mut b = self.b;
        for i in 0..2 {
            if eps_prev[i] < 0.0 {
                a[i][i] += self.gamma[i];
            }
        }
        if let Some(s) = &self.sign_shifts {
            // row i reacts to the other series j
            for (i, j) in [(0usize, 1usize), (1, 0)] {
                if r_prev[j] < 0.0 {
                    a[i][j] += s.alpha_minus[i];
                }
                if r_prev[j] > 0.0 {
                    b[i][j] += s.beta_plus[i];
                }
            }
        }
        for shift in &self.break_shifts {
            if t >= shift.start {
                a[0][1] += shift.alpha[0];
                a[1][0] += shift.alpha[1];
                b[0][1] += shift.beta[0];
                b[1][0] += shift.beta[1];
            }
        }
        (a, b)
    }

    fn variance_step(&self, t: usize, eps_prev: [f64; 2], h_prev: [f64; 2], r_prev: [f64; 2]) -> [f64; 2] {
        let (a, b) = self.effective(t, eps_prev, r_prev);
        let e2 = [eps_prev[0] * eps_prev[0], eps_prev[1] * eps_prev[1]];
        [
            self.omega[0] + a[0][0] * e2[0] + a[0][1] * e2[1] + b[0][0] * h_prev[0] + b[0][1] * h_prev[1],
            self.omega[1] + a[1][0] * e2[0] + a[1][1] * e2[1] + b[1][0] * h_prev[0] + b[1][1] * h_prev[1],
        ]
    }

    fn mean_residual(&self, returns: &[[f64; 2]], t: usize, lags: usize) -> [f64; 2] {
        let mut e = [returns[t][0] - self.mu[0], returns[t][1] - self.mu[1]];
        for i in 0..2 {
            for j in 0..2 {
                if lags >= 1 {
                    e[i] -= self.phi1[i][j] * returns[t - 1][j];
                }
                if lags >= 2 {
                    e[i] -= self.phi2[i][j] * returns[t - 2][j];
                }
            }
        }
        e
    }

    /// Largest lag with a non-zero mean coefficient.
    pub fn mean_lags(&self) -> usize {
        let nz = |m: &Mat2| m.iter().flatten().any(|v| *v != 0.0);
        if nz(&self.phi2) {
            2
        } else if nz(&self.phi1) {
            1
        } else {
            0
        }
    }
}

/// One DCC update on `e = z ⊙ diag(Q)^{1/2}`. `q = [q11, q12, q22]`.
pub(crate) fn dcc_step(alpha: f64, beta: f64, q_bar: &Mat2, q: [f64; 3], z: [f64; 2]) -> [f64; 3] {
    let e = [z[0] * q[0].sqrt(), z[1] * q[2].sqrt()];
    let w = 1.0 - alpha - beta;
    [
        w * q_bar[0][0] + alpha * e[0] * e[0] + beta * q[0],
        w * q_bar[0][1] + alpha * e[0] * e[1] + beta * q[1],
        w * q_bar[1][1] + alpha * e[1] * e[1] + beta * q[2],
    ]
}

fn rho_of(q: [f64; 3]) -> f64 {
    q[1] / (q[0] * q[2]).sqrt()
}

fn corr_loglik(rho: f64, z: [f64; 2]) -> f64 {
    let d = 1.0 - rho * rho;
    -0.5 * (d.ln() + (z[0] * z[0] + z[1] * z[1] - 2.0 * rho * z[0] * z[1]) / d - z[0] * z[0] - z[1] * z[1])
}

fn population_variance(x: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = x.clone().count() as f64;
    let m = x.clone().sum::<f64>() / n;
    x.map(|v| (v - m) * (v - m)).sum::<f64>() / n
}

fn initial_variances(returns: &[[f64; 2]]) -> [f64; 2] {
    [
        population_variance(returns.iter().map(|r| r[0])),
        population_variance(returns.iter().map(|r| r[1])),
    ]
}

#[derive(Debug, Clone, Serialize)]
pub struct FilterOutput {
    /// Index of the first filtered observation (the mean lags).
    pub start: usize,
    pub eps: Vec<[f64; 2]>,
    pub h: Vec<[f64; 2]>,
    /// `z = ε/√h`.
    pub z: Vec<[f64; 2]>,
    /// `[q11, q12, q22]`.
    pub q: Vec<[f64; 3]>,
    pub rho: Vec<f64>,
    pub log_likelihood: f64,
    /// Part with `R = I` (sum of the two univariate terms).
    pub variance_log_likelihood: f64,
}

/// Runs the variance recursion over precomputed residuals. Returns `h`, or the
/// index of the first non-positive variance.
fn variance_path(
    spec: &BivariateSpec,
    h0: [f64; 2],
    returns: &[[f64; 2]],
    eps: &[[f64; 2]],
    start: usize,
) -> std::result::Result<Vec<[f64; 2]>, (usize, f64)> {
    let mut h = Vec::with_capacity(eps.len());
    let mut cur = h0;
    for (k, _) in eps.iter().enumerate() {
        let t = start + k;
        if k > 0 {
            cur = spec.variance_step(t, eps[k - 1], cur, returns[t - 1]);
        }
        for v in cur {
            if !(v > 0.0 && v.is_finite()) {
                return Err((t, v));
            }
        }
        h.push(cur);
    }
    Ok(h)
}

/// Filters returns through the full model. The first `mean_lags` observations
/// condition the mean; `h` starts at the sample variances and `Q` at `Q̄`.
pub fn filter(spec: &BivariateSpec, returns: &[[f64; 2]]) -> Result<FilterOutput> {
    filter_from(spec, returns, None)
}

/// As [`filter`], starting from a given `(h, [q11, q12, q22])` at the first filtered observation.
pub fn filter_from(spec: &BivariateSpec, returns: &[[f64; 2]], initial: Option<([f64; 2], [f64; 3])>) -> Result<FilterOutput> {
    let start = spec.mean_lags();
    if returns.len() < start + 3 {
        return Err(Error::Degenerate(format!("{} observations are too few", returns.len())));
    }
    let eps: Vec<[f64; 2]> = (start..returns.len())
        .map(|t| spec.mean_residual(returns, t, start))
        .collect();
    let h0 = initial.map_or_else(|| initial_variances(returns), |i| i.0);
    let h = variance_path(spec, h0, returns, &eps, start).map_err(|(index, value)| Error::NonPositiveVariance { index, value })?;
    let z: Vec<[f64; 2]> = eps
        .iter()
        .zip(&h)
        .map(|(e, h)| [e[0] / h[0].sqrt(), e[1] / h[1].sqrt()])
        .collect();
    let d = &spec.dcc;
    let mut q = Vec::with_capacity(z.len());
    let mut cur = initial.map_or([d.q_bar[0][0], d.q_bar[0][1], d.q_bar[1][1]], |i| i.1);
    for k in 0..z.len() {
        if k > 0 {
            cur = dcc_step(d.alpha, d.beta, &d.q_bar, cur, z[k - 1]);
        }
        q.push(cur);
    }
    let rho: Vec<f64> = q.iter().map(|q| rho_of(*q)).collect();
    let mut var_ll = 0.0;
    let mut corr_ll = 0.0;
    for k in 0..z.len() {
        var_ll += -0.5 * (2.0 * LN_2PI + h[k][0].ln() + h[k][1].ln() + z[k][0] * z[k][0] + z[k][1] * z[k][1]);
        corr_ll += corr_loglik(rho[k], z[k]);
    }
    Ok(FilterOutput {
        start,
        eps,
        h,
        z,
        q,
        rho,
        log_likelihood: var_ll + corr_ll,
        variance_log_likelihood: var_ll,
    })
}

/// Result of the elementwise positivity conditions for one coefficient state.
#[derive(Debug, Clone, Serialize)]
pub struct PositivityReport {
    /// Eigenvalues of `B`, i.e. inverse roots of `|I - BL|`; `(re, im)` pairs, largest first.
    pub inverse_roots: [(f64, f64); 2],
    pub passes: [bool; 4],
    /// Minimum slack of each condition; negative means violated.
    pub margins: [f64; 4],
}

impl PositivityReport {
    pub fn all_pass(&self) -> bool {
        self.passes.iter().all(|p| *p)
    }

    pub fn min_margin(&self) -> f64 {
        self.margins.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

fn mat_mul(x: &Mat2, y: &Mat2) -> Mat2 {
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = x[i][0] * y[0][j] + x[i][1] * y[1][j];
        }
    }
    out
}

fn min_entry(m: &Mat2) -> f64 {
    m.iter().flatten().copied().fold(f64::INFINITY, f64::min)
}

/// Conditions (i)-(iv) for `ω`, `B` and the family of `A*` matrices.
fn check_state(omega: [f64; 2], b: &Mat2, a_states: &[Mat2]) -> PositivityReport {
    let m1 = ((1.0 - b[1][1]) * omega[0] + b[0][1] * omega[1]).min((1.0 - b[0][0]) * omega[1] + b[1][0] * omega[0]);
    let tr = b[0][0] + b[1][1];
    let det = b[0][0] * b[1][1] - b[0][1] * b[1][0];
    let disc = tr * tr / 4.0 - det;
    let (roots, m2) = if disc >= 0.0 {
        let s = disc.sqrt();
        let (p1, p2) = (tr / 2.0 + s, tr / 2.0 - s);
        ([(p1, 0.0), (p2, 0.0)], p1 - p2.abs())
    } else {
        let s = (-disc).sqrt();
        ([(tr / 2.0, s), (tr / 2.0, -s)], -s)
    };
    let m3 = a_states.iter().map(min_entry).fold(f64::INFINITY, f64::min);
    let shift = roots[1].0.max(0.0);
    let b_shift = [[b[0][0] - shift, b[0][1]], [b[1][0], b[1][1] - shift]];
    let m4 = if disc >= 0.0 {
        a_states
            .iter()
            .map(|a| min_entry(&mat_mul(&b_shift, a)))
            .fold(f64::INFINITY, f64::min)
    } else {
        f64::NEG_INFINITY
    };
    let margins = [m1, m2, m3, m4];
    PositivityReport {
        inverse_roots: roots,
        passes: [m1 > 0.0, m2 >= 0.0, m3 >= 0.0, m4 >= 0.0],
        margins,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PositivityCheck {
    pub base: PositivityReport,
    pub states: Vec<(String, PositivityReport)>,
    pub all_pass: bool,
    pub min_margins: [f64; 4],
}

/// Positivity conditions for every coefficient state the spec can reach:
/// each cumulative break regime and, with sign-regime spillovers, each
/// combination of lagged return signs.
pub fn check_positivity(spec: &BivariateSpec) -> PositivityCheck {
    let mut states = Vec::new();
    let regimes = spec.break_shifts.len() + 1;
    for l in 0..regimes {
        let t = if l == 0 { 0 } else { spec.break_shifts[l - 1].start };
        // return-sign states of the other series: -1, 0, +1
        let sign_states: Vec<[f64; 2]> = if spec.sign_shifts.is_some() {
            let v = [-1.0, 0.0, 1.0];
            v.iter().flat_map(|a| v.iter().map(move |b| [*a, *b])).collect()
        } else {
            vec![[0.0, 0.0]]
        };
        for r in sign_states {
            let (a0, b) = spec.effective(t, [1.0, 1.0], r);
            let (a1, _) = spec.effective(t, [-1.0, 1.0], r);
            let (a2, _) = spec.effective(t, [1.0, -1.0], r);
            let (a3, _) = spec.effective(t, [-1.0, -1.0], r);
            let label = if spec.sign_shifts.is_some() {
                format!("regime {l}, lagged return signs ({:+}, {:+})", r[0], r[1])
            } else {
                format!("regime {l}")
            };
            states.push((label, check_state(spec.omega, &b, &[a0, a1, a2, a3])));
        }
    }
    let base = states[0].1.clone();
    let all_pass = states.iter().all(|(_, r)| r.all_pass());
    let mut min_margins = [f64::INFINITY; 4];
    for (_, r) in &states {
        for k in 0..4 {
            min_margins[k] = min_margins[k].min(r.margins[k]);
        }
    }
    PositivityCheck {
        base,
        states,
        all_pass,
        min_margins,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BivariateSimConfig {
    pub spec: BivariateSpec,
    pub path_length: usize,
    pub burn_in: usize,
    pub shocks: ShockDist,
    pub seed: u64,
}

impl BivariateSimConfig {
    pub fn new(spec: BivariateSpec, path_length: usize, seed: u64) -> Self {
        Self {
            spec,
            path_length,
            burn_in: 1000,
            shocks: ShockDist::Normal,
            seed,
        }
    }
}

/// One simulated bivariate path (burn-in dropped). Break starts index this sample.
#[derive(Debug, Clone, Serialize)]
pub struct BivariatePath {
    pub returns: Vec<[f64; 2]>,
    pub eps: Vec<[f64; 2]>,
    pub h: Vec<[f64; 2]>,
    pub q: Vec<[f64; 3]>,
    pub rho: Vec<f64>,
}

/// Starting variances from `(I - A - Γ/2 - B) h = ω`, falling back to `ω/(1 - 0.9)`
/// when that system has no positive solution.
fn stationary_guess(spec: &BivariateSpec) -> [f64; 2] {
    let m = [
        [1.0 - spec.a[0][0] - spec.gamma[0] / 2.0 - spec.b[0][0], -spec.a[0][1] - spec.b[0][1]],
        [-spec.a[1][0] - spec.b[1][0], 1.0 - spec.a[1][1] - spec.gamma[1] / 2.0 - spec.b[1][1]],
    ];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let h = [
        (m[1][1] * spec.omega[0] - m[0][1] * spec.omega[1]) / det,
        (m[0][0] * spec.omega[1] - m[1][0] * spec.omega[0]) / det,
    ];
    if h.iter().all(|v| *v > 0.0 && v.is_finite()) {
        h
    } else {
        [spec.omega[0] * 10.0, spec.omega[1] * 10.0]
    }
}

/// Simulates one path. A non-positive variance is reported with its step
/// index counted from the first burn-in step.
pub fn simulate_bivariate(config: &BivariateSimConfig) -> Result<BivariatePath> {
    let spec = &config.spec;
    spec.validate()?;
    if config.path_length == 0 {
        return Err(Error::InvalidSpec("path length must be positive".into()));
    }
    let sampler = config.shocks.sampler()?;
    let mut rng = path_rng(config.seed, 0);
    let total = config.burn_in + config.path_length;
    let lags = spec.mean_lags();
    let mean = {
        let mut m = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                m[i][j] = if i == j { 1.0 } else { 0.0 } - spec.phi1[i][j] - spec.phi2[i][j];
            }
        }
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        [
            (m[1][1] * spec.mu[0] - m[0][1] * spec.mu[1]) / det,
            (m[0][0] * spec.mu[1] - m[1][0] * spec.mu[0]) / det,
        ]
    };
    // two pre-sample returns at the unconditional mean
    let mut r = vec![mean, mean];
    let mut eps = Vec::with_capacity(total);
    let mut h = Vec::with_capacity(total);
    let mut q = Vec::with_capacity(total);
    let d = &spec.dcc;
    let mut h_cur = stationary_guess(spec);
    let mut q_cur = [d.q_bar[0][0], d.q_bar[0][1], d.q_bar[1][1]];
    let mut z_prev = [0.0; 2];
    let base = BivariateSpec {
        break_shifts: vec![],
        ..spec.clone()
    };
    for step in 0..total {
        let t = r.len();
        if step > 0 {
            // break starts count from the first kept observation
            h_cur = if step < config.burn_in {
                base.variance_step(0, eps[step - 1], h_cur, r[t - 1])
            } else {
                spec.variance_step(step - config.burn_in, eps[step - 1], h_cur, r[t - 1])
            };
            q_cur = dcc_step(d.alpha, d.beta, &d.q_bar, q_cur, z_prev);
        }
        for v in h_cur {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::NonPositiveVariance { index: step, value: v });
            }
        }
        let u = [sampler.draw(&mut rng), sampler.draw(&mut rng)];
        // e ~ N(0, Q_t) via the Cholesky factor of Q_t
        let l11 = q_cur[0].sqrt();
        let l21 = q_cur[1] / l11;
        let l22 = (q_cur[2] - l21 * l21).sqrt();
        let e = [l11 * u[0], l21 * u[0] + l22 * u[1]];
        let zt = [e[0] / q_cur[0].sqrt(), e[1] / q_cur[2].sqrt()];
        let et = [zt[0] * h_cur[0].sqrt(), zt[1] * h_cur[1].sqrt()];
        let mut rt = [spec.mu[0] + et[0], spec.mu[1] + et[1]];
        for i in 0..2 {
            for j in 0..2 {
                if lags >= 1 {
                    rt[i] += spec.phi1[i][j] * r[t - 1][j];
                }
                if lags >= 2 {
                    rt[i] += spec.phi2[i][j] * r[t - 2][j];
                }
            }
        }
        z_prev = zt;
        r.push(rt);
        eps.push(et);
        h.push(h_cur);
        q.push(q_cur);
    }
    let b = config.burn_in;
    let q: Vec<[f64; 3]> = q.split_off(b);
    Ok(BivariatePath {
        returns: r.split_off(2 + b),
        eps: eps.split_off(b),
        h: h.split_off(b),
        rho: q.iter().map(|v| rho_of(*v)).collect(),
        q,
    })
}

/// Which coefficients a bivariate fit estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BivariateFitConfig {
    pub mean_lags: usize,
    pub asymmetry: bool,
    /// Constant cross terms `α₁₂, α₂₁, β₁₂, β₂₁`.
    pub spillovers: bool,
    /// Break starts with free `[α₁₂, α₂₁, β₁₂, β₂₁]` shifts.
    pub breaks: Vec<(usize, [bool; 4])>,
    pub sign_shifts: bool,
    pub dcc: bool,
}

impl Default for BivariateFitConfig {
    fn default() -> Self {
        Self {
            mean_lags: 0,
            asymmetry: true,
            spillovers: true,
            breaks: vec![],
            sign_shifts: false,
            dcc: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Link {
    Exp,
    Softplus,
    /// `softplus(u) - x[idx]`
    SoftplusMinus(usize),
    Logistic,
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Slot {
    Omega(usize),
    A(usize, usize),
    Gamma(usize),
    B(usize, usize),
    BreakA(usize, usize),
    BreakB(usize, usize),
    SignA(usize),
    SignB(usize),
}

struct Layout {
    names: Vec<String>,
    slots: Vec<Slot>,
    links: Vec<Link>,
    breaks: Vec<usize>,
    sign: bool,
}

impl Layout {
    fn new(cfg: &BivariateFitConfig) -> Self {
        let mut l = Layout {
            names: vec![],
            slots: vec![],
            links: vec![],
            breaks: cfg.breaks.iter().map(|b| b.0).collect(),
            sign: cfg.sign_shifts,
        };
        let push = |l: &mut Layout, name: String, slot: Slot, link: Link| {
            l.names.push(name);
            l.slots.push(slot);
            l.links.push(link);
        };
        for i in 0..2 {
            push(&mut l, format!("omega{}", i + 1), Slot::Omega(i), Link::Exp);
        }
        let mut alpha_idx = [0; 2];
        for i in 0..2 {
            alpha_idx[i] = l.names.len();
            push(&mut l, format!("alpha{0}{0}", i + 1), Slot::A(i, i), Link::Softplus);
        }
        if cfg.asymmetry {
            for i in 0..2 {
                push(&mut l, format!("gamma{0}{0}", i + 1), Slot::Gamma(i), Link::SoftplusMinus(alpha_idx[i]));
            }
        }
        for i in 0..2 {
            push(&mut l, format!("beta{0}{0}", i + 1), Slot::B(i, i), Link::Logistic);
        }
        if cfg.spillovers {
            push(&mut l, "alpha12".into(), Slot::A(0, 1), Link::Raw);
            push(&mut l, "alpha21".into(), Slot::A(1, 0), Link::Raw);
            push(&mut l, "beta12".into(), Slot::B(0, 1), Link::Raw);
            push(&mut l, "beta21".into(), Slot::B(1, 0), Link::Raw);
        }
        for (k, (_, free)) in cfg.breaks.iter().enumerate() {
            let lbl = k + 1;
            if free[0] {
                push(&mut l, format!("alpha12^{lbl}"), Slot::BreakA(k, 0), Link::Raw);
            }
            if free[1] {
                push(&mut l, format!("alpha21^{lbl}"), Slot::BreakA(k, 1), Link::Raw);
            }
            if free[2] {
                push(&mut l, format!("beta12^{lbl}"), Slot::BreakB(k, 0), Link::Raw);
            }
            if free[3] {
                push(&mut l, format!("beta21^{lbl}"), Slot::BreakB(k, 1), Link::Raw);
            }
        }
        if cfg.sign_shifts {
            push(&mut l, "alpha12-".into(), Slot::SignA(0), Link::Raw);
            push(&mut l, "alpha21-".into(), Slot::SignA(1), Link::Raw);
            push(&mut l, "beta12+".into(), Slot::SignB(0), Link::Raw);
            push(&mut l, "beta21+".into(), Slot::SignB(1), Link::Raw);
        }
        l
    }

    fn to_natural(&self, u: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; u.len()];
        for (i, link) in self.links.iter().enumerate() {
            x[i] = match link {
                Link::Exp => u[i].exp(),
                Link::Softplus => softplus(u[i]),
                Link::SoftplusMinus(_) => f64::NAN,
                Link::Logistic => 1.0 / (1.0 + (-u[i]).exp()),
                Link::Raw => u[i],
            };
        }
        for (i, link) in self.links.iter().enumerate() {
            if let Link::SoftplusMinus(j) = link {
                x[i] = softplus(u[i]) - x[*j];
            }
        }
        x
    }

    fn to_unconstrained(&self, x: &[f64]) -> Vec<f64> {
        self.links
            .iter()
            .enumerate()
            .map(|(i, link)| match link {
                Link::Exp => x[i].max(1e-12).ln(),
                Link::Softplus => softplus_inv(x[i]),
                Link::SoftplusMinus(j) => softplus_inv(x[i] + x[*j]),
                Link::Logistic => {
                    let b = x[i].clamp(1e-6, 1.0 - 1e-6);
                    (b / (1.0 - b)).ln()
                }
                Link::Raw => x[i],
            })
            .collect()
    }

    fn apply(&self, x: &[f64], base: &BivariateSpec) -> BivariateSpec {
        let mut s = base.clone();
        s.a = [[0.0; 2]; 2];
        s.b = [[0.0; 2]; 2];
        s.gamma = [0.0; 2];
        s.break_shifts = self
            .breaks
            .iter()
            .map(|&start| BreakShift {
                start,
                alpha: [0.0; 2],
                beta: [0.0; 2],
            })
            .collect();
        s.sign_shifts = self.sign.then(SignShifts::default);
        for (slot, &v) in self.slots.iter().zip(x) {
            match *slot {
                Slot::Omega(i) => s.omega[i] = v,
                Slot::A(i, j) => s.a[i][j] = v,
                Slot::Gamma(i) => s.gamma[i] = v,
                Slot::B(i, j) => s.b[i][j] = v,
                Slot::BreakA(k, e) => s.break_shifts[k].alpha[e] = v,
                Slot::BreakB(k, e) => s.break_shifts[k].beta[e] = v,
                Slot::SignA(e) => s.sign_shifts.as_mut().expect("sign layout").alpha_minus[e] = v,
                Slot::SignB(e) => s.sign_shifts.as_mut().expect("sign layout").beta_plus[e] = v,
            }
        }
        s
    }
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

/// Per-observation variance log-likelihood terms with `R = I`.
fn variance_terms(spec: &BivariateSpec, returns: &[[f64; 2]], eps: &[[f64; 2]], start: usize) -> Option<Vec<f64>> {
    let h = variance_path(spec, initial_variances(returns), returns, eps, start).ok()?;
    Some(
        eps.iter()
            .zip(&h)
            .map(|(e, h)| -0.5 * (2.0 * LN_2PI + h[0].ln() + h[1].ln() + e[0] * e[0] / h[0] + e[1] * e[1] / h[1]))
            .collect(),
    )
}

impl Layout {
    /// Chain-rule factors `dx/du`: the diagonal, plus `(i, j, dx_i/du_j)` for `γ`.
    fn jacobian(&self, u: &[f64], x: &[f64]) -> (Vec<f64>, Vec<(usize, usize, f64)>) {
        let sigmoid = |v: f64| 1.0 / (1.0 + (-v).exp());
        let mut cross = vec![];
        let diag = self
            .links
            .iter()
            .enumerate()
            .map(|(i, link)| match link {
                Link::Exp => x[i],
                Link::Softplus => sigmoid(u[i]),
                Link::SoftplusMinus(j) => {
                    cross.push((i, *j, -sigmoid(u[*j])));
                    sigmoid(u[i])
                }
                Link::Logistic => x[i] * (1.0 - x[i]),
                Link::Raw => 1.0,
            })
            .collect();
        (diag, cross)
    }

    /// Per-observation terms and their analytic scores in natural parameters.
    fn scores(&self, x: &[f64], base: &BivariateSpec, returns: &[[f64; 2]], eps: &[[f64; 2]], start: usize) -> Option<(Vec<f64>, Vec<Vec<f64>>)> {
        let spec = self.apply(x, base);
        let k = x.len();
        let mut h = initial_variances(returns);
        let mut dh = vec![[0.0; 2]; k];
        let mut terms = Vec::with_capacity(eps.len());
        let mut scores = Vec::with_capacity(eps.len());
        for (n, e) in eps.iter().enumerate() {
            let t = start + n;
            if n > 0 {
                let ep = eps[n - 1];
                let rp = returns[t - 1];
                let hp = h;
                let (_, b) = spec.effective(t, ep, rp);
                let e2 = [ep[0] * ep[0], ep[1] * ep[1]];
                for (j, slot) in self.slots.iter().enumerate() {
                    let mut d = [
                        b[0][0] * dh[j][0] + b[0][1] * dh[j][1],
                        b[1][0] * dh[j][0] + b[1][1] * dh[j][1],
                    ];
                    match *slot {
                        Slot::Omega(i) => d[i] += 1.0,
                        Slot::A(i, c) => d[i] += e2[c],
                        Slot::Gamma(i) => d[i] += if ep[i] < 0.0 { e2[i] } else { 0.0 },
                        Slot::B(i, c) => d[i] += hp[c],
                        Slot::BreakA(l, i) => {
                            if t >= self.breaks[l] {
                                d[i] += e2[1 - i];
                            }
                        }
                        Slot::BreakB(l, i) => {
                            if t >= self.breaks[l] {
                                d[i] += hp[1 - i];
                            }
                        }
                        Slot::SignA(i) => {
                            if rp[1 - i] < 0.0 {
                                d[i] += e2[1 - i];
                            }
                        }
                        Slot::SignB(i) => {
                            if rp[1 - i] > 0.0 {
                                d[i] += hp[1 - i];
                            }
                        }
                    }
                    dh[j] = d;
                }
                h = spec.variance_step(t, ep, hp, rp);
            }
            if !h.iter().all(|v| *v > 0.0 && v.is_finite()) {
                return None;
            }
            terms.push(-0.5 * (2.0 * LN_2PI + h[0].ln() + h[1].ln() + e[0] * e[0] / h[0] + e[1] * e[1] / h[1]));
            let dl = [
                -0.5 * (1.0 - e[0] * e[0] / h[0]) / h[0],
                -0.5 * (1.0 - e[1] * e[1] / h[1]) / h[1],
            ];
            scores.push(dh.iter().map(|d| dl[0] * d[0] + dl[1] * d[1]).collect());
        }
        Some((terms, scores))
    }
}

/// Sandwich standard errors from per-observation scores and a gradient of the total.
fn sandwich_from_scores(scores: &[Vec<f64>], grad: &dyn Fn(&[f64]) -> Vec<f64>, x: &[f64]) -> Result<Vec<f64>> {
    let k = x.len();
    let mut outer = DMatrix::zeros(k, k);
    for s in scores {
        let v = DVector::from_column_slice(s);
        outer += &v * v.transpose();
    }
    let hess = hessian_from_gradient(grad, x);
    let cov = sandwich(&hess, &outer)?;
    Ok((0..k).map(|i| cov[(i, i)].max(0.0).sqrt()).collect())
}

/// Diagonal `q_ii` paths with unit targets, `e = z ⊙ q^{1/2}`, and the
/// implied off-diagonal target `Q̄₁₂ = mean(e₁ e₂)`.
fn dcc_target(alpha: f64, beta: f64, z: &[[f64; 2]]) -> f64 {
    let w = 1.0 - alpha - beta;
    let mut q = [1.0f64, 1.0];
    let mut acc = 0.0;
    for zt in z {
        let e = [zt[0] * q[0].sqrt(), zt[1] * q[1].sqrt()];
        acc += e[0] * e[1];
        for i in 0..2 {
            q[i] = w + alpha * e[i] * e[i] + beta * q[i];
        }
    }
    (acc / z.len() as f64).clamp(-0.999, 0.999)
}

fn correlation_terms(alpha: f64, beta: f64, q_bar: &Mat2, z: &[[f64; 2]]) -> Vec<f64> {
    let mut q = [q_bar[0][0], q_bar[0][1], q_bar[1][1]];
    let mut out = Vec::with_capacity(z.len());
    for k in 0..z.len() {
        if k > 0 {
            q = dcc_step(alpha, beta, q_bar, q, z[k - 1]);
        }
        out.push(corr_loglik(rho_of(q), z[k]));
    }
    out
}

fn dcc_natural(u: &[f64]) -> (f64, f64) {
    let d = 1.0 + u[0].exp() + u[1].exp();
    (u[0].exp() / d, u[1].exp() / d)
}

#[derive(Debug, Clone, Serialize)]
pub struct MeanEstimates {
    pub mu: [f64; 2],
    pub phi1: Mat2,
    pub phi2: Mat2,
    /// HC0 standard errors, rows `[μ, φ(1)_{i1}, φ(1)_{i2}, φ(2)_{i1}, φ(2)_{i2}]` per equation.
    pub se: [Vec<f64>; 2],
}

#[derive(Debug, Clone, Serialize)]
pub struct BivariateFit {
    pub config: BivariateFitConfig,
    pub spec: BivariateSpec,
    pub mean: MeanEstimates,
    pub variance: Vec<ParamEstimate>,
    pub dcc: Vec<ParamEstimate>,
    pub log_likelihood: f64,
    pub positivity: PositivityCheck,
    pub hosking: Option<Portmanteau>,
    pub hosking_squared: Option<Portmanteau>,
    pub converged: bool,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub rho: Vec<f64>,
}

impl BivariateFit {
    pub fn get(&self, name: &str) -> Option<&ParamEstimate> {
        self.variance.iter().chain(&self.dcc).find(|p| p.name == name)
    }

    /// Aligned text table in the layout of the published bivariate estimates.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        for p in self.variance.iter().chain(&self.dcc) {
            s.push_str(&format!("{:<12} {:>10.4} ({:.4})\n", p.name, p.value, p.se));
        }
        s.push_str(&format!("{:<12} {:>10.2}\n", "LogL", self.log_likelihood));
        if let (Some(q), Some(q2)) = (&self.hosking, &self.hosking_squared) {
            s.push_str(&format!("{:<12} {:>10.3} [{:.3}]\n", "Q(5)", q.statistic, q.p_value));
            s.push_str(&format!("{:<12} {:>10.3} [{:.3}]\n", "Q2(5)", q2.statistic, q2.p_value));
        }
        s
    }
}

fn ols_mean(returns: &[[f64; 2]], lags: usize) -> Result<MeanEstimates> {
    let n = returns.len() - lags;
    let k = 1 + 2 * lags;
    let mut x = DMatrix::zeros(n, k);
    for (row, t) in (lags..returns.len()).enumerate() {
        x[(row, 0)] = 1.0;
        for l in 1..=lags {
            x[(row, 2 * l - 1)] = returns[t - l][0];
            x[(row, 2 * l)] = returns[t - l][1];
        }
    }
    let xtx = x.transpose() * &x;
    let xtx_inv = xtx
        .clone()
        .try_inverse()
        .ok_or(Error::Singular { condition: f64::INFINITY })?;
    let mut out = MeanEstimates {
        mu: [0.0; 2],
        phi1: [[0.0; 2]; 2],
        phi2: [[0.0; 2]; 2],
        se: [vec![], vec![]],
    };
    for i in 0..2 {
        let y = DVector::from_iterator(n, (lags..returns.len()).map(|t| returns[t][i]));
        let beta = &xtx_inv * x.transpose() * &y;
        let resid = &y - &x * &beta;
        let mut meat = DMatrix::zeros(k, k);
        for r in 0..n {
            let row = x.row(r).transpose();
            meat += &row * row.transpose() * (resid[r] * resid[r]);
        }
        let cov = &xtx_inv * meat * &xtx_inv;
        out.se[i] = (0..k).map(|j| cov[(j, j)].sqrt()).collect();
        out.mu[i] = beta[0];
        for l in 1..=lags {
            let m = if l == 1 { &mut out.phi1 } else { &mut out.phi2 };
            m[i][0] = beta[2 * l - 1];
            m[i][1] = beta[2 * l];
        }
    }
    Ok(out)
}

fn estimates(names: &[String], x: &[f64], se: &[f64]) -> Vec<ParamEstimate> {
    let normal = Normal::standard();
    names
        .iter()
        .zip(x.iter().zip(se))
        .map(|(name, (&value, &se))| {
            let t_stat = value / se;
            ParamEstimate {
                name: name.clone(),
                value,
                se,
                t_stat,
                p_value: if t_stat.is_finite() { 2.0 * normal.sf(t_stat.abs()) } else { f64::NAN },
            }
        })
        .collect()
}

/// Sandwich standard errors for a sum of per-observation terms.
fn sandwich_se(terms: &(dyn Fn(&[f64]) -> Option<Vec<f64>> + Sync), x: &[f64]) -> Result<Vec<f64>> {
    let k = x.len();
    let base = terms(x).ok_or(Error::NonPositiveVariance { index: 0, value: f64::NAN })?;
    let n = base.len();
    let mut scores = vec![vec![0.0; k]; n];
    let mut xp = x.to_vec();
    for j in 0..k {
        let step = 1e-5 * x[j].abs().max(1e-3);
        xp[j] = x[j] + step;
        let up = terms(&xp);
        xp[j] = x[j] - step;
        let down = terms(&xp);
        xp[j] = x[j];
        let (Some(up), Some(down)) = (up, down) else {
            return Err(Error::NonPositiveVariance { index: 0, value: f64::NAN });
        };
        for t in 0..n {
            scores[t][j] = (up[t] - down[t]) / (2.0 * step);
        }
    }
    let total = |y: &[f64]| terms(y).map(|v| v.iter().sum::<f64>()).unwrap_or(f64::NAN);
    let grad = |y: &[f64]| numerical_gradient(&total, y);
    sandwich_from_scores(&scores, &grad, x)
}

/// Two-stage QML: OLS mean, then the variance system with `R = I`, then the
/// DCC scalars with `Q̄` targeted on the standardized residuals.
pub fn fit_bivariate(returns: &[[f64; 2]], config: &BivariateFitConfig) -> Result<BivariateFit> {
    if config.mean_lags > 2 {
        return Err(Error::InvalidSpec("mean lags must be 0, 1 or 2".into()));
    }
    if returns.len() < config.mean_lags + 100 {
        return Err(Error::Degenerate(format!("{} observations are too few", returns.len())));
    }
    if let Some(i) = returns.iter().position(|r| !(r[0].is_finite() && r[1].is_finite())) {
        return Err(Error::Degenerate(format!("non-finite return at index {i}")));
    }
    let p = config.mean_lags;
    let mean = ols_mean(returns, p)?;
    let mut base = BivariateSpec::decoupled([1.0; 2], [0.0; 2], [0.0; 2], [0.0; 2], 0.0);
    base.mu = mean.mu;
    base.phi1 = mean.phi1;
    base.phi2 = mean.phi2;
    let eps: Vec<[f64; 2]> = (p..returns.len()).map(|t| base.mean_residual(returns, t, p)).collect();
    let layout = Layout::new(config);
    let n_eff = eps.len() as f64;

    // stage 1
    let scores1 = |x: &[f64]| layout.scores(x, &base, returns, &eps, p);
    let objective = |u: &[f64]| -> f64 {
        match variance_terms(&layout.apply(&layout.to_natural(u), &base), returns, &eps, p) {
            Some(v) => -v.iter().sum::<f64>() / n_eff,
            None => f64::INFINITY,
        }
    };
    let gradient = |u: &[f64]| -> Vec<f64> {
        let x = layout.to_natural(u);
        let Some((_, sc)) = scores1(&x) else {
            return vec![f64::NAN; u.len()];
        };
        let gx: Vec<f64> = (0..x.len()).map(|j| -sc.iter().map(|s| s[j]).sum::<f64>() / n_eff).collect();
        let (diag, cross) = layout.jacobian(u, &x);
        let mut gu: Vec<f64> = gx.iter().zip(&diag).map(|(g, d)| g * d).collect();
        for (i, j, d) in cross {
            gu[j] += gx[i] * d;
        }
        gu
    };
    let var0 = initial_variances(returns);
    let starts: Vec<Vec<f64>> = [(0.05, 0.05, 0.88), (0.03, 0.03, 0.94)]
        .iter()
        .map(|&(a, g, b)| {
            let x: Vec<f64> = layout
                .slots
                .iter()
                .map(|s| match s {
                    Slot::Omega(i) => var0[*i] * (1.0 - a - b - g / 2.0),
                    Slot::A(i, j) if i == j => a,
                    Slot::Gamma(_) => g,
                    Slot::B(i, j) if i == j => b,
                    _ => 0.0,
                })
                .collect();
            layout.to_unconstrained(&x)
        })
        .collect();
    let opts = OptimOptions {
        max_iter: 400,
        grad_tol: 1e-6,
        f_tol: 1e-13,
    };
    let best = minimize_multistart(&objective, &gradient, &starts, opts)
        .ok_or_else(|| Error::Convergence("no start reached a finite likelihood".into()))?;
    let mut warnings = vec![];
    let mut converged = best.converged;
    let x1 = layout.to_natural(&best.x);
    let mut spec = layout.apply(&x1, &base);
    let total_grad = |x: &[f64]| -> Vec<f64> {
        match scores1(x) {
            Some((_, sc)) => (0..x.len()).map(|j| sc.iter().map(|s| s[j]).sum()).collect(),
            None => vec![f64::NAN; x.len()],
        }
    };
    let se1 = match scores1(&x1).ok_or(Error::NonPositiveVariance { index: 0, value: f64::NAN }).and_then(|(_, sc)| sandwich_from_scores(&sc, &total_grad, &x1)) {
        Ok(se) => se,
        Err(e) => {
            warnings.push(format!("variance standard errors unavailable: {e}"));
            vec![f64::NAN; x1.len()]
        }
    };
    let h = variance_path(&spec, initial_variances(returns), returns, &eps, p).map_err(|(index, value)| Error::NonPositiveVariance { index, value })?;
    let z: Vec<[f64; 2]> = eps
        .iter()
        .zip(&h)
        .map(|(e, h)| [e[0] / h[0].sqrt(), e[1] / h[1].sqrt()])
        .collect();

    // stage 2
    let dcc_estimates = if config.dcc {
        let terms2 = |x: &[f64]| -> Option<Vec<f64>> {
            let (a, b) = (x[0], x[1]);
            if !(a >= 0.0 && b >= 0.0 && a + b < 1.0) {
                return None;
            }
            let r = dcc_target(a, b, &z);
            Some(correlation_terms(a, b, &[[1.0, r], [r, 1.0]], &z))
        };
        let obj2 = |u: &[f64]| -> f64 {
            let (a, b) = dcc_natural(u);
            match terms2(&[a, b]) {
                Some(v) => -v.iter().sum::<f64>() / n_eff,
                None => f64::INFINITY,
            }
        };
        let grad2 = |u: &[f64]| numerical_gradient(&obj2, u);
        let starts2: Vec<Vec<f64>> = [(0.05, 0.90), (0.02, 0.97), (0.10, 0.80)]
            .iter()
            .map(|&(a, b): &(f64, f64)| {
                let w: f64 = 1.0 - a - b;
                vec![(a / w).ln(), (b / w).ln()]
            })
            .collect();
        let best2 = minimize_multistart(&obj2, &grad2, &starts2, opts)
            .ok_or_else(|| Error::Convergence("DCC stage found no finite likelihood".into()))?;
        converged &= best2.converged;
        let (a, b) = dcc_natural(&best2.x);
        let r = dcc_target(a, b, &z);
        spec.dcc = DccParams {
            alpha: a,
            beta: b,
            q_bar: [[1.0, r], [r, 1.0]],
        };
        let se2 = match sandwich_se(&terms2, &[a, b]) {
            Ok(se) => se,
            Err(e) => {
                warnings.push(format!("DCC standard errors unavailable: {e}"));
                vec![f64::NAN; 2]
            }
        };
        estimates(&["alpha_D".into(), "beta_D".into()], &[a, b], &se2)
    } else {
        let n = z.len() as f64;
        let r = z.iter().map(|v| v[0] * v[1]).sum::<f64>() / n
            / ((z.iter().map(|v| v[0] * v[0]).sum::<f64>() / n) * (z.iter().map(|v| v[1] * v[1]).sum::<f64>() / n)).sqrt();
        spec.dcc = DccParams::constant(r);
        vec![]
    };
    if !converged {
        warnings.push("optimizer stopped without meeting tolerances".into());
    }
    let out = filter(&spec, returns)?;
    let positivity = check_positivity(&spec);
    if !positivity.all_pass {
        warnings.push("positivity conditions fail at the estimates".into());
    }
    let z2: Vec<[f64; 2]> = out.z.iter().map(|v| [v[0] * v[0], v[1] * v[1]]).collect();
    Ok(BivariateFit {
        config: config.clone(),
        mean,
        variance: estimates(&layout.names, &x1, &se1),
        dcc: dcc_estimates,
        log_likelihood: out.log_likelihood,
        positivity,
        hosking: hosking_q_adjusted(&out.z, 5, p).ok(),
        hosking_squared: hosking_q(&z2, 5).ok(),
        converged,
        warnings,
        rho: out.rho,
        spec,
    })
}
