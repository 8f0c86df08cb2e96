//! Closed forms for the time-varying AR(2) mean process.
//!
//! All quantities are evaluated at an *anchor*: the time `s = t - anchor`,
//! where `t` is the reference time of the break schedule. Anchors may be
//! negative, i.e. after `t`, where regime 1 is in force.
//!
//! The weights `ξ_{s,r}` are determinants of the `r × r` tridiagonal matrix
//! whose diagonal holds `φ1(s-r+1), ..., φ1(s)`, whose sub-diagonal holds
//! `φ2(s-r+2), ..., φ2(s)` and whose super-diagonal is `-1`. Expanding the
//! continuant along its first row gives, for a fixed `s`,
//!
//! ```text
//! ξ_{s,r} = φ1(s-r+1) ξ_{s,r-1} + φ2(s-r+2) ξ_{s,r-2},   ξ_{s,0} = 1, ξ_{s,-1} = 0
//! ```
//!
//! which fills a whole column of weights in `O(r)`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;
use crate::params::{ArRegime, Piecewise, TvArSpec};

const MAX_TERMS: usize = 50_000_000;

/// Column of weights `ξ_{s,r}`, `r = 0..=max_k`, for a fixed anchor.
#[derive(Debug, Clone, Serialize)]
pub struct XiTable {
    anchor: i64,
    values: Vec<f64>,
}

impl XiTable {
    pub fn compute(spec: &TvArSpec, anchor: i64, max_k: usize) -> Self {
        let mut table = Self {
            anchor,
            values: Vec::with_capacity(max_k + 1),
        };
        table.values.push(1.0);
        table.extend_to(spec, max_k);
        table
    }

    /// Appends weights until `max_k` is available.
    pub fn extend_to(&mut self, spec: &TvArSpec, max_k: usize) {
        while self.values.len() <= max_k {
            let k = self.values.len() as i64;
            let phi1 = spec.coeff_at_signed(self.anchor + k - 1).phi1;
            let phi2 = spec.coeff_at_signed(self.anchor + k - 2).phi2;
            let prev = self.values[k as usize - 1];
            let prev2 = if k >= 2 { self.values[k as usize - 2] } else { 0.0 };
            self.values.push(phi1 * prev + phi2 * prev2);
        }
    }

    pub fn anchor(&self) -> i64 {
        self.anchor
    }

    pub fn max_k(&self) -> usize {
        self.values.len() - 1
    }

    /// `ξ_{s,k}`; `k = -1` gives 0.
    pub fn get(&self, k: i64) -> f64 {
        if k < 0 {
            0.0
        } else {
            self.values[k as usize]
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// `ξ_{t-anchor, k}` for `k ≥ -1`.
pub fn xi(spec: &TvArSpec, anchor: i64, k: i64) -> Result<f64> {
    if k < -1 {
        return Err(Error::Domain(format!("xi needs k >= -1, got {k}")));
    }
    if k < 1 {
        return Ok(if k == 0 { 1.0 } else { 0.0 });
    }
    Ok(XiTable::compute(spec, anchor, k as usize).get(k))
}

/// Decomposition of `y_t` into the part driven by the two initial values and
/// the part driven by drifts and shocks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Solution {
    pub total: f64,
    pub homogeneous: f64,
    pub particular: f64,
}

/// Initial values `(y_{t-k}, y_{t-k-1})`.
pub type InitialValues = (f64, f64);

fn homogeneous_part(spec: &TvArSpec, xi: &XiTable, k: usize, init: InitialValues) -> f64 {
    let phi2_first = spec.coeff_at_signed(xi.anchor() + k as i64 - 1).phi2;
    xi.get(k as i64) * init.0 + phi2_first * xi.get(k as i64 - 1) * init.1
}

/// `y_t` from the initial values and the shocks `ε_{t-k+1}, ..., ε_t` (chronological order).
pub fn general_solution(
    spec: &TvArSpec,
    k: usize,
    init: InitialValues,
    shocks: &[f64],
) -> Result<Solution> {
    if k == 0 {
        return Err(Error::Domain("horizon must be at least 1".into()));
    }
    if shocks.len() != k {
        return Err(Error::LengthMismatch {
            what: "shocks",
            expected: k,
            got: shocks.len(),
        });
    }
    let table = XiTable::compute(spec, 0, k);
    let homogeneous = homogeneous_part(spec, &table, k, init);
    // oldest term first: r = k-1 pairs with shocks[0]
    let mut particular = 0.0;
    for r in (0..k).rev() {
        let drift = spec.coeff_at_signed(r as i64).drift;
        particular += table.get(r as i64) * (drift + shocks[k - 1 - r]);
    }
    Ok(Solution {
        total: homogeneous + particular,
        homogeneous,
        particular,
    })
}

/// Forward iteration of `y_τ = φ0(τ) + φ1(τ) y_{τ-1} + φ2(τ) y_{τ-2} + ε_τ` from
/// `τ = t-k+1` to `t`.
pub fn forward_recursion(spec: &TvArSpec, init: InitialValues, shocks: &[f64]) -> f64 {
    let k = shocks.len();
    let (mut y1, mut y2) = init;
    for (j, eps) in shocks.iter().enumerate() {
        let offset = (k - 1 - j) as i64;
        let ArRegime { drift, phi1, phi2 } = spec.coeff_at_signed(offset);
        let y = drift + phi1 * y1 + phi2 * y2 + eps;
        y2 = y1;
        y1 = y;
    }
    y1
}

/// Drift contribution `Σ_{r<k} ξ_{t,r} φ0(t-r)` grouped by regime.
pub fn drift_sum_by_regime(spec: &TvArSpec, k: usize) -> f64 {
    let table = XiTable::compute(spec, 0, k);
    let sched = spec.schedule();
    let mut total = 0.0;
    for (l, regime) in spec.regimes().iter().enumerate() {
        let (start, end) = sched.regime_bounds(l);
        let end = end.unwrap_or(u64::MAX).min(k as u64);
        if start >= end {
            continue;
        }
        let inner: f64 = (start..end).map(|r| table.get(r as i64)).sum();
        total += regime.drift * inner;
    }
    total
}

/// Optimal `k`-step linear predictor `E(y_t | F_{t-k})`.
pub fn predict_mean(spec: &TvArSpec, k: usize, init: InitialValues) -> Result<f64> {
    Ok(general_solution(spec, k, init, &vec![0.0; k])?.total)
}

/// Forecast error `Σ_{r<k} ξ_{t,r} ε_{t-r}` for chronological shocks.
pub fn forecast_error(spec: &TvArSpec, shocks: &[f64]) -> f64 {
    let k = shocks.len();
    let table = XiTable::compute(spec, 0, k);
    (0..k)
        .rev()
        .map(|r| table.get(r as i64) * shocks[k - 1 - r])
        .sum()
}

/// Mean square error `Σ_{r<k} ξ²_{t,r} σ²_{t-r}` for chronological variances
/// `σ²_{t-k+1}, ..., σ²_t`.
pub fn forecast_error_variance(spec: &TvArSpec, error_vars: &[f64]) -> Result<f64> {
    if let Some(bad) = error_vars.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::Domain(format!("error variances must be positive, got {bad}")));
    }
    let k = error_vars.len();
    let table = XiTable::compute(spec, 0, k);
    let mut acc = CompensatedSum::new();
    for r in 0..k {
        let x = table.get(r as i64);
        acc.add(x * x * error_vars[k - 1 - r]);
    }
    Ok(acc.value())
}

/// Unconditional variances `σ²_{t-offset}` of the mean-equation errors.
pub trait VarianceProfile {
    fn at(&self, offset: i64) -> f64;
    /// Offset from which the profile is constant into the infinite past.
    fn settled_from(&self) -> i64;
}

#[derive(Debug, Clone, Copy)]
pub struct Homoscedastic(pub f64);

impl VarianceProfile for Homoscedastic {
    fn at(&self, _offset: i64) -> f64 {
        self.0
    }

    fn settled_from(&self) -> i64 {
        i64::MIN
    }
}

/// Convergence diagnostic for the infinite sums.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summability {
    pub convergent: bool,
    /// Spectral radius of the oldest regime's companion matrix.
    pub rate: f64,
}

/// Only the infinite-past regime governs the tail of every `ξ` column, so
/// interior explosive regimes are admissible.
pub fn check_summability(spec: &TvArSpec) -> Summability {
    let rate = spec.oldest().spectral_radius();
    Summability {
        convergent: rate < 1.0,
        rate,
    }
}

/// Sums `Σ_j ||M^j||` and `Σ_j ||M^j||²` (Frobenius) of the oldest companion matrix,
/// `j ≥ 1`; they bound every tail of a weight column.
#[derive(Debug, Clone, Copy)]
struct TailConstants {
    norm_sum: f64,
    norm_sq_sum: f64,
}

impl TailConstants {
    fn new(spec: &TvArSpec) -> Result<Self> {
        let s = check_summability(spec);
        if !s.convergent {
            return Err(Error::Divergent {
                regime: spec.regimes().len(),
                rate: s.rate,
            });
        }
        let r = spec.oldest();
        let m = [[r.phi1, r.phi2], [1.0, 0.0]];
        let mut p = m;
        let mut norm_sum = 0.0;
        let mut norm_sq_sum = 0.0;
        for _ in 0..MAX_TERMS {
            let f2 = p.iter().flatten().map(|x| x * x).sum::<f64>();
            norm_sum += f2.sqrt();
            norm_sq_sum += f2;
            if f2 < 1e-40 {
                break;
            }
            p = [
                [
                    p[0][0] * m[0][0] + p[0][1] * m[1][0],
                    p[0][0] * m[0][1] + p[0][1] * m[1][1],
                ],
                [
                    p[1][0] * m[0][0] + p[1][1] * m[1][0],
                    p[1][0] * m[0][1] + p[1][1] * m[1][1],
                ],
            ];
        }
        Ok(Self {
            norm_sum,
            norm_sq_sum,
        })
    }
}

/// Index `r` of a column anchored at `anchor` from which every later weight
/// follows the oldest regime's constant recursion and the variance profile is
/// constant.
fn tail_start(spec: &TvArSpec, anchor: i64, profile: &dyn VarianceProfile) -> usize {
    let ar_tail = spec.schedule().oldest_start() as i64 + 2 - anchor;
    let var_tail = profile.settled_from().saturating_sub(anchor);
    ar_tail.max(var_tail).max(1) as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanMomentResult {
    pub mean: f64,
    pub second_moment: f64,
    pub variance: f64,
    /// Bound on the discarded tail mass of the truncated series.
    pub truncation_tail: f64,
    pub terms: usize,
}

/// `E(y_s)` and `E(y_s²)` at `s = t - anchor`.
pub fn unconditional_moments(
    spec: &TvArSpec,
    anchor: i64,
    profile: &dyn VarianceProfile,
    tol: f64,
) -> Result<MeanMomentResult> {
    let consts = TailConstants::new(spec)?;
    let start = tail_start(spec, anchor, profile);
    let tail_sigma = profile.at(anchor + start as i64 + 1);
    let tail_drift = spec.oldest().drift.abs();

    let mut table = XiTable::compute(spec, anchor, start.max(1));
    let mut mean = CompensatedSum::new();
    let mut var = CompensatedSum::new();
    let mut r = 0usize;
    let tail;
    loop {
        if r > table.max_k() {
            table.extend_to(spec, (2 * r).max(16));
        }
        let x = table.get(r as i64);
        let offset = anchor + r as i64;
        mean.add(x * spec.coeff_at_signed(offset).drift);
        var.add(x * x * profile.at(offset));
        if r >= start {
            let prev = table.get(r as i64 - 1);
            let norm_sq = x * x + prev * prev;
            let bound_var = norm_sq * tail_sigma * consts.norm_sq_sum;
            let bound_mean = norm_sq.sqrt() * tail_drift * consts.norm_sum;
            if bound_var < tol && bound_mean < tol {
                tail = bound_var.max(bound_mean);
                break;
            }
        }
        r += 1;
        if r > MAX_TERMS {
            return Err(Error::Convergence(format!(
                "moment series not below {tol} after {MAX_TERMS} terms"
            )));
        }
    }
    let mean = mean.value();
    let variance = var.value();
    Ok(MeanMomentResult {
        mean,
        second_moment: mean * mean + variance,
        variance,
        truncation_tail: tail,
        terms: r + 1,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Autocovariance {
    pub value: f64,
    pub truncation_tail: f64,
}

/// `γ = Cov(y_s, y_{s-lag}) = Σ_r ξ_{s,lag+r} ξ_{s-lag,r} σ²_{s-lag-r}`, `s = t - anchor`.
pub fn autocovariance(
    spec: &TvArSpec,
    anchor: i64,
    lag: usize,
    profile: &dyn VarianceProfile,
    tol: f64,
) -> Result<Autocovariance> {
    let consts = TailConstants::new(spec)?;
    let far_anchor = anchor + lag as i64;
    let start = tail_start(spec, far_anchor, profile);
    let tail_sigma = profile.at(far_anchor + start as i64 + 1);

    let mut near = XiTable::compute(spec, anchor, lag + start.max(1));
    let mut far = XiTable::compute(spec, far_anchor, start.max(1));
    let mut acc = CompensatedSum::new();
    let mut r = 0usize;
    loop {
        if lag + r > near.max_k() {
            near.extend_to(spec, 2 * (lag + r).max(16));
        }
        if r > far.max_k() {
            far.extend_to(spec, (2 * r).max(16));
        }
        let a = near.get((lag + r) as i64);
        let b = far.get(r as i64);
        acc.add(a * b * profile.at(far_anchor + r as i64));
        if r >= start {
            let na = a * a + near.get((lag + r) as i64 - 1).powi(2);
            let nb = b * b + far.get(r as i64 - 1).powi(2);
            let bound = (na * nb).sqrt() * tail_sigma * consts.norm_sq_sum;
            if bound < tol {
                return Ok(Autocovariance {
                    value: acc.value(),
                    truncation_tail: bound,
                });
            }
        }
        r += 1;
        if r > MAX_TERMS {
            return Err(Error::Convergence(format!(
                "autocovariance series not below {tol} after {MAX_TERMS} terms"
            )));
        }
    }
}

/// Second route to `γ`: `ξ_{s,lag} Var(y_{s-lag}) + φ2(s-lag+1) ξ_{s,lag-1} Cov(y_{s-lag}, y_{s-lag-1})`.
pub fn autocovariance_from_solution(
    spec: &TvArSpec,
    anchor: i64,
    lag: usize,
    profile: &dyn VarianceProfile,
    tol: f64,
) -> Result<Autocovariance> {
    if lag == 0 {
        return autocovariance(spec, anchor, 0, profile, tol);
    }
    let far = anchor + lag as i64;
    let table = XiTable::compute(spec, anchor, lag);
    let var_far = autocovariance(spec, far, 0, profile, tol)?;
    let cov_far = autocovariance(spec, far, 1, profile, tol)?;
    let phi2 = spec.coeff_at_signed(far - 1).phi2;
    let w0 = table.get(lag as i64);
    let w1 = phi2 * table.get(lag as i64 - 1);
    Ok(Autocovariance {
        value: w0 * var_far.value + w1 * cov_far.value,
        truncation_tail: w0.abs() * var_far.truncation_tail
            + w1.abs() * cov_far.truncation_tail,
    })
}

/// `Cor(y_s, y_{s-lag})`.
pub fn autocorrelation(
    spec: &TvArSpec,
    anchor: i64,
    lag: usize,
    profile: &dyn VarianceProfile,
    tol: f64,
) -> Result<f64> {
    let cov = autocovariance(spec, anchor, lag, profile, tol)?.value;
    let v0 = autocovariance(spec, anchor, 0, profile, tol)?.value;
    let v1 = autocovariance(spec, anchor + lag as i64, 0, profile, tol)?.value;
    Ok(cov / (v0 * v1).sqrt())
}
