//! Closed forms for the time-varying AGARCH(1,1) conditional variance.
//!
//! With `c(t) = α(t) + γ(t) S⁻_{t-1} + β(t)` and `v_t = ε_t² - h_t` the
//! variance follows `h_t = ω(t) + c(t) h_{t-1} + α*(t) v_{t-1}`. The products
//! `ς_{t,k} = c(t) c(t-1) ... c(t-k+1)` and the weights
//! `g_{t,r+1} = ς_{t,r} α*(t-r)` give the general solution
//!
//! ```text
//! h_t = ς_{t,k} h_{t-k} + Σ_{r<k} ς_{t,r} ω(t-r) + Σ_{r=1..k} g_{t,r} v_{t-r}
//! ```
//!
//! Sign paths and innovations are passed in chronological order: for a
//! horizon `k`, `signs[j]` is `S⁻_{t-k+j}` and `innovations[j]` is `v_{t-k+j}`.
//!
//! Expected quantities treat the sign indicators as independent across time
//! and independent of `|e|`; `neg_prob` is their common mean (0.5 for
//! symmetric shocks).

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::{geometric_sum, CompensatedSum};
use crate::params::{GarchRegime, Piecewise, ShockMoments, TvGarchSpec};
use crate::tvar::{Solution, VarianceProfile};

/// How the products `ς` are evaluated.
#[derive(Debug, Clone, Copy)]
pub enum ZetaMode<'a> {
    /// `E(ς_{t,k}) = Π c̄(t-j)`.
    Expected { neg_prob: f64 },
    /// Products along an observed sign path `S⁻_{t-k}, ..., S⁻_{t-1}`.
    Realized(&'a [bool]),
}

/// `ς_{t,k}` for the break specification, collapsing each regime into one power.
pub fn zeta_abrupt(spec: &TvGarchSpec, k: usize, mode: ZetaMode<'_>) -> Result<f64> {
    match mode {
        ZetaMode::Expected { neg_prob } => {
            let sched = spec.schedule();
            let mut acc = 1.0;
            for (l, regime) in spec.regimes().iter().enumerate() {
                let (start, end) = sched.regime_bounds(l);
                let end = end.unwrap_or(u64::MAX).min(k as u64);
                if end > start {
                    acc *= regime.expected_c(neg_prob).powi((end - start) as i32);
                }
            }
            Ok(acc)
        }
        ZetaMode::Realized(signs) => {
            if signs.len() < k {
                return Err(Error::LengthMismatch {
                    what: "sign path",
                    expected: k,
                    got: signs.len(),
                });
            }
            let n = signs.len();
            Ok((0..k)
                .map(|j| spec.coeff_at_signed(j as i64).realized_c(signs[n - 1 - j]))
                .product())
        }
    }
}

/// Products and weights for horizons `0..=k` at the reference time.
#[derive(Debug, Clone, Serialize)]
pub struct SigmaProducts {
    /// Realized `ς_{t,r}`; present when a sign path was supplied.
    pub zeta: Option<Vec<f64>>,
    /// Realized `g_{t,r}` (index 0 unused and set to 0).
    pub g: Option<Vec<f64>>,
    /// `E(ς_{t,r})`.
    pub zeta_bar: Vec<f64>,
    /// `E(ς_{t,r}²)`.
    pub zeta_sq_bar: Vec<f64>,
    /// `E(g²_{t,r})` (index 0 unused and set to 0).
    pub g_sq_bar: Vec<f64>,
}

impl SigmaProducts {
    pub fn compute(
        spec: &TvGarchSpec,
        k: usize,
        signs: Option<&[bool]>,
        neg_prob: f64,
    ) -> Result<Self> {
        if let Some(s) = signs {
            if s.len() < k {
                return Err(Error::LengthMismatch {
                    what: "sign path",
                    expected: k,
                    got: s.len(),
                });
            }
        }
        let mut zeta_bar = Vec::with_capacity(k + 1);
        let mut zeta_sq_bar = Vec::with_capacity(k + 1);
        let mut g_sq_bar = vec![0.0; k + 1];
        zeta_bar.push(1.0);
        zeta_sq_bar.push(1.0);
        for r in 0..k {
            let reg = spec.coeff_at_signed(r as i64);
            g_sq_bar[r + 1] = zeta_sq_bar[r] * reg.expected_alpha_star_sq(neg_prob);
            zeta_bar.push(zeta_bar[r] * reg.expected_c(neg_prob));
            zeta_sq_bar.push(zeta_sq_bar[r] * reg.expected_c_sq(neg_prob));
        }
        let (zeta, g) = match signs {
            Some(s) => {
                let n = s.len();
                let mut z = Vec::with_capacity(k + 1);
                let mut g = vec![0.0; k + 1];
                z.push(1.0);
                for r in 0..k {
                    let reg = spec.coeff_at_signed(r as i64);
                    let neg = s[n - 1 - r];
                    g[r + 1] = z[r] * reg.alpha_star(neg);
                    z.push(z[r] * reg.realized_c(neg));
                }
                (Some(z), Some(g))
            }
            None => (None, None),
        };
        Ok(Self {
            zeta,
            g,
            zeta_bar,
            zeta_sq_bar,
            g_sq_bar,
        })
    }
}

fn check_path_inputs(k: usize, h0: f64, innovations: &[f64], signs: &[bool]) -> Result<()> {
    if !(h0 > 0.0) {
        return Err(Error::Domain(format!("initial variance must be positive, got {h0}")));
    }
    if innovations.len() != k {
        return Err(Error::LengthMismatch {
            what: "innovations",
            expected: k,
            got: innovations.len(),
        });
    }
    if signs.len() != k {
        return Err(Error::LengthMismatch {
            what: "sign path",
            expected: k,
            got: signs.len(),
        });
    }
    Ok(())
}

/// `h_t` from `h_{t-k}`, the innovations `v_{t-k..t-1}` and signs `S⁻_{t-k..t-1}`.
pub fn garch_general_solution(
    spec: &TvGarchSpec,
    k: usize,
    h0: f64,
    innovations: &[f64],
    signs: &[bool],
) -> Result<Solution> {
    check_path_inputs(k, h0, innovations, signs)?;
    let prods = SigmaProducts::compute(spec, k, Some(signs), 0.5)?;
    let zeta = prods.zeta.as_ref().expect("realized products");
    let g = prods.g.as_ref().expect("realized weights");
    let homogeneous = zeta[k] * h0;
    let mut particular = 0.0;
    for r in (0..k).rev() {
        let omega = spec.coeff_at_signed(r as i64).omega;
        particular += zeta[r] * omega + g[r + 1] * innovations[k - 1 - r];
    }
    Ok(Solution {
        total: homogeneous + particular,
        homogeneous,
        particular,
    })
}

/// Forward iteration of `h_τ = ω(τ) + α*(τ) ε²_{τ-1} + β(τ) h_{τ-1}` with `ε² = v + h`.
pub fn garch_forward_recursion(
    spec: &TvGarchSpec,
    h0: f64,
    innovations: &[f64],
    signs: &[bool],
) -> Result<f64> {
    let k = innovations.len();
    check_path_inputs(k, h0, innovations, signs)?;
    let mut h = h0;
    for j in 0..k {
        let offset = (k - 1 - j) as i64;
        let reg = spec.coeff_at_signed(offset);
        let eps2 = innovations[j] + h;
        h = reg.omega + reg.alpha_star(signs[j]) * eps2 + reg.beta * h;
    }
    Ok(h)
}

/// `E(h_t | F_{t-k-1})` given `h_{t-k}`.
pub fn predict_variance(spec: &TvGarchSpec, k: usize, h0: f64, neg_prob: f64) -> Result<f64> {
    if !(h0 > 0.0) {
        return Err(Error::Domain(format!("initial variance must be positive, got {h0}")));
    }
    let prods = SigmaProducts::compute(spec, k, None, neg_prob)?;
    let mut acc = prods.zeta_bar[k] * h0;
    for r in (0..k).rev() {
        acc += prods.zeta_bar[r] * spec.coeff_at_signed(r as i64).omega;
    }
    Ok(acc)
}

/// What the mean square error refers to.
#[derive(Debug, Clone, Copy)]
pub enum MseTarget {
    Variance,
    /// Forecasting `ε_t²`; carries `E(h_t²)` for the extra `r = 0` term.
    SquaredShock { current_second_moment: f64 },
}

/// Mean square error of the `k`-step variance forecast. `second_moments[r-1]`
/// holds `E(h²_{t-r})`, `r = 1..=k`.
pub fn variance_mse(
    spec: &TvGarchSpec,
    k: usize,
    second_moments: &[f64],
    shock: &ShockMoments,
    target: MseTarget,
) -> Result<f64> {
    if second_moments.len() != k {
        return Err(Error::LengthMismatch {
            what: "second moments",
            expected: k,
            got: second_moments.len(),
        });
    }
    if let Some(bad) = second_moments.iter().find(|m| !(**m > 0.0)) {
        return Err(Error::Domain(format!("second moments must be positive, got {bad}")));
    }
    let prods = SigmaProducts::compute(spec, k, None, shock.neg_prob)?;
    let mut acc = CompensatedSum::new();
    for r in 1..=k {
        acc.add(prods.g_sq_bar[r] * second_moments[r - 1]);
    }
    if let MseTarget::SquaredShock {
        current_second_moment,
    } = target
    {
        acc.add(current_second_moment);
    }
    Ok(shock.excess() * acc.value())
}

/// `E(h_{t-offset})` from the closed form, re-based at the regime containing `offset`.
pub fn unconditional_variance(spec: &TvGarchSpec, offset: i64, neg_prob: f64) -> Result<f64> {
    let regimes = spec.regimes();
    let sched = spec.schedule();
    let oldest = regimes.len() - 1;
    let c_old = regimes[oldest].expected_c(neg_prob);
    if c_old >= 1.0 {
        return Err(Error::Divergent {
            regime: oldest + 1,
            rate: c_old,
        });
    }
    let start = sched.regime_index(offset);
    let mut weight = 1.0;
    let mut acc = 0.0;
    for l in start..oldest {
        let (lo, hi) = sched.regime_bounds(l);
        let hi = hi.expect("interior regime") as i64;
        let lo = if l == start { offset } else { lo as i64 };
        let len = (hi - lo) as u64;
        let c = regimes[l].expected_c(neg_prob);
        acc += weight * geometric_sum(c, len) * regimes[l].omega;
        weight *= c.powf(len as f64);
    }
    acc += weight * regimes[oldest].omega / (1.0 - c_old);
    Ok(acc)
}

/// Truncated MA(∞) sum `Σ_r E(ς_{s,r}) ω(s-r)` at `s = t - offset`.
pub fn unconditional_variance_series(
    spec: &TvGarchSpec,
    offset: i64,
    neg_prob: f64,
    tol: f64,
) -> Result<f64> {
    let old = spec.oldest();
    let c_old = old.expected_c(neg_prob);
    if c_old >= 1.0 {
        return Err(Error::Divergent {
            regime: spec.regimes().len(),
            rate: c_old,
        });
    }
    let tail_from = spec.schedule().oldest_start() as i64;
    let mut acc = CompensatedSum::new();
    let mut zeta = 1.0;
    let mut o = offset;
    loop {
        let reg = spec.coeff_at_signed(o);
        acc.add(zeta * reg.omega);
        if o >= tail_from && zeta * old.omega * c_old / (1.0 - c_old) < tol {
            break;
        }
        zeta *= reg.expected_c(neg_prob);
        o += 1;
    }
    Ok(acc.value())
}

#[derive(Debug, Clone, Serialize)]
pub struct VariancePath {
    pub offsets: Vec<i64>,
    pub values: Vec<f64>,
    /// `ω_{m+1}/(1 - c̄_{m+1})`, in force before all breaks.
    pub past_limit: f64,
    /// `ω_1/(1 - c̄_1)`, the limit far after the reference time; `None` when `c̄_1 ≥ 1`.
    pub future_limit: Option<f64>,
}

pub fn unconditional_variance_path(
    spec: &TvGarchSpec,
    offsets: &[i64],
    neg_prob: f64,
) -> Result<VariancePath> {
    let values = offsets
        .iter()
        .map(|&o| unconditional_variance(spec, o, neg_prob))
        .collect::<Result<Vec<_>>>()?;
    let old = spec.oldest();
    let recent = spec.regimes()[0];
    let c1 = recent.expected_c(neg_prob);
    Ok(VariancePath {
        offsets: offsets.to_vec(),
        values,
        past_limit: old.omega / (1.0 - old.expected_c(neg_prob)),
        future_limit: (c1 < 1.0).then(|| recent.omega / (1.0 - c1)),
    })
}

/// Unconditional error variances `σ²_{t-offset} = E(h_{t-offset})` as a profile
/// for the mean-equation moments.
#[derive(Debug, Clone)]
pub struct GarchVarianceProfile {
    spec: TvGarchSpec,
    neg_prob: f64,
}

impl GarchVarianceProfile {
    pub fn new(spec: &TvGarchSpec, neg_prob: f64) -> Result<Self> {
        unconditional_variance(spec, 0, neg_prob)?;
        Ok(Self {
            spec: spec.clone(),
            neg_prob,
        })
    }
}

impl VarianceProfile for GarchVarianceProfile {
    fn at(&self, offset: i64) -> f64 {
        unconditional_variance(&self.spec, offset, self.neg_prob).expect("checked at construction")
    }

    fn settled_from(&self) -> i64 {
        self.spec.schedule().oldest_start() as i64
    }
}

/// Summability check for the MA(∞) representation of `h_t`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Cg1Diagnostic {
    /// `ϰ̃ Σ_r E(g²_{t,r}) E(h²_{t-r})` truncated once terms fall below tolerance.
    pub sum: f64,
    /// `E[c²]` of the oldest regime, the geometric rate of the terms.
    pub tail_rate: f64,
    pub finite: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct InnovationVariance {
    pub offsets: Vec<i64>,
    pub h_mean: Vec<f64>,
    /// `E(h²)` at each offset.
    pub h_second_moment: Vec<f64>,
    /// `σ²_v = ϰ̃ E(h²)`.
    pub v_variance: Vec<f64>,
    pub cg1: Cg1Diagnostic,
}

/// One step of the first/second moment recursion of `h`.
fn moment_step(reg: &GarchRegime, shock: &ShockMoments, prev: (f64, f64)) -> (f64, f64) {
    let c = reg.expected_c(shock.neg_prob);
    let m2 = reg.second_moment_factor(shock);
    let mean = reg.omega + c * prev.0;
    let second = reg.omega * reg.omega + 2.0 * reg.omega * c * prev.0 + m2 * prev.1;
    (mean, second)
}

fn oldest_fixed_point(spec: &TvGarchSpec, shock: &ShockMoments) -> Result<(f64, f64)> {
    let old = spec.oldest();
    let regime = spec.regimes().len();
    let c = old.expected_c(shock.neg_prob);
    let m2 = old.second_moment_factor(shock);
    if c >= 1.0 {
        return Err(Error::Divergent { regime, rate: c });
    }
    if m2 >= 1.0 {
        return Err(Error::Divergent { regime, rate: m2 });
    }
    let mean = old.omega / (1.0 - c);
    let second = (old.omega * old.omega + 2.0 * old.omega * c * mean) / (1.0 - m2);
    Ok((mean, second))
}

/// `E(h)` and `E(h²)` along `offsets`, started at the oldest regime's fixed point.
pub fn h_second_moment_path(
    spec: &TvGarchSpec,
    shock: &ShockMoments,
    offsets: &[i64],
) -> Result<InnovationVariance> {
    let fixed = oldest_fixed_point(spec, shock)?;
    let top = spec.schedule().oldest_start() as i64;
    let lowest = offsets.iter().copied().min().unwrap_or(0).min(top);
    // moments[o - lowest] for o in lowest..=top
    let span = (top - lowest) as usize;
    let mut moments = vec![fixed; span + 1];
    for idx in (0..span).rev() {
        let o = lowest + idx as i64;
        moments[idx] = moment_step(&spec.coeff_at_signed(o), shock, moments[idx + 1]);
    }
    let lookup = |o: i64| -> (f64, f64) {
        if o >= top {
            fixed
        } else {
            moments[(o - lowest) as usize]
        }
    };
    let (h_mean, h_second): (Vec<f64>, Vec<f64>) = offsets.iter().map(|&o| lookup(o)).unzip();
    let v_variance = h_second.iter().map(|m| shock.excess() * m).collect();
    let cg1 = cg1_diagnostic(spec, shock, &lookup);
    Ok(InnovationVariance {
        offsets: offsets.to_vec(),
        h_mean,
        h_second_moment: h_second,
        v_variance,
        cg1,
    })
}

fn cg1_diagnostic(
    spec: &TvGarchSpec,
    shock: &ShockMoments,
    lookup: &dyn Fn(i64) -> (f64, f64),
) -> Cg1Diagnostic {
    let p = shock.neg_prob;
    let tail_rate = spec.oldest().expected_c_sq(p);
    let tail_from = spec.schedule().oldest_start() as i64;
    let mut acc = CompensatedSum::new();
    let mut zeta_sq = 1.0;
    let finite = tail_rate < 1.0;
    for r in 1..=1_000_000i64 {
        let reg = spec.coeff_at_signed(r - 1);
        let g_sq = zeta_sq * reg.expected_alpha_star_sq(p);
        let term = g_sq * lookup(r).1;
        acc.add(term);
        zeta_sq *= reg.expected_c_sq(p);
        if r > tail_from && (!finite || term * tail_rate / (1.0 - tail_rate) < 1e-14 * acc.value().max(1e-300)) {
            break;
        }
    }
    Cg1Diagnostic {
        sum: shock.excess() * acc.value(),
        tail_rate,
        finite,
    }
}

/// `E(h_{t-r} | h_{t-k})` and `E(h²_{t-r} | h_{t-k})` for `r = k, k-1, ..., 0`
/// (returned in that chronological order).
pub fn conditional_moments_from(
    spec: &TvGarchSpec,
    shock: &ShockMoments,
    k: usize,
    h0: f64,
) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(k + 1);
    let mut cur = (h0, h0 * h0);
    out.push(cur);
    for r in (0..k).rev() {
        cur = moment_step(&spec.coeff_at_signed(r as i64), shock, cur);
        out.push(cur);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::BreakSchedule;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spec(rng: &mut ChaCha8Rng, span: u64) -> TvGarchSpec {
        let n = rng.random_range(0..=3usize);
        let mut offs: Vec<u64> = Vec::new();
        while offs.len() < n {
            let o = rng.random_range(1..span);
            if !offs.contains(&o) {
                offs.push(o);
            }
        }
        offs.sort();
        let sched = BreakSchedule::from_offsets(offs).unwrap();
        let regimes = (0..sched.regime_count())
            .map(|_| {
                GarchRegime::new(
                    rng.random_range(0.01..0.5),
                    rng.random_range(0.0..0.15),
                    rng.random_range(0.0..0.15),
                    rng.random_range(0.5..0.85),
                )
            })
            .collect();
        TvGarchSpec::new(regimes, sched).unwrap()
    }

    #[test]
    fn zeta_examples() {
        let c = TvGarchSpec::constant(GarchRegime::new(0.1, 0.05, 0.0, 0.9)).unwrap();
        let z = zeta_abrupt(&c, 10, ZetaMode::Expected { neg_prob: 0.5 }).unwrap();
        assert!((z - 0.95f64.powi(10)).abs() < 1e-15);
        assert!((z - 0.59874).abs() < 1e-5);
        assert_eq!(zeta_abrupt(&c, 0, ZetaMode::Expected { neg_prob: 0.5 }).unwrap(), 1.0);

        let sched = BreakSchedule::from_offsets(vec![2]).unwrap();
        let two = TvGarchSpec::new(
            vec![GarchRegime::new(0.1, 0.1, 0.0, 0.8), GarchRegime::new(0.1, 0.1, 0.0, 0.7)],
            sched,
        )
        .unwrap();
        let z = zeta_abrupt(&two, 5, ZetaMode::Expected { neg_prob: 0.5 }).unwrap();
        assert!((z - 0.41472).abs() < 1e-14);
    }

    #[test]
    fn realized_zeta_needs_long_enough_path() {
        let c = TvGarchSpec::constant(GarchRegime::new(0.1, 0.05, 0.1, 0.8)).unwrap();
        assert!(zeta_abrupt(&c, 3, ZetaMode::Realized(&[true])).is_err());
        let z = zeta_abrupt(&c, 2, ZetaMode::Realized(&[true, false])).unwrap();
        assert!((z - 0.85 * 0.95).abs() < 1e-15);
    }

    #[test]
    fn zeta_recursion_matches_direct_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let spec = random_spec(&mut rng, 400);
            let signs: Vec<bool> = (0..1000).map(|_| rng.random_bool(0.5)).collect();
            let prods = SigmaProducts::compute(&spec, 1000, Some(&signs), 0.5).unwrap();
            for k in [0usize, 1, 17, 400, 1000] {
                let direct = zeta_abrupt(&spec, k, ZetaMode::Realized(&signs)).unwrap();
                let rec = prods.zeta.as_ref().unwrap()[k];
                assert!((rec - direct).abs() <= 1e-14 * direct.abs().max(1e-300));
                let e = zeta_abrupt(&spec, k, ZetaMode::Expected { neg_prob: 0.5 }).unwrap();
                assert!((prods.zeta_bar[k] - e).abs() <= 1e-12 * e.max(1e-300));
            }
        }
    }

    #[test]
    fn one_step_solution() {
        let spec = TvGarchSpec::constant(GarchRegime::new(0.2, 0.05, 0.1, 0.8)).unwrap();
        let s = garch_general_solution(&spec, 1, 1.5, &[0.3], &[true]).unwrap();
        let expect = 0.2 + (0.15 + 0.8) * 1.5 + 0.15 * 0.3;
        assert!((s.total - expect).abs() < 1e-15);
    }

    #[test]
    fn solution_matches_forward_recursion() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let spec = random_spec(&mut rng, 100);
            let h0 = rng.random_range(0.1..2.0);
            let signs: Vec<bool> = (0..100).map(|_| rng.random_bool(0.5)).collect();
            let v: Vec<f64> = (0..100).map(|_| rng.random_range(-0.5..3.0)).collect();
            let s = garch_general_solution(&spec, 100, h0, &v, &signs).unwrap();
            let f = garch_forward_recursion(&spec, h0, &v, &signs).unwrap();
            assert!((s.total - f).abs() <= 1e-10 * f.abs());
        }
    }

    #[test]
    fn homogeneous_only_when_no_drift_or_innovation() {
        // ω must be positive in a spec; check the homogeneous part directly
        let spec = TvGarchSpec::constant(GarchRegime::new(0.2, 0.05, 0.1, 0.8)).unwrap();
        let signs = [false, true, false];
        let s = garch_general_solution(&spec, 3, 2.0, &[0.0; 3], &signs).unwrap();
        assert!((s.homogeneous - 0.85 * 0.95 * 0.85 * 2.0).abs() < 1e-15);
    }

    #[test]
    fn solution_input_errors() {
        let spec = TvGarchSpec::constant(GarchRegime::new(0.2, 0.05, 0.1, 0.8)).unwrap();
        assert!(garch_general_solution(&spec, 2, 1.0, &[0.0], &[true, false]).is_err());
        assert!(garch_general_solution(&spec, 1, 0.0, &[0.0], &[true]).is_err());
    }

    #[test]
    fn predictor_examples() {
        let spec = TvGarchSpec::constant(GarchRegime::new(0.1, 0.05, 0.1, 0.8)).unwrap();
        let one = predict_variance(&spec, 1, 2.0, 0.5).unwrap();
        assert!((one - (0.1 + 0.9 * 2.0)).abs() < 1e-15);
        let far = predict_variance(&spec, 2000, 2.0, 0.5).unwrap();
        assert!((far - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mse_examples() {
        let spec = TvGarchSpec::constant(GarchRegime::new(0.1, 0.05, 0.0, 0.9)).unwrap();
        let g = ShockMoments::gaussian();
        let m = variance_mse(&spec, 1, &[1.0], &g, MseTarget::Variance).unwrap();
        assert!((m - 0.005).abs() < 1e-15);
        let e = variance_mse(
            &spec,
            1,
            &[1.0],
            &g,
            MseTarget::SquaredShock {
                current_second_moment: 1.5,
            },
        )
        .unwrap();
        assert!((e - (0.005 + 3.0)).abs() < 1e-14);
    }

    #[test]
    fn constant_path_is_flat() {
        let spec = TvGarchSpec::constant(GarchRegime::new(0.1, 0.05, 0.1, 0.8)).unwrap();
        let p = unconditional_variance_path(&spec, &[-50, 0, 10, 1000], 0.5).unwrap();
        for v in &p.values {
            assert!((v - 1.0).abs() < 1e-12);
        }
        assert_eq!(p.future_limit, Some(p.past_limit));
    }

    #[test]
    fn divergent_oldest_regime_is_named() {
        let sched = BreakSchedule::from_offsets(vec![10]).unwrap();
        let spec = TvGarchSpec::new(
            vec![GarchRegime::new(0.1, 0.05, 0.0, 0.9), GarchRegime::new(0.1, 0.1, 0.0, 0.95)],
            sched,
        )
        .unwrap();
        match unconditional_variance(&spec, 0, 0.5) {
            Err(Error::Divergent { regime, .. }) => assert_eq!(regime, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn closed_form_matches_ma_infinity_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let spec = random_spec(&mut rng, 200);
            for off in [-30i64, 0, 5, 60, 150, 400] {
                let a = unconditional_variance(&spec, off, 0.5).unwrap();
                let b = unconditional_variance_series(&spec, off, 0.5, 1e-15).unwrap();
                assert!((a - b).abs() < 1e-12 * a, "{a} {b}");
            }
        }
    }

    #[test]
    fn predictor_limit_is_unconditional_mean() {
        let sched = BreakSchedule::from_offsets(vec![5, 30]).unwrap();
        let spec = TvGarchSpec::new(
            vec![
                GarchRegime::new(0.1, 0.05, 0.1, 0.8),
                GarchRegime::new(0.3, 0.1, 0.0, 0.7),
                GarchRegime::new(0.05, 0.05, 0.05, 0.85),
            ],
            sched,
        )
        .unwrap();
        let far = predict_variance(&spec, 5000, 7.0, 0.5).unwrap();
        let u = unconditional_variance(&spec, 0, 0.5).unwrap();
        assert!((far - u).abs() < 1e-12);
    }

    #[test]
    fn gaussian_symmetric_second_moment_closed_form() {
        let (w, a, b) = (0.1, 0.08, 0.85);
        let spec = TvGarchSpec::constant(GarchRegime::new(w, a, 0.0, b)).unwrap();
        let g = ShockMoments::gaussian();
        let c = a + b;
        let expect = w * w * (1.0 + c) / ((1.0 - c) * (1.0 - b * b - 2.0 * a * b - 3.0 * a * a));
        let p = h_second_moment_path(&spec, &g, &[0, 7]).unwrap();
        for m in &p.h_second_moment {
            assert!((m - expect).abs() < 1e-12 * expect);
        }
        assert!(p.cg1.finite && p.cg1.sum.is_finite());
        assert!(p.h_second_moment[0] >= p.h_mean[0] * p.h_mean[0]);
    }

    #[test]
    fn second_moment_condition_violation() {
        let spec = TvGarchSpec::constant(GarchRegime::new(0.1, 0.3, 0.0, 0.65)).unwrap();
        assert!(h_second_moment_path(&spec, &ShockMoments::gaussian(), &[0]).is_err());
    }

    #[test]
    fn moment_path_first_moment_matches_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            let spec = random_spec(&mut rng, 100);
            let offs: Vec<i64> = (-5..120).collect();
            let p = h_second_moment_path(&spec, &ShockMoments::gaussian(), &offs).unwrap();
            for (o, m) in offs.iter().zip(&p.h_mean) {
                let u = unconditional_variance(&spec, *o, 0.5).unwrap();
                assert!((u - m).abs() < 1e-12 * u);
            }
        }
    }
}
