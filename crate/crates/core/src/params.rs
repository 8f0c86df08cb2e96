//! Break schedules and piecewise-constant parameter paths.
//!
//! Time is measured as an *offset* backward from the reference time `t`:
//! offset 0 is `t`, offset 1 is `t-1`, and so on. A schedule with offsets
//! `k_1 < k_2 < ... < k_n` splits the past into `n + 1` regimes; regime 1
//! (index 0) is the most recent and covers offsets `[0, k_1)`, regime `l`
//! covers `[k_{l-1}, k_l)`, and the last regime extends to the infinite past.
//! An observation sitting exactly at offset `k_l` belongs to the older regime.
//!
//! Negative offsets (times after `t`) are outside the window and belong to
//! regime 1; engines reach them through the signed `*_signed` accessors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BreakSchedule {
    offsets: Vec<u64>,
    horizon: u64,
}

impl BreakSchedule {
    pub fn new(offsets: Vec<u64>, horizon: u64) -> Result<Self> {
        if offsets.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidSchedule(format!(
                "offsets must be strictly increasing: {offsets:?}"
            )));
        }
        if let Some(&first) = offsets.first() {
            if first == 0 {
                return Err(Error::InvalidSchedule("offsets must be positive".into()));
            }
        }
        if let Some(&last) = offsets.last() {
            if last >= horizon {
                return Err(Error::InvalidSchedule(format!(
                    "last offset {last} must be below the horizon {horizon}"
                )));
            }
        }
        Ok(Self { offsets, horizon })
    }

    /// Schedule whose horizon sits one step past the oldest break.
    pub fn from_offsets(offsets: Vec<u64>) -> Result<Self> {
        let horizon = offsets.last().map_or(1, |k| k + 1);
        Self::new(offsets, horizon)
    }

    pub fn empty() -> Self {
        Self {
            offsets: Vec::new(),
            horizon: 1,
        }
    }

    pub fn offsets(&self) -> &[u64] {
        &self.offsets
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    pub fn break_count(&self) -> usize {
        self.offsets.len()
    }

    pub fn regime_count(&self) -> usize {
        self.offsets.len() + 1
    }

    /// Offset at which the oldest regime starts (0 when there are no breaks).
    pub fn oldest_start(&self) -> u64 {
        self.offsets.last().copied().unwrap_or(0)
    }

    /// Zero-based regime index of the observation at `offset`; future times map to 0.
    pub fn regime_index(&self, offset: i64) -> usize {
        if offset < 0 {
            return 0;
        }
        let offset = offset as u64;
        self.offsets.partition_point(|&k| k <= offset)
    }

    /// Half-open offset range `[start, end)` of a zero-based regime; `end` is `None` for the oldest.
    pub fn regime_bounds(&self, regime: usize) -> (u64, Option<u64>) {
        let start = if regime == 0 { 0 } else { self.offsets[regime - 1] };
        (start, self.offsets.get(regime).copied())
    }
}

/// Mean-equation coefficients of one regime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArRegime {
    pub drift: f64,
    pub phi1: f64,
    pub phi2: f64,
}

impl ArRegime {
    pub fn new(drift: f64, phi1: f64, phi2: f64) -> Self {
        Self { drift, phi1, phi2 }
    }

    pub fn ar1(drift: f64, phi1: f64) -> Self {
        Self::new(drift, phi1, 0.0)
    }

    /// Largest modulus of the roots of `z^2 - phi1 z - phi2`.
    pub fn spectral_radius(&self) -> f64 {
        let disc = self.phi1 * self.phi1 + 4.0 * self.phi2;
        if disc >= 0.0 {
            let s = disc.sqrt();
            ((self.phi1 + s) / 2.0).abs().max(((self.phi1 - s) / 2.0).abs())
        } else {
            (-self.phi2).sqrt()
        }
    }
}

/// Variance-equation coefficients of one regime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GarchRegime {
    pub omega: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub beta: f64,
}

impl GarchRegime {
    pub fn new(omega: f64, alpha: f64, gamma: f64, beta: f64) -> Self {
        Self {
            omega,
            alpha,
            gamma,
            beta,
        }
    }

    /// `α + β + γ/2`, the expected one-step factor for symmetric shocks.
    pub fn persistence(&self) -> f64 {
        self.expected_c(0.5)
    }

    /// `E[c(t)] = α + β + γ·p` where `p` weights the sign indicator.
    pub fn expected_c(&self, neg_prob: f64) -> f64 {
        self.alpha + self.beta + self.gamma * neg_prob
    }

    /// `E[c(t)^2]` with `c = α + β + γ S`.
    pub fn expected_c_sq(&self, neg_prob: f64) -> f64 {
        let ab = self.alpha + self.beta;
        ab * ab + neg_prob * self.gamma * (2.0 * ab + self.gamma)
    }

    /// `E[(α + γ S)^2]`.
    pub fn expected_alpha_star_sq(&self, neg_prob: f64) -> f64 {
        self.alpha * self.alpha + neg_prob * self.gamma * (2.0 * self.alpha + self.gamma)
    }

    /// `E[(β + α* e^2)^2]`, the autoregressive factor of `E(h_t^2)`.
    pub fn second_moment_factor(&self, shock: &ShockMoments) -> f64 {
        let p = shock.neg_prob;
        self.beta * self.beta
            + 2.0 * self.beta * (self.alpha + self.gamma * p)
            + shock.fourth * self.expected_alpha_star_sq(p)
    }

    pub fn realized_c(&self, negative: bool) -> f64 {
        self.alpha_star(negative) + self.beta
    }

    pub fn alpha_star(&self, negative: bool) -> f64 {
        if negative {
            self.alpha + self.gamma
        } else {
            self.alpha
        }
    }

    fn add(&self, other: &GarchRegime) -> GarchRegime {
        GarchRegime::new(
            self.omega + other.omega,
            self.alpha + other.alpha,
            self.gamma + other.gamma,
            self.beta + other.beta,
        )
    }

    fn sub(&self, other: &GarchRegime) -> GarchRegime {
        GarchRegime::new(
            self.omega - other.omega,
            self.alpha - other.alpha,
            self.gamma - other.gamma,
            self.beta - other.beta,
        )
    }
}

/// Shared interface of the piecewise-constant specifications.
pub trait Piecewise {
    type Regime: Copy;

    fn regimes(&self) -> &[Self::Regime];
    fn schedule(&self) -> &BreakSchedule;

    /// Parameters in force at `offset` (must be non-negative).
    fn coeff_at(&self, offset: i64) -> Result<Self::Regime> {
        if offset < 0 {
            return Err(Error::Domain(format!("negative offset {offset}")));
        }
        Ok(self.coeff_at_signed(offset))
    }

    /// Like [`Piecewise::coeff_at`] but future times resolve to regime 1.
    fn coeff_at_signed(&self, offset: i64) -> Self::Regime {
        self.regimes()[self.schedule().regime_index(offset)]
    }

    fn oldest(&self) -> Self::Regime {
        *self.regimes().last().expect("at least one regime")
    }
}

fn check_regime_count(schedule: &BreakSchedule, count: usize) -> Result<()> {
    if count != schedule.regime_count() {
        return Err(Error::InvalidSpec(format!(
            "{} breaks need {} regimes, got {count}",
            schedule.break_count(),
            schedule.regime_count()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TvArSpec {
    regimes: Vec<ArRegime>,
    schedule: BreakSchedule,
}

impl TvArSpec {
    /// `regimes[0]` is the most recent regime.
    pub fn new(regimes: Vec<ArRegime>, schedule: BreakSchedule) -> Result<Self> {
        check_regime_count(&schedule, regimes.len())?;
        if regimes
            .iter()
            .any(|r| !(r.drift.is_finite() && r.phi1.is_finite() && r.phi2.is_finite()))
        {
            return Err(Error::InvalidSpec("AR coefficients must be finite".into()));
        }
        Ok(Self { regimes, schedule })
    }

    pub fn constant(regime: ArRegime) -> Self {
        Self {
            regimes: vec![regime],
            schedule: BreakSchedule::empty(),
        }
    }
}

impl Piecewise for TvArSpec {
    type Regime = ArRegime;

    fn regimes(&self) -> &[ArRegime] {
        &self.regimes
    }

    fn schedule(&self) -> &BreakSchedule {
        &self.schedule
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TvGarchSpec {
    regimes: Vec<GarchRegime>,
    schedule: BreakSchedule,
}

impl TvGarchSpec {
    /// `regimes[0]` is the most recent regime.
    ///
    /// Requires `ω > 0`, `β ≥ 0` and `α + γ ≥ 0` in every regime. A negative
    /// `α` is accepted here (published break-dummy estimates produce it) and
    /// surfaces through [`TvGarchSpec::sign_violations`].
    pub fn new(regimes: Vec<GarchRegime>, schedule: BreakSchedule) -> Result<Self> {
        check_regime_count(&schedule, regimes.len())?;
        for (i, r) in regimes.iter().enumerate() {
            let ok = r.omega > 0.0
                && r.beta >= 0.0
                && r.alpha + r.gamma >= 0.0
                && [r.omega, r.alpha, r.gamma, r.beta].iter().all(|v| v.is_finite());
            if !ok {
                return Err(Error::InvalidSpec(format!(
                    "regime {} violates ω>0, β≥0, α+γ≥0: {r:?}",
                    i + 1
                )));
            }
        }
        Ok(Self { regimes, schedule })
    }

    pub fn constant(regime: GarchRegime) -> Result<Self> {
        Self::new(vec![regime], BreakSchedule::empty())
    }

    /// Builds the per-regime parameters from break-dummy form: a base
    /// (pre-break) regime plus one increment per break, increments listed in
    /// chronological order (increment 1 switches on at the oldest break).
    pub fn from_dummies(
        base: GarchRegime,
        increments: &[GarchRegime],
        schedule: BreakSchedule,
    ) -> Result<Self> {
        if increments.len() != schedule.break_count() {
            return Err(Error::LengthMismatch {
                what: "break increments",
                expected: schedule.break_count(),
                got: increments.len(),
            });
        }
        let m = increments.len();
        // regime l (1-based) = base + sum_{i=1}^{m+1-l} increment_i
        let mut cumulative = Vec::with_capacity(m + 1);
        let mut acc = base;
        cumulative.push(acc);
        for inc in increments {
            acc = acc.add(inc);
            cumulative.push(acc);
        }
        cumulative.reverse();
        Self::new(cumulative, schedule)
    }

    /// Inverse of [`TvGarchSpec::from_dummies`].
    pub fn to_dummies(&self) -> (GarchRegime, Vec<GarchRegime>) {
        let base = self.oldest();
        let incs = self
            .regimes
            .windows(2)
            .rev()
            .map(|w| w[0].sub(&w[1]))
            .collect();
        (base, incs)
    }

    /// One-based indices of regimes with `α < 0`.
    pub fn sign_violations(&self) -> Vec<usize> {
        self.regimes
            .iter()
            .enumerate()
            .filter(|(_, r)| r.alpha < 0.0)
            .map(|(i, _)| i + 1)
            .collect()
    }
}

impl Piecewise for TvGarchSpec {
    type Regime = GarchRegime;

    fn regimes(&self) -> &[GarchRegime] {
        &self.regimes
    }

    fn schedule(&self) -> &BreakSchedule {
        &self.schedule
    }
}

/// Persistence `c̄_ℓ = α_ℓ + β_ℓ + γ_ℓ/2`, most recent regime first.
pub fn persistence(spec: &TvGarchSpec) -> Vec<f64> {
    spec.regimes().iter().map(GarchRegime::persistence).collect()
}

/// Moments of the standardized shock `e_t` (unit variance).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShockMoments {
    /// `E(e^4)`.
    pub fourth: f64,
    /// Weight of the negative-sign indicator, 0.5 for symmetric shocks.
    pub neg_prob: f64,
}

impl ShockMoments {
    pub fn new(fourth: f64, neg_prob: f64) -> Result<Self> {
        if !(fourth >= 1.0) || !(0.0..=1.0).contains(&neg_prob) {
            return Err(Error::InvalidSpec(format!(
                "shock moments need E(e^4) >= 1 and P(e<0) in [0,1]: {fourth}, {neg_prob}"
            )));
        }
        Ok(Self { fourth, neg_prob })
    }

    pub fn gaussian() -> Self {
        Self {
            fourth: 3.0,
            neg_prob: 0.5,
        }
    }

    /// Student-t rescaled to unit variance; needs `nu > 4`.
    pub fn student_t(nu: f64) -> Result<Self> {
        if !(nu > 4.0) {
            return Err(Error::InvalidSpec(format!(
                "Student-t needs more than 4 degrees of freedom, got {nu}"
            )));
        }
        Ok(Self {
            fourth: 3.0 * (nu - 2.0) / (nu - 4.0),
            neg_prob: 0.5,
        })
    }

    pub fn second(&self) -> f64 {
        1.0
    }

    /// `Var(e^2) = E(e^4) - 1`.
    pub fn excess(&self) -> f64 {
        self.fourth - 1.0
    }
}

impl Default for ShockMoments {
    fn default() -> Self {
        Self::gaussian()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn figure1_panel_b() -> TvArSpec {
        let schedule = BreakSchedule::from_offsets(vec![100, 120, 140]).unwrap();
        let regimes = [0.98, 0.80, 0.70, 0.90]
            .iter()
            .map(|&p| ArRegime::ar1(0.0, p))
            .collect();
        TvArSpec::new(regimes, schedule).unwrap()
    }

    #[test]
    fn no_breaks_any_offset_is_regime_one() {
        let spec = TvArSpec::constant(ArRegime::new(0.1, 0.5, 0.2));
        for off in [0, 1, 50, 10_000] {
            assert_eq!(spec.coeff_at(off).unwrap().phi1, 0.5);
        }
    }

    #[test]
    fn coeff_lookup_matches_figure_one_setup() {
        let spec = figure1_panel_b();
        assert_eq!(spec.coeff_at(110).unwrap().phi1, 0.80);
        assert_eq!(spec.coeff_at(99).unwrap().phi1, 0.98);
        // the break offset itself belongs to the older regime
        assert_eq!(spec.coeff_at(100).unwrap().phi1, 0.80);
        assert_eq!(spec.coeff_at(140).unwrap().phi1, 0.90);
        assert_eq!(spec.coeff_at(1_000_000).unwrap().phi1, 0.90);
    }

    #[test]
    fn negative_offset_is_a_domain_error() {
        let spec = figure1_panel_b();
        assert!(matches!(spec.coeff_at(-1), Err(Error::Domain(_))));
        assert_eq!(spec.coeff_at_signed(-5).phi1, 0.98);
    }

    #[test]
    fn schedule_validation() {
        assert!(BreakSchedule::new(vec![5, 5], 10).is_err());
        assert!(BreakSchedule::new(vec![0, 5], 10).is_err());
        assert!(BreakSchedule::new(vec![3, 10], 10).is_err());
        assert!(BreakSchedule::new(vec![], 10).is_ok());
    }

    #[test]
    fn regime_count_must_match() {
        let s = BreakSchedule::from_offsets(vec![10]).unwrap();
        assert!(TvArSpec::new(vec![ArRegime::ar1(0.0, 0.5)], s).is_err());
    }

    #[test]
    fn published_persistence_values() {
        // NIKKEI pre-break regime and S&P base regime
        let nikkei = GarchRegime::new(0.007, 0.019, 0.117, 0.820);
        assert!((nikkei.persistence() - 0.8975).abs() < 1e-12);
        let sp = GarchRegime::new(0.001, 0.018, 0.023, 0.954);
        assert!((sp.persistence() - 0.9835).abs() < 1e-12);
        let sym = GarchRegime::new(0.1, 0.05, 0.0, 0.9);
        assert!((sym.persistence() - 0.95).abs() < 1e-15);
    }

    #[test]
    fn dummies_cumulate_to_regimes() {
        // S&P: α1 = −0.039, γ1 = 0.092; β2 = −0.048, γ2 = 0.113; β3 = 0.039, γ3 = −0.094
        let base = GarchRegime::new(0.001, 0.018, 0.023, 0.954);
        let incs = [
            GarchRegime::new(0.0, -0.039, 0.092, 0.0),
            GarchRegime::new(0.0, 0.0, 0.113, -0.048),
            GarchRegime::new(0.0, 0.0, -0.094, 0.039),
        ];
        let sched = BreakSchedule::from_offsets(vec![326, 474, 3459]).unwrap();
        let spec = TvGarchSpec::from_dummies(base, &incs, sched).unwrap();
        let c = persistence(&spec);
        let expected = [0.991, 0.999, 0.9905, 0.9835];
        for (a, b) in c.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12, "{c:?}");
        }
        assert_eq!(spec.sign_violations(), vec![1, 2, 3]);
    }

    #[test]
    fn invalid_garch_regimes_rejected() {
        assert!(TvGarchSpec::constant(GarchRegime::new(0.0, 0.1, 0.0, 0.8)).is_err());
        assert!(TvGarchSpec::constant(GarchRegime::new(0.1, 0.1, -0.2, 0.8)).is_err());
        assert!(TvGarchSpec::constant(GarchRegime::new(0.1, 0.1, 0.0, -0.1)).is_err());
    }

    #[test]
    fn shock_moments() {
        let g = ShockMoments::gaussian();
        assert_eq!(g.excess(), 2.0);
        let t = ShockMoments::student_t(8.0).unwrap();
        assert!((t.fourth - 4.5).abs() < 1e-12);
        assert!(ShockMoments::student_t(4.0).is_err());
        assert!(ShockMoments::new(0.5, 0.5).is_err());
    }

    fn arb_regime() -> impl Strategy<Value = GarchRegime> {
        (0.01f64..1.0, 0.0f64..0.2, 0.0f64..0.2, 0.0f64..0.9)
            .prop_map(|(w, a, g, b)| GarchRegime::new(w, a, g, b))
    }

    proptest! {
        #[test]
        fn coeff_is_piecewise_constant(gaps in prop::collection::vec(1u64..30, 0..5), probe in 0i64..200) {
            let mut offs = Vec::new();
            let mut acc = 0;
            for g in gaps { acc += g; offs.push(acc); }
            let sched = BreakSchedule::from_offsets(offs.clone()).unwrap();
            let regimes = (0..sched.regime_count()).map(|i| ArRegime::ar1(0.0, i as f64)).collect();
            let spec = TvArSpec::new(regimes, sched).unwrap();
            let here = spec.coeff_at(probe).unwrap().phi1;
            let next = spec.coeff_at(probe + 1).unwrap().phi1;
            let is_break = offs.contains(&((probe + 1) as u64));
            prop_assert_eq!(here != next, is_break);
        }

        #[test]
        fn dummy_form_is_bijective(regs in prop::collection::vec(arb_regime(), 1..6)) {
            let n = regs.len() - 1;
            let sched = BreakSchedule::from_offsets((1..=n as u64).map(|i| 10 * i).collect()).unwrap();
            let spec = TvGarchSpec::new(regs.clone(), sched.clone()).unwrap();
            let (base, incs) = spec.to_dummies();
            let back = TvGarchSpec::from_dummies(base, &incs, sched).unwrap();
            for (a, b) in back.regimes().iter().zip(&regs) {
                prop_assert!((a.persistence() - b.persistence()).abs() < 1e-12);
                prop_assert!((a.omega - b.omega).abs() < 1e-12);
            }
        }
    }
}
