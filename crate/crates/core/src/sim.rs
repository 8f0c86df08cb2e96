//! Monte Carlo paths of the break AR(2)-AGARCH(1,1) process.
//!
//! Path `i` draws from ChaCha8 keyed by the master seed on stream `i`, so
//! results do not depend on thread scheduling and any single path can be
//! regenerated alone. Within a path, element `j` of a path of length `n`
//! sits at offset `n - 1 - j` from the reference time (the last element).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{mean_and_se, CompensatedSum};
use crate::params::{Piecewise, ShockMoments, TvArSpec, TvGarchSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShockDist {
    Normal,
    /// Student-t rescaled to unit variance.
    StudentT { nu: f64 },
}

impl ShockDist {
    pub fn moments(&self) -> Result<ShockMoments> {
        match *self {
            ShockDist::Normal => Ok(ShockMoments::gaussian()),
            ShockDist::StudentT { nu } => ShockMoments::student_t(nu),
        }
    }

    pub(crate) fn sampler(&self) -> Result<ShockSampler> {
        Ok(match *self {
            ShockDist::Normal => ShockSampler::Normal,
            ShockDist::StudentT { nu } => {
                self.moments()?;
                let t = StudentT::new(nu).map_err(|e| Error::InvalidSpec(e.to_string()))?;
                ShockSampler::T(t, ((nu - 2.0) / nu).sqrt())
            }
        })
    }
}

pub(crate) enum ShockSampler {
    Normal,
    T(StudentT<f64>, f64),
}

impl ShockSampler {
    pub(crate) fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            ShockSampler::Normal => StandardNormal.sample(rng),
            ShockSampler::T(t, scale) => scale * t.sample(rng),
        }
    }
}

/// State at the first simulated time point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialState {
    /// Conditional variance at the first point.
    pub h: f64,
    /// `(y_{τ-1}, y_{τ-2})` before the first point.
    pub y_prev: (f64, f64),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimConfig {
    pub ar: TvArSpec,
    pub garch: TvGarchSpec,
    pub path_length: usize,
    pub burn_in: usize,
    pub path_count: usize,
    pub shocks: ShockDist,
    pub seed: u64,
    /// Start from a known state instead of the oldest regime's unconditional
    /// moments. Requires `burn_in == 0`.
    #[serde(default)]
    pub initial: Option<InitialState>,
}

impl SimConfig {
    pub fn new(ar: TvArSpec, garch: TvGarchSpec, path_length: usize, path_count: usize, seed: u64) -> Self {
        Self {
            ar,
            garch,
            path_length,
            burn_in: 1000,
            path_count,
            shocks: ShockDist::Normal,
            seed,
            initial: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.path_length == 0 || self.path_count == 0 {
            return Err(Error::InvalidSpec("path length and count must be at least 1".into()));
        }
        if self.initial.is_some() && self.burn_in != 0 {
            return Err(Error::InvalidSpec("an initial state needs burn_in = 0".into()));
        }
        if let Some(s) = self.initial {
            if !(s.h > 0.0) {
                return Err(Error::Domain(format!("initial variance must be positive, got {}", s.h)));
            }
        }
        self.shocks.sampler().map(|_| ())
    }
}

/// One simulated path, oldest element first.
#[derive(Debug, Clone, Default, Serialize)]
pub struct SimPath {
    pub y: Vec<f64>,
    pub h: Vec<f64>,
    pub eps: Vec<f64>,
    /// `v = ε² - h`.
    pub v: Vec<f64>,
    /// `e < 0` at each time point; `neg[j]` feeds `S⁻` one step later.
    pub neg: Vec<bool>,
}

impl SimPath {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    /// Index of the element at `offset` from the path end.
    pub fn index_of(&self, offset: usize) -> Option<usize> {
        (offset < self.len()).then(|| self.len() - 1 - offset)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SimOutput {
    pub paths: Vec<SimPath>,
}

pub(crate) fn path_rng(seed: u64, path: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path as u64);
    rng
}

fn default_start(config: &SimConfig) -> InitialState {
    let old = config.garch.oldest();
    let c = old.expected_c(0.5);
    let h = if c < 1.0 { old.omega / (1.0 - c) } else { old.omega };
    let ar = config.ar.oldest();
    let denom = 1.0 - ar.phi1 - ar.phi2;
    let mu = if ar.spectral_radius() < 1.0 { ar.drift / denom } else { 0.0 };
    InitialState { h, y_prev: (mu, mu) }
}

/// Simulates path `index` of the configuration.
pub fn simulate_path(config: &SimConfig, index: usize) -> Result<SimPath> {
    let sampler = config.shocks.sampler()?;
    let mut rng = path_rng(config.seed, index);
    let start = config.initial.unwrap_or_else(|| default_start(config));
    let n = config.path_length;
    let total = n + config.burn_in;
    let mut path = SimPath {
        y: Vec::with_capacity(n),
        h: Vec::with_capacity(n),
        eps: Vec::with_capacity(n),
        v: Vec::with_capacity(n),
        neg: Vec::with_capacity(n),
    };
    let (mut y1, mut y2) = start.y_prev;
    let mut h = start.h;
    let mut prev: Option<(f64, bool)> = None;
    for step in 0..total {
        let offset = (total - 1 - step) as i64;
        if let Some((eps_prev, neg_prev)) = prev {
            let g = config.garch.coeff_at_signed(offset);
            h = g.omega + g.alpha_star(neg_prev) * eps_prev * eps_prev + g.beta * h;
            if !(h > 0.0) {
                return Err(Error::NonPositiveVariance {
                    index: step,
                    value: h,
                });
            }
        }
        let e = sampler.draw(&mut rng);
        let eps = e * h.sqrt();
        let a = config.ar.coeff_at_signed(offset);
        let y = a.drift + a.phi1 * y1 + a.phi2 * y2 + eps;
        y2 = y1;
        y1 = y;
        prev = Some((eps, e < 0.0));
        if step >= config.burn_in {
            path.y.push(y);
            path.h.push(h);
            path.eps.push(eps);
            path.v.push(eps * eps - h);
            path.neg.push(e < 0.0);
        }
    }
    Ok(path)
}

/// Maps every path through `f` in parallel without keeping the paths.
/// Results are in path order.
pub fn map_paths<T, F>(config: &SimConfig, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, &SimPath) -> T + Sync,
{
    config.validate()?;
    (0..config.path_count)
        .into_par_iter()
        .map(|i| simulate_path(config, i).map(|p| f(i, &p)))
        .collect()
}

pub fn simulate(config: &SimConfig) -> Result<SimOutput> {
    let paths = map_paths(config, |_, p| p.clone())?;
    Ok(SimOutput { paths })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", content = "lag", rename_all = "snake_case")]
pub enum MomentTarget {
    Mean,
    Variance,
    /// Cross-path correlation of `y` at an offset and `lag` steps earlier.
    Acf(usize),
    HMean,
    HSecond,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub offset: usize,
    pub value: f64,
    pub se: f64,
}

fn column(output: &SimOutput, offset: usize, pick: impl Fn(&SimPath, usize) -> f64) -> Result<Vec<f64>> {
    output
        .paths
        .iter()
        .map(|p| {
            p.index_of(offset)
                .map(|j| pick(p, j))
                .ok_or_else(|| Error::Domain(format!("offset {offset} beyond path length {}", p.len())))
        })
        .collect()
}

fn sample_variance(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().copied().collect::<CompensatedSum>().value() / n;
    let dev2: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = dev2.iter().copied().collect::<CompensatedSum>().value() / (n - 1.0);
    // standard error through the sample variance of the squared deviations
    let (_, se) = mean_and_se(&dev2);
    (var, se)
}

/// Cross-path statistics at fixed offsets with standard errors of the mean.
pub fn estimate_moments(output: &SimOutput, target: MomentTarget, offsets: &[usize]) -> Result<Vec<Estimate>> {
    if output.paths.len() < 2 {
        return Err(Error::Domain("need at least two paths".into()));
    }
    offsets
        .iter()
        .map(|&offset| {
            let (value, se) = match target {
                MomentTarget::Mean => mean_and_se(&column(output, offset, |p, j| p.y[j])?),
                MomentTarget::HMean => mean_and_se(&column(output, offset, |p, j| p.h[j])?),
                MomentTarget::HSecond => mean_and_se(&column(output, offset, |p, j| p.h[j] * p.h[j])?),
                MomentTarget::Variance => sample_variance(&column(output, offset, |p, j| p.y[j])?),
                MomentTarget::Acf(lag) => {
                    let a = column(output, offset, |p, j| p.y[j])?;
                    let b = column(output, offset + lag, |p, j| p.y[j])?;
                    let rho = correlation(&a, &b);
                    (rho, (1.0 - rho * rho) / (a.len() as f64).sqrt())
                }
            };
            Ok(Estimate { offset, value, se })
        })
        .collect()
}

/// Pearson correlation with compensated sums.
pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().copied().collect::<CompensatedSum>().value() / n;
    let mb = b.iter().copied().collect::<CompensatedSum>().value() / n;
    let mut sab = CompensatedSum::new();
    let mut saa = CompensatedSum::new();
    let mut sbb = CompensatedSum::new();
    for (x, y) in a.iter().zip(b) {
        sab.add((x - ma) * (y - mb));
        saa.add((x - ma) * (x - ma));
        sbb.add((y - mb) * (y - mb));
    }
    sab.value() / (saa.value() * sbb.value()).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{ArRegime, BreakSchedule, GarchRegime};
    use crate::tvgarch::garch_general_solution;

    fn garch_const(w: f64, a: f64, g: f64, b: f64) -> TvGarchSpec {
        TvGarchSpec::constant(GarchRegime::new(w, a, g, b)).unwrap()
    }

    #[test]
    fn zero_arch_terms_give_constant_variance() {
        let ar = TvArSpec::constant(ArRegime::new(0.1, 0.5, 0.2));
        let cfg = SimConfig::new(ar, garch_const(0.7, 0.0, 0.0, 0.0), 50, 3, 1);
        let out = simulate(&cfg).unwrap();
        for p in &out.paths {
            assert!(p.h.iter().all(|h| (h - 0.7).abs() < 1e-15));
        }
    }

    #[test]
    fn reproducible_for_fixed_seed() {
        let ar = TvArSpec::constant(ArRegime::ar1(0.0, 0.3));
        let mut cfg = SimConfig::new(ar, garch_const(0.1, 0.05, 0.1, 0.8), 100, 8, 42);
        cfg.shocks = ShockDist::StudentT { nu: 7.0 };
        let a = simulate(&cfg).unwrap();
        let b = simulate(&cfg).unwrap();
        for (p, q) in a.paths.iter().zip(&b.paths) {
            assert_eq!(p.y, q.y);
            assert_eq!(p.h, q.h);
        }
        let single = simulate_path(&cfg, 5).unwrap();
        assert_eq!(single.y, a.paths[5].y);
        cfg.seed = 43;
        let c = simulate(&cfg).unwrap();
        assert_ne!(a.paths[0].y, c.paths[0].y);
    }

    #[test]
    fn path_matches_closed_form_solution() {
        let sched = BreakSchedule::from_offsets(vec![20, 60]).unwrap();
        let garch = TvGarchSpec::new(
            vec![
                GarchRegime::new(0.1, 0.05, 0.1, 0.8),
                GarchRegime::new(0.2, 0.1, 0.0, 0.6),
                GarchRegime::new(0.05, 0.02, 0.08, 0.9),
            ],
            sched,
        )
        .unwrap();
        let ar = TvArSpec::constant(ArRegime::ar1(0.0, 0.2));
        let cfg = SimConfig::new(ar, garch.clone(), 120, 2, 7);
        let out = simulate(&cfg).unwrap();
        for p in &out.paths {
            let k = 100;
            let n = p.len();
            let h0 = p.h[n - 1 - k];
            let v = &p.v[n - 1 - k..n - 1];
            let signs = &p.neg[n - 1 - k..n - 1];
            let s = garch_general_solution(&garch, k, h0, v, signs).unwrap();
            assert!((s.total - p.h[n - 1]).abs() <= 1e-10 * p.h[n - 1]);
        }
    }

    #[test]
    fn ar1_lag_one_autocorrelation() {
        let ar = TvArSpec::constant(ArRegime::ar1(0.0, 0.9));
        let cfg = SimConfig::new(ar, garch_const(1.0, 0.0, 0.0, 0.0), 1_000_000, 1, 3);
        let out = simulate(&cfg).unwrap();
        let y = &out.paths[0].y;
        let r = correlation(&y[1..], &y[..y.len() - 1]);
        assert!((r - 0.9).abs() < 0.003, "{r}");
    }

    #[test]
    fn shocks_have_unit_variance() {
        for dist in [ShockDist::Normal, ShockDist::StudentT { nu: 8.0 }] {
            let ar = TvArSpec::constant(ArRegime::ar1(0.0, 0.0));
            let mut cfg = SimConfig::new(ar, garch_const(1.0, 0.0, 0.0, 0.0), 200_000, 1, 11);
            cfg.shocks = dist;
            let out = simulate(&cfg).unwrap();
            let (v, se) = sample_variance(&out.paths[0].eps);
            assert!((v - 1.0).abs() < 3.0 * se, "{dist:?}: {v} ± {se}");
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        let ar = TvArSpec::constant(ArRegime::ar1(0.0, 0.0));
        let mut cfg = SimConfig::new(ar, garch_const(1.0, 0.0, 0.0, 0.0), 10, 1, 0);
        cfg.shocks = ShockDist::StudentT { nu: 4.0 };
        assert!(simulate(&cfg).is_err());
        cfg.shocks = ShockDist::Normal;
        cfg.path_count = 0;
        assert!(simulate(&cfg).is_err());
    }

    #[test]
    fn estimate_errors_beyond_path() {
        let ar = TvArSpec::constant(ArRegime::ar1(0.0, 0.0));
        let cfg = SimConfig::new(ar, garch_const(1.0, 0.0, 0.0, 0.0), 10, 4, 0);
        let out = simulate(&cfg).unwrap();
        assert!(estimate_moments(&out, MomentTarget::Mean, &[10]).is_err());
        assert!(estimate_moments(&out, MomentTarget::Acf(3), &[7]).is_err());
        assert_eq!(estimate_moments(&out, MomentTarget::Mean, &[9]).unwrap().len(), 1);
    }

    #[test]
    fn zero_drift_mean_is_zero() {
        let ar = TvArSpec::constant(ArRegime::ar1(0.0, 0.5));
        let mut cfg = SimConfig::new(ar, garch_const(0.1, 0.05, 0.1, 0.8), 5, 20_000, 9);
        cfg.burn_in = 200;
        let out = simulate(&cfg).unwrap();
        let e = estimate_moments(&out, MomentTarget::Mean, &[0, 4]).unwrap();
        for est in e {
            assert!(est.value.abs() < 3.0 * est.se, "{est:?}");
        }
    }
}
