//! Variance-break scan by binary segmentation on centered cumulative sums of squares.
//!
//! For a segment of length `T` with demeaned values `x`, `C_k = Σ_{t<k} x_t²` and
//! the statistic is `max_k |C_k - (k/T) C_T| / (√T ω̂)`, where `ω̂²` is the sample
//! variance of `x²`. Under a constant variance it converges to the supremum of a
//! Brownian bridge, so p-values come from the Kolmogorov distribution. Inside a
//! sub-segment of length `n` the statistic is multiplied by `√(n/T_full)`.

use serde::Serialize;

use crate::error::{Error, Result};
pub use crate::numeric::kolmogorov_sf;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BreakCandidate {
    /// First observation of the new variance regime.
    pub index: usize,
    pub statistic: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Segment {
    pub start: usize,
    /// Exclusive.
    pub end: usize,
    pub mean: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BreakScanResult {
    pub breaks: Vec<BreakCandidate>,
    pub segments: Vec<Segment>,
    pub level: f64,
    pub min_segment: usize,
}

impl BreakScanResult {
    pub fn indices(&self) -> Vec<usize> {
        self.breaks.iter().map(|b| b.index).collect()
    }
}

fn moments(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    (m, x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n)
}

/// Test statistic over admissible split points of `x`, and the split point
/// maximizing the Gaussian likelihood of a single variance change.
fn cusum_sq(x: &[f64], min_segment: usize) -> Result<(usize, f64)> {
    let (mean, var) = moments(x);
    let sq: Vec<f64> = x.iter().map(|v| (v - mean) * (v - mean)).collect();
    let (_, omega2) = moments(&sq);
    if !(var > 0.0) || !(omega2 > 1e-300) {
        return Err(Error::Degenerate("zero variance segment".into()));
    }
    let n = x.len();
    let t = n as f64;
    let total: f64 = sq.iter().sum();
    let mut c = 0.0;
    let mut sup = 0.0f64;
    let mut best = (0, f64::NEG_INFINITY);
    for (k, s) in sq.iter().enumerate() {
        // c is C_k here: the sum over the first k observations
        if k >= min_segment && n - k >= min_segment {
            sup = sup.max((c - k as f64 / t * total).abs());
            let (left, right) = (c / k as f64, (total - c) / (n - k) as f64);
            if left > 0.0 && right > 0.0 {
                let ll = -(k as f64) * left.ln() - (n - k) as f64 * right.ln();
                if ll > best.1 {
                    best = (k, ll);
                }
            }
        }
        c += s;
    }
    Ok((best.0, sup / (t.sqrt() * omega2.sqrt())))
}

fn split(x: &[f64], offset: usize, min_segment: usize, level: f64, total: usize) -> Vec<BreakCandidate> {
    if x.len() < 2 * min_segment {
        return vec![];
    }
    let Ok((k, stat)) = cusum_sq(x, min_segment) else {
        return vec![];
    };
    // the raw sum is scaled by the full-sample length, so shorter segments face
    // a proportionally higher bar and false alarms stay controlled over the recursion
    let stat = stat * (x.len() as f64 / total as f64).sqrt();
    let p = kolmogorov_sf(stat);
    if p >= level {
        return vec![];
    }
    let (left, right) = rayon::join(
        || split(&x[..k], offset, min_segment, level, total),
        || split(&x[k..], offset + k, min_segment, level, total),
    );
    let mut out = left;
    out.push(BreakCandidate {
        index: offset + k,
        statistic: stat,
        p_value: p,
    });
    out.extend(right);
    out
}

/// Segment summaries for given break indices (e.g. user-supplied dates).
pub fn segments_from_breaks(returns: &[f64], breaks: &[usize]) -> Result<Vec<Segment>> {
    let mut bounds = vec![0];
    bounds.extend_from_slice(breaks);
    bounds.push(returns.len());
    if bounds.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidSchedule(format!("break indices must increase inside (0, {})", returns.len())));
    }
    Ok(bounds
        .windows(2)
        .map(|w| {
            let (mean, variance) = moments(&returns[w[0]..w[1]]);
            Segment {
                start: w[0],
                end: w[1],
                mean,
                variance,
            }
        })
        .collect())
}

/// Binary segmentation at significance `level`; every segment keeps at least
/// `min_segment` observations.
pub fn scan_variance_breaks(returns: &[f64], min_segment: usize, level: f64) -> Result<BreakScanResult> {
    if min_segment == 0 {
        return Err(Error::Domain("minimum segment must be positive".into()));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Domain(format!("level must lie in (0, 1), got {level}")));
    }
    if returns.len() < 2 * min_segment {
        return Err(Error::Degenerate(format!(
            "{} observations are fewer than twice the minimum segment {min_segment}",
            returns.len()
        )));
    }
    if let Some(i) = returns.iter().position(|r| !r.is_finite()) {
        return Err(Error::Degenerate(format!("non-finite return at index {i}")));
    }
    // surfaces the zero-variance error for the full series
    cusum_sq(returns, min_segment)?;
    let breaks = split(returns, 0, min_segment, level, returns.len());
    let idx: Vec<usize> = breaks.iter().map(|b| b.index).collect();
    Ok(BreakScanResult {
        segments: segments_from_breaks(returns, &idx)?,
        breaks,
        level,
        min_segment,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn normal(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..n).map(|_| StandardNormal.sample(rng)).collect()
    }

    #[test]
    fn kolmogorov_reference_points() {
        // classical critical values of the Kolmogorov distribution
        assert!((kolmogorov_sf(1.358) - 0.05).abs() < 5e-4);
        assert!((kolmogorov_sf(1.224) - 0.10).abs() < 5e-4);
        assert!((kolmogorov_sf(1.628) - 0.01).abs() < 5e-4);
        assert_eq!(kolmogorov_sf(0.0), 1.0);
    }

    #[test]
    fn size_under_iid_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let clean = (0..1000)
            .filter(|_| scan_variance_breaks(&normal(2000, &mut rng), 50, 0.05).unwrap().breaks.is_empty())
            .count();
        assert!(clean >= 900, "{clean}");
    }

    #[test]
    fn finds_midpoint_variance_shift() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut hits = 0;
        for _ in 0..500 {
            let mut x = normal(1000, &mut rng);
            for v in &mut x[500..] {
                *v *= 2.0;
            }
            let r = scan_variance_breaks(&x, 50, 0.05).unwrap();
            if r.breaks.len() == 1 && (r.breaks[0].index as i64 - 500).abs() <= 30 {
                hits += 1;
            }
        }
        assert!(hits >= 475, "{hits}/500");
    }

    #[test]
    fn constant_series_is_degenerate() {
        assert!(matches!(scan_variance_breaks(&[1.5; 500], 50, 0.05), Err(Error::Degenerate(_))));
        assert!(scan_variance_breaks(&[1.0, 2.0], 50, 0.05).is_err());
    }

    #[test]
    fn rescanning_a_segment_finds_nothing() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut x = normal(3000, &mut rng);
        for v in &mut x[1000..2000] {
            *v *= 3.0;
        }
        let r = scan_variance_breaks(&x, 100, 0.05).unwrap();
        assert!(!r.breaks.is_empty());
        for s in &r.segments {
            if s.end - s.start >= 200 {
                let again = scan_variance_breaks(&x[s.start..s.end], 100, 0.05).unwrap();
                assert!(again.breaks.is_empty(), "{s:?}");
            }
        }
        assert!(r.segments.iter().all(|s| s.end - s.start >= 100));
    }

    #[test]
    fn shuffling_keeps_size() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (mut before, mut after) = (0, 0);
        for _ in 0..300 {
            let mut x = normal(1000, &mut rng);
            before += scan_variance_breaks(&x, 50, 0.05).unwrap().breaks.len();
            x.shuffle(&mut rng);
            after += scan_variance_breaks(&x, 50, 0.05).unwrap().breaks.len();
        }
        // both counts estimate the same rate of about 0.05 per series
        assert!(after <= before + 15 && after <= 30, "{before} {after}");
    }

    #[test]
    fn user_breaks_give_segments() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let s = segments_from_breaks(&x, &[4]).unwrap();
        assert_eq!((s[0].start, s[0].end, s[1].start), (0, 4, 4));
        assert!((s[0].mean - 1.5).abs() < 1e-15 && (s[0].variance - 1.25).abs() < 1e-15);
        assert!(segments_from_breaks(&x, &[4, 4]).is_err());
        assert!(segments_from_breaks(&x, &[10]).is_err());
    }
}
