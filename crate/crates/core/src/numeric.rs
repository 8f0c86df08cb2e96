//! Small numerical helpers shared across the engines.

use statrs::distribution::{ChiSquared, ContinuousCDF};

/// Neumaier compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

impl std::iter::FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = Self::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

/// `1 + c + ... + c^(n-1)`, exact at `c == 1`.
pub fn geometric_sum(c: f64, n: u64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    if (c - 1.0).abs() < 1e-12 {
        return n as f64;
    }
    (1.0 - c.powf(n as f64)) / (1.0 - c)
}

/// Upper tail `P(X > x)` of a chi-square with `df` degrees of freedom.
pub fn chi2_sf(x: f64, df: usize) -> f64 {
    if df == 0 {
        return if x > 0.0 { 0.0 } else { 1.0 };
    }
    if x <= 0.0 {
        return 1.0;
    }
    let dist = ChiSquared::new(df as f64).expect("positive df");
    dist.sf(x).clamp(0.0, 1.0)
}

/// `P(sup |B(r)| > x)` for a standard Brownian bridge.
pub fn kolmogorov_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < 0.3 {
        // the alternating series converges slowly here; the tail is ~1
        return 1.0;
    }
    let mut acc = 0.0;
    for j in 1..=100 {
        let j = j as f64;
        let term = (-2.0 * j * j * x * x).exp();
        acc += if (j as i64) % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * acc).clamp(0.0, 1.0)
}

/// Sample mean and the standard error of the mean.
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().copied().collect::<CompensatedSum>().value() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let ss = xs
        .iter()
        .map(|x| (x - mean) * (x - mean))
        .collect::<CompensatedSum>()
        .value();
    (mean, (ss / (n - 1.0) / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut s = CompensatedSum::new();
        s.add(1e16);
        for _ in 0..10 {
            s.add(1.0);
        }
        s.add(-1e16);
        assert_eq!(s.value(), 10.0);
    }

    #[test]
    fn geometric_sum_cases() {
        assert!((geometric_sum(0.5, 3) - 1.75).abs() < 1e-15);
        assert_eq!(geometric_sum(1.0, 7), 7.0);
        assert_eq!(geometric_sum(0.9, 0), 0.0);
    }

    #[test]
    fn chi2_tail_reference_values() {
        // 95% quantile of chi2(5) is 11.0705
        assert!((chi2_sf(11.0705, 5) - 0.05).abs() < 1e-4);
        assert_eq!(chi2_sf(0.0, 5), 1.0);
    }

    #[test]
    fn kolmogorov_critical_value() {
        assert!((kolmogorov_sf(1.358) - 0.05).abs() < 1e-3);
        assert!((kolmogorov_sf(1.628) - 0.01).abs() < 1e-3);
    }
}
