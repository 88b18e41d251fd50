//! Small numeric helpers shared across modules.

use std::f64::consts::{PI, SQRT_2};

/// Compensated summation (Neumaier's variant, which survives additions
/// larger than the running sum). Order-insensitive to ~1e-9 for the
/// vector sizes used here.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Compensated sum of a slice.
pub fn ksum(xs: &[f64]) -> f64 {
    let mut acc = KahanSum::new();
    for &x in xs {
        acc.add(x);
    }
    acc.value()
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    ksum(xs) / xs.len() as f64
}

/// Sample variance with divisor `n - 1`.
pub fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let mut acc = KahanSum::new();
    for &x in xs {
        acc.add((x - m) * (x - m));
    }
    acc.value() / (n - 1) as f64
}

pub fn sample_sd(xs: &[f64]) -> f64 {
    sample_variance(xs).sqrt()
}

/// log(sum(exp(xs))) guarded against overflow; -inf for an empty or
/// all -inf input.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !hi.is_finite() {
        return hi;
    }
    let mut acc = KahanSum::new();
    for &x in xs {
        acc.add((x - hi).exp());
    }
    hi + acc.value().ln()
}

/// Standard normal density.
pub fn norm_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * PI).sqrt()
}

/// Log of the normal density with mean `m` and variance `v`.
pub fn norm_log_pdf(x: f64, m: f64, v: f64) -> f64 {
    let d = x - m;
    -0.5 * (d * d / v + v.ln() + (2.0 * PI).ln())
}

/// Standard normal CDF via the complementary error function.
pub fn norm_cdf(z: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-z / SQRT_2)
}

/// Upper-tail chi-square quantile with `df` degrees of freedom. `alpha <= 0`
/// yields infinity (the whole-space region).
pub fn chi2_quantile(one_minus_alpha: f64, df: usize) -> f64 {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    if one_minus_alpha >= 1.0 {
        return f64::INFINITY;
    }
    if one_minus_alpha <= 0.0 {
        return 0.0;
    }
    ChiSquared::new(df as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(one_minus_alpha)
}

/// `n` equally spaced points covering [lo, hi] inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn kahan_handles_cancellation() {
        let xs = [1e16, 1.0, -1e16];
        assert_eq!(ksum(&xs), 1.0);
    }

    #[test]
    fn log_sum_exp_matches_direct() {
        let xs = [-1.0_f64, 0.5, 2.0];
        let direct: f64 = xs.iter().map(|x| x.exp()).sum::<f64>().ln();
        assert_relative_eq!(log_sum_exp(&xs), direct, max_relative = 1e-12);
    }

    #[test]
    fn log_sum_exp_survives_underflow() {
        let xs = [-800.0, -801.0];
        let expect = -800.0 + (1.0 + (-1.0f64).exp()).ln();
        assert_relative_eq!(log_sum_exp(&xs), expect, max_relative = 1e-12);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY]), f64::NEG_INFINITY);
    }

    #[test]
    fn norm_cdf_known_values() {
        assert_relative_eq!(norm_cdf(0.0), 0.5, max_relative = 1e-14);
        assert_relative_eq!(norm_cdf(1.0), 0.841344746068543, max_relative = 1e-9);
        assert_relative_eq!(norm_cdf(-1.96), 0.024997895148220435, max_relative = 1e-7);
    }

    #[test]
    fn chi2_quantiles_match_tables() {
        assert_relative_eq!(chi2_quantile(0.95, 2), 5.991464547107979, max_relative = 1e-9);
        assert_relative_eq!(chi2_quantile(0.95, 1), 3.841458820694124, max_relative = 1e-9);
        assert!(chi2_quantile(1.0, 2).is_infinite());
    }

    #[test]
    fn linspace_covers_endpoints() {
        let g = linspace(-1.0, 3.0, 5);
        assert_eq!(g, vec![-1.0, 0.0, 1.0, 2.0, 3.0]);
    }
}