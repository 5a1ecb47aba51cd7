//! Small statistics helpers shared by the Monte Carlo checks.

use serde::Serialize;

/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.959963984540054;

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample mean and its standard error (unbiased variance).
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let m = mean(xs);
    if n == 1 {
        return (m, 0.0);
    }
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64;
    (m, (var / n as f64).sqrt())
}

pub fn rms(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    (xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64).sqrt()
}

/// Wilson 95% score interval for a binomial proportion.
pub fn wilson_interval(successes: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = successes as f64 / nf;
    let z2 = Z_95 * Z_95;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = Z_95 * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    let lo = if successes == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if successes == n { 1.0 } else { (center + half).min(1.0) };
    (lo, hi)
}

/// Fixed-width histogram over `[lo, hi]`.
#[derive(Debug, Clone, Serialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn build(values: impl IntoIterator<Item = f64>, lo: f64, hi: f64, bins: usize) -> Self {
        let mut counts = vec![0usize; bins.max(1)];
        let width = (hi - lo) / counts.len() as f64;
        for v in values {
            if !v.is_finite() || v < lo || v > hi || width <= 0.0 {
                continue;
            }
            let k = (((v - lo) / width) as usize).min(counts.len() - 1);
            counts[k] += 1;
        }
        Histogram { lo, hi, counts }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_zero_successes() {
        let (lo, hi) = wilson_interval(0, 10_000);
        assert_eq!(lo, 0.0);
        assert!(hi < 5e-4, "upper bound {hi}");
        let (lo1, hi1) = wilson_interval(10_000, 10_000);
        assert!(lo1 > 0.999);
        assert_eq!(hi1, 1.0);
    }

    #[test]
    fn wilson_contains_p_hat() {
        for k in [0usize, 1, 5, 500, 999, 1000] {
            let (lo, hi) = wilson_interval(k, 1000);
            let p = k as f64 / 1000.0;
            assert!(lo <= p && p <= hi, "k = {k}");
        }
    }

    #[test]
    fn mean_se() {
        let (m, se) = mean_and_se(&[1.0, 1.0, 1.0]);
        assert_eq!(m, 1.0);
        assert_eq!(se, 0.0);
        let (m2, se2) = mean_and_se(&[0.0, 2.0]);
        assert_eq!(m2, 1.0);
        assert!((se2 - 1.0).abs() < 1e-12);
    }
}
