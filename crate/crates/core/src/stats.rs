//! Small statistics helpers shared by the curve and report code.

/// 97.5% standard normal quantile used for two-sided 95% intervals.
pub const Z_95: f64 = 1.96;

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n − 1 denominator). Zero for fewer than two values.
pub fn sample_sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let ss: f64 = xs.iter().map(|x| (x - m) * (x - m)).sum();
    (ss / (xs.len() - 1) as f64).sqrt()
}

/// Normal-approximation interval `mean ± 1.96·sd/√n`.
pub fn normal_ci(xs: &[f64]) -> (f64, f64, f64) {
    let m = mean(xs);
    let half = Z_95 * sample_sd(xs) / (xs.len() as f64).sqrt();
    (m, m - half, m + half)
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_ci(successes: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let n = n as f64;
    let p = successes as f64 / n;
    let z2 = Z_95 * Z_95;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = Z_95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let lo = if successes == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if successes as f64 == n { 1.0 } else { (center + half).min(1.0) };
    (lo, hi)
}

pub fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ci_of_two_values() {
        let (m, lo, hi) = normal_ci(&[0.6, 0.8]);
        assert!((m - 0.7).abs() < 1e-12);
        let half = 1.96 * (0.02f64).sqrt() / 2f64.sqrt();
        assert!((hi - m - half).abs() < 1e-12);
        assert!((m - lo - 0.196).abs() < 1e-3);
    }

    #[test]
    fn wilson_all_successes() {
        let (lo, hi) = wilson_ci(10, 10);
        assert_eq!(hi, 1.0);
        assert!(lo > 0.6 && lo < 0.8);
    }
}
