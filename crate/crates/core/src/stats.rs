//! Small statistical helpers shared by the Monte Carlo summaries.

use statrs::distribution::{Beta, ContinuousCDF};

/// Sample mean and standard error of the mean.
pub fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Exact one-sided upper confidence bound for a binomial proportion.
pub fn clopper_pearson_upper(successes: u64, trials: u64, confidence: f64) -> f64 {
    if trials == 0 || successes >= trials {
        return 1.0;
    }
    let dist = Beta::new(successes as f64 + 1.0, (trials - successes) as f64)
        .expect("positive Beta parameters");
    dist.inverse_cdf(confidence)
}

/// Ordinary least squares `y ≈ a + b x`; returns `(b, a, R²)`.
pub fn least_squares(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let r2 = if sxx > 0.0 && syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    (slope, my - slope * mx, r2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clopper_pearson_values() {
        assert_eq!(clopper_pearson_upper(5, 5, 0.99), 1.0);
        // 1 − 0.01^(1/n) for zero successes
        let u = clopper_pearson_upper(0, 100, 0.99);
        assert!((u - (1.0 - 0.01f64.powf(0.01))).abs() < 1e-10);
        assert!(clopper_pearson_upper(10, 100, 0.99) > 0.1);
    }

    #[test]
    fn least_squares_on_a_line() {
        let (b, a, r2) = least_squares(&[1.0, 2.0, 3.0], &[3.0, 5.0, 7.0]);
        assert!((b - 2.0).abs() < 1e-12 && (a - 1.0).abs() < 1e-12 && (r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mean_and_se_of_constant() {
        assert_eq!(mean_and_se(&[2.0, 2.0, 2.0]), (2.0, 0.0));
        assert_eq!(mean_and_se(&[1.0, 3.0]), (2.0, 1.0));
    }
}
