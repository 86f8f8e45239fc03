//! Small descriptive-statistics helpers shared across modules.

/// Empirical quantile with linear interpolation between order statistics
/// (the `h = (n - 1) p` convention). `sorted` must be ascending and non-empty.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

pub fn quantiles(values: &[f64], probs: &[f64]) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    probs.iter().map(|&p| quantile_sorted(&sorted, p)).collect()
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Unbiased sample variance.
pub fn variance(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(values);
    values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_point_median_is_midpoint() {
        assert_eq!(quantiles(&[0.0, 2.0], &[0.5]), vec![1.0]);
        assert_eq!(quantiles(&[2.0, 0.0], &[0.0, 1.0]), vec![0.0, 2.0]);
    }

    #[test]
    fn interpolates() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantiles(&v, &[0.25, 0.5, 0.9]), vec![2.0, 3.0, 4.6]);
    }
}
