//! Small numeric helpers used across the crate.

/// ln(2π)
pub const LN_TWO_PI: f64 = 1.837877066409345483560659472811;

/// Numerically stable log(Σ exp(x_i)).
///
/// Returns -inf for an empty slice.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        // All -inf (or empty): the shifted sum would be NaN.
        return max;
    }
    let sum: f64 = values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Log-density of a univariate normal N(mean, var) at x.
pub fn normal_log_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let diff = x - mean;
    -0.5 * (LN_TWO_PI + var.ln()) - diff * diff / (2.0 * var)
}

/// KL(N(m1, v1) || N(m2, v2)) for univariate Gaussians (variances, not stds).
pub fn gaussian_kl_1d(m1: f64, v1: f64, m2: f64, v2: f64) -> f64 {
    0.5 * (v1 / v2 + (m2 - m1) * (m2 - m1) / v2 - 1.0 + (v2 / v1).ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn log_sum_exp_matches_naive_in_safe_range() {
        let xs: [f64; 3] = [-1.0, 0.3, 2.0];
        let naive: f64 = xs.iter().map(|x| x.exp()).sum::<f64>().ln();
        assert_relative_eq!(log_sum_exp(&xs), naive, max_relative = 1e-14);
    }

    #[test]
    fn log_sum_exp_survives_large_offsets() {
        let xs = [-100_000.0, -100_001.0];
        let expected = -100_000.0 + (1.0 + (-1.0f64).exp()).ln();
        assert_relative_eq!(log_sum_exp(&xs), expected, max_relative = 1e-14);
    }

    #[test]
    fn gaussian_kl_zero_for_identical() {
        assert_eq!(gaussian_kl_1d(0.3, 1.7, 0.3, 1.7), 0.0);
    }
}
