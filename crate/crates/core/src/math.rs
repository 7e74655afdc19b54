//! Log-domain weight arithmetic.
//!
//! Weights live in log space everywhere in this crate; these helpers keep
//! normalization and averaging stable when likelihoods span hundreds of
//! orders of magnitude.

/// `ln(1e-300)`: the floor below which a log-quantity is treated as
/// underflowed. Weight vectors whose best entry sits under this line are
/// flagged as degenerate, and model probabilities are clamped here so a
/// suppressed model can still be revived.
pub const LOG_UNDERFLOW_FLOOR: f64 = -690.7755278982137;

/// `log(Σ exp(x_i))`, shifted by the maximum for stability.
///
/// An empty slice and an all-`-∞` slice both yield `-∞`.
pub fn logsumexp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = xs.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

/// Normalize log-weights in place so that `logsumexp(xs) == 0`.
///
/// Returns the subtracted log-normalizer. An all-`-∞` slice is left
/// unchanged and reported as `-∞`; callers decide how to fall back.
pub fn normalize_log(xs: &mut [f64]) -> f64 {
    let z = logsumexp(xs);
    if z.is_finite() {
        for x in xs.iter_mut() {
            *x -= z;
        }
    }
    z
}

/// Materialize linear-domain weights from normalized log-weights.
pub fn exp_weights(log_weights: &[f64]) -> Vec<f64> {
    log_weights.iter().map(|&lw| lw.exp()).collect()
}

/// Render a float with 17 significant digits — enough to round-trip any
/// `f64` bit pattern through text.
pub fn float17(v: f64) -> String {
    format!("{v:.16e}")
}
