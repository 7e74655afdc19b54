//! Bootstrap particle filter: propagate through the transition prior,
//! reweight by the measurement likelihood, resample.
//!
//! With the transition prior as proposal the incremental importance weight
//! reduces to the likelihood alone, so the filter never needs the transition
//! density — only the ability to sample it.

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dist::NoiseModel;
use crate::error::{Error, Result};
use crate::math::{logsumexp, normalize_log, LOG_UNDERFLOW_FLOOR};
use crate::model::StateSpaceModel;
use crate::rng::RngStream;

/// A weighted particle cloud with normalized log-weights
/// (`logsumexp(log_weights) == 0`).
#[derive(Debug, Clone)]
pub struct ParticleSet {
    particles: Vec<DVector<f64>>,
    log_weights: Vec<f64>,
}

impl ParticleSet {
    /// Build a uniformly weighted set.
    pub fn from_particles(particles: Vec<DVector<f64>>) -> Result<Self> {
        let n = particles.len();
        if n == 0 {
            return Err(Error::param("particles", "need at least one particle"));
        }
        let lw = vec![-(n as f64).ln(); n];
        ParticleSet::with_log_weights(particles, lw)
    }

    /// Build a set from explicit log-weights; the weights are normalized on
    /// entry.
    pub fn with_log_weights(particles: Vec<DVector<f64>>, mut log_weights: Vec<f64>) -> Result<Self> {
        if particles.is_empty() {
            return Err(Error::param("particles", "need at least one particle"));
        }
        if particles.len() != log_weights.len() {
            return Err(Error::LengthMismatch(format!(
                "{} particles vs {} weights",
                particles.len(),
                log_weights.len()
            )));
        }
        let dim = particles[0].len();
        if particles.iter().any(|p| p.len() != dim) {
            return Err(Error::DimensionMismatch(
                "particles must share one state dimension".into(),
            ));
        }
        if log_weights.iter().any(|w| w.is_nan() || *w == f64::INFINITY) {
            return Err(Error::param("log_weights", "must be finite or -inf"));
        }
        if normalize_log(&mut log_weights) == f64::NEG_INFINITY {
            return Err(Error::param("log_weights", "all weights are zero"));
        }
        Ok(ParticleSet {
            particles,
            log_weights,
        })
    }

    /// Build a set from linear-domain weights (tests and oracles).
    pub fn with_linear_weights(particles: Vec<DVector<f64>>, weights: &[f64]) -> Result<Self> {
        if weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(Error::param("weights", "must be finite and >= 0"));
        }
        let lw = weights.iter().map(|w| w.ln()).collect();
        ParticleSet::with_log_weights(particles, lw)
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn state_dim(&self) -> usize {
        self.particles[0].len()
    }

    pub fn particles(&self) -> &[DVector<f64>] {
        &self.particles
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    /// Linear-domain weights, materialized from the log representation.
    pub fn linear_weights(&self) -> Vec<f64> {
        self.log_weights.iter().map(|lw| lw.exp()).collect()
    }

    pub(crate) fn set_normalized_log_weights(&mut self, mut log_weights: Vec<f64>) {
        debug_assert_eq!(log_weights.len(), self.particles.len());
        normalize_log(&mut log_weights);
        self.log_weights = log_weights;
    }
}

/// How to redraw the particle population from its weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ResamplingScheme {
    /// Independent categorical draws.
    Multinomial,
    /// Deterministic integer allocation `⌊N·w⌋`, multinomial on the
    /// fractional remainder.
    Residual,
    /// One uniform offset, then a regular grid through the cumulative
    /// weights.
    Systematic,
}

/// Per-step filter diagnostics.
#[derive(Debug, Clone, Copy)]
pub struct StepDiag {
    /// Set when the best pre-normalization log-weight fell under the
    /// underflow floor (or every likelihood was zero and the prior weights
    /// were kept).
    pub degenerate: bool,
    /// Effective sample size after the weight update.
    pub ess: f64,
    /// Whether resampling ran this step.
    pub resampled: bool,
}

/// Advance every particle through the transition prior. Weights are left
/// untouched.
pub fn propagate(ps: &mut ParticleSet, ssm: &dyn StateSpaceModel, k: usize, rng: &mut RngStream) {
    for p in &mut ps.particles {
        *p = ssm.transition_sample(k, p, rng);
    }
}

/// Multiply the weights by a per-particle likelihood and renormalize.
///
/// Returns `true` when the update degenerated: if every likelihood is zero
/// the prior weights are kept unchanged; if the best pre-normalization
/// log-weight merely sits under the underflow floor the update still applies
/// but is flagged.
pub fn reweight<F>(ps: &mut ParticleSet, loglik: F) -> bool
where
    F: Fn(&DVector<f64>) -> f64,
{
    let updated: Vec<f64> = ps
        .particles
        .iter()
        .zip(&ps.log_weights)
        .map(|(p, &lw)| lw + loglik(p))
        .collect();
    let max = updated.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        // No evidence at all; keep the prior weights rather than crash.
        return true;
    }
    ps.set_normalized_log_weights(updated);
    max < LOG_UNDERFLOW_FLOOR
}

/// Effective sample size `1/Σ w_i²`, computed from log-weights.
pub fn ess(ps: &ParticleSet) -> f64 {
    let doubled: Vec<f64> = ps.log_weights.iter().map(|lw| 2.0 * lw).collect();
    (-logsumexp(&doubled)).exp()
}

/// Weighted posterior mean of the particle cloud.
pub fn posterior_mean(ps: &ParticleSet) -> DVector<f64> {
    let mut acc = DVector::zeros(ps.state_dim());
    for (p, &lw) in ps.particles.iter().zip(&ps.log_weights) {
        acc += p * lw.exp();
    }
    acc
}

/// Draw per-particle copy counts for `n_out` output particles.
///
/// Exposed separately from [`resample`] so the statistical contract
/// (unbiasedness, residual integer parts) can be tested directly.
pub fn resample_counts(
    weights: &[f64],
    scheme: ResamplingScheme,
    n_out: usize,
    rng: &mut RngStream,
) -> Vec<usize> {
    match scheme {
        ResamplingScheme::Multinomial => multinomial_counts(weights, n_out, rng),
        ResamplingScheme::Systematic => {
            let mut counts = vec![0usize; weights.len()];
            let step = 1.0 / n_out as f64;
            let u0 = rng.gen::<f64>() * step;
            let mut i = 0;
            let mut cum = weights[0];
            for j in 0..n_out {
                let point = u0 + j as f64 * step;
                while cum < point && i + 1 < weights.len() {
                    i += 1;
                    cum += weights[i];
                }
                counts[i] += 1;
            }
            counts
        }
        ResamplingScheme::Residual => {
            let mut counts: Vec<usize> = weights
                .iter()
                .map(|w| (n_out as f64 * w).floor() as usize)
                .collect();
            let allocated: usize = counts.iter().sum();
            let remainder = n_out - allocated;
            if remainder > 0 {
                let residuals: Vec<f64> = weights
                    .iter()
                    .zip(&counts)
                    .map(|(w, &c)| (n_out as f64 * w - c as f64).max(0.0))
                    .collect();
                let total: f64 = residuals.iter().sum();
                let residual_weights: Vec<f64> = residuals.iter().map(|r| r / total).collect();
                for (c, extra) in counts
                    .iter_mut()
                    .zip(multinomial_counts(&residual_weights, remainder, rng))
                {
                    *c += extra;
                }
            }
            counts
        }
    }
}

fn multinomial_counts(weights: &[f64], n_draws: usize, rng: &mut RngStream) -> Vec<usize> {
    let mut cum = Vec::with_capacity(weights.len());
    let mut acc = 0.0;
    for w in weights {
        acc += w;
        cum.push(acc);
    }
    let mut counts = vec![0usize; weights.len()];
    for _ in 0..n_draws {
        let u = rng.gen::<f64>() * acc;
        // First bucket whose cumulative weight exceeds u; the min() guards
        // the roundoff case u ≈ acc.
        let idx = cum.partition_point(|&c| c <= u).min(weights.len() - 1);
        counts[idx] += 1;
    }
    counts
}

/// Replace the population with an equally weighted redraw of itself.
pub fn resample(ps: &mut ParticleSet, scheme: ResamplingScheme, rng: &mut RngStream) {
    let n = ps.len();
    let weights = ps.linear_weights();
    let counts = resample_counts(&weights, scheme, n, rng);
    let mut next = Vec::with_capacity(n);
    for (particle, &count) in ps.particles.iter().zip(&counts) {
        for _ in 0..count {
            next.push(particle.clone());
        }
    }
    ps.particles = next;
    ps.log_weights = vec![-(n as f64).ln(); n];
}

/// One full filter iteration: propagate, reweight against the measurement,
/// estimate, resample.
///
/// The returned estimate is the weighted mean taken after the weight update
/// and before resampling. When `ess_floor` is `Some(f)`, resampling runs
/// only if the effective sample size drops below `f · N`; `None` resamples
/// unconditionally.
///
/// Panics if the measurement dimensions of `y`, `noise`, and `ssm` disagree.
#[allow(clippy::too_many_arguments)]
pub fn pf_step(
    ps: &mut ParticleSet,
    ssm: &dyn StateSpaceModel,
    k: usize,
    y: &DVector<f64>,
    noise: &NoiseModel,
    scheme: ResamplingScheme,
    ess_floor: Option<f64>,
    rng: &mut RngStream,
) -> (DVector<f64>, StepDiag) {
    assert_eq!(y.len(), ssm.meas_dim(), "measurement dimension mismatch");
    assert_eq!(noise.dim(), ssm.meas_dim(), "noise model dimension mismatch");

    propagate(ps, ssm, k, rng);
    let degenerate = reweight(ps, |p| {
        let residual = y - ssm.measurement_mean(k, p);
        noise.logpdf(&residual).expect("dimensions checked above")
    });
    let estimate = posterior_mean(ps);
    let ess_now = ess(ps);
    let do_resample = match ess_floor {
        None => true,
        Some(f) => ess_now < f * ps.len() as f64,
    };
    if do_resample {
        resample(ps, scheme, rng);
    }
    (
        estimate,
        StepDiag {
            degenerate,
            ess: ess_now,
            resampled: do_resample,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::GaussianParams;
    use crate::model::benchmark_transition_mean;
    use approx::assert_abs_diff_eq;
    use nalgebra::dvector;
    use proptest::prelude::*;

    /// Noise-free stand-in for the benchmark dynamics.
    struct DeterministicSsm;

    impl StateSpaceModel for DeterministicSsm {
        fn state_dim(&self) -> usize {
            1
        }
        fn meas_dim(&self) -> usize {
            1
        }
        fn transition_sample(&self, k: usize, x: &DVector<f64>, _: &mut RngStream) -> DVector<f64> {
            DVector::from_element(1, benchmark_transition_mean(k, x[0]))
        }
        fn measurement_mean(&self, _k: usize, x: &DVector<f64>) -> DVector<f64> {
            x.clone()
        }
    }

    fn scalar_set(values: &[f64], weights: &[f64]) -> ParticleSet {
        let particles = values.iter().map(|&v| dvector![v]).collect();
        ParticleSet::with_linear_weights(particles, weights).unwrap()
    }

    #[test]
    fn propagate_applies_the_transition_and_keeps_weights() {
        let mut ps = scalar_set(&[1.0], &[1.0]);
        let before = ps.log_weights().to_vec();
        propagate(&mut ps, &DeterministicSsm, 1, &mut RngStream::from_seed(0));
        assert_abs_diff_eq!(ps.particles()[0][0], 1.6253332335643043, epsilon = 1e-12);
        assert_eq!(ps.log_weights(), before.as_slice());
    }

    #[test]
    fn propagate_is_deterministic_under_seed() {
        let ssm = crate::model::make_benchmark_ssm(Default::default()).unwrap();
        let mut a = scalar_set(&[0.0, 1.0, 2.0], &[0.2, 0.3, 0.5]);
        let mut b = a.clone();
        propagate(&mut a, &ssm, 3, &mut RngStream::from_seed(21));
        propagate(&mut b, &ssm, 3, &mut RngStream::from_seed(21));
        assert_eq!(a.particles(), b.particles());
    }

    #[test]
    fn reweight_constant_likelihood_is_a_no_op() {
        let mut ps = scalar_set(&[0.0, 1.0], &[0.8, 0.2]);
        let before = ps.log_weights().to_vec();
        let degenerate = reweight(&mut ps, |_| 0.5f64.ln());
        assert!(!degenerate);
        for (a, b) in ps.log_weights().iter().zip(&before) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn reweight_equal_priors_take_the_likelihood_ratio() {
        let mut ps = scalar_set(&[0.0, 1.0], &[0.5, 0.5]);
        let liks = [0.4f64, 0.6f64];
        reweight(&mut ps, |p| liks[p[0] as usize].ln());
        let w = ps.linear_weights();
        assert_abs_diff_eq!(w[0], 0.4, epsilon = 1e-12);
        assert_abs_diff_eq!(w[1], 0.6, epsilon = 1e-12);
    }

    #[test]
    fn reweight_all_zero_likelihood_keeps_prior_and_flags() {
        let mut ps = scalar_set(&[0.0, 1.0], &[0.7, 0.3]);
        let before = ps.log_weights().to_vec();
        let degenerate = reweight(&mut ps, |_| f64::NEG_INFINITY);
        assert!(degenerate);
        assert_eq!(ps.log_weights(), before.as_slice());
    }

    #[test]
    fn reweight_flags_underflowed_updates_but_still_applies_them() {
        let mut ps = scalar_set(&[0.0, 1.0], &[0.5, 0.5]);
        let degenerate = reweight(&mut ps, |p| -800.0 + p[0]);
        assert!(degenerate);
        // Relative information survives in the log domain.
        let w = ps.linear_weights();
        assert!(w[1] > w[0]);
        assert_abs_diff_eq!(logsumexp(ps.log_weights()), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn ess_known_values() {
        let uniform = scalar_set(&[0.0; 200], &[1.0; 200]);
        assert_abs_diff_eq!(ess(&uniform), 200.0, epsilon = 1e-9);
        let point = scalar_set(&[0.0, 1.0, 2.0], &[1.0, 0.0, 0.0]);
        assert_abs_diff_eq!(ess(&point), 1.0, epsilon = 1e-12);
        let half = scalar_set(&[0.0, 1.0, 2.0, 3.0], &[0.5, 0.5, 0.0, 0.0]);
        assert_abs_diff_eq!(ess(&half), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn posterior_mean_known_values() {
        assert_abs_diff_eq!(
            posterior_mean(&scalar_set(&[1.0, 3.0], &[0.5, 0.5]))[0],
            2.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            posterior_mean(&scalar_set(&[4.2], &[1.0]))[0],
            4.2,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            posterior_mean(&scalar_set(&[0.0, 10.0], &[0.9, 0.1]))[0],
            1.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn residual_counts_exact_when_weights_divide_evenly() {
        let counts = resample_counts(
            &[0.5, 0.3, 0.2],
            ResamplingScheme::Residual,
            10,
            &mut RngStream::from_seed(1),
        );
        assert_eq!(counts, vec![5, 3, 2]);
    }

    #[test]
    fn degenerate_weight_vector_copies_the_single_survivor() {
        for scheme in [
            ResamplingScheme::Multinomial,
            ResamplingScheme::Residual,
            ResamplingScheme::Systematic,
        ] {
            let counts = resample_counts(&[1.0, 0.0], scheme, 5, &mut RngStream::from_seed(2));
            assert_eq!(counts, vec![5, 0], "{scheme:?}");
        }
    }

    #[test]
    fn residual_integer_parts_hold_on_every_draw() {
        let weights = [0.42, 0.31, 0.17, 0.1];
        let n_out = 7;
        let floors: Vec<usize> = weights.iter().map(|w| (n_out as f64 * w) as usize).collect();
        let mut rng = RngStream::from_seed(3);
        for _ in 0..500 {
            let counts = resample_counts(&weights, ResamplingScheme::Residual, n_out, &mut rng);
            assert_eq!(counts.iter().sum::<usize>(), n_out);
            for (c, f) in counts.iter().zip(&floors) {
                assert!(c >= f);
            }
        }
    }

    #[test]
    fn resample_resets_weights_to_uniform() {
        let mut ps = scalar_set(&[0.0, 1.0, 2.0], &[0.7, 0.2, 0.1]);
        resample(&mut ps, ResamplingScheme::Systematic, &mut RngStream::from_seed(4));
        assert_eq!(ps.len(), 3);
        for &lw in ps.log_weights() {
            assert_abs_diff_eq!(lw, -(3f64).ln(), epsilon = 1e-12);
        }
    }

    #[test]
    fn resampled_mean_converges_to_the_weighted_mean() {
        // Unbiasedness of the redraw, checked through the posterior mean.
        let ps = scalar_set(&[0.0, 1.0, 2.0, 5.0], &[0.4, 0.3, 0.2, 0.1]);
        let target = posterior_mean(&ps)[0];
        for scheme in [
            ResamplingScheme::Multinomial,
            ResamplingScheme::Residual,
            ResamplingScheme::Systematic,
        ] {
            let mut rng = RngStream::from_seed(5);
            let reps = 10_000;
            let mut acc = 0.0;
            for _ in 0..reps {
                let mut redrawn = ps.clone();
                resample(&mut redrawn, scheme, &mut rng);
                acc += posterior_mean(&redrawn)[0];
            }
            let avg = acc / reps as f64;
            assert!(
                (avg - target).abs() / target.abs() < 0.01,
                "{scheme:?}: {avg} vs {target}"
            );
        }
    }

    #[test]
    fn pf_step_returns_pre_resample_estimate_and_uniform_weights() {
        let ssm = DeterministicSsm;
        let noise = NoiseModel::gaussian("g", GaussianParams::scalar(0.0, 1.0).unwrap());
        let mut ps = scalar_set(&[1.0, 2.0], &[0.5, 0.5]);
        let y = dvector![1.8];

        // Oracle: run the pieces by hand on a copy.
        let mut manual = ps.clone();
        propagate(&mut manual, &ssm, 1, &mut RngStream::from_seed(6));
        reweight(&mut manual, |p| {
            noise.logpdf(&(&y - ssm.measurement_mean(1, p))).unwrap()
        });
        let expected = posterior_mean(&manual);

        let mut step_rng = RngStream::from_seed(6);
        let (estimate, diag) = pf_step(
            &mut ps,
            &ssm,
            1,
            &y,
            &noise,
            ResamplingScheme::Residual,
            None,
            &mut step_rng,
        );
        assert_abs_diff_eq!(estimate[0], expected[0], epsilon = 1e-12);
        assert!(diag.resampled);
        assert!(!diag.degenerate);
        for &lw in ps.log_weights() {
            assert_abs_diff_eq!(lw, -(2f64).ln(), epsilon = 1e-12);
        }
    }

    #[test]
    fn ess_floor_skips_resampling_when_weights_are_even() {
        let ssm = DeterministicSsm;
        let noise = NoiseModel::gaussian("g", GaussianParams::scalar(0.0, 10.0).unwrap());
        let mut ps = scalar_set(&[1.0, 1.0], &[0.5, 0.5]);
        let (_, diag) = pf_step(
            &mut ps,
            &ssm,
            1,
            &dvector![1.6],
            &noise,
            ResamplingScheme::Residual,
            Some(0.5),
            &mut RngStream::from_seed(7),
        );
        // Identical particles keep identical weights: ESS stays at N.
        assert!(!diag.resampled);
        assert_abs_diff_eq!(diag.ess, 2.0, epsilon = 1e-9);
    }

    proptest! {
        #[test]
        fn reweight_is_invariant_to_constant_likelihood_shifts(
            weights in proptest::collection::vec(1e-6f64..1.0, 2..20),
            logliks in proptest::collection::vec(-50.0f64..50.0, 20),
            shift in -500.0f64..500.0,
        ) {
            let n = weights.len();
            let values: Vec<f64> = (0..n).map(|i| i as f64).collect();
            let mut a = scalar_set(&values, &weights);
            let mut b = a.clone();
            reweight(&mut a, |p| logliks[p[0] as usize]);
            reweight(&mut b, |p| logliks[p[0] as usize] + shift);
            for (x, y) in a.log_weights().iter().zip(b.log_weights()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn weights_stay_normalized_through_update_and_resample(
            weights in proptest::collection::vec(1e-9f64..1.0, 2..30),
            seed in 0u64..1000,
        ) {
            let values: Vec<f64> = (0..weights.len()).map(|i| i as f64).collect();
            let mut ps = scalar_set(&values, &weights);
            reweight(&mut ps, |p| -0.1 * p[0]);
            prop_assert!(logsumexp(ps.log_weights()).abs() < 1e-9);
            resample(&mut ps, ResamplingScheme::Residual, &mut RngStream::from_seed(seed));
            prop_assert!(logsumexp(ps.log_weights()).abs() < 1e-9);
        }

        #[test]
        fn resample_counts_always_total_n_out(
            weights in proptest::collection::vec(1e-9f64..1.0, 1..30),
            n_out in 1usize..500,
            seed in 0u64..1000,
        ) {
            let total: f64 = weights.iter().sum();
            let normalized: Vec<f64> = weights.iter().map(|w| w / total).collect();
            for scheme in [
                ResamplingScheme::Multinomial,
                ResamplingScheme::Residual,
                ResamplingScheme::Systematic,
            ] {
                let counts = resample_counts(&normalized, scheme, n_out, &mut RngStream::from_seed(seed));
                prop_assert_eq!(counts.iter().sum::<usize>(), n_out);
            }
        }
    }
}
