//! Robust particle filter: a bootstrap filter whose measurement likelihood
//! is a bank of noise models combined by dynamic Bayesian model averaging.
//!
//! Each step weights the particles once per candidate model, predicts the
//! model probabilities through a forgetting factor, updates them with the
//! per-model particle marginal likelihoods, and resamples from the
//! model-averaged weights. Heavy-tailed Student's t members of the bank take
//! over automatically when an observation is grossly inconsistent with the
//! nominal Gaussian model, which is what makes the filter robust to
//! outliers.

use nalgebra::DVector;

use crate::dist::{GaussianParams, NoiseModel, StudentTParams};
use crate::error::{Error, Result};
use crate::math::{logsumexp, normalize_log, LOG_UNDERFLOW_FLOOR};
use crate::model::StateSpaceModel;
use crate::pf::{ess, posterior_mean, propagate, resample, ParticleSet, ResamplingScheme};
use crate::rng::RngStream;

/// The candidate measurement-noise models.
#[derive(Debug, Clone)]
pub struct ModelBank {
    models: Vec<NoiseModel>,
}

impl ModelBank {
    /// At least two models, all with the same measurement dimension and
    /// distinct labels.
    pub fn new(models: Vec<NoiseModel>) -> Result<Self> {
        if models.len() < 2 {
            return Err(Error::param("models", "a model bank needs at least two models"));
        }
        let dim = models[0].dim();
        if models.iter().any(|m| m.dim() != dim) {
            return Err(Error::DimensionMismatch(
                "bank models must share one measurement dimension".into(),
            ));
        }
        for (i, a) in models.iter().enumerate() {
            if models[i + 1..].iter().any(|b| b.label() == a.label()) {
                return Err(Error::param(
                    "models",
                    format!("duplicate label {:?}", a.label()),
                ));
            }
        }
        Ok(ModelBank { models })
    }

    /// The default scalar bank: one Gaussian plus one Student's t per listed
    /// degrees-of-freedom value, all zero-mean with the same scale.
    ///
    /// `scale` is used directly as the t scale parameter, not rescaled to
    /// match the Gaussian variance.
    pub fn scalar_bank(scale: f64, t_dofs: &[f64]) -> Result<Self> {
        let mut models = vec![NoiseModel::gaussian(
            "gaussian",
            GaussianParams::scalar(0.0, scale)?,
        )];
        for &dof in t_dofs {
            models.push(NoiseModel::student_t(
                format!("t{dof}"),
                StudentTParams::scalar(0.0, scale, dof)?,
            ));
        }
        ModelBank::new(models)
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn models(&self) -> &[NoiseModel] {
        &self.models
    }

    pub fn labels(&self) -> Vec<String> {
        self.models.iter().map(|m| m.label().to_string()).collect()
    }
}

/// Posterior probabilities over the bank, in log domain, plus the
/// forgetting factor used to predict them forward.
#[derive(Debug, Clone)]
pub struct ModelPosterior {
    log_probs: Vec<f64>,
    alpha: f64,
}

impl ModelPosterior {
    /// Uniform prior over `m` models.
    pub fn uniform(m: usize, alpha: f64) -> Result<Self> {
        ModelPosterior::from_log_probs(vec![0.0; m], alpha)
    }

    /// Arbitrary starting probabilities; normalized on entry.
    pub fn from_log_probs(mut log_probs: Vec<f64>, alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        if log_probs.is_empty() {
            return Err(Error::param("log_probs", "must be non-empty"));
        }
        if log_probs.iter().any(|p| p.is_nan() || *p == f64::INFINITY) {
            return Err(Error::param("log_probs", "must be finite or -inf"));
        }
        if normalize_log(&mut log_probs) == f64::NEG_INFINITY {
            return Err(Error::param("log_probs", "all probabilities are zero"));
        }
        Ok(ModelPosterior { log_probs, alpha })
    }

    pub fn len(&self) -> usize {
        self.log_probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_probs.is_empty()
    }

    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }

    /// Linear-domain probabilities.
    pub fn probs(&self) -> Vec<f64> {
        self.log_probs.iter().map(|lp| lp.exp()).collect()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    fn set_log_probs(&mut self, mut log_probs: Vec<f64>) {
        normalize_log(&mut log_probs);
        self.log_probs = log_probs;
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::param(
            "alpha",
            format!("forgetting factor must lie in (0, 1), got {alpha}"),
        ));
    }
    Ok(())
}

/// Complete state of one robust filter instance.
#[derive(Debug, Clone)]
pub struct RpfState {
    particles: ParticleSet,
    bank: ModelBank,
    posterior: ModelPosterior,
}

impl RpfState {
    /// Start a filter from an initial cloud with a uniform model prior.
    pub fn new(particles: ParticleSet, bank: ModelBank, alpha: f64) -> Result<Self> {
        let posterior = ModelPosterior::uniform(bank.len(), alpha)?;
        Ok(RpfState {
            particles,
            bank,
            posterior,
        })
    }

    pub fn particles(&self) -> &ParticleSet {
        &self.particles
    }

    pub fn bank(&self) -> &ModelBank {
        &self.bank
    }

    pub fn posterior(&self) -> &ModelPosterior {
        &self.posterior
    }
}

/// Per-step diagnostics of the robust filter.
#[derive(Debug, Clone)]
pub struct RpfStepDiag {
    /// Normalized log model posterior after the update.
    pub log_model_posterior: Vec<f64>,
    /// Models whose per-model weight row carried no evidence and fell back
    /// to the prior weights.
    pub model_fallback: Vec<bool>,
    /// Set when no model produced a usable marginal likelihood and the
    /// predicted model probabilities were kept.
    pub no_evidence: bool,
    /// Effective sample size under the averaged weights.
    pub ess: f64,
    /// Whether resampling ran this step.
    pub resampled: bool,
}

/// Predict model probabilities by flattening the posterior with the
/// forgetting factor: the log-domain form of `π^α / Σ π^α`.
///
/// Probabilities are floored at the underflow limit first so a fully
/// suppressed model can still recover.
pub fn forget_predict(mp: &ModelPosterior) -> Vec<f64> {
    let mut predicted: Vec<f64> = mp
        .log_probs
        .iter()
        .map(|&lp| mp.alpha * lp.max(LOG_UNDERFLOW_FLOOR))
        .collect();
    normalize_log(&mut predicted);
    predicted
}

/// Evaluate `log p_m(y | x_i)` for every model and particle.
///
/// Measurement means are computed once per particle and shared across the
/// bank.
fn loglik_matrix(
    ps: &ParticleSet,
    bank: &ModelBank,
    k: usize,
    y: &DVector<f64>,
    ssm: &dyn StateSpaceModel,
) -> Vec<Vec<f64>> {
    let residuals: Vec<DVector<f64>> = ps
        .particles()
        .iter()
        .map(|p| y - ssm.measurement_mean(k, p))
        .collect();
    bank.models()
        .iter()
        .map(|model| {
            residuals
                .iter()
                .map(|r| model.logpdf(r).expect("bank dimension checked at construction"))
                .collect()
        })
        .collect()
}

fn rows_from_logliks(log_weights: &[f64], logliks: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<bool>) {
    let mut rows = Vec::with_capacity(logliks.len());
    let mut fallback = Vec::with_capacity(logliks.len());
    for ll in logliks {
        let mut row: Vec<f64> = log_weights.iter().zip(ll).map(|(&lw, &l)| lw + l).collect();
        if normalize_log(&mut row) == f64::NEG_INFINITY {
            // No evidence under this model; its marginal likelihood will be
            // zero, so it loses posterior mass through the model update.
            row = log_weights.to_vec();
            fallback.push(true);
        } else {
            fallback.push(false);
        }
        rows.push(row);
    }
    (rows, fallback)
}

fn marginals_from_logliks(log_weights: &[f64], logliks: &[Vec<f64>]) -> Vec<f64> {
    logliks
        .iter()
        .map(|ll| {
            let terms: Vec<f64> = log_weights.iter().zip(ll).map(|(&lw, &l)| lw + l).collect();
            logsumexp(&terms)
        })
        .collect()
}

/// Weight the propagated particles once per model: row `m` is
/// `normalize(log ω_prev + log p_m(y | x̂))`.
///
/// Returns the rows and a per-model flag marking rows that fell back to the
/// prior weights because every likelihood was zero.
pub fn per_model_reweight(
    ps: &ParticleSet,
    bank: &ModelBank,
    k: usize,
    y: &DVector<f64>,
    ssm: &dyn StateSpaceModel,
) -> (Vec<Vec<f64>>, Vec<bool>) {
    let ll = loglik_matrix(ps, bank, k, y, ssm);
    rows_from_logliks(ps.log_weights(), &ll)
}

/// Particle estimate of each model's marginal likelihood of `y`:
/// `logsumexp_i(log ω_prev_i + log p_m(y | x̂_i))`.
///
/// Entries may be `-∞` when a model assigns zero mass everywhere.
pub fn marginal_loglik(
    ps: &ParticleSet,
    bank: &ModelBank,
    k: usize,
    y: &DVector<f64>,
    ssm: &dyn StateSpaceModel,
) -> Vec<f64> {
    let ll = loglik_matrix(ps, bank, k, y, ssm);
    marginals_from_logliks(ps.log_weights(), &ll)
}

/// Bayes update of the predicted model probabilities by the marginal
/// likelihoods.
///
/// When every product underflows to zero the prediction is returned
/// unchanged and flagged.
pub fn model_update(predicted_log_probs: &[f64], marginal_logliks: &[f64]) -> (Vec<f64>, bool) {
    let mut updated: Vec<f64> = predicted_log_probs
        .iter()
        .zip(marginal_logliks)
        .map(|(&p, &l)| p + l)
        .collect();
    if normalize_log(&mut updated) == f64::NEG_INFINITY {
        return (predicted_log_probs.to_vec(), true);
    }
    (updated, false)
}

/// Collapse the per-model weight rows into one weight vector:
/// `ω_j = Σ_m π_m ω_{m,j}`, evaluated entirely in log domain.
pub fn average_weights(per_model_log_weights: &[Vec<f64>], posterior_log_probs: &[f64]) -> Vec<f64> {
    let n = per_model_log_weights[0].len();
    let mut averaged = Vec::with_capacity(n);
    let mut terms = vec![0.0; posterior_log_probs.len()];
    for j in 0..n {
        for (m, term) in terms.iter_mut().enumerate() {
            *term = posterior_log_probs[m] + per_model_log_weights[m][j];
        }
        averaged.push(logsumexp(&terms));
    }
    // Already normalized up to roundoff since Σ_m π_m = 1 and each row sums
    // to one; renormalize to pin logsumexp at exactly zero.
    normalize_log(&mut averaged);
    averaged
}

/// One full iteration of the robust filter.
///
/// Propagates, weights per model, advances the model posterior, averages the
/// weight rows under it, records the estimate, and resamples. The estimate
/// is the weighted mean under the averaged weights, before resampling.
pub fn rpf_step(
    st: &mut RpfState,
    ssm: &dyn StateSpaceModel,
    k: usize,
    y: &DVector<f64>,
    scheme: ResamplingScheme,
    ess_floor: Option<f64>,
    rng: &mut RngStream,
) -> (DVector<f64>, RpfStepDiag) {
    assert_eq!(y.len(), ssm.meas_dim(), "measurement dimension mismatch");
    assert_eq!(
        st.bank.models()[0].dim(),
        ssm.meas_dim(),
        "bank dimension mismatch"
    );

    propagate(&mut st.particles, ssm, k, rng);

    let ll = loglik_matrix(&st.particles, &st.bank, k, y, ssm);
    let (rows, model_fallback) = rows_from_logliks(st.particles.log_weights(), &ll);
    let predicted = forget_predict(&st.posterior);
    let marginals = marginals_from_logliks(st.particles.log_weights(), &ll);
    let (posterior, no_evidence) = model_update(&predicted, &marginals);
    st.posterior.set_log_probs(posterior.clone());

    let averaged = average_weights(&rows, st.posterior.log_probs());
    st.particles.set_normalized_log_weights(averaged);

    let estimate = posterior_mean(&st.particles);
    let ess_now = ess(&st.particles);
    let do_resample = match ess_floor {
        None => true,
        Some(f) => ess_now < f * st.particles.len() as f64,
    };
    if do_resample {
        resample(&mut st.particles, scheme, rng);
    }

    (
        estimate,
        RpfStepDiag {
            log_model_posterior: st.posterior.log_probs().to_vec(),
            model_fallback,
            no_evidence,
            ess: ess_now,
            resampled: do_resample,
        },
    )
}
