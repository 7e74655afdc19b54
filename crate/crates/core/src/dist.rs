//! Measurement-noise densities and the samplers used for data generation.
//!
//! All densities are evaluated and returned in the log domain. An
//! observation 40–50 standard deviations from the mean drives a linear-domain
//! Gaussian density to exactly zero in `f64`; the log-domain value stays
//! finite and keeps the relative information between particles.
//!
//! Covariance and scale matrices are validated once, at construction, by a
//! Cholesky factorization whose factor is then cached for every density
//! evaluation and Gaussian draw.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use statrs::function::gamma::ln_gamma;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::rng::RngStream;

const LN_2PI: f64 = 1.8378770664093453;

/// Parameters of a multivariate Gaussian with SPD covariance.
#[derive(Debug, Clone)]
pub struct GaussianParams {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    chol_l: DMatrix<f64>,
    log_norm: f64,
}

impl GaussianParams {
    /// Validates the mean/covariance pair and caches the Cholesky factor.
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let (chol, log_det) = factorize_spd(&mean, &cov, "cov")?;
        let d = mean.len() as f64;
        let log_norm = -0.5 * (d * LN_2PI + log_det);
        let chol_l = chol.l();
        Ok(GaussianParams {
            mean,
            cov,
            chol,
            chol_l,
            log_norm,
        })
    }

    /// One-dimensional convenience constructor.
    pub fn scalar(mean: f64, variance: f64) -> Result<Self> {
        GaussianParams::new(
            DVector::from_element(1, mean),
            DMatrix::from_element(1, 1, variance),
        )
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Log-density at `x`.
    pub fn logpdf(&self, x: &DVector<f64>) -> Result<f64> {
        let m = self.mahalanobis_sq(x)?;
        Ok(self.log_norm - 0.5 * m)
    }

    /// Squared Mahalanobis distance of `x` from the mean, using the cached
    /// factorization.
    pub fn mahalanobis_sq(&self, x: &DVector<f64>) -> Result<f64> {
        check_dim(x.len(), self.dim())?;
        let d = x - &self.mean;
        Ok(d.dot(&self.chol.solve(&d)).max(0.0))
    }

    fn chol_l(&self) -> &DMatrix<f64> {
        &self.chol_l
    }
}

/// Parameters of a multivariate Student's t with SPD scale matrix.
///
/// `scale` enters the density as the scale matrix, not the variance; for
/// `dof > 2` the variance is `scale * dof / (dof - 2)`.
#[derive(Debug, Clone)]
pub struct StudentTParams {
    mean: DVector<f64>,
    scale: DMatrix<f64>,
    dof: f64,
    chol: Cholesky<f64, Dyn>,
    log_norm: f64,
}

impl StudentTParams {
    /// Validates parameters and caches the Cholesky factor and the
    /// x-independent part of the log-density.
    pub fn new(mean: DVector<f64>, scale: DMatrix<f64>, dof: f64) -> Result<Self> {
        if !dof.is_finite() || dof <= 0.0 {
            return Err(Error::param("dof", format!("must be > 0, got {dof}")));
        }
        let (chol, log_det) = factorize_spd(&mean, &scale, "scale")?;
        let d = mean.len() as f64;
        // Gamma terms stay in log space; Γ((v+d)/2) overflows linearly for v
        // in the hundreds.
        let log_norm = ln_gamma(0.5 * (dof + d))
            - ln_gamma(0.5 * dof)
            - 0.5 * log_det
            - 0.5 * d * (PI * dof).ln();
        Ok(StudentTParams {
            mean,
            scale,
            dof,
            chol,
            log_norm,
        })
    }

    /// One-dimensional convenience constructor.
    pub fn scalar(mean: f64, scale: f64, dof: f64) -> Result<Self> {
        StudentTParams::new(
            DVector::from_element(1, mean),
            DMatrix::from_element(1, 1, scale),
            dof,
        )
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn scale(&self) -> &DMatrix<f64> {
        &self.scale
    }

    pub fn dof(&self) -> f64 {
        self.dof
    }

    /// Log-density at `x`.
    pub fn logpdf(&self, x: &DVector<f64>) -> Result<f64> {
        let m = self.mahalanobis_sq(x)?;
        let d = self.dim() as f64;
        // ln(1 + m/v) via ln_1p: accurate when m/v is tiny (large dof).
        Ok(self.log_norm - 0.5 * (self.dof + d) * (m / self.dof).ln_1p())
    }

    /// Squared Mahalanobis distance of `x` from the mean, using the cached
    /// factorization.
    pub fn mahalanobis_sq(&self, x: &DVector<f64>) -> Result<f64> {
        check_dim(x.len(), self.dim())?;
        let d = x - &self.mean;
        Ok(d.dot(&self.chol.solve(&d)).max(0.0))
    }
}

/// A measurement-noise model: Gaussian or Student's t, with a label that
/// identifies it inside a model bank and in emitted traces.
#[derive(Debug, Clone)]
pub struct NoiseModel {
    label: String,
    kind: NoiseKind,
}

/// The distribution family behind a [`NoiseModel`].
#[derive(Debug, Clone)]
pub enum NoiseKind {
    Gaussian(GaussianParams),
    StudentT(StudentTParams),
}

impl NoiseModel {
    pub fn gaussian(label: impl Into<String>, params: GaussianParams) -> Self {
        NoiseModel {
            label: label.into(),
            kind: NoiseKind::Gaussian(params),
        }
    }

    pub fn student_t(label: impl Into<String>, params: StudentTParams) -> Self {
        NoiseModel {
            label: label.into(),
            kind: NoiseKind::StudentT(params),
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn kind(&self) -> &NoiseKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            NoiseKind::Gaussian(p) => p.dim(),
            NoiseKind::StudentT(p) => p.dim(),
        }
    }

    /// Log-density of a noise realization `x`.
    pub fn logpdf(&self, x: &DVector<f64>) -> Result<f64> {
        match &self.kind {
            NoiseKind::Gaussian(p) => p.logpdf(x),
            NoiseKind::StudentT(p) => p.logpdf(x),
        }
    }
}

/// Squared Mahalanobis distance `(x − μ)ᵀ Σ⁻¹ (x − μ)`.
///
/// Factorizes `scale` on every call; the cached paths on the parameter
/// structs are preferred inside filter loops.
pub fn mahalanobis_sq(x: &DVector<f64>, mean: &DVector<f64>, scale: &DMatrix<f64>) -> Result<f64> {
    let (chol, _) = factorize_spd(mean, scale, "scale")?;
    check_dim(x.len(), mean.len())?;
    let d = x - mean;
    Ok(d.dot(&chol.solve(&d)).max(0.0))
}

/// Draw one sample from a multivariate Gaussian.
pub fn sample_gaussian(rng: &mut RngStream, params: &GaussianParams) -> DVector<f64> {
    let z = DVector::from_fn(params.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
    params.mean() + params.chol_l() * z
}

/// Draw one Gamma(shape, scale) sample; mean `shape·scale`, variance
/// `shape·scale²`.
pub fn sample_gamma(rng: &mut RngStream, shape: f64, scale: f64) -> Result<f64> {
    if !shape.is_finite() || shape <= 0.0 {
        return Err(Error::param("shape", format!("must be > 0, got {shape}")));
    }
    if !scale.is_finite() || scale <= 0.0 {
        return Err(Error::param("scale", format!("must be > 0, got {scale}")));
    }
    let gamma = Gamma::new(shape, scale)
        .map_err(|e| Error::param("shape/scale", format!("rejected by sampler: {e}")))?;
    Ok(gamma.sample(rng))
}

/// Draw one sample uniformly from `[lo, hi)`.
pub fn sample_uniform(rng: &mut RngStream, lo: f64, hi: f64) -> Result<f64> {
    if !(lo < hi) {
        return Err(Error::param("lo/hi", format!("need lo < hi, got [{lo}, {hi})")));
    }
    Ok(rng.gen_range(lo..hi))
}

fn factorize_spd(
    mean: &DVector<f64>,
    matrix: &DMatrix<f64>,
    what: &str,
) -> Result<(Cholesky<f64, Dyn>, f64)> {
    if !matrix.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "{what} must be square, got {}x{}",
            matrix.nrows(),
            matrix.ncols()
        )));
    }
    if mean.len() != matrix.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "mean has dimension {} but {what} is {}x{}",
            mean.len(),
            matrix.nrows(),
            matrix.ncols()
        )));
    }
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotPositiveDefinite(format!(
            "{what} contains non-finite entries"
        )));
    }
    if matrix != &matrix.transpose() {
        return Err(Error::NotPositiveDefinite(format!("{what} is not symmetric")));
    }
    let chol = Cholesky::new(matrix.clone())
        .ok_or_else(|| Error::NotPositiveDefinite(format!("{what} failed factorization")))?;
    let log_det: f64 = (0..matrix.nrows())
        .map(|i| 2.0 * chol.l_dirty()[(i, i)].ln())
        .sum();
    Ok((chol, log_det))
}

fn check_dim(got: usize, expected: usize) -> Result<()> {
    if got != expected {
        return Err(Error::DimensionMismatch(format!(
            "vector has dimension {got}, expected {expected}"
        )));
    }
    Ok(())
}
