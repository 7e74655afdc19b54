//! State-space model abstraction and the nonstationary scalar benchmark
//! model, including trajectory generation with optional outlier injection.
//!
//! Time is 1-based at every interface: step `k` runs from 1 to the horizon
//! `T`. Internal storage is 0-based (`states[k - 1]` is the state at step
//! `k`).

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::io;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::dist::{sample_gamma, sample_gaussian, sample_uniform, GaussianParams};
use crate::error::{Error, Result};
use crate::math::float17;
use crate::rng::RngStream;

// Substream tags used by `simulate_trajectory`. Keeping process noise,
// measurement noise, and outlier draws on separate streams makes Case I and
// Case II trajectories from the same seed identical everywhere except at
// outlier steps.
const STREAM_PROCESS: u64 = 1;
const STREAM_MEASUREMENT: u64 = 2;
const STREAM_OUTLIER: u64 = 3;

/// A discrete-time state-space model as consumed by the filters.
///
/// Filters built on the transition prior only ever need to *sample* the
/// transition; its density is never evaluated, which is what admits the
/// Gamma process noise of the benchmark model.
pub trait StateSpaceModel {
    fn state_dim(&self) -> usize;
    fn meas_dim(&self) -> usize;

    /// Draw the state at step `k` given the state at `k − 1`.
    fn transition_sample(&self, k: usize, x_prev: &DVector<f64>, rng: &mut RngStream)
        -> DVector<f64>;

    /// Noise-free measurement at step `k`.
    fn measurement_mean(&self, k: usize, x: &DVector<f64>) -> DVector<f64>;
}

/// Which measurement-noise scenario to simulate.
///
/// Case I draws every measurement noise term from the nominal zero-mean
/// Gaussian. Case II replaces the noise term at the configured outlier steps
/// with a uniform draw from `[outlier_lo, outlier_hi)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Case {
    I,
    II,
}

impl std::fmt::Display for Case {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Case::I => write!(f, "I"),
            Case::II => write!(f, "II"),
        }
    }
}

impl std::str::FromStr for Case {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "I" | "i" | "1" => Ok(Case::I),
            "II" | "ii" | "2" => Ok(Case::II),
            other => Err(Error::param("case", format!("expected I or II, got {other:?}"))),
        }
    }
}

/// Configuration of the scalar benchmark model and its data generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    /// Number of time steps `T`.
    pub horizon: usize,
    /// State at step 0, before the first transition.
    pub x0: f64,
    /// Standard deviation of the initial particle cloud around `x0`;
    /// zero pins every particle at `x0` exactly.
    pub init_std: f64,
    /// Shape of the Gamma process noise.
    pub process_shape: f64,
    /// Scale of the Gamma process noise.
    pub process_scale: f64,
    /// Variance of the nominal Gaussian measurement noise.
    pub meas_variance: f64,
    /// Last step of the quadratic measurement branch (inclusive).
    pub switch_step: usize,
    /// Steps whose measurement noise is replaced by an outlier in Case II.
    pub outlier_steps: BTreeSet<usize>,
    /// Lower bound of the uniform outlier noise.
    pub outlier_lo: f64,
    /// Upper bound (exclusive) of the uniform outlier noise.
    pub outlier_hi: f64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            horizon: 60,
            x0: 1.0,
            init_std: 1.0,
            process_shape: 3.0,
            process_scale: 2.0,
            meas_variance: 1e-5,
            switch_step: 30,
            outlier_steps: [7, 8, 9, 20, 37, 38, 39, 50].into_iter().collect(),
            outlier_lo: 40.0,
            outlier_hi: 50.0,
        }
    }
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::param("horizon", "must be >= 1"));
        }
        if !self.x0.is_finite() {
            return Err(Error::param("x0", "must be finite"));
        }
        if !self.init_std.is_finite() || self.init_std < 0.0 {
            return Err(Error::param("init_std", "must be finite and >= 0"));
        }
        if !self.process_shape.is_finite() || self.process_shape <= 0.0 {
            return Err(Error::param("process_shape", "must be > 0"));
        }
        if !self.process_scale.is_finite() || self.process_scale <= 0.0 {
            return Err(Error::param("process_scale", "must be > 0"));
        }
        if !self.meas_variance.is_finite() || self.meas_variance <= 0.0 {
            return Err(Error::param("meas_variance", "must be > 0"));
        }
        if !(self.outlier_lo < self.outlier_hi) {
            return Err(Error::param("outlier_lo/outlier_hi", "need outlier_lo < outlier_hi"));
        }
        for &k in &self.outlier_steps {
            if k == 0 || k > self.horizon {
                return Err(Error::param(
                    "outlier_steps",
                    format!("step {k} outside 1..={}", self.horizon),
                ));
            }
        }
        Ok(())
    }
}

/// A generated state/observation sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// True states `x_1..x_T`.
    pub states: Vec<f64>,
    /// Observations `y_1..y_T`.
    pub observations: Vec<f64>,
    /// True at exactly the steps whose noise was replaced by an outlier.
    pub outlier_mask: Vec<bool>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Write the trajectory as CSV with header `k,x_true,y,outlier`.
    pub fn write_csv<W: io::Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "k,x_true,y,outlier")?;
        for k in 1..=self.len() {
            writeln!(
                w,
                "{},{},{},{}",
                k,
                float17(self.states[k - 1]),
                float17(self.observations[k - 1]),
                u8::from(self.outlier_mask[k - 1]),
            )?;
        }
        Ok(())
    }
}

/// Deterministic part of the benchmark state recursion.
pub fn benchmark_transition_mean(k: usize, x_prev: f64) -> f64 {
    1.0 + (0.04 * PI * k as f64).sin() + 0.5 * x_prev
}

/// One draw of the benchmark state recursion: the deterministic part plus
/// Gamma-distributed process noise.
///
/// Panics if the config's process-noise parameters are invalid; validate the
/// config first.
pub fn benchmark_transition(
    cfg: &BenchmarkConfig,
    k: usize,
    x_prev: f64,
    rng: &mut RngStream,
) -> f64 {
    let u = sample_gamma(rng, cfg.process_shape, cfg.process_scale)
        .expect("validated benchmark config");
    benchmark_transition_mean(k, x_prev) + u
}

/// Noise-free measurement of the benchmark model: quadratic through
/// `switch_step` (inclusive), affine afterwards.
pub fn benchmark_measure(cfg: &BenchmarkConfig, k: usize, x: f64) -> f64 {
    if k <= cfg.switch_step {
        0.2 * x * x
    } else {
        0.2 * x - 2.0
    }
}

/// Generate a full trajectory for the given case.
pub fn simulate_trajectory(
    cfg: &BenchmarkConfig,
    case: Case,
    rng: &RngStream,
) -> Result<Trajectory> {
    cfg.validate()?;
    let mut process_rng = rng.substream(STREAM_PROCESS);
    let mut meas_rng = rng.substream(STREAM_MEASUREMENT);
    let mut outlier_rng = rng.substream(STREAM_OUTLIER);

    let meas_noise = GaussianParams::scalar(0.0, cfg.meas_variance)?;

    let mut states = Vec::with_capacity(cfg.horizon);
    let mut observations = Vec::with_capacity(cfg.horizon);
    let mut outlier_mask = Vec::with_capacity(cfg.horizon);

    let mut x = cfg.x0;
    for k in 1..=cfg.horizon {
        x = benchmark_transition(cfg, k, x, &mut process_rng);
        // Draw the nominal noise unconditionally so non-outlier observations
        // are identical across cases under a shared seed.
        let nominal = sample_gaussian(&mut meas_rng, &meas_noise)[0];
        let is_outlier = case == Case::II && cfg.outlier_steps.contains(&k);
        let noise = if is_outlier {
            sample_uniform(&mut outlier_rng, cfg.outlier_lo, cfg.outlier_hi)?
        } else {
            nominal
        };
        states.push(x);
        observations.push(benchmark_measure(cfg, k, x) + noise);
        outlier_mask.push(is_outlier);
    }

    Ok(Trajectory {
        states,
        observations,
        outlier_mask,
    })
}

/// The benchmark model packaged behind [`StateSpaceModel`].
#[derive(Debug, Clone)]
pub struct BenchmarkSsm {
    cfg: BenchmarkConfig,
}

impl BenchmarkSsm {
    pub fn config(&self) -> &BenchmarkConfig {
        &self.cfg
    }
}

/// Validate a config and wrap it as a filterable state-space model.
pub fn make_benchmark_ssm(cfg: BenchmarkConfig) -> Result<BenchmarkSsm> {
    cfg.validate()?;
    Ok(BenchmarkSsm { cfg })
}

impl StateSpaceModel for BenchmarkSsm {
    fn state_dim(&self) -> usize {
        1
    }

    fn meas_dim(&self) -> usize {
        1
    }

    fn transition_sample(
        &self,
        k: usize,
        x_prev: &DVector<f64>,
        rng: &mut RngStream,
    ) -> DVector<f64> {
        DVector::from_element(1, benchmark_transition(&self.cfg, k, x_prev[0], rng))
    }

    fn measurement_mean(&self, k: usize, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_element(1, benchmark_measure(&self.cfg, k, x[0]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn transition_mean_matches_recursion_oracle() {
        // Zero-noise recursion evaluated by hand.
        let expected = 1.0 + (0.04 * PI).sin() + 0.5;
        assert_abs_diff_eq!(benchmark_transition_mean(1, 1.0), expected, epsilon = 1e-15);
        assert_abs_diff_eq!(expected, 1.6253332335643043, epsilon = 1e-12);
        // sin(π) vanishes at k = 25.
        assert_abs_diff_eq!(benchmark_transition_mean(25, 0.0), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn transition_noise_is_strictly_positive() {
        let cfg = BenchmarkConfig::default();
        let mut rng = RngStream::from_seed(3);
        for k in 1..=100 {
            let x = benchmark_transition(&cfg, k, 0.7, &mut rng);
            assert!(x > benchmark_transition_mean(k, 0.7));
        }
    }

    #[test]
    fn measure_branches() {
        let cfg = BenchmarkConfig::default();
        assert_abs_diff_eq!(benchmark_measure(&cfg, 10, 2.0), 0.8, epsilon = 1e-15);
        assert_abs_diff_eq!(benchmark_measure(&cfg, 31, 10.0), 0.0, epsilon = 1e-15);
        // The quadratic branch includes the switch step itself.
        assert_abs_diff_eq!(benchmark_measure(&cfg, 30, -2.0), 0.8, epsilon = 1e-15);
    }

    #[test]
    fn measure_is_even_then_affine() {
        let cfg = BenchmarkConfig::default();
        for i in 0..20 {
            let x = -2.0 + 0.37 * i as f64;
            assert_abs_diff_eq!(
                benchmark_measure(&cfg, 7, x),
                benchmark_measure(&cfg, 7, -x),
                epsilon = 1e-12
            );
            // Affine branch: f(x) − f(0) is linear in x.
            let f0 = benchmark_measure(&cfg, 31, 0.0);
            let fx = benchmark_measure(&cfg, 31, x) - f0;
            let f1 = benchmark_measure(&cfg, 31, 1.0) - f0;
            assert_abs_diff_eq!(fx, f1 * x, epsilon = 1e-12);
        }
    }

    #[test]
    fn case_i_has_no_outliers() {
        let cfg = BenchmarkConfig::default();
        let traj = simulate_trajectory(&cfg, Case::I, &RngStream::from_seed(1)).unwrap();
        assert_eq!(traj.len(), 60);
        assert!(traj.outlier_mask.iter().all(|&o| !o));
    }

    #[test]
    fn case_ii_marks_exactly_the_configured_steps() {
        let cfg = BenchmarkConfig::default();
        let traj = simulate_trajectory(&cfg, Case::II, &RngStream::from_seed(1)).unwrap();
        let marked: Vec<usize> = (1..=traj.len()).filter(|&k| traj.outlier_mask[k - 1]).collect();
        assert_eq!(marked, vec![7, 8, 9, 20, 37, 38, 39, 50]);
    }

    #[test]
    fn outlier_noise_lands_in_the_configured_band() {
        let cfg = BenchmarkConfig::default();
        let traj = simulate_trajectory(&cfg, Case::II, &RngStream::from_seed(2)).unwrap();
        for k in 1..=traj.len() {
            if traj.outlier_mask[k - 1] {
                let noise = traj.observations[k - 1] - benchmark_measure(&cfg, k, traj.states[k - 1]);
                assert!((40.0..50.0).contains(&noise), "k = {k}, noise = {noise}");
            }
        }
    }

    #[test]
    fn cases_share_states_and_clean_observations_under_one_seed() {
        let cfg = BenchmarkConfig::default();
        let rng = RngStream::from_seed(99);
        let a = simulate_trajectory(&cfg, Case::I, &rng).unwrap();
        let b = simulate_trajectory(&cfg, Case::II, &rng).unwrap();
        assert_eq!(a.states, b.states);
        for k in 1..=a.len() {
            if !b.outlier_mask[k - 1] {
                assert_eq!(a.observations[k - 1], b.observations[k - 1], "k = {k}");
            }
        }
    }

    #[test]
    fn trajectories_are_bit_identical_under_one_seed() {
        let cfg = BenchmarkConfig::default();
        let a = simulate_trajectory(&cfg, Case::II, &RngStream::from_seed(5)).unwrap();
        let b = simulate_trajectory(&cfg, Case::II, &RngStream::from_seed(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ssm_delegates_to_the_benchmark_functions() {
        let cfg = BenchmarkConfig::default();
        let ssm = make_benchmark_ssm(cfg.clone()).unwrap();
        assert_eq!(ssm.state_dim(), 1);
        assert_eq!(ssm.meas_dim(), 1);
        assert_abs_diff_eq!(
            ssm.measurement_mean(10, &DVector::from_element(1, 2.0))[0],
            0.8,
            epsilon = 1e-15
        );
        let mut ra = RngStream::from_seed(7);
        let mut rb = RngStream::from_seed(7);
        let via_ssm = ssm.transition_sample(4, &DVector::from_element(1, 1.0), &mut ra)[0];
        let direct = benchmark_transition(&cfg, 4, 1.0, &mut rb);
        assert_eq!(via_ssm, direct);
    }

    #[test]
    fn invalid_configs_are_named() {
        let mut cfg = BenchmarkConfig::default();
        cfg.meas_variance = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = BenchmarkConfig::default();
        cfg.outlier_steps.insert(61);
        assert!(cfg.validate().is_err());
        let mut cfg = BenchmarkConfig::default();
        cfg.outlier_lo = 50.0;
        cfg.outlier_hi = 40.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn csv_export_shape() {
        let cfg = BenchmarkConfig {
            horizon: 3,
            outlier_steps: [2].into_iter().collect(),
            ..BenchmarkConfig::default()
        };
        let traj = simulate_trajectory(&cfg, Case::II, &RngStream::from_seed(8)).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], "k,x_true,y,outlier");
        assert!(lines[1].starts_with("1,"));
        assert!(lines[2].ends_with(",1"));
        assert!(lines[1].ends_with(",0"));
    }
}
