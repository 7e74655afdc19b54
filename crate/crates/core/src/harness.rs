//! Experiment harness: runs filters over generated trajectories, aggregates
//! MSE statistics over repeated seeded runs, sweeps the forgetting factor,
//! and averages model-probability traces.
//!
//! Seed discipline: the master seed spawns one stream per run, each run
//! stream spawns a trajectory stream and one stream per algorithm, and each
//! algorithm stream spawns its init-cloud and filter streams. Every
//! derivation is pure, so results are identical regardless of how many
//! threads execute the runs, and all algorithms within a run see the same
//! trajectory while drawing independent filter noise.

use std::time::Instant;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::{GaussianParams, NoiseModel, StudentTParams};
use crate::error::{Error, Result};
use crate::model::{make_benchmark_ssm, simulate_trajectory, BenchmarkConfig, Case, Trajectory};
use crate::pf::{pf_step, ParticleSet, ResamplingScheme};
use crate::rng::RngStream;
use crate::rpf::{rpf_step, ModelBank, RpfState};

// Substream tags, one level per component of the seed hierarchy.
const STREAM_RUNS: u64 = 1;
const STREAM_SHARED_TRAJECTORY: u64 = 2;
const STREAM_RUN_TRAJECTORY: u64 = 1;
const STREAM_RUN_ALGORITHM_BASE: u64 = 16;
const STREAM_FILTER_INIT: u64 = 1;
const STREAM_FILTER_LOOP: u64 = 2;

/// The filters the harness can run against one trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    /// Bootstrap filter with the nominal Gaussian likelihood.
    #[serde(rename = "GenericPF")]
    GenericPf,
    /// Bootstrap filter with the heaviest-tailed Student's t likelihood of
    /// the configured bank as its single model.
    #[serde(rename = "SingleT3PF")]
    SingleT3Pf,
    /// The model-averaged robust filter.
    #[serde(rename = "RPF")]
    Rpf,
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Algorithm::GenericPf => write!(f, "GenericPF"),
            Algorithm::SingleT3Pf => write!(f, "SingleT3PF"),
            Algorithm::Rpf => write!(f, "RPF"),
        }
    }
}

/// Full configuration of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub benchmark: BenchmarkConfig,
    /// Particle count per filter.
    pub n_particles: usize,
    /// Independent repetitions to aggregate over.
    pub n_runs: usize,
    pub resampling: ResamplingScheme,
    /// Forgetting factor of the robust filter.
    pub alpha: f64,
    /// Forgetting factors evaluated by the sweep.
    pub alpha_grid: Vec<f64>,
    pub algorithms: Vec<Algorithm>,
    pub master_seed: u64,
    /// Redraw the trajectory for every run (true) or share one trajectory
    /// across all runs (false).
    pub redraw_trajectory_per_run: bool,
    /// Degrees of freedom of the Student's t bank members, in bank order.
    pub t_dofs: Vec<f64>,
    /// Resample only when ESS/N falls below this fraction; `None` resamples
    /// every step.
    pub ess_threshold: Option<f64>,
    /// Measure wall-clock time per algorithm. Off by default so that
    /// experiment outputs are bit-reproducible.
    pub measure_time: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            benchmark: BenchmarkConfig::default(),
            n_particles: 200,
            n_runs: 30,
            resampling: ResamplingScheme::Residual,
            alpha: 0.9,
            alpha_grid: vec![0.1, 0.3, 0.5, 0.7, 0.9],
            algorithms: vec![Algorithm::GenericPf, Algorithm::SingleT3Pf, Algorithm::Rpf],
            master_seed: 42,
            redraw_trajectory_per_run: true,
            t_dofs: vec![50.0, 3.0],
            ess_threshold: None,
            measure_time: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.benchmark.validate()?;
        if self.n_particles == 0 {
            return Err(Error::param("n_particles", "must be >= 1"));
        }
        if self.n_runs == 0 {
            return Err(Error::param("n_runs", "must be >= 1"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::param(
                "alpha",
                format!("must lie in (0, 1), got {}", self.alpha),
            ));
        }
        if self.alpha_grid.iter().any(|&a| !(a > 0.0 && a < 1.0)) {
            return Err(Error::param("alpha_grid", "every entry must lie in (0, 1)"));
        }
        for (i, a) in self.algorithms.iter().enumerate() {
            if self.algorithms[i + 1..].contains(a) {
                return Err(Error::param("algorithms", format!("duplicate entry {a}")));
            }
        }
        if self.t_dofs.is_empty() {
            return Err(Error::param("t_dofs", "need at least one degrees-of-freedom value"));
        }
        if self.t_dofs.iter().any(|&v| !v.is_finite() || v <= 0.0) {
            return Err(Error::param("t_dofs", "every entry must be > 0"));
        }
        if let Some(f) = self.ess_threshold {
            if !f.is_finite() || f <= 0.0 {
                return Err(Error::param("ess_threshold", "must be > 0"));
            }
        }
        Ok(())
    }

    /// The model bank implied by this configuration: a zero-mean Gaussian
    /// plus one Student's t per configured degrees-of-freedom value, all
    /// sharing the measurement-noise scale.
    pub fn model_bank(&self) -> Result<ModelBank> {
        ModelBank::scalar_bank(self.benchmark.meas_variance, &self.t_dofs)
    }
}

/// Everything recorded while filtering one trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub truth: Vec<f64>,
    pub observations: Vec<f64>,
    pub estimates: Vec<f64>,
    /// Per-step normalized log model posterior; robust filter only.
    pub model_log_posteriors: Option<Vec<Vec<f64>>>,
    /// Per-step degeneracy flags.
    pub degenerate: Vec<bool>,
    pub mse: f64,
}

/// Aggregated statistics for one algorithm over all runs.
#[derive(Debug, Clone, PartialEq)]
pub struct AlgorithmSummary {
    pub algorithm: Algorithm,
    pub mse_mean: f64,
    /// Unbiased (n − 1) variance of the per-run MSE; zero for a single run.
    pub mse_var: f64,
    /// Total wall-clock seconds across runs; zero unless `measure_time` is
    /// set.
    pub seconds: f64,
}

/// Aggregated results of one experiment case.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSummary {
    pub case: Case,
    pub n_runs: usize,
    pub algorithms: Vec<AlgorithmSummary>,
    pub model_labels: Vec<String>,
    /// Mean linear-domain model posterior per step (rows) and model
    /// (columns), averaged over runs; present when the robust filter ran.
    pub mean_model_trace: Option<Vec<Vec<f64>>>,
}

/// Per-run records grouped by algorithm, in configuration order.
#[derive(Debug, Clone)]
pub struct AlgorithmRecords {
    pub algorithm: Algorithm,
    pub runs: Vec<RunRecord>,
}

/// Summary plus the raw records it was computed from.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub summary: ExperimentSummary,
    pub records: Vec<AlgorithmRecords>,
}

/// Mean posterior-probability trace per model, averaged over runs.
#[derive(Debug, Clone)]
pub struct ModelTrace {
    pub labels: Vec<String>,
    /// One row per model, one column per step.
    pub per_model: Vec<Vec<f64>>,
}

/// Mean of squared differences between estimates and truth.
pub fn mse(estimates: &[f64], truth: &[f64]) -> Result<f64> {
    if estimates.len() != truth.len() {
        return Err(Error::LengthMismatch(format!(
            "{} estimates vs {} truth values",
            estimates.len(),
            truth.len()
        )));
    }
    if estimates.is_empty() {
        return Err(Error::LengthMismatch("empty sequences".into()));
    }
    let sum: f64 = estimates
        .iter()
        .zip(truth)
        .map(|(e, t)| (e - t) * (e - t))
        .sum();
    Ok(sum / estimates.len() as f64)
}

fn initial_cloud(cfg: &ExperimentConfig, rng: &mut RngStream) -> Result<ParticleSet> {
    let bench = &cfg.benchmark;
    let particles: Vec<DVector<f64>> = (0..cfg.n_particles)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            DVector::from_element(1, bench.x0 + bench.init_std * z)
        })
        .collect();
    ParticleSet::from_particles(particles)
}

fn single_model_noise(cfg: &ExperimentConfig, algorithm: Algorithm) -> Result<NoiseModel> {
    let sigma2 = cfg.benchmark.meas_variance;
    match algorithm {
        Algorithm::GenericPf => Ok(NoiseModel::gaussian(
            "gaussian",
            GaussianParams::scalar(0.0, sigma2)?,
        )),
        Algorithm::SingleT3Pf => {
            let dof = *cfg.t_dofs.last().expect("validated config");
            Ok(NoiseModel::student_t(
                format!("t{dof}"),
                StudentTParams::scalar(0.0, sigma2, dof)?,
            ))
        }
        Algorithm::Rpf => unreachable!("the robust filter uses the full bank"),
    }
}

/// Filter one trajectory with one algorithm and record everything.
pub fn run_filter(
    algorithm: Algorithm,
    traj: &Trajectory,
    cfg: &ExperimentConfig,
    rng: &RngStream,
) -> Result<RunRecord> {
    cfg.validate()?;
    if traj.len() != cfg.benchmark.horizon {
        return Err(Error::LengthMismatch(format!(
            "trajectory has {} steps, config horizon is {}",
            traj.len(),
            cfg.benchmark.horizon
        )));
    }
    let ssm = make_benchmark_ssm(cfg.benchmark.clone())?;
    let mut init_rng = rng.substream(STREAM_FILTER_INIT);
    let mut filter_rng = rng.substream(STREAM_FILTER_LOOP);
    let particles = initial_cloud(cfg, &mut init_rng)?;

    let horizon = cfg.benchmark.horizon;
    let mut estimates = Vec::with_capacity(horizon);
    let mut degenerate = Vec::with_capacity(horizon);
    let mut model_log_posteriors = None;

    match algorithm {
        Algorithm::GenericPf | Algorithm::SingleT3Pf => {
            let noise = single_model_noise(cfg, algorithm)?;
            let mut ps = particles;
            for k in 1..=horizon {
                let y = DVector::from_element(1, traj.observations[k - 1]);
                let (estimate, diag) = pf_step(
                    &mut ps,
                    &ssm,
                    k,
                    &y,
                    &noise,
                    cfg.resampling,
                    cfg.ess_threshold,
                    &mut filter_rng,
                );
                estimates.push(estimate[0]);
                degenerate.push(diag.degenerate);
            }
        }
        Algorithm::Rpf => {
            let bank = cfg.model_bank()?;
            let mut st = RpfState::new(particles, bank, cfg.alpha)?;
            let mut posteriors = Vec::with_capacity(horizon);
            for k in 1..=horizon {
                let y = DVector::from_element(1, traj.observations[k - 1]);
                let (estimate, diag) = rpf_step(
                    &mut st,
                    &ssm,
                    k,
                    &y,
                    cfg.resampling,
                    cfg.ess_threshold,
                    &mut filter_rng,
                );
                estimates.push(estimate[0]);
                degenerate.push(diag.no_evidence || diag.model_fallback.iter().any(|&f| f));
                posteriors.push(diag.log_model_posterior);
            }
            model_log_posteriors = Some(posteriors);
        }
    }

    let run_mse = mse(&estimates, &traj.states)?;
    Ok(RunRecord {
        truth: traj.states.clone(),
        observations: traj.observations.clone(),
        estimates,
        model_log_posteriors,
        degenerate,
        mse: run_mse,
    })
}

/// The trajectory a given run observes, derived from the master seed.
pub fn trajectory_for_run(cfg: &ExperimentConfig, case: Case, run: usize) -> Result<Trajectory> {
    let master = RngStream::from_seed(cfg.master_seed);
    if cfg.redraw_trajectory_per_run {
        let run_stream = master.substream(STREAM_RUNS).substream(run as u64);
        simulate_trajectory(&cfg.benchmark, case, &run_stream.substream(STREAM_RUN_TRAJECTORY))
    } else {
        simulate_trajectory(&cfg.benchmark, case, &master.substream(STREAM_SHARED_TRAJECTORY))
    }
}

/// Run every configured algorithm over `n_runs` seeded repetitions of one
/// case and aggregate.
///
/// Runs execute in parallel; the seed hierarchy makes the result identical
/// for any thread count.
pub fn run_experiment(cfg: &ExperimentConfig, case: Case) -> Result<ExperimentOutput> {
    cfg.validate()?;

    let per_run: Vec<Vec<(RunRecord, f64)>> = (0..cfg.n_runs)
        .into_par_iter()
        .map(|run| -> Result<Vec<(RunRecord, f64)>> {
            let master = RngStream::from_seed(cfg.master_seed);
            let run_stream = master.substream(STREAM_RUNS).substream(run as u64);
            let traj = trajectory_for_run(cfg, case, run)?;
            cfg.algorithms
                .iter()
                .enumerate()
                .map(|(i, &algorithm)| {
                    let alg_stream = run_stream.substream(STREAM_RUN_ALGORITHM_BASE + i as u64);
                    let started = Instant::now();
                    let record = run_filter(algorithm, &traj, cfg, &alg_stream)?;
                    let seconds = if cfg.measure_time {
                        started.elapsed().as_secs_f64()
                    } else {
                        0.0
                    };
                    Ok((record, seconds))
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    // Regroup as algorithm-major, preserving run order.
    let mut records: Vec<AlgorithmRecords> = cfg
        .algorithms
        .iter()
        .map(|&algorithm| AlgorithmRecords {
            algorithm,
            runs: Vec::with_capacity(cfg.n_runs),
        })
        .collect();
    let mut seconds_total = vec![0.0f64; cfg.algorithms.len()];
    for run_results in per_run {
        for (i, (record, seconds)) in run_results.into_iter().enumerate() {
            records[i].runs.push(record);
            seconds_total[i] += seconds;
        }
    }

    let algorithms = records
        .iter()
        .zip(&seconds_total)
        .map(|(group, &seconds)| {
            let mses: Vec<f64> = group.runs.iter().map(|r| r.mse).collect();
            let mean = mses.iter().sum::<f64>() / mses.len() as f64;
            let var = if mses.len() > 1 {
                mses.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>() / (mses.len() - 1) as f64
            } else {
                0.0
            };
            AlgorithmSummary {
                algorithm: group.algorithm,
                mse_mean: mean,
                mse_var: var,
                seconds,
            }
        })
        .collect();

    let bank = cfg.model_bank()?;
    let mean_model_trace = records
        .iter()
        .find(|g| g.algorithm == Algorithm::Rpf)
        .map(|g| average_model_trace(&g.runs, cfg.benchmark.horizon, bank.len()));

    Ok(ExperimentOutput {
        summary: ExperimentSummary {
            case,
            n_runs: cfg.n_runs,
            algorithms,
            model_labels: bank.labels(),
            mean_model_trace,
        },
        records,
    })
}

fn average_model_trace(runs: &[RunRecord], horizon: usize, n_models: usize) -> Vec<Vec<f64>> {
    let mut trace = vec![vec![0.0f64; n_models]; horizon];
    for record in runs {
        let posteriors = record
            .model_log_posteriors
            .as_ref()
            .expect("robust filter records carry model posteriors");
        for (step, log_probs) in posteriors.iter().enumerate() {
            for (m, &lp) in log_probs.iter().enumerate() {
                trace[step][m] += lp.exp();
            }
        }
    }
    for row in &mut trace {
        for v in row.iter_mut() {
            *v /= runs.len() as f64;
        }
    }
    trace
}

/// One grid point of the forgetting-factor sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub alpha: f64,
    pub case: Case,
    pub mse_mean: f64,
}

/// Run the robust filter over the configured forgetting-factor grid for
/// both cases.
pub fn alpha_sweep(cfg: &ExperimentConfig) -> Result<Vec<SweepPoint>> {
    cfg.validate()?;
    if cfg.alpha_grid.is_empty() {
        return Err(Error::param("alpha_grid", "must be non-empty for a sweep"));
    }
    let mut points = Vec::with_capacity(cfg.alpha_grid.len() * 2);
    for &alpha in &cfg.alpha_grid {
        for case in [Case::I, Case::II] {
            let sweep_cfg = ExperimentConfig {
                alpha,
                algorithms: vec![Algorithm::Rpf],
                ..cfg.clone()
            };
            let output = run_experiment(&sweep_cfg, case)?;
            points.push(SweepPoint {
                alpha,
                case,
                mse_mean: output.summary.algorithms[0].mse_mean,
            });
        }
    }
    Ok(points)
}

/// Mean per-step model posterior of the robust filter at a given forgetting
/// factor, averaged over all runs.
pub fn model_prob_trace(cfg: &ExperimentConfig, case: Case, alpha: f64) -> Result<ModelTrace> {
    let trace_cfg = ExperimentConfig {
        alpha,
        algorithms: vec![Algorithm::Rpf],
        ..cfg.clone()
    };
    let output = run_experiment(&trace_cfg, case)?;
    let by_step = output
        .summary
        .mean_model_trace
        .expect("robust filter ran, trace present");
    let n_models = output.summary.model_labels.len();
    let per_model: Vec<Vec<f64>> = (0..n_models)
        .map(|m| by_step.iter().map(|row| row[m]).collect())
        .collect();
    Ok(ModelTrace {
        labels: output.summary.model_labels,
        per_model,
    })
}
