//! Bit-stable CSV/JSON writers for experiment outputs.
//!
//! Floats are printed with 17 significant digits so every value round-trips
//! exactly; rows are sorted by their declared key order. Identical inputs
//! produce byte-identical files.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::ValueEnum;
use serde::Serialize;

use rpf::math::float17;
use rpf::{Case, ExperimentConfig, ExperimentSummary, ModelTrace, SweepPoint, Trajectory};

/// Serialization format of the summary file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

fn case_order(case: Case) -> u8 {
    match case {
        Case::I => 0,
        Case::II => 1,
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("cannot write {}", path.display()))
}

#[derive(Serialize)]
struct SummaryRow {
    case: String,
    algorithm: String,
    mse_mean: f64,
    mse_var: f64,
    seconds: f64,
}

/// Write `mse_summary.csv` or `mse_summary.json` with one row per
/// (case, algorithm) pair.
pub fn emit_mse_summary(
    summaries: &[ExperimentSummary],
    format: Format,
    out_dir: &Path,
) -> Result<PathBuf> {
    let mut ordered: Vec<&ExperimentSummary> = summaries.iter().collect();
    ordered.sort_by_key(|s| case_order(s.case));

    let rows: Vec<SummaryRow> = ordered
        .iter()
        .flat_map(|summary| {
            summary.algorithms.iter().map(|a| SummaryRow {
                case: summary.case.to_string(),
                algorithm: a.algorithm.to_string(),
                mse_mean: a.mse_mean,
                mse_var: a.mse_var,
                seconds: a.seconds,
            })
        })
        .collect();

    match format {
        Format::Csv => {
            let path = out_dir.join("mse_summary.csv");
            let mut buf = Vec::new();
            writeln!(buf, "case,algorithm,mse_mean,mse_var,seconds")?;
            for row in &rows {
                writeln!(
                    buf,
                    "{},{},{},{},{}",
                    row.case,
                    row.algorithm,
                    float17(row.mse_mean),
                    float17(row.mse_var),
                    float17(row.seconds),
                )?;
            }
            write_file(&path, &buf)?;
            Ok(path)
        }
        Format::Json => {
            let path = out_dir.join("mse_summary.json");
            write_file(&path, &to_json_17(&rows)?)?;
            Ok(path)
        }
    }
}

/// Write `alpha_sweep.csv`, sorted by (alpha, case).
pub fn emit_alpha_sweep(points: &[SweepPoint], out_dir: &Path) -> Result<PathBuf> {
    let mut ordered: Vec<&SweepPoint> = points.iter().collect();
    ordered.sort_by(|a, b| {
        a.alpha
            .total_cmp(&b.alpha)
            .then_with(|| case_order(a.case).cmp(&case_order(b.case)))
    });
    let path = out_dir.join("alpha_sweep.csv");
    let mut buf = Vec::new();
    writeln!(buf, "alpha,case,mse_mean")?;
    for p in ordered {
        writeln!(buf, "{},{},{}", float17(p.alpha), p.case, float17(p.mse_mean))?;
    }
    write_file(&path, &buf)?;
    Ok(path)
}

/// Write `model_trace.csv`: step index plus one probability column per
/// model label.
pub fn emit_model_trace(trace: &ModelTrace, out_dir: &Path) -> Result<PathBuf> {
    let path = out_dir.join("model_trace.csv");
    let mut buf = Vec::new();
    writeln!(buf, "k,{}", trace.labels.join(","))?;
    let horizon = trace.per_model.first().map_or(0, Vec::len);
    for step in 0..horizon {
        let values: Vec<String> = trace
            .per_model
            .iter()
            .map(|row| float17(row[step]))
            .collect();
        writeln!(buf, "{},{}", step + 1, values.join(","))?;
    }
    write_file(&path, &buf)?;
    Ok(path)
}

/// Write `trajectory.csv` (header `k,x_true,y,outlier`).
pub fn emit_trajectory(traj: &Trajectory, out_dir: &Path) -> Result<PathBuf> {
    let path = out_dir.join("trajectory.csv");
    let mut buf = Vec::new();
    traj.write_csv(&mut buf)?;
    write_file(&path, &buf)?;
    Ok(path)
}

/// Echo the effective config as `config.toml` so a run can be reproduced
/// from its output directory alone.
pub fn emit_config(cfg: &ExperimentConfig, out_dir: &Path) -> Result<PathBuf> {
    let path = out_dir.join("config.toml");
    write_file(&path, crate::config::render_config(cfg)?.as_bytes())?;
    Ok(path)
}

// serde_json's default float rendering is shortest-round-trip; override it
// so JSON carries the same 17-significant-digit text as the CSVs.
struct SigDigits17;

impl serde_json::ser::Formatter for SigDigits17 {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        write!(writer, "{value:.16e}")
    }
}

fn to_json_17<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, SigDigits17);
    value.serialize(&mut ser).context("JSON serialization failed")?;
    buf.push(b'\n');
    Ok(buf)
}
