//! Config loading: TOML file, dotted-path overrides, then validation.
//!
//! An absent or empty file yields the full default configuration, which
//! matches the benchmark settings baked into the library (horizon 60, 200
//! particles, 30 runs, forgetting factor 0.9, residual resampling).

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use rpf::ExperimentConfig;
use toml::{Table, Value};

/// Load a config file (optional), apply `key=value` overrides in order, and
/// validate the result.
///
/// Override keys are dotted paths into the TOML tree
/// (`benchmark.meas_variance=1e-4`); values are parsed as TOML literals and
/// fall back to strings, so `resampling=Systematic` works unquoted.
pub fn parse_config(path: Option<&Path>, overrides: &[String]) -> Result<ExperimentConfig> {
    let text = match path {
        Some(p) => fs::read_to_string(p)
            .with_context(|| format!("cannot read config file {}", p.display()))?,
        None => String::new(),
    };
    let mut table: Table = text
        .parse()
        .with_context(|| match path {
            Some(p) => format!("config file {} is not valid TOML", p.display()),
            None => "internal: empty config failed to parse".to_string(),
        })?;

    for entry in overrides {
        apply_override(&mut table, entry)?;
    }

    let cfg: ExperimentConfig = Value::Table(table)
        .try_into()
        .context("config does not describe a valid experiment")?;
    cfg.validate()
        .context("config violates an invariant")?;
    Ok(cfg)
}

fn apply_override(table: &mut Table, entry: &str) -> Result<()> {
    let Some((key, raw)) = entry.split_once('=') else {
        bail!("override {entry:?} is not of the form key=value");
    };
    let key = key.trim();
    if key.is_empty() {
        bail!("override {entry:?} has an empty key");
    }
    let value = parse_literal(raw.trim());

    let mut node = table;
    let segments: Vec<&str> = key.split('.').collect();
    for segment in &segments[..segments.len() - 1] {
        let child = node
            .entry(segment.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        node = child
            .as_table_mut()
            .with_context(|| format!("override key {key:?}: {segment:?} is not a table"))?;
    }
    node.insert(segments[segments.len() - 1].to_string(), value);
    Ok(())
}

// A bare word like `Systematic` is not a TOML literal; treat anything that
// fails to parse as a string.
fn parse_literal(raw: &str) -> Value {
    let probe = format!("v = {raw}");
    match probe.parse::<Table>() {
        Ok(mut t) => t.remove("v").expect("key v just inserted"),
        Err(_) => Value::String(raw.to_string()),
    }
}

/// Serialize the effective config; parsing the result reproduces it exactly.
pub fn render_config(cfg: &ExperimentConfig) -> Result<String> {
    toml::to_string_pretty(cfg).context("config serialization failed")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rpf::{Algorithm, ResamplingScheme};
    use std::io::Write;

    #[test]
    fn empty_config_is_the_full_default() {
        let cfg = parse_config(None, &[]).unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.benchmark.horizon, 60);
        assert_eq!(cfg.n_particles, 200);
        assert_eq!(cfg.n_runs, 30);
        assert_eq!(cfg.alpha, 0.9);
        assert_eq!(cfg.resampling, ResamplingScheme::Residual);
        assert_eq!(cfg.t_dofs, vec![50.0, 3.0]);
        assert_eq!(
            cfg.benchmark.outlier_steps,
            [7, 8, 9, 20, 37, 38, 39, 50].into_iter().collect()
        );
    }

    #[test]
    fn single_override_leaves_the_rest_default() {
        let cfg = parse_config(None, &["n_runs=2".into()]).unwrap();
        assert_eq!(cfg.n_runs, 2);
        let mut expected = ExperimentConfig::default();
        expected.n_runs = 2;
        assert_eq!(cfg, expected);
    }

    #[test]
    fn dotted_paths_reach_nested_tables() {
        let cfg = parse_config(
            None,
            &[
                "benchmark.meas_variance=1e-4".into(),
                "benchmark.horizon=10".into(),
                "benchmark.outlier_steps=[2,3]".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.benchmark.meas_variance, 1e-4);
        assert_eq!(cfg.benchmark.horizon, 10);
        assert_eq!(cfg.benchmark.outlier_steps, [2, 3].into_iter().collect());
    }

    #[test]
    fn bare_words_and_arrays_parse() {
        let cfg = parse_config(
            None,
            &[
                "resampling=Systematic".into(),
                "algorithms=[\"RPF\"]".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.resampling, ResamplingScheme::Systematic);
        assert_eq!(cfg.algorithms, vec![Algorithm::Rpf]);
    }

    #[test]
    fn invariant_violations_name_the_key() {
        let err = parse_config(None, &["alpha=1.5".into()]).unwrap_err();
        assert!(format!("{err:#}").contains("alpha"), "{err:#}");
    }

    #[test]
    fn unknown_keys_are_rejected_by_name() {
        let err = parse_config(None, &["not_a_field=1".into()]).unwrap_err();
        assert!(format!("{err:#}").contains("not_a_field"), "{err:#}");
    }

    #[test]
    fn missing_file_is_reported_with_its_path() {
        let err = parse_config(Some(Path::new("/nonexistent/x.toml")), &[]).unwrap_err();
        assert!(format!("{err:#}").contains("/nonexistent/x.toml"));
    }

    #[test]
    fn file_and_overrides_compose() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "n_runs = 7\n[benchmark]\nhorizon = 55").unwrap();
        let cfg = parse_config(Some(f.path()), &["n_runs=3".into()]).unwrap();
        assert_eq!(cfg.n_runs, 3); // override wins
        assert_eq!(cfg.benchmark.horizon, 55);
    }

    #[test]
    fn render_round_trips() {
        let mut cfg = ExperimentConfig::default();
        cfg.n_runs = 5;
        cfg.alpha = 0.3;
        cfg.benchmark.meas_variance = 2e-5;
        let text = render_config(&cfg).unwrap();
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        let parsed = parse_config(Some(f.path()), &[]).unwrap();
        assert_eq!(parsed, cfg);
    }
}
