//! Experiment harness for the `coalescence` library.
//!
//! Each experiment kind is a subcommand of the `coalescence` binary. A run writes
//! `<name>.csv` (plus `<name>.<part>.csv` for secondary tables and `<name>.<part>.json`
//! for structured side output) and `<name>.summary.json`, which carries the resolved
//! configuration, the embedded acceptance checks and the measured quantities.
//!
//! ```no_run
//! use coalescence_cli::config::{CriticalPointConfig, Experiment, ExperimentConfig, Family};
//!
//! let cfg = ExperimentConfig {
//!     experiment: Experiment::CriticalPoint(CriticalPointConfig { family: Family::TwoDelta }),
//!     seed: None,
//! };
//! let summary = coalescence_cli::run(&cfg, "out".as_ref()).unwrap();
//! assert!(summary.passed);
//! ```

use std::path::Path;

pub mod catalog;
pub mod config;
pub mod experiments;
pub mod output;

use config::ExperimentConfig;
use output::{write_atomic, Summary};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration `{field}`: {message}")]
    Config { field: String, message: String },
    #[error(transparent)]
    Core(#[from] coalescence::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

/// Validates, runs and writes one experiment into `out`.
pub fn run(cfg: &ExperimentConfig, out: &Path) -> Result<Summary> {
    cfg.validate()?;
    let name = cfg.experiment.kind().name();
    log::info!("running {name}");
    let run = experiments::run_experiment(&cfg.experiment, cfg.seed)?;

    let mut header = vec![format!("coalescence {}", env!("CARGO_PKG_VERSION"))];
    header.extend(cfg.to_lines());
    let mut outputs = Vec::new();
    for (suffix, table) in &run.tables {
        let file = if suffix.is_empty() {
            format!("{name}.csv")
        } else {
            format!("{name}.{suffix}.csv")
        };
        let path = out.join(file);
        write_atomic(&path, &table.to_csv(&header))?;
        outputs.push(path);
    }
    for (suffix, doc) in &run.documents {
        let path = out.join(format!("{name}.{suffix}.json"));
        write_atomic(&path, &serde_json::to_string_pretty(doc)?)?;
        outputs.push(path);
    }

    let summary_path = out.join(format!("{name}.summary.json"));
    outputs.push(summary_path.clone());
    let summary = Summary {
        experiment: name.to_string(),
        config: serde_json::to_value(cfg)?,
        passed: run.checks.iter().all(|c| c.pass),
        checks: run.checks,
        results: serde_json::Value::Object(run.results),
        outputs,
    };
    write_atomic(&summary_path, &serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}
