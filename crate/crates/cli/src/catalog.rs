//! The list of experiment kinds with a ready-to-run sample configuration each.

use clap::Parser;
use serde::{Deserialize, Serialize};

use crate::config::{Experiment, ExperimentConfig, ExperimentKind};

/// Sample seed for stochastic kinds.
pub const SAMPLE_SEED: u64 = 20_240_601;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub kind: ExperimentKind,
    /// The figure the experiment reproduces, if any.
    pub figure: Option<String>,
    pub description: String,
    /// Default configuration, valid as is.
    pub sample: ExperimentConfig,
}

#[derive(Parser)]
#[command(no_binary_name = true)]
struct Defaults {
    #[command(subcommand)]
    experiment: Experiment,
}

/// Default parameters of a kind, exactly as the subcommand would resolve them.
pub fn default_config(kind: ExperimentKind) -> ExperimentConfig {
    let experiment = Defaults::try_parse_from([kind.name()])
        .expect("every subcommand has complete defaults")
        .experiment;
    ExperimentConfig {
        experiment,
        seed: kind.is_stochastic().then_some(SAMPLE_SEED),
    }
}

fn describe(kind: ExperimentKind) -> (Option<&'static str>, &'static str) {
    use ExperimentKind::*;
    match kind {
        Fig2 => (
            Some("figure 2"),
            "(ln F_n)^-2 against p above p_c for light-tailed families, with line fits",
        ),
        Fig3 => (
            Some("figure 3"),
            "-1/ln F_n and (ln F_n)^-2 against p for the α = 3 family",
        ),
        Fig5 => (
            Some("figure 5"),
            "n²(1 - Q_n(0)) against 1/n at criticality",
        ),
        Fig6 => (
            Some("figure 6"),
            "n²2^k Q_n(k) against k/n, compared with the scaling function",
        ),
        Fig7 => (
            Some("figure 7"),
            "no-branching probability of critical trees, discrete and continuous",
        ),
        Fig8 => (
            Some("figure 8"),
            "first-split law of critical trees, discrete and continuous",
        ),
        CriticalPoint => (
            None,
            "critical point of a family, against reference and closed-form values",
        ),
        PdeRun => (
            None,
            "grid solution of the coalescence equation, against exact solutions",
        ),
        ScalingProfile => (
            Some("figure 4"),
            "scaling function for a given F(0), with tail diagnostics",
        ),
        TreeSample => (
            None,
            "Monte Carlo genealogies, against the exact no-branching law",
        ),
        NuWindow => (
            None,
            "range of tail exponents with positive ν-ary scaling functions",
        ),
    }
}

/// All kinds in a stable order.
pub fn catalog() -> Vec<CatalogEntry> {
    ExperimentKind::ALL
        .iter()
        .map(|&kind| {
            let (figure, description) = describe(kind);
            CatalogEntry {
                kind,
                figure: figure.map(str::to_string),
                description: description.to_string(),
                sample: default_config(kind),
            }
        })
        .collect()
}
