//! Experiment configurations.
//!
//! Every experiment kind is a subcommand whose flags are the configuration keys. A
//! config file holds the same keys as `key = value` lines:
//!
//! ```text
//! # fig5.cfg
//! families = two-delta,power-law:6
//! n = 1000
//! ```
//!
//! Flags given on the command line take precedence over the file.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use clap::{Args, Subcommand, ValueEnum};
use coalescence::discrete::{critical_point, ModelFamily};
use coalescence::scaling::nu_f0;
use serde::{Deserialize, Serialize};

use crate::{CliError, Result};

/// Initial distribution family, written `two-delta` or `power-law:<alpha>`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Family {
    TwoDelta,
    PowerLaw(f64),
}

impl Family {
    /// The family at its critical point.
    pub fn critical(self) -> Result<(ModelFamily, f64)> {
        let model = match self {
            Self::TwoDelta => ModelFamily::two_delta(0.5),
            Self::PowerLaw(alpha) => ModelFamily::power_law(1.0, alpha),
        };
        let p_c = critical_point(&model)?.p_c;
        Ok((model.with_p(p_c), p_c))
    }

    /// `F(0)` of the scaling function the family is expected to approach: 4 when the
    /// tail is light enough, `α(α-2)/2` otherwise.
    pub fn profile_f0(self) -> f64 {
        match self {
            Self::PowerLaw(alpha) if alpha < 4.0 => nu_f0(2, alpha),
            _ => 4.0,
        }
    }

    /// Limit of `n²(1 - Q_n(0))`, which is `F(0)` since `Σ_k 2^{-k} = 1`.
    pub fn factor(self) -> f64 {
        self.profile_f0()
    }

    /// Largest `p - p_c` for which `Q(0)` stays non-negative.
    pub fn max_excess(self) -> Result<f64> {
        let (_, p_c) = self.critical()?;
        Ok(match self {
            Self::TwoDelta => 1.0 - p_c,
            Self::PowerLaw(alpha) => 1.0 / coalescence::specfun::polylog_half(alpha) - p_c,
        })
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::TwoDelta => write!(f, "two-delta"),
            Self::PowerLaw(alpha) => write!(f, "power-law:{alpha}"),
        }
    }
}

impl FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "two-delta" {
            return Ok(Self::TwoDelta);
        }
        let alpha = s.strip_prefix("power-law:").ok_or_else(|| {
            format!("unknown family `{s}` (expected two-delta or power-law:<alpha>)")
        })?;
        let alpha: f64 = alpha
            .parse()
            .map_err(|_| format!("bad tail exponent in `{s}`"))?;
        if !(alpha > 2.0 && alpha.is_finite()) {
            return Err(format!(
                "power-law tail exponent must exceed 2, got {alpha}"
            ));
        }
        Ok(Self::PowerLaw(alpha))
    }
}

impl From<Family> for String {
    fn from(f: Family) -> String {
        f.to_string()
    }
}

impl TryFrom<String> for Family {
    type Error = String;

    fn try_from(s: String) -> std::result::Result<Self, String> {
        s.parse()
    }
}

fn three_families() -> Vec<Family> {
    vec![
        Family::TwoDelta,
        Family::PowerLaw(6.0),
        Family::PowerLaw(3.0),
    ]
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct Fig2Config {
    #[arg(long, value_delimiter = ',', default_values_t = vec![Family::TwoDelta, Family::PowerLaw(6.0)])]
    pub families: Vec<Family>,
    /// Recursion depths; the fit at the largest one is checked.
    #[arg(long, value_delimiter = ',', default_values_t = vec![25, 50, 100])]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = 0.0025)]
    pub delta_min: f64,
    #[arg(long, default_value_t = 0.02)]
    pub delta_max: f64,
    #[arg(long, default_value_t = 8)]
    pub points: usize,
    /// Relative tolerance on the fitted root.
    #[arg(long, default_value_t = 0.05)]
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct Fig3Config {
    #[arg(long, default_value_t = Family::PowerLaw(3.0))]
    pub family: Family,
    #[arg(long, value_delimiter = ',', default_values_t = vec![250, 500, 1000])]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = 0.005)]
    pub delta_min: f64,
    #[arg(long, default_value_t = 0.05)]
    pub delta_max: f64,
    #[arg(long, default_value_t = 8)]
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct Fig5Config {
    #[arg(long, value_delimiter = ',', default_values_t = three_families())]
    pub families: Vec<Family>,
    #[arg(long, default_value_t = 2000)]
    pub n: usize,
    /// Number of logarithmically spaced output rows per family.
    #[arg(long, default_value_t = 40)]
    pub rows: usize,
    #[arg(long, default_value_t = 0.1)]
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct Fig6Config {
    #[arg(long, value_delimiter = ',', default_values_t = three_families())]
    pub families: Vec<Family>,
    #[arg(long, value_delimiter = ',', default_values_t = vec![20, 40, 80])]
    pub sizes: Vec<usize>,
    /// Output range of `k/n`.
    #[arg(long, default_value_t = 4.0)]
    pub x_max: f64,
    /// Window of `k/n` over which the deviation from the profile is measured.
    #[arg(long, default_value_t = 0.25)]
    pub x_lo: f64,
    #[arg(long, default_value_t = 2.0)]
    pub x_hi: f64,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct Fig7Config {
    #[arg(long, value_delimiter = ',', default_values_t = three_families())]
    pub families: Vec<Family>,
    #[arg(long, value_delimiter = ',', default_values_t = vec![20, 40, 80])]
    pub sizes: Vec<usize>,
    /// Largest allowed gap against the exponential profile at the largest size.
    #[arg(long, default_value_t = 0.03)]
    pub tolerance_exponential: f64,
    /// The same against any other profile.
    #[arg(long, default_value_t = 0.05)]
    pub tolerance_profile: f64,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct Fig8Config {
    #[arg(long, value_delimiter = ',', default_values_t = three_families())]
    pub families: Vec<Family>,
    #[arg(long, value_delimiter = ',', default_values_t = vec![20, 40, 80])]
    pub sizes: Vec<usize>,
    /// Fraction of the mass excluded at each edge when comparing.
    #[arg(long, default_value_t = 0.1)]
    pub edge: f64,
    /// Pointwise relative tolerance at the largest size.
    #[arg(long, default_value_t = 0.05)]
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct CriticalPointConfig {
    #[arg(long, default_value_t = Family::PowerLaw(3.0))]
    pub family: Family,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialData {
    /// `f(x,0) = a e^{bx}` from `κ²` and `t₀`.
    Exponential,
    /// `f(x,0) = slope · x`.
    Linear,
    /// `f(x,0) = F(x)` for the scaling profile with `F(0) = f0`.
    Profile,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlowVariant {
    Standard,
    Hmp,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct PdeRunConfig {
    #[arg(long, value_enum, default_value_t = InitialData::Exponential)]
    pub initial: InitialData,
    #[arg(long, default_value_t = 0.25, allow_negative_numbers = true)]
    pub kappa_sq: f64,
    #[arg(long, default_value_t = 1.0)]
    pub t0: f64,
    #[arg(long, default_value_t = 1.0)]
    pub slope: f64,
    #[arg(long, default_value_t = 4.0)]
    pub f0: f64,
    #[arg(long, value_enum, default_value_t = FlowVariant::Standard)]
    pub variant: FlowVariant,
    #[arg(long, default_value_t = 12.0)]
    pub length: f64,
    #[arg(long, default_value_t = 0.01)]
    pub dx: f64,
    #[arg(long, default_value_t = 1.0)]
    pub horizon: f64,
    /// `f(0,t)` level treated as blow-up.
    #[arg(long, default_value_t = 400.0)]
    pub blowup_threshold: f64,
    /// Write every k-th diagnostic row.
    #[arg(long, default_value_t = 10)]
    pub record_every: usize,
    /// Relative tolerance against closed forms.
    #[arg(long, default_value_t = 1e-3)]
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ScalingProfileConfig {
    #[arg(long, default_value_t = 3.0)]
    pub f0: f64,
    #[arg(long, default_value_t = 200.0)]
    pub length: f64,
    #[arg(long, default_value_t = 0.01)]
    pub dx: f64,
    /// Start of the tail-fit window; the window ends at `length`.
    #[arg(long, default_value_t = 50.0)]
    pub tail_from: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TreeMode {
    Discrete,
    Continuous,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct TreeSampleConfig {
    #[arg(long, value_enum, default_value_t = TreeMode::Discrete)]
    pub mode: TreeMode,
    /// Family whose critical history drives discrete trees.
    #[arg(long, default_value_t = Family::TwoDelta)]
    pub family: Family,
    /// Root level of discrete trees.
    #[arg(long, default_value_t = 40)]
    pub m: usize,
    /// Root value of discrete trees.
    #[arg(long, default_value_t = 40)]
    pub x: usize,
    /// `F(0)` of the continuous-tree profile (4 is the exponential one).
    #[arg(long, default_value_t = 4.0)]
    pub profile_f0: f64,
    #[arg(long, default_value_t = 1.0)]
    pub mass: f64,
    #[arg(long, default_value_t = 1.0)]
    pub time: f64,
    #[arg(long, default_value_t = 0.1)]
    pub floor_fraction: f64,
    #[arg(long, default_value_t = 20_000)]
    pub trees: u64,
    /// Number of trees written out in full.
    #[arg(long, default_value_t = 5)]
    pub dump: u64,
}

#[derive(Debug, Clone, PartialEq, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct NuWindowConfig {
    #[arg(long, default_value_t = 3)]
    pub nu: usize,
    #[arg(long, default_value_t = 200.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = 0.02)]
    pub dx: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub tol: f64,
}

/// One experiment with its parameters.
#[derive(Debug, Clone, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "kebab-case")]
pub enum Experiment {
    /// Free-energy singularity (ln F)^-2 near p_c for light-tailed families.
    Fig2(Fig2Config),
    /// Free-energy singularity of the α = 3 family, both transforms.
    Fig3(Fig3Config),
    /// n²(1 - Q_n(0)) against 1/n at criticality.
    Fig5(Fig5Config),
    /// Rescaled distributions n²2^k Q_n(k) against the scaling function.
    Fig6(Fig6Config),
    /// No-branching probabilities of critical trees, discrete against continuous.
    Fig7(Fig7Config),
    /// Splitting probabilities of critical trees, discrete against continuous.
    Fig8(Fig8Config),
    /// Critical point of one family.
    CriticalPoint(CriticalPointConfig),
    /// Grid solution of the coalescence equation.
    PdeRun(PdeRunConfig),
    /// Scaling function for a given F(0).
    ScalingProfile(ScalingProfileConfig),
    /// Monte Carlo critical trees.
    TreeSample(TreeSampleConfig),
    /// Range of tail exponents with positive ν-ary profiles.
    NuWindow(NuWindowConfig),
}

/// Experiment kinds in catalog order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Fig2,
    Fig3,
    Fig5,
    Fig6,
    Fig7,
    Fig8,
    CriticalPoint,
    PdeRun,
    ScalingProfile,
    TreeSample,
    NuWindow,
}

impl ExperimentKind {
    pub const ALL: [Self; 11] = [
        Self::Fig2,
        Self::Fig3,
        Self::Fig5,
        Self::Fig6,
        Self::Fig7,
        Self::Fig8,
        Self::CriticalPoint,
        Self::PdeRun,
        Self::ScalingProfile,
        Self::TreeSample,
        Self::NuWindow,
    ];

    /// Subcommand name, also used as the output file stem.
    pub fn name(self) -> &'static str {
        match self {
            Self::Fig2 => "fig2",
            Self::Fig3 => "fig3",
            Self::Fig5 => "fig5",
            Self::Fig6 => "fig6",
            Self::Fig7 => "fig7",
            Self::Fig8 => "fig8",
            Self::CriticalPoint => "critical-point",
            Self::PdeRun => "pde-run",
            Self::ScalingProfile => "scaling-profile",
            Self::TreeSample => "tree-sample",
            Self::NuWindow => "nu-window",
        }
    }

    pub fn is_stochastic(self) -> bool {
        self == Self::TreeSample
    }
}

impl Experiment {
    pub fn kind(&self) -> ExperimentKind {
        match self {
            Self::Fig2(_) => ExperimentKind::Fig2,
            Self::Fig3(_) => ExperimentKind::Fig3,
            Self::Fig5(_) => ExperimentKind::Fig5,
            Self::Fig6(_) => ExperimentKind::Fig6,
            Self::Fig7(_) => ExperimentKind::Fig7,
            Self::Fig8(_) => ExperimentKind::Fig8,
            Self::CriticalPoint(_) => ExperimentKind::CriticalPoint,
            Self::PdeRun(_) => ExperimentKind::PdeRun,
            Self::ScalingProfile(_) => ExperimentKind::ScalingProfile,
            Self::TreeSample(_) => ExperimentKind::TreeSample,
            Self::NuWindow(_) => ExperimentKind::NuWindow,
        }
    }
}

/// A fully resolved run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ExperimentConfig {
    #[serde(flatten)]
    pub experiment: Experiment,
    /// Required by stochastic experiments, ignored by the others.
    pub seed: Option<u64>,
}

fn invalid(field: &str, message: impl Into<String>) -> CliError {
    CliError::Config {
        field: field.to_string(),
        message: message.into(),
    }
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(field, format!("must be positive, got {v}")))
    }
}

fn non_empty<T>(field: &str, v: &[T]) -> Result<()> {
    if v.is_empty() {
        Err(invalid(field, "must list at least one value"))
    } else {
        Ok(())
    }
}

fn sizes_at_least(field: &str, v: &[usize], min: usize) -> Result<()> {
    non_empty(field, v)?;
    match v.iter().find(|&&n| n < min) {
        Some(n) => Err(invalid(
            field,
            format!("every size must be at least {min}, got {n}"),
        )),
        None => Ok(()),
    }
}

fn window(families: &[Family], lo: f64, hi: f64, points: usize) -> Result<()> {
    positive("delta-min", lo)?;
    if !(hi > lo) {
        return Err(invalid(
            "delta-max",
            format!("must exceed delta-min = {lo}"),
        ));
    }
    if points < 3 {
        return Err(invalid("points", "a line fit needs at least 3 points"));
    }
    for f in families {
        let limit = f.max_excess()?;
        if hi >= limit {
            return Err(invalid(
                "delta-max",
                format!("{f} has a negative Q(0) beyond p_c + {limit:.4}; got {hi}"),
            ));
        }
    }
    Ok(())
}

fn grid_step(field: &str, horizon: f64, dx: f64) -> Result<()> {
    let steps = horizon / dx;
    if (steps - steps.round()).abs() > 1e-9 * steps.max(1.0) {
        return Err(invalid(
            field,
            format!("{horizon} is not a multiple of dx = {dx}"),
        ));
    }
    Ok(())
}

impl ExperimentConfig {
    /// Checks every parameter against the preconditions of the computation it feeds.
    pub fn validate(&self) -> Result<()> {
        if self.experiment.kind().is_stochastic() && self.seed.is_none() {
            return Err(invalid(
                "seed",
                "stochastic experiments need an explicit seed",
            ));
        }
        match &self.experiment {
            Experiment::Fig2(c) => {
                non_empty("families", &c.families)?;
                sizes_at_least("sizes", &c.sizes, 1)?;
                window(&c.families, c.delta_min, c.delta_max, c.points)?;
                positive("tolerance", c.tolerance)
            }
            Experiment::Fig3(c) => {
                sizes_at_least("sizes", &c.sizes, 1)?;
                window(&[c.family], c.delta_min, c.delta_max, c.points)
            }
            Experiment::Fig5(c) => {
                non_empty("families", &c.families)?;
                if c.n < 10 {
                    return Err(invalid("n", "must be at least 10"));
                }
                if c.rows < 2 {
                    return Err(invalid("rows", "must be at least 2"));
                }
                positive("tolerance", c.tolerance)
            }
            Experiment::Fig6(c) => {
                non_empty("families", &c.families)?;
                sizes_at_least("sizes", &c.sizes, 2)?;
                positive("x-max", c.x_max)?;
                positive("x-lo", c.x_lo)?;
                if !(c.x_hi > c.x_lo && c.x_hi <= c.x_max) {
                    return Err(invalid("x-hi", "must lie in (x-lo, x-max]"));
                }
                // 2^k Q_n(k) leaves the f64 range beyond k ~ 1000
                let largest = c.sizes.iter().max().copied().unwrap_or(0) as f64;
                if c.x_max * largest > 1000.0 {
                    return Err(invalid(
                        "x-max",
                        "x-max times the largest size must not exceed 1000",
                    ));
                }
                Ok(())
            }
            Experiment::Fig7(c) => {
                non_empty("families", &c.families)?;
                sizes_at_least("sizes", &c.sizes, 2)?;
                positive("tolerance-exponential", c.tolerance_exponential)?;
                positive("tolerance-profile", c.tolerance_profile)
            }
            Experiment::Fig8(c) => {
                non_empty("families", &c.families)?;
                sizes_at_least("sizes", &c.sizes, 4)?;
                if !(0.0..0.5).contains(&c.edge) {
                    return Err(invalid("edge", "must lie in [0, 0.5)"));
                }
                positive("tolerance", c.tolerance)
            }
            Experiment::CriticalPoint(_) => Ok(()),
            Experiment::PdeRun(c) => {
                positive("dx", c.dx)?;
                positive("horizon", c.horizon)?;
                positive("blowup-threshold", c.blowup_threshold)?;
                positive("tolerance", c.tolerance)?;
                grid_step("horizon", c.horizon, c.dx)?;
                if c.length <= c.horizon + c.dx {
                    return Err(invalid(
                        "length",
                        "the grid shrinks by the horizon and must outlast it",
                    ));
                }
                if c.record_every == 0 {
                    return Err(invalid("record-every", "must be at least 1"));
                }
                match c.initial {
                    InitialData::Exponential => positive("t0", c.t0),
                    InitialData::Linear => positive("slope", c.slope),
                    InitialData::Profile => positive("f0", c.f0),
                }
            }
            Experiment::ScalingProfile(c) => {
                positive("f0", c.f0)?;
                positive("dx", c.dx)?;
                if c.length < 10.0 * c.dx {
                    return Err(invalid("length", "must span at least 10 grid steps"));
                }
                positive("tail-from", c.tail_from)
            }
            Experiment::TreeSample(c) => {
                if c.trees == 0 {
                    return Err(invalid("trees", "must be at least 1"));
                }
                if c.dump > c.trees {
                    return Err(invalid("dump", "cannot exceed trees"));
                }
                match c.mode {
                    TreeMode::Discrete => {
                        if c.m < 2 {
                            return Err(invalid("m", "must be at least 2"));
                        }
                        if c.x == 0 {
                            return Err(invalid("x", "the root value must be positive"));
                        }
                        Ok(())
                    }
                    TreeMode::Continuous => {
                        positive("profile-f0", c.profile_f0)?;
                        positive("mass", c.mass)?;
                        positive("time", c.time)?;
                        if !(c.floor_fraction > 0.0 && c.floor_fraction < 1.0) {
                            return Err(invalid("floor-fraction", "must lie in (0, 1)"));
                        }
                        Ok(())
                    }
                }
            }
            Experiment::NuWindow(c) => {
                if c.nu < 2 {
                    return Err(invalid("nu", "the arity must be at least 2"));
                }
                positive("horizon", c.horizon)?;
                positive("dx", c.dx)?;
                positive("tol", c.tol)
            }
        }
    }

    /// The configuration as `key = value` lines, in the config-file format.
    pub fn to_lines(&self) -> Vec<String> {
        let value = serde_json::to_value(self).expect("configs serialize");
        let mut lines = Vec::new();
        if let serde_json::Value::Object(map) = value {
            // the tag first, then the parameters sorted by key
            if let Some(kind) = map.get("experiment").and_then(|v| v.as_str()) {
                lines.push(format!("experiment = {kind}"));
            }
            for (k, v) in map.iter().filter(|(k, _)| *k != "experiment") {
                let text = match v {
                    serde_json::Value::Null => continue,
                    serde_json::Value::String(s) => s.clone(),
                    serde_json::Value::Array(items) => items
                        .iter()
                        .map(|i| i.as_str().map_or_else(|| i.to_string(), str::to_string))
                        .collect::<Vec<_>>()
                        .join(","),
                    other => other.to_string(),
                };
                lines.push(format!("{k} = {text}"));
            }
        }
        lines
    }
}

/// Parses a `key = value` config file. Blank lines and `#` comments are skipped.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            invalid(
                &format!("line {}", i + 1),
                format!("expected `key = value`, got `{line}`"),
            )
        })?;
        let key = key.trim().to_string();
        if map.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(invalid(&key, "given twice in the config file"));
        }
    }
    Ok(map)
}

pub fn read_config_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| invalid("config", format!("{}: {e}", path.display())))?;
    parse_config_text(&text)
}

/// Merges a config file into a command line: each key not already given as a flag is
/// appended as `--key value`. The `experiment` key must agree with the subcommand.
pub fn merge_config(
    args: &[String],
    file: &BTreeMap<String, String>,
    subcommand: &str,
) -> Result<Vec<String>> {
    let given = |key: &str| {
        let flag = format!("--{key}");
        args.iter()
            .any(|a| *a == flag || a.starts_with(&format!("{flag}=")))
    };
    let mut out = args.to_vec();
    for (key, value) in file {
        if key == "experiment" {
            if value != subcommand {
                return Err(invalid(
                    "experiment",
                    format!("config file is for `{value}` but `{subcommand}` was requested"),
                ));
            }
            continue;
        }
        if !given(key) {
            out.push(format!("--{key}={value}"));
        }
    }
    Ok(out)
}
