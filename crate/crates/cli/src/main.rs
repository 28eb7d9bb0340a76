use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use coalescence_cli::catalog::catalog;
use coalescence_cli::config::{merge_config, read_config_file, Experiment, ExperimentConfig};
use coalescence_cli::output::Check;
use coalescence_cli::CliError;

/// Numerical experiments on critical coalescence and its genealogies.
///
/// Exit status: 0 when every embedded check passes, 1 when a check fails, 2 for
/// invalid usage or configuration, 3 when the computation itself fails.
#[derive(Parser)]
#[command(name = "coalescence", version)]
struct Cli {
    /// `key = value` file of experiment parameters; flags override its entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Seed for stochastic experiments.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (defaults to the number of cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    #[command(flatten)]
    Run(Experiment),
    /// Lists the experiment kinds with their sample configurations.
    ListExperiments {
        /// Print the catalog as JSON.
        #[arg(long)]
        json: bool,
    },
}

fn parse() -> Result<Cli, CliError> {
    let args: Vec<String> = std::env::args().collect();
    let cli = Cli::try_parse_from(&args).unwrap_or_else(|e| e.exit());
    let (Some(path), Command::Run(e)) = (&cli.config, &cli.command) else {
        return Ok(cli);
    };
    let file = read_config_file(path)?;
    let merged = merge_config(&args, &file, e.kind().name())?;
    Ok(Cli::try_parse_from(&merged).unwrap_or_else(|e| e.exit()))
}

fn num(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-3 || v.abs() >= 1e6) {
        format!("{v:.6e}")
    } else {
        format!("{v}")
    }
}

fn print_check(c: &Check) {
    let verdict = if c.pass { "PASS" } else { "FAIL" };
    let bound = match (c.target, c.tolerance) {
        (Some(t), Some(tol)) => format!(" (target {}, {} tolerance {})", num(t), c.kind, num(tol)),
        (None, Some(tol)) => format!(" (limit {})", num(tol)),
        _ => String::new(),
    };
    if c.kind == "property" {
        println!("{verdict} {}", c.name);
    } else {
        println!("{verdict} {}: {}{bound}", c.name, num(c.measured));
    }
}

fn list(json: bool) -> ExitCode {
    let entries = catalog();
    if json {
        println!(
            "{}",
            serde_json::to_string_pretty(&entries).expect("catalog serializes")
        );
        return ExitCode::SUCCESS;
    }
    for e in entries {
        let figure = e.figure.map(|f| format!(" [{f}]")).unwrap_or_default();
        println!("{}{figure}: {}", e.kind.name(), e.description);
        for line in e.sample.to_lines().iter().skip(1) {
            println!("    {line}");
        }
    }
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match parse() {
        Ok(cli) => cli,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: cannot start {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    let experiment = match cli.command {
        Command::ListExperiments { json } => return list(json),
        Command::Run(e) => e,
    };
    let cfg = ExperimentConfig {
        experiment,
        seed: cli.seed,
    };
    match coalescence_cli::run(&cfg, &cli.out) {
        Ok(summary) => {
            for c in &summary.checks {
                print_check(c);
            }
            for p in &summary.outputs {
                println!("wrote {}", p.display());
            }
            if summary.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e @ CliError::Config { .. }) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
