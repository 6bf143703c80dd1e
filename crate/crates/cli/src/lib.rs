//! Command layer of the control laboratory: `run` executes a configured
//! experiment and writes the CSV set, `plot` renders a summary table to
//! SVG, `list-systems` prints the benchmark registry.
//!
//! Exit discipline: 0 on success, 2 for configuration and input errors,
//! 3 for runtime failures (output I/O, or every trial failing).

pub mod config;
pub mod svg;

use alqr::harness::{
    benchmark_keys, benchmark_registry, format_value, run_experiment_with_threads,
    write_experiment_csvs, HarnessError,
};
use config::{parse_config, ConfigError};
use std::fmt;
use std::fs;
use std::path::Path;
use svg::PlotError;

/// Worker-thread cap honored by `run`.
pub const THREADS_ENV: &str = "ALQR_THREADS";

/// Command-layer errors, each mapping to a fixed exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad invocation (wrong arguments).
    Usage(String),
    /// Bad configuration file or input data.
    Config(String),
    /// Failure while running or writing results.
    Runtime(String),
}

impl CliError {
    /// The process exit code this error maps to.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "usage error: {msg}"),
            CliError::Config(msg) => write!(f, "config error: {msg}"),
            CliError::Runtime(msg) => write!(f, "runtime error: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<PlotError> for CliError {
    fn from(e: PlotError) -> Self {
        CliError::Config(e.to_string())
    }
}

fn harness_error(e: HarnessError) -> CliError {
    match e {
        HarnessError::UnknownBenchmark(_) | HarnessError::InvalidConfig(_) => {
            CliError::Config(e.to_string())
        }
        other => CliError::Runtime(other.to_string()),
    }
}

/// Reads the worker cap from [`THREADS_ENV`]; absent means "use the
/// default pool", anything unparsable is a config error.
fn thread_cap() -> Result<Option<usize>, CliError> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(raw) => raw
            .trim()
            .parse::<usize>()
            .map(Some)
            .map_err(|e| CliError::Config(format!("{THREADS_ENV}={raw}: {e}"))),
    }
}

/// Runs the experiment described by the config file, writes the CSV set
/// into its `out_dir`, and returns the per-agent summary text.
pub fn cmd_run(config_path: &Path) -> Result<String, CliError> {
    let text = fs::read_to_string(config_path).map_err(|e| {
        CliError::Config(format!("cannot read {}: {e}", config_path.display()))
    })?;
    let cfg = parse_config(&text)?;
    let threads = thread_cap()?;
    let report = run_experiment_with_threads(&cfg, threads).map_err(harness_error)?;
    if report.completed_trials() == 0 {
        return Err(CliError::Runtime(format!(
            "all {} trials failed",
            report.failed_trials()
        )));
    }
    let written =
        write_experiment_csvs(&cfg.out_dir, &report).map_err(|e| CliError::Runtime(e.to_string()))?;
    let mut out = String::new();
    for agent in &report.agents {
        let final_median = agent.median_regret[report.horizon - 1];
        out.push_str(&format!(
            "{}: final median regret {} ({}/{} seeds",
            agent.name,
            format_value(final_median),
            agent.completed(),
            report.seeds,
        ));
        if agent.failures.is_empty() {
            out.push_str(")\n");
        } else {
            out.push_str(&format!(", {} failed)\n", agent.failures.len()));
        }
    }
    out.push_str(&format!(
        "wrote {} files to {}\n",
        written.len(),
        cfg.out_dir.display()
    ));
    Ok(out)
}

/// Renders a `summary.csv` to an SVG chart at `out_path`. Nothing is
/// written when the input is malformed or empty.
pub fn cmd_plot(csv_path: &Path, out_path: &Path) -> Result<String, CliError> {
    let text = fs::read_to_string(csv_path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", csv_path.display())))?;
    let rendered = svg::plot_summary(&text)?;
    fs::write(out_path, rendered).map_err(|e| CliError::Runtime(e.to_string()))?;
    Ok(format!("wrote {}\n", out_path.display()))
}

/// Lists the benchmark registry, one `key (n=.., m=..)` per line.
pub fn cmd_list_systems() -> String {
    let mut out = String::new();
    for key in benchmark_keys() {
        let (params, _) = benchmark_registry(key).expect("registry keys resolve");
        out.push_str(&format!(
            "{key} (n={} states, m={} inputs)\n",
            params.state_dim(),
            params.input_dim()
        ));
    }
    out
}

const USAGE: &str = "usage:\n  alqr run <config>\n  alqr plot <summary.csv> <out.svg>\n  alqr list-systems\n";

/// Dispatches a command line (without the program name) and returns the
/// process exit code, printing results to stdout and errors to stderr.
pub fn main_with_args(args: &[String]) -> i32 {
    let outcome = match args {
        [cmd, path] if cmd == "run" => cmd_run(Path::new(path)),
        [cmd, csv, out] if cmd == "plot" => cmd_plot(Path::new(csv), Path::new(out)),
        [cmd] if cmd == "list-systems" => Ok(cmd_list_systems()),
        _ => Err(CliError::Usage(USAGE.to_owned())),
    };
    match outcome {
        Ok(message) => {
            print!("{message}");
            0
        }
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
