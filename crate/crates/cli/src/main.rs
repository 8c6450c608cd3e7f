//! `rflnn` — config-driven experiment runner.
//!
//! Exit codes: 0 success, 1 runtime failure (artifacts flagged partial in
//! the manifest), 2 configuration/usage error.

mod config;
mod datasets;
mod manifest;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "rflnn",
    version,
    about = "Random functional-linked network experiments: spectral traces, \
             guided-growth comparisons and Poisson solver benchmarks",
    after_help = "Artifacts are written to <out-dir>/<experiment>-<confighash>/. \
                  The base directory is, in order of precedence: --out-dir, the \
                  config's `output_dir`, $RFLNN_OUT_DIR, ./runs."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config.
    Run {
        /// Path to the experiment config.
        config: PathBuf,
        /// Base directory for artifacts (overrides config and environment).
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Worker threads for seed-parallel experiments (Poisson benchmarks
        /// always run solves sequentially to keep timings honest).
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Parse and validate a config without running anything.
    Validate {
        /// Path to the experiment config.
        config: PathBuf,
    },
    /// Dataset utilities.
    Datasets {
        #[command(subcommand)]
        command: DatasetsCommand,
    },
}

#[derive(Subcommand)]
enum DatasetsCommand {
    /// Print the download manifest (URLs, checksums, layout) for a known
    /// dataset.
    FetchManifest {
        /// Dataset name, e.g. `mnist`.
        name: String,
    },
}

const EXIT_RUNTIME: u8 = 1;
const EXIT_CONFIG: u8 = 2;

/// Prints a line to stdout, tolerating a closed pipe (`rflnn ... | head`).
fn emit(line: &str) {
    use std::io::Write;
    let _ = writeln!(std::io::stdout(), "{line}");
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run {
            config,
            out_dir,
            jobs,
        } => cmd_run(&config, out_dir.as_deref(), jobs),
        Command::Validate { config } => cmd_validate(&config),
        Command::Datasets {
            command: DatasetsCommand::FetchManifest { name },
        } => cmd_fetch_manifest(&name),
    }
}

fn cmd_run(
    config_path: &std::path::Path,
    out_dir: Option<&std::path::Path>,
    jobs: usize,
) -> ExitCode {
    if jobs == 0 {
        eprintln!("config error: --jobs must be at least 1");
        return ExitCode::from(EXIT_CONFIG);
    }
    let loaded = match config::load_config(config_path) {
        Ok(l) => l,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let dir = run::resolve_out_dir(out_dir, &loaded);
    match run::execute_and_record(&loaded, &dir, jobs) {
        Ok(summary) => {
            for line in &summary {
                emit(line);
            }
            emit(&format!("artifacts: {}", dir.display()));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("runtime error: {e}");
            eprintln!(
                "partial artifacts flagged in {}",
                dir.join("manifest.json").display()
            );
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}

fn cmd_validate(config_path: &std::path::Path) -> ExitCode {
    match config::load_config(config_path) {
        Ok(loaded) => {
            emit(&format!(
                "ok: valid {} config ({} seeds)",
                loaded.experiment.name(),
                loaded.experiment.seeds().len()
            ));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("config error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}

fn cmd_fetch_manifest(name: &str) -> ExitCode {
    match datasets::fetch_manifest(name) {
        Ok(text) => {
            emit(&text);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("config error: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}
