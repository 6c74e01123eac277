//! Command-line interface.

use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::config::{ConfigError, ScenarioConfig};
use crate::{runner, scenarios};

pub const EXIT_OK: i32 = 0;
pub const EXIT_EXPERIMENT: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "cocycle-lab", version, about = "Lyapunov spectra, Oseledets flags and stationary measures of linear cocycles")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scenario file, or a bundled scenario by name.
    Run {
        config: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
        /// Output directory (default: $COCYCLE_LAB_OUT, then out/<scenario>).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the bundled scenarios, or those in a directory.
    ListScenarios {
        #[arg(long)]
        dir: Option<PathBuf>,
        /// Also print the digest of the listed catalog.
        #[arg(long)]
        digest: bool,
    },
}

fn load(config: &str) -> Result<ScenarioConfig, ConfigError> {
    let path = std::path::Path::new(config);
    if !path.exists() {
        if let Some(c) = scenarios::bundled_by_name(config) {
            return Ok(c);
        }
    }
    ScenarioConfig::load(path)
}

/// Runs the parsed command; returns the process exit code.
pub fn execute(cli: Cli, out: &mut impl Write, err: &mut impl Write) -> i32 {
    match cli.command {
        Command::Run { config, seed, workers, out: dir } => {
            let result = load(&config).and_then(|c| runner::run(&c, seed, workers));
            let output = match result {
                Ok(o) => o,
                Err(e) => {
                    let _ = writeln!(err, "error: {e}");
                    return EXIT_CONFIG;
                }
            };
            let dir = runner::output_dir(dir.as_deref(), &output.report.scenario);
            if let Err(e) = output.write(&dir) {
                let _ = writeln!(err, "error: cannot write {}: {e}", dir.display());
                return EXIT_EXPERIMENT;
            }
            for r in &output.report.experiments {
                match &r.error {
                    None => {
                        let _ = writeln!(out, "{:<14} ok", r.kind);
                    }
                    Some(m) => {
                        let _ = writeln!(out, "{:<14} FAILED: {m}", r.kind);
                    }
                }
            }
            let _ = writeln!(out, "report: {}", dir.join("report.json").display());
            if output.report.failed() {
                EXIT_EXPERIMENT
            } else {
                EXIT_OK
            }
        }
        Command::ListScenarios { dir, digest } => {
            let list = match dir {
                Some(d) => match scenarios::from_dir(&d) {
                    Ok(l) => l,
                    Err(e) => {
                        let _ = writeln!(err, "error: {e}");
                        return EXIT_CONFIG;
                    }
                },
                None => scenarios::bundled(),
            };
            for c in &list {
                let _ = writeln!(out, "{:<24} {}", c.name, c.description);
            }
            if digest {
                let _ = writeln!(out, "digest {}", scenarios::catalog_digest(&list));
            }
            EXIT_OK
        }
    }
}
