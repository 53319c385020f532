//! Command-line experiments on top of `qecopt`: config files, the command
//! implementations and their JSON/CSV/QASM artifacts.

pub mod commands;
pub mod config;
pub mod error;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use qecopt::designs::Estimator;
use serde_json::Value;

pub use commands::Overrides;
pub use config::RunConfig;
pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(
    name = "qecopt",
    version,
    about = "Learn and evaluate quantum error-correcting codes"
)]
pub struct Cli {
    /// Worker threads for seeds and state pairs (default: all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,

    /// Output directory; overrides the config and the QECOPT_OUT_DIR variable.
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Train a single seed instead of the configured list.
    #[arg(long)]
    pub seed_override: Option<u64>,

    /// Estimators to report (`two_design`, `weighted`, `haar:COUNT:SEED`).
    #[arg(long = "estimator")]
    pub estimators: Vec<Estimator>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Losses of unprotected qubits under a noise model.
    Baseline(Common),
    /// Train encoders over a seed sweep and keep the best.
    TrainEncoding(Common),
    /// Train recovery circuits for an encoder.
    TrainRecovery(Common),
    /// Probe the potential distance of a circuit.
    Distance {
        #[command(flatten)]
        common: Common,
        /// Circuit file: OpenQASM 2 or JSON (training report or encoder).
        #[arg(long, conflicts_with = "code")]
        circuit: Option<PathBuf>,
        /// A shipped code: bit_flip_3, approximate_4, css_422 or perfect_5.
        #[arg(long)]
        code: Option<String>,
        /// Logical qubits of the circuit (QASM files only).
        #[arg(long)]
        k: Option<usize>,
        /// Allowed worst-case loss; 0 is the exact probe.
        #[arg(long)]
        eps: Option<f64>,
    },
    /// Losses of a circuit under noise, optionally swept over a parameter.
    Evaluate(Common),
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            out_dir: self.out.clone(),
            seed: self.seed_override,
            estimators: (!self.estimators.is_empty()).then(|| self.estimators.clone()),
        }
    }

    fn config(&self) -> CliResult<Option<RunConfig>> {
        self.config.as_deref().map(RunConfig::load).transpose()
    }

    fn required_config(&self) -> CliResult<RunConfig> {
        self.config()?
            .ok_or_else(|| CliError::Config("--config is required".into()))
    }
}

fn to_value<T: serde::Serialize>(v: &T) -> CliResult<Value> {
    serde_json::to_value(v).map_err(|e| CliError::Numeric(e.to_string()))
}

/// Runs a parsed command line on a pool of `workers` threads and returns the
/// JSON summary printed on success.
pub fn run(cli: &Cli) -> CliResult<Value> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(CliError::Config("--workers must be at least 1".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| CliError::Config(format!("cannot start workers: {e}")))?;
    pool.install(|| dispatch(&cli.command))
}

fn dispatch(command: &Command) -> CliResult<Value> {
    match command {
        Command::Baseline(c) => {
            to_value(&commands::baseline(&c.required_config()?, &c.overrides())?)
        }
        Command::TrainEncoding(c) => {
            Ok(commands::train_encoding_cmd(&c.required_config()?, &c.overrides())?.1)
        }
        Command::TrainRecovery(c) => {
            Ok(commands::train_recovery_cmd(&c.required_config()?, &c.overrides())?.1)
        }
        Command::Distance {
            common,
            circuit,
            code,
            k,
            eps,
        } => {
            let cfg = common.config()?;
            let source = config::EncoderSource {
                code: code.clone(),
                circuit: circuit.clone(),
                k: *k,
            };
            let loaded = if code.is_some() || circuit.is_some() {
                Some(source.load(std::path::Path::new(""))?)
            } else {
                None
            };
            let out =
                commands::distance_cmd(cfg.as_ref(), loaded.as_ref(), *eps, &common.overrides())?;
            to_value(&out)
        }
        Command::Evaluate(c) => {
            match commands::evaluate_cmd(&c.required_config()?, &c.overrides())? {
                commands::Evaluation::Single(out) => to_value(&out),
                commands::Evaluation::Sweep(rows) => to_value(&rows),
            }
        }
    }
}
