//! `blockmc` command line.
//!
//! Exit codes: 0 success, 1 parse/build/config error, 2 runtime sampling
//! failure, 3 validation failure (the report is still written).

mod chains;
mod commands;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use blockmc::validation::ValidationConfig;
use clap::{Args, Parser, Subcommand};

use commands::{cmd_diagnose, cmd_predict, cmd_run, cmd_validate, load_model, note_path, RunOptions, ValidateOptions};

/// A failed command: exit code plus stderr lines of the form `error[CODE] ...`.
#[derive(Debug)]
pub struct Failure {
    pub exit: u8,
    pub lines: Vec<String>,
}

impl Failure {
    pub fn config(msg: impl Into<String>) -> Self {
        Self {
            exit: 1,
            lines: vec![format!("error[C0001]: {}", msg.into())],
        }
    }

    fn from_error(exit: u8, e: blockmc::Error) -> Self {
        let lines = if e.diagnostics().is_empty() {
            vec![format!("error[{}]: {e}", e.code())]
        } else {
            e.diagnostics().iter().map(ToString::to_string).collect()
        };
        Self { exit, lines }
    }

    pub fn build(e: blockmc::Error) -> Self {
        Self::from_error(1, e)
    }

    pub fn runtime(e: blockmc::Error) -> Self {
        Self::from_error(2, e)
    }
}

#[derive(Parser)]
#[command(name = "blockmc", version, about = "Block-wise stateful MCMC")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ModelArgs {
    /// Model file, or the name of a bundled template.
    #[arg(long)]
    spec: String,
    /// Data file (.json or .csv).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Seed for simulated template data when --data is absent.
    #[arg(long, default_value_t = 1)]
    data_seed: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Sample chains and write one CSV per chain plus a manifest.
    Run {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 20000)]
        burnin: usize,
        #[arg(long, default_value_t = 20000)]
        keep: usize,
        #[arg(long, default_value_t = 2)]
        chains: usize,
        #[arg(long, default_value = "chains")]
        out: PathBuf,
        /// Do not record the sampler trajectory; kept draws are streamed out.
        #[arg(long)]
        no_history: bool,
    },
    /// Run the validation checklist and write a JSON report.
    Validate {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        burnin: Option<usize>,
        #[arg(long)]
        keep: Option<usize>,
        #[arg(long, default_value_t = 2)]
        chains: usize,
        #[arg(long, default_value = "report.json")]
        out: PathBuf,
        /// One run at the standard length, never escalated.
        #[arg(long)]
        short: bool,
        #[arg(long, hide = true)]
        inject_gradient_fault: Option<String>,
    },
    /// Posterior predictive draws at new inputs from saved chains.
    Predict {
        /// Directory written by `run`.
        #[arg(long)]
        chains: PathBuf,
        /// New input values keyed by slot, e.g. `X_new`.
        #[arg(long)]
        inputs: PathBuf,
        #[arg(long, default_value = "predictions.csv")]
        out: PathBuf,
    },
    /// R-hat and ESS for two or more chain CSV files.
    Diagnose {
        files: Vec<PathBuf>,
        /// Write JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the bundled templates.
    Templates,
}

fn execute(cli: Cli) -> Result<u8, Failure> {
    match cli.command {
        Command::Run {
            model,
            burnin,
            keep,
            chains,
            out,
            no_history,
        } => {
            let loaded = load_model(&model.spec, model.data.as_deref(), model.data_seed)?;
            let opts = RunOptions {
                seed: model.seed,
                burnin,
                keep,
                chains,
                history: !no_history,
                out,
            };
            let manifest = cmd_run(&loaded, &opts)?;
            eprintln!(
                "wrote {} chains of {} draws to {} in {:.2}s",
                manifest.chains,
                manifest.keep,
                opts.out.display(),
                manifest.timings.total_seconds
            );
            Ok(0)
        }
        Command::Validate {
            model,
            burnin,
            keep,
            chains,
            out,
            short,
            inject_gradient_fault,
        } => {
            let loaded = load_model(&model.spec, model.data.as_deref(), model.data_seed)?;
            let mut config = if short {
                ValidationConfig::short(model.seed)
            } else {
                ValidationConfig::seeded(model.seed)
            };
            config.burnin = burnin.unwrap_or(config.burnin);
            config.keep = keep.unwrap_or(config.keep);
            config.chains = chains;
            if config.chains < 2 {
                return Err(Failure::config("validation needs at least 2 chains"));
            }
            let opts = ValidateOptions {
                config,
                out,
                gradient_fault: inject_gradient_fault,
            };
            let passed = cmd_validate(&loaded, &opts)?;
            eprintln!("report written to {}", opts.out.display());
            Ok(if passed { 0 } else { 3 })
        }
        Command::Predict { chains, inputs, out } => {
            let outcome = cmd_predict(&chains, &inputs, &out)?;
            if let Some(note) = &outcome.note {
                eprint!("{note}");
                eprintln!("note written to {}", note_path(&out).display());
            }
            Ok(0)
        }
        Command::Diagnose { files, out } => {
            let diag = cmd_diagnose(&files)?;
            let text = serde_json::to_string_pretty(&diag).expect("diagnostics serialize");
            match out {
                Some(p) => std::fs::write(&p, text).map_err(|e| Failure::config(format!("cannot write {}: {e}", p.display())))?,
                None => {
                    let _ = writeln!(std::io::stdout(), "{text}");
                }
            }
            Ok(0)
        }
        Command::Templates => {
            let mut out = std::io::stdout().lock();
            for name in blockmc::spec::template_names() {
                let _ = writeln!(out, "{name}");
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            for line in &f.lines {
                eprintln!("{line}");
            }
            ExitCode::from(f.exit)
        }
    }
}
