//! `ibp`: sample, score and check generalized Indian buffet processes.
//!
//! Exit codes: 0 success, 1 a verification suite failed, 2 invalid input or
//! configuration, 3 explosive configuration, 4 resource or quadrature failure.

mod commands;
mod config;
mod minilang;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ibp_core::buffet::MatrixPrior;
use ibp_core::IbpError;

use crate::commands::{prior_flag, score_flag, Outcome};
use crate::config::{CommandName, Direction, Format, MethodArg, RunConfig};
use crate::minilang::ScoreArg;

#[derive(Parser)]
#[command(name = "ibp", version, about = "Generalized Indian buffet processes: sampling, marginal likelihoods, posteriors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a feature matrix by the sequential buffet scheme.
    Sample {
        #[command(flatten)]
        model: ModelArgs,
        /// Number of customers M.
        #[arg(long)]
        customers: Option<u64>,
        /// Sample even when the expected total score is infinite.
        #[arg(long)]
        allow_explosive: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Log-probability of a feature matrix.
    Logprob {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_enum)]
        method: Option<MethodArg>,
        /// Add the base-measure log-density of the atoms.
        #[arg(long)]
        include_atoms: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Posterior summary of a feature matrix: tilted prior, jump laws, take probabilities.
    Posterior {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Run a statistical verification suite.
    Verify {
        /// Suite name, or `all`.
        #[arg(long)]
        suite: Option<String>,
        /// Sample-size budget per check.
        #[arg(long)]
        budget: Option<u64>,
        #[command(flatten)]
        common: Common,
    },
    /// Map a Lévy density between the unit interval and the half-line.
    Transform {
        #[arg(long, value_parser = prior_flag)]
        prior: Option<MatrixPrior>,
        #[arg(long, value_enum)]
        direction: Option<Direction>,
        /// Relative agreement required between Laplace exponents of both sides.
        #[arg(long)]
        tolerance: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct ModelArgs {
    /// Prior, e.g. `beta:theta=1,beta=1` or `sbd:theta=1,alpha=0.2,beta=1,gamma=1/1/1`.
    #[arg(long, value_parser = prior_flag)]
    prior: Option<MatrixPrior>,
    /// Score model: `bernoulli`, `poisson:b=1`, `nb:r=2` or `multinomial:q=3`.
    #[arg(long, value_parser = score_flag)]
    score: Option<ScoreArg>,
    /// Condiments per dish for multinomial scores.
    #[arg(long)]
    q: Option<usize>,
}

#[derive(Args)]
struct Input {
    /// Feature matrix JSON.
    #[arg(long = "in", value_name = "FILE")]
    input: Option<PathBuf>,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; its fields override the flags.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    #[arg(long, env = "IBP_SEED")]
    seed: Option<u64>,
    /// Write the main document here instead of stdout.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

impl Common {
    fn apply(self, cfg: RunConfig) -> RunConfig {
        RunConfig { seed: self.seed, out: self.out, format: self.format, ..cfg }
    }
}

impl ModelArgs {
    fn apply(self, cfg: RunConfig) -> RunConfig {
        RunConfig { prior: self.prior, score: self.score, q: self.q, ..cfg }
    }
}

fn flag(b: bool) -> Option<bool> {
    b.then_some(true)
}

/// Flags as a config, plus the config file to lay over them.
fn from_flags(command: Command) -> (RunConfig, Option<PathBuf>) {
    let base = |name| RunConfig { command: Some(name), ..RunConfig::default() };
    match command {
        Command::Sample { model, customers, allow_explosive, common } => {
            let file = common.config.clone();
            let cfg = RunConfig { customers, allow_explosive: flag(allow_explosive), ..base(CommandName::Sample) };
            (common.apply(model.apply(cfg)), file)
        }
        Command::Logprob { input, model, method, include_atoms, common } => {
            let file = common.config.clone();
            let cfg = RunConfig {
                input: input.input,
                method,
                include_atoms: flag(include_atoms),
                ..base(CommandName::Logprob)
            };
            (common.apply(model.apply(cfg)), file)
        }
        Command::Posterior { input, model, common } => {
            let file = common.config.clone();
            let cfg = RunConfig { input: input.input, ..base(CommandName::Posterior) };
            (common.apply(model.apply(cfg)), file)
        }
        Command::Verify { suite, budget, common } => {
            let file = common.config.clone();
            (common.apply(RunConfig { suite, budget, ..base(CommandName::Verify) }), file)
        }
        Command::Transform { prior, direction, tolerance, common } => {
            let file = common.config.clone();
            (common.apply(RunConfig { prior, direction, tolerance, ..base(CommandName::Transform) }), file)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<Outcome> {
    let (flags, file) = from_flags(cli.command);
    let invoked = flags.command;
    let cfg = match file {
        Some(path) => flags.overlay(RunConfig::load(&path)?),
        None => flags,
    };
    if cfg.command != invoked {
        return Err(IbpError::Config(format!(
            "config is for `{:?}` but `{:?}` was invoked",
            cfg.command.unwrap_or(CommandName::Sample),
            invoked.unwrap_or(CommandName::Sample)
        ))
        .into());
    }
    match invoked {
        Some(CommandName::Sample) => commands::sample(&cfg),
        Some(CommandName::Logprob) => commands::logprob(&cfg),
        Some(CommandName::Posterior) => commands::posterior(&cfg),
        Some(CommandName::Verify) => commands::verify(&cfg),
        Some(CommandName::Transform) => commands::transform(&cfg),
        None => unreachable!("every subcommand names itself"),
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.chain().find_map(|c| c.downcast_ref::<IbpError>()) {
        Some(IbpError::Explosive(_)) => 3,
        Some(IbpError::Resource(_) | IbpError::Quadrature(_)) => 4,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(out) => {
            let mut stdout = std::io::stdout().lock();
            let mut stderr = std::io::stderr().lock();
            if stdout.write_all(out.stdout.as_bytes()).and_then(|_| stdout.flush()).is_err() {
                return ExitCode::from(1);
            }
            let _ = stderr.write_all(out.stderr.as_bytes());
            ExitCode::from(out.code)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
