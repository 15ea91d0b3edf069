mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use stabent::ErrorClass;

use crate::commands::Ctx;
use crate::config::{ExperimentConfig, RateLemma, TheoremArg};
use crate::output::Output;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] stabent::Error),
    #[error("i/o: {0}")]
    Io(String),
    #[error("{0} check(s) failed")]
    ChecksFailed(usize),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.class() == ErrorClass::Input => 2,
            CliError::Core(_) | CliError::Io(_) => 3,
            CliError::ChecksFailed(_) => 1,
        }
    }
}

#[derive(Parser)]
#[command(name = "stabent", version, about = "Entropy and rate bounds for stochastic stabilization")]
struct Cli {
    /// JSON experiment config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides the config and STABENT_OUT_DIR.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Sample trajectories, open or closed loop.
    Simulate,
    /// Cesàro estimates of visit frequencies and moments.
    Ams,
    /// Lower bound on the stabilizing rate.
    Bound {
        #[arg(long, value_enum)]
        theorem: Option<TheoremArg>,
    },
    /// Greedy spanning-set counts and the fitted rate.
    Entropy,
    /// Capacity and random-coding sweep.
    Channel,
    /// Counting lemmas.
    Lemmas {
        #[command(subcommand)]
        which: LemmaVerb,
    },
    /// Estimation experiment under channel noise.
    NoisyDemo,
    /// Run the packaged worked examples.
    Reproduce,
}

#[derive(Subcommand)]
enum LemmaVerb {
    /// Binomial tail and subset-count rates.
    Rate {
        #[arg(long)]
        horizon: Option<usize>,
        #[arg(long)]
        r: Option<f64>,
        #[arg(long, default_value_t = 0.5)]
        alpha: f64,
        #[arg(long, default_value_t = 0.5)]
        beta: f64,
    },
    /// Disjoint subcollection of intervals.
    Intervals {
        /// Interval as `a,b`; repeat for more.
        #[arg(long = "interval", value_parser = parse_interval)]
        intervals: Vec<(f64, f64)>,
    },
}

fn parse_interval(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected a,b")?;
    let p = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("'{v}': {e}"));
    Ok((p(a)?, p(b)?))
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (mut config, base) = match &cli.config {
        Some(path) => {
            let base = path.parent().map(PathBuf::from).unwrap_or_default();
            (config::load(path)?, base)
        }
        None => (ExperimentConfig::default(), PathBuf::from(".")),
    };
    if cli.seed.is_some() {
        config.seed = cli.seed;
    }
    let dir = cli
        .out
        .clone()
        .or_else(|| config.output_dir.clone().map(|d| base.join(d)))
        .or_else(|| std::env::var_os("STABENT_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("stabent-out"));
    let mut ctx = Ctx { config, base, out: Output::new(dir) };
    match cli.verb {
        Verb::Simulate => commands::simulate(&mut ctx)?,
        Verb::Ams => commands::ams(&mut ctx)?,
        Verb::Bound { theorem } => commands::bound(&mut ctx, theorem)?,
        Verb::Entropy => commands::entropy(&mut ctx)?,
        Verb::Channel => commands::channel(&mut ctx)?,
        Verb::Lemmas { which: LemmaVerb::Rate { horizon, r, alpha, beta } } => {
            let flags = match (horizon, r) {
                (Some(horizon), Some(r)) => Some(RateLemma { horizon, r, alpha, beta }),
                (None, None) => None,
                _ => return Err(stabent::Error::Input("lemmas rate: --horizon and --r go together".into()).into()),
            };
            commands::lemma_rate(&mut ctx, flags)?
        }
        Verb::Lemmas { which: LemmaVerb::Intervals { intervals } } => commands::lemma_intervals(&mut ctx, intervals)?,
        Verb::NoisyDemo => commands::noisy_demo(&mut ctx)?,
        Verb::Reproduce => {
            let failed = commands::reproduce(&mut ctx)?;
            if failed > 0 {
                return Err(CliError::ChecksFailed(failed));
            }
        }
    }
    for path in &ctx.out.written {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
