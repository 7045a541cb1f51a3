use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod error;

use commands::Context;
use error::Result;

/// Bayesian travel-time tomography with sparse GMRF spatial priors.
#[derive(Parser)]
#[command(name = "gmrf-tomo", version)]
struct Cli {
    /// Only report warnings and errors.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (defaults to the config's "output").
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

impl Common {
    fn context(&self) -> Result<Context> {
        Context::load(&self.config, self.seed, self.out.clone(), self.workers)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write geometry, forward matrix and (synthetic) data files.
    Generate(Common),
    /// Run the configured chain on generated problem files.
    Sample {
        #[command(flatten)]
        common: Common,
        /// Directory holding the problem files (defaults to the output directory).
        #[arg(long)]
        problem: Option<PathBuf>,
        /// Also write the trace as CSV.
        #[arg(long)]
        export_csv: bool,
    },
    /// Posterior summaries, misfits and DIC from a trace.
    Diagnose {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        problem: Option<PathBuf>,
        /// Trace file (defaults to trace.bin in the output directory).
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Known truth (`index,value` CSV) for the model misfit and coverage.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        export_csv: bool,
    },
    /// Setup I/II scenario matrix over seeds and prior structures.
    Study(Common),
    /// Damped LSQR baseline estimate.
    Lsqr {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        problem: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(c) => {
            let ctx = c.context()?;
            let m = commands::generate(&ctx)?;
            log::info!("wrote {} files to {}", m.files.len() + 1, ctx.out.display());
        }
        Command::Sample { common, problem, export_csv } => {
            let ctx = common.context()?;
            let dir = problem.unwrap_or_else(|| ctx.out.clone());
            let m = commands::sample(&ctx, &dir, export_csv)?;
            if let Some(a) = m.psi_acceptance {
                log::info!("psi acceptance rate {a:.3}");
            }
        }
        Command::Diagnose {
            common,
            problem,
            trace,
            truth,
            export_csv,
        } => {
            let ctx = common.context()?;
            let dir = problem.unwrap_or_else(|| ctx.out.clone());
            let r = commands::diagnose(&ctx, &dir, trace.as_deref(), truth.as_deref(), export_csv)?;
            log::info!("DIC {:.2}, p_D {:.2}, {} significant nodes", r.dic, r.p_d, r.significant_count);
        }
        Command::Study(c) => {
            let ctx = c.context()?;
            commands::study(&ctx)?;
        }
        Command::Lsqr { common, problem } => {
            let ctx = common.context()?;
            let dir = problem.unwrap_or_else(|| ctx.out.clone());
            let r = commands::run_lsqr(&ctx, &dir)?;
            log::info!("lsqr: {} iterations, residual {:.4}", r.iterations, r.residual_norm);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.kind.exit_code() as u8)
        }
    }
}
