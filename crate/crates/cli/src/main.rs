//! `monge`: transport maps for action-induced costs on finite graphs.
//!
//! Every command reads one TOML config and writes digest-stamped artifacts
//! into the output directory. Exit codes: 0 on success, 1 for usage or
//! configuration problems, 2 when a mathematical certification fails.

mod commands;
mod config;
mod output;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use monge_core::{Error, Result};

use commands::SourceSpan;
use config::RunConfig;
use output::OutDir;

#[derive(Parser)]
#[command(name = "monge", version, about = "Transport maps for action-induced edge costs")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides the seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; defaults to $MONGE_OUT_DIR, then the config's
    /// `output.dir`, then the current directory.
    #[arg(long, global = true, value_name = "DIR")]
    out_dir: Option<PathBuf>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write per-edge costs and shortest-path cost rows; optionally locate
    /// the critical shift of the configured running cost.
    Cost {
        /// Bisect the critical shift and write its certificate record.
        #[arg(long)]
        critical: bool,
        /// Which rows of the cost closure to write: `support`, `all`, or a
        /// comma-separated node list.
        #[arg(long, default_value = "support")]
        sources: SourceSpan,
    },
    /// Solve both transport stages; write plan, potential, map, metrics.
    Solve,
    /// Write the calibrated-edge graph, reach times, chains, and audits.
    Rays,
    /// Check the two-stage solver against exhaustive enumeration on seeded
    /// tiny instances.
    Oracle {
        /// Number of seeded instances.
        #[arg(long, default_value_t = 50)]
        seeds: u64,
    },
    /// Run the named verification checks; exit 0 only if every check passes.
    Verify,
    /// Bundle a full run into one JSON document.
    Export,
}

fn failure_exit_code(err: &Error) -> u8 {
    match err {
        Error::InvalidConfig(_)
        | Error::Connectivity(_)
        | Error::Marginal(_)
        | Error::TooLarge(_)
        | Error::MetricDegenerate { .. } => 1,
        _ => 2,
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::InvalidConfig(format!("cannot size thread pool: {e}")))?;
    }

    let config_path = cli
        .config
        .ok_or_else(|| Error::InvalidConfig("--config <PATH> is required".into()))?;
    let mut cfg = RunConfig::load(&config_path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }

    let dir = cli
        .out_dir
        .or_else(|| std::env::var_os("MONGE_OUT_DIR").map(PathBuf::from))
        .or_else(|| cfg.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    let manifold = cfg.build_manifold()?;
    let model_digest = cfg.build_model(&manifold)?.digest();
    drop(manifold);
    let out = OutDir::create(dir, cfg.digest(), model_digest, cfg.seed)?;

    match cli.command {
        Command::Cost { critical, sources } => {
            commands::cmd_cost(&cfg, &out, critical, &sources)?
        }
        Command::Solve => commands::cmd_solve(&cfg, &out)?,
        Command::Rays => commands::cmd_rays(&cfg, &out)?,
        Command::Oracle { seeds } => commands::cmd_oracle(&cfg, &out, seeds)?,
        Command::Verify => {
            if !verify::cmd_verify(&cfg, &out)? {
                return Ok(ExitCode::from(2));
            }
        }
        Command::Export => commands::cmd_export(&cfg, &out)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap exits with 2 by convention; here 2 is reserved for failed
            // mathematical certificates, so usage problems map to 1.
            let help = matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = e.print();
            return if help { ExitCode::SUCCESS } else { ExitCode::from(1) };
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(failure_exit_code(&e))
        }
    }
}
