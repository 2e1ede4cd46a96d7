use clap::{Parser, Subcommand};
use gcttt_cli::{
    cmd_ablate, cmd_eval, cmd_flops, cmd_freq_sweep, cmd_gen_data, cmd_pretrain, exit_code,
    init_workers, RunConfig,
};
use gcttt_core::ttt::EvalMode;
use gcttt_core::{Error, Result};
use std::path::PathBuf;
use std::process::ExitCode;

/// Goal-conditioned test-time training on desk-scale mazes.
#[derive(Parser)]
#[command(name = "gcttt", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an offline dataset (expert or play regime).
    GenData {
        #[arg(long)]
        config: PathBuf,
        /// Override the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pre-train the configured backbone on the dataset.
    Pretrain {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate checkpoints (frozen, ttt, or an ablation mode).
    Eval {
        #[arg(long)]
        config: PathBuf,
        /// frozen | ttt | critic_free | relevant_only | optimal_only | random
        #[arg(long, default_value = "ttt")]
        mode: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the data-selection ablation (random / relevant / optimal / full).
    Ablate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sweep the re-training period K and plot success against compute.
    FreqSweep {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated K values, e.g. 300,150,50.
        #[arg(long, default_value = "300,150,50")]
        k: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Emit the analytic FLOP-model table.
    Flops {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(config: &PathBuf, out: Option<PathBuf>) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(config)?;
    if let Some(out) = out {
        cfg.out_dir = out;
    }
    Ok(cfg)
}

fn run() -> Result<()> {
    init_workers();
    let cli = Cli::parse();
    match cli.command {
        Command::GenData { config, out } => {
            let cfg = load(&config, out)?;
            let path = cmd_gen_data(&cfg)?;
            println!("dataset written to {}", path.display());
        }
        Command::Pretrain { config, out } => {
            let cfg = load(&config, out)?;
            let dir = cmd_pretrain(&cfg)?;
            println!("checkpoints written to {}", dir.display());
        }
        Command::Eval { config, mode, out } => {
            let cfg = load(&config, out)?;
            let mode = EvalMode::parse(&mode)?;
            let report = cmd_eval(&cfg, mode)?;
            println!(
                "{} episodes, mean success {:.4} +- {:.4} (results in {})",
                report.rows.len(),
                report.aggregate.mean_success,
                report.aggregate.stderr,
                cfg.out_dir.display()
            );
        }
        Command::Ablate { config, out } => {
            let cfg = load(&config, out)?;
            let rows = cmd_ablate(&cfg)?;
            for row in rows {
                println!("{:<14} {:.4} +- {:.4}", row.mode, row.mean_success, row.stderr);
            }
        }
        Command::FreqSweep { config, k, out } => {
            let cfg = load(&config, out)?;
            let horizons: Result<Vec<usize>> = k
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<usize>()
                        .map_err(|_| Error::config(format!("bad K value `{s}`")))
                })
                .collect();
            let rows = cmd_freq_sweep(&cfg, &horizons?)?;
            for row in rows {
                println!("{:.4} +- {:.4}", row.mean_success, row.stderr);
            }
        }
        Command::Flops { config, out } => {
            let cfg = match config {
                Some(path) => load(&path, out)?,
                None => {
                    let mut cfg = RunConfig::default();
                    if let Some(out) = out {
                        cfg.out_dir = out;
                    }
                    cfg
                }
            };
            let path = cmd_flops(&cfg)?;
            println!("flop table written to {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err) as u8)
        }
    }
}
