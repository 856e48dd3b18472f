use std::path::PathBuf;
use std::process::ExitCode;

use aerolink_cli::{emit_figure_data, run_experiment, ExperimentConfig, FigureKind};
use anyhow::Context;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "aerolink", version, about = "UAV-assisted vehicular network experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train and evaluate every agent, sweep point and seed in a config.
    Run { config: PathBuf },
    /// Write a figure table from a finished experiment directory.
    Figure {
        /// reward_curve, rate_vs_K, rate_vs_delay, energy_vs_slot, tradeoff_vs_V or runtime_table
        kind: FigureKind,
        dir: PathBuf,
    },
    /// Parse and validate a config without running it.
    Validate { config: PathBuf },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Run { config } => {
            let cfg = ExperimentConfig::load(&config).with_context(|| format!("loading {}", config.display()))?;
            let summary = run_experiment(&cfg)?;
            for g in &summary.groups {
                println!(
                    "{:<10} {:<28} final_reward={:.1} ±{:.1}  energy={:.2} J",
                    g.agent.to_string(),
                    g.point.label(),
                    g.mean.final_reward,
                    g.final_reward_stderr,
                    g.mean.final_moving_avg_energy_j
                );
            }
            println!("wrote {}", cfg.output_dir.display());
        }
        Command::Figure { kind, dir } => {
            let path = emit_figure_data(&dir, kind)?;
            println!("wrote {}", path.display());
        }
        Command::Validate { config } => {
            let cfg = ExperimentConfig::load(&config).with_context(|| format!("loading {}", config.display()))?;
            let runs = cfg.agents.len() * cfg.sweep_points().len() * cfg.seeds.len();
            println!("ok: {runs} runs of {} episodes", cfg.episodes);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
