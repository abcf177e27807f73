use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use pml_cli::commands::{cmd_attack, cmd_bounds, cmd_figure, cmd_run, cmd_separation};
use pml_cli::config::Config;
use pml_cli::figures::ArtifactFormat;

#[derive(Debug, Parser)]
#[command(
    name = "pml",
    about = "Noisy equilibrium seeking with leakage accounting and recovery attacks",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct CommonArgs {
    /// Experiment configuration (TOML).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Output directory for artifacts.
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum FormatArg {
    Csv,
    Json,
    Both,
}

impl From<FormatArg> for ArtifactFormat {
    fn from(f: FormatArg) -> ArtifactFormat {
        match f {
            FormatArg::Csv => ArtifactFormat::Csv,
            FormatArg::Json => ArtifactFormat::Json,
            FormatArg::Both => ArtifactFormat::Both,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate the noisy dynamics and record trajectories.
    Run {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated seeds, one trajectory each; defaults to the
        /// config's run seed.
        #[arg(long, value_name = "LIST", value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
    /// Compute the privacy report: bounds, certificates, exact leakage.
    Bounds {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run the parameter-recovery attack ensemble.
    Attack {
        #[command(flatten)]
        common: CommonArgs,
        /// Override the ensemble master seed.
        #[arg(long, value_name = "SEED")]
        seed: Option<u64>,
    },
    /// Regenerate one of the bundled studies.
    Figure {
        /// Which study: 1 gain-vs-noise, 2 bounds-vs-empirical,
        /// 3 correlation sweep.
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
        which: u8,
        /// Optional configuration override; defaults to the study's
        /// built-in config.
        #[arg(long, value_name = "PATH")]
        config: Option<PathBuf>,
        #[arg(long, value_name = "DIR", default_value = "out")]
        out: PathBuf,
        /// Artifact kinds to emit.
        #[arg(long, value_enum, default_value = "both")]
        format: FormatArg,
        /// Worker threads for the per-level / per-player fan-out.
        #[arg(long, value_name = "INT")]
        parallel: Option<usize>,
    },
    /// Search for a player count at which exact individual leakage exceeds
    /// the per-player budget of a fixed geometric deployment.
    Separation {
        /// Per-player budget the constructed deployment must meet exactly.
        #[arg(long)]
        eps1: f64,
        /// Individual leakage the search must witness.
        #[arg(long)]
        eps2: f64,
        /// Leader bias of the correlated prior.
        #[arg(long)]
        alpha: f64,
        /// Copy probability of the correlated prior.
        #[arg(long, default_value_t = 0.5)]
        beta: f64,
        /// Largest player count to scan.
        #[arg(long, default_value_t = 20)]
        max_players: usize,
        #[arg(long, value_name = "DIR", default_value = "out")]
        out: PathBuf,
    },
}

fn load(common: &CommonArgs) -> Result<Config> {
    Config::from_path(&common.config)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { common, seeds } => {
            let cfg = load(&common)?;
            let seeds = seeds.unwrap_or_else(|| vec![cfg.run.seed]);
            let summaries = cmd_run(&cfg, &common.out, &seeds)?;
            for s in &summaries {
                println!(
                    "seed {}: profile {} ne_residual {:.3e}",
                    s.seed, s.profile_id, s.ne_residual_final
                );
            }
            println!("wrote {} trajectories to {}", summaries.len(), common.out.display());
        }
        Command::Bounds { common } => {
            let cfg = load(&common)?;
            let report = cmd_bounds(&cfg, &common.out)?;
            println!(
                "eps_expectation {:.6} <= eps_per_profile {:.6} <= eps_sensitivity_sum {:.6}",
                report.eps_expectation.eps,
                report.eps_per_profile.eps,
                report.eps_sensitivity_sum.eps
            );
            println!(
                "adjacent certificate {:.6} (sensitivity {:.6}), group budget {:.6}",
                report.adjacent.eps_log_ratio, report.adjacent.eps_sensitivity, report.eps_group
            );
            println!("report written to {}", common.out.join("report.json").display());
        }
        Command::Attack { common, seed } => {
            let cfg = load(&common)?;
            let series = cmd_attack(&cfg, &common.out, seed)?;
            let last = series.mean_gain.last().copied().unwrap_or(1.0);
            println!(
                "final mean gain {:.4} over {} samples ({} iterations)",
                last,
                series.n_samples,
                series.mean_gain.len() - 1
            );
            println!("series written to {}", common.out.display());
        }
        Command::Figure {
            which,
            config,
            out,
            format,
            parallel,
        } => {
            let cfg = match &config {
                Some(path) => Some(Config::from_path(path)?),
                None => None,
            };
            cmd_figure(which, cfg.as_ref(), &out, format.into(), parallel)
                .with_context(|| format!("figure {which}"))?;
            println!("figure {which} artifacts written to {}", out.display());
        }
        Command::Separation {
            eps1,
            eps2,
            alpha,
            beta,
            max_players,
            out,
        } => {
            let report = cmd_separation(eps1, eps2, alpha, beta, max_players, &out)?;
            println!(
                "separation at {} players: per-player budget {:.6}, exact individual leakage {:.6}",
                report.n_players, report.dp_formula, report.exact_individual
            );
            println!("report written to {}", out.join("separation.json").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
