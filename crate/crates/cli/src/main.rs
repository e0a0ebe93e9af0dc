//! `echolab` — synthesize drive signals, simulate pulse-echo acquisitions,
//! and extract characterization metrics, driven by a TOML run configuration.

mod commands;
mod config;

use anyhow::Result;
use clap::{Parser, Subcommand};
use config::RunConfig;
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "echolab",
    version,
    about = "ultrasonic array characterization toolkit"
)]
struct Cli {
    /// Run configuration (TOML); the built-in default reproduces the
    /// reference 128-element / 7.5 MHz setup.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (overrides `out_dir` from the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Master seed (overrides `seed` from the config).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for simulation and beamforming (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the PWM and coded drive waveforms from the config.
    Synth,
    /// Simulate every configured transmit scheme; one container per event.
    Simulate,
    /// Produce per-figure CSVs, resolution reports, and beamwidth profiles.
    Analyze {
        /// Overlay the diverging-wave grating profiles with the synthetic
        /// transmit aperture reference ("sta").
        #[arg(long)]
        compare: Option<String>,
    },
    /// Aggregate the manifest and analysis artifacts into report.txt.
    Report,
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()?;
    }
    let (mut cfg, config_bytes) = RunConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let out = cli.out.unwrap_or_else(|| PathBuf::from(&cfg.out_dir));
    match cli.command {
        Command::Synth => commands::cmd_synth(&cfg, &config_bytes, &out),
        Command::Simulate => commands::cmd_simulate(&cfg, &config_bytes, &out),
        Command::Analyze { compare } => {
            let compare_sta = match compare.as_deref() {
                None => false,
                Some("sta") => true,
                Some(other) => anyhow::bail!("unknown --compare target '{other}' (only 'sta')"),
            };
            commands::cmd_analyze(&cfg, &config_bytes, &out, compare_sta)
        }
        Command::Report => commands::cmd_report(&out).map(|_| ()),
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = run() {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
