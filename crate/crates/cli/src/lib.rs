//! Command-line front end for the DW-MTJ neuron simulator.

pub mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};
use serde_json::json;

use crate::config::RunConfig;
use crate::output::OutDir;

#[derive(Debug, Parser)]
#[command(
    name = "dwmtj",
    version,
    about = "Simulate DW-MTJ neurons and train spiking networks built from them"
)]
pub struct Cli {
    /// JSON config; defaults apply to anything it leaves out.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides io.out_dir).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Master seed (overrides master_seed).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Dotted override, e.g. `--set device.stochastic.sigma=0`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Amplitude ramp over many write/integrate/fire/reset cycles.
    DeviceSweep,
    /// Constant-amplitude train and its pulses-to-fire histogram.
    PulseTrain,
    /// Fit the velocity noise sigma to a pulses-to-fire histogram.
    Fit,
    /// Find the voltage-to-current factor that fires on a target pulse.
    Calibrate,
    /// Train spiking networks on Fashion-MNIST.
    SnnTrain,
    /// Evaluate a saved checkpoint.
    SnnEval,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::DeviceSweep => "device-sweep",
            Command::PulseTrain => "pulse-train",
            Command::Fit => "fit",
            Command::Calibrate => "calibrate",
            Command::SnnTrain => "snn-train",
            Command::SnnEval => "snn-eval",
        }
    }
}

/// Resolve the config, run the command and write `manifest.json` last.
/// Returns the command's summary.
pub fn run(cli: &Cli) -> Result<serde_json::Value> {
    let mut cfg: RunConfig = config::load(cli.config.as_deref(), &cli.overrides, cli.seed)?;
    if let Some(out) = &cli.out {
        cfg.io.out_dir = out.clone();
    }
    let mut out = OutDir::create(&cfg.io.out_dir, cfg.io.gzip)?;
    let summary = match cli.command {
        Command::DeviceSweep => commands::device_sweep(&cfg, &mut out)?,
        Command::PulseTrain => commands::pulse_train(&cfg, &mut out)?,
        Command::Fit => commands::fit(&cfg, &mut out)?,
        Command::Calibrate => commands::calibrate(&cfg, &mut out)?,
        Command::SnnTrain => commands::snn_train(&cfg, &mut out)?,
        Command::SnnEval => commands::snn_eval(&cfg, &mut out)?,
    };
    let manifest = json!({
        "command": cli.command.name(),
        "version": env!("CARGO_PKG_VERSION"),
        "outputs": out.written(),
        "summary": summary,
        "config": cfg,
    });
    out.json("manifest.json", &manifest)?;
    Ok(summary)
}
