//! `mghs`: simulate, fit, select, score and diagnose multiple graphical
//! horseshoe models from the command line.

mod commands;
mod config;
mod error;
mod manifest;

use clap::{Args, Parser, Subcommand};
use config::{Config, Overrides};
use error::CliError;
use manifest::{now_unix, RunManifest, Versions};
use mghs_core::{ScenarioKind, SelectionMode};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser)]
#[command(name = "mghs", version, about = "Multiple graphical horseshoe estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Args)]
struct Flags {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    chains: Option<usize>,
    #[arg(long, global = true)]
    burnin: Option<usize>,
    #[arg(long, global = true)]
    iters: Option<usize>,
    #[arg(long, global = true)]
    thin: Option<usize>,
    /// Worker threads for running chains.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Hold R at the identity (independent GHS per group).
    #[arg(long, global = true)]
    freeze_r: bool,
    /// Fit the raw columns instead of standardizing them.
    #[arg(long, global = true)]
    no_standardize: bool,
    #[arg(long, global = true, value_parser = parse_mode)]
    select_mode: Option<SelectionMode>,
    /// Beta prior shape a of the selection threshold.
    #[arg(long, global = true)]
    a: Option<f64>,
    /// Beta prior shape b of the selection threshold.
    #[arg(long, global = true)]
    b: Option<f64>,
    /// Likelihood-only acceptance for the threshold update.
    #[arg(long, global = true)]
    hastings_correction: bool,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a scenario: group_<k>.csv files and truth.json.
    Simulate {
        #[arg(long)]
        scenario: Option<ScenarioKind>,
        #[arg(long)]
        p: Option<usize>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        groups: Option<usize>,
    },
    /// Run the chains on group CSV files (or a directory of group_<k>.csv).
    Fit { inputs: Vec<PathBuf> },
    /// Turn a fit into edge sets (adjacency.csv).
    Select {
        #[arg(long)]
        fit_dir: PathBuf,
    },
    /// Score a fit against a simulated truth (metrics.csv).
    Metrics {
        #[arg(long)]
        fit_dir: PathBuf,
        #[arg(long)]
        truth: PathBuf,
    },
    /// Check the G3p sampler and its limit laws.
    G3pCheck {
        /// Draws per grid cell.
        #[arg(long)]
        draws: Option<usize>,
    },
    /// PSRF and log-posterior traces across the chains of a fit.
    Diagnose {
        #[arg(long)]
        fit_dir: PathBuf,
    },
}

fn parse_mode(s: &str) -> Result<SelectionMode, String> {
    match s.to_ascii_lowercase().as_str() {
        "mpm" => Ok(SelectionMode::Mpm),
        "cut" => Ok(SelectionMode::Cut),
        _ => Err(format!("expected `mpm` or `cut`, got `{s}`")),
    }
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate { .. } => "simulate",
            Command::Fit { .. } => "fit",
            Command::Select { .. } => "select",
            Command::Metrics { .. } => "metrics",
            Command::G3pCheck { .. } => "g3p-check",
            Command::Diagnose { .. } => "diagnose",
        }
    }
}

fn overrides(f: &Flags, cmd: &Command) -> Overrides {
    let mut o = Overrides {
        seed: f.seed,
        chains: f.chains,
        burnin: f.burnin,
        iters: f.iters,
        thin: f.thin,
        threads: f.threads,
        freeze_r: f.freeze_r,
        no_standardize: f.no_standardize,
        select_mode: f.select_mode,
        a: f.a,
        b: f.b,
        hastings_correction: f.hastings_correction,
        out_dir: f.out_dir.clone(),
        ..Overrides::default()
    };
    match cmd {
        Command::Simulate { scenario, p, n, groups } => {
            o.scenario = *scenario;
            o.p = *p;
            o.n = *n;
            o.groups = *groups;
        }
        Command::G3pCheck { draws } => o.g3p_draws = *draws,
        _ => {}
    }
    o
}

fn run(cli: Cli) -> Result<(), CliError> {
    let started = Instant::now();
    let started_unix = now_unix();
    let base = match &cli.flags.config {
        Some(path) => Config::load(path)?,
        None => Config::default(),
    };
    let cfg = base.apply(&overrides(&cli.flags, &cli.command));
    cfg.validate()?;

    let outcome = match &cli.command {
        Command::Simulate { .. } => commands::simulate(&cfg)?,
        Command::Fit { inputs } => commands::fit(&cfg, inputs)?,
        Command::Select { fit_dir } => commands::select_edges(&cfg, fit_dir)?,
        Command::Metrics { fit_dir, truth } => commands::metrics(&cfg, fit_dir, truth)?,
        Command::G3pCheck { .. } => commands::g3p_check(&cfg)?,
        Command::Diagnose { fit_dir } => commands::diagnose(&cfg, fit_dir)?,
    };

    std::fs::create_dir_all(&cfg.out_dir).map_err(anyhow::Error::from)?;
    std::fs::write(cfg.out_dir.join("config.toml"), cfg.to_toml()).map_err(anyhow::Error::from)?;
    let manifest = RunManifest {
        command: cli.command.name().to_string(),
        seed: cfg.seed,
        config: cfg.clone(),
        versions: Versions::current(),
        inputs: outcome.inputs,
        started_unix,
        elapsed_secs: started.elapsed().as_secs_f64(),
        notes: outcome.notes,
    };
    for note in &manifest.notes {
        println!("note: {note}");
    }
    let text = serde_json::to_string_pretty(&manifest).map_err(anyhow::Error::from)?;
    std::fs::write(cfg.out_dir.join("manifest.json"), text).map_err(anyhow::Error::from)?;
    Ok(())
}

fn main() -> ExitCode {
    // clap exits with status 2 on usage errors
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
