use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use twlab::harness::{run, RunConfig};

#[derive(Parser)]
#[command(name = "twlab", version, about = "Edge statistics, resolvent diagnostics and matrix flows for generalized Wigner ensembles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sup-distance between rescaled λ_max and the Tracy–Widom law.
    EdgeCdf(Overrides),
    /// Sup-distance across N with a power-law fit.
    RateFit(Overrides),
    /// Both sides of the eigenvalue-counting sandwich on an energy grid.
    Sandwich(Overrides),
    /// Finite-difference time derivative along the Gaussian flow against its exact right side.
    FlowDerivative(Overrides),
    /// Third and fourth order cumulant terms along the entry-law flow.
    K3k4(Overrides),
    /// E[Im m_N] along a flow against the Gronwall band.
    Gronwall(Overrides),
    /// Local-law deviation ratios.
    Locallaw(Overrides),
    /// N^{1/3} E[Im m_N] near the spectral edge across N.
    EdgeBound(Overrides),
    /// Tabulate F1 and F2 as CSV.
    TwTable(Overrides),
    /// Tracy–Widom utilities.
    Tw {
        #[command(subcommand)]
        command: TwCommand,
    },
    /// Run every deterministic invariant suite.
    Verify(Overrides),
    /// Run the experiment named in a configuration file.
    Run(Overrides),
}

#[derive(Subcommand)]
enum TwCommand {
    /// Tabulate F1 and F2 as CSV.
    Table(Overrides),
}

#[derive(Args, Clone)]
struct Overrides {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated list of dimensions.
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    /// Trials at every dimension, replacing any per-dimension counts.
    #[arg(long)]
    trials: Option<usize>,
}

impl Overrides {
    fn config(&self, experiment: Option<&str>) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path).with_context(|| format!("reading {}", path.display()))?,
            None => RunConfig::for_experiment(experiment.context("`run` needs --config")?)?,
        };
        if let Some(e) = experiment {
            cfg.experiment = e.to_string();
        }
        if let Some(s) = self.seed {
            cfg.master_seed = s;
        }
        if let Some(w) = self.workers {
            cfg.workers = w;
        }
        if let Some(o) = &self.out {
            cfg.out_dir = o.clone();
        }
        if let Some(n) = &self.n {
            cfg.n_list = n.clone();
        }
        if let Some(t) = self.trials {
            cfg.trials = t;
            cfg.trials_by_n.clear();
        }
        Ok(cfg)
    }
}

fn dispatch(cli: Cli) -> Result<bool> {
    let (experiment, o) = match cli.command {
        Command::EdgeCdf(o) => (Some("edge-cdf"), o),
        Command::RateFit(o) => (Some("rate-fit"), o),
        Command::Sandwich(o) => (Some("sandwich"), o),
        Command::FlowDerivative(o) => (Some("flow-derivative"), o),
        Command::K3k4(o) => (Some("k3k4"), o),
        Command::Gronwall(o) => (Some("gronwall"), o),
        Command::Locallaw(o) => (Some("locallaw"), o),
        Command::EdgeBound(o) => (Some("edge-bound"), o),
        Command::TwTable(o) | Command::Tw { command: TwCommand::Table(o) } => (Some("tw-table"), o),
        Command::Verify(o) => (Some("verify"), o),
        Command::Run(o) => (None, o),
    };
    let cfg = o.config(experiment)?;
    let outcome = run(&cfg)?;
    for r in &outcome.rows {
        let n = r.n.map(|n| format!(" n={n}")).unwrap_or_default();
        let err = r.stderr.map(|s| format!(" ± {s:.3e}")).unwrap_or_default();
        let verdict = if r.pass.is_empty() { String::new() } else { format!(" [{}]", r.pass) };
        println!("{}{n}: {:.6e}{err}{verdict}", r.stat, r.value);
    }
    println!(
        "{} rows, {} failing, config {} -> {}",
        outcome.rows.len(),
        outcome.failures(),
        outcome.config_hash,
        outcome.csv_path.display()
    );
    Ok(outcome.all_pass())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
