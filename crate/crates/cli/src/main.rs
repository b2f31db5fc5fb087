use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use jointeq::harness::{CountRange, ScenarioSpec};
use jointeq::traingraph::Optimizer;

mod commands;

#[derive(Parser, Debug)]
#[command(name = "jointeq", version, about = "Transceiver-joint equalization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the training dataset.
    Dataset(Common),
    /// Receiver-only evaluation; writes the converged receiver taps.
    Baseline(Common),
    /// Train the pre-equalizer from the dataset and baseline taps.
    Train(TrainArgs),
    /// Evaluate receiver-only and joint SNR with trained pre-equalizer taps.
    Evaluate(EvaluateArgs),
    /// Full sweep: baseline, training and joint evaluation for every point.
    Sweep(Common),
    /// Re-emit the files of a saved report and print its summary.
    Report(ReportArgs),
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Scenario file (TOML). Overrides --scenario.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in scenario.
    #[arg(long, default_value = "loss-only")]
    scenario: String,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of seeds per point.
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// WSS count `n` or range `a..b`.
    #[arg(long)]
    wss_count: Option<CountRange>,
    /// SSFM step in meters.
    #[arg(long)]
    ssfm_step: Option<f64>,
    #[arg(long)]
    optimizer: Option<Optimizer>,
    /// Print the resolved scenario and exit.
    #[arg(long)]
    dry_run: bool,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    /// Dataset file; default `<out>/dataset.txt`, generated when missing.
    #[arg(long)]
    dataset: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[command(flatten)]
    common: Common,
    /// Pre-equalizer tap file used for every point; default is the trained
    /// taps of each point under `<out>/taps`.
    #[arg(long)]
    taps: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Saved report; default `<out>/report.json`.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl Common {
    fn spec(&self) -> jointeq::Result<ScenarioSpec> {
        let mut spec = match &self.config {
            Some(path) => ScenarioSpec::load(path)?,
            None => ScenarioSpec::preset(&self.scenario)?,
        };
        if let Some(seed) = self.seed {
            spec.seed = seed;
        }
        if let Some(n) = self.seeds {
            spec.seeds = n;
        }
        if let Some(w) = self.wss_count {
            spec.wss_count = w;
        }
        if let Some(h) = self.ssfm_step {
            spec.set_ssfm_step(h);
        }
        if let Some(o) = self.optimizer {
            spec.train.optimizer = o;
        }
        spec.validate()?;
        Ok(spec)
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    use jointeq::Error as E;
    if err.downcast_ref::<commands::SweepDiverged>().is_some() {
        return 3;
    }
    match err.downcast_ref::<E>() {
        Some(E::Config(_) | E::Shape(_)) => 2,
        Some(E::TrainingDivergence { .. }) => 3,
        Some(E::Io { .. } | E::Parse { .. }) => 4,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Dataset(c) => commands::dataset(&c),
        Command::Baseline(c) => commands::baseline(&c),
        Command::Train(a) => commands::train(&a.common, a.dataset.as_deref()),
        Command::Evaluate(a) => commands::evaluate(&a.common, a.taps.as_deref()),
        Command::Sweep(c) => commands::sweep(&c),
        Command::Report(a) => commands::report(a.input.as_deref(), &a.out),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
