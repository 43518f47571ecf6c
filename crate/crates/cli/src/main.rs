//! `gridfill`: synthesize, train, enrich, validate and run power flow on
//! transformer load data from the command line.

mod commands;
mod config;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

#[derive(Parser, Debug)]
#[command(name = "gridfill", version, about = "Enrich hourly transformer load data into 1-second series")]
struct Cli {
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic scenario with ground truth.
    Synth(SynthArgs),
    /// Train a teacher repository from high-resolution data.
    Train(TrainArgs),
    /// Enrich hourly student series with a trained repository.
    Enrich(EnrichArgs),
    /// Compare enriched series against ground truth.
    Validate(ValidateArgs),
    /// Run a quasi-static power flow over load series.
    Powerflow(PowerflowArgs),
    /// Merge validation and power-flow outputs into one summary.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Scenario JSON; defaults apply to missing fields.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Directory of teacher CSVs: `<ID>.csv` (1-s load) and `<ID>_customers.csv`.
    #[arg(long)]
    teachers: PathBuf,
    /// Run configuration JSON.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Repository output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EnrichArgs {
    /// Trained repository directory.
    #[arg(long)]
    repo: PathBuf,
    /// Hourly student load CSV (one or more transformers).
    #[arg(long, required_unless_present = "customers")]
    student: Option<PathBuf>,
    /// Customer smart-meter CSV for the students; sets teacher weights.
    /// Without it every teacher gets equal weight.
    #[arg(long)]
    customers: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Enriched 1-s load CSV.
    #[arg(long)]
    out: PathBuf,
    /// Per-interval bounds, levels and teacher weights as JSON.
    #[arg(long)]
    meta: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ValidateArgs {
    /// Ground-truth 1-s load CSV, file or directory.
    #[arg(long)]
    actual: PathBuf,
    /// Enriched 1-s load CSV, file or directory.
    #[arg(long)]
    enriched: PathBuf,
    /// Report JSON, keyed by transformer.
    #[arg(long)]
    report: PathBuf,
    /// Directory for per-transformer histogram CSVs.
    #[arg(long)]
    histograms: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    bins: usize,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PowerflowArgs {
    /// Feeder JSON; the bundled 12-bus feeder when omitted.
    #[arg(long)]
    feeder: Option<PathBuf>,
    /// Load CSVs, file or directory; series are matched to buses by transformer id.
    #[arg(long)]
    loads: PathBuf,
    /// Voltage magnitude CSV.
    #[arg(long)]
    out: PathBuf,
    /// Solve every n-th sample; overrides the configuration.
    #[arg(long)]
    stride: Option<usize>,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Validation report JSON.
    #[arg(long)]
    validation: Option<PathBuf>,
    /// Voltage CSV from `powerflow`.
    #[arg(long)]
    voltages: Option<PathBuf>,
    /// Voltage CSV computed from ground truth, for a distribution comparison.
    #[arg(long, requires = "voltages")]
    reference_voltages: Option<PathBuf>,
    /// Summary JSON.
    #[arg(long)]
    out: PathBuf,
}

fn fail(kind: &str, message: String, code: u8) -> ExitCode {
    eprintln!("{}", json!({ "error": { "kind": kind, "message": message } }));
    ExitCode::from(code)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail("usage", e.render().to_string().trim().to_string(), 2),
    };
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            return fail("config", format!("thread pool: {e}"), 1);
        }
    }
    let result = match &cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Train(a) => commands::train(a),
        Command::Enrich(a) => commands::enrich(a),
        Command::Validate(a) => commands::validate(a),
        Command::Powerflow(a) => commands::powerflow(a),
        Command::Report(a) => commands::report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e.kind(), e.to_string(), 1),
    }
}
