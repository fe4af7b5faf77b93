//! The `biseld` batch front end. [`run`] parses arguments, executes one
//! subcommand and returns the process exit code: 0 on success, 1 on a
//! domain error, 2 on a usage error.

// negated comparisons reject NaN along with out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

mod commands;
pub mod config;

pub use config::ToolConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_DOMAIN: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Domain(#[from] biseld::Error),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Config(_) | CliError::Domain(_) => EXIT_DOMAIN,
        }
    }
}

pub(crate) fn io_err(context: impl Into<String>, e: std::io::Error) -> CliError {
    CliError::Domain(biseld::Error::Io {
        context: context.into(),
        source: e,
    })
}

#[derive(Debug, Parser)]
#[command(
    name = "biseld",
    version,
    about = "Binaural sound event localization and detection toolkit"
)]
struct Cli {
    /// JSON tool configuration; missing fields take their defaults.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Seed for every random choice; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Derive HRIR files from measured binaural and origin impulse responses.
    DeriveHrtf(DeriveHrtfArgs),
    /// ITD, ILD, spectral-cue and directivity tables for an HRIR database.
    AnalyzeCues(AnalyzeCuesArgs),
    /// Compute the 8-channel binaural feature of a stereo WAV.
    ExtractBtff(ExtractBtffArgs),
    /// Synthesize the binaural event dataset.
    SynthDataset(SynthDatasetArgs),
    /// Frequency response of a sealed-box speaker module.
    SimulateSpeaker(SimulateSpeakerArgs),
    /// Trainable and non-trainable parameter counts of a graph.
    CountParams(CountParamsArgs),
    /// Run a network on a feature file and write detected events.
    Infer(InferArgs),
    /// Score predicted label CSVs against references.
    Evaluate(EvaluateArgs),
    /// Vector activation map of one class at a pivot layer.
    Vam(VamArgs),
}

#[derive(Debug, Args)]
struct DeriveHrtfArgs {
    /// Directory of binaural impulse responses named a<AAA>e<±EE>.txt (two columns).
    #[arg(long)]
    bir: PathBuf,
    /// Origin impulse response, one sample per line.
    #[arg(long)]
    oir: PathBuf,
    /// Output directory for the derived HRIR files.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct AnalyzeCuesArgs {
    /// HRIR database directory; falls back to `paths.hrirs`.
    #[arg(long)]
    hrirs: Option<PathBuf>,
    /// Output directory for itd.csv, ild.csv, sc.csv and hpd.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ExtractBtffArgs {
    input: PathBuf,
    output: PathBuf,
    /// Also write one CSV per channel into this directory.
    #[arg(long, value_name = "DIR")]
    csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthDatasetArgs {
    #[arg(long)]
    events: Option<PathBuf>,
    #[arg(long)]
    noise: Option<PathBuf>,
    #[arg(long)]
    hrirs: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SimulateSpeakerArgs {
    /// Thiele-Small parameters as JSON; the built-in driver when omitted.
    #[arg(long)]
    tsp: Option<PathBuf>,
    /// Drive voltage, V.
    #[arg(long, default_value_t = 2.828)]
    veg: f64,
    /// Box volume, cm³ (`inf` for an infinite baffle).
    #[arg(long, default_value_t = 800.0)]
    vbox: f64,
    /// Listening distance, m.
    #[arg(long, default_value_t = 1.0)]
    r: f64,
    /// Output directory for response.csv and summary.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct CountParamsArgs {
    /// Graph JSON; the built-in v4 network when omitted.
    graph: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct InferArgs {
    graph: PathBuf,
    weights: PathBuf,
    btff: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Directory of reference label CSVs.
    #[arg(long = "ref")]
    reference: PathBuf,
    /// Directory of predicted label CSVs with matching file names.
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct VamArgs {
    graph: PathBuf,
    weights: PathBuf,
    btff: PathBuf,
    #[arg(long = "class")]
    class_idx: usize,
    #[arg(long, default_value = biseld::net::DEFAULT_PIVOT)]
    pivot: String,
    /// CSV of the upscaled map; a JSON sidecar is written next to it.
    #[arg(long)]
    out: PathBuf,
}

fn init_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("BISELD_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().ok().filter(|n| *n > 0).ok_or_else(|| {
        CliError::Usage(format!(
            "BISELD_THREADS must be a positive integer, got '{v}'"
        ))
    })?;
    // a second call in the same process keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global();
    Ok(())
}

/// Runs one invocation. `argv[0]` is the program name.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("biseld: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    init_threads()?;
    let cfg = ToolConfig::load(cli.config.as_deref(), cli.seed)?;
    match cli.command {
        Command::DeriveHrtf(a) => commands::derive_hrtf(&cfg, &a.bir, &a.oir, &a.out),
        Command::AnalyzeCues(a) => {
            let hrirs = pick(a.hrirs, &cfg.paths.hrirs, "--hrirs")?;
            commands::analyze_cues(&cfg, &hrirs, &a.out)
        }
        Command::ExtractBtff(a) => {
            commands::extract_btff(&cfg, &a.input, &a.output, a.csv.as_deref())
        }
        Command::SynthDataset(a) => {
            let events = pick(a.events, &cfg.paths.events, "--events")?;
            let hrirs = pick(a.hrirs, &cfg.paths.hrirs, "--hrirs")?;
            let noise = a.noise.or_else(|| cfg.paths.noise.clone());
            commands::synth_dataset(&cfg, &events, noise.as_deref(), &hrirs, &a.out)
        }
        Command::SimulateSpeaker(a) => {
            commands::simulate_speaker(&cfg, a.tsp.as_deref(), a.veg, a.vbox, a.r, &a.out)
        }
        Command::CountParams(a) => commands::count_params(a.graph.as_deref()),
        Command::Infer(a) => commands::infer(&cfg, &a.graph, &a.weights, &a.btff, &a.out),
        Command::Evaluate(a) => commands::evaluate(&cfg, &a.reference, &a.pred, &a.out),
        Command::Vam(a) => commands::vam(
            &cfg,
            &a.graph,
            &a.weights,
            &a.btff,
            a.class_idx,
            &a.pivot,
            &a.out,
        ),
    }
}

fn pick(
    flag: Option<PathBuf>,
    fallback: &Option<PathBuf>,
    name: &str,
) -> Result<PathBuf, CliError> {
    flag.or_else(|| fallback.clone()).ok_or_else(|| {
        CliError::Usage(format!(
            "{name} is required (or set it under \"paths\" in the config)"
        ))
    })
}
