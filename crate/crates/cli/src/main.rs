//! `spgan`: synthetic porous volumes, morphology analysis, slice-conditioned
//! GAN training and generation, and real-vs-synthetic population comparison.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 I/O error,
//! 4 invalid input data.

mod analysis;
mod error;
mod model;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use error::CliResult;
use output::Run;

#[derive(Parser)]
#[command(name = "spgan", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write procedural porous volumes as PGV1 files.
    Synth(SynthArgs),
    /// Porosity, cell counts and Minkowski functionals of one volume.
    Analyze(AnalyzeArgs),
    /// Two-point correlation curve of one phase.
    Tpc(TpcArgs),
    /// Porosity spread over a ladder of subvolume sizes, and the REV size.
    Rev(RevArgs),
    /// Train a model on a directory of PGV1 volumes.
    Train(TrainArgs),
    /// Generate volumes conditioned on a 2D slice.
    Generate(GenerateArgs),
    /// Compare morphology statistics of two volume populations.
    Compare(CompareArgs),
}

#[derive(Clone, Copy, Debug, Serialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum PhaseArg {
    Void,
    Solid,
}

impl From<PhaseArg> for spgan_core::Phase {
    fn from(p: PhaseArg) -> Self {
        match p {
            PhaseArg::Void => spgan_core::Phase::Void,
            PhaseArg::Solid => spgan_core::Phase::Solid,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum FieldKind {
    /// Thresholded smoothed Gaussian noise.
    Gaussian,
    /// Independent voxels.
    Bernoulli,
}

#[derive(Clone, Copy, Debug, Serialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorArg {
    Exhaustive,
    MonteCarlo,
}

#[derive(Args, Debug, Serialize)]
pub struct SynthArgs {
    #[arg(long, value_enum, default_value = "gaussian")]
    pub kind: FieldKind,
    /// Cube edge in voxels.
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    /// Smoothing length in voxels (gaussian only).
    #[arg(long, default_value_t = 2.0)]
    pub correlation_length: f64,
    /// Target void fraction.
    #[arg(long, default_value_t = 0.3)]
    pub porosity: f64,
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    /// Volume `i` uses seed `seed + i`.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub voxel_size: f64,
    #[arg(long, default_value = "volume")]
    pub prefix: String,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct AnalyzeArgs {
    /// PGV1 volume (header or raw path, or the common stem).
    pub volume: PathBuf,
    #[arg(long, value_enum, default_value = "void")]
    pub phase: PhaseArg,
    /// Report file; `.csv` gives one CSV row, anything else JSON. Printed to
    /// stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct TpcArgs {
    pub volume: PathBuf,
    #[arg(long)]
    pub max_r: usize,
    #[arg(long, value_enum, default_value = "monte-carlo")]
    pub estimator: EstimatorArg,
    /// Pairs per radius for the Monte Carlo estimator.
    #[arg(long, default_value_t = 10_000)]
    pub pairs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "void")]
    pub phase: PhaseArg,
    /// CSV file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct RevArgs {
    pub volume: PathBuf,
    /// Largest subvolume edge; defaults to the smallest volume edge.
    #[arg(long)]
    pub start: Option<usize>,
    #[arg(long, default_value_t = 10)]
    pub step: usize,
    #[arg(long, default_value_t = 2)]
    pub min_size: usize,
    #[arg(long, default_value_t = 20)]
    pub samples: usize,
    /// Largest accepted IQR / median of the sampled porosities.
    #[arg(long, default_value_t = 0.05)]
    pub tolerance: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory for `rev_curve.csv` and `rev.json`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct TrainArgs {
    /// JSON file with model and training settings.
    #[arg(long)]
    pub config: PathBuf,
    /// Directory of PGV1 training volumes.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Output directory (checkpoint, train log, resolved config).
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write a checkpoint every N iterations (0: only at the end).
    #[arg(long, default_value_t = 0)]
    pub checkpoint_every: u64,
    /// Continue from the checkpoint in `--out` up to the configured
    /// iteration count.
    #[arg(long)]
    pub resume: bool,
    /// Print a progress line every N iterations (0: never).
    #[arg(long, default_value_t = 50)]
    pub log_every: u64,
}

#[derive(Args, Debug, Serialize)]
pub struct GenerateArgs {
    /// Checkpoint directory written by `train`.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Conditioning slice stored as a one-plane PGV1 volume.
    #[arg(
        long,
        required_unless_present = "slice_from",
        conflicts_with = "slice_from"
    )]
    pub slice: Option<PathBuf>,
    /// Take the conditioning slice from the centre of this volume.
    #[arg(long)]
    pub slice_from: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct CompareArgs {
    /// Directory of real PGV1 volumes.
    pub real: PathBuf,
    /// Directory of synthetic PGV1 volumes.
    pub synthetic: PathBuf,
    /// Subvolumes drawn from each population.
    #[arg(long, default_value_t = 300)]
    pub samples: usize,
    /// Subvolume edge; defaults to the smallest edge in either directory.
    #[arg(long)]
    pub size: Option<usize>,
    #[arg(long, value_enum, default_value = "void")]
    pub phase: PhaseArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

fn print_resolved<T: Serialize>(command: &str, args: &T) {
    let json = serde_json::json!({ "command": command, "resolved": args });
    eprintln!("{json}");
}

fn run(cli: Cli, run: Run) -> CliResult<()> {
    match cli.command {
        Command::Synth(a) => {
            print_resolved("synth", &a);
            analysis::synth(&a, &run.with_seed(a.seed))
        }
        Command::Analyze(a) => {
            print_resolved("analyze", &a);
            analysis::analyze(&a, &run)
        }
        Command::Tpc(a) => {
            print_resolved("tpc", &a);
            analysis::tpc(&a, &run.with_seed(a.seed))
        }
        Command::Rev(a) => {
            print_resolved("rev", &a);
            analysis::rev(&a, &run.with_seed(a.seed))
        }
        Command::Train(a) => model::train(&a, &run),
        Command::Generate(a) => {
            print_resolved("generate", &a);
            model::generate(&a, &run.with_seed(a.seed))
        }
        Command::Compare(a) => {
            print_resolved("compare", &a);
            analysis::compare(&a, &run.with_seed(a.seed))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let ctx = Run {
        args: std::env::args().skip(1).collect(),
        seed: None,
    };
    match run(cli, ctx) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.kind.exit_code())
        }
    }
}
