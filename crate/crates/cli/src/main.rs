//! `fst3d` command-line front end.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fst3d::{ErrorKind, FstError};

#[derive(Parser, Debug)]
#[command(name = "fst3d", version, about = "3-D Fourier scattering features and SVM classification for hyperspectral cubes")]
pub struct Cli {
    /// Worker threads (falls back to FST3D_THREADS, then to all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Where to write the run manifest (defaults next to the output).
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic block scene (cube + labels).
    Synth(SynthArgs),
    /// Extract scattering (or Gabor) features from a cube.
    Extract(ExtractArgs),
    /// Draw a training mask.
    Sample(SampleArgs),
    /// Train a one-vs-rest linear SVM.
    Train(TrainArgs),
    /// Classify every pixel with a trained model.
    Predict(PredictArgs),
    /// Score a prediction against ground truth.
    Eval(EvalArgs),
    /// Search filter supports by repeated train/evaluate trials.
    Gridsearch(GridArgs),
    /// 1-nearest-neighbour label interpolation from a mask.
    KnnCheck(KnnArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// JSON spec file; overrides the individual flags.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, default_value_t = 64)]
    pub height: usize,
    #[arg(long, default_value_t = 64)]
    pub width: usize,
    #[arg(long, default_value_t = 32)]
    pub bands: usize,
    #[arg(long, default_value_t = 8)]
    pub classes: usize,
    /// Blocks per side of the scene grid.
    #[arg(long, default_value_t = 4)]
    pub layout: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Noise standard deviation.
    #[arg(long, conflicts_with = "snr_db")]
    pub noise_sigma: Option<f64>,
    /// Per-band signal-to-noise ratio in dB.
    #[arg(long)]
    pub snr_db: Option<f64>,
    /// Output directory (cube.json, labels.json, spec.json).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ExtractArgs {
    #[arg(long)]
    pub cube: PathBuf,
    /// Filter bank config JSON.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Stop after the first modulus layer.
    #[arg(long)]
    pub gabor_only: bool,
    /// Tile side in pixels.
    #[arg(long, default_value_t = 51)]
    pub patch: usize,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum StrategyArg {
    Random,
    Sss,
}

#[derive(Args, Debug)]
#[group(id = "size", required = true, multiple = false, args = ["per_class", "fraction"])]
pub struct SizeArgs {
    /// Training pixels per class.
    #[arg(long)]
    pub per_class: Option<usize>,
    /// Fraction of each class (random sampling only).
    #[arg(long)]
    pub fraction: Option<f64>,
}

#[derive(Args, Debug)]
pub struct SampleArgs {
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long, value_enum)]
    pub strategy: StrategyArg,
    #[command(flatten)]
    pub size: SizeArgs,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
#[group(id = "source", required = true, multiple = false, args = ["features", "cube_raw"])]
pub struct SourceArgs {
    /// Feature file from `extract`.
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Use raw spectra of this cube instead (baseline).
    #[arg(long)]
    pub cube_raw: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub mask: PathBuf,
    #[arg(long = "C", default_value_t = fst3d::svm::DEFAULT_C)]
    pub c: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = fst3d::svm::DEFAULT_TOL)]
    pub tol: f64,
    #[arg(long, default_value_t = fst3d::svm::DEFAULT_MAX_ITER)]
    pub max_iter: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub source: SourceArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub mask: PathBuf,
    /// Output directory (report.json, confusion.csv, map.png).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct GridArgs {
    #[arg(long)]
    pub cube: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    /// JSON candidate list.
    #[arg(long)]
    pub candidates: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
    #[arg(long, value_enum)]
    pub strategy: StrategyArg,
    #[command(flatten)]
    pub size: SizeArgs,
    #[arg(long)]
    pub seed: u64,
    #[arg(long = "C", default_value_t = fst3d::svm::DEFAULT_C)]
    pub c: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct KnnArgs {
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub mask: PathBuf,
}

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<commands::UsageError>().is_some() {
        return EXIT_USAGE;
    }
    match err.chain().find_map(|e| e.downcast_ref::<FstError>()) {
        Some(e) if e.kind() == ErrorKind::Numeric => EXIT_NUMERIC,
        _ => EXIT_DATA,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
