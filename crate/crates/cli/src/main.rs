//! `lineloc`: lift point maps to line clouds, localize queries against them,
//! generate synthetic scenes, run sweeps and attacks, inspect map files.
//!
//! Exit codes: 0 on success, 2 on invalid input or usage, 3 when estimation
//! finds no pose.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "lineloc",
    version,
    about = "Privacy-preserving localization against 3D line clouds"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Lift a point map (CSV) to a line-cloud file.
    Lift(LiftArgs),
    /// Estimate the pose of a query against a map.
    Localize(LocalizeArgs),
    /// Write a synthetic scene: map points, one query, its rig and the truth.
    Synth(SynthArgs),
    /// Run a noise or density sweep over synthetic scenes and write a CSV.
    Bench(BenchArgs),
    /// Try to recover the points hidden in line clouds.
    Attack(AttackArgs),
    /// Print the header and statistics of a line-cloud file.
    Inspect(InspectArgs),
}

#[derive(Args)]
pub struct LiftArgs {
    /// Point CSV: x,y,z[,d0,...]
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: u64,
    /// Store lines in the quantized compact form.
    #[arg(long)]
    pub compact: bool,
    /// Earlier liftings to check against, in addition to an existing output file.
    #[arg(long)]
    pub prior: Vec<PathBuf>,
    /// Lift again even though a different lifting of the same points exists.
    #[arg(long)]
    pub allow_relift: bool,
    /// Also write a JSON copy of the map.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Args)]
pub struct LocalizeArgs {
    /// Line-cloud file, or a point CSV for the point-based methods.
    #[arg(long)]
    pub map: PathBuf,
    /// Observation CSV: cam_index,u_px,v_px[,depth][,d0,...]
    #[arg(long)]
    pub query: PathBuf,
    #[arg(long)]
    pub rig: PathBuf,
    /// p3p, p2p+u, gpnp, gpnp+u, p6l, p6l-min, p4l+u, align, align-line (align methods accept a +u suffix)
    #[arg(long)]
    pub method: String,
    #[arg(long)]
    pub scale_known: bool,
    /// Gravity in the map frame and in the query frame: gx,gy,gz/gx,gy,gz
    #[arg(long, allow_hyphen_values = true)]
    pub gravity: Option<String>,
    #[arg(long, default_value_t = 4.0)]
    pub threshold_px: f64,
    /// Inlier threshold of the 3D alignment methods, in map units.
    #[arg(long, default_value_t = 0.1)]
    pub threshold_3d: f64,
    /// Focal length converting the pixel threshold; defaults to the first camera's.
    #[arg(long)]
    pub focal: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Descriptor ratio-test bound.
    #[arg(long, default_value_t = 0.8)]
    pub ratio: f64,
    #[arg(long, default_value_t = 10_000)]
    pub max_iterations: usize,
    #[arg(long)]
    pub no_refine: bool,
    /// Truth written by `synth`; adds pose errors to the result.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 2000)]
    pub points: usize,
    /// Pixel noise standard deviation.
    #[arg(long, default_value_t = 1.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0.0)]
    pub outliers: f64,
    /// Cameras in the query rig (1 for a single camera).
    #[arg(long, default_value_t = 1)]
    pub rig_size: usize,
    #[arg(long, default_value_t = 500.0)]
    pub focal: f64,
    #[arg(long, default_value_t = 32)]
    pub descriptor_dim: usize,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum SweepKindArg {
    Noise,
    Density,
}

#[derive(Args)]
pub struct BenchArgs {
    #[arg(long, value_enum, default_value_t = SweepKindArg::Noise)]
    pub kind: SweepKindArg,
    /// Noise levels in pixels, or retained fractions.
    #[arg(long, value_delimiter = ',', default_value = "0,0.5,1,2,4")]
    pub grid: Vec<f64>,
    /// Methods in display form, e.g. p3p,p6l,p4l+u,align-line+s
    #[arg(long, value_delimiter = ',', default_value = "p3p,p6l")]
    pub methods: Vec<String>,
    /// Run the line and generalized methods on the whole rig.
    #[arg(long)]
    pub multi: bool,
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 2000)]
    pub points: usize,
    #[arg(long, default_value_t = 0.0)]
    pub outliers: f64,
    /// Pixel noise for density sweeps.
    #[arg(long, default_value_t = 1.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 3)]
    pub rig_size: usize,
    #[arg(long, default_value_t = 4.0)]
    pub threshold_px: f64,
    #[arg(long, default_value_t = 0.1)]
    pub threshold_3d: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AttackMethod {
    Density,
    Multilift,
}

#[derive(Args)]
pub struct AttackArgs {
    #[arg(long, value_enum)]
    pub method: AttackMethod,
    #[arg(long)]
    pub map: PathBuf,
    /// Second lifting of the same points (multilift).
    #[arg(long)]
    pub second: Option<PathBuf>,
    /// Point CSV with the true points, to score the recovery.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long, default_value_t = 0.05)]
    pub tau: f64,
    #[arg(long, default_value_t = 0.01)]
    pub pair_radius: f64,
    #[arg(long, default_value_t = 0.01)]
    pub cluster_radius: f64,
    #[arg(long, default_value_t = 2)]
    pub min_cluster_size: usize,
    /// Ratio-test bound when pairing the two liftings by descriptor.
    #[arg(long, default_value_t = 0.8)]
    pub ratio: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct InspectArgs {
    pub map: PathBuf,
    /// Print a JSON summary instead of text.
    #[arg(long)]
    pub json: bool,
}

/// Why a command failed, mapped to the exit code.
#[derive(Debug)]
pub enum Failure {
    Invalid(String),
    Estimation(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Invalid(_) => 2,
            Failure::Estimation(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Invalid(m) | Failure::Estimation(m) => m,
        }
    }
}

fn configure_threads() -> Result<(), Failure> {
    let Ok(v) = std::env::var("LINELOC_THREADS") else {
        return Ok(());
    };
    let n = v
        .trim()
        .parse::<usize>()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| {
            Failure::Invalid(format!(
                "LINELOC_THREADS must be a positive integer, got {v:?}"
            ))
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Invalid(format!("cannot configure threads: {e}")))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match cli.command {
        Command::Lift(a) => commands::lift(&a),
        Command::Localize(a) => commands::localize(&a),
        Command::Synth(a) => commands::synth(&a),
        Command::Bench(a) => commands::bench(&a),
        Command::Attack(a) => commands::attack(&a),
        Command::Inspect(a) => commands::inspect(&a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("lineloc: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
