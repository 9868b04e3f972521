use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod manifest;
mod overlay;
mod results;

/// Failure carrying the process exit code: 2 I/O or parse, 3 validation,
/// 4 numerical.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub msg: String,
}

impl CliError {
    pub fn validation(msg: impl Into<String>) -> Self {
        CliError { code: 3, msg: msg.into() }
    }
}

impl From<lodloc_core::Error> for CliError {
    fn from(e: lodloc_core::Error) -> Self {
        CliError {
            code: exit_code(&e),
            msg: e.to_string(),
        }
    }
}

pub fn exit_code(e: &lodloc_core::Error) -> u8 {
    use lodloc_core::Error::*;
    match e.root() {
        Io { .. } | Parse { .. } => 2,
        EulerSingular | ProjectionSingular | AllPointsSkipped => 4,
        _ => 3,
    }
}

#[derive(Parser, Debug)]
#[command(name = "lodloc", version, about = "Drone localization against LoD city models")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "LODLOC_JOBS")]
    jobs: Option<usize>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Extract the wireframe of an OBJ mesh into a LODWF file.
    Extract(ExtractArgs),
    /// Render synthetic probability-map pyramids at the given poses.
    Oracle(OracleArgs),
    /// Localize every query listed in a run manifest.
    Localize(LocalizeArgs),
    /// Recall and error report for a results file against ground truth.
    Eval(EvalArgs),
    /// Generate a procedural box city with ground-truth and prior poses.
    SynthScene(SynthArgs),
}

#[derive(Args, Debug)]
pub struct ExtractArgs {
    #[arg(long)]
    pub mesh: PathBuf,
    /// Crease threshold, degrees.
    #[arg(long, default_value_t = lodloc_core::geometry::DEFAULT_MU_DEG)]
    pub mu: f64,
    /// Point spacing used for the summary count, meters.
    #[arg(long, default_value_t = lodloc_core::geometry::DEFAULT_DELTA_M)]
    pub delta: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct OracleArgs {
    #[arg(long)]
    pub wireframe: PathBuf,
    #[arg(long)]
    pub intrinsics: PathBuf,
    /// Pose CSV; one pyramid is written per row.
    #[arg(long)]
    pub poses: PathBuf,
    /// Mesh for occlusion culling; without it every wireframe point is drawn.
    #[arg(long)]
    pub mesh: Option<PathBuf>,
    #[arg(long, default_value_t = lodloc_core::oracle::DEFAULT_SIGMA_PX)]
    pub sigma_px: f64,
    /// Spacing of the points splatted along each edge, meters.
    #[arg(long, default_value_t = 0.25)]
    pub delta: f64,
    #[arg(long, default_value_t = 0.0)]
    pub noise_amplitude: f64,
    #[arg(long, default_value_t = 0)]
    pub false_positives: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = lodloc_core::visibility::DEFAULT_VISIBILITY_EPS)]
    pub visibility_eps: f64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug)]
pub struct LocalizeArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Manifest override, `key=value`; repeatable, wins over the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Directory for PPM overlays of the projected wireframe.
    #[arg(long)]
    pub overlay: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub results: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long, default_value = "2:2,3:3,5:5")]
    pub thresholds: String,
    /// Directory for `recall.csv` and `errors.csv`.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub queries: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Half-width of the square city, meters.
    #[arg(long, default_value_t = 300.0)]
    pub half_extent: f64,
    /// Prior error half-widths `x,y,z,yaw`.
    #[arg(long, default_value = "10,10,30,7.5")]
    pub prior_error: String,
    /// Prior pitch/roll error half-width, degrees.
    #[arg(long, default_value_t = 1.0)]
    pub tilt_error: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let jobs = match cli.jobs {
        Some(0) => {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(3);
        }
        Some(n) => n,
        None => 0,
    };
    let result = match cli.cmd {
        Command::Extract(a) => commands::extract(&a),
        Command::Oracle(a) => commands::oracle(&a, jobs),
        Command::Localize(a) => commands::localize(&a, jobs),
        Command::Eval(a) => commands::eval(&a),
        Command::SynthScene(a) => commands::synth_scene(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.msg);
            ExitCode::from(e.code)
        }
    }
}
