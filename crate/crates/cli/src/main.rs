#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use signshape::verify::Preset;

use crate::config::CONFIG_HELP;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] signshape::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use signshape::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Core(E::NotConverged(_)) => 3,
            CliError::Core(E::Precondition(_) | E::Domain(_)) => 4,
            CliError::Core(E::InvalidGrid(_) | E::InvalidDescriptor(_) | E::GridMismatch(_) | E::Json(_)) => 2,
            CliError::Core(E::Csv(_) | E::Io(_)) | CliError::Io(_) | CliError::Failed(_) => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Command {
    /// Dirichlet (or relaxed, with `mu`) state of `f` on the mask.
    Dirichlet,
    /// Obstacle problem for `g`: solution, positivity set, KKT residuals.
    Obstacle,
    /// Volume-constrained minimization of `∫ g·u_Ω`.
    Optimize,
    /// Closed-form optimal ball for a radial `g`.
    Radial,
    /// Schwarz rearrangement of the mask's torsion function and Talenti comparison.
    Rearrange,
    /// Averaged cost over an ensemble of right-hand sides and its barycenter reduction.
    Stochastic,
    /// Property suite at a preset resolution.
    Verify,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum PresetArg {
    Small,
    Medium,
    Large,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Small => Preset::Small,
            PresetArg::Medium => Preset::Medium,
            PresetArg::Large => Preset::Large,
        }
    }
}

/// Shape optimization with sign-changing costs on a cell-centred grid.
///
/// Every command reads a JSON config and writes `summary.json` (plus `u.csv`,
/// `mask.csv`, `history.csv` where meaningful) under `--out`.
/// Exit codes: 0 success, 1 I/O or failed verification, 2 invalid config,
/// 3 solver non-convergence, 4 precondition violation.
/// Logging: SIGNSHAPE_LOG=error|info|debug.
#[derive(Debug, Parser)]
#[command(version, after_long_help = CONFIG_HELP)]
struct Cli {
    command: Command,
    /// Run configuration (JSON). Optional for `verify`.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads for parallel member solves [all cores].
    #[arg(long)]
    threads: Option<usize>,
    /// Resolution preset: small = 64, medium = 128, large = 256. Overrides `grid.n`.
    #[arg(long, value_enum)]
    preset: Option<PresetArg>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SIGNSHAPE_LOG", "error")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("signshape {}: {e}", format!("{:?}", cli.command).to_lowercase());
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(k) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    }
    std::fs::create_dir_all(&cli.out)?;
    let preset = cli.preset.map(Preset::from);
    let raw = match &cli.config {
        Some(path) => Some(std::fs::read(path)?),
        None if cli.command == Command::Verify => None,
        None => return Err(CliError::Config("--config is required".into())),
    };
    let mut config = match &raw {
        Some(bytes) => {
            let text = std::str::from_utf8(bytes).map_err(|e| CliError::Config(format!("not UTF-8: {e}")))?;
            let mut c = config::RunConfig::parse(text)?;
            let base = cli.config.as_deref().and_then(|p| p.parent()).unwrap_or(std::path::Path::new("."));
            c.resolve_paths(base);
            Some(c)
        }
        None => None,
    };
    if let (Some(c), Some(p)) = (config.as_mut(), preset) {
        c.grid.n = p.n();
    }
    let ctx = commands::Context {
        out: cli.out.clone(),
        config_hash: commands::config_hash(raw.as_deref().unwrap_or_default()),
        preset,
    };
    commands::dispatch(cli.command, config.as_ref(), &ctx)
}
