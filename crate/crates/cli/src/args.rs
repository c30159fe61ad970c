use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "subqkd",
    version,
    about = "Key rates, noise models and certificates for subspace high-dimensional QKD"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Key rate of the isotropic state for every (d, k, v) on the grid.
    KeyrateIso {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        grid: GridArgs,
        /// Visibilities, e.g. `0.5,0.9` or `0..1:11`.
        #[arg(long)]
        v: Option<String>,
    },
    /// Secret bits per second for time-bin encoding.
    KeyrateTemporal {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        noise: NoiseArgs,
    },
    /// Secret bits per second for spatial-mode encoding.
    KeyrateSpatial {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        noise: NoiseArgs,
    },
    /// Key rate over a visibility grid (iso) or environment-rate grid.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        noise: NoiseArgs,
        #[arg(long, value_enum)]
        model: Option<SweepModel>,
        #[arg(long)]
        v: Option<String>,
    },
    /// Data series behind the key-rate-versus-noise and key-rate-versus-dimension plots.
    Figure {
        #[arg(value_enum)]
        which: FigureKind,
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        noise: NoiseArgs,
        /// fig1 only: emit the zero-rate noise-to-signal endpoint per (d, k).
        #[arg(long)]
        endpoints: bool,
    },
    /// Compare Monte Carlo event simulation with the analytic noise model.
    McValidate {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        noise: NoiseArgs,
        #[arg(long, value_enum)]
        model: Option<NoiseModel>,
        /// Frames or windows per dimension (at least 1e4).
        #[arg(long)]
        n: Option<String>,
        /// Largest accepted |z|.
        #[arg(long)]
        z: Option<f64>,
    },
    /// Dual certificates and primal attacks for the guessing probability bound.
    SdpVerify {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        k: Option<String>,
        /// Witness values, e.g. `0.6,0.9` or `0.55..0.99:12`.
        #[arg(long)]
        w: Option<String>,
        #[arg(long)]
        restarts: Option<usize>,
    },
    /// Finite-round protocol run on an isotropic state.
    ProtocolSim {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        v: Option<f64>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        n: Option<String>,
        /// Also write every round as a CSV record.
        #[arg(long)]
        rounds_out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FigureKind {
    Fig1,
    Fig2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepModel {
    Iso,
    Temporal,
    Spatial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NoiseModel {
    Temporal,
    Spatial,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// key = value file; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Negative per-block rates count as zero (default).
    #[arg(long, conflicts_with = "allow_negative")]
    pub clamp: bool,
    #[arg(long)]
    pub allow_negative: bool,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    /// Dimensions, e.g. `2,4,8` or `2..64`.
    #[arg(long)]
    pub d: Option<String>,
    /// Subspace sizes; every divisor of d when absent.
    #[arg(long)]
    pub k: Option<String>,
}

/// Model parameters in SI units. Plain flags apply to both parties, `-a`/`-b`
/// variants to one.
#[derive(Debug, Args)]
pub struct NoiseArgs {
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub nu: Option<f64>,
    #[arg(long)]
    pub nu_a: Option<f64>,
    #[arg(long)]
    pub nu_b: Option<f64>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub mu_a: Option<f64>,
    #[arg(long)]
    pub mu_b: Option<f64>,
    #[arg(long)]
    pub pl: Option<f64>,
    #[arg(long)]
    pub pl_a: Option<f64>,
    #[arg(long)]
    pub pl_b: Option<f64>,
    #[arg(long)]
    pub pc: Option<f64>,
    #[arg(long)]
    pub pc_a: Option<f64>,
    #[arg(long)]
    pub pc_b: Option<f64>,
    /// Time-bin width (s).
    #[arg(long)]
    pub tb: Option<f64>,
    /// Coincidence window (s).
    #[arg(long)]
    pub dt: Option<f64>,
    /// Probability that a pair lands in the encoding space.
    #[arg(long)]
    pub pp: Option<f64>,
    /// Detected-pair rate (1/s) for the noise sweep.
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub nu_max: Option<f64>,
    #[arg(long)]
    pub points: Option<usize>,
}
