//! Command-line surface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "replica-mac", version, about = "Large-system sum-rate of correlated MIMO multiple-access channels")]
pub struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, env = "REPLICA_MAC_THREADS", global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Replica sum-rate of one scenario.
    Sumrate(SumrateArgs),
    /// Sum-rate over an SNR grid.
    Sweep(SweepArgs),
    /// Two-user Gaussian rate region.
    RateRegion(RegionArgs),
    /// Optimize precoders and write them to files.
    Optimize(OptimizeArgs),
    /// Monte-Carlo estimates across system sizes with a 1/M fit.
    Extrapolate(ExtrapolateArgs),
    /// Run the acceptance checks and write their CSV outputs.
    Validate(ValidateArgs),
}

#[derive(Args, Debug, Clone)]
pub struct SolverOpts {
    /// Fixed-point tolerance.
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    /// Damping of the fixed-point iteration, in (0, 1].
    #[arg(long, default_value_t = 0.5)]
    pub damping: f64,
    /// Base seed for Monte-Carlo noise and channel draws.
    #[arg(long, default_value_t = 0x5EED)]
    pub seed: u64,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Replica,
    Mc,
    Both,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Target {
    /// Every terminal, locked to one SNR.
    All,
    Users,
    Interferers,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Precoding {
    Identity,
    Waterfill,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Profile {
    Quick,
    Full,
}

#[derive(Args, Debug)]
pub struct SumrateArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    /// Also write the report as a one-row CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub solver: SolverOpts,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// SNR grid `start:stop:step` in dB, or a comma-separated list.
    #[arg(long, default_value = "-5:30:2.5")]
    pub grid: String,
    #[arg(long, value_enum, default_value_t = Target::All)]
    pub target: Target,
    #[arg(long, value_enum, default_value_t = Mode::Replica)]
    pub mode: Mode,
    /// Channel realizations per Monte-Carlo point.
    #[arg(long, default_value_t = 500)]
    pub realizations: usize,
    /// Noise draws per realization for discrete inputs.
    #[arg(long, default_value_t = 64)]
    pub noise_samples: usize,
    #[command(flatten)]
    pub solver: SolverOpts,
}

#[derive(Args, Debug)]
pub struct RegionArgs {
    /// Scenario with exactly two Gaussian users.
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Common user SNR in dB; defaults to the scenario values.
    #[arg(long, allow_hyphen_values = true)]
    pub snr_db: Option<f64>,
    #[arg(long, default_value_t = 33)]
    pub samples: usize,
    #[arg(long, value_enum, default_value_t = Precoding::Identity)]
    pub precoding: Precoding,
    #[command(flatten)]
    pub solver: SolverOpts,
}

#[derive(Args, Debug)]
pub struct OptimizeArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    /// Directory for precoder files and the iteration log.
    #[arg(long)]
    pub out: PathBuf,
    /// User index or `all`; defaults to the terminals marked `optimize`.
    #[arg(long)]
    pub user: Option<String>,
    #[command(flatten)]
    pub solver: SolverOpts,
}

#[derive(Args, Debug)]
pub struct ExtrapolateArgs {
    /// Template scenario; every antenna count is rescaled per size.
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated sizes (antennas of the first user).
    #[arg(long, default_value = "4,5,6,7,8,9,10,11")]
    pub sizes: String,
    #[arg(long, default_value_t = 500)]
    pub realizations: usize,
    #[arg(long, default_value_t = 64)]
    pub noise_samples: usize,
    #[command(flatten)]
    pub solver: SolverOpts,
}

#[derive(Args, Debug)]
pub struct ValidateArgs {
    /// Directory for the CSV outputs.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Profile::Quick)]
    pub profile: Profile,
    #[arg(long, default_value_t = 0x5EED)]
    pub seed: u64,
}
