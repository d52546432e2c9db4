//! `itschan`: honest handshakes, attack scenarios, parameter sweeps and test
//! vectors from the command line.
//!
//! Exit status: 0 on success, 1 when the protocol aborts, 2 on usage or
//! configuration errors.

mod commands;
mod socket;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use itschan::{Profile, Rs2Mode, Settings};

#[derive(Parser, Debug)]
#[command(name = "itschan", version, about = "Key bootstrapping from a short shared secret and packet timing")]
struct Cli {
    /// Plain-text `key = value` file; flags override its settings.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one honest session between two simulated parties.
    Handshake(HandshakeArgs),
    /// Run an attack scenario over a batch of seeds.
    Attack(AttackArgs),
    /// Run scenario batches over a grid of one parameter.
    Sweep(SweepArgs),
    /// Write cross-implementation test vectors.
    Vectors(VectorsArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ProfileArg {
    Test,
    Default,
}

impl From<ProfileArg> for Profile {
    fn from(p: ProfileArg) -> Self {
        match p {
            ProfileArg::Test => Profile::Test,
            ProfileArg::Default => Profile::Default,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Rs2ModeArg {
    Timing,
    #[value(name = "hash_nonces_x", alias = "hash")]
    HashNoncesX,
}

impl From<Rs2ModeArg> for Rs2Mode {
    fn from(m: Rs2ModeArg) -> Self {
        match m {
            Rs2ModeArg::Timing => Rs2Mode::Timing,
            Rs2ModeArg::HashNoncesX => Rs2Mode::HashNoncesX,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Transport {
    Sim,
    Socket,
}

#[derive(Args, Debug)]
pub struct HandshakeArgs {
    #[arg(long, env = "ITSCHAN_PROFILE", value_enum)]
    profile: Option<ProfileArg>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    rs2_mode: Option<Rs2ModeArg>,
    #[arg(long)]
    probes: Option<usize>,
    /// Append a key=value record here.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "sim")]
    transport: Transport,
    /// Internal: run as the responder process of a socket handshake.
    #[arg(long, hide = true)]
    socket_peer: Option<String>,
}

#[derive(Args, Debug)]
pub struct AttackArgs {
    #[arg(long)]
    scenario: Option<u8>,
    #[arg(long)]
    sigma_e: Option<f64>,
    /// Scenario 1: whether Eve knows X.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    knows_x: Option<bool>,
    /// Number of seeds, starting at --first-seed.
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long, default_value_t = 0)]
    first_seed: u64,
    #[arg(long, env = "ITSCHAN_PROFILE", value_enum)]
    profile: Option<ProfileArg>,
    #[arg(long)]
    vantage: Option<String>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    renew_x: Option<bool>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    break_rsa: Option<bool>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    break_kdf: Option<bool>,
    /// Write one record per seed plus the summary here.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SweepParam {
    #[value(name = "sigma_e")]
    SigmaE,
    Guard,
    Block,
}

impl SweepParam {
    fn key(self) -> &'static str {
        match self {
            SweepParam::SigmaE => "sigma_e",
            SweepParam::Guard => "guard",
            SweepParam::Block => "block",
        }
    }
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long, value_enum)]
    param: SweepParam,
    /// Comma-separated grid.
    #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
    values: Vec<String>,
    #[arg(long)]
    scenario: Option<u8>,
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long, default_value_t = 0)]
    first_seed: u64,
    #[arg(long, env = "ITSCHAN_PROFILE", value_enum)]
    profile: Option<ProfileArg>,
    /// Write the machine-readable rows here instead of standard output.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct VectorsArgs {
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Why a command failed, and so which exit status it maps to.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Abort(String),
}

impl From<itschan::Error> for Failure {
    fn from(e: itschan::Error) -> Self {
        match e {
            itschan::Error::InvalidParameter(_) => Failure::Usage(e.to_string()),
            _ => Failure::Abort(e.to_string()),
        }
    }
}

fn load_settings(path: Option<&PathBuf>) -> Result<Settings, Failure> {
    let Some(path) = path else { return Ok(Settings::default()) };
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    Settings::parse(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    let result = load_settings(cli.config.as_ref()).and_then(|settings| match &cli.command {
        Command::Handshake(a) => commands::handshake(a, settings, cli.config.as_deref()),
        Command::Attack(a) => commands::attack(a, settings),
        Command::Sweep(a) => commands::sweep(a, settings),
        Command::Vectors(a) => commands::vectors(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Abort(msg)) => {
            eprintln!("itschan: aborted: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("itschan: {msg}");
            ExitCode::from(2)
        }
    }
}
