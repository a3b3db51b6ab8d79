/// `println!` that ignores a closed stdout.
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use manifest::UsageError;

#[derive(Debug, Parser)]
#[command(name = "forkgyro", version, about = "Tuning-fork gyroscope design and simulation")]
pub struct Cli {
    /// Device description (TOML). Defaults to the bundled reference device.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Seed for stochastic runs; defaults to the config's `seed`.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    pub out: PathBuf,

    /// Config override, e.g. `--set perforation.pitch_um=72`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Rigid-body modes of the 8-1 and 4-1 suspensions.
    Modal(ModalArgs),
    /// Squeeze-film damping and sense-mode Q.
    Damping(DampingArgs),
    /// Gravity capacitance offset versus mass asymmetry.
    Offset(OffsetArgs),
    /// Time-domain simulation with demodulation and spectrum.
    Simulate(SimulateArgs),
    /// Damping and modal figures over a range of one config value.
    Sweep(SweepArgs),
    /// Bundle of every study's data files.
    Report,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    EightOne,
    FourOne,
    Both,
}

#[derive(Debug, Args)]
pub struct ModalArgs {
    #[arg(long, value_enum, default_value_t = VariantArg::Both)]
    pub variant: VariantArg,
    /// Also write the 6x6 stiffness and mass matrices.
    #[arg(long)]
    pub matrices: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Cell,
    Fd,
}

#[derive(Debug, Args)]
pub struct DampingArgs {
    #[arg(long, value_enum, default_value_t = MethodArg::Cell)]
    pub method: MethodArg,
    /// Finite-difference cells per hole pitch.
    #[arg(long, default_value_t = 8)]
    pub grid: usize,
    /// Write the finite-difference pressure field as CSV.
    #[arg(long)]
    pub pressure_csv: bool,
}

#[derive(Debug, Args)]
pub struct OffsetArgs {
    /// Asymmetry fractions, comma separated. Defaults to the config's list.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub eta: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// `const:<rate>` or `sin:<amplitude>@<frequency>hz`, rates in dps.
    #[arg(long, default_value = "const:0", allow_hyphen_values = true)]
    pub rate: String,
    /// Total simulated time (s).
    #[arg(long, default_value_t = 1.25)]
    pub duration: f64,
    /// Time discarded before the demodulated record starts (s).
    #[arg(long, default_value_t = 0.25)]
    pub settle: f64,
    /// Disable thermal and electronic noise.
    #[arg(long)]
    pub no_noise: bool,
    /// Also write the full-rate state trace.
    #[arg(long)]
    pub trace: bool,
    /// Highest frequency kept in the spectrum file (Hz).
    #[arg(long, default_value_t = 500.0)]
    pub spectrum_max_hz: f64,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Dotted config key, or one of `pitch`, `hole`, `gap`.
    #[arg(long)]
    pub param: String,
    /// Explicit values, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, conflicts_with = "range")]
    pub values: Option<Vec<f64>>,
    /// `start:stop:count`, inclusive and evenly spaced.
    #[arg(long)]
    pub range: Option<String>,
    /// Run the points one after another.
    #[arg(long)]
    pub serial: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
