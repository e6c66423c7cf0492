use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use dicke2p::cli::{self, CliError, Command, EngineChoice, Format, Overrides};

#[derive(Parser)]
#[command(name = "dicke2p", version, about = "Two-atom two-photon Dicke model simulations")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Ensemble fidelity of the effective and analytic models against the full model.
    FidelityScan(Flags),
    /// Excited-atom number for |ee⟩|α⟩, numeric and analytic.
    Rabi(Flags),
    /// Field Wigner function at t = 0, t_r/4 and t_r/2.
    Wigner(Flags),
    /// GHZ fidelity over a sweep of mean photon numbers.
    Ghz(Flags),
    /// Per-outcome Bell-measurement fidelity over a Haar ensemble.
    Bell(Flags),
    /// Per-outcome Bell-measurement fidelity around the half-revival time.
    BellTiming(Flags),
}

#[derive(Args)]
struct Flags {
    /// Flat `key = value` config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Mean photon number(s), comma separated.
    #[arg(long, value_delimiter = ',')]
    nbar: Option<Vec<f64>>,
    /// Phase of the coherent amplitude.
    #[arg(long, allow_hyphen_values = true)]
    phi: Option<f64>,
    /// Two-photon coupling of the effective model.
    #[arg(long, allow_hyphen_values = true)]
    g: Option<f64>,
    /// Ground–intermediate coupling of the full model.
    #[arg(long, allow_hyphen_values = true)]
    gg: Option<f64>,
    /// Intermediate–excited coupling of the full model.
    #[arg(long, allow_hyphen_values = true)]
    ge: Option<f64>,
    /// Detuning of the intermediate level.
    #[arg(long, allow_hyphen_values = true)]
    delta: Option<f64>,
    /// Cavity frequency.
    #[arg(long, allow_hyphen_values = true)]
    omega: Option<f64>,
    /// full | effective | analytic
    #[arg(long)]
    engine: Option<String>,
    /// Number of Haar-random samples.
    #[arg(long)]
    ensemble: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv | json
    #[arg(long)]
    format: Option<String>,
    /// Homodyne detector efficiency in (0, 1]; ideal detection when absent.
    #[arg(long)]
    efficiency: Option<f64>,
    /// Local-oscillator phase; defaults to the phase of α.
    #[arg(long, allow_hyphen_values = true)]
    lo_phase: Option<f64>,
    /// Fail with exit status 3 when the effective-model regime is violated.
    #[arg(long)]
    strict: bool,
    /// Scan start in units of gt/π.
    #[arg(long)]
    t_start: Option<f64>,
    /// Scan end in units of gt/π.
    #[arg(long)]
    t_stop: Option<f64>,
    /// Scan step in units of gt/π.
    #[arg(long)]
    t_step: Option<f64>,
    /// Wigner grid points per axis.
    #[arg(long)]
    grid_points: Option<usize>,
}

impl Flags {
    fn overrides(&self) -> Result<Overrides, CliError> {
        Ok(Overrides {
            nbar: self.nbar.clone(),
            phi: self.phi,
            g: self.g,
            gg: self.gg,
            ge: self.ge,
            delta: self.delta,
            omega: self.omega,
            engine: self.engine.as_deref().map(str::parse::<EngineChoice>).transpose()?,
            ensemble: self.ensemble,
            seed: self.seed,
            out: self.out.clone(),
            format: self.format.as_deref().map(str::parse::<Format>).transpose()?,
            efficiency: self.efficiency,
            lo_phase: self.lo_phase,
            strict: self.strict,
            t_start: self.t_start,
            t_stop: self.t_stop,
            t_step: self.t_step,
            grid_points: self.grid_points,
        })
    }
}

fn execute(command: Command, flags: &Flags) -> Result<(), CliError> {
    let file = match &flags.config {
        Some(p) => Some(
            fs::read_to_string(p).map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?,
        ),
        None => None,
    };
    let cfg = cli::resolve(command, file.as_deref(), &flags.overrides()?)?;
    let start = Instant::now();
    let out = cli::run(&cfg)?;
    for w in &out.warnings {
        eprintln!("warning: {w}");
    }
    for p in cli::write_output(&cfg, &out, start.elapsed())? {
        eprintln!("wrote {}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let parsed = Cli::parse();
    let (command, flags) = match &parsed.command {
        Sub::FidelityScan(f) => (Command::FidelityScan, f),
        Sub::Rabi(f) => (Command::Rabi, f),
        Sub::Wigner(f) => (Command::Wigner, f),
        Sub::Ghz(f) => (Command::Ghz, f),
        Sub::Bell(f) => (Command::Bell, f),
        Sub::BellTiming(f) => (Command::BellTiming, f),
    };
    match execute(command, flags) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
