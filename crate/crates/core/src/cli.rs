//! Run configuration and data producers behind the `dicke2p` binary.
//!
//! A [`RunConfig`] is resolved from built-in defaults, then a flat
//! `key = value` config file, then command-line flags. [`run`] turns it into
//! numeric [`Table`]s, and [`write_output`] writes them as CSV with `#`
//! metadata lines or as one JSON document, plus a `<out>.meta.json` sidecar.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error as ThisError;

use crate::analysis::{
    approximation_scan, ensemble_map, haar_random_two_qubit, partial_trace, random_phase, wigner, GridSpec, Keep,
};
use crate::dynamics::{coherent_branch_state, evolve_many, rabi_see_analytic, revival_time};
use crate::hilbert::{coherent_state, collective_op, FockCutoff, Level, Operator, Space, StateVector, Tensor, C64};
use crate::models::{embed_two_level, full_hamiltonian, two_photon_w, validity_report, EffectiveModelParams, FullModelParams};
use crate::protocols::{run_ghz, timing_sensitivity, BellProtocol, Detection, Engine, HomodyneConfig, OutcomeLabel};

/// Exit status for a rejected configuration.
pub const EXIT_CONFIG: i32 = 2;
/// Exit status when `--strict` escalates a validity warning.
pub const EXIT_VALIDITY: i32 = 3;
/// Exit status for numerical or I/O failures.
pub const EXIT_RUNTIME: i32 = 1;

#[derive(Debug, ThisError)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("validity check failed: {0}")]
    Validity(String),
    #[error(transparent)]
    Numerical(#[from] crate::Error),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Validity(_) => EXIT_VALIDITY,
            CliError::Numerical(_) | CliError::Io(_) => EXIT_RUNTIME,
        }
    }
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    FidelityScan,
    Rabi,
    Wigner,
    Ghz,
    Bell,
    BellTiming,
}

impl Command {
    pub const ALL: [Command; 6] =
        [Command::FidelityScan, Command::Rabi, Command::Wigner, Command::Ghz, Command::Bell, Command::BellTiming];

    pub fn name(self) -> &'static str {
        match self {
            Command::FidelityScan => "fidelity-scan",
            Command::Rabi => "rabi",
            Command::Wigner => "wigner",
            Command::Ghz => "ghz",
            Command::Bell => "bell",
            Command::BellTiming => "bell-timing",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = CliError;
    fn from_str(s: &str) -> Result<Self, CliError> {
        Command::ALL.into_iter().find(|c| c.name() == s).ok_or_else(|| config_err(format!("unknown command '{s}'")))
    }
}

/// Which dynamics produce the numeric curves.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EngineChoice {
    /// Three-level atoms with the intermediate level kept.
    Full,
    /// Exact evolution under the two-photon interaction `W`.
    Effective,
    /// Large-photon-number coherent-branch solution.
    Analytic,
}

impl EngineChoice {
    pub fn name(self) -> &'static str {
        match self {
            EngineChoice::Full => "full",
            EngineChoice::Effective => "effective",
            EngineChoice::Analytic => "analytic",
        }
    }
}

impl FromStr for EngineChoice {
    type Err = CliError;
    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "full" => Ok(EngineChoice::Full),
            "effective" => Ok(EngineChoice::Effective),
            "analytic" => Ok(EngineChoice::Analytic),
            _ => Err(config_err(format!("unknown engine '{s}' (full|effective|analytic)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = CliError;
    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(config_err(format!("unknown format '{s}' (csv|json)"))),
        }
    }
}

/// Fully resolved parameters of one run. Times are in units of `gt/π`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: Command,
    pub nbar: Vec<f64>,
    /// Phase of `α`; `None` draws a uniform phase per ensemble member.
    pub phi: Option<f64>,
    pub g: f64,
    pub gg: f64,
    pub ge: f64,
    pub delta: f64,
    pub omega: f64,
    pub engine: EngineChoice,
    pub ensemble: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub format: Format,
    pub efficiency: Option<f64>,
    pub lo_phase: Option<f64>,
    pub strict: bool,
    pub t_start: f64,
    pub t_stop: f64,
    pub t_step: f64,
    pub grid_points: usize,
}

impl RunConfig {
    /// Built-in defaults for `command`.
    pub fn defaults(command: Command) -> Self {
        let base = RunConfig {
            command,
            nbar: vec![50.0],
            phi: None,
            g: 1.0,
            gg: 1.0,
            ge: 1.0,
            delta: 500.0,
            omega: 0.0,
            engine: EngineChoice::Effective,
            ensemble: 100,
            seed: 7,
            out: None,
            format: Format::Csv,
            efficiency: None,
            lo_phase: None,
            strict: false,
            t_start: 0.0,
            t_stop: 1.0,
            t_step: 0.01,
            grid_points: 201,
        };
        match command {
            Command::FidelityScan => RunConfig { nbar: vec![20.0, 50.0, 100.0], engine: EngineChoice::Full, ..base },
            Command::Rabi => RunConfig { phi: Some(0.0), t_step: 0.002, ..base },
            Command::Wigner => RunConfig { phi: Some(2.0 * PI / 3.0), ..base },
            Command::Ghz => RunConfig { nbar: vec![10.0, 20.0, 50.0, 100.0], phi: Some(0.3), ..base },
            Command::Bell => RunConfig { seed: 3, ..base },
            Command::BellTiming => {
                RunConfig { phi: Some(0.4), ensemble: 20, t_start: 0.48, t_stop: 0.52, t_step: 0.0002, ..base }
            }
        }
    }

    /// Flat `key = value` form understood by [`RunConfig::apply_kv`].
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.kv_pairs() {
            s.push_str(&format!("{k} = {v}\n"));
        }
        s
    }

    fn kv_pairs(&self) -> Vec<(&'static str, String)> {
        let list = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let mut kv = vec![
            ("command", self.command.to_string()),
            ("nbar", list(&self.nbar)),
            ("g", self.g.to_string()),
            ("gg", self.gg.to_string()),
            ("ge", self.ge.to_string()),
            ("delta", self.delta.to_string()),
            ("omega", self.omega.to_string()),
            ("engine", self.engine.name().to_string()),
            ("ensemble", self.ensemble.to_string()),
            ("seed", self.seed.to_string()),
            ("format", match self.format {
                Format::Csv => "csv".to_string(),
                Format::Json => "json".to_string(),
            }),
            ("strict", self.strict.to_string()),
            ("t_start", self.t_start.to_string()),
            ("t_stop", self.t_stop.to_string()),
            ("t_step", self.t_step.to_string()),
            ("grid_points", self.grid_points.to_string()),
        ];
        if let Some(phi) = self.phi {
            kv.push(("phi", phi.to_string()));
        }
        if let Some(out) = &self.out {
            kv.push(("out", out.display().to_string()));
        }
        if let Some(e) = self.efficiency {
            kv.push(("efficiency", e.to_string()));
        }
        if let Some(l) = self.lo_phase {
            kv.push(("lo_phase", l.to_string()));
        }
        kv
    }

    /// Overrides fields from `key = value` lines; `#` starts a comment.
    pub fn apply_kv(&mut self, text: &str) -> Result<(), CliError> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| config_err(format!("line {}: expected key = value", lineno + 1)))?;
            self.set(key.trim(), value.trim()).map_err(|e| match e {
                CliError::Config(m) => config_err(format!("line {}: {m}", lineno + 1)),
                other => other,
            })?;
        }
        Ok(())
    }

    /// Parses a config file body on top of the defaults of its `command`.
    pub fn from_kv(text: &str) -> Result<Self, CliError> {
        let command = text
            .lines()
            .filter_map(|l| l.split('#').next()?.split_once('='))
            .find(|(k, _)| k.trim() == "command")
            .map(|(_, v)| v.trim().parse::<Command>())
            .transpose()?
            .ok_or_else(|| config_err("missing 'command' key"))?;
        let mut cfg = RunConfig::defaults(command);
        cfg.apply_kv(text)?;
        Ok(cfg)
    }

    /// Sets one field from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T, CliError> {
            v.parse().map_err(|_| config_err(format!("invalid value '{v}' for '{key}'")))
        }
        match key {
            "command" => {
                let c: Command = value.parse()?;
                if c != self.command {
                    return Err(config_err(format!("config is for '{c}', running '{}'", self.command)));
                }
            }
            "nbar" => {
                self.nbar = value.split(',').map(|v| num(key, v.trim())).collect::<Result<_, _>>()?;
            }
            "phi" => self.phi = Some(num(key, value)?),
            "g" => self.g = num(key, value)?,
            "gg" => self.gg = num(key, value)?,
            "ge" => self.ge = num(key, value)?,
            "delta" => self.delta = num(key, value)?,
            "omega" => self.omega = num(key, value)?,
            "engine" => self.engine = value.parse()?,
            "ensemble" => self.ensemble = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "out" => self.out = Some(PathBuf::from(value)),
            "format" => self.format = value.parse()?,
            "efficiency" => self.efficiency = Some(num(key, value)?),
            "lo_phase" => self.lo_phase = Some(num(key, value)?),
            "strict" => self.strict = num(key, value)?,
            "t_start" => self.t_start = num(key, value)?,
            "t_stop" => self.t_stop = num(key, value)?,
            "t_step" => self.t_step = num(key, value)?,
            "grid_points" => self.grid_points = num(key, value)?,
            _ => return Err(config_err(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    /// Rejects parameter combinations that no subcommand can run.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.nbar.is_empty() || self.nbar.iter().any(|&n| !(n > 0.0 && n.is_finite())) {
            return Err(config_err("nbar must be a non-empty list of positive numbers"));
        }
        if !(self.g.is_finite() && self.g != 0.0) {
            return Err(config_err("g must be finite and nonzero"));
        }
        if !(self.delta.is_finite() && self.delta != 0.0) {
            return Err(config_err("delta must be finite and nonzero"));
        }
        if self.ensemble == 0 {
            return Err(config_err("ensemble must be at least 1"));
        }
        if let Some(e) = self.efficiency {
            if !(e > 0.0 && e <= 1.0) {
                return Err(config_err("efficiency must lie in (0, 1]"));
            }
        }
        if !(self.t_step > 0.0) || !(self.t_stop >= self.t_start) || self.t_start < 0.0 {
            return Err(config_err("time window needs 0 <= t_start <= t_stop and t_step > 0"));
        }
        if self.grid_points < 2 {
            return Err(config_err("grid_points must be at least 2"));
        }
        let allowed: &[EngineChoice] = match self.command {
            Command::FidelityScan => &[EngineChoice::Full],
            Command::Rabi => &[EngineChoice::Full, EngineChoice::Effective],
            Command::Wigner | Command::Ghz | Command::Bell | Command::BellTiming => {
                &[EngineChoice::Effective, EngineChoice::Analytic]
            }
        };
        if !allowed.contains(&self.engine) {
            return Err(config_err(format!("engine '{}' is not available for '{}'", self.engine.name(), self.command)));
        }
        if self.efficiency.is_some() && self.command != Command::Bell {
            return Err(config_err("efficiency applies to 'bell' only"));
        }
        Ok(())
    }

    /// Scan times `t_start, t_start + t_step, …, ≤ t_stop` in units of `gt/π`.
    pub fn time_grid(&self) -> Vec<f64> {
        let n = ((self.t_stop - self.t_start) / self.t_step + 1e-9).floor() as usize;
        (0..=n).map(|k| self.t_start + k as f64 * self.t_step).collect()
    }

    fn full_params(&self, nbar: f64) -> Result<FullModelParams, CliError> {
        Ok(FullModelParams::new(self.omega, self.delta, self.gg, self.ge, FockCutoff::for_mean_photon(nbar))?)
    }

    fn engine(&self) -> Engine {
        match self.engine {
            EngineChoice::Analytic => Engine::Analytic,
            _ => Engine::Exact,
        }
    }
}

/// Explicit overrides from the command line; `None` leaves the field alone.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub nbar: Option<Vec<f64>>,
    pub phi: Option<f64>,
    pub g: Option<f64>,
    pub gg: Option<f64>,
    pub ge: Option<f64>,
    pub delta: Option<f64>,
    pub omega: Option<f64>,
    pub engine: Option<EngineChoice>,
    pub ensemble: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub efficiency: Option<f64>,
    pub lo_phase: Option<f64>,
    pub strict: bool,
    pub t_start: Option<f64>,
    pub t_stop: Option<f64>,
    pub t_step: Option<f64>,
    pub grid_points: Option<usize>,
}

/// Defaults, then the config file body (if any), then `flags`.
pub fn resolve(command: Command, file: Option<&str>, flags: &Overrides) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::defaults(command);
    if let Some(text) = file {
        cfg.apply_kv(text)?;
    }
    macro_rules! take {
        ($($f:ident),*) => { $(if let Some(v) = flags.$f.clone() { cfg.$f = v; })* };
    }
    take!(nbar, g, gg, ge, delta, omega, engine, ensemble, seed, format, t_start, t_stop, t_step, grid_points);
    if flags.phi.is_some() {
        cfg.phi = flags.phi;
    }
    if flags.out.is_some() {
        cfg.out = flags.out.clone();
    }
    if flags.efficiency.is_some() {
        cfg.efficiency = flags.efficiency;
    }
    if flags.lo_phase.is_some() {
        cfg.lo_phase = flags.lo_phase;
    }
    cfg.strict |= flags.strict;
    cfg.validate()?;
    Ok(cfg)
}

/// One block of numeric output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table {
    /// File-name suffix when the run produces several panels.
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    fn new(name: &str, columns: &[&str]) -> Self {
        Table { name: name.to_string(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }
}

/// Tables plus derived summary values and non-fatal warnings.
#[derive(Clone, Debug, PartialEq)]
pub struct RunOutput {
    pub tables: Vec<Table>,
    pub summary: BTreeMap<String, String>,
    pub warnings: Vec<String>,
}

/// Computes all tables of `cfg`. Validity problems become warnings, or a
/// [`CliError::Validity`] under `strict`.
pub fn run(cfg: &RunConfig) -> Result<RunOutput, CliError> {
    cfg.validate()?;
    let mut out = RunOutput { tables: Vec::new(), summary: BTreeMap::new(), warnings: Vec::new() };
    if cfg.engine == EngineChoice::Full {
        for &nbar in &cfg.nbar {
            let report = validity_report(&cfg.full_params(nbar)?, nbar)?;
            if !report.all_ok() {
                out.warnings.push(format!(
                    "n̄={nbar}: effective-model regime not satisfied (stark_closeness_ok={}, revival_reachable_ok={})",
                    report.stark_closeness_ok, report.revival_reachable_ok
                ));
            }
        }
        if cfg.strict && !out.warnings.is_empty() {
            return Err(CliError::Validity(out.warnings.join("; ")));
        }
    }
    match cfg.command {
        Command::FidelityScan => fidelity_scan(cfg, &mut out)?,
        Command::Rabi => rabi(cfg, &mut out)?,
        Command::Wigner => wigner_panels(cfg, &mut out)?,
        Command::Ghz => ghz(cfg, &mut out)?,
        Command::Bell => bell(cfg, &mut out)?,
        Command::BellTiming => bell_timing(cfg, &mut out)?,
    }
    Ok(out)
}

fn fidelity_scan(cfg: &RunConfig, out: &mut RunOutput) -> Result<(), CliError> {
    let mut table =
        Table::new("", &["nbar", "gt_over_pi", "mean_F_W", "stderr_F_W", "mean_F_analytic", "stderr_F_analytic"]);
    let mut at_half = Vec::new();
    for &nbar in &cfg.nbar {
        let p = cfg.full_params(nbar)?;
        let g = p.effective_coupling().abs();
        let grid = cfg.time_grid();
        let mut times: Vec<f64> = grid.iter().map(|x| x * PI / g).collect();
        times.push(0.5 * PI / g);
        let points = approximation_scan(&p, nbar, &times, cfg.ensemble, cfg.seed)?;
        let (half, scan) = points.split_last().expect("at least the half-revival point");
        at_half.push((nbar, half.f_effective.0));
        for (x, pt) in grid.iter().zip(scan) {
            table.rows.push(vec![nbar, *x, pt.f_effective.0, pt.f_effective.1, pt.f_analytic.0, pt.f_analytic.1]);
        }
    }
    for (nbar, f) in &at_half {
        out.summary.insert(format!("mean_F_W_half_revival_nbar_{nbar}"), f.to_string());
    }
    let mut sorted = at_half.clone();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let monotone = sorted.windows(2).all(|w| w[1].1 >= w[0].1);
    out.summary.insert("monotone_in_nbar_at_half_revival".into(), monotone.to_string());
    out.tables.push(table);
    Ok(())
}

/// `S_ee` on the two atoms for `levels`-level atoms, extended over the field.
fn excited_number(levels: usize, cutoff: FockCutoff) -> Result<Operator, CliError> {
    let see = collective_op(Level::E, Level::E, levels)?;
    Ok(see.tensor(&Operator::identity(Space::mode(cutoff))))
}

fn rabi(cfg: &RunConfig, out: &mut RunOutput) -> Result<(), CliError> {
    let mut table = Table::new("", &["nbar", "gt_over_pi", "see_numeric", "see_analytic"]);
    let phi = cfg.phi.unwrap_or(0.0);
    for &nbar in &cfg.nbar {
        let cutoff = FockCutoff::for_mean_photon(nbar);
        let alpha = C64::from_polar(nbar.sqrt(), phi);
        let ee = StateVector::basis(3, Space::two_atoms(2))?.tensor(&coherent_state(alpha, cutoff)?);
        let (h, psi0, see, g) = match cfg.engine {
            EngineChoice::Full => {
                let p = cfg.full_params(nbar)?;
                (full_hamiltonian(&p), embed_two_level(&ee, cutoff)?, excited_number(3, cutoff)?, p.effective_coupling())
            }
            _ => (two_photon_w(&EffectiveModelParams::new(cfg.g, cutoff)?), ee, excited_number(2, cutoff)?, cfg.g),
        };
        let grid = cfg.time_grid();
        let times: Vec<f64> = grid.iter().map(|x| x * PI / g.abs()).collect();
        let states = evolve_many(&h, &psi0, &times)?;
        for ((x, t), psi) in grid.iter().zip(&times).zip(&states) {
            let numeric = psi.expectation(&see)?.re;
            table.rows.push(vec![nbar, *x, numeric, rabi_see_analytic(alpha, g, *t)]);
        }
    }
    out.tables.push(table);
    Ok(())
}

fn wigner_panels(cfg: &RunConfig, out: &mut RunOutput) -> Result<(), CliError> {
    let nbar = cfg.nbar[0];
    if cfg.nbar.len() > 1 {
        out.warnings.push(format!("wigner uses only the first nbar ({nbar})"));
    }
    let cutoff = FockCutoff::for_mean_photon(nbar);
    let alpha = C64::from_polar(nbar.sqrt(), cfg.phi.unwrap_or(2.0 * PI / 3.0));
    let t_r = revival_time(cfg.g)?;
    let ee = StateVector::basis(3, Space::two_atoms(2))?;
    let ee_coeffs = crate::hilbert::AtomCoeffs::from_state(&ee)?;
    let w = two_photon_w(&EffectiveModelParams::new(cfg.g, cutoff)?);
    let psi0 = ee.tensor(&coherent_state(alpha, cutoff)?);
    let grid = GridSpec { points: cfg.grid_points, ..GridSpec::for_alpha(alpha.norm()) };
    for (name, frac) in [("t0", 0.0), ("tr4", 0.25), ("tr2", 0.5)] {
        let t = frac * t_r;
        let psi = match cfg.engine {
            EngineChoice::Analytic => coherent_branch_state(&ee_coeffs, alpha, cfg.g, t).to_state(cutoff)?,
            _ => crate::dynamics::evolve_exact(&w, &psi0, t)?,
        };
        let rho = partial_trace(&psi, Keep::Field)?;
        let wg = wigner(&rho, &grid)?;
        out.summary.insert(format!("{name}_integral"), wg.integral().to_string());
        out.summary.insert(format!("{name}_min"), wg.min().to_string());
        out.summary.insert(format!("{name}_max"), wg.max().to_string());
        let mut table = Table::new(name, &["beta_re", "beta_im", "W"]);
        for (i, x) in wg.beta_re.iter().enumerate() {
            for (j, p) in wg.beta_im.iter().enumerate() {
                table.rows.push(vec![*x, *p, wg.values[(i, j)]]);
            }
        }
        out.tables.push(table);
    }
    Ok(())
}

fn ghz(cfg: &RunConfig, out: &mut RunOutput) -> Result<(), CliError> {
    let mut table = Table::new("", &["nbar", "F_GHZ"]);
    let phi = cfg.phi.unwrap_or(0.3);
    for &nbar in &cfg.nbar {
        let alpha = C64::from_polar(nbar.sqrt(), phi);
        let f = run_ghz(alpha, cfg.g, FockCutoff::for_mean_photon(nbar), cfg.engine())?;
        table.rows.push(vec![nbar, f]);
    }
    out.tables.push(table);
    Ok(())
}

/// Probability-weighted mean fidelity with its standard error, and the mean
/// outcome probability, from `(probability, fidelity)` pairs.
pub fn weighted_outcome_stats(samples: &[(f64, Option<f64>)]) -> (f64, f64, f64) {
    let n = samples.len() as f64;
    let rate = samples.iter().map(|s| s.0).sum::<f64>() / n;
    let used: Vec<(f64, f64)> = samples.iter().filter_map(|&(p, f)| f.map(|f| (p, f))).collect();
    let wsum: f64 = used.iter().map(|u| u.0).sum();
    if !(wsum > 0.0) {
        return (f64::NAN, f64::NAN, rate);
    }
    let mean = used.iter().map(|(p, f)| p * f).sum::<f64>() / wsum;
    let var = used.iter().map(|(p, f)| (p * (f - mean)).powi(2)).sum::<f64>();
    (mean, var.sqrt() / wsum, rate)
}

fn outcome_cols(label: OutcomeLabel) -> [f64; 3] {
    [label.index() as f64, label.d1.value(), label.d2.value()]
}

fn bell(cfg: &RunConfig, out: &mut RunOutput) -> Result<(), CliError> {
    let mut table = Table::new("", &["nbar", "outcome", "d1", "d2", "mean_F", "stderr_F", "outcome_rate"]);
    let detection = match cfg.efficiency {
        None => Detection::Ideal,
        Some(e) => Detection::Homodyne(HomodyneConfig { lo_phase: cfg.lo_phase, ..HomodyneConfig::new(e)? }),
    };
    for &nbar in &cfg.nbar {
        let cutoff = FockCutoff::for_mean_photon(nbar);
        let per_sample: Result<Vec<_>, crate::Error> = ensemble_map(cfg.ensemble, cfg.seed, |_, rng| {
            let c = haar_random_two_qubit(rng);
            let phi = cfg.phi.unwrap_or_else(|| random_phase(rng));
            let protocol = BellProtocol::new(C64::from_polar(nbar.sqrt(), phi), cfg.g, cutoff, cfg.engine(), detection)?;
            protocol.outcomes(&c)
        })
        .into_iter()
        .collect();
        let per_sample = per_sample?;
        for label in OutcomeLabel::ALL {
            let k = label.index();
            let pairs: Vec<(f64, Option<f64>)> =
                per_sample.iter().map(|r| (r[k].probability, r[k].fidelity)).collect();
            let (mean, se, rate) = weighted_outcome_stats(&pairs);
            let [idx, d1, d2] = outcome_cols(label);
            table.rows.push(vec![nbar, idx, d1, d2, mean, se, rate]);
        }
    }
    out.tables.push(table);
    Ok(())
}

fn bell_timing(cfg: &RunConfig, out: &mut RunOutput) -> Result<(), CliError> {
    let mut table = Table::new("", &["nbar", "gt_over_pi", "outcome", "d1", "d2", "mean_F", "outcome_rate"]);
    let phi = cfg.phi.unwrap_or(0.4);
    let grid = cfg.time_grid();
    let times: Vec<f64> = grid.iter().map(|x| x * PI / cfg.g.abs()).collect();
    for &nbar in &cfg.nbar {
        let cutoff = FockCutoff::for_mean_photon(nbar);
        let alpha = C64::from_polar(nbar.sqrt(), phi);
        let curves: Result<Vec<_>, crate::Error> = ensemble_map(cfg.ensemble, cfg.seed, |_, rng| {
            let c = haar_random_two_qubit(rng);
            timing_sensitivity(&c, alpha, cfg.g, cutoff, cfg.engine(), &times)
        })
        .into_iter()
        .collect();
        let curves = curves?;
        for (i, x) in grid.iter().enumerate() {
            for label in OutcomeLabel::ALL {
                let k = label.index();
                let pairs: Vec<(f64, Option<f64>)> = curves
                    .iter()
                    .map(|c| (c[i].results[k].probability, c[i].results[k].fidelity))
                    .collect();
                let (mean, _, rate) = weighted_outcome_stats(&pairs);
                let [idx, d1, d2] = outcome_cols(label);
                table.rows.push(vec![nbar, *x, idx, d1, d2, mean, rate]);
            }
        }
    }
    out.tables.push(table);
    Ok(())
}

/// Run metadata shared by the CSV header, the JSON document and the sidecar.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub program: String,
    pub version: String,
    pub command: Command,
    pub seed: u64,
    pub config: RunConfig,
    pub summary: BTreeMap<String, String>,
    pub warnings: Vec<String>,
    /// Only present in the sidecar, so data files stay byte-identical
    /// across runs with the same configuration.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub wall_time_s: Option<f64>,
}

impl Metadata {
    pub fn new(cfg: &RunConfig, out: &RunOutput) -> Self {
        Metadata {
            program: "dicke2p".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: cfg.command,
            seed: cfg.seed,
            config: cfg.clone(),
            summary: out.summary.clone(),
            warnings: out.warnings.clone(),
            wall_time_s: None,
        }
    }
}

/// The `--format json` document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JsonOutput {
    pub metadata: Metadata,
    pub tables: Vec<Table>,
}

/// Writes one CSV table with `#`-prefixed metadata lines.
pub fn write_csv<W: Write>(w: &mut W, meta: &Metadata, table: &Table) -> io::Result<()> {
    writeln!(w, "# {} {}", meta.program, meta.version)?;
    for line in meta.config.to_kv().lines() {
        writeln!(w, "# {line}")?;
    }
    for (k, v) in &meta.summary {
        writeln!(w, "# summary {k} = {v}")?;
    }
    for warning in &meta.warnings {
        writeln!(w, "# warning {warning}")?;
    }
    if !table.name.is_empty() {
        writeln!(w, "# table = {}", table.name)?;
    }
    let mut csv = csv::Writer::from_writer(w);
    csv.write_record(&table.columns).map_err(io::Error::other)?;
    for row in &table.rows {
        csv.write_record(row.iter().map(|v| v.to_string())).map_err(io::Error::other)?;
    }
    csv.flush()
}

/// Path of table `name` when several tables share one `--out` path.
pub fn panel_path(out: &Path, name: &str, count: usize) -> PathBuf {
    if count <= 1 || name.is_empty() {
        return out.to_path_buf();
    }
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let file = match out.extension() {
        Some(ext) => format!("{stem}_{name}.{}", ext.to_string_lossy()),
        None => format!("{stem}_{name}"),
    };
    out.with_file_name(file)
}

/// Sidecar path `<out>.meta.json`.
pub fn sidecar_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

/// Writes the data to `cfg.out` (or stdout) and, with an output path, the
/// metadata sidecar. Returns the data files written.
pub fn write_output(cfg: &RunConfig, out: &RunOutput, wall_time: Duration) -> Result<Vec<PathBuf>, CliError> {
    let meta = Metadata::new(cfg, out);
    let mut written = Vec::new();
    match &cfg.out {
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            match cfg.format {
                Format::Csv => {
                    for table in &out.tables {
                        write_csv(&mut lock, &meta, table)?;
                    }
                }
                Format::Json => {
                    let doc = JsonOutput { metadata: meta, tables: out.tables.clone() };
                    serde_json::to_writer_pretty(&mut lock, &doc).map_err(io::Error::other)?;
                    writeln!(lock)?;
                }
            }
        }
        Some(path) => {
            match cfg.format {
                Format::Csv => {
                    for table in &out.tables {
                        let p = panel_path(path, &table.name, out.tables.len());
                        let mut f = io::BufWriter::new(fs::File::create(&p)?);
                        write_csv(&mut f, &meta, table)?;
                        f.flush()?;
                        written.push(p);
                    }
                }
                Format::Json => {
                    let doc = JsonOutput { metadata: meta.clone(), tables: out.tables.clone() };
                    fs::write(path, serde_json::to_string_pretty(&doc).map_err(io::Error::other)? + "\n")?;
                    written.push(path.clone());
                }
            }
            let sidecar = Metadata { wall_time_s: Some(wall_time.as_secs_f64()), ..meta };
            fs::write(sidecar_path(path), serde_json::to_string_pretty(&sidecar).map_err(io::Error::other)? + "\n")?;
        }
    }
    Ok(written)
}
