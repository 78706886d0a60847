//! Experiment runner behind the `dfsim` binary: a TOML config in, one CSV
//! table plus a `summary.toml` out.
//!
//! CSV columns per mode (fixed; see [`columns`]):
//!
//! | mode | columns |
//! |---|---|
//! | `leakage-sweep` | `ratio, time_s, p` |
//! | `pipulse-dephasing` | `inv_omega_t2, state, purity, correlation` |
//! | `dd-fidelity` | `tau_c_s, fidelity_analytic, fidelity_mc, stderr, sequence, n_cycles` |
//! | `mc-vs-analytic` | the `dd-fidelity` columns, then `abs_diff, within_3se` |
//! | `smp-compare` | `tau_c_s, pulse, gate_fidelity, fidelity_mc, stderr` |
//!
//! Floats are written as `{:.16e}` (17 significant digits). Monte Carlo
//! columns are `NaN` when `simulation.n_traj = 0`. Every row is flushed as it
//! is written, so an interrupted run leaves a valid prefix.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::fmt;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cumulant::{cp_fidelity, cp_zeta, ts_fidelity, ts_zetas};
use crate::error::{Error, Result};
use crate::montecarlo::{average_superpropagator, lindblad_pi_pulse, observable_series, SimConfig};
use crate::noise::OuParams;
use crate::sequences::{build_cp, build_ts, PulseEvent, PulseSequence, Targets};
use crate::smp::{
    fictitious_four_spin, read_table, smp_search, write_table, SelectiveGateTask, SmpSegment,
};
use crate::spinsys::{logical_paulis, CouplingForm, DfsEncoding, SpinSystem};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    LeakageSweep,
    PipulseDephasing,
    DdFidelity,
    McVsAnalytic,
    SmpCompare,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::LeakageSweep => "leakage-sweep",
            Mode::PipulseDephasing => "pipulse-dephasing",
            Mode::DdFidelity => "dd-fidelity",
            Mode::McVsAnalytic => "mc-vs-analytic",
            Mode::SmpCompare => "smp-compare",
        }
    }

    fn file_stem(self) -> String {
        self.name().replace('-', "_")
    }

    fn is_dd(self) -> bool {
        matches!(self, Mode::DdFidelity | Mode::McVsAnalytic)
    }
}

/// How `noise.strength` is read: directly in rad/s, or as a number that is
/// multiplied by 2π.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum OmegaUnit {
    #[default]
    #[serde(rename = "rad_s")]
    RadS,
    #[serde(rename = "hz_times_2pi")]
    HzTimes2Pi,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SequenceName {
    Cp,
    Ts,
    HardPi,
    SmpFile,
}

impl SequenceName {
    fn label(self) -> &'static str {
        match self {
            SequenceName::Cp => "cp",
            SequenceName::Ts => "ts",
            SequenceName::HardPi => "hard-pi",
            SequenceName::SmpFile => "smp-file",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Option<Mode>,
    pub seed: Option<u64>,
    /// Output directory.
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub omega_unit: OmegaUnit,
    #[serde(default)]
    pub system: SystemSection,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub sequence: SequenceSection,
    #[serde(default)]
    pub simulation: SimulationSection,
    #[serde(default)]
    pub leakage: LeakageSection,
    #[serde(default)]
    pub pipulse: PiPulseSection,
    #[serde(default)]
    pub smp: SmpSection,
}

/// Either `delta_omega_hz` + `j_hz` for two spins, or explicit
/// `offsets_hz` + `couplings_hz`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub delta_omega_hz: Option<f64>,
    pub j_hz: Option<f64>,
    pub offsets_hz: Option<Vec<f64>>,
    pub couplings_hz: Option<Vec<Vec<f64>>>,
    pub noise_weights: Option<Vec<f64>>,
    pub coupling: Option<CouplingForm>,
}

/// Log-spaced grid, endpoints included.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogGrid {
    pub from: f64,
    pub to: f64,
    pub points: usize,
}

impl LogGrid {
    pub fn values(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.from];
        }
        let (a, b) = (self.from.log10(), self.to.log10());
        (0..self.points)
            .map(|k| 10f64.powf(a + (b - a) * k as f64 / (self.points - 1) as f64))
            .collect()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub strength: Option<f64>,
    pub tau_c_s: Option<Vec<f64>>,
    pub tau_c_log: Option<LogGrid>,
}

impl NoiseSection {
    fn tau_grid(&self) -> Option<Vec<f64>> {
        match (&self.tau_c_s, &self.tau_c_log) {
            (Some(v), _) => Some(v.clone()),
            (None, Some(g)) => Some(g.values()),
            (None, None) => None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceSection {
    pub names: Option<Vec<SequenceName>>,
    pub cycles: Option<Vec<u32>>,
    pub total_time_s: Option<f64>,
    /// Wrap CP in π/2 pulses (default false for the decoupling modes).
    pub wrappers: Option<bool>,
    /// Finite π-pulse length; ideal pulses when absent. In `smp-compare` this
    /// is the hard-pulse baseline (default 2 µs).
    pub pulse_time_s: Option<f64>,
    pub smp_file: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub n_traj: Option<usize>,
    pub dt_s: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeakageSection {
    /// `omega_rf / (2 pi J)`; default 500.
    pub rf_over_j: Option<f64>,
    /// `delta_omega / omega_rf` values.
    pub ratios: Option<Vec<f64>>,
    /// Time steps across the pulse; default 200.
    pub steps: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogicalState {
    Identity,
    X,
    Y,
    Z,
}

impl LogicalState {
    fn label(self) -> &'static str {
        match self {
            LogicalState::Identity => "identity",
            LogicalState::X => "x",
            LogicalState::Y => "y",
            LogicalState::Z => "z",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PiPulseSection {
    /// RF amplitude `omega_rf / 2 pi`, Hz; default 25 kHz.
    pub rf_hz: Option<f64>,
    /// `1 / (omega_rf T2)` values.
    pub inv_omega_t2: Option<Vec<f64>>,
    pub inv_omega_t2_log: Option<LogGrid>,
    pub states: Option<Vec<LogicalState>>,
}

impl PiPulseSection {
    fn grid(&self) -> Option<Vec<f64>> {
        match (&self.inv_omega_t2, &self.inv_omega_t2_log) {
            (Some(v), _) => Some(v.clone()),
            (None, Some(g)) => Some(g.values()),
            (None, None) => None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmpSection {
    /// Logical rotation angle, rad; default π/2.
    pub angle: Option<f64>,
    pub restarts: Option<usize>,
    pub max_evals: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub severity: Severity,
    /// Dotted config path, e.g. `noise.tau_c_s`.
    pub field: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self.severity {
            Severity::Warning => "warning",
            Severity::Error => "error",
        };
        write!(f, "{s}: {}: {}", self.field, self.message)
    }
}

pub fn has_errors(violations: &[Violation]) -> bool {
    violations.iter().any(|v| v.severity == Severity::Error)
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    fn strength(&self) -> Option<f64> {
        self.noise.strength.map(|s| match self.omega_unit {
            OmegaUnit::RadS => s,
            OmegaUnit::HzTimes2Pi => TAU * s,
        })
    }

    fn coupling(&self) -> CouplingForm {
        self.system.coupling.unwrap_or(match self.mode {
            Some(m) if m.is_dd() => CouplingForm::Weak,
            _ => CouplingForm::Full,
        })
    }

    fn names(&self, mode: Mode) -> Vec<SequenceName> {
        self.sequence.names.clone().unwrap_or_else(|| match mode {
            Mode::SmpCompare => vec![SequenceName::Cp, SequenceName::HardPi, SequenceName::SmpFile],
            _ => vec![SequenceName::Cp],
        })
    }

    /// Spin system from `[system]`; mode defaults fill in when it is empty.
    pub fn spin_system(&self) -> Result<SpinSystem> {
        let s = &self.system;
        let sys = if let Some(offsets) = &s.offsets_hz {
            let n = offsets.len();
            let j = s.couplings_hz.clone().unwrap_or_else(|| vec![vec![0.0; n]; n]);
            SpinSystem::from_hz(offsets, j)?
        } else if s.delta_omega_hz.is_none() && s.j_hz.is_none() && self.mode == Some(Mode::SmpCompare) {
            fictitious_four_spin()
        } else {
            SpinSystem::two_spin(TAU * s.delta_omega_hz.unwrap_or(0.0), s.j_hz.unwrap_or(50.0))
        };
        match &s.noise_weights {
            Some(w) => sys.with_noise_weights(w.clone()),
            None => Ok(sys),
        }
    }

    /// Checks the config without running anything.
    pub fn validate(&self) -> Vec<Violation> {
        let mut v = Vec::new();
        let mut err = |field: &str, msg: String| {
            v.push(Violation {
                severity: Severity::Error,
                field: field.into(),
                message: msg,
            })
        };
        let Some(mode) = self.mode else {
            err("mode", "required".into());
            return v;
        };
        let s = &self.system;
        if s.offsets_hz.is_some() && (s.delta_omega_hz.is_some() || s.j_hz.is_some()) {
            err("system", "give either offsets_hz/couplings_hz or delta_omega_hz/j_hz".into());
        } else if let Err(e) = self.spin_system() {
            err("system", e.to_string());
        } else if s.offsets_hz.is_none() && s.couplings_hz.is_some() {
            err("system.couplings_hz", "needs offsets_hz".into());
        }
        let positive = |x: Option<f64>| x.is_none_or(|x| x > 0.0 && x.is_finite());
        if self.noise.strength.is_some_and(|x| !(x >= 0.0 && x.is_finite())) {
            err("noise.strength", "must be finite and non-negative".into());
        }
        if let Some(g) = self.noise.tau_c_log {
            if !(g.from > 0.0 && g.to > 0.0 && g.points > 0) {
                err("noise.tau_c_log", "needs positive endpoints and points".into());
            }
        }
        if !positive(self.sequence.total_time_s) {
            err("sequence.total_time_s", "must be positive".into());
        }
        if !positive(self.sequence.pulse_time_s) {
            err("sequence.pulse_time_s", "must be positive".into());
        }
        if !positive(self.simulation.dt_s) {
            err("simulation.dt_s", "must be positive".into());
        }
        let tau_grid = self.noise.tau_grid();
        let need_tau_grid = |v: &mut Vec<Violation>| match &tau_grid {
            None => v.push(Violation {
                severity: Severity::Error,
                field: "noise.tau_c_s".into(),
                message: format!("required for mode {}", mode.name()),
            }),
            Some(g) if g.is_empty() => v.push(Violation {
                severity: Severity::Error,
                field: "noise.tau_c_s".into(),
                message: "empty grid".into(),
            }),
            Some(g) if g.iter().any(|t| !(*t > 0.0 && t.is_finite())) => v.push(Violation {
                severity: Severity::Error,
                field: "noise.tau_c_s".into(),
                message: "correlation times must be positive and finite".into(),
            }),
            _ => {}
        };
        match mode {
            Mode::LeakageSweep => {
                match &self.leakage.ratios {
                    None => err("leakage.ratios", "required for mode leakage-sweep".into()),
                    Some(r) if r.is_empty() => err("leakage.ratios", "empty grid".into()),
                    Some(r) if r.iter().any(|x| !x.is_finite()) => err("leakage.ratios", "must be finite".into()),
                    _ => {}
                }
                if !positive(self.leakage.rf_over_j) {
                    err("leakage.rf_over_j", "must be positive".into());
                }
                if self.leakage.steps == Some(0) {
                    err("leakage.steps", "must be at least 1".into());
                }
                if !positive(s.j_hz) || s.offsets_hz.is_some() {
                    err("system", "leakage-sweep needs a two-spin system with j_hz > 0".into());
                }
            }
            Mode::PipulseDephasing => {
                match self.pipulse.grid() {
                    None => err("pipulse.inv_omega_t2", "required for mode pipulse-dephasing".into()),
                    Some(g) if g.is_empty() => err("pipulse.inv_omega_t2", "empty grid".into()),
                    Some(g) if g.iter().any(|x| !(*x > 0.0 && x.is_finite())) => {
                        err("pipulse.inv_omega_t2", "values must be positive".into())
                    }
                    _ => {}
                }
                if !positive(self.pipulse.rf_hz) {
                    err("pipulse.rf_hz", "must be positive".into());
                }
                if self.pipulse.states.as_ref().is_some_and(Vec::is_empty) {
                    err("pipulse.states", "empty list".into());
                }
            }
            Mode::DdFidelity | Mode::McVsAnalytic => {
                need_tau_grid(&mut v);
                let mut err = |field: &str, msg: String| {
                    v.push(Violation {
                        severity: Severity::Error,
                        field: field.into(),
                        message: msg,
                    })
                };
                if self.noise.strength.is_none() {
                    err("noise.strength", format!("required for mode {}", mode.name()));
                }
                match &self.sequence.cycles {
                    None => err("sequence.cycles", format!("required for mode {}", mode.name())),
                    Some(c) if c.is_empty() => err("sequence.cycles", "empty grid".into()),
                    Some(c) if c.contains(&0) => err("sequence.cycles", "must be at least 1".into()),
                    _ => {}
                }
                if self.sequence.total_time_s.is_none() {
                    err("sequence.total_time_s", format!("required for mode {}", mode.name()));
                }
                let names = self.names(mode);
                if names.is_empty() {
                    err("sequence.names", "empty list".into());
                }
                for n in &names {
                    if !matches!(n, SequenceName::Cp | SequenceName::Ts) {
                        err("sequence.names", format!("`{}` is not available in {}", n.label(), mode.name()));
                    }
                }
                let n_traj = self.simulation.n_traj.unwrap_or(0);
                if mode == Mode::McVsAnalytic && n_traj == 0 {
                    err("simulation.n_traj", "mc-vs-analytic needs at least 1 trajectory".into());
                }
                if let Ok(sys) = self.spin_system() {
                    if sys.n_spins() != 2 {
                        err("system", "decoupling modes use two spins".into());
                    }
                }
                if let (Some(dt), Some(cycles), Some(t)) =
                    (self.simulation.dt_s, &self.sequence.cycles, self.sequence.total_time_s)
                {
                    self.step_warnings(&mut v, dt, &names, cycles, t, tau_grid.as_deref().unwrap_or(&[]));
                }
            }
            Mode::SmpCompare => {
                need_tau_grid(&mut v);
                let mut err = |field: &str, msg: String| {
                    v.push(Violation {
                        severity: Severity::Error,
                        field: field.into(),
                        message: msg,
                    })
                };
                if self.simulation.n_traj.unwrap_or(0) > 0 && self.noise.strength.is_none() {
                    err("noise.strength", "required when n_traj > 0".into());
                }
                for n in self.names(mode) {
                    if n == SequenceName::Ts {
                        err("sequence.names", "`ts` is not available in smp-compare".into());
                    }
                }
                if let Ok(sys) = self.spin_system() {
                    if sys.n_spins() != 4 {
                        err("system", "smp-compare uses four spins".into());
                    } else if !(sys.coupling(0, 1) > 0.0) {
                        err("system.couplings_hz", "J12 must be positive".into());
                    }
                }
                if matches!(self.smp.restarts, Some(0)) || matches!(self.smp.max_evals, Some(0)) {
                    err("smp", "restarts and max_evals must be positive".into());
                }
                if let Some(dt) = self.simulation.dt_s {
                    for tc in tau_grid.iter().flatten() {
                        if dt > tc / 20.0 {
                            v.push(warning("simulation.dt_s", format!("{dt:e} s exceeds tau_c/20 at tau_c = {tc:e} s")));
                        }
                    }
                }
            }
        }
        v
    }

    fn step_warnings(&self, v: &mut Vec<Violation>, dt: f64, names: &[SequenceName], cycles: &[u32], t: f64, taus: &[f64]) {
        for name in names {
            for &n in cycles {
                let per = match name {
                    SequenceName::Ts => 4.0,
                    _ => 2.0,
                };
                let tau = t / (per * n.max(1) as f64);
                if dt > tau / 50.0 {
                    v.push(warning(
                        "simulation.dt_s",
                        format!("{dt:e} s exceeds tau/50 = {:e} s for {} with {n} cycles", tau / 50.0, name.label()),
                    ));
                }
            }
        }
        for tc in taus {
            if dt > tc / 20.0 {
                v.push(warning("simulation.dt_s", format!("{dt:e} s exceeds tau_c/20 at tau_c = {tc:e} s")));
            }
        }
    }
}

fn warning(field: &str, message: String) -> Violation {
    Violation {
        severity: Severity::Warning,
        field: field.into(),
        message,
    }
}

/// CSV column names for `mode`.
pub fn columns(mode: Mode) -> &'static [&'static str] {
    match mode {
        Mode::LeakageSweep => &["ratio", "time_s", "p"],
        Mode::PipulseDephasing => &["inv_omega_t2", "state", "purity", "correlation"],
        Mode::DdFidelity => &["tau_c_s", "fidelity_analytic", "fidelity_mc", "stderr", "sequence", "n_cycles"],
        Mode::McVsAnalytic => &[
            "tau_c_s",
            "fidelity_analytic",
            "fidelity_mc",
            "stderr",
            "sequence",
            "n_cycles",
            "abs_diff",
            "within_3se",
        ],
        Mode::SmpCompare => &["tau_c_s", "pulse", "gate_fidelity", "fidelity_mc", "stderr"],
    }
}

enum Cell<'a> {
    F(f64),
    U(u64),
    S(&'a str),
}

struct Csv {
    w: BufWriter<File>,
    rows: usize,
}

impl Csv {
    fn create(path: &Path, header: &[&str]) -> Result<Self> {
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "{}", header.join(","))?;
        w.flush()?;
        Ok(Self { w, rows: 0 })
    }

    fn row(&mut self, cells: &[Cell]) -> Result<()> {
        let text: Vec<String> = cells
            .iter()
            .map(|c| match c {
                Cell::F(x) => format!("{x:.16e}"),
                Cell::U(u) => u.to_string(),
                Cell::S(s) => (*s).to_string(),
            })
            .collect();
        writeln!(self.w, "{}", text.join(","))?;
        self.w.flush()?;
        self.rows += 1;
        Ok(())
    }
}

/// What a run produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub mode: Mode,
    pub seed: u64,
    pub csv: PathBuf,
    pub rows: usize,
    pub warnings: Vec<String>,
    /// Mode-specific scalars, e.g. noiseless gate fidelities.
    pub metrics: BTreeMap<String, f64>,
}

/// Independent seed per grid point.
fn point_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_add((index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Runs `cfg` and writes `<mode>.csv` and `summary.toml` into `out_dir`.
pub fn run(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunSummary> {
    let violations = cfg.validate();
    if has_errors(&violations) {
        let msgs: Vec<String> = violations
            .iter()
            .filter(|v| v.severity == Severity::Error)
            .map(ToString::to_string)
            .collect();
        return Err(Error::Config(msgs.join("; ")));
    }
    let mode = cfg.mode.expect("validated");
    fs::create_dir_all(out_dir)?;
    let csv_path = out_dir.join(format!("{}.csv", mode.file_stem()));
    let mut csv = Csv::create(&csv_path, columns(mode))?;
    let mut summary = RunSummary {
        mode,
        seed: cfg.seed.unwrap_or(0),
        csv: csv_path,
        rows: 0,
        warnings: violations.iter().map(ToString::to_string).collect(),
        metrics: BTreeMap::new(),
    };
    match mode {
        Mode::LeakageSweep => run_leakage(cfg, &mut csv)?,
        Mode::PipulseDephasing => run_pipulse(cfg, &mut csv)?,
        Mode::DdFidelity | Mode::McVsAnalytic => run_dd(cfg, mode, &mut csv, &mut summary)?,
        Mode::SmpCompare => run_smp(cfg, out_dir, &mut csv, &mut summary)?,
    }
    summary.rows = csv.rows;
    let text = toml::to_string(&summary).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(out_dir.join("summary.toml"), text)?;
    Ok(summary)
}

/// Collective pulse of length `pi / omega_rf` on two spins, offsets
/// `±ratio * omega_rf`, starting from the logical z state.
fn run_leakage(cfg: &ExperimentConfig, csv: &mut Csv) -> Result<()> {
    let j = cfg.system.j_hz.expect("validated");
    let omega_rf = TAU * cfg.leakage.rf_over_j.unwrap_or(500.0) * j;
    let steps = cfg.leakage.steps.unwrap_or(200);
    let t_p = PI / omega_rf;
    let enc = DfsEncoding::single();
    let rho0 = logical_paulis(&enc, 0)?.z;
    for &ratio in cfg.leakage.ratios.as_deref().unwrap_or(&[]) {
        let sys = SpinSystem::two_spin(ratio * omega_rf, j);
        let seq = PulseSequence::from_events(vec![PulseEvent::Segment {
            duration: t_p,
            targets: Targets::All,
            amplitude: omega_rf,
            phase: 0.0,
            offset: 0.0,
        }])?;
        let mut sim = SimConfig::new(sys, cfg.coupling(), seq, OuParams::new(0.0, 1.0)?, 1, 0);
        sim.dt = t_p / steps as f64;
        for pt in observable_series(&sim, &rho0, Some(&enc))? {
            csv.row(&[Cell::F(ratio), Cell::F(pt.time), Cell::F(pt.leakage.unwrap_or(f64::NAN))])?;
        }
    }
    Ok(())
}

fn run_pipulse(cfg: &ExperimentConfig, csv: &mut Csv) -> Result<()> {
    let omega_rf = TAU * cfg.pipulse.rf_hz.unwrap_or(25e3);
    let states = cfg
        .pipulse
        .states
        .clone()
        .unwrap_or_else(|| vec![LogicalState::Identity, LogicalState::X, LogicalState::Y, LogicalState::Z]);
    let lp = logical_paulis(&DfsEncoding::single(), 0)?;
    for x in cfg.pipulse.grid().unwrap_or_default() {
        let t2 = 1.0 / (x * omega_rf);
        for &s in &states {
            let rho0 = match s {
                LogicalState::Identity => &lp.identity,
                LogicalState::X => &lp.x,
                LogicalState::Y => &lp.y,
                LogicalState::Z => &lp.z,
            };
            let r = lindblad_pi_pulse(t2, omega_rf, rho0)?;
            csv.row(&[Cell::F(x), Cell::S(s.label()), Cell::F(r.purity), Cell::F(r.correlation)])?;
        }
    }
    Ok(())
}

fn run_dd(cfg: &ExperimentConfig, mode: Mode, csv: &mut Csv, summary: &mut RunSummary) -> Result<()> {
    let strength = cfg.strength().expect("validated");
    let t = cfg.sequence.total_time_s.expect("validated");
    let n_traj = cfg.simulation.n_traj.unwrap_or(0);
    let sys = cfg.spin_system()?;
    let seed = cfg.seed.unwrap_or(0);
    let taus = cfg.noise.tau_grid().unwrap_or_default();
    let (mut within, mut points) = (0usize, 0usize);
    let mut index = 0;
    for name in cfg.names(mode) {
        for &n in cfg.sequence.cycles.as_deref().unwrap_or(&[]) {
            let (mut seq, tau) = match name {
                SequenceName::Ts => {
                    let tau = t / (4.0 * n as f64);
                    (build_ts(n, tau)?, tau)
                }
                _ => {
                    let tau = t / (2.0 * n as f64);
                    (build_cp(n, tau, cfg.sequence.wrappers.unwrap_or(false))?, tau)
                }
            };
            if let Some(pt) = cfg.sequence.pulse_time_s {
                seq = seq.with_hard_pulses(pt)?;
            }
            for &tau_c in &taus {
                let analytic = match name {
                    SequenceName::Ts => {
                        let (z1, z2) = ts_zetas(strength, tau_c, n, tau)?;
                        ts_fidelity(z1, z2, n, tau)
                    }
                    _ => cp_fidelity(cp_zeta(strength, tau_c, n, tau)?, n, tau),
                };
                let (mc, se) = if n_traj > 0 {
                    let mut sim = SimConfig::new(
                        sys.clone(),
                        cfg.coupling(),
                        seq.clone(),
                        OuParams::new(strength, tau_c)?,
                        n_traj,
                        point_seed(seed, index),
                    );
                    if let Some(dt) = cfg.simulation.dt_s {
                        sim.dt = dt;
                    }
                    let r = average_superpropagator(&sim)?;
                    (r.fidelity, r.fidelity_stderr)
                } else {
                    (f64::NAN, f64::NAN)
                };
                index += 1;
                let mut cells = vec![
                    Cell::F(tau_c),
                    Cell::F(analytic),
                    Cell::F(mc),
                    Cell::F(se),
                    Cell::S(name.label()),
                    Cell::U(n as u64),
                ];
                if mode == Mode::McVsAnalytic {
                    let diff = (mc - analytic).abs();
                    let ok = diff <= 3.0 * se;
                    within += ok as usize;
                    points += 1;
                    cells.push(Cell::F(diff));
                    cells.push(Cell::U(ok as u64));
                }
                csv.row(&cells)?;
            }
        }
    }
    if mode == Mode::McVsAnalytic {
        summary.metrics.insert("points".into(), points as f64);
        summary.metrics.insert("within_3se".into(), within as f64);
    }
    Ok(())
}

fn run_smp(cfg: &ExperimentConfig, out_dir: &Path, csv: &mut Csv, summary: &mut RunSummary) -> Result<()> {
    let sys = cfg.spin_system()?;
    let coupling = cfg.coupling();
    let task = SelectiveGateTask::new(&sys, coupling, cfg.smp.angle.unwrap_or(FRAC_PI_2))?;
    let seed = cfg.seed.unwrap_or(0);
    let mut pulses: Vec<(&str, PulseSequence)> = Vec::new();
    for name in cfg.names(Mode::SmpCompare) {
        match name {
            SequenceName::Cp => pulses.push(("ideal", task.cp.clone())),
            SequenceName::HardPi => {
                let pt = cfg.sequence.pulse_time_s.unwrap_or(2e-6);
                pulses.push(("hard", task.cp.with_hard_pulses(pt)?));
            }
            SequenceName::SmpFile => {
                let segments = match &cfg.sequence.smp_file {
                    Some(path) => read_table(BufReader::new(File::open(path)?))?,
                    None => {
                        let mut prob = task.problem()?;
                        prob.restarts = cfg.smp.restarts.unwrap_or(1);
                        prob.max_evals = cfg.smp.max_evals.unwrap_or(3000);
                        prob.seed = cfg.smp.seed.unwrap_or(seed);
                        let r = smp_search(&prob)?;
                        summary.metrics.insert("smp_initial_fidelity".into(), r.initial_fidelity);
                        summary.metrics.insert("smp_evaluations".into(), r.evaluations as f64);
                        write_table(&r.segments, BufWriter::new(File::create(out_dir.join("smp_segments.tsv"))?))?;
                        r.segments
                    }
                };
                let events = segments.iter().map(SmpSegment::to_event).collect();
                pulses.push(("smp", PulseSequence::from_events(events)?));
            }
            SequenceName::Ts => unreachable!("rejected by validate"),
        }
    }
    let mut gate = Vec::with_capacity(pulses.len());
    for (label, seq) in &pulses {
        let f = task.fidelity_of(seq)?;
        summary.metrics.insert(format!("gate_fidelity_{label}"), f);
        gate.push(f);
    }
    let n_traj = cfg.simulation.n_traj.unwrap_or(0);
    let mut index = 0;
    for tau_c in cfg.noise.tau_grid().unwrap_or_default() {
        for ((label, seq), &f) in pulses.iter().zip(&gate) {
            let (mc, se) = if n_traj > 0 {
                let mut sim = SimConfig::new(
                    sys.clone(),
                    coupling,
                    seq.clone(),
                    OuParams::new(cfg.strength().expect("validated"), tau_c)?,
                    n_traj,
                    point_seed(seed, index),
                );
                sim.target = Some(task.target.clone());
                sim.projector = Some(task.projector.clone());
                if let Some(dt) = cfg.simulation.dt_s {
                    sim.dt = dt;
                }
                let r = average_superpropagator(&sim)?;
                (r.fidelity, r.fidelity_stderr)
            } else {
                (f64::NAN, f64::NAN)
            };
            index += 1;
            csv.row(&[Cell::F(tau_c), Cell::S(label), Cell::F(f), Cell::F(mc), Cell::F(se)])?;
        }
    }
    Ok(())
}
