//! Pulse sequences, their compilation into toggling-frame intervals, and
//! average-Hamiltonian analysis.

use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{invalid, Error, Result};
use crate::linops::{evolve_unitary, Operator};
use crate::spinsys::{all_spins, collective_z, rf_hamiltonian_on};

#[derive(Clone, Debug, PartialEq)]
pub enum Targets {
    All,
    Spins(Vec<usize>),
}

impl Targets {
    pub fn spin(i: usize) -> Self {
        Targets::Spins(vec![i])
    }

    pub fn resolve(&self, n_spins: usize) -> Result<Vec<usize>> {
        match self {
            Targets::All => Ok(all_spins(n_spins)),
            Targets::Spins(s) => {
                if let Some(&bad) = s.iter().find(|&&i| i >= n_spins) {
                    return Err(Error::InvalidIndex { index: bad, limit: n_spins });
                }
                Ok(s.clone())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum PulseEvent {
    /// Free evolution.
    Delay { duration: f64 },
    /// Instantaneous rotation by `angle` about the axis at `phase` in the xy-plane.
    Rotation {
        targets: Targets,
        angle: f64,
        phase: f64,
    },
    /// Finite RF segment. `offset` (rad/s) enters as a detuning `-offset * Z` on all spins.
    Segment {
        duration: f64,
        targets: Targets,
        amplitude: f64,
        phase: f64,
        offset: f64,
    },
}

impl PulseEvent {
    pub fn delay(duration: f64) -> Self {
        PulseEvent::Delay { duration }
    }

    pub fn rotation(targets: Targets, angle: f64, phase: f64) -> Self {
        PulseEvent::Rotation { targets, angle, phase }
    }

    pub fn duration(&self) -> f64 {
        match self {
            PulseEvent::Delay { duration } | PulseEvent::Segment { duration, .. } => *duration,
            PulseEvent::Rotation { .. } => 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            PulseEvent::Delay { duration } if !(*duration >= 0.0 && duration.is_finite()) => {
                Err(invalid("duration", format!("delay of {duration} s")))
            }
            PulseEvent::Segment { duration, amplitude, .. } => {
                if !(*duration >= 0.0 && duration.is_finite()) {
                    Err(invalid("duration", format!("segment of {duration} s")))
                } else if !(*amplitude >= 0.0) {
                    Err(invalid("amplitude", format!("{amplitude} is negative")))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }
}

/// Exact unitary of an ideal rotation on `n_spins`.
pub fn rotation_unitary(n_spins: usize, targets: &Targets, angle: f64, phase: f64) -> Result<Operator> {
    let generator = rf_hamiltonian_on(n_spins, &targets.resolve(n_spins)?, 1.0, phase);
    evolve_unitary(&generator, angle)
}

/// Hamiltonian during a finite segment: `h_int + RF - offset * Z`.
pub fn segment_hamiltonian(
    h_int: &Operator,
    targets: &Targets,
    amplitude: f64,
    phase: f64,
    offset: f64,
) -> Result<Operator> {
    let n = h_int.n_spins();
    let mut h = h_int + &rf_hamiltonian_on(n, &targets.resolve(n)?, amplitude, phase);
    if offset != 0.0 {
        h = &h - &collective_z(n, &all_spins(n)).scale_real(offset);
    }
    Ok(h)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SequenceKind {
    Cp,
    Ts,
    Custom,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CycleInfo {
    pub kind: SequenceKind,
    pub cycles: u32,
    pub tau: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PulseSequence {
    events: Vec<PulseEvent>,
    cycle: Option<CycleInfo>,
}

impl Default for PulseSequence {
    fn default() -> Self {
        Self::new()
    }
}

impl PulseSequence {
    pub fn new() -> Self {
        Self {
            events: Vec::new(),
            cycle: None,
        }
    }

    pub fn from_events(events: Vec<PulseEvent>) -> Result<Self> {
        events.iter().try_for_each(PulseEvent::validate)?;
        Ok(Self { events, cycle: None })
    }

    pub fn push(&mut self, event: PulseEvent) -> Result<()> {
        event.validate()?;
        self.events.push(event);
        Ok(())
    }

    pub fn events(&self) -> &[PulseEvent] {
        &self.events
    }

    pub fn cycle_info(&self) -> Option<CycleInfo> {
        self.cycle
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Start time of each event plus the total duration as the final entry.
    pub fn event_times(&self) -> Vec<f64> {
        boundaries(&self.events.iter().map(PulseEvent::duration).collect::<Vec<_>>())
    }

    pub fn duration(&self) -> f64 {
        *self.event_times().last().unwrap()
    }

    /// Number of ideal or finite pulses addressing each spin.
    pub fn pulses_per_spin(&self, n_spins: usize) -> Result<Vec<usize>> {
        let mut counts = vec![0; n_spins];
        for e in &self.events {
            let targets = match e {
                PulseEvent::Rotation { targets, .. } | PulseEvent::Segment { targets, .. } => targets,
                PulseEvent::Delay { .. } => continue,
            };
            for s in targets.resolve(n_spins)? {
                counts[s] += 1;
            }
        }
        Ok(counts)
    }

    /// Replaces every ideal rotation with a block of events of total duration
    /// `D`, centred on the rotation's time point by trimming `D/2` from each
    /// neighbouring delay. At the ends of the sequence the block extends it.
    pub fn replace_rotations<F>(&self, mut block: F) -> Result<PulseSequence>
    where
        F: FnMut(&Targets, f64, f64) -> Result<Vec<PulseEvent>>,
    {
        let mut out: Vec<PulseEvent> = Vec::with_capacity(self.events.len());
        let mut pending_trim = 0.0;
        for e in &self.events {
            match e {
                PulseEvent::Rotation { targets, angle, phase } => {
                    let blk = block(targets, *angle, *phase)?;
                    let len: f64 = blk.iter().map(PulseEvent::duration).sum();
                    let half = len / 2.0;
                    if let Some(PulseEvent::Delay { duration }) = out.last_mut() {
                        *duration -= half + std::mem::take(&mut pending_trim);
                        if *duration < -1e-15 {
                            return Err(invalid("pulse_time", "finite pulses overlap: delay too short"));
                        }
                        *duration = duration.max(0.0);
                    }
                    out.extend(blk);
                    pending_trim = half;
                }
                PulseEvent::Delay { duration } => {
                    let d = duration - std::mem::take(&mut pending_trim);
                    if d < -1e-15 {
                        return Err(invalid("pulse_time", "finite pulses overlap: delay too short"));
                    }
                    out.push(PulseEvent::delay(d.max(0.0)));
                }
                other => {
                    pending_trim = 0.0;
                    out.push(other.clone());
                }
            }
        }
        let mut seq = PulseSequence::from_events(out)?;
        seq.cycle = self.cycle;
        Ok(seq)
    }

    /// Hard-pulse version: a rotation by `theta` becomes a rectangular segment
    /// of amplitude `pi / pi_time` lasting `|theta| / pi * pi_time`.
    pub fn with_hard_pulses(&self, pi_time: f64) -> Result<PulseSequence> {
        if !(pi_time > 0.0) {
            return Err(invalid("pulse_time", "must be positive"));
        }
        let amplitude = PI / pi_time;
        self.replace_rotations(|targets, angle, phase| {
            let phase = if angle < 0.0 { phase + PI } else { phase };
            Ok(vec![PulseEvent::Segment {
                duration: angle.abs() / PI * pi_time,
                targets: targets.clone(),
                amplitude,
                phase,
                offset: 0.0,
            }])
        })
    }
}

/// Cumulative start times with exact tiling. Equal durations use index
/// multiplication; otherwise a compensated running sum.
fn boundaries(durations: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(durations.len() + 1);
    out.push(0.0);
    let positive: Vec<f64> = durations.iter().copied().filter(|&d| d > 0.0).collect();
    if let Some(&first) = positive.first() {
        if positive.iter().all(|&d| d == first) {
            let mut k = 0u64;
            for &d in durations {
                if d > 0.0 {
                    k += 1;
                }
                out.push(k as f64 * first);
            }
            return out;
        }
    }
    // Neumaier summation
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for &d in durations {
        let t = sum + d;
        if sum.abs() >= d.abs() {
            comp += (sum - t) + d;
        } else {
            comp += (d - t) + sum;
        }
        sum = t;
        out.push(sum + comp);
    }
    out
}

fn require(n: u32, tau: f64) -> Result<()> {
    if n == 0 {
        return Err(invalid("cycles", "must be at least 1"));
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(invalid("tau", format!("{tau} must be positive")));
    }
    Ok(())
}

/// `[pi/2]_y (-tau- [pi]_x -tau- [pi]_x)^n [pi/2]_-y` with collective ideal pulses.
pub fn build_cp(n: u32, tau: f64, with_wrappers: bool) -> Result<PulseSequence> {
    require(n, tau)?;
    let mut events = Vec::with_capacity(4 * n as usize + 2);
    if with_wrappers {
        events.push(PulseEvent::rotation(Targets::All, FRAC_PI_2, FRAC_PI_2));
    }
    for _ in 0..n {
        for _ in 0..2 {
            events.push(PulseEvent::delay(tau));
            events.push(PulseEvent::rotation(Targets::All, PI, 0.0));
        }
    }
    if with_wrappers {
        events.push(PulseEvent::rotation(Targets::All, FRAC_PI_2, -FRAC_PI_2));
    }
    Ok(PulseSequence {
        events,
        cycle: Some(CycleInfo {
            kind: SequenceKind::Cp,
            cycles: n,
            tau,
        }),
    })
}

/// `(-tau- [pi]_x^1 -tau- [pi]_x^2 -tau- [pi]_x^1 -tau- [pi]_x^2)^n` on spins 1 and 2.
pub fn build_ts(n: u32, tau: f64) -> Result<PulseSequence> {
    require(n, tau)?;
    let mut events = Vec::with_capacity(8 * n as usize);
    for _ in 0..n {
        for spin in [0, 1, 0, 1] {
            events.push(PulseEvent::delay(tau));
            events.push(PulseEvent::rotation(Targets::spin(spin), PI, 0.0));
        }
    }
    Ok(PulseSequence {
        events,
        cycle: Some(CycleInfo {
            kind: SequenceKind::Ts,
            cycles: n,
            tau,
        }),
    })
}

/// One free-evolution interval seen from the toggling frame.
#[derive(Clone, Debug)]
pub struct TogglingInterval {
    pub start: f64,
    pub end: f64,
    /// Noise generator in the toggling frame.
    pub noise_generator: Operator,
    /// Deterministic Hamiltonian in the toggling frame.
    pub hamiltonian: Operator,
}

impl TogglingInterval {
    pub fn length(&self) -> f64 {
        self.end - self.start
    }
}

#[derive(Clone, Debug)]
pub struct CompiledSequence {
    pub intervals: Vec<TogglingInterval>,
    /// RF propagator at the end of the sequence.
    pub rf_final: Operator,
    /// Whether the RF propagator closes to the identity up to a global phase.
    pub cyclic: bool,
}

/// Transforms the delays of an ideal-pulse sequence into the toggling frame
/// `O~ = U_rf^dag O U_rf`.
pub fn compile(seq: &PulseSequence, h_int: &Operator, noise_generator: &Operator) -> Result<CompiledSequence> {
    let n = h_int.n_spins();
    if noise_generator.dim() != h_int.dim() {
        return Err(Error::Dimension("noise generator and Hamiltonian differ".into()));
    }
    let times = seq.event_times();
    let mut u_rf = Operator::identity(h_int.dim());
    let mut intervals = Vec::new();
    for (k, e) in seq.events.iter().enumerate() {
        match e {
            PulseEvent::Rotation { targets, angle, phase } => {
                u_rf = &rotation_unitary(n, targets, *angle, *phase)? * &u_rf;
            }
            PulseEvent::Delay { duration } => {
                if *duration == 0.0 {
                    continue;
                }
                intervals.push(TogglingInterval {
                    start: times[k],
                    end: times[k + 1],
                    noise_generator: u_rf.toggle(noise_generator),
                    hamiltonian: u_rf.toggle(h_int),
                });
            }
            PulseEvent::Segment { .. } => return Err(Error::NotIdeal),
        }
    }
    let cyclic = u_rf.equal_up_to_phase(&Operator::identity(h_int.dim())) < 1e-9;
    Ok(CompiledSequence {
        intervals,
        rf_final: u_rf,
        cyclic,
    })
}

/// Time-weighted mean of the toggling-frame Hamiltonian.
pub fn zeroth_avg_hamiltonian(intervals: &[TogglingInterval]) -> Result<Operator> {
    let first = intervals.first().ok_or(Error::EmptyIntervals)?;
    let mut acc = Operator::zeros(first.hamiltonian.dim());
    let mut total = 0.0;
    for iv in intervals {
        acc += &iv.hamiltonian.scale_real(iv.length());
        total += iv.length();
    }
    Ok(acc.scale_real(1.0 / total))
}

/// Noiseless laboratory-frame propagator of a sequence under `h_int`.
pub fn sequence_propagator(seq: &PulseSequence, h_int: &Operator) -> Result<Operator> {
    let n = h_int.n_spins();
    let mut u = Operator::identity(h_int.dim());
    for e in &seq.events {
        let step = match e {
            PulseEvent::Delay { duration } => evolve_unitary(h_int, *duration)?,
            PulseEvent::Rotation { targets, angle, phase } => rotation_unitary(n, targets, *angle, *phase)?,
            PulseEvent::Segment {
                duration,
                targets,
                amplitude,
                phase,
                offset,
            } => evolve_unitary(
                &segment_hamiltonian(h_int, targets, *amplitude, *phase, *offset)?,
                *duration,
            )?,
        };
        u = &step * &u;
    }
    Ok(u)
}
