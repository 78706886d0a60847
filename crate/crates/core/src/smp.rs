//! Strongly modulating pulses: piecewise-constant RF waveforms found by a
//! derivative-free search for a target gate.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::linops::{evolve_unitary, Operator};
use crate::sequences::{build_cp, segment_hamiltonian, sequence_propagator, PulseEvent, PulseSequence, Targets};
use crate::spinsys::{dfs_projector, internal_hamiltonian, logical_paulis, CouplingForm, DfsEncoding, SpinSystem};

/// One constant-amplitude segment of collective RF.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmpSegment {
    /// Seconds.
    pub duration: f64,
    /// rad/s.
    pub amplitude: f64,
    /// rad.
    pub phase: f64,
    /// Frequency offset of the RF, rad/s, applied as a detuning on every spin.
    pub offset: f64,
}

impl SmpSegment {
    pub fn new(duration: f64, amplitude: f64, phase: f64, offset: f64) -> Result<Self> {
        if !(duration > 0.0 && duration.is_finite()) {
            return Err(invalid("duration", format!("{duration} must be positive")));
        }
        if !(amplitude >= 0.0 && amplitude.is_finite()) {
            return Err(invalid("amplitude", format!("{amplitude} must be non-negative")));
        }
        if !phase.is_finite() || !offset.is_finite() {
            return Err(invalid("phase", "phase and offset must be finite"));
        }
        Ok(Self {
            duration,
            amplitude,
            phase,
            offset,
        })
    }

    pub fn to_event(&self) -> PulseEvent {
        PulseEvent::Segment {
            duration: self.duration,
            targets: Targets::All,
            amplitude: self.amplitude,
            phase: self.phase,
            offset: self.offset,
        }
    }
}

pub fn total_duration(segments: &[SmpSegment]) -> f64 {
    segments.iter().map(|s| s.duration).sum()
}

/// Ordered product of segment propagators under `h_int` plus the segment RF.
pub fn smp_propagator(segments: &[SmpSegment], h_int: &Operator) -> Result<Operator> {
    let mut u = Operator::identity(h_int.dim());
    for s in segments {
        let h = segment_hamiltonian(h_int, &Targets::All, s.amplitude, s.phase, s.offset)?;
        u = &evolve_unitary(&h, s.duration)? * &u;
    }
    Ok(u)
}

/// `|Tr(target^dag u)|^2 / d^2`.
pub fn gate_fidelity(u: &Operator, target: &Operator) -> Result<f64> {
    if u.dim() != target.dim() {
        return Err(Error::Dimension(format!("{} vs {}", u.dim(), target.dim())));
    }
    let d = u.dim() as f64;
    Ok(target.inner(u).norm_sqr() / (d * d))
}

/// `|Tr(P target^dag u P)|^2 / r^2` with `r = rank P`: the gate fidelity
/// restricted to the subspace of the projector `P`.
pub fn subspace_gate_fidelity(u: &Operator, target: &Operator, projector: &Operator) -> Result<f64> {
    if u.dim() != target.dim() || u.dim() != projector.dim() {
        return Err(Error::Dimension("gate, target and projector differ".into()));
    }
    let r = projector.trace().re.round();
    if r < 1.0 {
        return Err(invalid("projector", "has rank zero"));
    }
    let restricted = &(projector * &target.adjoint()) * &(u * projector);
    Ok(restricted.trace().norm_sqr() / (r * r))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SearchBounds {
    /// Longest segment, seconds.
    pub max_duration: f64,
    /// Largest RF amplitude, rad/s.
    pub max_amplitude: f64,
    /// Largest |offset|, rad/s.
    pub max_offset: f64,
}

impl Default for SearchBounds {
    fn default() -> Self {
        Self {
            max_duration: 50e-6,
            max_amplitude: TAU * 100e3,
            max_offset: TAU * 20e3,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SmpProblem {
    pub h_int: Operator,
    pub target: Operator,
    pub n_segments: usize,
    pub bounds: SearchBounds,
    /// Score only on this subspace, e.g. the logical subspace of a DFS code.
    pub projector: Option<Operator>,
    /// Starting waveform for the first restart; its length overrides `n_segments`.
    pub initial: Option<Vec<SmpSegment>>,
    pub restarts: usize,
    /// Objective evaluations per restart.
    pub max_evals: usize,
    /// Stop a restart once `1 - F` falls below this.
    pub tolerance: f64,
    pub seed: u64,
}

impl SmpProblem {
    pub fn new(h_int: Operator, target: Operator, n_segments: usize) -> Self {
        Self {
            h_int,
            target,
            n_segments,
            bounds: SearchBounds::default(),
            projector: None,
            initial: None,
            restarts: 4,
            max_evals: 4000,
            tolerance: 1e-10,
            seed: 0,
        }
    }

    fn segment_count(&self) -> usize {
        self.initial.as_ref().map_or(self.n_segments, Vec::len)
    }

    fn check(&self) -> Result<()> {
        if self.segment_count() == 0 {
            return Err(invalid("n_segments", "must be at least 1"));
        }
        if self.restarts == 0 || self.max_evals == 0 {
            return Err(invalid("budget", "restarts and max_evals must be positive"));
        }
        if self.h_int.dim() != self.target.dim() {
            return Err(Error::Dimension("target and Hamiltonian differ".into()));
        }
        if !self.target.is_unitary() {
            return Err(Error::NotUnitary);
        }
        let b = &self.bounds;
        if !(b.max_duration > 0.0 && b.max_amplitude >= 0.0 && b.max_offset >= 0.0) {
            return Err(invalid("bounds", "must be non-negative with positive max_duration"));
        }
        Ok(())
    }

    pub fn fidelity(&self, segments: &[SmpSegment]) -> Result<f64> {
        let u = smp_propagator(segments, &self.h_int)?;
        match &self.projector {
            Some(p) => subspace_gate_fidelity(&u, &self.target, p),
            None => gate_fidelity(&u, &self.target),
        }
    }

    /// Unconstrained parameters to segments: `d_max sin^2`, `a_max sin^2`,
    /// `pi p`, `o_max sin`.
    fn decode(&self, x: &[f64]) -> Vec<SmpSegment> {
        let b = &self.bounds;
        x.chunks_exact(4)
            .map(|p| SmpSegment {
                duration: (b.max_duration * p[0].sin().powi(2)).max(1e-15),
                amplitude: b.max_amplitude * p[1].sin().powi(2),
                phase: PI * p[2],
                offset: b.max_offset * p[3].sin(),
            })
            .collect()
    }

    fn encode(&self, segments: &[SmpSegment]) -> Vec<f64> {
        let b = &self.bounds;
        let ratio = |v: f64, m: f64| if m > 0.0 { (v / m).clamp(0.0, 1.0) } else { 0.0 };
        segments
            .iter()
            .flat_map(|s| {
                [
                    ratio(s.duration, b.max_duration).sqrt().asin(),
                    ratio(s.amplitude, b.max_amplitude).sqrt().asin(),
                    s.phase / PI,
                    if b.max_offset > 0.0 {
                        (s.offset / b.max_offset).clamp(-1.0, 1.0).asin()
                    } else {
                        0.0
                    },
                ]
            })
            .collect()
    }

    fn random_start(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..self.segment_count())
            .flat_map(|_| {
                [
                    rng.random_range(0.2..FRAC_PI_2),
                    rng.random_range(0.0..FRAC_PI_2),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-FRAC_PI_2..FRAC_PI_2),
                ]
            })
            .collect()
    }

    fn cost(&self, x: &[f64]) -> f64 {
        match self.fidelity(&self.decode(x)) {
            Ok(f) => 1.0 - f,
            Err(_) => f64::INFINITY,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SmpResult {
    pub segments: Vec<SmpSegment>,
    pub fidelity: f64,
    /// Fidelity at the first restart's starting point.
    pub initial_fidelity: f64,
    /// Best-so-far fidelity after every simplex iteration, restarts in order.
    pub history: Vec<f64>,
    pub evaluations: usize,
    /// True if some restart ran out of evaluations before meeting the tolerance.
    pub budget_exhausted: bool,
}

struct Run {
    best_x: Vec<f64>,
    best_cost: f64,
    trace: Vec<f64>,
    evals: usize,
    exhausted: bool,
}

/// Nelder-Mead with standard coefficients, re-seeded around the incumbent
/// whenever the simplex collapses while budget remains.
fn nelder_mead(f: impl Fn(&[f64]) -> f64, x0: Vec<f64>, max_evals: usize, tol: f64) -> Run {
    let n = x0.len();
    let mut evals = 0usize;
    let eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        f(x)
    };
    let mut best_x = x0.clone();
    let mut best_cost = eval(&x0, &mut evals);
    let mut trace = vec![best_cost];
    let mut step = 0.3;
    'outer: while evals < max_evals && best_cost > tol {
        let mut simplex: Vec<(Vec<f64>, f64)> = vec![(best_x.clone(), best_cost)];
        for i in 0..n {
            let mut x = best_x.clone();
            x[i] += step;
            let c = eval(&x, &mut evals);
            simplex.push((x, c));
        }
        let start_cost = best_cost;
        loop {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            if simplex[0].1 < best_cost {
                best_cost = simplex[0].1;
                best_x = simplex[0].0.clone();
            }
            trace.push(best_cost);
            if evals >= max_evals || best_cost <= tol {
                break 'outer;
            }
            let spread = simplex[n].1 - simplex[0].1;
            let size = simplex[1..]
                .iter()
                .map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
                .fold(0.0, f64::max);
            if spread <= 1e-14 * (1.0 + simplex[0].1.abs()) && size < 1e-8 || size < 1e-10 {
                break;
            }
            let mut centroid = vec![0.0; n];
            for (x, _) in &simplex[..n] {
                centroid.iter_mut().zip(x).for_each(|(c, v)| *c += v / n as f64);
            }
            let along = |t: f64, worst: &[f64]| -> Vec<f64> {
                centroid.iter().zip(worst).map(|(c, w)| c + t * (c - w)).collect()
            };
            let worst = simplex[n].0.clone();
            let xr = along(1.0, &worst);
            let fr = eval(&xr, &mut evals);
            if fr < simplex[0].1 {
                let xe = along(2.0, &worst);
                let fe = eval(&xe, &mut evals);
                simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            } else if fr < simplex[n - 1].1 {
                simplex[n] = (xr, fr);
            } else {
                let (xc, fc) = if fr < simplex[n].1 {
                    let xc = along(0.5, &worst);
                    let fc = eval(&xc, &mut evals);
                    (xc, fc)
                } else {
                    let xc = along(-0.5, &worst);
                    let fc = eval(&xc, &mut evals);
                    (xc, fc)
                };
                if fc < fr.min(simplex[n].1) {
                    simplex[n] = (xc, fc);
                } else {
                    let x0 = simplex[0].0.clone();
                    for (x, c) in simplex.iter_mut().skip(1) {
                        x.iter_mut().zip(&x0).for_each(|(v, b)| *v = b + 0.5 * (*v - b));
                        *c = eval(x, &mut evals);
                    }
                }
            }
        }
        // collapsed: restart around the incumbent with a smaller step if stuck
        if best_cost >= start_cost {
            step *= 0.5;
            if step < 1e-6 {
                break;
            }
        }
    }
    Run {
        best_x,
        best_cost,
        trace,
        exhausted: evals >= max_evals && best_cost > tol,
        evals,
    }
}

/// Searches for segments maximizing the (subspace) gate fidelity. Restart 0
/// starts from `initial` when given; the others from seeded random points.
/// Running out of budget is reported in the result, not as an error.
pub fn smp_search(problem: &SmpProblem) -> Result<SmpResult> {
    problem.check()?;
    let starts: Vec<Vec<f64>> = (0..problem.restarts)
        .map(|r| match (&problem.initial, r) {
            (Some(init), 0) => problem.encode(init),
            _ => {
                let mut rng = ChaCha8Rng::seed_from_u64(problem.seed);
                rng.set_stream(r as u64);
                problem.random_start(&mut rng)
            }
        })
        .collect();
    let initial_fidelity = 1.0 - problem.cost(&starts[0]);
    let runs: Vec<Run> = starts
        .into_par_iter()
        .map(|x0| nelder_mead(|x| problem.cost(x), x0, problem.max_evals, problem.tolerance))
        .collect();

    let mut history = Vec::new();
    let mut best: Option<&Run> = None;
    let mut running = f64::INFINITY;
    for run in &runs {
        for &c in &run.trace {
            running = running.min(c);
            history.push(1.0 - running);
        }
        if best.is_none_or(|b| run.best_cost < b.best_cost) {
            best = Some(run);
        }
    }
    let best = best.unwrap();
    let segments = problem.decode(&best.best_x);
    Ok(SmpResult {
        fidelity: problem.fidelity(&segments)?,
        segments,
        initial_fidelity,
        history,
        evaluations: runs.iter().map(|r| r.evals).sum(),
        budget_exhausted: runs.iter().any(|r| r.exhausted),
    })
}

/// Four spins with two DFS pairs far apart in frequency; the in-pair
/// couplings differ so pair 2 over-rotates when pair 1 is driven. Fictitious
/// values chosen for the selective-gate benchmark.
pub fn fictitious_four_spin() -> SpinSystem {
    let mut j = vec![vec![0.0; 4]; 4];
    for (a, b, v) in [(0, 1, 50.0), (2, 3, 35.0), (1, 2, 5.0)] {
        j[a][b] = v;
        j[b][a] = v;
    }
    SpinSystem::from_hz(&[5300.0, 4700.0, -4800.0, -5200.0], j).expect("valid fixed system")
}

/// Logical x-rotation of the first qubit of a two-pair DFS code, scored on
/// the code space, with the one-cycle CP realization as the reference.
#[derive(Clone, Debug)]
pub struct SelectiveGateTask {
    pub h_int: Operator,
    pub target: Operator,
    pub projector: Operator,
    /// Ideal-pulse CP with wrappers, `tau = angle / (2 pi J12)`.
    pub cp: PulseSequence,
}

impl SelectiveGateTask {
    pub fn new(sys: &SpinSystem, coupling: CouplingForm, angle: f64) -> Result<Self> {
        if sys.n_spins() != 4 {
            return Err(invalid("system", "four spins required"));
        }
        let j12 = sys.coupling(0, 1);
        if !(j12 > 0.0) {
            return Err(invalid("couplings", "J12 must be positive"));
        }
        let enc = DfsEncoding::double();
        let lx = logical_paulis(&enc, 0)?.x;
        Ok(Self {
            h_int: internal_hamiltonian(sys, coupling),
            target: evolve_unitary(&lx, angle / 2.0)?,
            projector: dfs_projector(&enc),
            cp: build_cp(1, angle / (TAU * j12), true)?,
        })
    }

    pub fn fidelity_of(&self, seq: &PulseSequence) -> Result<f64> {
        subspace_gate_fidelity(&sequence_propagator(seq, &self.h_int)?, &self.target, &self.projector)
    }

    /// Search problem started from the CP with soft pulses at the amplitude
    /// bound; delays become zero-amplitude segments.
    pub fn problem(&self) -> Result<SmpProblem> {
        let bounds = SearchBounds::default();
        let tau = self.cp.cycle_info().map_or(0.0, |c| c.tau);
        let soft = self.cp.with_hard_pulses(PI / bounds.max_amplitude)?;
        let init = soft
            .events()
            .iter()
            .filter(|e| e.duration() > 0.0)
            .map(|e| match e {
                PulseEvent::Segment {
                    duration,
                    amplitude,
                    phase,
                    ..
                } => SmpSegment::new(*duration, *amplitude, *phase, 0.0),
                other => SmpSegment::new(other.duration(), 0.0, 0.0, 0.0),
            })
            .collect::<Result<Vec<_>>>()?;
        let mut prob = SmpProblem::new(self.h_int.clone(), self.target.clone(), init.len());
        prob.projector = Some(self.projector.clone());
        prob.bounds = SearchBounds {
            max_duration: 2.0 * tau,
            ..bounds
        };
        prob.initial = Some(init);
        Ok(prob)
    }
}

pub const TABLE_HEADER: &str = "duration_s\tamplitude_hz\tphase_rad\toffset_hz";

/// Writes one row per segment; amplitude and offset in Hz.
pub fn write_table<W: Write>(segments: &[SmpSegment], mut w: W) -> Result<()> {
    writeln!(w, "{TABLE_HEADER}")?;
    for s in segments {
        writeln!(
            w,
            "{:.16e}\t{:.16e}\t{:.16e}\t{:.16e}",
            s.duration,
            s.amplitude / TAU,
            s.phase,
            s.offset / TAU
        )?;
    }
    Ok(())
}

/// Reads a segment table. Blank lines, `#` comments and a header row are
/// skipped; fields may be separated by whitespace or commas.
pub fn read_table<R: BufRead>(r: R) -> Result<Vec<SmpSegment>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let text = line.split('#').next().unwrap_or("").trim();
        if text.is_empty() || text.starts_with("duration") {
            continue;
        }
        let fields: Vec<&str> = text.split(|c: char| c == ',' || c.is_whitespace()).filter(|f| !f.is_empty()).collect();
        let bad = |reason: String| Error::Table { line: i + 1, reason };
        if fields.len() != 4 {
            return Err(bad(format!("expected 4 fields, found {}", fields.len())));
        }
        let mut v = [0.0; 4];
        for (slot, f) in v.iter_mut().zip(&fields) {
            *slot = f.parse().map_err(|_| bad(format!("`{f}` is not a number")))?;
        }
        let seg = SmpSegment::new(v[0], v[1] * TAU, v[2], v[3] * TAU).map_err(|e| bad(e.to_string()))?;
        out.push(seg);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linops::pauli;
    use crate::spinsys::collective_x;
    use crate::testutil::random_unitary;

    fn two_spin_h() -> Operator {
        internal_hamiltonian(&SpinSystem::two_spin(TAU * 600.0, 50.0), CouplingForm::Full)
    }

    fn collective_pi() -> Operator {
        evolve_unitary(&collective_x(2, &[0, 1]), PI).unwrap()
    }

    #[test]
    fn empty_waveform_is_identity() {
        let u = smp_propagator(&[], &two_spin_h()).unwrap();
        assert_eq!(u.max_abs_diff(&Operator::identity(4)), 0.0);
    }

    #[test]
    fn hard_pulse_limit() {
        let t_p = 2e-6;
        let seg = SmpSegment::new(t_p, PI / t_p, 0.0, 0.0).unwrap();
        let free = Operator::zeros(4);
        let u = smp_propagator(&[seg], &free).unwrap();
        assert!((gate_fidelity(&u, &collective_pi()).unwrap() - 1.0).abs() < 1e-12);

        let real = smp_propagator(&[seg], &two_spin_h()).unwrap();
        let f = gate_fidelity(&real, &collective_pi()).unwrap();
        assert!(f < 1.0 && f > 0.99, "{f}");
    }

    #[test]
    fn propagator_is_unitary() {
        let segs: Vec<_> = (0..7)
            .map(|k| SmpSegment::new(3e-6 * (k + 1) as f64, TAU * 4e4, 0.3 * k as f64, TAU * 1e3).unwrap())
            .collect();
        for n in 0..=segs.len() {
            let u = smp_propagator(&segs[..n], &two_spin_h()).unwrap();
            let dev = (&u.adjoint() * &u).max_abs_diff(&Operator::identity(4));
            assert!(dev < 1e-11);
        }
    }

    #[test]
    fn gate_fidelity_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u = random_unitary(&mut rng, 4);
        let v = random_unitary(&mut rng, 4);
        assert!((gate_fidelity(&u, &u).unwrap() - 1.0).abs() < 1e-12);
        let phase = crate::linops::C64::from_polar(1.0, 0.7);
        let f = gate_fidelity(&u, &v).unwrap();
        assert!((gate_fidelity(&u.scale(phase), &v).unwrap() - f).abs() < 1e-12);
        assert!((gate_fidelity(&u, &v.scale(phase)).unwrap() - f).abs() < 1e-12);
        assert!(gate_fidelity(&pauli::x(), &Operator::identity(2)).unwrap() < 1e-15);
        assert!(gate_fidelity(&pauli::x(), &Operator::identity(4)).is_err());
    }

    #[test]
    fn subspace_fidelity_ignores_outside() {
        let p = Operator::diagonal(&[0.0, 1.0, 1.0, 0.0]);
        let inside = collective_pi();
        // flip the sign outside the subspace
        let outside = &inside * &Operator::diagonal(&[-1.0, 1.0, 1.0, -1.0]);
        assert!((subspace_gate_fidelity(&outside, &inside, &p).unwrap() - 1.0).abs() < 1e-12);
        assert!(gate_fidelity(&outside, &inside).unwrap() < 0.5);
    }

    #[test]
    fn identity_target_with_no_hamiltonian() {
        let mut prob = SmpProblem::new(Operator::zeros(4), Operator::identity(4), 2);
        prob.restarts = 2;
        prob.max_evals = 3000;
        let r = smp_search(&prob).unwrap();
        assert!(r.fidelity > 1.0 - 1e-9, "{}", r.fidelity);
    }

    #[test]
    fn search_history_is_monotone_and_beats_start() {
        let mut prob = SmpProblem::new(two_spin_h(), collective_pi(), 4);
        prob.restarts = 3;
        prob.max_evals = 3000;
        prob.seed = 7;
        let r = smp_search(&prob).unwrap();
        assert!(r.history.windows(2).all(|w| w[1] >= w[0]));
        assert!(r.fidelity >= r.initial_fidelity);
        assert!(r.fidelity >= 0.98, "{}", r.fidelity);
        assert_eq!(*r.history.last().unwrap(), r.history.iter().copied().fold(0.0, f64::max));
    }

    #[test]
    fn search_is_deterministic() {
        let mut prob = SmpProblem::new(two_spin_h(), collective_pi(), 4);
        prob.restarts = 2;
        prob.max_evals = 400;
        prob.seed = 3;
        let a = smp_search(&prob).unwrap();
        let b = smp_search(&prob).unwrap();
        assert_eq!(a.segments, b.segments);
        assert_eq!(a.history, b.history);
    }

    #[test]
    fn initial_guess_is_round_tripped() {
        let mut prob = SmpProblem::new(two_spin_h(), collective_pi(), 1);
        let init = vec![SmpSegment::new(5e-6, PI / 5e-6, 0.2, TAU * 500.0).unwrap()];
        let back = prob.decode(&prob.encode(&init));
        assert!((back[0].duration - 5e-6).abs() < 1e-18);
        assert!((back[0].amplitude - PI / 5e-6).abs() < 1e-6);
        assert!((back[0].phase - 0.2).abs() < 1e-15);
        assert!((back[0].offset - TAU * 500.0).abs() < 1e-9);
        prob.initial = Some(init.clone());
        prob.restarts = 1;
        prob.max_evals = 200;
        let r = smp_search(&prob).unwrap();
        assert!((r.initial_fidelity - prob.fidelity(&init).unwrap()).abs() < 1e-12);
        assert!(r.fidelity >= r.initial_fidelity);
    }

    #[test]
    fn budget_exhaustion_is_reported() {
        let mut prob = SmpProblem::new(two_spin_h(), collective_pi(), 3);
        prob.restarts = 1;
        prob.max_evals = 5;
        let r = smp_search(&prob).unwrap();
        assert!(r.budget_exhausted);
        assert!(r.evaluations >= 5);
    }

    #[test]
    fn table_round_trip() {
        let segs = vec![
            SmpSegment::new(1.5e-6, TAU * 25e3, 0.25, -TAU * 300.0).unwrap(),
            SmpSegment::new(7e-6, 0.0, -1.0, 0.0).unwrap(),
        ];
        let mut buf = Vec::new();
        write_table(&segs, &mut buf).unwrap();
        let back = read_table(buf.as_slice()).unwrap();
        for (a, b) in segs.iter().zip(&back) {
            assert!((a.duration - b.duration).abs() <= 1e-15 * a.duration);
            assert!((a.amplitude - b.amplitude).abs() <= 1e-12 * a.amplitude.max(1.0));
            assert_eq!(a.phase, b.phase);
            assert!((a.offset - b.offset).abs() <= 1e-12 * a.offset.abs().max(1.0));
        }
        let commented = "# pulse\n1e-6, 1000, 0, 0\n\n2e-6 0 0 0 # idle\n";
        assert_eq!(read_table(commented.as_bytes()).unwrap().len(), 2);
        match read_table("1e-6 1000 0\n".as_bytes()) {
            Err(Error::Table { line: 1, .. }) => {}
            other => panic!("{other:?}"),
        }
        assert!(matches!(read_table("x 1 2 3\n".as_bytes()), Err(Error::Table { .. })));
        assert!(matches!(read_table("-1 1 2 3\n".as_bytes()), Err(Error::Table { .. })));
    }

    #[test]
    fn selective_gate_beats_hard_pulses() {
        let task = SelectiveGateTask::new(&fictitious_four_spin(), CouplingForm::Full, FRAC_PI_2).unwrap();
        let hard = task.fidelity_of(&task.cp.with_hard_pulses(2e-6).unwrap()).unwrap();
        let mut prob = task.problem().unwrap();
        prob.restarts = 1;
        prob.max_evals = 1500;
        let r = smp_search(&prob).unwrap();
        assert!(r.fidelity > hard, "{} vs {hard}", r.fidelity);
        let seq = PulseSequence::from_events(r.segments.iter().map(SmpSegment::to_event).collect()).unwrap();
        assert!((task.fidelity_of(&seq).unwrap() - r.fidelity).abs() < 1e-12);
    }
}
