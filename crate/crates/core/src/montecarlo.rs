//! Monte Carlo ensembles over OU noise trajectories, and the Lindblad model of
//! a π pulse under collective dephasing.

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::linops::{
    commutator_superoperator, evolve_unitary, liouvillian, superpropagator, superpropagator_unchecked, Operator,
    Superoperator, C64, I,
};
use crate::noise::{sample_at_times, OuParams, RngPolicy};
use crate::sequences::{rotation_unitary, segment_hamiltonian, sequence_propagator, PulseEvent, PulseSequence};
use crate::spinsys::{
    collective_x, internal_hamiltonian, leakage_fraction, noise_generator, CouplingForm, DfsEncoding, SpinSystem,
};

/// Trajectories per leaf of the reduction tree.
const LEAF: usize = 32;

#[derive(Clone, Debug)]
pub struct SimConfig {
    pub system: SpinSystem,
    pub coupling: CouplingForm,
    pub sequence: PulseSequence,
    pub noise: OuParams,
    /// Integration step, seconds.
    pub dt: f64,
    pub n_traj: usize,
    pub rng: RngPolicy,
    /// Ideal unitary for fidelities; defaults to the noiseless sequence propagator.
    pub target: Option<Operator>,
    /// Restricts per-trajectory fidelities to this subspace.
    pub projector: Option<Operator>,
}

impl SimConfig {
    /// Builds a config with the default step `min(tau/50, tau_c/20)`.
    pub fn new(
        system: SpinSystem,
        coupling: CouplingForm,
        sequence: PulseSequence,
        noise: OuParams,
        n_traj: usize,
        seed: u64,
    ) -> Self {
        let dt = default_dt(&sequence, &noise);
        Self {
            system,
            coupling,
            sequence,
            noise,
            dt,
            n_traj,
            rng: RngPolicy::new(seed),
            target: None,
            projector: None,
        }
    }

    pub fn internal_hamiltonian(&self) -> Operator {
        internal_hamiltonian(&self.system, self.coupling)
    }

    pub fn ideal_propagator(&self) -> Result<Operator> {
        match &self.target {
            Some(t) => Ok(t.clone()),
            None => sequence_propagator(&self.sequence, &self.internal_hamiltonian()),
        }
    }

    /// Step-size rule violations; empty when `dt` honours the defaults.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Some(tau) = pulse_spacing(&self.sequence) {
            if self.dt > tau / 50.0 * (1.0 + 1e-12) {
                out.push(format!("dt = {:e} s exceeds tau/50 = {:e} s", self.dt, tau / 50.0));
            }
        }
        if self.noise.tau_c.is_finite() && self.dt > self.noise.tau_c / 20.0 * (1.0 + 1e-12) {
            out.push(format!("dt = {:e} s exceeds tau_c/20 = {:e} s", self.dt, self.noise.tau_c / 20.0));
        }
        out
    }

    fn check(&self) -> Result<()> {
        if self.n_traj == 0 {
            return Err(invalid("n_traj", "must be at least 1"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(invalid("dt", format!("{} must be positive", self.dt)));
        }
        for op in self.target.iter().chain(&self.projector) {
            if op.dim() != self.system.dim() {
                return Err(Error::Dimension("target or projector and system differ".into()));
            }
        }
        Ok(())
    }
}

/// Cycle spacing if known, otherwise the shortest nonzero delay.
fn pulse_spacing(seq: &PulseSequence) -> Option<f64> {
    if let Some(c) = seq.cycle_info() {
        return Some(c.tau);
    }
    seq.events()
        .iter()
        .filter_map(|e| match e {
            PulseEvent::Delay { duration } if *duration > 0.0 => Some(*duration),
            _ => None,
        })
        .min_by(f64::total_cmp)
}

pub fn default_dt(seq: &PulseSequence, noise: &OuParams) -> f64 {
    let mut dt = f64::INFINITY;
    if let Some(tau) = pulse_spacing(seq) {
        dt = dt.min(tau / 50.0);
    }
    if noise.tau_c.is_finite() {
        dt = dt.min(noise.tau_c / 20.0);
    }
    if !dt.is_finite() {
        let total = seq.duration();
        dt = if total > 0.0 { total / 100.0 } else { 1.0 };
    }
    dt
}

enum Stage {
    Rotation(Operator),
    /// Deterministic part commutes with the diagonal noise generator.
    Commuting {
        u_full: Operator,
        u_step: Operator,
        z: Vec<f64>,
        steps: usize,
        dt: f64,
    },
    Stepped {
        h: Operator,
        z: Operator,
        steps: usize,
        dt: f64,
    },
}

struct Plan {
    stages: Vec<Stage>,
    midpoints: Vec<f64>,
    /// Time at the end of every noise step, in order.
    step_ends: Vec<f64>,
    dim: usize,
}

impl Plan {
    fn new(cfg: &SimConfig) -> Result<Self> {
        cfg.check()?;
        let h_int = cfg.internal_hamiltonian();
        let z = noise_generator(&cfg.system);
        let z_diag = z.real_diagonal();
        let n = cfg.system.n_spins();
        let times = cfg.sequence.event_times();
        let mut stages = Vec::new();
        let mut midpoints = Vec::new();
        let mut step_ends = Vec::new();
        for (k, e) in cfg.sequence.events().iter().enumerate() {
            let h = match e {
                PulseEvent::Rotation { targets, angle, phase } => {
                    stages.push(Stage::Rotation(rotation_unitary(n, targets, *angle, *phase)?));
                    continue;
                }
                PulseEvent::Delay { .. } => h_int.clone(),
                PulseEvent::Segment {
                    targets,
                    amplitude,
                    phase,
                    offset,
                    ..
                } => segment_hamiltonian(&h_int, targets, *amplitude, *phase, *offset)?,
            };
            let len = e.duration();
            if len == 0.0 {
                continue;
            }
            let steps = ((len / cfg.dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
            let dt = len / steps as f64;
            let start = times[k];
            for j in 0..steps {
                midpoints.push(start + (j as f64 + 0.5) * dt);
                step_ends.push(if j + 1 == steps { times[k + 1] } else { start + (j + 1) as f64 * dt });
            }
            let scale = h.max_abs().max(z.max_abs()).max(1.0);
            if h.commutator(&z).max_abs() <= 1e-12 * scale * scale {
                stages.push(Stage::Commuting {
                    u_full: evolve_unitary(&h, len)?,
                    u_step: evolve_unitary(&h, dt)?,
                    z: z_diag.clone(),
                    steps,
                    dt,
                });
            } else {
                stages.push(Stage::Stepped {
                    h,
                    z: z.clone(),
                    steps,
                    dt,
                });
            }
        }
        Ok(Self {
            stages,
            midpoints,
            step_ends,
            dim: h_int.dim(),
        })
    }

    fn omegas(&self, cfg: &SimConfig, index: u64) -> Vec<f64> {
        if cfg.noise.strength == 0.0 {
            return vec![0.0; self.midpoints.len()];
        }
        sample_at_times(&cfg.noise, &self.midpoints, &mut cfg.rng.stream(index))
    }

    /// Propagates one trajectory; `on_step` sees the running propagator after
    /// every noise step when `resolve_steps` is set.
    fn propagate(&self, omegas: &[f64], resolve_steps: bool, mut on_step: impl FnMut(&Operator)) -> Result<Operator> {
        let mut u = Operator::identity(self.dim);
        let mut cursor = 0;
        for stage in &self.stages {
            match stage {
                Stage::Rotation(r) => u = r * &u,
                Stage::Commuting {
                    u_full,
                    u_step,
                    z,
                    steps,
                    dt,
                } => {
                    let w = &omegas[cursor..cursor + steps];
                    cursor += steps;
                    if resolve_steps {
                        for &om in w {
                            u = &with_phases(u_step, z, om * dt) * &u;
                            on_step(&u);
                        }
                    } else {
                        let phi: f64 = w.iter().sum::<f64>() * dt;
                        u = &with_phases(u_full, z, phi) * &u;
                    }
                }
                Stage::Stepped { h, z, steps, dt } => {
                    for &om in &omegas[cursor..cursor + steps] {
                        let hk = h + &z.scale_real(om);
                        u = &evolve_unitary(&hk, *dt)? * &u;
                        if resolve_steps {
                            on_step(&u);
                        }
                    }
                    cursor += steps;
                }
            }
        }
        Ok(u)
    }
}

/// `u diag(exp(-i z_k phi))`.
fn with_phases(u: &Operator, z: &[f64], phi: f64) -> Operator {
    let mut m = u.matrix().clone();
    for (k, zk) in z.iter().enumerate() {
        let c = (-I * (zk * phi)).exp();
        m.column_mut(k).iter_mut().for_each(|x| *x *= c);
    }
    Operator::wrap(m)
}

/// Propagator of trajectory `stream_index`.
pub fn run_trajectory(cfg: &SimConfig, stream_index: u64) -> Result<Operator> {
    let plan = Plan::new(cfg)?;
    plan.propagate(&plan.omegas(cfg, stream_index), false, |_| {})
}

#[derive(Clone, Debug)]
pub struct EnsembleResult {
    pub s_avg: Superoperator,
    pub fidelity: f64,
    pub fidelity_stderr: f64,
    /// Per-trajectory fidelities `|Tr(U_id^dag U_i)|^2 / d^2` (or the subspace
    /// variant when a projector is set), in stream order.
    pub samples: Vec<f64>,
}

/// Sums in a fixed binary tree so the result does not depend on scheduling.
fn tree_sum<T>(mut items: Vec<T>, add: impl Fn(T, T) -> T) -> Option<T> {
    while items.len() > 1 {
        let mut next = Vec::with_capacity(items.len().div_ceil(2));
        let mut it = items.into_iter();
        while let Some(a) = it.next() {
            next.push(match it.next() {
                Some(b) => add(a, b),
                None => a,
            });
        }
        items = next;
    }
    items.pop()
}

fn mean_and_stderr(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = tree_sum(samples.to_vec(), |a, b| a + b).unwrap_or(0.0) / n;
    if samples.len() < 2 {
        return (mean, 0.0);
    }
    let ss = tree_sum(samples.iter().map(|x| (x - mean) * (x - mean)).collect(), |a, b| a + b).unwrap();
    (mean, (ss / (n - 1.0) / n).sqrt())
}

fn gate_overlap(ideal: &Operator, u: &Operator, projector: Option<&Operator>) -> f64 {
    match projector {
        Some(p) => {
            let r = p.trace().re.round();
            (&(p * &ideal.adjoint()) * &(u * p)).trace().norm_sqr() / (r * r)
        }
        None => {
            let d = u.dim() as f64;
            ideal.inner(u).norm_sqr() / (d * d)
        }
    }
}

/// Mean superpropagator over `cfg.n_traj` trajectories with streams `0..n_traj`.
pub fn average_superpropagator(cfg: &SimConfig) -> Result<EnsembleResult> {
    let plan = Plan::new(cfg)?;
    let ideal = cfg.ideal_propagator()?;
    let n = cfg.n_traj;
    let leaves: Vec<(Superoperator, Vec<f64>)> = (0..n.div_ceil(LEAF))
        .into_par_iter()
        .map(|leaf| -> Result<_> {
            let lo = leaf * LEAF;
            let hi = (lo + LEAF).min(n);
            let mut sum = Superoperator::zeros(plan.dim);
            let mut fids = Vec::with_capacity(hi - lo);
            for i in lo..hi {
                let u = plan.propagate(&plan.omegas(cfg, i as u64), false, |_| {})?;
                fids.push(gate_overlap(&ideal, &u, cfg.projector.as_ref()));
                sum += &superpropagator_unchecked(&u);
            }
            Ok((sum, fids))
        })
        .collect::<Result<_>>()?;
    let samples: Vec<f64> = leaves.iter().flat_map(|(_, f)| f.iter().copied()).collect();
    let total = tree_sum(leaves.into_iter().map(|(s, _)| s).collect(), |a, b| &a + &b).unwrap();
    let (fidelity, fidelity_stderr) = mean_and_stderr(&samples);
    Ok(EnsembleResult {
        s_avg: total.scale_real(1.0 / n as f64),
        fidelity,
        fidelity_stderr,
        samples,
    })
}

/// `Re Tr(S(U_ideal)^dag S) / d^2`.
pub fn entanglement_fidelity(s: &Superoperator, u_ideal: &Operator) -> Result<f64> {
    if s.hilbert_dim() != u_ideal.dim() {
        return Err(Error::Dimension("superoperator and ideal unitary differ".into()));
    }
    let d = u_ideal.dim() as f64;
    Ok(superpropagator(u_ideal)?.inner(s).re / (d * d))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObservablePoint {
    pub time: f64,
    /// `Tr rho^2 / Tr rho0^2`.
    pub purity: f64,
    /// `Tr(rho_want rho) / Tr rho0^2`, with `rho_want` the noiseless state.
    pub correlation: f64,
    pub leakage: Option<f64>,
}

/// Observables of the ensemble-averaged state after every noise step.
///
/// The averaged state is the mean of exactly propagated trajectory states;
/// products of per-step averaged maps would drop the noise correlations
/// between steps.
pub fn observable_series(
    cfg: &SimConfig,
    rho0: &Operator,
    encoding: Option<&DfsEncoding>,
) -> Result<Vec<ObservablePoint>> {
    if !rho0.is_hermitian() {
        return Err(Error::NotHermitian);
    }
    let plan = Plan::new(cfg)?;
    if rho0.dim() != plan.dim {
        return Err(Error::Dimension("initial state and system differ".into()));
    }
    let norm = rho0.inner(rho0).re;
    if norm <= 0.0 {
        return Err(Error::ZeroState);
    }
    let n_points = plan.step_ends.len();
    let n = cfg.n_traj;
    let leaves: Vec<Vec<Operator>> = (0..n.div_ceil(LEAF))
        .into_par_iter()
        .map(|leaf| -> Result<_> {
            let lo = leaf * LEAF;
            let hi = (lo + LEAF).min(n);
            let mut acc = vec![Operator::zeros(plan.dim); n_points];
            for i in lo..hi {
                let mut k = 0;
                plan.propagate(&plan.omegas(cfg, i as u64), true, |u| {
                    acc[k] += &u.conjugate(rho0);
                    k += 1;
                })?;
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let mean = tree_sum(leaves, |mut a, b| {
        a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
        a
    })
    .unwrap_or_default();

    let mut ideal_ends = Vec::with_capacity(n_points);
    plan.propagate(&vec![0.0; plan.midpoints.len()], true, |u| ideal_ends.push(u.conjugate(rho0)))?;

    let point = |time: f64, rho: &Operator, want: &Operator| -> Result<ObservablePoint> {
        Ok(ObservablePoint {
            time,
            purity: rho.inner(rho).re / norm,
            correlation: want.inner(rho).re / norm,
            leakage: encoding.map(|e| leakage_fraction(rho, e)).transpose()?,
        })
    };
    let mut out = Vec::with_capacity(n_points + 1);
    out.push(point(0.0, rho0, rho0)?);
    for ((t, rho), want) in plan.step_ends.iter().zip(&mean).zip(&ideal_ends) {
        out.push(point(*t, &rho.scale_real(1.0 / n as f64), want)?);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PiPulseResult {
    /// `Tr rho^2 / Tr rho0^2` at the end of the pulse.
    pub purity: f64,
    /// `Tr(rho_want rho) / Tr rho0^2` with `rho_want` the ideally rotated state.
    pub correlation: f64,
}

/// Collective π pulse of amplitude `omega_rf` on two spins with zero internal
/// Hamiltonian, under `d rho/dt = -i[omega_rf X, rho] - (1/T2)[Z,[Z,rho]]`,
/// `Z = (sz1 + sz2)/2`. A single-spin coherence decays as `e^{-t/T2}`.
pub fn lindblad_pi_pulse(t2: f64, omega_rf: f64, rho0: &Operator) -> Result<PiPulseResult> {
    if !(t2 > 0.0) {
        return Err(invalid("t2", "must be positive"));
    }
    if !(omega_rf > 0.0 && omega_rf.is_finite()) {
        return Err(invalid("omega_rf", "must be positive"));
    }
    if rho0.dim() != 4 {
        return Err(Error::Dimension("two-spin state expected".into()));
    }
    let norm = rho0.inner(rho0).re;
    if norm <= 0.0 {
        return Err(Error::ZeroState);
    }
    let x = collective_x(2, &[0, 1]);
    let z = noise_generator(&SpinSystem::free(2)?);
    let t_p = std::f64::consts::PI / omega_rf;
    let zz = commutator_superoperator(&z);
    let gen = &liouvillian(&x.scale_real(omega_rf))?.scale(C64::new(0.0, -t_p)) - &(&zz * &zz).scale_real(t_p / t2);
    let rho = gen.exp().apply(rho0);
    let want = evolve_unitary(&x.scale_real(omega_rf), t_p)?.conjugate(rho0);
    Ok(PiPulseResult {
        purity: rho.inner(&rho).re / norm,
        correlation: want.inner(&rho).re / norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linops::pauli;
    use crate::sequences::{build_cp, build_ts, Targets};
    use crate::spinsys::{logical_paulis, CouplingForm};
    use crate::testutil::random_density;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;
    use std::f64::consts::{FRAC_PI_2, PI};

    const DW: f64 = 2.0 * PI * 600.0;

    fn cp_config(n: u32, total: f64, tau_c: f64, n_traj: usize, seed: u64) -> SimConfig {
        SimConfig::new(
            SpinSystem::two_spin(DW, 50.0),
            CouplingForm::Weak,
            build_cp(n, total / (2.0 * n as f64), true).unwrap(),
            OuParams::new(1.0, tau_c).unwrap(),
            n_traj,
            seed,
        )
    }

    #[test]
    fn default_dt_rule() {
        let cfg = cp_config(4, 4.0, 0.01, 1, 0);
        assert_eq!(cfg.dt, (0.01f64 / 20.0).min(0.5 / 50.0));
        assert!(cfg.warnings().is_empty());
        let mut loose = cfg.clone();
        loose.dt = 0.1;
        assert_eq!(loose.warnings().len(), 2);
    }

    #[test]
    fn noiseless_free_evolution() {
        let sys = SpinSystem::two_spin(DW, 50.0);
        let seq = PulseSequence::from_events(vec![PulseEvent::delay(0.013), PulseEvent::delay(0.004)]).unwrap();
        let mut cfg = SimConfig::new(sys.clone(), CouplingForm::Full, seq, OuParams::new(0.0, 1.0).unwrap(), 1, 3);
        cfg.dt = 1e-3;
        let u = run_trajectory(&cfg, 0).unwrap();
        let h = internal_hamiltonian(&sys, CouplingForm::Full);
        assert!(u.max_abs_diff(&evolve_unitary(&h, 0.017).unwrap()) < 1e-9);
    }

    #[test]
    fn noiseless_cp_is_logical_rotation() {
        let j = 50.0;
        let n = 2;
        let phi = FRAC_PI_2;
        let tau = phi / (2.0 * n as f64 * PI * j);
        let mut cfg = cp_config(n, 2.0 * n as f64 * tau, 1.0, 1, 0);
        cfg.noise = OuParams::new(0.0, 1.0).unwrap();
        let u = run_trajectory(&cfg, 0).unwrap();
        let enc = DfsEncoding::single();
        let p = crate::spinsys::dfs_projector(&enc);
        let target = evolve_unitary(&logical_paulis(&enc, 0).unwrap().x, phi / 2.0).unwrap();
        assert!(p.conjugate(&u).equal_up_to_phase(&p.conjugate(&target)) < 1e-9);
    }

    #[test]
    fn frozen_noise_is_static_offset() {
        let sys = SpinSystem::two_spin(DW, 50.0);
        let seq = PulseSequence::from_events(vec![PulseEvent::delay(0.02)]).unwrap();
        let p = OuParams::new(40.0, f64::INFINITY).unwrap();
        let cfg = SimConfig::new(sys.clone(), CouplingForm::Full, seq, p, 1, 21);
        let u = run_trajectory(&cfg, 5).unwrap();
        let w0: f64 = 40.0 * cfg.rng.stream(5).sample::<f64, _>(StandardNormal);
        let h = &internal_hamiltonian(&sys, CouplingForm::Full) + &noise_generator(&sys).scale_real(w0);
        assert!(u.max_abs_diff(&evolve_unitary(&h, 0.02).unwrap()) < 1e-9);
    }

    #[test]
    fn fast_path_matches_stepped_path() {
        // non-uniform weights break [H, Z] = 0 under full coupling
        let sys = SpinSystem::two_spin(DW, 50.0);
        let seq = build_cp(1, 0.01, true).unwrap();
        let p = OuParams::new(30.0, 0.002).unwrap();
        let weak = SimConfig::new(sys.clone(), CouplingForm::Weak, seq.clone(), p, 1, 9);
        let plan = Plan::new(&weak).unwrap();
        assert!(plan.stages.iter().any(|s| matches!(s, Stage::Commuting { .. })));
        let om = plan.omegas(&weak, 0);
        let fast = plan.propagate(&om, false, |_| {}).unwrap();
        let slow = plan.propagate(&om, true, |_| {}).unwrap();
        assert!(fast.max_abs_diff(&slow) < 1e-10);

        let mut by_step = Operator::identity(4);
        let z = noise_generator(&sys);
        let h = internal_hamiltonian(&sys, CouplingForm::Weak);
        let mut cursor = 0;
        for st in &plan.stages {
            match st {
                Stage::Rotation(r) => by_step = r * &by_step,
                Stage::Commuting { steps, dt, .. } | Stage::Stepped { steps, dt, .. } => {
                    for &w in &om[cursor..cursor + steps] {
                        by_step = &evolve_unitary(&(&h + &z.scale_real(w)), *dt).unwrap() * &by_step;
                    }
                    cursor += steps;
                }
            }
        }
        assert!(fast.max_abs_diff(&by_step) < 1e-9);

        let uneven = sys.with_noise_weights(vec![1.0, 0.5]).unwrap();
        let cfg = SimConfig::new(uneven, CouplingForm::Full, seq, p, 1, 9);
        let plan = Plan::new(&cfg).unwrap();
        assert!(plan.stages.iter().any(|s| matches!(s, Stage::Stepped { .. })));
    }

    #[test]
    fn noiseless_ensemble_is_ideal() {
        let mut cfg = cp_config(2, 0.02, 1.0, 5, 0);
        cfg.noise = OuParams::new(0.0, 1.0).unwrap();
        let r = average_superpropagator(&cfg).unwrap();
        assert!((r.fidelity - 1.0).abs() < 1e-9);
        assert!(r.s_avg.is_unitary());
        assert_eq!(r.fidelity_stderr, 0.0);
    }

    #[test]
    fn ensemble_map_properties() {
        let mut cfg = cp_config(2, 0.4, 0.05, 40, 17);
        cfg.noise = OuParams::new(20.0, 0.05).unwrap();
        let r = average_superpropagator(&cfg).unwrap();
        for s in r.s_avg.singular_values() {
            assert!(s <= 1.0 + 1e-9);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let rho = random_density(&mut rng, 4);
            let out = r.s_avg.apply(&rho);
            assert!((out.trace() - rho.trace()).norm() < 1e-9);
        }
        let ideal = cfg.ideal_propagator().unwrap();
        let f = entanglement_fidelity(&r.s_avg, &ideal).unwrap();
        assert!((f - r.fidelity).abs() < 1e-10);
        assert!(r.fidelity < 1.0);
    }

    #[test]
    fn ensemble_is_bit_reproducible_across_thread_counts() {
        let cfg = cp_config(2, 0.4, 0.05, 70, 5);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| average_superpropagator(&cfg).unwrap())
        };
        let (a, b) = (run(1), run(4));
        assert_eq!(a.fidelity.to_bits(), b.fidelity.to_bits());
        assert_eq!(a.s_avg.matrix(), b.s_avg.matrix());
        assert_eq!(a.samples, b.samples);
    }

    #[test]
    fn trajectory_matches_ensemble_sample() {
        let cfg = cp_config(1, 0.2, 0.1, 3, 8);
        let r = average_superpropagator(&cfg).unwrap();
        let u = run_trajectory(&cfg, 2).unwrap();
        let ideal = cfg.ideal_propagator().unwrap();
        assert_eq!(gate_overlap(&ideal, &u, None), r.samples[2]);
    }

    #[test]
    fn entanglement_fidelity_examples() {
        let u = pauli::x();
        let s = superpropagator(&u).unwrap();
        assert!((entanglement_fidelity(&s, &u).unwrap() - 1.0).abs() < 1e-12);
        let off = &u * &evolve_unitary(&pauli::z(), FRAC_PI_2).unwrap();
        let f = entanglement_fidelity(&superpropagator(&off).unwrap(), &u).unwrap();
        assert!(f < 1.0 - 1e-6);

        // full dephasing of spin 1 on two spins: rho -> (rho + Z1 rho Z1)/2
        let z1 = pauli::z_on(0, 2);
        let map = (&superpropagator(&Operator::identity(4)).unwrap() + &superpropagator(&z1).unwrap()).scale_real(0.5);
        // |Tr 1|^2 / 16 and |Tr Z1|^2 / 16 averaged: (1 + 0)/2
        assert!((entanglement_fidelity(&map, &Operator::identity(4)).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn seed_groups_agree() {
        let cfg = cp_config(2, 4.0, 0.5, 1, 0);
        let groups: Vec<(f64, f64)> = [101u64, 202, 303]
            .iter()
            .map(|&seed| {
                let mut c = cfg.clone();
                c.n_traj = 300;
                c.rng = RngPolicy::new(seed);
                let r = average_superpropagator(&c).unwrap();
                (r.fidelity, r.fidelity_stderr)
            })
            .collect();
        for a in &groups {
            for b in &groups {
                let pooled = (a.1 * a.1 + b.1 * b.1).sqrt();
                assert!((a.0 - b.0).abs() <= 3.0 * pooled.max(1e-12), "{a:?} {b:?}");
            }
        }
    }

    #[test]
    fn step_halving_is_within_stderr() {
        let cfg = cp_config(4, 4.0, 0.1, 400, 77);
        let coarse = average_superpropagator(&cfg).unwrap();
        let mut fine = cfg.clone();
        fine.dt /= 2.0;
        let fine = average_superpropagator(&fine).unwrap();
        assert!((coarse.fidelity - fine.fidelity).abs() < coarse.fidelity_stderr);
    }

    #[test]
    fn leakage_under_collective_drive() {
        let j = 50.0;
        let omega_rf = 2.0 * PI * 500.0 * j;
        let t_p = PI / omega_rf;
        let enc = DfsEncoding::single();
        let rho0 = logical_paulis(&enc, 0).unwrap().z;
        let run = |dw: f64| {
            let seq = PulseSequence::from_events(vec![PulseEvent::Segment {
                duration: t_p,
                targets: Targets::All,
                amplitude: omega_rf,
                phase: 0.0,
                offset: 0.0,
            }])
            .unwrap();
            let mut cfg = SimConfig::new(
                SpinSystem::two_spin(dw, j),
                CouplingForm::Full,
                seq,
                OuParams::new(0.0, 1.0).unwrap(),
                1,
                0,
            );
            cfg.dt = t_p / 50.0;
            observable_series(&cfg, &rho0, Some(&enc)).unwrap()
        };
        let clean = run(0.0);
        assert!((clean.last().unwrap().leakage.unwrap() - 1.0).abs() < 1e-9);
        assert!(clean[25].leakage.unwrap() < 0.9);
        let off = run(0.1 * omega_rf);
        assert!(off.last().unwrap().leakage.unwrap() < 1.0 - 1e-6);
        assert_eq!(clean.len(), 51);
        assert!((clean.last().unwrap().time - t_p).abs() < 1e-18);
    }

    #[test]
    fn zero_duration_sequence_gives_constant_series() {
        let seq = PulseSequence::new();
        let cfg = SimConfig::new(
            SpinSystem::two_spin(DW, 50.0),
            CouplingForm::Full,
            seq,
            OuParams::new(1.0, 1.0).unwrap(),
            4,
            0,
        );
        let rho0 = logical_paulis(&DfsEncoding::single(), 0).unwrap().x;
        let s = observable_series(&cfg, &rho0, None).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].purity, 1.0);
        assert_eq!(s[0].correlation, 1.0);
    }

    #[test]
    fn series_end_matches_ensemble_map() {
        let mut cfg = cp_config(1, 0.2, 0.05, 20, 3);
        cfg.noise = OuParams::new(10.0, 0.05).unwrap();
        let rho0 = logical_paulis(&DfsEncoding::single(), 0).unwrap().z;
        let series = observable_series(&cfg, &rho0, None).unwrap();
        let r = average_superpropagator(&cfg).unwrap();
        let rho = r.s_avg.apply(&rho0);
        let norm = rho0.inner(&rho0).re;
        assert!((series.last().unwrap().purity - rho.inner(&rho).re / norm).abs() < 1e-10);
    }

    #[test]
    fn lindblad_limits_and_ordering() {
        let omega_rf = 2.0 * PI * 1e4;
        let enc = DfsEncoding::single();
        let l = logical_paulis(&enc, 0).unwrap();
        let weak = lindblad_pi_pulse(1e9, omega_rf, &l.z).unwrap();
        assert!((weak.purity - 1.0).abs() < 1e-6);
        assert!((weak.correlation - 1.0).abs() < 1e-6);
        let at = |state: &Operator, r: f64| lindblad_pi_pulse(1.0 / (r * omega_rf), omega_rf, state).unwrap();
        for r in [1e-2, 1e-1, 1.0] {
            assert!(at(&l.identity, r).purity > at(&l.z, r).purity);
            assert!(at(&l.x, r).correlation > at(&l.y, r).correlation);
        }
        assert!(lindblad_pi_pulse(0.0, 1.0, &l.z).is_err());
    }

    #[test]
    fn lindblad_single_spin_coherence_rate() {
        // no drive limit: |00><10| decays as e^{-t/T2}
        let t2 = 0.37;
        let z = noise_generator(&SpinSystem::free(2).unwrap());
        let zz = commutator_superoperator(&z);
        let t = 0.2;
        let gen = (&zz * &zz).scale_real(-t / t2);
        let mut rho = Operator::zeros(4).into_matrix();
        rho[(0, 2)] = C64::new(1.0, 0.0);
        let out = gen.exp().apply(&Operator::from_matrix(rho).unwrap());
        assert!((out.get(0, 2).re - (-t / t2).exp()).abs() < 1e-12);
    }

    #[test]
    fn ts_trajectory_runs() {
        let cfg = SimConfig::new(
            SpinSystem::two_spin(DW, 0.0),
            CouplingForm::Weak,
            build_ts(2, 0.05).unwrap(),
            OuParams::new(1.0, 0.1).unwrap(),
            8,
            1,
        );
        let r = average_superpropagator(&cfg).unwrap();
        assert!(r.fidelity > 0.99 && r.fidelity <= 1.0 + 1e-12);
    }
}
