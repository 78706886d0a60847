//! Acceptance suite: one PASS/FAIL line per criterion, diagnostics indented
//! below it. Exits nonzero if any criterion fails.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::time::Instant;

use dfsim::cumulant::{
    cp_fidelity, cp_zeta, numeric_second_cumulant, project_onto, ts_fidelity, ts_zetas, ts_zetas_printed,
};
use dfsim::linops::{commutator_superoperator, evolve_unitary, pauli, Operator, Superoperator};
use dfsim::montecarlo::{average_superpropagator, lindblad_pi_pulse, observable_series, SimConfig};
use dfsim::noise::{sample_trajectory, OuParams, RngPolicy};
use dfsim::sequences::{build_cp, build_ts, compile, sequence_propagator, PulseEvent, PulseSequence, Targets};
use dfsim::smp::{fictitious_four_spin, smp_search, SelectiveGateTask, SmpProblem};
use dfsim::spinsys::{
    collective_x, dfs_projector, internal_hamiltonian, logical_paulis, noise_generator, CouplingForm, DfsEncoding,
    SpinSystem,
};

// Tolerances, pinned.
const C1_REL_TOL: f64 = 1e-8;
const C2_TOL: f64 = 1e-12;
const C3_SIGMAS: f64 = 3.0;
const C3_N_TRAJ: usize = 2000;
const C4_TOL: f64 = 1e-9;
const C5_TOL: f64 = 1e-6;
const C7_TAIL_TOL: f64 = 1e-6;
const C8_SIGMAS: f64 = 3.0;
const C8_SAMPLES: u64 = 100_000;
const C10_TWO_SPIN_TARGET: f64 = 0.98;
const C10_HARD_PULSE: f64 = 2e-6;

const DW: f64 = TAU * 600.0;
const J: f64 = 50.0;

struct Outcome {
    pass: bool,
    notes: Vec<String>,
}

impl Outcome {
    fn new() -> Self {
        Self {
            pass: true,
            notes: Vec::new(),
        }
    }

    fn check(&mut self, ok: bool, note: String) {
        self.pass &= ok;
        self.notes.push(format!("{} {note}", if ok { "ok  " } else { "FAIL" }));
    }

    fn note(&mut self, note: String) {
        self.notes.push(format!("     {note}"));
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn two_spin() -> SpinSystem {
    SpinSystem::two_spin(DW, J)
}

/// Closed-form attenuation coefficients against the numeric second cumulant.
fn criterion_1() -> Outcome {
    let mut o = Outcome::new();
    let sys = two_spin();
    let h = internal_hamiltonian(&sys, CouplingForm::Weak);
    let z = noise_generator(&sys);
    let zx = commutator_superoperator(&collective_x(2, &[0, 1]));
    let cp_basis = [&zx * &zx];
    let z1 = commutator_superoperator(&(&pauli::z_on(0, 2) + &pauli::z_on(1, 2)).scale_real(0.5));
    let z2 = commutator_superoperator(&(&pauli::z_on(1, 2) - &pauli::z_on(0, 2)).scale_real(0.5));
    let ts_basis: [Superoperator; 2] = [&(&z1 * &z1) + &(&z2 * &z2), &z1 * &z2];
    let p = OuParams::new(1.0, 1.0).unwrap();
    let (mut cp_worst, mut ts_worst, mut ts_fixed_worst) = (0.0f64, 0.0f64, 0.0f64);
    let mut ts_first_bad = None;
    for n in [1u32, 2, 4, 8] {
        for x in [0.01, 0.1, 1.0, 10.0] {
            let tau = x * p.tau_c;
            let k2 = numeric_second_cumulant(&compile(&build_cp(n, tau, true).unwrap(), &h, &z).unwrap().intervals, &p)
                .unwrap()
                .k2;
            let num = project_onto(&k2, &cp_basis).unwrap()[0];
            cp_worst = cp_worst.max(rel(cp_zeta(1.0, p.tau_c, n, tau).unwrap(), num));

            let k2 = numeric_second_cumulant(&compile(&build_ts(n, tau).unwrap(), &h, &z).unwrap().intervals, &p)
                .unwrap()
                .k2;
            let c = project_onto(&k2, &ts_basis).unwrap();
            let (a, b) = ts_zetas_printed(1.0, p.tau_c, n, tau).unwrap();
            let e = rel(a, c[0]).max(rel(b.abs(), c[1].abs()));
            if e > C1_REL_TOL && ts_first_bad.is_none() {
                ts_first_bad = Some(format!("n={n} tau/tau_c={x}: closed ({a:.6e}, {b:.6e}) vs numeric ({:.6e}, {:.6e})", c[0], c[1]));
            }
            ts_worst = ts_worst.max(e);
            let (a, b) = ts_zetas(1.0, p.tau_c, n, tau).unwrap();
            ts_fixed_worst = ts_fixed_worst.max(rel(a, c[0]).max(rel(b, c[1])));
        }
    }
    o.check(cp_worst <= C1_REL_TOL, format!("CP zeta: max rel err {cp_worst:.2e} (tol {C1_REL_TOL:e})"));
    o.check(
        ts_worst <= C1_REL_TOL,
        format!("TS zeta1/zeta2, quoted closed forms: max rel err {ts_worst:.2e} (tol {C1_REL_TOL:e})"),
    );
    if let Some(s) = ts_first_bad {
        o.note(format!("first mismatch: {s}"));
    }
    o.note(format!("TS corrected closed forms (ts_zetas): max rel err {ts_fixed_worst:.2e}"));
    o
}

/// Fidelity from the eigenvalue-difference multiplicities of collective X.
fn criterion_2() -> Outcome {
    let mut o = Outcome::new();
    let x = collective_x(2, &[0, 1]);
    let ev = x.hermitian_eigen().unwrap().values;
    let mut worst = 0.0f64;
    for zeta in [1e-4, 0.01, 0.3, 1.0, 7.0] {
        for n in [1u32, 4, 16] {
            for tau in [0.01, 0.125, 1.0] {
                let t2 = (2.0 * n as f64 * tau).powi(2);
                // exp(-t^2 zeta L^2 / 2) traced over Liouville space, divided by d^2
                let sum: f64 = ev
                    .iter()
                    .flat_map(|a| ev.iter().map(move |b| (-(t2 * zeta / 2.0) * (a - b).powi(2)).exp()))
                    .sum();
                let spectral = sum / 16.0;
                let printed = (6.0 + 8.0 * (-2.0 * zeta * (n as f64 * tau).powi(2)).exp()
                    + 2.0 * (-8.0 * zeta * (n as f64 * tau).powi(2)).exp())
                    / 16.0;
                worst = worst.max((spectral - cp_fidelity(zeta, n, tau)).abs());
                worst = worst.max((printed - cp_fidelity(zeta, n, tau)).abs());
            }
        }
    }
    let mult = |d: f64| {
        ev.iter()
            .flat_map(|a| ev.iter().map(move |b| a - b))
            .filter(|x| (x - d).abs() < 1e-9)
            .count()
    };
    o.check(
        (mult(0.0), mult(1.0) + mult(-1.0), mult(2.0) + mult(-2.0)) == (6, 8, 2),
        format!(
            "multiplicities of eigenvalue differences 0, ±1, ±2: {}, {}, {}",
            mult(0.0),
            mult(1.0) + mult(-1.0),
            mult(2.0) + mult(-2.0)
        ),
    );
    o.check(worst <= C2_TOL, format!("max |F_spectral - cp_fidelity| = {worst:.2e} (tol {C2_TOL:e})"));
    o
}

/// Monte Carlo ensembles against the closed-form fidelities.
fn criterion_3() -> Outcome {
    let mut o = Outcome::new();
    let t_tot = 4.0;
    let mut seed = 31_000u64;
    for (label, per) in [("CP", 2.0), ("TS", 4.0)] {
        for n in [4u32, 16] {
            for tau_c in [0.01, 0.1, 1.0, 10.0] {
                let tau = t_tot / (per * n as f64);
                let (seq, analytic) = if label == "CP" {
                    (build_cp(n, tau, false).unwrap(), cp_fidelity(cp_zeta(1.0, tau_c, n, tau).unwrap(), n, tau))
                } else {
                    let (a, b) = ts_zetas(1.0, tau_c, n, tau).unwrap();
                    (build_ts(n, tau).unwrap(), ts_fidelity(a, b, n, tau))
                };
                let cfg = SimConfig::new(
                    two_spin(),
                    CouplingForm::Weak,
                    seq,
                    OuParams::new(1.0, tau_c).unwrap(),
                    C3_N_TRAJ,
                    seed,
                );
                seed += 1;
                let dt_ok = cfg.dt <= (tau / 50.0).min(tau_c / 20.0) * (1.0 + 1e-12);
                let r = average_superpropagator(&cfg).unwrap();
                let diff = (r.fidelity - analytic).abs();
                o.check(
                    dt_ok && diff <= C3_SIGMAS * r.fidelity_stderr,
                    format!(
                        "{label} n={n:2} tau_c={tau_c:5}: F_mc={:.5} F_closed={analytic:.5} |diff|={diff:.1e} = {:.2} se, dt={:.1e}",
                        r.fidelity,
                        diff / r.fidelity_stderr,
                        cfg.dt
                    ),
                );
            }
        }
    }
    o
}

fn restrict(p: &Operator, u: &Operator) -> Operator {
    &(p * u) * p
}

/// Ideal-pulse CP restricted to the code space is the logical x rotation.
fn criterion_4() -> Outcome {
    let mut o = Outcome::new();
    let enc = DfsEncoding::single();
    let p = dfs_projector(&enc);
    let lx = logical_paulis(&enc, 0).unwrap().x;
    let mut worst = 0.0f64;
    let mut full_worst = 0.0f64;
    for dw in [0.0, DW] {
        for phi in [FRAC_PI_2, PI] {
            for n in [1u32, 2, 4] {
                let tau = phi / (2.0 * n as f64 * PI * J);
                let seq = build_cp(n, tau, true).unwrap();
                let want = restrict(&p, &evolve_unitary(&lx, phi / 2.0).unwrap());
                let sys = SpinSystem::two_spin(dw, J);
                let u = sequence_propagator(&seq, &internal_hamiltonian(&sys, CouplingForm::Weak)).unwrap();
                worst = worst.max(restrict(&p, &u).equal_up_to_phase(&want));
                let u = sequence_propagator(&seq, &internal_hamiltonian(&sys, CouplingForm::Full)).unwrap();
                full_worst = full_worst.max(restrict(&p, &u).equal_up_to_phase(&want));
            }
        }
    }
    o.check(worst <= C4_TOL, format!("secular coupling: max deviation {worst:.2e} (tol {C4_TOL:e})"));
    o.note(format!("isotropic coupling (not required): max deviation {full_worst:.2e}"));
    o
}

/// Code-space population at the end of a collective π pulse.
fn leakage_end(ratio: f64) -> f64 {
    let omega_rf = TAU * 500.0 * J;
    let t_p = PI / omega_rf;
    let seq = PulseSequence::from_events(vec![PulseEvent::Segment {
        duration: t_p,
        targets: Targets::All,
        amplitude: omega_rf,
        phase: 0.0,
        offset: 0.0,
    }])
    .unwrap();
    let mut cfg = SimConfig::new(
        SpinSystem::two_spin(ratio * omega_rf, J),
        CouplingForm::Full,
        seq,
        OuParams::new(0.0, 1.0).unwrap(),
        1,
        0,
    );
    cfg.dt = t_p / 200.0;
    let enc = DfsEncoding::single();
    let rho0 = logical_paulis(&enc, 0).unwrap().z;
    observable_series(&cfg, &rho0, Some(&enc)).unwrap().last().unwrap().leakage.unwrap()
}

fn criterion_5() -> Outcome {
    let mut o = Outcome::new();
    let p0 = leakage_end(0.0);
    o.check((p0 - 1.0).abs() <= C5_TOL, format!("ratio 0: p(t_p) = {p0:.12} (tol {C5_TOL:e})"));
    let ps: Vec<f64> = [0.02, 0.05, 0.1].iter().map(|&r| leakage_end(r)).collect();
    o.check(
        ps.iter().all(|&p| p < 1.0) && ps.windows(2).all(|w| w[1] < w[0]),
        format!("ratios 0.02, 0.05, 0.1: p(t_p) = {:.6}, {:.6}, {:.6}", ps[0], ps[1], ps[2]),
    );
    o
}

fn log_ladder(from: f64, to: f64, points: usize) -> Vec<f64> {
    let (a, b) = (from.log10(), to.log10());
    (0..points).map(|k| 10f64.powf(a + (b - a) * k as f64 / (points - 1) as f64)).collect()
}

fn cp_at(tau_c: f64, n: u32, t: f64) -> f64 {
    let tau = t / (2.0 * n as f64);
    cp_fidelity(cp_zeta(1.0, tau_c, n, tau).unwrap(), n, tau)
}

fn ts_at(tau_c: f64, n: u32, t: f64, printed: bool) -> f64 {
    let tau = t / (4.0 * n as f64);
    let (a, b) = if printed {
        ts_zetas_printed(1.0, tau_c, n, tau).unwrap()
    } else {
        ts_zetas(1.0, tau_c, n, tau).unwrap()
    };
    ts_fidelity(a, b, n, tau)
}

/// Sequence orderings over the correlation-time grid at fixed total time.
fn criterion_6() -> Outcome {
    let mut o = Outcome::new();
    let t = 4.0;
    let grid = log_ladder(1e-3, 1e2, 21);
    for n in [4u32, 16] {
        let bad: Vec<String> = grid
            .iter()
            .filter(|&&tc| ts_at(tc, n, t, false) < cp_at(tc, n, t))
            .map(|&tc| format!("{tc:.1e} (TS {:.6} < CP {:.6})", ts_at(tc, n, t, false), cp_at(tc, n, t)))
            .collect();
        o.check(
            bad.is_empty(),
            format!("TS >= CP at equal per-spin pulse count, n={n}: {} of {} points violate", bad.len(), grid.len()),
        );
        for b in bad.iter().take(4) {
            o.note(format!("violated at tau_c = {b}"));
        }
        let printed_ok = grid.iter().all(|&tc| ts_at(tc, n, t, true) >= cp_at(tc, n, t));
        o.note(format!("with the quoted (incorrect) TS closed forms the ordering holds everywhere: {printed_ok}"));
    }
    let bad = grid.iter().filter(|&&tc| cp_at(tc, 16, t) < cp_at(tc, 4, t)).count();
    o.check(bad == 0, format!("CP 16 cycles >= 4 cycles: {bad} of {} points violate", grid.len()));
    o
}

fn monotone_up(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] >= w[0])
}

fn criterion_7() -> Outcome {
    let mut o = Outcome::new();
    let t = 4.0;
    let n = 4;
    // motional narrowing: tau_c -> 0 at fixed strength
    let ladder: Vec<f64> = (3..=9).map(|k| cp_at(10f64.powi(-k), n, t)).collect();
    let tail = 1.0 - ladder.last().unwrap();
    o.check(
        monotone_up(&ladder) && tail <= C7_TAIL_TOL,
        format!("tau_c = 1e-3..1e-9: monotone {}, 1 - F(1e-9) = {tail:.2e}", monotone_up(&ladder)),
    );
    // fast pulsing: tau/tau_c -> 0 at fixed tau_c by adding cycles at fixed total time
    let ladder: Vec<f64> = (1..=7).map(|k| cp_at(1.0, 10u32.pow(k), t)).collect();
    let tail = 1.0 - ladder.last().unwrap();
    o.check(
        monotone_up(&ladder) && tail <= C7_TAIL_TOL,
        format!("tau/tau_c = 2e-1..2e-7 (tau_c = 1): monotone {}, 1 - F = {tail:.2e}", monotone_up(&ladder)),
    );
    o
}

fn criterion_8() -> Outcome {
    let mut o = Outcome::new();
    let p = OuParams::new(1.3, 0.4).unwrap();
    let dt = p.tau_c / 10.0;
    let policy = RngPolicy::new(8080);
    let len = 31;
    let paths: Vec<Vec<f64>> = (0..C8_SAMPLES).map(|i| sample_trajectory(&p, dt, len, &mut policy.stream(i))).collect();
    let n = C8_SAMPLES as f64;
    let se_var = p.variance() * (2.0 / n).sqrt();
    let mut worst_var = 0.0f64;
    for k in [0, 10, 30] {
        let m2 = paths.iter().map(|w| w[k] * w[k]).sum::<f64>() / n;
        worst_var = worst_var.max((m2 - p.variance()).abs() / se_var);
    }
    o.check(worst_var <= C8_SIGMAS, format!("stationary variance at steps 0, 10, 30: worst {worst_var:.2} se"));
    let mut worst_cov = 0.0f64;
    for k in [1usize, 3, 10, 30] {
        let want = p.autocorrelation(k as f64 * dt);
        let got = paths.iter().map(|w| w[0] * w[k]).sum::<f64>() / n;
        let se = ((p.variance().powi(2) + want * want) / n).sqrt();
        worst_cov = worst_cov.max((got - want).abs() / se);
    }
    o.check(worst_cov <= C8_SIGMAS, format!("lag-k covariance, k = 1, 3, 10, 30: worst {worst_cov:.2} se"));

    let cfg = SimConfig::new(
        two_spin(),
        CouplingForm::Weak,
        build_cp(4, 0.1, false).unwrap(),
        OuParams::new(1.0, 0.05).unwrap(),
        300,
        99,
    );
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| average_superpropagator(&cfg).unwrap())
    };
    let (a, b, c) = (run(1), run(3), run(8));
    let same = |x: &dfsim::montecarlo::EnsembleResult, y: &dfsim::montecarlo::EnsembleResult| {
        x.s_avg.matrix() == y.s_avg.matrix() && x.samples == y.samples && x.fidelity.to_bits() == y.fidelity.to_bits()
    };
    o.check(same(&a, &b) && same(&a, &c), "ensemble bit-identical on 1, 3 and 8 threads".into());
    o
}

/// Lindblad π pulse: curve ordering and the shape of the y/z correlations.
fn criterion_9() -> Outcome {
    let mut o = Outcome::new();
    let omega_rf = TAU * 25e3;
    let lp = logical_paulis(&DfsEncoding::single(), 0).unwrap();
    let grid = log_ladder(1e-3, 10.0, 41);
    let curve = |state: &Operator| -> Vec<(f64, f64)> {
        grid.iter()
            .map(|&x| {
                let r = lindblad_pi_pulse(1.0 / (x * omega_rf), omega_rf, state).unwrap();
                (r.purity, r.correlation)
            })
            .collect()
    };
    let (ci, cx, cy, cz) = (curve(&lp.identity), curve(&lp.x), curve(&lp.y), curve(&lp.z));
    let mut dominated = true;
    for k in 0..grid.len() {
        let top_p = ci[k].0.min(cx[k].0);
        let top_c = ci[k].1.min(cx[k].1);
        let low_p = cy[k].0.max(cz[k].0);
        let low_c = cy[k].1.max(cz[k].1);
        dominated &= top_p >= low_p - 1e-12 && top_c >= low_c - 1e-12;
    }
    o.check(dominated, "{1, x} purity and correlation >= {y, z} at every grid point".into());
    for (label, c) in [("y", &cy), ("z", &cz)] {
        let corr: Vec<f64> = c.iter().map(|v| v.1).collect();
        let (kmin, min) = corr.iter().enumerate().fold((0, f64::INFINITY), |a, (k, &v)| if v < a.1 { (k, v) } else { a });
        let interior = kmin > 0 && kmin + 1 < corr.len();
        let upturn = interior && corr[kmin + 1..].windows(2).any(|w| w[1] > w[0]) && corr[corr.len() - 1] > min;
        o.check(
            interior && upturn,
            format!(
                "{label} correlation has an interior minimum then rises: min {min:.4} at 1/(w T2) = {:.2e}, end {:.4}",
                grid[kmin],
                corr[corr.len() - 1]
            ),
        );
        let pur: Vec<f64> = c.iter().map(|v| v.0).collect();
        let (pk, pmin) = pur.iter().enumerate().fold((0, f64::INFINITY), |a, (k, &v)| if v < a.1 { (k, v) } else { a });
        o.note(format!(
            "{label} purity: min {pmin:.4} at 1/(w T2) = {:.2e}, end {:.4}",
            grid[pk],
            pur[pur.len() - 1]
        ));
    }
    o
}

fn criterion_10() -> Outcome {
    let mut o = Outcome::new();
    let h = internal_hamiltonian(&two_spin(), CouplingForm::Full);
    let target = evolve_unitary(&collective_x(2, &[0, 1]), PI).unwrap();
    let mut prob = SmpProblem::new(h, target, 4);
    prob.restarts = 3;
    prob.max_evals = 3000;
    prob.seed = 7;
    let r = smp_search(&prob).unwrap();
    o.check(
        r.history.windows(2).all(|w| w[1] >= w[0]),
        format!("objective history nondecreasing over {} iterations", r.history.len()),
    );
    o.check(
        r.fidelity >= C10_TWO_SPIN_TARGET,
        format!("two-spin collective pi, 4 segments: F = {:.6} (target {C10_TWO_SPIN_TARGET})", r.fidelity),
    );

    let task = SelectiveGateTask::new(&fictitious_four_spin(), CouplingForm::Full, FRAC_PI_2).unwrap();
    let ideal = task.fidelity_of(&task.cp).unwrap();
    let hard = task.fidelity_of(&task.cp.with_hard_pulses(C10_HARD_PULSE).unwrap()).unwrap();
    let mut prob = task.problem().unwrap();
    prob.restarts = 1;
    prob.max_evals = 3000;
    let r = smp_search(&prob).unwrap();
    o.check(
        r.fidelity > hard,
        format!("four-spin selective gate: SMP F = {:.4} vs 2 us hard-pulse CP F = {hard:.4}", r.fidelity),
    );
    o.note(format!("ideal-pulse CP F = {ideal:.4}, SMP start F = {:.4}", r.initial_fidelity));
    o
}

fn main() {
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 10] = [
        ("closed-form attenuation vs numeric second cumulant", criterion_1),
        ("CP fidelity from eigenvalue-difference multiplicities", criterion_2),
        ("Monte Carlo vs closed-form fidelity", criterion_3),
        ("noiseless CP is the logical x rotation", criterion_4),
        ("leakage at the end of a collective pi pulse", criterion_5),
        ("sequence ordering claims", criterion_6),
        ("short-correlation and fast-pulsing limits", criterion_7),
        ("OU statistics and thread-count reproducibility", criterion_8),
        ("pi pulse under dephasing: curve ordering and Zeno upturn", criterion_9),
        ("SMP search properties", criterion_10),
    ];
    let mut failed = Vec::new();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let out = f();
        let status = if out.pass { "PASS" } else { "FAIL" };
        println!("[{status}] criterion {:2}: {name} ({:.1} s)", i + 1, start.elapsed().as_secs_f64());
        for n in &out.notes {
            println!("         {n}");
        }
        if !out.pass {
            failed.push(i + 1);
        }
    }
    println!();
    println!("{} of {} criteria passed", criteria.len() - failed.len(), criteria.len());
    if !failed.is_empty() {
        println!("failed: {failed:?}");
        std::process::exit(1);
    }
}
