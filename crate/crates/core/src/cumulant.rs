//! Second-order cumulant expansion of the noise-averaged propagator, in
//! closed form for CP and TS and numerically for arbitrary interval lists.
//!
//! The averaged toggling-frame map over a sequence of length `t` is
//! `exp(-i t K1 - t^2 K2 / 2)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::linops::{commutator_superoperator, Operator, Superoperator, C64};
use crate::noise::OuParams;
use crate::sequences::{zeroth_avg_hamiltonian, TogglingInterval};

fn check_args(strength: f64, tau_c: f64, n: u32, tau: f64) -> Result<()> {
    if !(strength >= 0.0 && strength.is_finite()) {
        return Err(invalid("strength", format!("{strength} is not finite and non-negative")));
    }
    if !(tau_c > 0.0 && tau_c.is_finite()) {
        return Err(invalid("tau_c", format!("{tau_c} must be positive and finite")));
    }
    if n == 0 {
        return Err(invalid("cycles", "must be at least 1"));
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(invalid("tau", format!("{tau} must be positive and finite")));
    }
    Ok(())
}

/// `x + e^{-x} - 1`, accurate for small `x`.
fn a_reduced(x: f64) -> f64 {
    if x < 1e-3 {
        let x2 = x * x;
        x2 * (0.5 - x / 6.0 + x2 / 24.0 - x2 * x / 120.0)
    } else {
        x + (-x).exp_m1()
    }
}

/// `sum_{k=1}^{N-1} (N - k) r^{k-1}` in closed form.
fn weighted_geometric(r: f64, n: u32) -> f64 {
    let nf = n as f64;
    (nf * (1.0 - r) - (1.0 - r.powi(n as i32))) / ((1.0 - r) * (1.0 - r))
}

/// Attenuation coefficient `zeta` of a CP train with `2n` pulses spaced `tau`.
pub fn cp_zeta(strength: f64, tau_c: f64, n: u32, tau: f64) -> Result<f64> {
    check_args(strength, tau_c, n, tau)?;
    let x = tau / tau_c;
    let q = (-x).exp();
    let two_n = 2.0 * n as f64;
    let t = two_n * tau;
    let s = -(-x).exp_m1() / (1.0 + q);
    let bracket = two_n * a_reduced(x) + s * s * (1.0 - two_n * (1.0 + q) - (-two_n * x).exp());
    let st = strength * tau_c;
    Ok((2.0 * st * st / (t * t) * bracket).max(0.0))
}

/// `(3 + 4 e^{-2 zeta n^2 tau^2} + e^{-8 zeta n^2 tau^2}) / 8`.
pub fn cp_fidelity(zeta: f64, n: u32, tau: f64) -> f64 {
    let u = zeta * (n as f64 * tau).powi(2);
    (3.0 + 4.0 * (-2.0 * u).exp() + (-8.0 * u).exp()) / 8.0
}

/// Attenuation coefficients `(zeta1, zeta2)` of the time-suspension train,
/// defined through `K2 = zeta1 (Z1^2 + Z2^2) + zeta2 Z1 Z2`.
pub fn ts_zetas(strength: f64, tau_c: f64, n: u32, tau: f64) -> Result<(f64, f64)> {
    check_args(strength, tau_c, n, tau)?;
    let x = tau / tau_c;
    let q = (-x).exp();
    let one_minus_q = -(-x).exp_m1();
    let t = 4.0 * n as f64 * tau;
    let st = strength * tau_c;
    let pref = 2.0 * st * st / (t * t);
    let wg = weighted_geometric(-q * q, 2 * n);
    let two_n = 2.0 * n as f64;
    let z1 = pref * (two_n * a_reduced(x) - one_minus_q * one_minus_q * q * wg);
    let z2 = pref * one_minus_q * one_minus_q * (two_n - (1.0 + q * q) * wg);
    Ok((z1.max(0.0), z2))
}

/// The commonly quoted closed forms for the TS coefficients. They assemble
/// the per-cycle contributions without the `2/t^2` factor and with a
/// cross-cycle decay one period too long, so they fall short of
/// [`ts_zetas`] by exactly 2 at `n = 1` and drift further for larger `n`.
/// Kept for comparison only.
pub fn ts_zetas_printed(strength: f64, tau_c: f64, n: u32, tau: f64) -> Result<(f64, f64)> {
    check_args(strength, tau_c, n, tau)?;
    let x = tau / tau_c;
    let q = (-x).exp();
    let nf = n as f64;
    let pref = (strength * tau_c).powi(2) / (16.0 * nf * nf * tau * tau);
    let q4n = (-4.0 * nf * x).exp();
    // all e^{+kx} factors rewritten in terms of q <= 1
    let frac = (q * q - q) / (q * q + 1.0);
    let z1 = pref
        * (frac * frac * (nf * (-4.0 * (nf - 1.0) * x).exp() - (nf - 1.0) * q4n - 1.0) * q.powi(3)
            + 2.0 * nf * x
            + nf * (q * q - 1.0) * (2.0 - q));
    let z2 = pref * (1.0 - q).powi(2) / (1.0 + q * q)
        * (q4n * (nf - (nf - 1.0) * q.powi(4)) + nf - (nf + 1.0) * q.powi(4));
    Ok((z1, z2))
}

/// `1/2 e^{-X} (cosh X + cosh(zeta2 T^2 / 2))` with `X = zeta1 T^2`, `T = 4 n tau`.
pub fn ts_fidelity(zeta1: f64, zeta2: f64, n: u32, tau: f64) -> f64 {
    let t2 = (4.0 * n as f64 * tau).powi(2);
    let x = zeta1 * t2;
    let y = (zeta2 * t2 / 2.0).abs();
    // e^{-X} cosh(u) expanded so that no factor overflows
    let first = 0.5 * (1.0 + (-2.0 * x).exp());
    let second = 0.5 * ((y - x).exp() + (-y - x).exp());
    0.5 * (first + second)
}

#[derive(Clone, Debug)]
pub struct CumulantResult {
    /// First cumulant: Liouvillian of the time-averaged deterministic Hamiltonian.
    pub k1: Superoperator,
    /// Stochastic second cumulant.
    pub k2: Superoperator,
    /// Deterministic second cumulant (second Magnus term), not folded into fidelities.
    pub k2_coherent: Superoperator,
    pub duration: f64,
}

/// `int_{I} int_{I, t2 < t1} G(t1 - t2)`.
fn diagonal_weight(p: &OuParams, len: f64) -> f64 {
    if p.tau_c.is_infinite() {
        return p.variance() * len * len / 2.0;
    }
    p.variance() * p.tau_c * p.tau_c * a_reduced(len / p.tau_c)
}

/// `int_{I_i} int_{I_j} G(t1 - t2)` for `I_j` entirely before `I_i`.
fn cross_weight(p: &OuParams, later: &TogglingInterval, earlier: &TogglingInterval) -> f64 {
    if p.tau_c.is_infinite() {
        return p.variance() * later.length() * earlier.length();
    }
    let tc = p.tau_c;
    let gap = later.start - earlier.end;
    p.variance()
        * tc
        * tc
        * (-gap / tc).exp()
        * -(-later.length() / tc).exp_m1()
        * -(-earlier.length() / tc).exp_m1()
}

/// Second cumulant of piecewise-constant toggling-frame noise with an OU
/// kernel, integrated exactly per interval pair.
pub fn numeric_second_cumulant(intervals: &[TogglingInterval], p: &OuParams) -> Result<CumulantResult> {
    let first = intervals.first().ok_or(Error::EmptyIntervals)?;
    let last = intervals.last().unwrap();
    let d = first.noise_generator.dim();
    let t = last.end - first.start;

    let mut k2 = Superoperator::zeros(d);
    for (i, iv) in intervals.iter().enumerate() {
        let mut partner = iv.noise_generator.scale_real(diagonal_weight(p, iv.length()));
        for earlier in &intervals[..i] {
            partner += &earlier.noise_generator.scale_real(cross_weight(p, iv, earlier));
        }
        k2 += &(&commutator_superoperator(&iv.noise_generator) * &commutator_superoperator(&partner));
    }
    let k2 = k2.scale_real(2.0 / (t * t));

    let avg = zeroth_avg_hamiltonian(intervals)?;
    let k1 = commutator_superoperator(&avg);

    // moment route: (1/t^2)(2 sum_{i>j} H_i H_j L_i L_j + sum H_i^2 L_i^2) - K1^2
    let mut second_moment = Superoperator::zeros(d);
    let mut prefix = Operator::zeros(d);
    for iv in intervals {
        let h = commutator_superoperator(&iv.hamiltonian.scale_real(iv.length()));
        let before = commutator_superoperator(&prefix);
        second_moment += &(&h * &(&before.scale_real(2.0) + &h));
        prefix += &iv.hamiltonian.scale_real(iv.length());
    }
    let k2_coherent = &second_moment.scale_real(1.0 / (t * t)) - &(&k1 * &k1);

    Ok(CumulantResult {
        k1,
        k2,
        k2_coherent,
        duration: t,
    })
}

/// `Re Tr(ideal^{-1} ideal exp(-K2 t^2 / 2)) / d^2`: entanglement fidelity
/// of the ideal map followed by second-order toggling-frame attenuation.
pub fn fidelity_from_k2(k2: &Superoperator, duration: f64, ideal: &Superoperator) -> Result<f64> {
    if k2.dim() != ideal.dim() {
        return Err(Error::Dimension(format!("K2 is {0}x{0}, ideal map {1}x{1}", k2.dim(), ideal.dim())));
    }
    let inverse = ideal.try_inverse().ok_or(Error::SingularMap)?;
    let attenuation = k2.scale_real(-duration * duration / 2.0).exp();
    let noisy = ideal * &attenuation;
    let d = ideal.hilbert_dim() as f64;
    Ok((&inverse * &noisy).trace().re / (d * d))
}

/// Least-squares coefficients of `k2` in a basis of superoperators under the
/// Frobenius inner product.
pub fn project_onto(k2: &Superoperator, basis: &[Superoperator]) -> Result<Vec<f64>> {
    let m = basis.len();
    if basis.iter().any(|b| b.dim() != k2.dim()) {
        return Err(Error::Dimension("basis and K2 differ".into()));
    }
    let gram = DMatrix::<C64>::from_fn(m, m, |a, b| basis[a].inner(&basis[b]));
    let rhs = DVector::<C64>::from_fn(m, |a, _| basis[a].inner(k2));
    let sol = gram
        .lu()
        .solve(&rhs)
        .ok_or_else(|| invalid("basis", "linearly dependent"))?;
    Ok(sol.iter().map(|z| z.re).collect())
}
