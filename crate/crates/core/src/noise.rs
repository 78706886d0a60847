//! Stationary Ornstein-Uhlenbeck noise `omega(t)` with autocorrelation
//! `G(dt) = strength^2 exp(-|dt| / tau_c)`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OuParams {
    /// Stationary standard deviation of `omega(t)`, rad/s.
    pub strength: f64,
    /// Correlation time in seconds; `f64::INFINITY` freezes the noise.
    pub tau_c: f64,
}

impl OuParams {
    pub fn new(strength: f64, tau_c: f64) -> Result<Self> {
        if !(strength >= 0.0 && strength.is_finite()) {
            return Err(invalid("strength", format!("{strength} is not a finite non-negative value")));
        }
        if !(tau_c > 0.0) {
            return Err(invalid("tau_c", format!("{tau_c} must be positive")));
        }
        Ok(Self { strength, tau_c })
    }

    pub fn variance(&self) -> f64 {
        self.strength * self.strength
    }

    pub fn autocorrelation(&self, dt: f64) -> f64 {
        self.variance() * (-dt.abs() / self.tau_c).exp()
    }

    /// `C_jk = G(|j - k| dt)` for `n` equally spaced samples.
    pub fn covariance_matrix(&self, dt: f64, n: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, n, |j, k| self.autocorrelation(j.abs_diff(k) as f64 * dt))
    }
}

/// Derives one independent RNG stream per trajectory from a master seed.
///
/// Streams use ChaCha8's 64-bit stream selector, so trajectory `i` is
/// reproducible without generating trajectories `0..i`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngPolicy {
    pub master_seed: u64,
}

pub type NoiseRng = ChaCha8Rng;

impl RngPolicy {
    pub fn new(master_seed: u64) -> Self {
        Self { master_seed }
    }

    pub fn stream(&self, index: u64) -> NoiseRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(index);
        rng
    }
}

/// Exact one-step OU update over a gap `dt`.
#[derive(Clone, Copy, Debug)]
struct Step {
    decay: f64,
    kick: f64,
}

impl Step {
    fn new(p: &OuParams, dt: f64) -> Self {
        let decay = (-dt / p.tau_c).exp();
        // sqrt(1 - e^{-2 dt / tau_c}) without cancellation for small dt
        let kick = (-(-2.0 * dt / p.tau_c).exp_m1()).sqrt();
        Self { decay, kick }
    }

    fn advance<R: Rng>(&self, prev: f64, strength: f64, rng: &mut R) -> f64 {
        let r: f64 = rng.sample(StandardNormal);
        self.decay * prev + self.kick * strength * r
    }
}

/// Samples `omega(t_k)` at `n_steps` equally spaced times.
///
/// The first value is drawn from the stationary law `N(0, strength^2)`; each
/// later value uses the exact update
/// `omega_k = e^{-dt/tau_c} omega_{k-1} + r_k sqrt(1 - e^{-2 dt/tau_c})`
/// with `r_k ~ N(0, strength^2)`.
pub fn sample_trajectory<R: Rng>(p: &OuParams, dt: f64, n_steps: usize, rng: &mut R) -> Vec<f64> {
    assert!(dt > 0.0, "time step must be positive");
    let step = Step::new(p, dt);
    let mut out = Vec::with_capacity(n_steps);
    if n_steps == 0 {
        return out;
    }
    let first: f64 = rng.sample(StandardNormal);
    let mut w = p.strength * first;
    out.push(w);
    for _ in 1..n_steps {
        w = step.advance(w, p.strength, rng);
        out.push(w);
    }
    out
}

/// Samples `omega` at nondecreasing, possibly unevenly spaced times.
pub fn sample_at_times<R: Rng>(p: &OuParams, times: &[f64], rng: &mut R) -> Vec<f64> {
    let mut out = Vec::with_capacity(times.len());
    let Some(&t0) = times.first() else {
        return out;
    };
    let first: f64 = rng.sample(StandardNormal);
    let mut w = p.strength * first;
    out.push(w);
    let mut prev_t = t0;
    let mut cached: Option<(f64, Step)> = None;
    for &t in &times[1..] {
        let gap = t - prev_t;
        debug_assert!(gap >= 0.0, "sample times must be nondecreasing");
        let step = match cached {
            Some((g, s)) if g == gap => s,
            _ => {
                let s = Step::new(p, gap);
                cached = Some((gap, s));
                s
            }
        };
        w = step.advance(w, p.strength, rng);
        out.push(w);
        prev_t = t;
    }
    out
}
