//! Spin systems, their internal and RF Hamiltonians, and the two-spin DFS encoding.
//!
//! Offsets are stored in rad/s. Scalar couplings are stored in Hz and enter the
//! Hamiltonian as `(pi/2) J_ij sigma_i . sigma_j` (or `sigma_z sigma_z` in the
//! weak-coupling limit).

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linops::{evolve_unitary, pauli, Operator, C64, ONE};

#[derive(Clone, Debug, PartialEq)]
pub struct SpinSystem {
    offsets: Vec<f64>,
    couplings: Vec<Vec<f64>>,
    noise_weights: Vec<f64>,
}

/// How scalar couplings enter the internal Hamiltonian.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CouplingForm {
    /// Isotropic `sigma_i . sigma_j`.
    #[default]
    Full,
    /// Secular `sigma_z^i sigma_z^j` only.
    Weak,
}

impl SpinSystem {
    /// `offsets` in rad/s, `couplings` a symmetric zero-diagonal matrix in Hz.
    pub fn new(offsets: Vec<f64>, couplings: Vec<Vec<f64>>) -> Result<Self> {
        let n = offsets.len();
        if n == 0 {
            return Err(invalid("offsets", "at least one spin is required"));
        }
        if n > 4 {
            return Err(invalid("offsets", format!("{n} spins exceeds the 4-spin limit")));
        }
        if couplings.len() != n || couplings.iter().any(|row| row.len() != n) {
            return Err(invalid("couplings", format!("expected a {n}x{n} matrix")));
        }
        for i in 0..n {
            if couplings[i][i] != 0.0 {
                return Err(invalid("couplings", format!("diagonal entry {i} is nonzero")));
            }
            for j in 0..i {
                if couplings[i][j] != couplings[j][i] {
                    return Err(invalid("couplings", format!("entries ({i},{j}) and ({j},{i}) differ")));
                }
            }
        }
        if offsets.iter().chain(couplings.iter().flatten()).any(|x| !x.is_finite()) {
            return Err(invalid("offsets", "non-finite parameter"));
        }
        Ok(Self {
            noise_weights: vec![1.0; n],
            offsets,
            couplings,
        })
    }

    /// Spectrometer-style input: offsets and couplings both in Hz.
    pub fn from_hz(offsets_hz: &[f64], couplings_hz: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(offsets_hz.iter().map(|f| 2.0 * PI * f).collect(), couplings_hz)
    }

    /// Two spins with `H = (delta_omega/2)(sz1 - sz2) + (pi/2) J s1.s2`.
    ///
    /// The offsets are therefore `+delta_omega` and `-delta_omega` (rad/s).
    pub fn two_spin(delta_omega: f64, j_hz: f64) -> Self {
        Self::new(
            vec![delta_omega, -delta_omega],
            vec![vec![0.0, j_hz], vec![j_hz, 0.0]],
        )
        .expect("two-spin parameters are valid")
    }

    /// Spins with no chemical shift and no coupling.
    pub fn free(n_spins: usize) -> Result<Self> {
        Self::new(vec![0.0; n_spins], vec![vec![0.0; n_spins]; n_spins])
    }

    pub fn with_noise_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != self.n_spins() {
            return Err(invalid(
                "noise_weights",
                format!("expected {} weights, got {}", self.n_spins(), weights.len()),
            ));
        }
        self.noise_weights = weights;
        Ok(self)
    }

    pub fn n_spins(&self) -> usize {
        self.offsets.len()
    }

    pub fn dim(&self) -> usize {
        1 << self.n_spins()
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    pub fn coupling(&self, i: usize, j: usize) -> f64 {
        self.couplings[i][j]
    }

    pub fn couplings(&self) -> &[Vec<f64>] {
        &self.couplings
    }

    pub fn noise_weights(&self) -> &[f64] {
        &self.noise_weights
    }
}

fn sum_ops(n: usize, ops: impl Iterator<Item = Operator>) -> Operator {
    ops.fold(Operator::zeros(1 << n), |acc, op| acc + op)
}

/// `sigma_i . sigma_j` on `n` spins.
pub fn heisenberg(i: usize, j: usize, n: usize) -> Operator {
    &(&(&pauli::x_on(i, n) * &pauli::x_on(j, n)) + &(&pauli::y_on(i, n) * &pauli::y_on(j, n)))
        + &(&pauli::z_on(i, n) * &pauli::z_on(j, n))
}

pub fn internal_hamiltonian(sys: &SpinSystem, form: CouplingForm) -> Operator {
    let n = sys.n_spins();
    let mut h = sum_ops(
        n,
        (0..n).map(|i| pauli::z_on(i, n).scale_real(sys.offsets[i] / 2.0)),
    );
    for i in 0..n {
        for j in i + 1..n {
            let jij = sys.couplings[i][j];
            if jij == 0.0 {
                continue;
            }
            let term = match form {
                CouplingForm::Full => heisenberg(i, j, n),
                CouplingForm::Weak => &pauli::z_on(i, n) * &pauli::z_on(j, n),
            };
            h += &term.scale_real(FRAC_PI_2 * jij);
        }
    }
    h
}

/// `(1/2) sum_{i in targets} sigma_x^i`.
pub fn collective_x(n: usize, targets: &[usize]) -> Operator {
    sum_ops(n, targets.iter().map(|&i| pauli::x_on(i, n))).scale_real(0.5)
}

pub fn collective_y(n: usize, targets: &[usize]) -> Operator {
    sum_ops(n, targets.iter().map(|&i| pauli::y_on(i, n))).scale_real(0.5)
}

pub fn collective_z(n: usize, targets: &[usize]) -> Operator {
    sum_ops(n, targets.iter().map(|&i| pauli::z_on(i, n))).scale_real(0.5)
}

pub fn all_spins(n: usize) -> Vec<usize> {
    (0..n).collect()
}

/// Noise generator `sum_i w_i sigma_z^i / 2`; all weights 1 gives collective `Z`.
pub fn noise_generator(sys: &SpinSystem) -> Operator {
    let n = sys.n_spins();
    sum_ops(
        n,
        (0..n).map(|i| pauli::z_on(i, n).scale_real(sys.noise_weights[i] / 2.0)),
    )
}

/// RF Hamiltonian `amplitude * exp(-i Z phase) X exp(i Z phase)` on all spins.
pub fn rf_hamiltonian(sys: &SpinSystem, amplitude: f64, phase: f64) -> Operator {
    rf_hamiltonian_on(sys.n_spins(), &all_spins(sys.n_spins()), amplitude, phase)
}

/// RF Hamiltonian restricted to the spins in `targets`.
pub fn rf_hamiltonian_on(n: usize, targets: &[usize], amplitude: f64, phase: f64) -> Operator {
    let x = collective_x(n, targets);
    let z = collective_z(n, &all_spins(n));
    let frame = evolve_unitary(&z, phase).expect("collective Z is Hermitian");
    frame.conjugate(&x).scale_real(amplitude)
}

/// Logical qubits formed by pairs of spins, `|0>_L = |01>`, `|1>_L = |10>`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DfsEncoding {
    n_spins: usize,
    pairs: Vec<(usize, usize)>,
}

impl DfsEncoding {
    pub fn new(n_spins: usize, pairs: Vec<(usize, usize)>) -> Result<Self> {
        let mut used = vec![false; n_spins];
        for &(a, b) in &pairs {
            for s in [a, b] {
                if s >= n_spins {
                    return Err(Error::InvalidIndex { index: s, limit: n_spins });
                }
                if used[s] {
                    return Err(invalid("pairs", format!("spin {s} appears in more than one pair")));
                }
                used[s] = true;
            }
        }
        if pairs.is_empty() {
            return Err(invalid("pairs", "at least one logical qubit is required"));
        }
        Ok(Self { n_spins, pairs })
    }

    /// One logical qubit on two spins.
    pub fn single() -> Self {
        Self::new(2, vec![(0, 1)]).unwrap()
    }

    /// Two logical qubits on four spins, pairs (1,2) and (3,4).
    pub fn double() -> Self {
        Self::new(4, vec![(0, 1), (2, 3)]).unwrap()
    }

    pub fn n_spins(&self) -> usize {
        self.n_spins
    }

    pub fn dim(&self) -> usize {
        1 << self.n_spins
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn n_qubits(&self) -> usize {
        self.pairs.len()
    }

    fn bit(&self, index: usize, spin: usize) -> usize {
        (index >> (self.n_spins - 1 - spin)) & 1
    }

    /// Computational basis indices spanning the protected subspace, ascending.
    pub fn logical_basis(&self) -> Vec<usize> {
        (0..self.dim())
            .filter(|&b| self.pairs.iter().all(|&(i, j)| self.bit(b, i) != self.bit(b, j)))
            .collect()
    }
}

/// The four logical Pauli operators of one encoded qubit, on the full Hilbert space.
#[derive(Clone, Debug)]
pub struct LogicalPaulis {
    pub identity: Operator,
    pub x: Operator,
    pub y: Operator,
    pub z: Operator,
}

pub fn logical_paulis(enc: &DfsEncoding, qubit: usize) -> Result<LogicalPaulis> {
    let &(i, j) = enc.pairs.get(qubit).ok_or(Error::InvalidIndex {
        index: qubit,
        limit: enc.n_qubits(),
    })?;
    let n = enc.n_spins;
    let (xi, yi, zi) = (pauli::x_on(i, n), pauli::y_on(i, n), pauli::z_on(i, n));
    let (xj, yj, zj) = (pauli::x_on(j, n), pauli::y_on(j, n), pauli::z_on(j, n));
    Ok(LogicalPaulis {
        identity: (&Operator::identity(1 << n) - &(&zi * &zj)).scale_real(0.5),
        x: (&(&xi * &xj) + &(&yi * &yj)).scale_real(0.5),
        // ordered so that [x, y] = 2i z on the logical subspace
        y: (&(&yi * &xj) - &(&xi * &yj)).scale_real(0.5),
        z: (&zi - &zj).scale_real(0.5),
    })
}

pub fn dfs_projector(enc: &DfsEncoding) -> Operator {
    let d = enc.dim();
    enc.logical_basis()
        .into_iter()
        .fold(Operator::zeros(d), |acc, b| acc + Operator::basis_projector(d, b))
}

/// `Tr[(P rho P)^2] / Tr[rho^2]`.
pub fn leakage_fraction(rho: &Operator, enc: &DfsEncoding) -> Result<f64> {
    if rho.dim() != enc.dim() {
        return Err(Error::Dimension(format!(
            "state has dimension {}, encoding {}",
            rho.dim(),
            enc.dim()
        )));
    }
    let total = (rho * rho).trace().re;
    if total <= 1e-300 {
        return Err(Error::ZeroState);
    }
    let p = dfs_projector(enc);
    let inside = p.conjugate(rho);
    Ok((&inside * &inside).trace().re / total)
}

pub fn basis_ket(dim: usize, index: usize) -> DVector<C64> {
    let mut v = DVector::zeros(dim);
    v[index] = ONE;
    v
}

/// Renders basis index `b` as a ket label such as `|0101>`.
pub fn basis_label(b: usize, n_spins: usize) -> String {
    let bits: String = (0..n_spins)
        .map(|s| if (b >> (n_spins - 1 - s)) & 1 == 1 { '1' } else { '0' })
        .collect();
    format!("|{bits}>")
}

/// Outcome of evolving `|0101>` under the interqubit exchange term.
#[derive(Clone, Debug)]
pub struct LeakageExample {
    pub basis_index: usize,
    pub label: String,
    pub amplitude: C64,
    /// Squared norm of the evolved state's component inside the two-qubit DFS.
    pub dfs_population: f64,
}

/// Applies `exp(-i (pi/4) H_23)` to `|0101>` on four spins, where `H_23` is
/// `sigma_2 . sigma_3` (full) or `sigma_z^2 sigma_z^3` (weak).
pub fn interqubit_leakage_example(form: CouplingForm) -> LeakageExample {
    let n = 4;
    let h = match form {
        CouplingForm::Full => heisenberg(1, 2, n),
        CouplingForm::Weak => &pauli::z_on(1, n) * &pauli::z_on(2, n),
    };
    let u = evolve_unitary(&h, FRAC_PI_4).expect("exchange term is Hermitian");
    let psi = u.apply(&basis_ket(16, 0b0101));
    let (basis_index, amplitude) = psi
        .iter()
        .copied()
        .enumerate()
        .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
        .unwrap();
    let enc = DfsEncoding::double();
    let dfs_population = enc.logical_basis().iter().map(|&b| psi[b].norm_sqr()).sum();
    LeakageExample {
        basis_index,
        label: basis_label(basis_index, n),
        amplitude,
        dfs_population,
    }
}
