//! Dense complex operator algebra on small Hilbert spaces and its Liouville-space lifts.
//!
//! Basis states are indexed as `|s_1 s_2 ... s_n>` with spin 1 the most
//! significant bit, and `|0>` the +1 eigenstate of `sigma_z`.
//!
//! # Vectorization
//!
//! Density operators are vectorized by stacking **columns**:
//! `vec(rho)[i + d*j] = rho[(i, j)]`. Under this convention
//! `vec(A rho B) = (B^T (x) A) vec(rho)`, so
//!
//! * `superpropagator(U) = conj(U) (x) U` maps `vec(rho)` to `vec(U rho U^dag)`,
//! * `liouvillian(H) = 1 (x) H - conj(H) (x) 1` is the commutator `[H, .]`,
//!
//! and `exp(-i liouvillian(H) t) = superpropagator(exp(-i H t))`.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Absolute tolerance used for Hermitian and unitary role checks.
pub const ROLE_TOL: f64 = 1e-12;

pub(crate) const I: C64 = C64::new(0.0, 1.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);
pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);

fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// Scale-aware tolerance: absolute below unit magnitude, relative above it.
fn scaled_tol(m: &DMatrix<C64>) -> f64 {
    ROLE_TOL * max_abs(m).max(1.0)
}

/// Dense operator on a `2^n`-dimensional Hilbert space.
#[derive(Clone, PartialEq)]
pub struct Operator(DMatrix<C64>);

impl Operator {
    pub fn from_matrix(m: DMatrix<C64>) -> Result<Self> {
        let d = m.nrows();
        if d == 0 || d != m.ncols() || !d.is_power_of_two() {
            return Err(Error::Dimension(format!(
                "operator must be square with power-of-two dimension, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        Ok(Self(m))
    }

    /// Builds an operator from row-major real entries.
    pub fn from_real_rows(dim: usize, rows: &[f64]) -> Result<Self> {
        if rows.len() != dim * dim {
            return Err(Error::Dimension(format!(
                "expected {} entries, got {}",
                dim * dim,
                rows.len()
            )));
        }
        Self::from_matrix(DMatrix::from_row_iterator(
            dim,
            dim,
            rows.iter().map(|&x| C64::new(x, 0.0)),
        ))
    }

    pub(crate) fn wrap(m: DMatrix<C64>) -> Self {
        debug_assert!(m.is_square() && m.nrows().is_power_of_two());
        Self(m)
    }

    pub fn zeros(dim: usize) -> Self {
        Self::wrap(DMatrix::zeros(dim, dim))
    }

    pub fn identity(dim: usize) -> Self {
        Self::wrap(DMatrix::identity(dim, dim))
    }

    /// Diagonal operator from real eigenvalues.
    pub fn diagonal(values: &[f64]) -> Self {
        Self::wrap(DMatrix::from_diagonal(&DVector::from_iterator(
            values.len(),
            values.iter().map(|&v| C64::new(v, 0.0)),
        )))
    }

    /// Projector `|b><b|` onto a computational basis state.
    pub fn basis_projector(dim: usize, index: usize) -> Self {
        let mut m = DMatrix::zeros(dim, dim);
        m[(index, index)] = ONE;
        Self::wrap(m)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn n_spins(&self) -> usize {
        self.dim().trailing_zeros() as usize
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<C64> {
        self.0
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.0[(row, col)]
    }

    pub fn adjoint(&self) -> Self {
        Self(self.0.adjoint())
    }

    pub fn conj(&self) -> Self {
        Self(self.0.map(|z| z.conj()))
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    pub fn scale(&self, s: C64) -> Self {
        Self(&self.0 * s)
    }

    pub fn scale_real(&self, s: f64) -> Self {
        self.scale(C64::new(s, 0.0))
    }

    pub fn commutator(&self, other: &Self) -> Self {
        Self(&self.0 * &other.0 - &other.0 * &self.0)
    }

    /// `Tr(A^dag B)`.
    pub fn inner(&self, other: &Self) -> C64 {
        self.0.dotc(&other.0)
    }

    pub fn max_abs(&self) -> f64 {
        max_abs(&self.0)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        max_abs(&(&self.0 - &other.0))
    }

    pub fn is_hermitian(&self) -> bool {
        max_abs(&(&self.0 - self.0.adjoint())) <= scaled_tol(&self.0)
    }

    pub fn is_unitary(&self) -> bool {
        let d = self.dim();
        max_abs(&(self.0.adjoint() * &self.0 - DMatrix::<C64>::identity(d, d))) <= ROLE_TOL * 100.0
    }

    pub fn is_diagonal(&self) -> bool {
        let tol = scaled_tol(&self.0);
        self.0
            .iter()
            .enumerate()
            .all(|(k, z)| k % (self.dim() + 1) == 0 || z.norm() <= tol)
    }

    /// Real parts of the diagonal.
    pub fn real_diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|k| self.0[(k, k)].re).collect()
    }

    /// `A rho A^dag`.
    pub fn conjugate(&self, rho: &Self) -> Self {
        Self(&self.0 * &rho.0 * self.0.adjoint())
    }

    /// `A^dag O A`, the toggling-frame image of `O` under `A`.
    pub fn toggle(&self, o: &Self) -> Self {
        Self(self.0.adjoint() * &o.0 * &self.0)
    }

    pub fn apply(&self, ket: &DVector<C64>) -> DVector<C64> {
        &self.0 * ket
    }

    /// Eigendecomposition of a Hermitian operator, eigenvalues ascending.
    pub fn hermitian_eigen(&self) -> Result<Spectral> {
        if !self.is_hermitian() {
            return Err(Error::NotHermitian);
        }
        Ok(Spectral::of(&self.0))
    }

    /// Unitary with the largest `|Tr|` overlap, used to compare up to a global phase.
    pub fn equal_up_to_phase(&self, other: &Self) -> f64 {
        let overlap = other.inner(self);
        let phase = if overlap.norm() > 0.0 {
            overlap / overlap.norm()
        } else {
            ONE
        };
        self.max_abs_diff(&other.scale(phase))
    }
}

impl fmt::Debug for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Operator(dim={}) {}", self.dim(), self.0)
    }
}

impl Mul for &Operator {
    type Output = Operator;
    fn mul(self, rhs: Self) -> Operator {
        Operator(&self.0 * &rhs.0)
    }
}

impl Mul for Operator {
    type Output = Operator;
    fn mul(self, rhs: Self) -> Operator {
        Operator(self.0 * rhs.0)
    }
}

impl Add for &Operator {
    type Output = Operator;
    fn add(self, rhs: Self) -> Operator {
        Operator(&self.0 + &rhs.0)
    }
}

impl Add for Operator {
    type Output = Operator;
    fn add(self, rhs: Self) -> Operator {
        Operator(self.0 + rhs.0)
    }
}

impl AddAssign<&Operator> for Operator {
    fn add_assign(&mut self, rhs: &Operator) {
        self.0 += &rhs.0;
    }
}

impl Sub for &Operator {
    type Output = Operator;
    fn sub(self, rhs: Self) -> Operator {
        Operator(&self.0 - &rhs.0)
    }
}

impl Sub for Operator {
    type Output = Operator;
    fn sub(self, rhs: Self) -> Operator {
        Operator(self.0 - rhs.0)
    }
}

impl Neg for Operator {
    type Output = Operator;
    fn neg(self) -> Operator {
        Operator(-self.0)
    }
}

impl Mul<Operator> for f64 {
    type Output = Operator;
    fn mul(self, rhs: Operator) -> Operator {
        rhs.scale_real(self)
    }
}

impl Mul<&Operator> for f64 {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        rhs.scale_real(self)
    }
}

impl Mul<Operator> for C64 {
    type Output = Operator;
    fn mul(self, rhs: Operator) -> Operator {
        rhs.scale(self)
    }
}

/// Eigenpairs of a Hermitian matrix.
#[derive(Clone, Debug)]
pub struct Spectral {
    pub values: Vec<f64>,
    vectors: DMatrix<C64>,
}

impl Spectral {
    fn of(m: &DMatrix<C64>) -> Self {
        // Symmetrize so rounding noise in the input cannot leak into the eigenvectors.
        let h = (m + m.adjoint()) * C64::new(0.5, 0.0);
        let n = h.nrows();
        let eig = h.symmetric_eigen();
        let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        let vectors = DMatrix::from_fn(n, n, |r, c| {
            eig.eigenvectors[(r, order[c])]
        });
        Self { values, vectors }
    }

    pub fn vectors(&self) -> &DMatrix<C64> {
        &self.vectors
    }

    /// `V f(Lambda) V^dag`.
    pub fn map(&self, f: impl Fn(f64) -> C64) -> DMatrix<C64> {
        let d = self.values.len();
        let mut scaled = self.vectors.clone();
        for c in 0..d {
            let w = f(self.values[c]);
            scaled.column_mut(c).iter_mut().for_each(|z| *z *= w);
        }
        scaled * self.vectors.adjoint()
    }

    /// `exp(-i H t)`.
    pub fn propagator(&self, t: f64) -> Operator {
        Operator::wrap(self.map(|lambda| C64::from_polar(1.0, -lambda * t)))
    }
}

/// Kronecker product `a (x) b`; `a` acts on the more significant spins.
pub fn tensor_product(a: &Operator, b: &Operator) -> Operator {
    Operator::wrap(a.0.kronecker(&b.0))
}

/// `exp(-i h t)` for Hermitian `h`, via its eigendecomposition.
pub fn evolve_unitary(h: &Operator, t: f64) -> Result<Operator> {
    Ok(h.hermitian_eigen()?.propagator(t))
}

/// Commutator superoperator `1 (x) h - conj(h) (x) 1`.
pub fn liouvillian(h: &Operator) -> Result<Superoperator> {
    if !h.is_hermitian() {
        return Err(Error::NotHermitian);
    }
    Ok(commutator_superoperator(h))
}

/// `1 (x) h - conj(h) (x) 1` without a Hermiticity check.
pub fn commutator_superoperator(h: &Operator) -> Superoperator {
    let d = h.dim();
    let id = DMatrix::<C64>::identity(d, d);
    Superoperator(id.kronecker(&h.0) - h.conj().0.kronecker(&id))
}

/// `conj(u) (x) u`, the map `rho -> u rho u^dag`.
pub fn superpropagator(u: &Operator) -> Result<Superoperator> {
    if !u.is_unitary() {
        return Err(Error::NotUnitary);
    }
    Ok(superpropagator_unchecked(u))
}

pub(crate) fn superpropagator_unchecked(u: &Operator) -> Superoperator {
    Superoperator(u.conj().0.kronecker(&u.0))
}

/// Column-stacked vector of an operator.
pub fn vectorize(rho: &Operator) -> DVector<C64> {
    DVector::from_column_slice(rho.0.as_slice())
}

pub fn unvectorize(v: &DVector<C64>) -> Result<Operator> {
    let d = (v.len() as f64).sqrt().round() as usize;
    if d * d != v.len() {
        return Err(Error::Dimension(format!(
            "vector length {} is not a perfect square",
            v.len()
        )));
    }
    Operator::from_matrix(DMatrix::from_column_slice(d, d, v.as_slice()))
}

/// Linear map on vectorized operators, dimension `d^2`.
#[derive(Clone, PartialEq)]
pub struct Superoperator(DMatrix<C64>);

impl Superoperator {
    pub fn from_matrix(m: DMatrix<C64>) -> Result<Self> {
        let n = m.nrows();
        let d = (n as f64).sqrt().round() as usize;
        if n == 0 || n != m.ncols() || d * d != n || !d.is_power_of_two() {
            return Err(Error::Dimension(format!(
                "superoperator must be square with dimension d^2, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        Ok(Self(m))
    }

    pub fn zeros(hilbert_dim: usize) -> Self {
        let n = hilbert_dim * hilbert_dim;
        Self(DMatrix::zeros(n, n))
    }

    pub fn identity(hilbert_dim: usize) -> Self {
        let n = hilbert_dim * hilbert_dim;
        Self(DMatrix::identity(n, n))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn hilbert_dim(&self) -> usize {
        (self.dim() as f64).sqrt().round() as usize
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    pub fn adjoint(&self) -> Self {
        Self(self.0.adjoint())
    }

    pub fn scale(&self, s: C64) -> Self {
        Self(&self.0 * s)
    }

    pub fn scale_real(&self, s: f64) -> Self {
        self.scale(C64::new(s, 0.0))
    }

    /// Frobenius inner product `Tr(A^dag B)`.
    pub fn inner(&self, other: &Self) -> C64 {
        self.0.dotc(&other.0)
    }

    pub fn max_abs(&self) -> f64 {
        max_abs(&self.0)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        max_abs(&(&self.0 - &other.0))
    }

    pub fn is_unitary(&self) -> bool {
        let n = self.dim();
        max_abs(&(self.0.adjoint() * &self.0 - DMatrix::<C64>::identity(n, n))) <= ROLE_TOL * 100.0
    }

    /// Applies the map to an operator.
    pub fn apply(&self, rho: &Operator) -> Operator {
        let v = &self.0 * vectorize(rho);
        Operator::wrap(DMatrix::from_column_slice(rho.dim(), rho.dim(), v.as_slice()))
    }

    /// General matrix exponential `exp(self)` (Pade scaling and squaring).
    pub fn exp(&self) -> Self {
        Self(self.0.clone().exp())
    }

    pub fn try_inverse(&self) -> Option<Self> {
        self.0.clone().try_inverse().map(Self)
    }

    pub fn singular_values(&self) -> Vec<f64> {
        self.0.clone().singular_values().iter().copied().collect()
    }
}

impl fmt::Debug for Superoperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Superoperator(dim={})", self.dim())
    }
}

impl Mul for &Superoperator {
    type Output = Superoperator;
    fn mul(self, rhs: Self) -> Superoperator {
        Superoperator(&self.0 * &rhs.0)
    }
}

impl Add for &Superoperator {
    type Output = Superoperator;
    fn add(self, rhs: Self) -> Superoperator {
        Superoperator(&self.0 + &rhs.0)
    }
}

impl Sub for &Superoperator {
    type Output = Superoperator;
    fn sub(self, rhs: Self) -> Superoperator {
        Superoperator(&self.0 - &rhs.0)
    }
}

impl AddAssign<&Superoperator> for Superoperator {
    fn add_assign(&mut self, rhs: &Superoperator) {
        self.0 += &rhs.0;
    }
}

/// Single-spin Pauli matrices and their embeddings.
pub mod pauli {
    use super::*;

    pub fn identity() -> Operator {
        Operator::identity(2)
    }

    pub fn x() -> Operator {
        Operator::wrap(DMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]))
    }

    pub fn y() -> Operator {
        Operator::wrap(DMatrix::from_row_slice(2, 2, &[ZERO, -I, I, ZERO]))
    }

    pub fn z() -> Operator {
        Operator::wrap(DMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE]))
    }

    /// Places a single-spin operator on spin `site` (0-based, most significant first).
    pub fn on_spin(op: &Operator, site: usize, n_spins: usize) -> Operator {
        assert!(site < n_spins, "spin {site} out of range for {n_spins} spins");
        let left = Operator::identity(1 << site);
        let right = Operator::identity(1 << (n_spins - site - 1));
        tensor_product(&tensor_product(&left, op), &right)
    }

    pub fn x_on(site: usize, n: usize) -> Operator {
        on_spin(&x(), site, n)
    }

    pub fn y_on(site: usize, n: usize) -> Operator {
        on_spin(&y(), site, n)
    }

    pub fn z_on(site: usize, n: usize) -> Operator {
        on_spin(&z(), site, n)
    }
}
