use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::linops::{evolve_unitary, Operator, C64};

fn gaussian_matrix<R: Rng>(rng: &mut R, dim: usize) -> DMatrix<C64> {
    DMatrix::from_fn(dim, dim, |_, _| {
        C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
    })
}

pub fn random_hermitian<R: Rng>(rng: &mut R, dim: usize) -> Operator {
    let g = gaussian_matrix(rng, dim);
    Operator::from_matrix((&g + g.adjoint()) * C64::new(0.5, 0.0)).unwrap()
}

pub fn random_unitary<R: Rng>(rng: &mut R, dim: usize) -> Operator {
    evolve_unitary(&random_hermitian(rng, dim), 1.0).unwrap()
}

pub fn random_density<R: Rng>(rng: &mut R, dim: usize) -> Operator {
    let g = gaussian_matrix(rng, dim);
    let rho = &g * g.adjoint();
    let tr = rho.trace();
    Operator::from_matrix(rho / tr).unwrap()
}
