use rand::Rng;

use crate::types::{CMatrix, Operator, StateVector, C64};

pub fn random_matrix(rng: &mut impl Rng, dim: usize) -> Operator {
    Operator::new(CMatrix::from_fn(dim, dim, |_, _| {
        C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    }))
    .unwrap()
}

pub fn random_hermitian(rng: &mut impl Rng, dim: usize) -> Operator {
    let m = random_matrix(rng, dim).into_entries();
    let h = (&m + m.adjoint()) * C64::new(0.5, 0.0);
    Operator::hermitian(h).unwrap()
}

pub fn random_state(rng: &mut impl Rng, dim: usize) -> StateVector {
    let v = crate::types::CVector::from_fn(dim, |_, _| {
        C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    });
    StateVector::new(v).unwrap().normalized().unwrap()
}
