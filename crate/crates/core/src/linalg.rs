//! Exact small-dense complex linear algebra.

use nalgebra::SymmetricEigen;

use crate::error::{Error, Result};
use crate::types::{CMatrix, DensityMatrix, Operator, StateVector, C64};

/// Largest exponent magnitude accepted before `exp` overflows an `f64`.
pub const EXPONENT_LIMIT: f64 = 700.0;

/// Spectral decomposition `op = V diag(values) V^dagger` of a Hermitian operator.
#[derive(Clone, Debug)]
pub struct Eigendecomposition {
    /// Eigenvalues in ascending order.
    pub values: Vec<f64>,
    /// Unitary whose columns are the matching eigenvectors.
    pub vectors: CMatrix,
}

impl Eigendecomposition {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn reconstruct(&self) -> CMatrix {
        self.map_values(|x| C64::new(x, 0.0))
    }

    /// `V diag(f(values)) V^dagger`.
    pub fn map_values(&self, f: impl Fn(f64) -> C64) -> CMatrix {
        self.map_indexed(|k| f(self.values[k]))
    }

    /// `V diag(f(k)) V^dagger` with `f` indexed by eigenvalue position.
    pub fn map_indexed(&self, f: impl Fn(usize) -> C64) -> CMatrix {
        let mut scaled = self.vectors.clone();
        for j in 0..self.values.len() {
            let fj = f(j);
            scaled.column_mut(j).iter_mut().for_each(|z| *z *= fj);
        }
        scaled * self.vectors.adjoint()
    }

    pub fn operator(&self) -> Operator {
        Operator::new(self.vectors.clone()).expect("eigenvector matrix is square")
    }
}

/// Eigenvalues (ascending) and orthonormal eigenvectors of a Hermitian operator.
pub fn eigendecompose(op: &Operator) -> Result<Eigendecomposition> {
    op.require_hermitian()?;
    Ok(hermitian_eigen(op.entries()))
}

pub(crate) fn hermitian_eigen(m: &CMatrix) -> Eigendecomposition {
    let eig = SymmetricEigen::new(m.clone());
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = CMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    Eigendecomposition { values, vectors }
}

/// Largest eigenvalue of the Hermitian part `(X + X^dagger)/2`; bounds the
/// real parts of the eigenvalues of `X` and the growth rate of `exp(tX)`.
pub fn log_norm(x: &CMatrix) -> f64 {
    let h = (x + x.adjoint()) * C64::new(0.5, 0.0);
    hermitian_eigen(&h).values.last().copied().unwrap_or(0.0)
}

/// `exp(scale * m)` by Pade scaling and squaring.
pub fn matrix_exponential(m: &Operator, scale: C64) -> Result<Operator> {
    let x = m.entries() * scale;
    if x.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Range {
            magnitude: f64::INFINITY,
        });
    }
    let growth = log_norm(&x);
    if growth > EXPONENT_LIMIT {
        return Err(Error::Range { magnitude: growth });
    }
    Operator::new(x.exp())
}

/// `sum_i |psi_i|^2`.
pub fn norm_squared(psi: &StateVector) -> f64 {
    psi.amplitudes().iter().map(|z| z.norm_sqr()).sum()
}

/// `Tr rho^2`.
pub fn purity(rho: &DensityMatrix) -> f64 {
    // Tr(rho rho) = sum_ij rho_ij rho_ji = sum_ij |rho_ij|^2 for Hermitian rho
    rho.entries().iter().map(|z| z.norm_sqr()).sum()
}

pub fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b - b * a
}

/// Largest singular value.
pub fn spectral_norm(m: &CMatrix) -> f64 {
    singular_values(m).into_iter().fold(0.0, f64::max)
}

/// Singular values in descending order.
pub fn singular_values(m: &CMatrix) -> Vec<f64> {
    let mut s: Vec<f64> = m.clone().singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Eigenvalues of the Hermitian part of `m`, ascending.
pub fn hermitian_eigenvalues(m: &CMatrix) -> Vec<f64> {
    let h = (m + m.adjoint()) * C64::new(0.5, 0.0);
    hermitian_eigen(&h).values
}

pub fn min_eigenvalue(rho: &DensityMatrix) -> f64 {
    hermitian_eigenvalues(rho.entries())[0]
}

/// `(1/2) || rho - sigma ||_1`.
pub fn trace_distance(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    if rho.dim() != sigma.dim() {
        return Err(Error::DimensionMismatch {
            expected: rho.dim(),
            found: sigma.dim(),
        });
    }
    let diff = rho.entries() - sigma.entries();
    Ok(0.5
        * hermitian_eigenvalues(&diff)
            .iter()
            .map(|x| x.abs())
            .sum::<f64>())
}

/// Element-wise maximum modulus.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}
