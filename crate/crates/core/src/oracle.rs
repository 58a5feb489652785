//! Brute-force restricted path sums.
//!
//! A path is a sequence of eigenbasis indices `n_0, ..., n_N` of the
//! observable, one per grid point. Its amplitude is
//! `<n_0|psi_0> prod_k <n_k| exp(-i H dt) |n_{k-1}>` and the conditioned
//! state is the weighted sum of path amplitudes,
//!
//! ```text
//! psi_T = sum_paths w[path] amplitude(path) |n_N>.
//! ```
//!
//! With the Gaussian weight `exp(-kappa dt sum_k (lambda_{n_k} - a_k)^2)`
//! this equals `prod_k exp(-kappa dt (A - a_k)^2) exp(-i H dt) psi_0`, a
//! first-order splitting of the conditioned evolution, computed here without
//! reference to the selective propagator.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{eigendecompose, matrix_exponential};
use crate::types::{CMatrix, CVector, MeasurementSpec, Operator, Readout, StateVector, C64};

/// Largest number of paths enumerated.
pub const MAX_PATHS: u64 = 10_000_000;

/// Weight functional on eigenbasis paths: `path` has length `N + 1` and the
/// result must lie in `[0, 1]`.
pub trait PathWeight: Sync {
    fn weight(&self, path: &[usize], readout: &Readout) -> f64;
}

impl<F> PathWeight for F
where
    F: Fn(&[usize], &Readout) -> f64 + Sync,
{
    fn weight(&self, path: &[usize], readout: &Readout) -> f64 {
        self(path, readout)
    }
}

/// `exp(-kappa dt sum_k (lambda_k - a_k)^2)` for the eigenvalues visited on
/// steps `1..=N`.
pub fn weight_functional_gaussian(
    path_eigenvalues: &[f64],
    readout: &Readout,
    kappa: f64,
    dt: f64,
) -> Result<f64> {
    if path_eigenvalues.len() != readout.values().len() {
        return Err(Error::DimensionMismatch {
            expected: readout.values().len(),
            found: path_eigenvalues.len(),
        });
    }
    let deviation: f64 = path_eigenvalues
        .iter()
        .zip(readout.values())
        .map(|(l, a)| (l - a) * (l - a))
        .sum();
    Ok((-kappa * dt * deviation).exp())
}

/// The Gaussian weight as a [`PathWeight`]. Each step's readout is compared
/// with the eigenvalue at the end of that step.
#[derive(Clone, Debug)]
pub struct GaussianWeight {
    eigenvalues: Vec<f64>,
    kappa: f64,
    dt: f64,
}

impl GaussianWeight {
    pub fn for_spec(spec: &MeasurementSpec) -> Result<Self> {
        Ok(Self {
            eigenvalues: eigendecompose(spec.observable())?.values,
            kappa: spec.kappa(),
            dt: spec.grid().dt(),
        })
    }
}

impl PathWeight for GaussianWeight {
    fn weight(&self, path: &[usize], readout: &Readout) -> f64 {
        let deviation: f64 = path[1..]
            .iter()
            .zip(readout.values())
            .map(|(&n, a)| {
                let d = self.eigenvalues[n] - a;
                d * d
            })
            .sum();
        (-self.kappa * self.dt * deviation).exp()
    }
}

/// Weight one on every path: the unrestricted sum.
pub fn unrestricted(_: &[usize], _: &Readout) -> f64 {
    1.0
}

fn path_count(dim: usize, steps: usize) -> Result<u64> {
    let count = (dim as u128)
        .checked_pow(steps as u32 + 1)
        .unwrap_or(u128::MAX);
    if count > MAX_PATHS as u128 {
        return Err(Error::TooManyPaths {
            count,
            limit: MAX_PATHS,
        });
    }
    Ok(count as u64)
}

/// Conditioned state as a literal weighted sum over all eigenbasis paths.
pub fn brute_force_restricted_sum<W: PathWeight + ?Sized>(
    psi0: &StateVector,
    readout: &Readout,
    spec: &MeasurementSpec,
    h: &Operator,
    weight: &W,
) -> Result<StateVector> {
    spec.require_grid(readout)?;
    let d = spec.dim();
    h.require_dim(d)?;
    psi0.require_dim(d)?;
    let steps = readout.values().len();
    path_count(d, steps)?;

    let eigen = eigendecompose(spec.observable())?;
    let v = &eigen.vectors;
    let propagator = matrix_exponential(h, C64::new(0.0, -spec.grid().dt()))?;
    let hop: CMatrix = v.adjoint() * propagator.entries() * v;
    let initial: CVector = v.adjoint() * psi0.amplitudes();

    // One worker per final index; the summation order inside each is fixed.
    let prefix_count = d.pow(steps as u32);
    let coeffs: Vec<C64> = (0..d)
        .into_par_iter()
        .map(|last| {
            let mut path = vec![0usize; steps + 1];
            path[steps] = last;
            let mut sum = C64::new(0.0, 0.0);
            for code in 0..prefix_count {
                let mut rest = code;
                for slot in path.iter_mut().take(steps) {
                    *slot = rest % d;
                    rest /= d;
                }
                let mut amp = initial[path[0]];
                for k in 1..=steps {
                    amp *= hop[(path[k], path[k - 1])];
                }
                if amp == C64::new(0.0, 0.0) {
                    continue;
                }
                let w = weight.weight(&path, readout);
                debug_assert!((0.0..=1.0).contains(&w), "path weight {w} outside [0, 1]");
                sum += amp * w;
            }
            sum
        })
        .collect();
    StateVector::new(v * CVector::from_vec(coeffs))
}

/// `|| brute_force_restricted_sum(...) ||^2`.
pub fn restricted_sum_probability<W: PathWeight + ?Sized>(
    psi0: &StateVector,
    readout: &Readout,
    spec: &MeasurementSpec,
    h: &Operator,
    weight: &W,
) -> Result<f64> {
    Ok(brute_force_restricted_sum(psi0, readout, spec, h, weight)?.norm_squared())
}
