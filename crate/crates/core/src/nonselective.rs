//! Evolution averaged over all readouts.
//!
//! The averaged state obeys
//!
//! ```text
//! d rho/dt = -i [H, rho] - (kappa/2) [A, [A, rho]]
//! ```
//!
//! integrated here with fixed-step classical Runge-Kutta on the measurement
//! grid. The same average can be estimated from sampled trajectories with
//! [`ensemble_average`].

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::linalg::{commutator, max_abs, trace_distance};
use crate::types::{CMatrix, DensityMatrix, MeasurementSpec, Operator, StateVector, C64};

/// Trace drift beyond which integration is declared unstable.
pub const TRACE_DRIFT_LIMIT: f64 = 1e-6;

/// `-i [H, rho] - (kappa/2) [A, [A, rho]]`.
pub fn lindblad_rhs(
    rho: &DensityMatrix,
    h: &Operator,
    observable: &Operator,
    kappa: f64,
) -> Result<CMatrix> {
    h.require_dim(rho.dim())?;
    observable.require_dim(rho.dim())?;
    Ok(rhs(rho.entries(), h.entries(), observable.entries(), kappa))
}

fn rhs(rho: &CMatrix, h: &CMatrix, a: &CMatrix, kappa: f64) -> CMatrix {
    let unitary = commutator(h, rho) * C64::new(0.0, -1.0);
    let inner = commutator(a, rho);
    unitary - commutator(a, &inner) * C64::new(0.5 * kappa, 0.0)
}

fn rk4_step(rho: &CMatrix, h: &CMatrix, a: &CMatrix, kappa: f64, dt: f64) -> CMatrix {
    let half = C64::new(0.5 * dt, 0.0);
    let full = C64::new(dt, 0.0);
    let k1 = rhs(rho, h, a, kappa);
    let k2 = rhs(&(rho + &k1 * half), h, a, kappa);
    let k3 = rhs(&(rho + &k2 * half), h, a, kappa);
    let k4 = rhs(&(rho + &k3 * full), h, a, kappa);
    let incr = (k1 + (k2 + k3) * C64::new(2.0, 0.0) + k4) * C64::new(dt / 6.0, 0.0);
    let next = rho + incr;
    (&next + next.adjoint()) * C64::new(0.5, 0.0)
}

/// `rho(t_k)` for every grid point `k = 0..=N`.
pub fn propagate_master_series(
    rho0: &DensityMatrix,
    spec: &MeasurementSpec,
    h: &Operator,
) -> Result<Vec<DensityMatrix>> {
    h.require_hermitian()?;
    h.require_dim(rho0.dim())?;
    spec.observable().require_dim(rho0.dim())?;
    let grid = spec.grid();
    let (hm, am) = (h.entries(), spec.observable().entries());
    let mut out = Vec::with_capacity(grid.steps() + 1);
    let mut rho = rho0.entries().clone();
    out.push(rho0.clone());
    for step in 1..=grid.steps() {
        rho = rk4_step(&rho, hm, am, spec.kappa(), grid.dt());
        let trace_drift = (rho.trace() - C64::new(1.0, 0.0)).norm();
        let max_entry = max_abs(&rho);
        // |rho_ij| <= 1 for any density matrix
        if !(trace_drift <= TRACE_DRIFT_LIMIT) || !(max_entry <= 1.0 + TRACE_DRIFT_LIMIT) {
            return Err(Error::MasterInstability {
                step,
                trace_drift,
                max_entry,
                suggested_steps: 2 * grid.steps(),
            });
        }
        out.push(DensityMatrix::from_entries_unchecked(rho.clone()));
    }
    Ok(out)
}

/// `rho(T)`.
pub fn propagate_master(
    rho0: &DensityMatrix,
    spec: &MeasurementSpec,
    h: &Operator,
) -> Result<DensityMatrix> {
    let mut series = propagate_master_series(rho0, spec, h)?;
    Ok(series.pop().expect("series holds at least rho0"))
}

/// Trajectory-averaged density matrix with its Monte Carlo error.
#[derive(Clone, Debug)]
pub struct EnsembleEstimate {
    pub rho: DensityMatrix,
    /// Standard error of each entry, `sqrt(se(Re)^2 + se(Im)^2)`.
    pub std_error: DMatrix<f64>,
    pub n_samples: usize,
}

impl EnsembleEstimate {
    /// Scale of the Monte Carlo error of a trace distance to this estimate,
    /// `(sqrt(d)/2) ||std_error||_F`; it bounds `(1/2)||delta||_1` through
    /// `||X||_1 <= sqrt(d) ||X||_F`.
    pub fn trace_distance_error(&self) -> f64 {
        0.5 * (self.rho.dim() as f64).sqrt() * self.std_error.norm()
    }

    pub fn trace_distance_to(&self, other: &DensityMatrix) -> Result<f64> {
        trace_distance(&self.rho, other)
    }
}

/// Weighted average of `|psi_i><psi_i| / <psi_i|psi_i>`.
///
/// The sum runs in input order, so the result does not depend on how the
/// trajectories were produced.
pub fn ensemble_average(trajectories: &[(StateVector, f64)]) -> Result<EnsembleEstimate> {
    let (first, _) = trajectories
        .first()
        .ok_or(Error::Empty("trajectory list"))?;
    let d = first.dim();
    let mut mean = CMatrix::zeros(d, d);
    let mut total_weight = 0.0;
    let projectors: Vec<(CMatrix, f64)> = trajectories
        .iter()
        .map(|(psi, w)| {
            psi.require_dim(d)?;
            if !(*w >= 0.0) || !w.is_finite() {
                return Err(Error::InvalidParameter(format!("trajectory weight {w}")));
            }
            let p = DensityMatrix::from_pure(psi)?.entries().clone();
            Ok((p, *w))
        })
        .collect::<Result<_>>()?;
    for (p, w) in &projectors {
        mean += p * C64::new(*w, 0.0);
        total_weight += w;
    }
    if !(total_weight > 0.0) {
        return Err(Error::InvalidParameter(
            "total trajectory weight is zero".into(),
        ));
    }
    mean /= C64::new(total_weight, 0.0);

    let mut var_re = DMatrix::<f64>::zeros(d, d);
    let mut var_im = DMatrix::<f64>::zeros(d, d);
    for (p, w) in &projectors {
        let w2 = w * w;
        for j in 0..d {
            for i in 0..d {
                let dz = p[(i, j)] - mean[(i, j)];
                var_re[(i, j)] += w2 * dz.re * dz.re;
                var_im[(i, j)] += w2 * dz.im * dz.im;
            }
        }
    }
    let norm = total_weight * total_weight;
    let std_error = DMatrix::from_fn(d, d, |i, j| {
        ((var_re[(i, j)] + var_im[(i, j)]) / norm).sqrt()
    });
    let mean = (&mean + mean.adjoint()) * C64::new(0.5, 0.0);
    Ok(EnsembleEstimate {
        rho: DensityMatrix::from_entries_unchecked(mean),
        std_error,
        n_samples: trajectories.len(),
    })
}
