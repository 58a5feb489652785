//! Exact sampling of measurement readouts.
//!
//! With `phi = exp(-i H dt/2) psi / ||psi||` and `c_n` the coefficients of
//! `phi` in the eigenbasis of `A`, the one-step readout density (Lebesgue
//! measure) is the Gaussian mixture
//!
//! ```text
//! p(a) = sum_n |c_n|^2 sqrt(2 kappa dt / pi) exp(-2 kappa dt (a - lambda_n)^2)
//! ```
//!
//! so a step draws a component `n` with probability `|c_n|^2` and then
//! `a ~ Normal(lambda_n, 1 / (4 kappa dt))`. Chaining the exact conditionals
//! samples whole readouts from `P[a] d alpha` with uniform weights.
//!
//! # Random streams
//!
//! Every trajectory owns a [`SeededStream`]: a ChaCha20 generator
//! (`rand_chacha::ChaCha20Rng`) seeded with `seed_from_u64(seed)` and
//! switched to stream `stream_id` with `set_stream`. Each step consumes one
//! uniform `f64` (component choice) followed by one standard normal
//! (`rand_distr::StandardNormal`). The identifier [`GENERATOR`] is recorded
//! in run manifests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::selective::{readout_sigma, KrausStepper};
use crate::types::{CVector, MeasurementSpec, Operator, Readout, StateVector, C64};

/// Name and version of the random stream construction.
pub const GENERATOR: &str = "chacha20-seed_from_u64-set_stream/v1";

/// Deterministic random stream identified by `(seed, stream_id)`.
#[derive(Clone, Debug)]
pub struct SeededStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha20Rng,
}

impl SeededStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }
}

/// One sampled measurement record and the state it leaves behind.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub readout: Readout,
    /// Normalized conditioned states, every `record_every` steps (empty if
    /// not requested). Entry 0 is the initial state.
    pub states: Vec<StateVector>,
    /// Normalized conditioned state at `T`.
    pub final_state: StateVector,
    /// Importance weight (log); zero for exact sampling.
    pub log_weight: f64,
    /// `ln P[a]`, the log density of the sampled readout.
    pub log_density: f64,
}

/// Readout sampler for fixed `H` and measurement parameters.
#[derive(Clone, Debug)]
pub struct ReadoutSampler {
    stepper: KrausStepper,
    spec: MeasurementSpec,
    sigma: f64,
}

impl ReadoutSampler {
    pub fn new(h: &Operator, spec: &MeasurementSpec) -> Result<Self> {
        h.require_dim(spec.dim())?;
        let kdt = spec.kappa() * spec.grid().dt();
        if !(kdt > 0.0) {
            return Err(Error::ZeroMeasurementStrength);
        }
        Ok(Self {
            stepper: KrausStepper::for_spec(h, spec)?,
            spec: spec.clone(),
            sigma: readout_sigma(spec.kappa(), spec.grid().dt()),
        })
    }

    pub fn spec(&self) -> &MeasurementSpec {
        &self.spec
    }

    /// Component probabilities `|c_n|^2` of the half-step-evolved state.
    pub fn component_weights(&self, psi: &CVector) -> Result<Vec<f64>> {
        let (_, coeffs) = self.half_step_coefficients(psi)?;
        let total: f64 = coeffs.iter().map(|z| z.norm_sqr()).sum();
        Ok(coeffs.iter().map(|z| z.norm_sqr() / total).collect())
    }

    fn half_step_coefficients(&self, psi: &CVector) -> Result<(f64, CVector)> {
        let phi = self.stepper.half_step() * psi;
        let coeffs = self.stepper.observable_eigen().vectors.adjoint() * phi;
        let total: f64 = coeffs.iter().map(|z| z.norm_sqr()).sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::ZeroNorm);
        }
        Ok((total, coeffs))
    }

    /// Draw `a_k` and return it with `M(a_k) psi` (not renormalized).
    pub fn step(&self, psi: &CVector, stream: &mut SeededStream) -> Result<(f64, CVector)> {
        let (total, mut coeffs) = self.half_step_coefficients(psi)?;
        let eigen = self.stepper.observable_eigen();
        let target = stream.uniform() * total;
        let mut acc = 0.0;
        let mut chosen = None;
        for (n, z) in coeffs.iter().enumerate() {
            let p = z.norm_sqr();
            if p > 0.0 {
                chosen = Some(n);
                acc += p;
                if target < acc {
                    break;
                }
            }
        }
        let n = chosen.ok_or(Error::ZeroNorm)?;
        let a = eigen.values[n] + self.sigma * stream.standard_normal();
        let factors = self.stepper.damping(a)?;
        for (c, f) in coeffs.iter_mut().zip(&factors) {
            *c *= *f;
        }
        let next = self.stepper.half_step() * (&eigen.vectors * coeffs);
        Ok((a, next))
    }

    /// Sample a full readout; states are renormalized after every step.
    pub fn trajectory(
        &self,
        psi0: &StateVector,
        stream: &mut SeededStream,
        record_every: Option<usize>,
    ) -> Result<Trajectory> {
        psi0.require_dim(self.spec.dim())?;
        let n0 = psi0.norm_squared();
        if (n0 - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidParameter(format!(
                "initial state must be normalized, |psi|^2 = {n0}"
            )));
        }
        let grid = *self.spec.grid();
        let mut values = Vec::with_capacity(grid.steps());
        let mut states = Vec::new();
        let record_every = record_every.filter(|&k| k > 0);
        if record_every.is_some() {
            states.push(psi0.clone());
        }
        let mut psi = psi0.amplitudes().clone();
        let mut log_density = 0.0;
        for k in 1..=grid.steps() {
            let (a, next) = self.step(&psi, stream)?;
            let norm_sq: f64 = next.iter().map(|z| z.norm_sqr()).sum();
            if !(norm_sq > 0.0) || !norm_sq.is_finite() {
                return Err(Error::ZeroNorm);
            }
            log_density += norm_sq.ln();
            psi = next / C64::new(norm_sq.sqrt(), 0.0);
            values.push(a);
            if let Some(every) = record_every {
                if k % every == 0 || k == grid.steps() {
                    states.push(StateVector::new(psi.clone())?);
                }
            }
        }
        Ok(Trajectory {
            readout: Readout::new(grid, values)?,
            states,
            final_state: StateVector::new(psi)?,
            log_weight: 0.0,
            log_density,
        })
    }

    /// Trajectories `0..n_traj`, trajectory `i` on stream `i`, in stream order.
    pub fn ensemble(
        &self,
        psi0: &StateVector,
        n_traj: usize,
        seed: u64,
    ) -> Result<Vec<Trajectory>> {
        if n_traj == 0 {
            return Err(Error::InvalidParameter("n_traj must be >= 1".into()));
        }
        (0..n_traj as u64)
            .into_par_iter()
            .map(|i| self.trajectory(psi0, &mut SeededStream::new(seed, i), None))
            .collect()
    }
}

/// Draw one readout value from the exact one-step density and apply `M(a_k)`.
pub fn sample_step(
    psi: &StateVector,
    spec: &MeasurementSpec,
    h: &Operator,
    stream: &mut SeededStream,
) -> Result<(f64, StateVector)> {
    psi.require_dim(spec.dim())?;
    let (a, next) = ReadoutSampler::new(h, spec)?.step(psi.amplitudes(), stream)?;
    Ok((a, StateVector::new(next)?))
}

pub fn sample_trajectory(
    psi0: &StateVector,
    spec: &MeasurementSpec,
    h: &Operator,
    stream: &mut SeededStream,
) -> Result<Trajectory> {
    ReadoutSampler::new(h, spec)?.trajectory(psi0, stream, None)
}

/// Independent trajectories on streams `0..n_traj` of `seed`, ordered by
/// stream id. The result does not depend on the rayon thread count.
pub fn run_ensemble(
    psi0: &StateVector,
    spec: &MeasurementSpec,
    h: &Operator,
    n_traj: usize,
    seed: u64,
) -> Result<Vec<Trajectory>> {
    ReadoutSampler::new(h, spec)?.ensemble(psi0, n_traj, seed)
}

/// Pairs `(final_state, weight)` for [`crate::nonselective::ensemble_average`].
pub fn weighted_final_states(trajectories: &[Trajectory]) -> Vec<(StateVector, f64)> {
    trajectories
        .iter()
        .map(|t| (t.final_state.clone(), t.log_weight.exp()))
        .collect()
}
