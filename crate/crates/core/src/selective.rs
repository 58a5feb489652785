//! Evolution conditioned on a known readout.
//!
//! For a piecewise-constant readout `a_k` the state obeys
//! `d psi/dt = (-i H - kappa (A - a_k)^2) psi` on step `k`. One step is
//! approximated by the symmetric splitting
//!
//! ```text
//! M(a) = exp(-i H dt/2) exp(-kappa dt (A - a)^2) exp(-i H dt/2)
//! ```
//!
//! with both factors computed exactly in the relevant eigenbasis. The
//! conditioned state after the readout is `psi_T = M(a_N) ... M(a_1) psi_0`
//! and its squared norm is the probability density of the readout with
//! respect to the product measure `prod_k sqrt(2 kappa dt / pi) da_k`.

use log::warn;
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::linalg::{
    eigendecompose, matrix_exponential, singular_values, spectral_norm, Eigendecomposition,
    EXPONENT_LIMIT,
};
use crate::types::{CMatrix, CVector, MeasurementSpec, Operator, Readout, StateVector, C64};

/// Per-step damping bound used to choose a default step count:
/// `kappa dt (lambda_max - lambda_min)^2 <= 0.1`.
pub const DEFAULT_DAMPING_PER_STEP: f64 = 0.1;

/// `H - i kappa (A - a)^2` for a fixed readout value `a`.
#[derive(Clone, Debug, PartialEq)]
pub struct EffectiveHamiltonian {
    entries: CMatrix,
}

impl EffectiveHamiltonian {
    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    /// Generator of the exact short-time step, `exp(-i H_eff dt)`.
    pub fn exact_step(&self, dt: f64) -> Result<Operator> {
        let op = Operator::new(self.entries.clone())?;
        matrix_exponential(&op, C64::new(0.0, -dt))
    }
}

pub fn effective_hamiltonian(
    h: &Operator,
    observable: &Operator,
    a: f64,
    kappa: f64,
) -> Result<EffectiveHamiltonian> {
    h.require_hermitian()?;
    observable.require_hermitian()?;
    observable.require_dim(h.dim())?;
    check_kappa(kappa)?;
    let d = h.dim();
    let shifted = observable.entries() - CMatrix::identity(d, d) * C64::new(a, 0.0);
    let damping = &shifted * &shifted;
    Ok(EffectiveHamiltonian {
        entries: h.entries() - damping * C64::new(0.0, kappa),
    })
}

fn check_kappa(kappa: f64) -> Result<()> {
    if kappa >= 0.0 && kappa.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "kappa must be finite and >= 0, got {kappa}"
        )))
    }
}

/// Precomputed factors of the split step for fixed `H`, `A`, `kappa`, `dt`.
///
/// Building one is O(d^3); applying it to a state is O(d^2).
#[derive(Clone, Debug)]
pub struct KrausStepper {
    eigen: Eigendecomposition,
    half_step: CMatrix,
    kappa: f64,
    dt: f64,
}

impl KrausStepper {
    pub fn new(h: &Operator, observable: &Operator, kappa: f64, dt: f64) -> Result<Self> {
        h.require_hermitian()?;
        observable.require_dim(h.dim())?;
        check_kappa(kappa)?;
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "dt must be positive, got {dt}"
            )));
        }
        let eigen = eigendecompose(observable)?;
        let half_step = eigendecompose(h)?.map_values(|e| C64::from_polar(1.0, -0.5 * e * dt));
        Ok(Self {
            eigen,
            half_step,
            kappa,
            dt,
        })
    }

    pub fn for_spec(h: &Operator, spec: &MeasurementSpec) -> Result<Self> {
        Self::new(h, spec.observable(), spec.kappa(), spec.grid().dt())
    }

    pub fn dim(&self) -> usize {
        self.eigen.dim()
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Eigenvalues (ascending) and eigenvectors of the observable.
    pub fn observable_eigen(&self) -> &Eigendecomposition {
        &self.eigen
    }

    /// `exp(-i H dt / 2)`.
    pub fn half_step(&self) -> &CMatrix {
        &self.half_step
    }

    /// Diagonal of `exp(-kappa dt (A - a)^2)` in the observable eigenbasis.
    pub fn damping(&self, a: f64) -> Result<Vec<f64>> {
        let kdt = self.kappa * self.dt;
        self.eigen
            .values
            .iter()
            .map(|&lambda| {
                let x = kdt * (lambda - a) * (lambda - a);
                if x > EXPONENT_LIMIT {
                    Err(Error::Range { magnitude: x })
                } else {
                    Ok((-x).exp())
                }
            })
            .collect()
    }

    /// Apply the damping factor to a vector already in the lab basis.
    pub(crate) fn apply_damping(&self, v: &CVector, a: f64) -> Result<CVector> {
        let factors = self.damping(a)?;
        let mut coeffs = self.eigen.vectors.adjoint() * v;
        for (c, f) in coeffs.iter_mut().zip(&factors) {
            *c *= *f;
        }
        Ok(&self.eigen.vectors * coeffs)
    }

    /// `M(a) psi`.
    pub fn apply(&self, psi: &CVector, a: f64) -> Result<CVector> {
        let half = &self.half_step * psi;
        let damped = self.apply_damping(&half, a)?;
        Ok(&self.half_step * damped)
    }

    /// `M(a)` as a matrix.
    pub fn matrix(&self, a: f64) -> Result<CMatrix> {
        let factors = self.damping(a)?;
        let damping = self.eigen.map_indexed(|k| C64::new(factors[k], 0.0));
        Ok(&self.half_step * damping * &self.half_step)
    }
}

/// Split short-time step operator `M(a_k)` for the non-Hermitian equation.
pub fn step_kraus(
    h: &Operator,
    observable: &Operator,
    a_k: f64,
    kappa: f64,
    dt: f64,
) -> Result<Operator> {
    Operator::new(KrausStepper::new(h, observable, kappa, dt)?.matrix(a_k)?)
}

/// Step count satisfying `kappa dt (lambda_max - lambda_min)^2 <= 0.1`.
pub fn default_steps(observable: &Operator, kappa: f64, duration: f64) -> Result<usize> {
    let values = eigendecompose(observable)?.values;
    let spread = values[values.len() - 1] - values[0];
    let n = (kappa * duration * spread * spread / DEFAULT_DAMPING_PER_STEP).ceil();
    if !n.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "cannot choose a step count for kappa={kappa}, T={duration}"
        )));
    }
    Ok((n as usize).max(1))
}

fn require_normalized(psi: &StateVector) -> Result<()> {
    let n = psi.norm_squared();
    if (n - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidParameter(format!(
            "initial state must be normalized, |psi|^2 = {n}"
        )));
    }
    Ok(())
}

/// Conditioned state `psi_T` for a known readout (unnormalized).
pub fn propagate_selective(
    psi0: &StateVector,
    readout: &Readout,
    spec: &MeasurementSpec,
    h: &Operator,
) -> Result<StateVector> {
    spec.require_grid(readout)?;
    h.require_dim(spec.dim())?;
    psi0.require_dim(spec.dim())?;
    require_normalized(psi0)?;
    let stepper = KrausStepper::for_spec(h, spec)?;
    let mut psi = psi0.amplitudes().clone();
    for &a in readout.values() {
        psi = stepper.apply(&psi, a)?;
    }
    StateVector::new(psi)
}

/// Linear map carrying `psi_0` to the conditioned state for one readout.
#[derive(Clone, Debug, PartialEq)]
pub struct PartialPropagator {
    entries: CMatrix,
}

impl PartialPropagator {
    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn apply(&self, psi: &StateVector) -> Result<StateVector> {
        psi.require_dim(self.dim())?;
        StateVector::new(&self.entries * psi.amplitudes())
    }

    /// Singular values, descending. All are at most one.
    pub fn singular_values(&self) -> Vec<f64> {
        singular_values(&self.entries)
    }

    /// Propagator for `self` followed by `later`.
    pub fn then(&self, later: &PartialPropagator) -> PartialPropagator {
        PartialPropagator {
            entries: &later.entries * &self.entries,
        }
    }
}

pub fn partial_propagator(
    readout: &Readout,
    spec: &MeasurementSpec,
    h: &Operator,
) -> Result<PartialPropagator> {
    spec.require_grid(readout)?;
    h.require_dim(spec.dim())?;
    let stepper = KrausStepper::for_spec(h, spec)?;
    let d = spec.dim();
    let mut u = CMatrix::identity(d, d);
    for &a in readout.values() {
        u = stepper.matrix(a)? * u;
    }
    Ok(PartialPropagator { entries: u })
}

/// `||psi_T||^2`: density of the readout with respect to the product
/// measure `prod_k sqrt(2 kappa dt / pi) da_k`.
pub fn readout_probability_density(psi_t: &StateVector) -> f64 {
    psi_t.norm_squared()
}

/// Nodes and weights of a one-dimensional quadrature over readout values.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn new(nodes: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::Empty("quadrature nodes"));
        }
        if nodes.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: nodes.len(),
                found: weights.len(),
            });
        }
        if nodes.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidParameter(
                "quadrature nodes must increase".into(),
            ));
        }
        Ok(Self { nodes, weights })
    }

    /// Composite trapezoid rule with `n` nodes on `[lo, hi]`.
    pub fn trapezoid(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if n < 2 || !(hi > lo) {
            return Err(Error::InvalidParameter(format!(
                "trapezoid rule needs n >= 2 and lo < hi (n={n}, [{lo}, {hi}])"
            )));
        }
        let h = (hi - lo) / (n - 1) as f64;
        let nodes = (0..n).map(|i| lo + h * i as f64).collect();
        let weights = (0..n)
            .map(|i| if i == 0 || i == n - 1 { 0.5 * h } else { h })
            .collect();
        Self::new(nodes, weights)
    }

    /// Trapezoid rule on `[lambda_min - w sigma, lambda_max + w sigma]`
    /// where `sigma = 1 / sqrt(4 kappa dt)` is the spread of the per-step
    /// readout around each eigenvalue.
    pub fn covering(
        eigenvalues: &[f64],
        kappa: f64,
        dt: f64,
        width_sigmas: f64,
        n: usize,
    ) -> Result<Self> {
        if !(kappa * dt > 0.0) {
            return Err(Error::ZeroMeasurementStrength);
        }
        let sigma = readout_sigma(kappa, dt);
        let lo = eigenvalues.iter().copied().fold(f64::INFINITY, f64::min) - width_sigmas * sigma;
        let hi = eigenvalues
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
            + width_sigmas * sigma;
        Self::trapezoid(lo, hi, n)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn lower(&self) -> f64 {
        self.nodes[0]
    }

    pub fn upper(&self) -> f64 {
        self.nodes[self.nodes.len() - 1]
    }

    fn max_spacing(&self) -> f64 {
        self.nodes
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }

    /// Largest Gaussian mass, over the given centres, falling outside the
    /// rule's interval.
    pub fn tail_mass(&self, centres: &[f64], sigma: f64) -> f64 {
        let s = sigma * std::f64::consts::SQRT_2;
        centres
            .iter()
            .map(|&c| 0.5 * erfc((c - self.lower()) / s) + 0.5 * erfc((self.upper() - c) / s))
            .fold(0.0, f64::max)
    }
}

/// Standard deviation of the per-step readout around an eigenvalue,
/// `1 / sqrt(4 kappa dt)`.
pub fn readout_sigma(kappa: f64, dt: f64) -> f64 {
    1.0 / (4.0 * kappa * dt).sqrt()
}

/// Density of the per-step readout measure, `sqrt(2 kappa dt / pi)`.
pub fn readout_measure_density(kappa: f64, dt: f64) -> f64 {
    (2.0 * kappa * dt / std::f64::consts::PI).sqrt()
}

/// Which short-time operator a unitarity check integrates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KrausForm {
    /// The split step `M(a)` used by all propagators.
    Split,
    /// The unsplit step `exp(-i H_eff dt)`.
    Exact,
}

/// Outcome of [`check_generalized_unitarity`].
#[derive(Clone, Debug, PartialEq)]
pub struct UnitarityReport {
    /// `|| sum_q w_q M(a_q)^dagger M(a_q) - I ||` (spectral norm) for one step.
    pub single_step: f64,
    /// Same for the nested two-step product, when the grid has `N >= 2`.
    pub two_step: Option<f64>,
    /// Gaussian readout mass outside the quadrature interval.
    pub tail_mass: f64,
    /// Largest node spacing in units of the readout spread.
    pub spacing_sigmas: f64,
    pub under_resolved: bool,
}

/// Residual of `integral da M(a)^dagger M(a) = I` under the readout
/// measure, evaluated with `quadrature`.
pub fn check_generalized_unitarity(
    spec: &MeasurementSpec,
    h: &Operator,
    quadrature: &QuadratureRule,
    form: KrausForm,
) -> Result<UnitarityReport> {
    h.require_dim(spec.dim())?;
    let kappa = spec.kappa();
    let dt = spec.grid().dt();
    if !(kappa * dt > 0.0) {
        return Err(Error::ZeroMeasurementStrength);
    }
    let stepper = KrausStepper::for_spec(h, spec)?;
    let sigma = readout_sigma(kappa, dt);
    let tail_mass = quadrature.tail_mass(&stepper.observable_eigen().values, sigma);
    let spacing_sigmas = quadrature.max_spacing() / sigma;
    let under_resolved = tail_mass > 1e-10 || spacing_sigmas > 0.5;
    if under_resolved {
        warn!(
            "quadrature under-resolved: tail mass {tail_mass:.3e}, node spacing {spacing_sigmas:.3} sigma"
        );
    }

    let density = readout_measure_density(kappa, dt);
    let kraus: Vec<CMatrix> = quadrature
        .nodes()
        .iter()
        .map(|&a| match form {
            KrausForm::Split => stepper.matrix(a),
            KrausForm::Exact => effective_hamiltonian(h, spec.observable(), a, kappa)?
                .exact_step(dt)
                .map(Operator::into_entries),
        })
        .collect::<Result<_>>()?;
    let weights: Vec<f64> = quadrature.weights().iter().map(|w| w * density).collect();

    let d = spec.dim();
    let identity = CMatrix::identity(d, d);
    let mut sum = CMatrix::zeros(d, d);
    for (m, &w) in kraus.iter().zip(&weights) {
        sum += m.adjoint() * m * C64::new(w, 0.0);
    }
    let single_step = spectral_norm(&(sum - &identity));

    let two_step = if spec.grid().steps() >= 2 {
        let mut sum = CMatrix::zeros(d, d);
        for (m1, &w1) in kraus.iter().zip(&weights) {
            for (m2, &w2) in kraus.iter().zip(&weights) {
                let p = m2 * m1;
                sum += p.adjoint() * p * C64::new(w1 * w2, 0.0);
            }
        }
        Some(spectral_norm(&(sum - &identity)))
    } else {
        None
    };

    Ok(UnitarityReport {
        single_step,
        two_step,
        tail_mass,
        spacing_sigmas,
        under_resolved,
    })
}
