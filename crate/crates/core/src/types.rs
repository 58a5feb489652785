//! Domain types: operators, states, density matrices, time grids, readouts
//! and the parameters of a continuous measurement.
//!
//! All types are immutable after construction. Units use hbar = 1.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Largest element-wise deviation from Hermiticity accepted by [`Operator::hermitian`].
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Trace tolerance for a normalized [`DensityMatrix`].
pub const TRACE_TOL: f64 = 1e-10;

/// Maximum of `|m_ij - conj(m_ji)|` over all entries.
pub fn max_asymmetry(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

fn check_square(m: &CMatrix) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    if m.nrows() == 0 {
        return Err(Error::EmptyDimension);
    }
    Ok(())
}

/// Dense complex square matrix with a Hermiticity certificate.
///
/// The certificate is validated once, at construction.
#[derive(Clone, Debug, PartialEq)]
pub struct Operator {
    entries: CMatrix,
    hermitian: bool,
}

impl Operator {
    /// A general (not certified Hermitian) operator.
    pub fn new(entries: CMatrix) -> Result<Self> {
        check_square(&entries)?;
        Ok(Self {
            entries,
            hermitian: false,
        })
    }

    /// A certified Hermitian operator; rejects inputs whose asymmetry exceeds
    /// [`HERMITIAN_TOL`].
    pub fn hermitian(entries: CMatrix) -> Result<Self> {
        check_square(&entries)?;
        let asymmetry = max_asymmetry(&entries);
        if !(asymmetry <= HERMITIAN_TOL) {
            return Err(Error::NotHermitian { asymmetry });
        }
        Ok(Self {
            entries,
            hermitian: true,
        })
    }

    /// Row-major real matrix, certified Hermitian if symmetric.
    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self> {
        let n = rows.len();
        let m = CMatrix::from_fn(n, n, |i, j| C64::new(rows[i][j], 0.0));
        Self::hermitian(m)
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Result<Self> {
        let v = DVector::from_iterator(diag.len(), diag.iter().map(|&x| C64::new(x, 0.0)));
        Self::hermitian(CMatrix::from_diagonal(&v))
    }

    pub fn identity(dim: usize) -> Result<Self> {
        Self::hermitian(CMatrix::identity(dim, dim))
    }

    pub fn zeros(dim: usize) -> Result<Self> {
        Self::hermitian(CMatrix::zeros(dim, dim))
    }

    pub fn pauli_x() -> Self {
        Self::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]]).expect("pauli x")
    }

    pub fn pauli_y() -> Self {
        let i = C64::i();
        let z = C64::new(0.0, 0.0);
        Self::hermitian(CMatrix::from_row_slice(2, 2, &[z, -i, i, z])).expect("pauli y")
    }

    pub fn pauli_z() -> Self {
        Self::from_real_diagonal(&[1.0, -1.0]).expect("pauli z")
    }

    /// Drive Hamiltonian `(omega/2) sigma_x`.
    pub fn rabi(omega: f64) -> Self {
        Self::hermitian(Self::pauli_x().entries * C64::new(omega / 2.0, 0.0)).expect("rabi")
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    pub fn into_entries(self) -> CMatrix {
        self.entries
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub(crate) fn require_hermitian(&self) -> Result<()> {
        if self.hermitian {
            Ok(())
        } else {
            Err(Error::NotHermitian {
                asymmetry: max_asymmetry(&self.entries),
            })
        }
    }

    pub(crate) fn require_dim(&self, dim: usize) -> Result<()> {
        if self.dim() == dim {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: dim,
                found: self.dim(),
            })
        }
    }
}

/// Complex state vector. The norm is not required to be one: states
/// conditioned on a readout decay, and their squared norm is a probability
/// density.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    amplitudes: CVector,
}

impl StateVector {
    pub fn new(amplitudes: CVector) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(Error::EmptyDimension);
        }
        Ok(Self { amplitudes })
    }

    pub fn from_slice(amplitudes: &[C64]) -> Result<Self> {
        Self::new(CVector::from_column_slice(amplitudes))
    }

    /// Computational basis vector `|k>`.
    pub fn basis(dim: usize, k: usize) -> Result<Self> {
        if k >= dim {
            return Err(Error::InvalidParameter(format!(
                "basis index {k} out of range for dimension {dim}"
            )));
        }
        let mut v = CVector::zeros(dim);
        v[k] = C64::new(1.0, 0.0);
        Self::new(v)
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> CVector {
        self.amplitudes
    }

    pub fn norm_squared(&self) -> f64 {
        crate::linalg::norm_squared(self)
    }

    /// Copy scaled to unit norm.
    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm_squared().sqrt();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::ZeroNorm);
        }
        Ok(Self {
            amplitudes: &self.amplitudes / C64::new(n, 0.0),
        })
    }

    pub(crate) fn require_dim(&self, dim: usize) -> Result<()> {
        if self.dim() == dim {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                expected: dim,
                found: self.dim(),
            })
        }
    }
}

/// Hermitian, unit-trace density matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    entries: CMatrix,
}

impl DensityMatrix {
    /// Validates Hermiticity within [`HERMITIAN_TOL`] and unit trace within
    /// [`TRACE_TOL`]. Positivity is not checked here; see
    /// [`crate::linalg::min_eigenvalue`].
    pub fn new(entries: CMatrix) -> Result<Self> {
        check_square(&entries)?;
        let asymmetry = max_asymmetry(&entries);
        if !(asymmetry <= HERMITIAN_TOL) {
            return Err(Error::NotHermitian { asymmetry });
        }
        let tr = entries.trace();
        if !((tr.re - 1.0).abs() <= TRACE_TOL && tr.im.abs() <= TRACE_TOL) {
            return Err(Error::InvalidParameter(format!(
                "density matrix trace {} + {}i differs from 1",
                tr.re, tr.im
            )));
        }
        Ok(Self { entries })
    }

    pub(crate) fn from_entries_unchecked(entries: CMatrix) -> Self {
        Self { entries }
    }

    /// `|psi><psi| / <psi|psi>`.
    pub fn from_pure(psi: &StateVector) -> Result<Self> {
        let psi = psi.normalized()?;
        let a = psi.amplitudes();
        Ok(Self {
            entries: a * a.adjoint(),
        })
    }

    pub fn maximally_mixed(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::EmptyDimension);
        }
        Ok(Self {
            entries: CMatrix::identity(dim, dim) / C64::new(dim as f64, 0.0),
        })
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    pub fn trace(&self) -> C64 {
        self.entries.trace()
    }

    pub fn purity(&self) -> f64 {
        crate::linalg::purity(self)
    }

    /// `<k|rho|k>`.
    pub fn population(&self, k: usize) -> f64 {
        self.entries[(k, k)].re
    }
}

/// Uniform time grid on `[0, T]` with `N` steps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    duration: f64,
    steps: usize,
    dt: f64,
}

impl TimeGrid {
    pub fn new(duration: f64, steps: usize) -> Result<Self> {
        if !(duration > 0.0) || !duration.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "duration T must be positive and finite, got {duration}"
            )));
        }
        if steps == 0 {
            return Err(Error::InvalidParameter("step count N must be >= 1".into()));
        }
        Ok(Self {
            duration,
            steps,
            dt: duration / steps as f64,
        })
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Start time of step `k` (and `T` for `k = N`).
    pub fn time(&self, k: usize) -> f64 {
        if k == self.steps {
            self.duration
        } else {
            k as f64 * self.dt
        }
    }

    /// Same duration, `factor` times as many steps.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        Self::new(self.duration, self.steps * factor)
    }
}

/// Piecewise-constant measurement readout: `values[k]` is the readout on step `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct Readout {
    grid: TimeGrid,
    values: Vec<f64>,
}

impl Readout {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.steps() {
            return Err(Error::DimensionMismatch {
                expected: grid.steps(),
                found: values.len(),
            });
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "non-finite readout value {bad}"
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: TimeGrid, value: f64) -> Result<Self> {
        Self::new(grid, vec![value; grid.steps()])
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Time average `(1/T) * integral of a(t) dt`.
    pub fn time_average(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// The same curve on a grid with `factor` times as many steps.
    pub fn refined(&self, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(Error::InvalidParameter(
                "refinement factor must be >= 1".into(),
            ));
        }
        let values = self
            .values
            .iter()
            .flat_map(|&v| std::iter::repeat_n(v, factor))
            .collect();
        Self::new(self.grid.refined(factor)?, values)
    }

    /// Split into the readouts on `[0, t_k)` and `[t_k, T]`.
    pub fn split_at(&self, k: usize) -> Result<(Self, Self)> {
        if k == 0 || k >= self.values.len() {
            return Err(Error::InvalidParameter(format!(
                "split index {k} must lie strictly inside 0..{}",
                self.values.len()
            )));
        }
        let dt = self.grid.dt();
        let n = self.values.len();
        let first = Self::new(TimeGrid::new(dt * k as f64, k)?, self.values[..k].to_vec())?;
        let second = Self::new(
            TimeGrid::new(dt * (n - k) as f64, n - k)?,
            self.values[k..].to_vec(),
        )?;
        Ok((first, second))
    }
}

/// Observable, resolution and time grid of a continuous measurement.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementSpec {
    observable: Operator,
    kappa: f64,
    grid: TimeGrid,
}

impl MeasurementSpec {
    pub fn new(observable: Operator, kappa: f64, grid: TimeGrid) -> Result<Self> {
        observable.require_hermitian()?;
        if !(kappa >= 0.0) || !kappa.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "kappa must be finite and >= 0, got {kappa}"
            )));
        }
        Ok(Self {
            observable,
            kappa,
            grid,
        })
    }

    pub fn observable(&self) -> &Operator {
        &self.observable
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.observable.dim()
    }

    pub fn with_grid(&self, grid: TimeGrid) -> Self {
        Self {
            grid,
            ..self.clone()
        }
    }

    pub fn with_kappa(&self, kappa: f64) -> Result<Self> {
        Self::new(self.observable.clone(), kappa, self.grid)
    }

    /// Measurement error achieved over the whole duration, `1 / (kappa T)`.
    pub fn resolution_error_squared(&self) -> f64 {
        1.0 / (self.kappa * self.grid.duration())
    }

    /// Variance of the time-averaged readout for an eigenstate of the
    /// observable under the Gaussian readout measure: `1 / (4 kappa T)`.
    ///
    /// Differs from [`Self::resolution_error_squared`] by the factor 1/4
    /// fixed by the normalization of the per-step readout measure.
    pub fn readout_mean_variance(&self) -> f64 {
        0.25 / (self.kappa * self.grid.duration())
    }

    pub(crate) fn require_grid(&self, readout: &Readout) -> Result<()> {
        let (g, r) = (&self.grid, readout.grid());
        let same_t = (g.duration() - r.duration()).abs() <= 1e-12 * g.duration().max(1.0);
        if same_t && g.steps() == r.steps() {
            Ok(())
        } else {
            Err(Error::GridMismatch {
                readout_t: r.duration(),
                readout_n: r.steps(),
                spec_t: g.duration(),
                spec_n: g.steps(),
            })
        }
    }
}
