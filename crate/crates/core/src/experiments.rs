//! Canned experiments on continuously measured systems.
//!
//! Each experiment returns typed rows plus a [`Table`] view for CSV output.
//! All are deterministic given their seed.

use std::f64::consts::PI;

use crate::cli::output::{Cell, Series, Table};
use crate::error::{Error, Result};
use crate::linalg::{commutator, eigendecompose, spectral_norm, Eigendecomposition};
use crate::nonselective::{propagate_master, propagate_master_series};
use crate::sampler::run_ensemble;
use crate::selective::{default_steps, propagate_selective};
use crate::types::{
    CVector, DensityMatrix, MeasurementSpec, Operator, Readout, StateVector, TimeGrid, C64,
};

/// Default measurement strengths for the Zeno experiment, in units of the
/// Rabi frequency.
pub const ZENO_KAPPA_RATIOS: [f64; 7] = [0.0, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0];

/// Largest `dt * (E_max - E_min)` used when choosing step counts.
pub const HAMILTONIAN_PHASE_PER_STEP: f64 = 0.02;

/// Names accepted by the CLI `experiment` modes.
pub const EXPERIMENTS: [(&str, &str); 4] = [
    (
        "zeno",
        "survival of |+z> under a Rabi drive versus measurement strength",
    ),
    (
        "decoherence",
        "fitted off-diagonal decay rates versus kappa (dlambda)^2 / 2",
    ),
    (
        "error_scaling",
        "variance of the time-averaged readout versus duration",
    ),
    (
        "projective_limit",
        "collapse fraction and Born-rule deviation versus kappa",
    ),
];

/// Independent seed for sub-run `index` of an experiment.
pub fn derive_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_add((index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Step count resolving both the measurement damping and the Hamiltonian
/// phase: `kappa dt (dlambda)^2 <= 0.1` and `dt (dE) <= 0.02`.
pub fn resolved_steps(
    h: &Operator,
    observable: &Operator,
    kappa: f64,
    duration: f64,
) -> Result<usize> {
    let energies = eigendecompose(h)?.values;
    let spread = energies[energies.len() - 1] - energies[0];
    let phase_steps = (duration * spread / HAMILTONIAN_PHASE_PER_STEP).ceil() as usize;
    Ok(default_steps(observable, kappa, duration)?
        .max(phase_steps)
        .max(1))
}

fn mean_and_std_error(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Ordinary least-squares slope and intercept of `y` against `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

// ---------------------------------------------------------------- Zeno

#[derive(Clone, Debug, PartialEq)]
pub struct ZenoRow {
    pub kappa: f64,
    pub steps: usize,
    /// Population of `|+z>` at `T` from the master equation.
    pub survival_master: f64,
    /// Same from the trajectory ensemble (NaN when no trajectories were run).
    pub survival_ensemble: f64,
    pub ensemble_std_error: f64,
}

fn zeno_setup(omega: f64, kappa: f64, duration: f64) -> Result<(Operator, MeasurementSpec)> {
    let h = Operator::rabi(omega);
    let a = Operator::pauli_z();
    let steps = resolved_steps(&h, &a, kappa, duration)?;
    let spec = MeasurementSpec::new(a, kappa, TimeGrid::new(duration, steps)?)?;
    Ok((h, spec))
}

/// Master-equation survival of `|+z>` after `duration` under `(omega/2) sigma_x`
/// with `sigma_z` monitored at strength `kappa`.
pub fn zeno_survival(omega: f64, kappa: f64, duration: f64) -> Result<f64> {
    let (h, spec) = zeno_setup(omega, kappa, duration)?;
    let rho0 = DensityMatrix::from_pure(&StateVector::basis(2, 0)?)?;
    Ok(propagate_master(&rho0, &spec, &h)?.population(0))
}

/// Quantum Zeno freezing: survival of `|+z>` versus measurement strength.
///
/// `n_traj = 0` skips the trajectory estimate.
pub fn zeno_experiment(
    omega: f64,
    kappas: &[f64],
    duration: f64,
    n_traj: usize,
    seed: u64,
) -> Result<Vec<ZenoRow>> {
    if !(omega > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "Rabi frequency must be positive, got {omega}"
        )));
    }
    if kappas.is_empty() {
        return Err(Error::Empty("kappa list"));
    }
    let psi0 = StateVector::basis(2, 0)?;
    kappas
        .iter()
        .enumerate()
        .map(|(i, &kappa)| {
            let (h, spec) = zeno_setup(omega, kappa, duration)?;
            let rho0 = DensityMatrix::from_pure(&psi0)?;
            let survival_master = propagate_master(&rho0, &spec, &h)?.population(0);
            let (survival_ensemble, ensemble_std_error) = if n_traj == 0 {
                (f64::NAN, f64::NAN)
            } else if kappa == 0.0 {
                let readout = Readout::constant(*spec.grid(), 0.0)?;
                let psi = propagate_selective(&psi0, &readout, &spec, &h)?;
                (psi.amplitudes()[0].norm_sqr(), 0.0)
            } else {
                let trajs = run_ensemble(&psi0, &spec, &h, n_traj, derive_seed(seed, i))?;
                let pops: Vec<f64> = trajs
                    .iter()
                    .map(|t| t.final_state.amplitudes()[0].norm_sqr())
                    .collect();
                mean_and_std_error(&pops)
            };
            Ok(ZenoRow {
                kappa,
                steps: spec.grid().steps(),
                survival_master,
                survival_ensemble,
                ensemble_std_error,
            })
        })
        .collect()
}

/// Large-measurement-strength survival, doubling `kappa / omega` from 40
/// until successive values differ by less than `tol`.
pub fn zeno_freezing_limit(omega: f64, duration: f64, tol: f64) -> Result<f64> {
    let mut ratio = 40.0;
    let mut prev = zeno_survival(omega, ratio * omega, duration)?;
    while ratio < 1e5 {
        ratio *= 2.0;
        let next = zeno_survival(omega, ratio * omega, duration)?;
        if (next - prev).abs() < tol {
            return Ok(next);
        }
        prev = next;
    }
    Ok(prev)
}

pub fn zeno_table(rows: &[ZenoRow]) -> Table {
    let mut t = Table::new(&[
        "kappa",
        "steps",
        "survival_master",
        "survival_ensemble",
        "ensemble_std_error",
    ]);
    for r in rows {
        t.push(vec![
            Cell::Float(r.kappa),
            Cell::Int(r.steps as i64),
            Cell::Float(r.survival_master),
            Cell::Float(r.survival_ensemble),
            Cell::Float(r.ensemble_std_error),
        ]);
    }
    t
}

pub fn zeno_series(rows: &[ZenoRow]) -> Vec<Series> {
    vec![Series::new(
        "master equation",
        rows.iter().map(|r| (r.kappa, r.survival_master)).collect(),
    )]
}

/// Default Zeno duration: one full flip at zero measurement strength.
pub fn zeno_default_duration(omega: f64) -> f64 {
    PI / omega
}

// --------------------------------------------------------- decoherence

#[derive(Clone, Debug, PartialEq)]
pub struct DecoherenceRow {
    pub m: usize,
    pub n: usize,
    pub gap: f64,
    pub fitted_rate: f64,
    pub analytic_rate: f64,
    /// Relative error of the fit, or the absolute error when the analytic
    /// rate is zero.
    pub error: f64,
}

#[derive(Clone, Debug)]
pub struct DecoherenceReport {
    pub rows: Vec<DecoherenceRow>,
    pub times: Vec<f64>,
    /// `|rho_mn(t)|` in the observable eigenbasis, one series per row.
    pub coherences: Vec<Vec<f64>>,
}

/// Decay of coherences between eigenstates of the observable for a
/// Hamiltonian commuting with it, starting from the uniform superposition.
pub fn decoherence_experiment(
    kappa: f64,
    duration: f64,
    h: &Operator,
    observable: &Operator,
    steps: Option<usize>,
) -> Result<DecoherenceReport> {
    h.require_dim(observable.dim())?;
    let norm = spectral_norm(&commutator(h.entries(), observable.entries()));
    if norm > 1e-10 {
        return Err(Error::NonCommuting { norm });
    }
    let steps = match steps {
        Some(n) => n,
        None => resolved_steps(h, observable, kappa, duration)?,
    };
    let spec = MeasurementSpec::new(observable.clone(), kappa, TimeGrid::new(duration, steps)?)?;
    let eigen = eigendecompose(observable)?;
    let d = eigen.dim();
    let uniform = CVector::from_element(d, C64::new(1.0 / (d as f64).sqrt(), 0.0));
    let psi0 = StateVector::new(&eigen.vectors * uniform)?;
    let series = propagate_master_series(&DensityMatrix::from_pure(&psi0)?, &spec, h)?;
    let times: Vec<f64> = (0..=steps).map(|k| spec.grid().time(k)).collect();
    let in_eigenbasis: Vec<_> = series
        .iter()
        .map(|rho| eigen.vectors.adjoint() * rho.entries() * &eigen.vectors)
        .collect();

    let mut rows = Vec::new();
    let mut coherences = Vec::new();
    for m in 0..d {
        for n in (m + 1)..d {
            let magnitudes: Vec<f64> = in_eigenbasis.iter().map(|r| r[(m, n)].norm()).collect();
            let (t_fit, y_fit): (Vec<f64>, Vec<f64>) = times
                .iter()
                .zip(&magnitudes)
                .filter(|(_, &y)| y > 1e-200)
                .map(|(&t, &y)| (t, y.ln()))
                .unzip();
            let (slope, _) = linear_fit(&t_fit, &y_fit);
            let gap = eigen.values[n] - eigen.values[m];
            let analytic_rate = 0.5 * kappa * gap * gap;
            let fitted_rate = -slope;
            let error = if analytic_rate > 0.0 {
                (fitted_rate - analytic_rate).abs() / analytic_rate
            } else {
                fitted_rate.abs()
            };
            rows.push(DecoherenceRow {
                m,
                n,
                gap,
                fitted_rate,
                analytic_rate,
                error,
            });
            coherences.push(magnitudes);
        }
    }
    Ok(DecoherenceReport {
        rows,
        times,
        coherences,
    })
}

pub fn decoherence_table(report: &DecoherenceReport) -> Table {
    let mut t = Table::new(&["m", "n", "gap", "fitted_rate", "analytic_rate", "error"]);
    for r in &report.rows {
        t.push(vec![
            Cell::Int(r.m as i64),
            Cell::Int(r.n as i64),
            Cell::Float(r.gap),
            Cell::Float(r.fitted_rate),
            Cell::Float(r.analytic_rate),
            Cell::Float(r.error),
        ]);
    }
    t
}

pub fn decoherence_series(report: &DecoherenceReport) -> Vec<Series> {
    report
        .rows
        .iter()
        .zip(&report.coherences)
        .map(|(r, c)| {
            Series::new(
                &format!("|rho_{}{}|", r.m, r.n),
                report
                    .times
                    .iter()
                    .copied()
                    .zip(c.iter().copied())
                    .collect(),
            )
        })
        .collect()
}

// ------------------------------------------------------- error scaling

#[derive(Clone, Debug, PartialEq)]
pub struct ErrorScalingRow {
    pub duration: f64,
    pub steps: usize,
    pub mean: f64,
    /// Sample variance of the time-averaged readout.
    pub variance: f64,
    /// `1 / (4 kappa T)`.
    pub expected_variance: f64,
    /// Standard error of `variance`, `variance * sqrt(2 / (n - 1))`.
    pub std_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ErrorScalingReport {
    pub rows: Vec<ErrorScalingRow>,
    /// Slope of `ln variance` against `ln T`.
    pub slope: f64,
    pub intercept: f64,
    /// Eigenvalue of the calibration eigenstate.
    pub eigenvalue: f64,
}

/// Variance of the time-averaged readout for an eigenstate of the
/// observable with `H = 0`, for each duration.
///
/// The expected value is `1 / (4 kappa T)`; the factor 1/4 comes from the
/// normalization of the readout measure.
pub fn error_scaling_experiment(
    observable: &Operator,
    kappa: f64,
    durations: &[f64],
    steps: usize,
    n_traj: usize,
    seed: u64,
) -> Result<ErrorScalingReport> {
    if durations.len() < 2 {
        return Err(Error::InvalidParameter(
            "error scaling needs at least two durations".into(),
        ));
    }
    if n_traj < 2 {
        return Err(Error::InvalidParameter(
            "error scaling needs n_traj >= 2".into(),
        ));
    }
    let eigen = eigendecompose(observable)?;
    let psi0 = StateVector::new(eigen.vectors.column(0).into_owned())?;
    let h = Operator::zeros(observable.dim())?;
    let rows = durations
        .iter()
        .enumerate()
        .map(|(i, &duration)| {
            let spec =
                MeasurementSpec::new(observable.clone(), kappa, TimeGrid::new(duration, steps)?)?;
            let trajs = run_ensemble(&psi0, &spec, &h, n_traj, derive_seed(seed, i))?;
            let averages: Vec<f64> = trajs.iter().map(|t| t.readout.time_average()).collect();
            let n = averages.len() as f64;
            let mean = averages.iter().sum::<f64>() / n;
            let variance = averages.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
            Ok(ErrorScalingRow {
                duration,
                steps,
                mean,
                variance,
                expected_variance: spec.readout_mean_variance(),
                std_error: variance * (2.0 / (n - 1.0)).sqrt(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let lx: Vec<f64> = rows.iter().map(|r| r.duration.ln()).collect();
    let ly: Vec<f64> = rows.iter().map(|r| r.variance.ln()).collect();
    let (slope, intercept) = linear_fit(&lx, &ly);
    Ok(ErrorScalingReport {
        rows,
        slope,
        intercept,
        eigenvalue: eigen.values[0],
    })
}

pub fn error_scaling_table(report: &ErrorScalingReport) -> Table {
    let mut t = Table::new(&[
        "T",
        "steps",
        "mean_readout",
        "variance",
        "expected_variance",
        "std_error",
        "loglog_slope",
    ]);
    for r in &report.rows {
        t.push(vec![
            Cell::Float(r.duration),
            Cell::Int(r.steps as i64),
            Cell::Float(r.mean),
            Cell::Float(r.variance),
            Cell::Float(r.expected_variance),
            Cell::Float(r.std_error),
            Cell::Float(report.slope),
        ]);
    }
    t
}

pub fn error_scaling_series(report: &ErrorScalingReport) -> Vec<Series> {
    vec![
        Series::new(
            "empirical",
            report
                .rows
                .iter()
                .map(|r| (r.duration, r.variance))
                .collect(),
        ),
        Series::new(
            "1/(4 kappa T)",
            report
                .rows
                .iter()
                .map(|r| (r.duration, r.expected_variance))
                .collect(),
        ),
    ]
}

// ---------------------------------------------------- projective limit

/// Eigenspaces of the observable: groups of eigenvector indices with equal
/// eigenvalue.
fn eigenspaces(eigen: &Eigendecomposition) -> Vec<Vec<usize>> {
    let mut spaces: Vec<Vec<usize>> = Vec::new();
    for (k, &lambda) in eigen.values.iter().enumerate() {
        match spaces.last_mut() {
            Some(space)
                if (eigen.values[space[0]] - lambda).abs() <= 1e-9 * (1.0 + lambda.abs()) =>
            {
                space.push(k)
            }
            _ => spaces.push(vec![k]),
        }
    }
    spaces
}

fn space_fidelities(eigen: &Eigendecomposition, spaces: &[Vec<usize>], psi: &CVector) -> Vec<f64> {
    let coeffs = eigen.vectors.adjoint() * psi;
    let total: f64 = coeffs.iter().map(|z| z.norm_sqr()).sum();
    spaces
        .iter()
        .map(|s| s.iter().map(|&k| coeffs[k].norm_sqr()).sum::<f64>() / total)
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProjectiveRow {
    pub kappa: f64,
    pub kappa_t: f64,
    /// Fraction of trajectories ending with fidelity > 0.99 to an eigenspace.
    pub collapse_fraction: f64,
    /// Eigenspace selection frequencies (by largest fidelity).
    pub frequencies: Vec<f64>,
    /// Total-variation distance between `frequencies` and the Born weights.
    pub born_deviation: f64,
    /// Largest `|f_n - p_n| / sqrt(p_n (1 - p_n) / n_traj)`.
    pub max_born_z: f64,
    /// Mean fidelity of the final state with the initial state.
    pub mean_initial_fidelity: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProjectiveReport {
    pub rows: Vec<ProjectiveRow>,
    /// Born weights of the initial state per eigenspace.
    pub born_weights: Vec<f64>,
    pub eigenvalues: Vec<f64>,
}

/// Fidelity above which a final state counts as collapsed.
pub const COLLAPSE_FIDELITY: f64 = 0.99;

/// Pure measurement (`H = 0`) of duration `T` at increasing strengths.
pub fn projective_limit_experiment(
    kappas: &[f64],
    duration: f64,
    psi0: &StateVector,
    observable: &Operator,
    steps: usize,
    n_traj: usize,
    seed: u64,
) -> Result<ProjectiveReport> {
    if kappas.is_empty() {
        return Err(Error::Empty("kappa list"));
    }
    if kappas.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidParameter("kappa values must ascend".into()));
    }
    let psi0 = psi0.normalized()?;
    let eigen = eigendecompose(observable)?;
    let spaces = eigenspaces(&eigen);
    let born_weights = space_fidelities(&eigen, &spaces, psi0.amplitudes());
    let h = Operator::zeros(observable.dim())?;
    let rows = kappas
        .iter()
        .enumerate()
        .map(|(i, &kappa)| {
            let spec =
                MeasurementSpec::new(observable.clone(), kappa, TimeGrid::new(duration, steps)?)?;
            let trajs = run_ensemble(&psi0, &spec, &h, n_traj, derive_seed(seed, i))?;
            let mut counts = vec![0usize; spaces.len()];
            let mut collapsed = 0usize;
            let mut initial_fidelity = 0.0;
            for t in &trajs {
                let psi = t.final_state.amplitudes();
                let f = space_fidelities(&eigen, &spaces, psi);
                let (best, &fmax) = f
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1))
                    .expect("at least one eigenspace");
                counts[best] += 1;
                if fmax > COLLAPSE_FIDELITY {
                    collapsed += 1;
                }
                initial_fidelity += (psi0.amplitudes().adjoint() * psi)[(0, 0)].norm_sqr();
            }
            let n = n_traj as f64;
            let frequencies: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
            let born_deviation = 0.5
                * frequencies
                    .iter()
                    .zip(&born_weights)
                    .map(|(f, p)| (f - p).abs())
                    .sum::<f64>();
            let max_born_z = frequencies
                .iter()
                .zip(&born_weights)
                .map(|(f, p)| {
                    let sigma = (p * (1.0 - p) / n).sqrt();
                    let dev = (f - p).abs();
                    if sigma > 0.0 {
                        dev / sigma
                    } else if dev == 0.0 {
                        0.0
                    } else {
                        f64::INFINITY
                    }
                })
                .fold(0.0, f64::max);
            Ok(ProjectiveRow {
                kappa,
                kappa_t: kappa * duration,
                collapse_fraction: collapsed as f64 / n,
                frequencies,
                born_deviation,
                max_born_z,
                mean_initial_fidelity: initial_fidelity / n,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ProjectiveReport {
        rows,
        born_weights,
        eigenvalues: spaces.iter().map(|s| eigen.values[s[0]]).collect(),
    })
}

pub fn projective_table(report: &ProjectiveReport) -> Table {
    let mut headers: Vec<String> = [
        "kappa",
        "kappa_T",
        "collapse_fraction",
        "born_deviation",
        "max_born_z",
        "mean_initial_fidelity",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for k in 0..report.born_weights.len() {
        headers.push(format!("frequency_{k}"));
        headers.push(format!("born_{k}"));
    }
    let mut t = Table::from_headers(headers);
    for r in &report.rows {
        let mut row = vec![
            Cell::Float(r.kappa),
            Cell::Float(r.kappa_t),
            Cell::Float(r.collapse_fraction),
            Cell::Float(r.born_deviation),
            Cell::Float(r.max_born_z),
            Cell::Float(r.mean_initial_fidelity),
        ];
        for (f, p) in r.frequencies.iter().zip(&report.born_weights) {
            row.push(Cell::Float(*f));
            row.push(Cell::Float(*p));
        }
        t.push(row);
    }
    t
}

pub fn projective_series(report: &ProjectiveReport) -> Vec<Series> {
    vec![
        Series::new(
            "collapse fraction",
            report
                .rows
                .iter()
                .map(|r| (r.kappa_t, r.collapse_fraction))
                .collect(),
        ),
        Series::new(
            "Born deviation",
            report
                .rows
                .iter()
                .map(|r| (r.kappa_t, r.born_deviation))
                .collect(),
        ),
    ]
}
