//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::f64::consts::PI;
use std::time::Instant;

use rpi_sim::cli::{self, SimConfig};
use rpi_sim::experiments::{
    decoherence_experiment, error_scaling_experiment, projective_limit_experiment, zeno_experiment,
    zeno_freezing_limit, ZENO_KAPPA_RATIOS,
};
use rpi_sim::linalg::{min_eigenvalue, trace_distance};
use rpi_sim::nonselective::{ensemble_average, propagate_master, propagate_master_series};
use rpi_sim::oracle::{brute_force_restricted_sum, GaussianWeight};
use rpi_sim::sampler::{run_ensemble, weighted_final_states, SeededStream};
use rpi_sim::selective::{
    check_generalized_unitarity, propagate_selective, step_kraus, KrausForm, QuadratureRule,
};
use rpi_sim::{
    CMatrix, CVector, DensityMatrix, MeasurementSpec, Operator, Readout, StateVector, TimeGrid, C64,
};

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn random_hermitian(s: &mut SeededStream, d: usize, scale: f64) -> Operator {
    let m = CMatrix::from_fn(d, d, |_, _| {
        C64::new(s.standard_normal(), s.standard_normal()) * scale
    });
    Operator::hermitian((&m + m.adjoint()) * C64::new(0.5, 0.0)).unwrap()
}

fn random_state(s: &mut SeededStream, d: usize) -> StateVector {
    let v = CVector::from_fn(d, |_, _| C64::new(s.standard_normal(), s.standard_normal()));
    StateVector::new(v).unwrap().normalized().unwrap()
}

/// Generalized unitarity of the short-time step.
fn criterion_1() -> Outcome {
    let z = Operator::pauli_z();
    let kappa = 10.0;
    let residual = |h: &Operator, dt: f64, form| {
        let spec = MeasurementSpec::new(z.clone(), kappa, TimeGrid::new(dt, 1).unwrap()).unwrap();
        let q = QuadratureRule::covering(&[-1.0, 1.0], kappa, dt, 12.0, 4001).unwrap();
        check_generalized_unitarity(&spec, h, &q, form)
            .unwrap()
            .single_step
    };
    let h0 = Operator::zeros(2).unwrap();
    let at_zero = residual(&h0, 0.01, KrausForm::Split).max(residual(&h0, 0.01, KrausForm::Exact));
    let dts = [0.01, 0.005, 0.0025, 0.00125];
    let res: Vec<f64> = dts
        .iter()
        .map(|&dt| residual(&Operator::pauli_x(), dt, KrausForm::Exact))
        .collect();
    let res_text: Vec<String> = res.iter().map(|r| format!("{r:.2e}")).collect();
    let orders: Vec<f64> = res.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let min_order = orders.iter().copied().fold(f64::INFINITY, f64::min);
    let split = residual(&Operator::pauli_x(), 0.01, KrausForm::Split);
    outcome(
        at_zero < 1e-8 && min_order >= 1.9,
        format!(
            "H=0 residual {at_zero:.2e} (< 1e-8); H=sigma_x unsplit residuals {res_text:?}, min order {min_order:.2} (>= 1.9); split-step residual {split:.1e}"
        ),
    )
}

/// Selective propagation against the brute-force path sum.
fn criterion_2() -> Outcome {
    let kappa = 5.0;
    let steps = 8;
    let dt = 0.01;
    let h = Operator::rabi(0.5);
    let z = Operator::pauli_z();
    let spec =
        MeasurementSpec::new(z, kappa, TimeGrid::new(steps as f64 * dt, steps).unwrap()).unwrap();
    let fine = spec.with_grid(spec.grid().refined(2).unwrap());
    let mut s = SeededStream::new(2024, 0);
    let mut worst_err = 0.0f64;
    let mut worst_order = f64::INFINITY;
    for _ in 0..20 {
        let psi0 = random_state(&mut s, 2);
        let values: Vec<f64> = (0..steps).map(|_| -1.0 + 2.0 * s.uniform()).collect();
        let readout = Readout::new(*spec.grid(), values).unwrap();
        let error = |spec: &MeasurementSpec, readout: &Readout| {
            let sel = propagate_selective(&psi0, readout, spec, &h).unwrap();
            let w = GaussianWeight::for_spec(spec).unwrap();
            let orc = brute_force_restricted_sum(&psi0, readout, spec, &h, &w).unwrap();
            (sel.amplitudes() - orc.amplitudes()).norm()
        };
        let coarse = error(&spec, &readout);
        let refined = error(&fine, &readout.refined(2).unwrap());
        worst_err = worst_err.max(coarse);
        worst_order = worst_order.min((coarse / refined).log2());
    }
    outcome(
        worst_err <= 1e-3 && worst_order >= 0.9,
        format!(
            "kappa dt = {:.3}; max ||psi_oracle - psi_selective|| {worst_err:.2e} (<= 1e-3); min order under halving {worst_order:.3} (>= 0.9)",
            kappa * dt
        ),
    )
}

/// Trajectory ensemble against the master equation.
fn criterion_3() -> Outcome {
    let omega = 1.0;
    let h = Operator::rabi(omega);
    let duration = 2.0;
    let steps =
        rpi_sim::experiments::resolved_steps(&h, &Operator::pauli_z(), omega, duration).unwrap();
    let spec = MeasurementSpec::new(
        Operator::pauli_z(),
        omega,
        TimeGrid::new(duration, steps).unwrap(),
    )
    .unwrap();
    let psi0 = StateVector::basis(2, 0).unwrap();
    let trajs = run_ensemble(&psi0, &spec, &h, 10_000, 7).unwrap();
    let est = ensemble_average(&weighted_final_states(&trajs)).unwrap();
    let master = propagate_master(&DensityMatrix::from_pure(&psi0).unwrap(), &spec, &h).unwrap();
    let dist = trace_distance(&est.rho, &master).unwrap();
    let mc = est.trace_distance_error();
    outcome(
        dist < 3.0 * mc && dist < 0.02,
        format!(
            "N = {steps}; trace distance {dist:.4} vs 3 x MC error {:.4}; absolute bound 0.02",
            3.0 * mc
        ),
    )
}

/// Decoherence rates for commuting H.
fn criterion_4() -> Outcome {
    let kappa = 1.5;
    let qubit = decoherence_experiment(
        kappa,
        2.0 / kappa,
        &Operator::from_real_diagonal(&[0.3, -0.2]).unwrap(),
        &Operator::pauli_z(),
        None,
    )
    .unwrap();
    let three = decoherence_experiment(
        kappa,
        2.0 / kappa,
        &Operator::from_real_diagonal(&[0.5, 0.1, -0.3]).unwrap(),
        &Operator::from_real_diagonal(&[-1.0, 0.0, 1.0]).unwrap(),
        None,
    )
    .unwrap();
    let worst = qubit
        .rows
        .iter()
        .chain(&three.rows)
        .map(|r| r.error)
        .fold(0.0, f64::max);
    let rates: Vec<f64> = three.rows.iter().map(|r| r.fitted_rate).collect();
    let base = rates[0];
    outcome(
        worst < 0.01,
        format!(
            "max relative error {worst:.2e} (< 1%); qubit rate {:.5} vs {:.5}; 3-level ratios {:.4} : {:.4} : {:.4}",
            qubit.rows[0].fitted_rate,
            2.0 * kappa,
            rates[0] / base,
            rates[1] / base,
            rates[2] / base
        ),
    )
}

/// Zeno freezing from the master equation.
fn criterion_5() -> Outcome {
    let omega = 1.0;
    let kappas: Vec<f64> = ZENO_KAPPA_RATIOS.iter().map(|r| r * omega).collect();
    let rows = zeno_experiment(omega, &kappas, PI / omega, 0, 0).unwrap();
    let survival: Vec<f64> = rows.iter().map(|r| r.survival_master).collect();
    let monotone = survival.windows(2).all(|w| w[1] >= w[0]);
    let limit = zeno_freezing_limit(omega, PI / omega, 2e-3).unwrap();
    let at_20 = survival[6];
    outcome(
        monotone && survival[0].abs() < 1e-6 && at_20 > 0.9 * limit,
        format!(
            "survival {survival:.4?}; non-decreasing {monotone}; kappa=0 value {:.1e}; kappa/Omega=20 value {at_20:.4} vs 0.9 x converged trend {:.4}",
            survival[0],
            0.9 * limit
        ),
    )
}

/// Variance of the time-averaged readout.
fn criterion_6() -> Outcome {
    let durations = [0.1, 0.316, 1.0, 3.16, 10.0];
    let rep =
        error_scaling_experiment(&Operator::pauli_z(), 1.0, &durations, 20, 10_000, 11).unwrap();
    let worst_z = rep
        .rows
        .iter()
        .map(|r| {
            (r.variance - r.expected_variance).abs()
                / (r.expected_variance * (2.0 / 9999.0f64).sqrt())
        })
        .fold(0.0, f64::max);
    outcome(
        (rep.slope + 1.0).abs() <= 0.05 && worst_z <= 3.0,
        format!(
            "log-log slope {:.4} (-1 +/- 0.05); max |var - 1/(4 kappa T)| = {worst_z:.2} sigma (<= 3)",
            rep.slope
        ),
    )
}

/// Projective limit at kappa T = 50.
fn criterion_7() -> Outcome {
    let a = Operator::from_real_diagonal(&[-1.0, 0.0, 1.0]).unwrap();
    let psi0 = StateVector::from_slice(&[
        C64::new(0.2f64.sqrt(), 0.0),
        C64::new(0.0, 0.3f64.sqrt()),
        C64::new(-(0.5f64.sqrt()), 0.0),
    ])
    .unwrap();
    let rep = projective_limit_experiment(&[50.0], 1.0, &psi0, &a, 20, 10_000, 5).unwrap();
    let row = &rep.rows[0];
    outcome(
        row.collapse_fraction >= 0.99 && row.max_born_z <= 3.0,
        format!(
            "collapse fraction {:.4} (>= 0.99); frequencies {:.4?} vs Born {:.2?}; max deviation {:.2} sigma (<= 3)",
            row.collapse_fraction, row.frequencies, rep.born_weights, row.max_born_z
        ),
    )
}

/// Structural invariants and manifest determinism.
fn criterion_8() -> Outcome {
    let mut s = SeededStream::new(8, 0);
    let mut norm_ok = true;
    for _ in 0..1000 {
        let d = 2 + (s.uniform() * 4.0) as usize;
        let h = random_hermitian(&mut s, d, 1.0);
        let a = random_hermitian(&mut s, d, 1.0);
        let psi = random_state(&mut s, d);
        let kappa = 0.1 + 5.0 * s.uniform();
        let dt = 0.001 + 0.1 * s.uniform();
        let value = 3.0 * s.standard_normal();
        let m = step_kraus(&h, &a, value, kappa, dt).unwrap();
        let out = m.entries() * psi.amplitudes();
        norm_ok &= out.norm_squared() <= psi.norm_squared() * (1.0 + 1e-12);
    }

    let (mut max_trace, mut max_purity_rise, mut min_eig) =
        (0.0f64, f64::NEG_INFINITY, f64::INFINITY);
    for _ in 0..100 {
        let d = 2 + (s.uniform() * 3.0) as usize;
        let h = random_hermitian(&mut s, d, 1.0);
        let a = random_hermitian(&mut s, d, 1.0);
        let kappa = 0.1 + 2.0 * s.uniform();
        let duration = 1.0;
        let steps = rpi_sim::experiments::resolved_steps(&h, &a, kappa, duration).unwrap();
        let spec = MeasurementSpec::new(a, kappa, TimeGrid::new(duration, steps).unwrap()).unwrap();
        let rho0 = DensityMatrix::from_pure(&random_state(&mut s, d)).unwrap();
        let series = propagate_master_series(&rho0, &spec, &h).unwrap();
        for w in series.windows(2) {
            max_trace = max_trace.max((w[1].trace().re - 1.0).abs());
            max_purity_rise = max_purity_rise.max(w[1].purity() - w[0].purity());
            min_eig = min_eig.min(min_eigenvalue(&w[1]));
        }
    }

    let dir = tempfile::tempdir().unwrap();
    let config = |out: &str| {
        format!(
            r#"{{"system": {{"dim": 2, "hamiltonian": "rabi(1.0)"}},
                "measurement": {{"observable": "pauli_z", "kappa": 1.0, "T": 1.0, "steps": 50}},
                "run": {{"mode": "ensemble", "n_traj": 200, "seed": 42}},
                "output": {{"directory": "{out}", "formats": ["csv", "json"]}}}}"#
        )
    };
    let run = |out: &str, threads| {
        let cfg = SimConfig::from_json(&config(out), dir.path()).unwrap();
        cli::run(&cfg, threads).unwrap().files
    };
    let first = run("a", Some(1));
    let second = run("b", Some(4));
    let manifests_match = first == second && !first.is_empty();

    outcome(
        norm_ok && max_trace < 1e-9 && max_purity_rise <= 1e-12 && min_eig >= -1e-8 && manifests_match,
        format!(
            "norm non-increasing over 1000 steps: {norm_ok}; max |dTr| {max_trace:.1e}; max purity rise {max_purity_rise:.1e}; min eigenvalue {min_eig:.1e}; manifests identical: {manifests_match}"
        ),
    )
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("1 generalized unitarity", criterion_1),
        ("2 selective vs path-sum oracle", criterion_2),
        ("3 ensemble vs master equation", criterion_3),
        ("4 decoherence rates", criterion_4),
        ("5 Zeno freezing", criterion_5),
        ("6 measurement-error scaling", criterion_6),
        ("7 projective limit", criterion_7),
        ("8 structural invariants", criterion_8),
    ];
    let started = Instant::now();
    let mut failures = 0;
    for (name, check) in criteria {
        let t0 = Instant::now();
        let result = check();
        let verdict = if result.pass { "PASS" } else { "FAIL" };
        if !result.pass {
            failures += 1;
        }
        println!(
            "{verdict} criterion {name} [{:.1}s]: {}",
            t0.elapsed().as_secs_f64(),
            result.detail
        );
    }
    println!(
        "acceptance: {} of {} criteria passed in {:.1}s",
        criteria.len() - failures,
        criteria.len(),
        started.elapsed().as_secs_f64()
    );
    if failures > 0 {
        std::process::exit(1);
    }
}
