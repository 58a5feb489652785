//! Batch command-line front end: `rpi-sim run | check | experiments list`.
//!
//! Exit codes: 0 success, 1 invalid input or I/O failure, 2 numerical
//! failure (overflow, master-equation instability, zero-norm state).

pub mod config;
pub mod output;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Error;
use crate::experiments::{self, EXPERIMENTS, ZENO_KAPPA_RATIOS};
use crate::linalg::trace_distance;
use crate::nonselective::{ensemble_average, propagate_master, propagate_master_series};
use crate::sampler::{run_ensemble, weighted_final_states, GENERATOR};
use crate::selective::{default_steps, propagate_selective, readout_probability_density};
use crate::types::{DensityMatrix, MeasurementSpec, Readout, TimeGrid};

pub use config::{parse_config, Format, Mode, SimConfig};
use config::{Resolved, DEFAULT_EXPERIMENT_STEPS};
pub use output::{emit_csv, emit_json, emit_svg, Cell, Plot, Series, Table};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numerical(_) => 2,
            CliError::Validation(_) | CliError::Io(_) => 1,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Validation(e.to_string())
        }
    }
}

/// Reproducibility record written next to the outputs as `manifest.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub tool_version: String,
    pub mode: String,
    pub config_sha256: String,
    pub seed: Option<u64>,
    pub generator: Option<String>,
    pub wall_clock_seconds: f64,
    /// sha256 of every output file except the manifest itself.
    pub files: BTreeMap<String, String>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Reads a readout CSV with header `step,a` and rows `0..N-1`.
pub fn read_readout(path: &Path, duration: f64) -> Result<Readout, CliError> {
    let io = |e: &dyn std::fmt::Display| CliError::Io(format!("{}: {e}", path.display()));
    let bad = |msg: String| CliError::Validation(format!("{}: {msg}", path.display()));
    let mut reader = csv::Reader::from_path(path).map_err(|e| io(&e))?;
    let headers = reader.headers().map_err(|e| io(&e))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["step", "a"] {
        return Err(bad(format!(
            "expected header `step,a`, found `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut values = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        let step: usize = record[0]
            .trim()
            .parse()
            .map_err(|_| bad(format!("row {k}: step `{}` is not an integer", &record[0])))?;
        if step != k {
            return Err(bad(format!("row {k}: expected step {k}, found {step}")));
        }
        let a: f64 = record[1]
            .trim()
            .parse()
            .map_err(|_| bad(format!("row {k}: readout `{}` is not a number", &record[1])))?;
        if !a.is_finite() {
            return Err(bad(format!("row {k}: readout must be finite")));
        }
        values.push(a);
    }
    if values.is_empty() {
        return Err(bad("no readout samples".into()));
    }
    Ok(Readout::new(
        TimeGrid::new(duration, values.len())?,
        values,
    )?)
}

/// Writes a readout in the format accepted by [`read_readout`].
pub fn write_readout(readout: &Readout, path: &Path) -> Result<(), CliError> {
    let mut t = Table::new(&["step", "a"]);
    for (k, a) in readout.values().iter().enumerate() {
        t.push(vec![Cell::Int(k as i64), Cell::Float(*a)]);
    }
    emit_csv(&t, path)
}

struct Writer<'a> {
    dir: &'a Path,
    formats: &'a [Format],
    files: BTreeMap<String, String>,
}

impl Writer<'_> {
    fn record(&mut self, name: String) -> Result<(), CliError> {
        let path = self.dir.join(&name);
        let bytes =
            fs::read(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        self.files.insert(name, sha256_hex(&bytes));
        Ok(())
    }

    fn table(&mut self, stem: &str, table: &Table) -> Result<(), CliError> {
        if self.formats.contains(&Format::Csv) {
            emit_csv(table, &self.dir.join(format!("{stem}.csv")))?;
            self.record(format!("{stem}.csv"))?;
        }
        if self.formats.contains(&Format::Json) {
            emit_json(table, &self.dir.join(format!("{stem}.json")))?;
            self.record(format!("{stem}.json"))?;
        }
        Ok(())
    }

    fn plot(&mut self, stem: &str, plot: &Plot) -> Result<(), CliError> {
        if self.formats.contains(&Format::Svg) {
            emit_svg(plot, &self.dir.join(format!("{stem}.svg")))?;
            self.record(format!("{stem}.svg"))?;
        }
        Ok(())
    }
}

fn spec_for(r: &Resolved, steps: usize) -> Result<MeasurementSpec, CliError> {
    let duration = r.duration.expect("checked by resolve");
    let kappa = r.kappa.expect("checked by resolve");
    Ok(MeasurementSpec::new(
        r.observable.clone(),
        kappa,
        TimeGrid::new(duration, steps)?,
    )?)
}

fn auto_steps(r: &Resolved) -> Result<usize, CliError> {
    match r.steps {
        Some(n) => Ok(n),
        None => Ok(experiments::resolved_steps(
            &r.hamiltonian,
            &r.observable,
            r.kappa.unwrap_or(0.0),
            r.duration.expect("checked by resolve"),
        )?),
    }
}

fn density_table(rho: &DensityMatrix) -> Vec<Cell> {
    rho.entries()
        .transpose()
        .iter()
        .flat_map(|z| [Cell::Float(z.re), Cell::Float(z.im)])
        .collect()
}

fn density_headers(dim: usize) -> Vec<String> {
    let mut h = Vec::new();
    for i in 0..dim {
        for j in 0..dim {
            h.push(format!("rho_{i}_{j}_re"));
            h.push(format!("rho_{i}_{j}_im"));
        }
    }
    h
}

fn run_selective(r: &Resolved, w: &mut Writer) -> Result<(), CliError> {
    let duration = r.duration.expect("checked by resolve");
    let path = r.readout_file.as_ref().expect("checked by resolve");
    let readout = read_readout(path, duration)?;
    if let Some(n) = r.steps {
        if n != readout.grid().steps() {
            return Err(Error::GridMismatch {
                readout_t: duration,
                readout_n: readout.grid().steps(),
                spec_t: duration,
                spec_n: n,
            }
            .into());
        }
    }
    let spec = spec_for(r, readout.grid().steps())?;
    let psi = propagate_selective(&r.initial_state, &readout, &spec, &r.hamiltonian)?;

    let mut state = Table::new(&["k", "re", "im"]);
    for (k, z) in psi.amplitudes().iter().enumerate() {
        state.push(vec![
            Cell::Int(k as i64),
            Cell::Float(z.re),
            Cell::Float(z.im),
        ]);
    }
    w.table("final_state", &state)?;

    let dt = spec.grid().dt();
    let mut prob = Table::new(&["T", "steps", "kappa", "probability", "step_measure"]);
    prob.push(vec![
        Cell::Float(duration),
        Cell::Int(spec.grid().steps() as i64),
        Cell::Float(spec.kappa()),
        Cell::Float(readout_probability_density(&psi)),
        Cell::Float((2.0 * spec.kappa() * dt / std::f64::consts::PI).sqrt()),
    ]);
    w.table("readout_probability", &prob)?;

    let points = (0..spec.grid().steps())
        .map(|k| (spec.grid().time(k), readout.values()[k]))
        .collect();
    w.plot(
        "readout",
        &Plot::new("readout", "t", "a(t)", vec![Series::new("a", points)]),
    )
}

fn run_master(r: &Resolved, w: &mut Writer) -> Result<(), CliError> {
    let spec = spec_for(r, auto_steps(r)?)?;
    let rho0 = DensityMatrix::from_pure(&r.initial_state)?;
    let series = propagate_master_series(&rho0, &spec, &r.hamiltonian)?;
    let mut headers = vec!["t".to_string(), "trace".to_string(), "purity".to_string()];
    headers.extend(density_headers(r.dim));
    let mut table = Table::from_headers(headers);
    for (k, rho) in series.iter().enumerate() {
        let mut row = vec![
            Cell::Float(spec.grid().time(k)),
            Cell::Float(rho.trace().re),
            Cell::Float(rho.purity()),
        ];
        row.extend(density_table(rho));
        table.push(row);
    }
    w.table("master", &table)?;
    let populations = (0..r.dim)
        .map(|i| {
            Series::new(
                &format!("rho_{i}{i}"),
                series
                    .iter()
                    .enumerate()
                    .map(|(k, rho)| (spec.grid().time(k), rho.population(i)))
                    .collect(),
            )
        })
        .collect();
    w.plot(
        "master",
        &Plot::new(
            "master equation populations",
            "t",
            "population",
            populations,
        ),
    )
}

fn run_ensemble_mode(r: &Resolved, w: &mut Writer) -> Result<(), CliError> {
    let spec = spec_for(r, auto_steps(r)?)?;
    let n_traj = r.n_traj.expect("checked by resolve");
    let trajs = run_ensemble(&r.initial_state, &spec, &r.hamiltonian, n_traj, r.seed)?;

    let mut readouts = Table::new(&["trajectory", "step", "a"]);
    let mut finals = Table::new(&["trajectory", "k", "re", "im"]);
    for (i, t) in trajs.iter().enumerate() {
        for (k, a) in t.readout.values().iter().enumerate() {
            readouts.push(vec![
                Cell::Int(i as i64),
                Cell::Int(k as i64),
                Cell::Float(*a),
            ]);
        }
        for (k, z) in t.final_state.amplitudes().iter().enumerate() {
            finals.push(vec![
                Cell::Int(i as i64),
                Cell::Int(k as i64),
                Cell::Float(z.re),
                Cell::Float(z.im),
            ]);
        }
    }
    w.table("readouts", &readouts)?;
    w.table("final_states", &finals)?;

    let estimate = ensemble_average(&weighted_final_states(&trajs))?;
    let master = propagate_master(
        &DensityMatrix::from_pure(&r.initial_state)?,
        &spec,
        &r.hamiltonian,
    )?;
    let mut rho = Table::new(&[
        "i",
        "j",
        "ensemble_re",
        "ensemble_im",
        "std_error",
        "master_re",
        "master_im",
    ]);
    for i in 0..r.dim {
        for j in 0..r.dim {
            let e = estimate.rho.entries()[(i, j)];
            let m = master.entries()[(i, j)];
            rho.push(vec![
                Cell::Int(i as i64),
                Cell::Int(j as i64),
                Cell::Float(e.re),
                Cell::Float(e.im),
                Cell::Float(estimate.std_error[(i, j)]),
                Cell::Float(m.re),
                Cell::Float(m.im),
            ]);
        }
    }
    w.table("ensemble_rho", &rho)?;

    let mut summary = Table::new(&["n_traj", "steps", "trace_distance", "mc_error"]);
    summary.push(vec![
        Cell::Int(n_traj as i64),
        Cell::Int(spec.grid().steps() as i64),
        Cell::Float(trace_distance(&estimate.rho, &master)?),
        Cell::Float(estimate.trace_distance_error()),
    ]);
    w.table("ensemble_summary", &summary)?;

    let shown = trajs
        .iter()
        .take(5)
        .enumerate()
        .map(|(i, t)| {
            Series::new(
                &format!("trajectory {i}"),
                t.readout
                    .values()
                    .iter()
                    .enumerate()
                    .map(|(k, a)| (spec.grid().time(k), *a))
                    .collect(),
            )
        })
        .collect();
    w.plot(
        "readouts",
        &Plot::new("sampled readouts", "t", "a(t)", shown),
    )
}

fn run_experiment(r: &Resolved, config: &SimConfig, w: &mut Writer) -> Result<(), CliError> {
    match r.mode {
        Mode::Zeno => {
            let omega = config
                .system
                .hamiltonian
                .as_ref()
                .and_then(|h| h.rabi_frequency())
                .expect("checked by resolve");
            let kappas = r
                .sweep
                .clone()
                .unwrap_or_else(|| ZENO_KAPPA_RATIOS.iter().map(|x| x * omega).collect());
            let duration = r
                .duration
                .unwrap_or_else(|| experiments::zeno_default_duration(omega));
            let rows = experiments::zeno_experiment(
                omega,
                &kappas,
                duration,
                r.n_traj.unwrap_or(0),
                r.seed,
            )?;
            w.table("zeno", &experiments::zeno_table(&rows))?;
            w.plot(
                "zeno",
                &Plot::new(
                    "survival of |+z>",
                    "kappa",
                    "survival",
                    experiments::zeno_series(&rows),
                ),
            )
        }
        Mode::Decoherence => {
            let report = experiments::decoherence_experiment(
                r.kappa.expect("checked by resolve"),
                r.duration.expect("checked by resolve"),
                &r.hamiltonian,
                &r.observable,
                r.steps,
            )?;
            w.table("decoherence", &experiments::decoherence_table(&report))?;
            w.plot(
                "decoherence",
                &Plot::new(
                    "coherence decay",
                    "t",
                    "|rho_mn|",
                    experiments::decoherence_series(&report),
                ),
            )
        }
        Mode::ErrorScaling => {
            let base = r.duration.expect("checked by resolve");
            let durations = r.sweep.clone().unwrap_or_else(|| {
                [0.1, 0.316, 1.0, 3.16, 10.0]
                    .iter()
                    .map(|f| f * base)
                    .collect()
            });
            let report = experiments::error_scaling_experiment(
                &r.observable,
                r.kappa.expect("checked by resolve"),
                &durations,
                r.steps.unwrap_or(DEFAULT_EXPERIMENT_STEPS),
                r.n_traj.expect("checked by resolve"),
                r.seed,
            )?;
            w.table("error_scaling", &experiments::error_scaling_table(&report))?;
            w.plot(
                "error_scaling",
                &Plot::new(
                    "readout-average variance",
                    "T",
                    "variance",
                    experiments::error_scaling_series(&report),
                )
                .log_log(),
            )
        }
        Mode::ProjectiveLimit => {
            let report = experiments::projective_limit_experiment(
                r.sweep.as_ref().expect("checked by resolve"),
                r.duration.expect("checked by resolve"),
                &r.initial_state,
                &r.observable,
                r.steps.unwrap_or(DEFAULT_EXPERIMENT_STEPS),
                r.n_traj.expect("checked by resolve"),
                r.seed,
            )?;
            w.table("projective_limit", &experiments::projective_table(&report))?;
            w.plot(
                "projective_limit",
                &Plot::new(
                    "projective limit",
                    "kappa T",
                    "fraction",
                    experiments::projective_series(&report),
                ),
            )
        }
        _ => unreachable!("not an experiment mode"),
    }
}

/// Executes a validated configuration, writing outputs and `manifest.json`
/// into `config.output.directory`.
pub fn run(config: &SimConfig, threads: Option<usize>) -> Result<RunManifest, CliError> {
    let resolved = config.resolve()?;
    let started = Instant::now();
    let dir = if config.output.directory.is_absolute() {
        config.output.directory.clone()
    } else {
        config.base_dir.join(&config.output.directory)
    };
    fs::create_dir_all(&dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let mut writer = Writer {
        dir: &dir,
        formats: &config.output.formats,
        files: BTreeMap::new(),
    };
    let execute = |w: &mut Writer| match resolved.mode {
        Mode::Selective => run_selective(&resolved, w),
        Mode::Master => run_master(&resolved, w),
        Mode::Ensemble => run_ensemble_mode(&resolved, w),
        _ => run_experiment(&resolved, config, w),
    };
    match threads {
        Some(0) => return Err(CliError::Validation("--threads must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Io(format!("thread pool: {e}")))?
            .install(|| execute(&mut writer))?,
        None => execute(&mut writer)?,
    }
    let stochastic = resolved.mode.is_stochastic();
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        mode: resolved.mode.name().to_string(),
        config_sha256: sha256_hex(config.canonical_json().as_bytes()),
        seed: stochastic.then_some(resolved.seed),
        generator: stochastic.then(|| GENERATOR.to_string()),
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        files: writer.files,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    log::info!(
        "wrote {} files to {}",
        manifest.files.len() + 1,
        dir.display()
    );
    Ok(manifest)
}

#[derive(Parser, Debug)]
#[command(
    name = "rpi-sim",
    version,
    about = "Continuously measured quantum systems"
)]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a configuration and write its outputs.
    Run {
        config: PathBuf,
        /// Output directory (overrides output.directory).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Seed for stochastic modes (overrides run.seed).
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads for trajectory sampling.
        #[arg(long, env = "RPI_SIM_THREADS")]
        threads: Option<usize>,
    },
    /// Validate a configuration without running it.
    Check { config: PathBuf },
    /// Canned experiments.
    Experiments {
        #[command(subcommand)]
        action: ExperimentsAction,
    },
}

#[derive(Subcommand, Debug)]
enum ExperimentsAction {
    /// List experiment modes.
    List,
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run {
            config,
            out,
            seed,
            threads,
        } => {
            let mut cfg = parse_config(&config)?;
            if let Some(dir) = out {
                cfg.output.directory = std::env::current_dir()
                    .map(|cwd| cwd.join(&dir))
                    .unwrap_or(dir);
            }
            if seed.is_some() {
                cfg.run.seed = seed;
                cfg.resolve()?;
            }
            let manifest = run(&cfg, threads)?;
            for name in manifest.files.keys() {
                println!("{name}");
            }
            println!("{MANIFEST_FILE}");
            Ok(())
        }
        Command::Check { config } => {
            let cfg = parse_config(&config)?;
            let r = cfg.resolve()?;
            println!("ok: mode {}, dim {}", r.mode, r.dim);
            if let (Some(kappa), Some(t), None) = (r.kappa, r.duration, r.steps) {
                if matches!(r.mode, Mode::Master | Mode::Ensemble) {
                    println!("default steps: {}", default_steps(&r.observable, kappa, t)?);
                }
            }
            Ok(())
        }
        Command::Experiments {
            action: ExperimentsAction::List,
        } => {
            for (name, what) in EXPERIMENTS {
                println!("{name:<18}{what}");
            }
            Ok(())
        }
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code. Errors go to standard error.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args = match Args::try_parse_from(args) {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(args.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
