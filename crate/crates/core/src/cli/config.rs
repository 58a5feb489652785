//! JSON run configuration: schema, operator literals and per-mode validation.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::CliError;
use crate::error::Error;
use crate::types::{max_asymmetry, CMatrix, CVector, Operator, StateVector, C64};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub system: SystemConfig,
    pub measurement: MeasurementConfig,
    pub run: RunConfig,
    #[serde(default)]
    pub output: OutputConfig,
    /// Directory relative paths in the config are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hamiltonian: Option<OperatorSpec>,
    /// Amplitudes, each a number or `[re, im]`. Normalized on load.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_state: Option<Vec<Value>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementConfig {
    pub observable: OperatorSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(rename = "T", default, skip_serializing_if = "Option::is_none")]
    pub duration: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_traj: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub readout_file: Option<PathBuf>,
    /// Swept parameter: kappa values (zeno, projective_limit) or durations
    /// (error_scaling).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Selective,
    Master,
    Ensemble,
    Zeno,
    Decoherence,
    ErrorScaling,
    ProjectiveLimit,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Selective => "selective",
            Mode::Master => "master",
            Mode::Ensemble => "ensemble",
            Mode::Zeno => "zeno",
            Mode::Decoherence => "decoherence",
            Mode::ErrorScaling => "error_scaling",
            Mode::ProjectiveLimit => "projective_limit",
        }
    }

    pub fn is_stochastic(self) -> bool {
        matches!(
            self,
            Mode::Ensemble | Mode::Zeno | Mode::ErrorScaling | Mode::ProjectiveLimit
        )
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Svg,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_directory")]
    pub directory: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

fn default_directory() -> PathBuf {
    PathBuf::from("out")
}

fn default_formats() -> Vec<Format> {
    vec![Format::Csv]
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: default_directory(),
            formats: default_formats(),
        }
    }
}

/// An operator given as a preset name or a matrix literal.
///
/// Presets: `pauli_x`, `pauli_y`, `pauli_z`, `zero`, `identity`,
/// `rabi(omega)` and `diag(d0, d1, ...)`. Literals are arrays of rows whose
/// entries are numbers or `[re, im]` pairs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OperatorSpec(pub Value);

impl OperatorSpec {
    pub fn preset(name: &str) -> Self {
        Self(Value::from(name))
    }

    /// Rabi frequency if this is the `rabi(omega)` preset.
    pub fn rabi_frequency(&self) -> Option<f64> {
        let s = self.0.as_str()?;
        let (name, args) = split_call(s)?;
        if name != "rabi" || args.len() != 1 {
            return None;
        }
        args[0].parse().ok()
    }

    fn resolve(&self, field: &str, dim: usize) -> Result<Operator, CliError> {
        let m = match &self.0 {
            Value::String(s) => preset_matrix(field, s, dim)?,
            Value::Array(rows) => literal_matrix(field, rows)?,
            other => {
                return Err(invalid(format!(
                    "{field}: expected a preset name or a matrix literal, got {other}"
                )))
            }
        };
        if m.nrows() != dim {
            return Err(invalid(format!(
                "{field}: operator has dimension {} but system.dim is {dim}",
                m.nrows()
            )));
        }
        let asymmetry = max_asymmetry(&m);
        Operator::hermitian(m).map_err(|e| match e {
            Error::NotHermitian { .. } => invalid(format!(
                "{field} is not Hermitian (max asymmetry {asymmetry})"
            )),
            other => invalid(format!("{field}: {other}")),
        })
    }
}

fn invalid(msg: String) -> CliError {
    CliError::Validation(msg)
}

fn split_call(s: &str) -> Option<(&str, Vec<&str>)> {
    let s = s.trim();
    let open = s.find('(')?;
    let inner = s[open + 1..].strip_suffix(')')?;
    let args = if inner.trim().is_empty() {
        Vec::new()
    } else {
        inner.split(',').map(str::trim).collect()
    };
    Some((s[..open].trim(), args))
}

fn preset_matrix(field: &str, s: &str, dim: usize) -> Result<CMatrix, CliError> {
    let op = match s.trim() {
        "pauli_x" => Operator::pauli_x(),
        "pauli_y" => Operator::pauli_y(),
        "pauli_z" => Operator::pauli_z(),
        "zero" => Operator::zeros(dim).map_err(|e| invalid(format!("{field}: {e}")))?,
        "identity" => Operator::identity(dim).map_err(|e| invalid(format!("{field}: {e}")))?,
        call => {
            let parsed = split_call(call).and_then(|(name, args)| {
                let nums: Option<Vec<f64>> = args.iter().map(|a| a.parse().ok()).collect();
                Some((name, nums?))
            });
            match parsed {
                Some(("rabi", v)) if v.len() == 1 && v[0].is_finite() => Operator::rabi(v[0]),
                Some(("diag", v)) if !v.is_empty() && v.iter().all(|x| x.is_finite()) => {
                    Operator::from_real_diagonal(&v)
                        .map_err(|e| invalid(format!("{field}: {e}")))?
                }
                _ => {
                    return Err(invalid(format!(
                        "{field}: unknown operator preset \"{s}\" (expected pauli_x, pauli_y, \
                         pauli_z, zero, identity, rabi(omega) or diag(d0, d1, ...))"
                    )))
                }
            }
        }
    };
    Ok(op.into_entries())
}

fn complex_entry(field: &str, v: &Value) -> Result<C64, CliError> {
    let pair = v.as_array().filter(|a| a.len() == 2);
    let parsed = match (v.as_f64(), pair) {
        (Some(re), _) => Some(C64::new(re, 0.0)),
        (None, Some(p)) => match (p[0].as_f64(), p[1].as_f64()) {
            (Some(re), Some(im)) => Some(C64::new(re, im)),
            _ => None,
        },
        _ => None,
    };
    parsed
        .filter(|z| z.re.is_finite() && z.im.is_finite())
        .ok_or_else(|| {
            invalid(format!(
                "{field}: entry {v} is not a number or [re, im] pair"
            ))
        })
}

fn literal_matrix(field: &str, rows: &[Value]) -> Result<CMatrix, CliError> {
    let n = rows.len();
    if n == 0 {
        return Err(invalid(format!("{field}: empty matrix literal")));
    }
    let mut m = CMatrix::zeros(n, n);
    for (i, row) in rows.iter().enumerate() {
        let row = row
            .as_array()
            .ok_or_else(|| invalid(format!("{field}: row {i} is not an array")))?;
        if row.len() != n {
            return Err(invalid(format!(
                "{field}: matrix literal is not square (row {i} has {} entries, expected {n})",
                row.len()
            )));
        }
        for (j, v) in row.iter().enumerate() {
            m[(i, j)] = complex_entry(&format!("{field}[{i}][{j}]"), v)?;
        }
    }
    Ok(m)
}

/// Which modes use a field: required, optional or rejected.
#[derive(Clone, Copy, PartialEq, Eq)]
enum Use {
    Required,
    Optional,
    Forbidden,
}

use Use::{Forbidden as F, Optional as O, Required as R};

/// Field usage per mode, in the order selective, master, ensemble, zeno,
/// decoherence, error_scaling, projective_limit.
const FIELD_USE: [(&str, [Use; 7]); 9] = [
    ("system.hamiltonian", [R, R, R, R, R, O, O]),
    ("system.initial_state", [O, O, O, F, F, F, O]),
    ("measurement.kappa", [R, R, R, F, R, R, F]),
    ("measurement.T", [R, R, R, O, R, R, R]),
    ("measurement.steps", [O, O, O, F, O, O, O]),
    ("run.n_traj", [F, F, R, O, F, R, R]),
    ("run.seed", [F, F, O, O, F, O, O]),
    ("run.readout_file", [R, F, F, F, F, F, F]),
    ("run.sweep", [F, F, F, O, F, O, R]),
];

fn mode_index(mode: Mode) -> usize {
    match mode {
        Mode::Selective => 0,
        Mode::Master => 1,
        Mode::Ensemble => 2,
        Mode::Zeno => 3,
        Mode::Decoherence => 4,
        Mode::ErrorScaling => 5,
        Mode::ProjectiveLimit => 6,
    }
}

/// Steps used by the sampling experiments when none are configured.
pub const DEFAULT_EXPERIMENT_STEPS: usize = 20;

/// A configuration with operators built and per-mode rules checked.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub mode: Mode,
    pub dim: usize,
    pub hamiltonian: Operator,
    pub observable: Operator,
    /// Configured initial state, or the uniform superposition of basis states.
    pub initial_state: StateVector,
    pub kappa: Option<f64>,
    pub duration: Option<f64>,
    pub steps: Option<usize>,
    pub n_traj: Option<usize>,
    pub seed: u64,
    pub readout_file: Option<PathBuf>,
    pub sweep: Option<Vec<f64>>,
}

impl SimConfig {
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self, CliError> {
        let mut config: SimConfig = serde_json::from_str(text)
            .map_err(|e| invalid(format!("invalid configuration: {e}")))?;
        config.base_dir = base_dir.to_path_buf();
        config.resolve()?;
        Ok(config)
    }

    fn present(&self, field: &str) -> bool {
        match field {
            "system.hamiltonian" => self.system.hamiltonian.is_some(),
            "system.initial_state" => self.system.initial_state.is_some(),
            "measurement.kappa" => self.measurement.kappa.is_some(),
            "measurement.T" => self.measurement.duration.is_some(),
            "measurement.steps" => self.measurement.steps.is_some(),
            "run.n_traj" => self.run.n_traj.is_some(),
            "run.seed" => self.run.seed.is_some(),
            "run.readout_file" => self.run.readout_file.is_some(),
            "run.sweep" => self.run.sweep.is_some(),
            _ => unreachable!("unknown field {field}"),
        }
    }

    /// Canonical JSON used for the manifest hash.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// Builds operators and checks every per-mode rule.
    pub fn resolve(&self) -> Result<Resolved, CliError> {
        let mode = self.run.mode;
        let idx = mode_index(mode);
        for (field, uses) in FIELD_USE {
            match (uses[idx], self.present(field)) {
                (Use::Required, false) => {
                    return Err(invalid(format!("mode '{mode}' requires field `{field}`")))
                }
                (Use::Forbidden, true) => {
                    return Err(invalid(format!(
                        "field `{field}` is not used by mode '{mode}'"
                    )))
                }
                _ => {}
            }
        }
        let dim = self.system.dim;
        if dim == 0 {
            return Err(invalid("system.dim must be at least 1".into()));
        }
        let observable = self
            .measurement
            .observable
            .resolve("measurement.observable", dim)?;
        let hamiltonian = match &self.system.hamiltonian {
            Some(spec) => spec.resolve("system.hamiltonian", dim)?,
            None => Operator::zeros(dim).map_err(CliError::from)?,
        };
        let positive = |name: &str, v: Option<f64>, allow_zero: bool| -> Result<(), CliError> {
            match v {
                Some(x) if !x.is_finite() || x < 0.0 || (!allow_zero && x == 0.0) => {
                    Err(invalid(format!(
                        "{name} must be {}, got {x}",
                        if allow_zero {
                            "non-negative"
                        } else {
                            "positive"
                        }
                    )))
                }
                _ => Ok(()),
            }
        };
        positive("measurement.kappa", self.measurement.kappa, true)?;
        positive("measurement.T", self.measurement.duration, false)?;
        if self.measurement.steps == Some(0) {
            return Err(invalid("measurement.steps must be at least 1".into()));
        }
        if self.run.n_traj == Some(0) && mode != Mode::Zeno {
            return Err(invalid("run.n_traj must be at least 1".into()));
        }
        if self.output.formats.is_empty() {
            return Err(invalid(
                "output.formats must list at least one of csv, json, svg".into(),
            ));
        }

        let initial_state = match &self.system.initial_state {
            Some(values) => {
                if values.len() != dim {
                    return Err(invalid(format!(
                        "system.initial_state has {} amplitudes but system.dim is {dim}",
                        values.len()
                    )));
                }
                let amps = values
                    .iter()
                    .enumerate()
                    .map(|(k, v)| complex_entry(&format!("system.initial_state[{k}]"), v))
                    .collect::<Result<Vec<_>, _>>()?;
                StateVector::new(CVector::from_vec(amps))
                    .and_then(|s| s.normalized())
                    .map_err(|e| invalid(format!("system.initial_state: {e}")))?
            }
            None => {
                let amp = C64::new(1.0 / (dim as f64).sqrt(), 0.0);
                StateVector::new(CVector::from_element(dim, amp)).map_err(CliError::from)?
            }
        };

        match mode {
            Mode::Zeno => {
                let omega = self
                    .system
                    .hamiltonian
                    .as_ref()
                    .and_then(|h| h.rabi_frequency());
                if !matches!(omega, Some(w) if w > 0.0) {
                    return Err(invalid(
                        "mode 'zeno' needs system.hamiltonian = \"rabi(omega)\" with omega > 0"
                            .into(),
                    ));
                }
                if dim != 2 || observable.entries() != Operator::pauli_z().entries() {
                    return Err(invalid(
                        "mode 'zeno' needs dim 2 and observable pauli_z".into(),
                    ));
                }
            }
            Mode::ErrorScaling | Mode::ProjectiveLimit
                if hamiltonian
                    .entries()
                    .iter()
                    .any(|z| *z != C64::new(0.0, 0.0)) =>
            {
                return Err(invalid(format!(
                    "mode '{mode}' runs with H = 0; system.hamiltonian must be zero or omitted"
                )));
            }
            _ => {}
        }
        if let Some(sweep) = &self.run.sweep {
            if sweep.is_empty() {
                return Err(invalid("run.sweep must not be empty".into()));
            }
            let name = if mode == Mode::ErrorScaling {
                "durations"
            } else {
                "kappa values"
            };
            if sweep.iter().any(|x| !x.is_finite() || *x < 0.0)
                || (mode == Mode::ErrorScaling && sweep.contains(&0.0))
            {
                return Err(invalid(format!(
                    "run.sweep {name} must be finite and positive"
                )));
            }
            if mode != Mode::Zeno && sweep.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(invalid(format!("run.sweep {name} must ascend")));
            }
            if mode == Mode::ErrorScaling && sweep.len() < 2 {
                return Err(invalid("run.sweep needs at least two durations".into()));
            }
        }
        if mode == Mode::ErrorScaling && self.run.n_traj.is_some_and(|n| n < 2) {
            return Err(invalid("mode 'error_scaling' needs run.n_traj >= 2".into()));
        }

        Ok(Resolved {
            mode,
            dim,
            hamiltonian,
            observable,
            initial_state,
            kappa: self.measurement.kappa,
            duration: self.measurement.duration,
            steps: self.measurement.steps,
            n_traj: self.run.n_traj,
            seed: self.run.seed.unwrap_or(0),
            readout_file: self
                .run
                .readout_file
                .as_ref()
                .map(|p| self.base_dir.join(p)),
            sweep: self.run.sweep.clone(),
        })
    }
}

/// Reads and validates a configuration file.
pub fn parse_config(path: &Path) -> Result<SimConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    SimConfig::from_json(&text, base)
}
