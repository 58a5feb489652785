use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use rpi_sim::cli::{
    self, emit_csv, emit_svg, parse_config, Cell, CliError, Plot, Series, SimConfig, Table,
};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rpi-sim"))
}

fn read_table(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let headers = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect();
    (headers, rows)
}

fn column(path: &Path, name: &str) -> Vec<f64> {
    let (headers, rows) = read_table(path);
    let idx = headers.iter().position(|h| h == name).unwrap();
    rows.iter().map(|r| r[idx].parse().unwrap()).collect()
}

fn config_in(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, text).unwrap();
    path
}

const ENSEMBLE: &str = r#"{
    "system": {"dim": 2, "hamiltonian": "rabi(1.0)"},
    "measurement": {"observable": "pauli_z", "kappa": 1.0, "T": 1.0, "steps": 40},
    "run": {"mode": "ensemble", "n_traj": 300, "seed": 5},
    "output": {"directory": "out", "formats": ["csv", "json", "svg"]}
}"#;

#[test]
fn selective_fixture_probability_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let status = bin()
        .arg("run")
        .arg(fixture("qubit_selective.json"))
        .arg("--out")
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    let (kappa, duration) = (0.5f64, 1.0f64);
    let p = column(&dir.path().join("readout_probability.csv"), "probability");
    assert!((p[0] - 0.5 * (1.0 + (-8.0 * kappa * duration).exp())).abs() < 1e-8);
    let re = column(&dir.path().join("final_state.csv"), "re");
    assert!((re[1] - (-4.0 * kappa * duration).exp() / 2f64.sqrt()).abs() < 1e-12);
    let svg = fs::read_to_string(dir.path().join("readout.svg")).unwrap();
    roxmltree::Document::parse(&svg).unwrap();
    let json: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(dir.path().join("readout_probability.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(json["columns"][3], "probability");
}

#[test]
fn master_matches_golden_file_and_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = parse_config(&fixture("qubit_master.json")).unwrap();
    cfg.output.directory = dir.path().to_path_buf();
    cli::run(&cfg, None).unwrap();
    let produced = dir.path().join("master.csv");
    let golden = fixture("golden_master.csv");
    let (h1, r1) = read_table(&produced);
    let (h2, r2) = read_table(&golden);
    assert_eq!(h1, h2);
    assert_eq!(r1.len(), r2.len());
    for (a, b) in r1.iter().zip(&r2) {
        for (x, y) in a.iter().zip(b) {
            let (x, y): (f64, f64) = (x.parse().unwrap(), y.parse().unwrap());
            assert!((x - y).abs() < 1e-12);
        }
    }
    // The golden file itself follows rho_01(t) = rho_01(0) exp(-2 kappa t).
    let t = column(&golden, "t");
    let coh = column(&golden, "rho_0_1_re");
    for (t, c) in t.iter().zip(&coh) {
        assert!((c - 0.5 * (-2.0 * 0.5 * t).exp()).abs() < 1e-6);
    }
}

#[test]
fn deterministic_manifests() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SimConfig::from_json(
        &fs::read_to_string(fixture("qubit_master.json")).unwrap(),
        dir.path(),
    )
    .unwrap();
    let a = cli::run(&cfg, None).unwrap();
    let b = cli::run(&cfg, Some(2)).unwrap();
    assert_eq!(a.files, b.files);
    assert_eq!(a.config_sha256, b.config_sha256);
    assert_eq!(a.seed, None);

    let one = SimConfig::from_json(&ENSEMBLE.replace("\"out\"", "\"e1\""), dir.path()).unwrap();
    let many = SimConfig::from_json(&ENSEMBLE.replace("\"out\"", "\"e2\""), dir.path()).unwrap();
    let m1 = cli::run(&one, Some(1)).unwrap();
    let m2 = cli::run(&many, Some(3)).unwrap();
    assert_eq!(m1.files, m2.files);
    assert_eq!(m1.seed, Some(5));
    assert!(m1.files.contains_key("readouts.svg"));

    let other = SimConfig::from_json(
        &ENSEMBLE
            .replace("\"seed\": 5", "\"seed\": 6")
            .replace("\"out\"", "\"e3\""),
        dir.path(),
    )
    .unwrap();
    let m3 = cli::run(&other, None).unwrap();
    assert_ne!(m1.files["readouts.csv"], m3.files["readouts.csv"]);
}

#[test]
fn cli_seed_override_changes_output() {
    let dir = tempfile::tempdir().unwrap();
    let path = config_in(dir.path(), ENSEMBLE);
    let run = |out: &str, seed: &str| {
        let status = bin()
            .args(["run"])
            .arg(&path)
            .args(["--out", out, "--seed", seed])
            .current_dir(dir.path())
            .status()
            .unwrap();
        assert!(status.success());
        let m: cli::RunManifest = serde_json::from_str(
            &fs::read_to_string(dir.path().join(out).join("manifest.json")).unwrap(),
        )
        .unwrap();
        m
    };
    let a = run("a", "1");
    let b = run("b", "1");
    let c = run("c", "2");
    assert_eq!(a.files, b.files);
    assert_ne!(a.files, c.files);
    assert_eq!(c.seed, Some(2));
}

#[test]
fn ensemble_mode_trace_distance_within_mc_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = ENSEMBLE
        .replace("\"n_traj\": 300", "\"n_traj\": 10000")
        .replace("[\"csv\", \"json\", \"svg\"]", "[\"csv\"]");
    let cfg = SimConfig::from_json(&text, dir.path()).unwrap();
    cli::run(&cfg, None).unwrap();
    let summary = dir.path().join("out/ensemble_summary.csv");
    let d = column(&summary, "trace_distance")[0];
    let mc = column(&summary, "mc_error")[0];
    assert!(d < 3.0 * mc, "{d} vs {mc}");
    let (_, rows) = read_table(&dir.path().join("out/final_states.csv"));
    assert_eq!(rows.len(), 20_000);
}

#[test]
fn experiment_modes_write_tables() {
    let dir = tempfile::tempdir().unwrap();
    let configs = [
        (
            "zeno",
            r#"{"system": {"dim": 2, "hamiltonian": "rabi(1.0)"}, "measurement": {"observable": "pauli_z"},
            "run": {"mode": "zeno", "n_traj": 100, "seed": 1}, "output": {"directory": "zeno", "formats": ["csv", "svg"]}}"#,
            7,
        ),
        (
            "decoherence",
            r#"{"system": {"dim": 3, "hamiltonian": "diag(0.1, 0.2, 0.3)"},
            "measurement": {"observable": "diag(-1, 0, 1)", "kappa": 1.0, "T": 2.0},
            "run": {"mode": "decoherence"}, "output": {"directory": "decoherence", "formats": ["csv", "svg"]}}"#,
            3,
        ),
        (
            "error_scaling",
            r#"{"system": {"dim": 2}, "measurement": {"observable": "pauli_z", "kappa": 1.0, "T": 1.0, "steps": 5},
            "run": {"mode": "error_scaling", "n_traj": 200, "seed": 2, "sweep": [0.5, 1.0, 2.0]},
            "output": {"directory": "error_scaling", "formats": ["csv", "svg"]}}"#,
            3,
        ),
        (
            "projective_limit",
            r#"{"system": {"dim": 2, "initial_state": [0.6, [0, 0.8]]},
            "measurement": {"observable": "pauli_z", "T": 1.0, "steps": 10},
            "run": {"mode": "projective_limit", "n_traj": 200, "seed": 3, "sweep": [0.1, 10.0]},
            "output": {"directory": "projective_limit", "formats": ["csv", "svg"]}}"#,
            2,
        ),
    ];
    for (name, text, rows) in configs {
        let cfg = SimConfig::from_json(text, dir.path()).unwrap();
        let manifest = cli::run(&cfg, None).unwrap();
        assert_eq!(manifest.mode, name);
        let out = dir.path().join(name);
        let (_, r) = read_table(&out.join(format!("{name}.csv")));
        assert_eq!(r.len(), rows, "{name}");
        roxmltree::Document::parse(&fs::read_to_string(out.join(format!("{name}.svg"))).unwrap())
            .unwrap();
    }
    // Eigenspaces are ordered by eigenvalue: born_0 belongs to lambda = -1.
    let born = column(
        &dir.path().join("projective_limit/projective_limit.csv"),
        "born_0",
    );
    assert!((born[0] - 0.64).abs() < 1e-12);
}

#[test]
fn csv_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let values = [
        0.1,
        -1.0 / 3.0,
        std::f64::consts::PI * 1e-300,
        1.7976931348623157e308,
        5e-324,
    ];
    let mut t = Table::new(&["a", "b", "c", "d", "e"]);
    t.push(values.iter().map(|&v| Cell::Float(v)).collect());
    let path = dir.path().join("t.csv");
    emit_csv(&t, &path).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    assert!(!text.contains('\r'));
    let (_, rows) = read_table(&path);
    for (s, v) in rows[0].iter().zip(values) {
        assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits());
    }
}

#[test]
fn empty_table_and_bad_path() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.csv");
    assert!(emit_csv(&Table::new(&["x"]), &path).is_err());
    assert!(!path.exists());
    let mut t = Table::new(&["x"]);
    t.push(vec![Cell::Float(1.0)]);
    let err = emit_csv(&t, &dir.path().join("missing/dir/t.csv")).unwrap_err();
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn svg_is_well_formed_with_log_axes() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.svg");
    let plot = Plot::new(
        "variance <T>",
        "T",
        "var & co",
        vec![
            Series::new("a", vec![(0.1, 2.5), (1.0, 0.25), (10.0, 0.025)]),
            Series::new("b", vec![(0.1, 2.4), (1.0, 0.26), (10.0, 0.0)]),
        ],
    )
    .log_log();
    emit_svg(&plot, &path).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    let doc = roxmltree::Document::parse(&text).unwrap();
    let lines = doc
        .descendants()
        .filter(|n| n.has_tag_name("polyline"))
        .count();
    assert_eq!(lines, 2);
    assert!(doc.descendants().any(|n| n.text() == Some("T (log scale)")));
}

fn parse_err(text: &str) -> String {
    match SimConfig::from_json(text, Path::new(".")) {
        Err(CliError::Validation(msg)) => msg,
        other => panic!("expected validation error, got {other:?}"),
    }
}

#[test]
fn unknown_keys_rejected_in_every_section() {
    let base: serde_json::Value = serde_json::from_str(ENSEMBLE).unwrap();
    let mut places: Vec<Option<&str>> = vec![None];
    places.extend(["system", "measurement", "run", "output"].map(Some));
    for place in places {
        let mut v = base.clone();
        let target = match place {
            Some(section) => &mut v[section],
            None => &mut v,
        };
        target["zz_unexpected"] = serde_json::json!(1);
        let msg = parse_err(&v.to_string());
        assert!(msg.contains("zz_unexpected"), "{place:?}: {msg}");
    }
}

#[test]
fn every_schema_field_is_consumed_or_rejected() {
    // For each optional field and each mode, the field either is accepted
    // (and used) or is rejected by name.
    let fields = [
        ("system", "initial_state", serde_json::json!([1, 0])),
        ("measurement", "kappa", serde_json::json!(1.0)),
        ("measurement", "T", serde_json::json!(1.0)),
        ("measurement", "steps", serde_json::json!(10)),
        ("run", "n_traj", serde_json::json!(10)),
        ("run", "seed", serde_json::json!(1)),
        ("run", "readout_file", serde_json::json!("r.csv")),
        ("run", "sweep", serde_json::json!([1.0, 2.0])),
    ];
    let modes = [
        "selective",
        "master",
        "ensemble",
        "zeno",
        "decoherence",
        "error_scaling",
        "projective_limit",
    ];
    let mut accepted = 0;
    let mut rejected = 0;
    for mode in modes {
        for (section, key, value) in &fields {
            let mut v = serde_json::json!({
                "system": {"dim": 2, "hamiltonian": "rabi(1.0)"},
                "measurement": {"observable": "pauli_z"},
                "run": {"mode": mode}
            });
            v[*section][*key] = value.clone();
            match SimConfig::from_json(&v.to_string(), Path::new(".")) {
                Ok(_) => accepted += 1,
                Err(CliError::Validation(msg)) => {
                    rejected += 1;
                    assert!(
                        msg.contains('`') || msg.contains("mode"),
                        "{mode}/{key}: {msg}"
                    );
                }
                Err(e) => panic!("{mode}/{key}: {e}"),
            }
        }
    }
    assert!(accepted > 0 && rejected > 0);
    let msg = parse_err(
        r#"{"system": {"dim": 2, "hamiltonian": "zero"}, "measurement": {"observable": "pauli_z", "kappa": 1, "T": 1},
        "run": {"mode": "master", "readout_file": "r.csv"}}"#,
    );
    assert!(msg.contains("run.readout_file"), "{msg}");
}

#[test]
fn config_errors_are_specific() {
    let missing = parse_err(r#"{"system": {"dim": 2}, "measurement": {"observable": "pauli_z"}}"#);
    assert!(missing.contains("run"), "{missing}");
    let hermitian = parse_err(&ENSEMBLE.replace("\"pauli_z\"", "[[0, 1], [0, 0]]"));
    assert!(hermitian.contains("max asymmetry 1"), "{hermitian}");
    let dim = parse_err(&ENSEMBLE.replace("\"dim\": 2", "\"dim\": 3"));
    assert!(dim.contains("dimension"), "{dim}");
    let preset = parse_err(&ENSEMBLE.replace("rabi(1.0)", "rabbi(1.0)"));
    assert!(preset.contains("rabbi"), "{preset}");
    let steps = parse_err(&ENSEMBLE.replace("\"steps\": 40", "\"steps\": 0"));
    assert!(steps.contains("steps"), "{steps}");
    let mode = parse_err(&ENSEMBLE.replace("\"ensemble\"", "\"ensemblee\""));
    assert!(mode.contains("ensemblee"), "{mode}");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let good = config_in(dir.path(), ENSEMBLE);
    assert_eq!(
        bin().arg("check").arg(&good).status().unwrap().code(),
        Some(0)
    );
    assert_eq!(
        bin().args(["experiments", "list"]).status().unwrap().code(),
        Some(0)
    );
    assert_eq!(bin().arg("--help").output().unwrap().status.code(), Some(0));
    assert_eq!(
        bin().arg("frobnicate").output().unwrap().status.code(),
        Some(1)
    );

    let bad = dir.path().join("bad.json");
    fs::write(&bad, ENSEMBLE.replace("kappa", "kapa")).unwrap();
    let out = bin().arg("run").arg(&bad).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("kapa"));

    // Far too few steps for the master equation: RK4 blows up.
    let unstable = dir.path().join("unstable.json");
    fs::write(
        &unstable,
        r#"{"system": {"dim": 2, "hamiltonian": "zero"}, "measurement": {"observable": "pauli_z", "kappa": 50, "T": 1, "steps": 1},
            "run": {"mode": "master"}, "output": {"directory": "u"}}"#,
    )
    .unwrap();
    let out = bin().arg("run").arg(&unstable).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("steps"));

    let out = bin()
        .arg("run")
        .arg(dir.path().join("nope.json"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn threads_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let path = config_in(dir.path(), ENSEMBLE);
    let out = bin()
        .arg("run")
        .arg(&path)
        .env("RPI_SIM_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let out = bin()
        .arg("run")
        .arg(&path)
        .env("RPI_SIM_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = bin()
        .arg("run")
        .arg(&path)
        .env("RPI_SIM_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn readout_file_validation() {
    let dir = tempfile::tempdir().unwrap();
    let write_cfg = |readout: &str| {
        fs::write(dir.path().join("r.csv"), readout).unwrap();
        config_in(
            dir.path(),
            r#"{"system": {"dim": 2, "hamiltonian": "zero"}, "measurement": {"observable": "pauli_z", "kappa": 1, "T": 1},
                "run": {"mode": "selective", "readout_file": "r.csv"}}"#,
        )
    };
    let code = |readout: &str| {
        bin()
            .arg("run")
            .arg(write_cfg(readout))
            .output()
            .unwrap()
            .status
            .code()
    };
    assert_eq!(code("step,a\n0,1.0\n1,-0.5\n"), Some(0));
    assert_eq!(code("k,a\n0,1.0\n"), Some(1));
    assert_eq!(code("step,a\n0,1.0\n2,1.0\n"), Some(1));
    assert_eq!(code("step,a\n0,x\n"), Some(1));
    assert_eq!(code("step,a\n"), Some(1));
    let steps = dir.path().join("out/readout_probability.csv");
    assert!(steps.exists());
}

#[test]
fn readout_writer_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let grid = rpi_sim::TimeGrid::new(2.0, 3).unwrap();
    let r = rpi_sim::Readout::new(grid, vec![0.25, -1.5, 3.0]).unwrap();
    let path = dir.path().join("r.csv");
    cli::write_readout(&r, &path).unwrap();
    assert_eq!(cli::read_readout(&path, 2.0).unwrap(), r);
}
