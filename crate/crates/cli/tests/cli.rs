use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::{json, Value};
use tempfile::TempDir;

struct Run {
    code: i32,
    out: PathBuf,
    stderr: String,
    _dir: TempDir,
}

impl Run {
    fn json(&self, name: &str) -> Value {
        serde_json::from_str(&std::fs::read_to_string(self.out.join(name)).unwrap()).unwrap()
    }

    fn bytes(&self, name: &str) -> Vec<u8> {
        std::fs::read(self.out.join(name)).unwrap()
    }
}

fn tdem(sub: &str, config: &Value) -> Run {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.json");
    std::fs::write(&cfg, config.to_string()).unwrap();
    let out = dir.path().join("out");
    let output = Command::new(env!("CARGO_BIN_EXE_tdem"))
        .args([sub, "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    Run {
        code: output.status.code().unwrap(),
        out,
        stderr: String::from_utf8_lossy(&output.stderr).into_owned(),
        _dir: dir,
    }
}

fn base(axis: u32) -> Value {
    json!({
        "schedule": {"kind": "constant", "inertia": [3, 2, 1]},
        "equilibrium": {"axis": axis, "p": 1},
        "window": {"t0": 0, "t1": 10, "samples": 11},
        "integrator": {"dt": 0.01},
        "probe": {"epsilon": 0.3, "deltas": [0.05], "t0_list": [0], "horizon": 200, "trials": 4, "seed": 42, "workers": 2}
    })
}

fn check_manifest(run: &Run) {
    let m = run.json("manifest.json");
    for f in m["files"].as_array().unwrap() {
        let name = f["name"].as_str().unwrap();
        let hash = tdem_cli::manifest::sha256_hex(&run.bytes(name));
        assert_eq!(f["sha256"].as_str().unwrap(), hash, "{name}");
    }
}

#[test]
fn simulate_constant_schedule_conserves() {
    let mut cfg = base(1);
    cfg["initial_state"] = json!({"momentum": [0.2, 0.3, 0.9]});
    let run = tdem("simulate", &cfg);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let c = run.json("conservation.json");
    assert!(c["momentum_drift"].as_f64().unwrap() <= 1e-6);
    assert!(c["energy_drift"].as_f64().unwrap() <= 1e-6);
    let csv = String::from_utf8(run.bytes("trajectory.csv")).unwrap();
    assert_eq!(csv.lines().count(), 12);
    assert!(csv.starts_with("t,L00,"));
    check_manifest(&run);
}

#[test]
fn config_errors_exit_2() {
    let mut bad_kind = base(1);
    bad_kind["schedule"]["kind"] = json!("wobbly");
    let run = tdem("simulate", &bad_kind);
    assert_eq!(run.code, 2);
    assert!(run.stderr.contains("config"), "{}", run.stderr);

    let mut bad_dt = base(1);
    bad_dt["integrator"]["dt"] = json!(0.0);
    let run = tdem("simulate", &bad_dt);
    assert_eq!(run.code, 2);
    assert!(run.stderr.contains("integrator.dt"), "{}", run.stderr);

    let mut no_eq = base(1);
    no_eq.as_object_mut().unwrap().remove("equilibrium");
    assert_eq!(tdem("certify", &no_eq).code, 2);
}

#[test]
fn numerical_blow_up_exits_3() {
    let mut cfg = base(1);
    cfg["initial_state"] = json!({"momentum": [1e300, 2e300, 3e300]});
    let run = tdem("simulate", &cfg);
    assert_eq!(run.code, 3, "{}", run.stderr);
}

#[test]
fn equilibria_of_diagonal_schedule() {
    let run = tdem("equilibria", &base(1));
    assert_eq!(run.code, 0, "{}", run.stderr);
    let v = run.json("equilibria.json");
    let eqs = v["equilibria"].as_array().unwrap();
    assert_eq!(eqs.len(), 3);
    assert!(eqs.iter().all(|e| e["verified"] == json!(true)));
    assert_eq!(eqs[0]["axis"], json!([1.0, 0.0, 0.0]));
}

fn rotated(axis: usize, angle: f64) -> Vec<[f64; 3]> {
    let (c, s) = (angle.cos(), angle.sin());
    let (i, j) = ((axis + 1) % 3, (axis + 2) % 3);
    let mut r = [[0.0; 3]; 3];
    r[axis][axis] = 1.0;
    r[i][i] = c;
    r[i][j] = -s;
    r[j][i] = s;
    r[j][j] = c;
    let d = [3.0, 2.0, 1.0];
    (0..3).map(|a| std::array::from_fn(|b| (0..3).map(|k| r[a][k] * d[k] * r[b][k]).sum())).collect()
}

#[test]
fn equilibria_of_rotating_table_is_empty() {
    let mut cfg = base(1);
    cfg.as_object_mut().unwrap().remove("equilibrium");
    cfg["schedule"] = json!({
        "kind": "table",
        "times": [0.0, 5.0, 10.0],
        "values": [rotated(2, 0.0), rotated(2, 0.5), rotated(0, 0.5)]
    });
    let run = tdem("equilibria", &cfg);
    assert_eq!(run.code, 0, "{}", run.stderr);
    assert_eq!(run.json("equilibria.json")["equilibria"], json!([]));
}

#[test]
fn equilibria_of_sphere_warns() {
    let mut cfg = base(1);
    cfg["schedule"] = json!({"kind": "constant", "inertia": [1, 1, 1]});
    let run = tdem("equilibria", &cfg);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let v = run.json("equilibria.json");
    assert!(!v["warnings"].as_array().unwrap().is_empty());
    assert_eq!(v["degenerate_limit"], json!(true));
}

#[test]
fn certify_classical_axes() {
    let run = tdem("certify", &base(1));
    assert_eq!(run.code, 0, "{}", run.stderr);
    let c = run.json("certificate.json");
    assert_eq!(c["verdict"], "uniformly-stable-certified");
    assert!((c["lambda_inf"].as_f64().unwrap() - 1.0 / 12.0).abs() < 1e-8);
    assert!((c["Lambda_sup"].as_f64().unwrap() - 1.0 / 3.0).abs() < 1e-8);
    let spectra = String::from_utf8(run.bytes("spectra.csv")).unwrap();
    assert_eq!(spectra.lines().count(), 13);
    check_manifest(&run);

    let run = tdem("certify", &base(2));
    assert_eq!(run.code, 0, "verdicts are data: {}", run.stderr);
    let c = run.json("certificate.json");
    assert_eq!(c["verdict"], "not-certified");
    assert!(c["reasons"].as_array().unwrap().iter().any(|r| r.as_str().unwrap().contains("indefinite")));
}

#[test]
fn certify_exp_decay_reports_rate_bounds() {
    let mut cfg = base(1);
    cfg["schedule"] = json!({"kind": "exp_decay", "limit": [3, 2, 1], "amplitude": [0.5, 0.5, 0.5], "rate": 1.0});
    let run = tdem("certify", &cfg);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let c = run.json("certificate.json");
    let (max, min) = (c["dt_max"].as_f64().unwrap(), c["dt_min"].as_f64().unwrap());
    assert!(max.is_finite() && min.is_finite() && min <= max);
    assert!(c["c_bound"].as_f64().unwrap().is_finite());
}

#[test]
fn probe_is_reproducible() {
    let a = tdem("probe", &base(1));
    let b = tdem("probe", &base(1));
    assert_eq!(a.code, 0, "{}", a.stderr);
    for name in ["probe.json", "excursions.csv"] {
        assert_eq!(a.bytes(name), b.bytes(name), "{name}");
    }
    assert_ne!(a.json("probe.json")["verdict"], "refuted-at-horizon");
    check_manifest(&a);
}

#[test]
fn probe_intermediate_axis_refutes() {
    let run = tdem("probe", &base(2));
    assert_eq!(run.code, 0, "{}", run.stderr);
    assert_eq!(run.json("probe.json")["verdict"], "refuted-at-horizon");
}

#[test]
fn probe_from_equilibrium_has_no_excursion() {
    let mut cfg = base(2);
    cfg["probe"]["deltas"] = json!([0.0]);
    cfg["probe"]["trials"] = json!(1);
    let run = tdem("probe", &cfg);
    assert_eq!(run.code, 0, "{}", run.stderr);
    let v = run.json("probe.json");
    assert_eq!(v["worst_excursion"], json!(0.0));
    let csv = String::from_utf8(run.bytes("excursions.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn out_falls_back_to_config() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = base(1);
    cfg["out"] = json!(dir.path().join("from_config"));
    let path = dir.path().join("c.json");
    std::fs::write(&path, cfg.to_string()).unwrap();
    let status = Command::new(env!("CARGO_BIN_EXE_tdem"))
        .args(["equilibria", "--config"])
        .arg(&path)
        .output()
        .unwrap()
        .status;
    assert!(status.success());
    assert!(Path::new(&dir.path().join("from_config/equilibria.json")).exists());
}
