use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn wide(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wide"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn small_config(dir: &Path, extra: &str) -> PathBuf {
    let text = format!(
        r#"
seed = 3

[grid]
n = 16

[params]
epsilon = 0.1
sigma = 0.25
nu = 0.1
horizon = 0.4
tau = 0.02

{extra}
"#
    );
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path
}

fn run_in(dir: &TempDir, cfg: &Path, cmd: &str, out: &str, extra: &[&str]) -> (Output, PathBuf) {
    let out_dir = dir.path().join(out);
    let mut args = vec![
        cmd,
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--quiet",
    ];
    args.extend_from_slice(extra);
    (wide(&args), out_dir)
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn minimize_writes_four_artifacts_and_check_agrees() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path(), "");
    let (out, od) = run_in(&dir, &cfg, "minimize", "m", &[]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for f in [
        "trajectory.wnst",
        "minimize_report.json",
        "el_report.json",
        "energy_report.csv",
    ] {
        assert!(od.join(f).exists(), "missing {f}");
    }
    let report = json(&od.join("minimize_report.json"));
    for key in ["iters", "total", "grad_norm", "converged", "seconds"] {
        assert!(report.get(key).is_some(), "missing {key}");
    }
    assert!(report["seconds"].is_null());

    let traj = od.join("trajectory.wnst");
    let (out, cd) = run_in(&dir, &cfg, "check", "c", &[traj.to_str().unwrap()]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let check = json(&cd.join("check_report.json"));
    let el = json(&od.join("el_report.json"));
    for key in [
        "weak_max",
        "strong_norm",
        "kernel_gap",
        "fg_l1_dual",
        "v_l2_dual",
    ] {
        let (a, b) = (
            el[key].as_f64().unwrap(),
            check["el"][key].as_f64().unwrap(),
        );
        assert!(
            (a - b).abs() <= 1e-12 * a.abs().max(1e-300),
            "{key}: {a} vs {b}"
        );
    }
    let total = report["total"].as_f64().unwrap();
    let recomputed = check["breakdown"]["total"].as_f64().unwrap();
    assert!((total - recomputed).abs() <= 1e-12 * total);
}

#[test]
fn identical_runs_give_identical_bytes() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(
        dir.path(),
        "[datum]\nkind = \"random_modes\"\nk_cut = 3.0\n",
    );
    let (a, da) = run_in(&dir, &cfg, "minimize", "a", &["--seed", "9"]);
    let (b, db) = run_in(&dir, &cfg, "minimize", "b", &["--seed", "9"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(b.status.code(), Some(0));
    for f in [
        "trajectory.wnst",
        "minimize_report.json",
        "el_report.json",
        "energy_report.csv",
    ] {
        assert_eq!(
            fs::read(da.join(f)).unwrap(),
            fs::read(db.join(f)).unwrap(),
            "{f}"
        );
    }
    let (_, dc) = run_in(&dir, &cfg, "minimize", "c", &["--seed", "10"]);
    assert_ne!(
        fs::read(da.join("trajectory.wnst")).unwrap(),
        fs::read(dc.join("trajectory.wnst")).unwrap()
    );
}

#[test]
fn epsilon_below_floor_is_rejected() {
    let dir = TempDir::new().unwrap();
    let text = "[params]\nepsilon = 0.01\nnu = 0.1\nhorizon = 1.0\ntau = 0.01\n";
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, text).unwrap();
    let (out, _) = run_in(&dir, &cfg, "minimize", "o", &[]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("T/25"), "{err}");
}

#[test]
fn config_errors_exit_with_one() {
    let dir = TempDir::new().unwrap();
    let missing = small_config(
        dir.path(),
        "[datum]\nkind = \"file\"\npath = \"/nonexistent/u0.wnsf\"\n",
    );
    assert_eq!(
        run_in(&dir, &missing, "minimize", "o", &[]).0.status.code(),
        Some(1)
    );

    let uneven = dir.path().join("uneven.toml");
    fs::write(
        &uneven,
        "[params]\nepsilon = 0.1\nnu = 0.1\nhorizon = 1.0\ntau = 0.03\n",
    )
    .unwrap();
    let out = run_in(&dir, &uneven, "minimize", "o", &[]).0;
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("divide"));

    let unknown = small_config(dir.path(), "[optimizer]\ngrad_toll = 1e-7\n");
    assert_eq!(
        run_in(&dir, &unknown, "minimize", "o", &[]).0.status.code(),
        Some(1)
    );

    assert_eq!(
        wide(&["minimize", "--config", "/nonexistent.toml"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(wide(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(wide(&["minimize"]).status.code(), Some(1));
}

#[test]
fn low_sigma_warns_but_runs() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("s.toml");
    fs::write(
        &cfg,
        "[grid]\nn = 16\n[params]\nepsilon = 0.1\nsigma = 0.1\nnu = 0.1\nhorizon = 0.2\ntau = 0.02\n",
    )
    .unwrap();
    let (out, _) = run_in(&dir, &cfg, "minimize", "o", &[]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("energy certificate invalid"));
}

#[test]
fn non_convergence_exits_with_two() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(
        dir.path(),
        "[optimizer]\nmax_iters = 1\ngrad_tol = 1e-14\n[datum]\nkind = \"random_modes\"\n",
    );
    let (out, od) = run_in(&dir, &cfg, "minimize", "o", &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(od.join("trajectory.wnst").exists());
}

#[test]
fn corrupt_checkpoint_names_offset() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path(), "");
    let bad = dir.path().join("bad.wnst");
    fs::write(&bad, b"WNSTxxxx").unwrap();
    let (out, _) = run_in(&dir, &cfg, "check", "o", &[bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("offset 4"), "{err}");
}

#[test]
fn reference_reproduces_taylor_green() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path(), "[datum]\nkind = \"taylor_green\"\n");
    let (out, od) = run_in(&dir, &cfg, "reference", "r", &[]);
    assert_eq!(out.status.code(), Some(0));
    let rep = json(&od.join("reference_report.json"));
    assert!(rep["exact_max_error"].as_f64().unwrap() < 1e-10);
    assert!(od.join("final_field.csv").exists());
}

#[test]
fn incremental_writes_report() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path(), "");
    let (out, od) = run_in(&dir, &cfg, "incremental", "i", &[]);
    assert_eq!(out.status.code(), Some(0));
    let rep = json(&od.join("incremental_report.json"));
    assert_eq!(rep["steps"].as_u64(), Some(20));
    assert!(od.join("trajectory.wnst").exists());
}

#[test]
fn single_epsilon_sweep_matches_minimize() {
    let dir = TempDir::new().unwrap();
    let cfg = small_config(dir.path(), "[sweep]\neps_list = [0.1]\n");
    let (m, md) = run_in(&dir, &cfg, "minimize", "m", &[]);
    let (s, sd) = run_in(&dir, &cfg, "sweep", "s", &["--workers", "2"]);
    assert_eq!(m.status.code(), Some(0));
    assert_eq!(
        s.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&s.stderr)
    );
    for f in [
        "trajectory.wnst",
        "minimize_report.json",
        "el_report.json",
        "energy_report.csv",
    ] {
        assert_eq!(
            fs::read(md.join(f)).unwrap(),
            fs::read(sd.join("eps_0.1").join(f)).unwrap(),
            "{f}"
        );
    }
    let csv = fs::read_to_string(sd.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert!(sd.join("sweep.json").exists());
}

#[test]
fn json_config_is_accepted() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.json");
    fs::write(
        &cfg,
        r#"{"grid": {"n": 16}, "params": {"epsilon": 0.1, "nu": 0.1, "horizon": 0.2, "tau": 0.02}}"#,
    )
    .unwrap();
    let (out, od) = run_in(&dir, &cfg, "minimize", "o", &[]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(od.join("minimize_report.json").exists());
}
