//! End-to-end CLI tests driving the compiled binary.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_it2lmi"))
}

const SCALAR_CONFIG: &str = r#"{
    "model": {"system": {
        "subsystems": [{
            "rules": [{
                "a": [[-5.0]],
                "b": [[1.0]],
                "d1": [[1.0]],
                "c": [[1.0]],
                "d2": [[0.0]],
                "antecedents": [{
                    "state_index": 0,
                    "lower": {"shape": "gaussian", "center": 0.0, "width": 4.0},
                    "upper": {"shape": "gaussian", "center": 0.0, "width": 4.0}
                }]
            }]
        }],
        "controllers": [{
            "rules": [[{
                "state_index": 0,
                "lower": {"shape": "gaussian", "center": 0.0, "width": 4.0},
                "upper": {"shape": "gaussian", "center": 0.0, "width": 4.0}
            }]]
        }]
    }},
    "partition": {"boxes": [{"lower": [-1.0], "upper": [1.0], "cells_per_dim": [2]}]},
    "performance": {"preset": "h_infinity", "gamma": 5.0},
    "simulation": {
        "t_final": 2.0,
        "dt": 0.001,
        "initial_states": [[0.0]],
        "disturbances": [{"kind": "decaying_sinusoid", "a": 1.0, "b": 0.2, "c": 1.0}]
    }
}"#;

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn synth_writes_result_and_gains() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SCALAR_CONFIG);
    let out = bin()
        .args(["synth", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let result: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("result.json")).unwrap())
            .unwrap();
    assert_eq!(result["gamma"], 5.0);
    assert!(result["gains"][0][0][0][0].is_f64());
    let gains = std::fs::read_to_string(dir.path().join("gains.csv")).unwrap();
    assert!(gains.starts_with("subsystem,rule,row,col,value\n"));
    assert_eq!(gains.lines().count(), 2);
}

#[test]
fn simulate_then_verify_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SCALAR_CONFIG);
    let out = bin()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let traj = dir.path().join("trajectory.csv");
    assert!(traj.exists());

    // open-loop scalar plant with |a| = 5 has L2 gain below the configured
    // gamma = 5, so certification must pass
    let out = bin()
        .args(["verify", "--config"])
        .arg(&cfg)
        .arg("--trajectory")
        .arg(&traj)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let cert: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("certification.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(cert["passed"], true);
}

#[test]
fn verify_fails_with_distinct_exit_code_when_gamma_too_small() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SCALAR_CONFIG);
    bin()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    let strict = SCALAR_CONFIG.replace("\"gamma\": 5.0", "\"gamma\": 0.001");
    let strict_cfg = dir.path().join("strict.json");
    std::fs::write(&strict_cfg, strict).unwrap();
    let out = bin()
        .args(["verify", "--config"])
        .arg(&strict_cfg)
        .arg("--trajectory")
        .arg(dir.path().join("trajectory.csv"))
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    let diag: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("diagnostic.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(diag["exit_code"], 3);
}

#[test]
fn open_loop_divergence_exits_4_with_partial_trajectory() {
    // unstable scalar plant, no gains; low blow-up bound so the norm
    // crosses it well before t_final
    let unstable = SCALAR_CONFIG
        .replace("[[-5.0]]", "[[3.0]]")
        .replace("\"initial_states\": [[0.0]]", "\"initial_states\": [[1.0]]")
        .replace("\"t_final\": 2.0", "\"t_final\": 6.0, \"blow_up\": 100.0");
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &unstable);
    let out = bin()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("trajectory.csv").exists());
    let diag: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("diagnostic.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(diag["error"], "divergence");
}

#[test]
fn bad_config_exits_2_with_field_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"model": {"builtin": "pendulum"}, "nope": 1}"#);
    let out = bin()
        .args(["synth", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("nope"), "{err}");
}

#[test]
fn missing_config_file_exits_6() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["synth", "--config", "/definitely/not/here.json", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(6));
}

#[test]
fn infeasible_synthesis_exits_3() {
    // unstable plant with zero input matrix: no stabilizing gain exists
    let infeasible = SCALAR_CONFIG
        .replace("[[-5.0]]", "[[1.0]]")
        .replace("\"b\": [[1.0]]", "\"b\": [[0.0]]");
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &infeasible);
    let out = bin()
        .args(["synth", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}
