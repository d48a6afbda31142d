//! End-to-end checks of the `crindex` binary: subcommands, exit codes,
//! output files and determinism.

use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_crindex"))
}

fn workdir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("crindex-cli-tests").join(name);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &PathBuf, name: &str, contents: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, contents).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

#[test]
fn analyze_writes_json_and_csv() {
    let dir = workdir("analyze");
    let config = write_config(&dir, "cylinder.toml", "n = 2\nrho = \"abs2(z2) - 1\"\n");
    let out = dir.join("report.json");
    let csv = dir.join("points.csv");
    let result = run(&[
        "analyze",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--csv",
        csv.to_str().unwrap(),
        "--samples",
        "64",
    ]);
    assert!(result.status.success(), "{}", String::from_utf8_lossy(&result.stderr));

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(report["indices"]["s_s_upper"], "inf");
    assert_eq!(report["indices"]["df_s_lower"], 0.0);
    assert!(report["consistency"]["theorem1_ok"].as_bool().unwrap());
    assert_eq!(report["manifest"]["spec"]["n"], 2);

    let csv_text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = csv_text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "re_z1,im_z1,re_z2,im_z2,null_dim,gamma_df,gamma_s,marginal"
    );
    assert!(lines.count() >= 64);
}

#[test]
fn analyze_is_deterministic_modulo_duration() {
    let dir = workdir("determinism");
    let config = write_config(&dir, "cyl.toml", "n = 2\nrho = \"abs2(z2) - 1\"\n");
    let render = |name: &str| -> String {
        let out = dir.join(name);
        let result = run(&[
            "analyze",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--samples",
            "48",
        ]);
        assert!(result.status.success());
        let mut v: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
        v["manifest"]["duration_seconds"] = serde_json::json!(0.0);
        serde_json::to_string(&v).unwrap()
    };
    assert_eq!(render("a.json"), render("b.json"));
}

#[test]
fn seed_override_changes_samples() {
    let dir = workdir("seed");
    let config = write_config(&dir, "ball.toml", "n = 2\nrho = \"abs2(z1) + abs2(z2) - 1\"\n");
    let point_of = |seed: &str| -> serde_json::Value {
        let out = dir.join(format!("s{seed}.json"));
        let result = run(&[
            "analyze",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--samples",
            "16",
            "--seed",
            seed,
        ]);
        assert!(result.status.success());
        let v: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
        v["per_point"][0]["point"].clone()
    };
    assert_ne!(point_of("1"), point_of("2"));
}

#[test]
fn exit_code_config_error() {
    let dir = workdir("config-error");
    let config = write_config(&dir, "bad.toml", "n = 2\nrho = \"abs2(z3) - 1\"\n");
    let result = run(&["analyze", config.to_str().unwrap()]);
    assert_eq!(result.status.code(), Some(2));
}

#[test]
fn exit_code_pseudoconvexity_violation() {
    let dir = workdir("pseudoconvex");
    let config = write_config(&dir, "outside.toml", "n = 2\nrho = \"1 - abs2(z1) - abs2(z2)\"\n");
    let result = run(&["analyze", config.to_str().unwrap(), "--samples", "16"]);
    assert_eq!(result.status.code(), Some(3));
}

#[test]
fn exit_code_sampler_starvation() {
    let dir = workdir("starved");
    let config = write_config(&dir, "empty.toml", "n = 2\nrho = \"abs2(z1) + abs2(z2) + 1\"\n");
    let result = run(&["analyze", config.to_str().unwrap(), "--samples", "16"]);
    assert_eq!(result.status.code(), Some(4));
}

#[test]
fn oracle_subcommand_reports_verdict() {
    let dir = workdir("oracle");
    let config = write_config(&dir, "ball.toml", "n = 2\nrho = \"abs2(z1) + abs2(z2) - 1\"\n");
    let out = dir.join("verdict.json");
    let result = run(&[
        "oracle",
        config.to_str().unwrap(),
        "--side",
        "interior",
        "--gamma",
        "0.9",
        "--samples",
        "32",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(result.status.success());
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["side"], "interior");
    assert_eq!(v["all_psd"], true);
    assert_eq!(v["min_eig_by_distance"].as_array().unwrap().len(), 3);
}

#[test]
fn optimize_subcommand_reports_coefficients() {
    let dir = workdir("optimize");
    let config = write_config(
        &dir,
        "quartic.toml",
        "n = 2\nrho = \"abs2(z1)^2 + abs2(z2) - 1\"\nconformal_basis = [\"abs2(z1)\"]\n",
    );
    let out = dir.join("report.json");
    let result = run(&[
        "optimize",
        config.to_str().unwrap(),
        "--objective",
        "df",
        "--budget",
        "600",
        "--samples",
        "96",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(result.status.success(), "{}", String::from_utf8_lossy(&result.stderr));
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let coeffs = v["indices"]["trivialization_coeffs"].as_array().unwrap();
    assert_eq!(coeffs.len(), 1);
    assert!(v["indices"]["df_s_lower"].as_f64().unwrap() >= 0.99);
}

#[test]
fn selftest_subcommand_passes() {
    let result = run(&["selftest", "--cases", "120"]);
    assert!(result.status.success(), "{}", String::from_utf8_lossy(&result.stdout));
    let stdout = String::from_utf8_lossy(&result.stdout);
    assert!(stdout.contains("PASS jet finite-difference suite"));
    assert!(stdout.contains("PASS rank-one threshold suite"));
}
