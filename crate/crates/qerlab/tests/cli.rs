//! End-to-end checks of the command-line driver.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn repo_config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

fn run(args: &[&str], out_dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qerlab"))
        .args(args)
        .arg("--out")
        .arg(out_dir)
        .output()
        .expect("binary runs")
}

#[test]
fn symmetry_on_the_shipped_axis_config_detects_the_mirror() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = repo_config("stadium_axis.toml");
    let out = run(
        &["--config", cfg.to_str().unwrap(), "symmetry"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let verdict: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("symmetry.json")).unwrap())
            .unwrap();
    let estimate = verdict["estimate"].as_f64().unwrap();
    assert_eq!(estimate, 1.0, "axis estimate should be exactly 1.0");
    // Every output is accounted for in the manifest with a hash.
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap())
            .unwrap();
    let outputs = manifest["outputs"].as_array().unwrap();
    assert!(outputs.iter().any(|o| o["path"] == "symmetry.json"));
}

#[test]
fn report_before_restrict_is_a_dependency_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = repo_config("square_midline.toml");
    let out = run(&["--config", cfg.to_str().unwrap(), "report"], dir.path());
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("restrict"),
        "error should name the missing subcommand: {stderr}"
    );
}

#[test]
fn qer_before_spectrum_is_a_dependency_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = repo_config("square_midline.toml");
    let out = run(&["--config", cfg.to_str().unwrap(), "qer"], dir.path());
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("spectrum"), "{stderr}");
}

#[test]
fn identical_config_and_seed_give_byte_identical_outputs() {
    let cfg = repo_config("stadium_chord.toml");
    let mut bytes = Vec::new();
    for threads in ["2", "4"] {
        let dir = tempfile::tempdir().unwrap();
        for sub in ["flow-trace", "section-orbit", "symmetry"] {
            let out = run(
                &[
                    "--config",
                    cfg.to_str().unwrap(),
                    "--seed",
                    "31415",
                    "--threads",
                    threads,
                    sub,
                ],
                dir.path(),
            );
            assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        }
        let mut all = Vec::new();
        for name in ["flow_trace.csv", "section_orbit.csv", "symmetry.json"] {
            all.extend(std::fs::read(dir.path().join(name)).unwrap());
        }
        bytes.push(all);
    }
    assert_eq!(bytes[0], bytes[1], "outputs must not depend on thread count");
}

#[test]
fn invalid_config_lists_offending_keys() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    let text = std::fs::read_to_string(repo_config("square_midline.toml"))
        .unwrap()
        .replace("t_max = 50.0", "t_max = -3.0");
    std::fs::write(&bad, text).unwrap();
    let out = run(&["--config", bad.to_str().unwrap(), "symmetry"], dir.path());
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("dynamics.t_max"), "{stderr}");
}

#[test]
fn small_square_pipeline_runs_end_to_end() {
    // Full pipeline on a coarse, fast config: spectrum -> restrict -> qer ->
    // report, all artifacts hashed into per-stage manifests.
    let dir = tempfile::tempdir().unwrap();
    let small = dir.path().join("small.toml");
    let text = std::fs::read_to_string(repo_config("square_midline.toml"))
        .unwrap()
        .replace("h = 0.0078125", "h = 0.02")
        .replace("m = 100", "m = 12")
        .replace("n_samples = 500", "n_samples = 150");
    std::fs::write(&small, text).unwrap();
    let out_dir = dir.path().join("out");
    for sub in ["spectrum", "restrict", "qer", "report"] {
        let out = run(&["--config", small.to_str().unwrap(), sub], &out_dir);
        assert!(
            out.status.success(),
            "{sub}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    for name in [
        "spectrum.bin",
        "eigenvalues.csv",
        "restrict.csv",
        "qer.json",
        "ladders.csv",
        "report.json",
        "plot_report.py",
        "manifest.json",
    ] {
        assert!(out_dir.join(name).is_file(), "missing {name}");
    }
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("report.json")).unwrap())
            .unwrap();
    assert!((report["omega"].as_f64().unwrap() - 1.0).abs() < 1e-6);
}
