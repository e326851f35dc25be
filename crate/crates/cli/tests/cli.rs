use std::path::Path;
use std::process::{Command, Output};

fn asaukit(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_asaukit"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn inverted_grid_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = asaukit(dir.path(), &["curves", "--override", "curves.grid.lo=6"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).contains("grid"), "{}", stderr(&o));
    let o = asaukit(dir.path(), &["sweep", "--override", "sweep.grid.step=0"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).contains("step"), "{}", stderr(&o));
}

#[test]
fn zero_samples_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = asaukit(dir.path(), &["gradcheck", "--override", "gradcheck.samples=0"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn injected_sign_error_is_caught_and_named() {
    let dir = tempfile::tempdir().unwrap();
    let o = asaukit(
        dir.path(),
        &[
            "gradcheck",
            "--override",
            "gradcheck.samples=50",
            "--override",
            "gradcheck.negate_d_alpha=true",
        ],
    );
    assert_eq!(code(&o), 1, "{}", stderr(&o));
    let report = std::fs::read_to_string(dir.path().join("gradcheck_report.json")).unwrap();
    assert!(report.contains("d_alpha"));
    let v: serde_json::Value = serde_json::from_str(&report).unwrap();
    assert_eq!(v["passed"], false);
    assert!(String::from_utf8_lossy(&o.stdout).contains("d_alpha"));
}

#[test]
fn short_rosters_and_duplicate_labels_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    for roster in ["[]", r#"[{"kind":"relu"}]"#, r#"[{"kind":"relu"},{"kind":"relu"}]"#] {
        let o = asaukit(
            dir.path(),
            &["compare", "--override", &format!("compare.roster={roster}")],
        );
        assert_eq!(code(&o), 2, "{roster}: {}", stderr(&o));
    }
}

#[test]
fn sweep_rejects_non_increasing_betas() {
    let dir = tempfile::tempdir().unwrap();
    for betas in ["[1,10,10]", "[10,1]", "[]", "[-1,1]"] {
        let o = asaukit(dir.path(), &["sweep", "--override", &format!("sweep.betas={betas}")]);
        assert_eq!(code(&o), 2, "{betas}: {}", stderr(&o));
    }
}

#[test]
fn unknown_keys_and_bad_flags_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&asaukit(dir.path(), &["sweep", "--override", "sweep.gamma=1"])), 2);
    assert_eq!(
        code(&asaukit(dir.path(), &["sweep", "--override", "no-equals-sign"])),
        2
    );
    assert_eq!(code(&asaukit(dir.path(), &["launch"])), 2);
    assert_eq!(
        code(&asaukit(dir.path(), &["sweep", "--config", "/nonexistent/cfg.json"])),
        2
    );
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    assert_eq!(
        code(&asaukit(dir.path(), &["sweep", "--config", bad.to_str().unwrap()])),
        2
    );
}

#[test]
fn unwritable_output_is_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("occupied");
    std::fs::write(&file, "x").unwrap();
    let o = asaukit(&file, &["sweep"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn config_file_and_overrides_combine() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"sweep": {"betas": [1, 10]}}"#).unwrap();
    let out = dir.path().join("run");
    let o = asaukit(
        &out,
        &["sweep", "--config", cfg.to_str().unwrap(), "--override", "sweep.a=0.01"],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3, "{csv}");
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["sweep"]["a"], 0.01);
    assert_eq!(manifest["command"], "sweep");
}

#[test]
fn relu_family_at_large_beta_is_within_tolerance() {
    let dir = tempfile::tempdir().unwrap();
    let o = asaukit(
        dir.path(),
        &[
            "curves",
            "--override",
            r#"curves.families=[{"name":"relu","a":0,"b":1}]"#,
            "--override",
            "curves.alphas=[1]",
            "--override",
            "curves.betas=[10000]",
        ],
    );
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("curves_relu.csv")).unwrap();
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(header.len(), 3, "{header:?}");
    let mut worst: f64 = 0.0;
    for line in lines {
        let v: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        worst = worst.max((v[2] - v[0].max(0.0)).abs());
        assert_eq!(v[1], v[0].max(0.0));
    }
    assert!(worst < 1e-3, "{worst}");
}
