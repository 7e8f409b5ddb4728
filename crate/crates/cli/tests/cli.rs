use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn biodose(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_biodose"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn simulate(out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "simulate",
        "--quiet",
        "--replicates",
        "4",
        "--seed",
        "11",
        "--burn-in",
        "300",
        "--kept-draws",
        "600",
        "--out-dir",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    biodose(&args)
}

#[test]
fn list_scenarios_prints_nine_rows() {
    let out = biodose(&["list-scenarios"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 10);
    let s4 = text.lines().find(|l| l.starts_with("scenario4\t")).unwrap();
    assert!(s4.contains("Bell shape"), "{s4}");
    assert!(s4.contains("\t4,5\t"));
}

#[test]
fn same_seed_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(simulate(&a, &["--scenario", "scenario2", "--parallelism", "1"])
        .status
        .success());
    assert!(simulate(&b, &["--scenario", "scenario2", "--parallelism", "3"])
        .status
        .success());
    for f in ["oc_table.csv", "curves.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let table = fs::read_to_string(a.join("oc_table.csv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 9 + 4);
    assert!(table.lines().any(|l| l.starts_with("none,")));
}

#[test]
fn manifest_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    assert!(simulate(&a, &["--scenario", "3", "--overdose-cutoff", "0.35"])
        .status
        .success());
    let manifest = a.join("manifest.json");
    let b = dir.path().join("b");
    let out = biodose(&[
        "simulate",
        "--quiet",
        "--config",
        manifest.to_str().unwrap(),
        "--out-dir",
        b.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(
        fs::read(a.join("oc_table.csv")).unwrap(),
        fs::read(b.join("oc_table.csv")).unwrap()
    );
    let m = fs::read_to_string(&manifest).unwrap();
    assert!(m.contains("\"overdose_cutoff\": 0.35"));
}

#[test]
fn scenario_file_in_toml() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("flat.toml");
    fs::write(
        &path,
        r#"
name = "flat"
doses = [10, 20, 40]
true_tox = [0.05, 0.1, 0.5]
true_eff = [0.3, 0.4, 0.4]
target_levels = [2]
"#,
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = simulate(
        &out_dir,
        &["--scenario-file", path.to_str().unwrap(), "--max-patients", "12"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = fs::read_to_string(out_dir.join("oc_table.csv")).unwrap();
    assert_eq!(table.lines().nth(2).unwrap().split(',').nth(7), Some("1"));
}

#[test]
fn unknown_scenario_fails_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = simulate(&out_dir, &["--scenario", "scenario42"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("scenario42"));
    assert!(!out_dir.exists());
}

#[test]
fn bad_config_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        "[scenario]\nbuiltin = \"scenario1\"\n[design]\noverdose_cutof = 0.3\n",
    )
    .unwrap();
    let out = simulate(&dir.path().join("o"), &["--config", cfg.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("overdose_cutof"));

    fs::write(&cfg, "[scenario]\nbuiltin = \"scenario1\"\n[mcmc]\nkept_draws = 5\n").unwrap();
    let out = biodose(&["simulate", "--quiet", "--config", cfg.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("mcmc.kept_draws"));
}

#[test]
fn biomarker_model_needs_biomarker_truth() {
    let dir = tempfile::tempdir().unwrap();
    let out = simulate(
        &dir.path().join("o"),
        &["--scenario", "scenario1", "--model", "joint-biomarker"],
    );
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("design.model"));
}
