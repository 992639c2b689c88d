use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_conegibbs");

const WEAK_MODEL: &str = r#"
[model]
d = 1
delta = 0.5
range = 0.5
potential = { kind = "hard_range", c = 0.05 }
alpha_mark = 1.0
beta_mark = 2.0
mark_direction = [1.0]
"#;

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let p = dir.join("exp.toml");
    fs::write(&p, body).unwrap();
    p
}

fn conegibbs(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn run(cfg: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    conegibbs(&args)
}

fn status(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn report(out: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap()
}

#[test]
fn same_seed_gives_identical_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &format!("{WEAK_MODEL}\n[run]\nsuite = \"all\"\nlambda = [[0], [1]]\nxi = {{ kind = \"sampled\" }}\nn_samples = 300\nseed = 11\nrings = [1, 2]\n"),
    );
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(status(&run(&cfg, &a, &[])), 0);
    assert_eq!(status(&run(&cfg, &b, &["--jobs", "2"])), 0);
    for f in ["report.json", "summary.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    let c = dir.path().join("c");
    run(&cfg, &c, &["--seed", "12"]);
    assert_ne!(fs::read(a.join("report.json")).unwrap(), fs::read(c.join("report.json")).unwrap());
}

#[test]
fn suite_output_does_not_depend_on_companions() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &format!("{WEAK_MODEL}\n[run]\nsuite = \"all\"\nlambda = [[0]]\nn_samples = 200\nrings = [1]\n"),
    );
    let all = dir.path().join("all");
    let one = dir.path().join("one");
    run(&cfg, &all, &[]);
    run(&cfg, &one, &["--suite", "partition"]);
    let a = report(&all);
    let o = report(&one);
    let pick = a["suites"].as_array().unwrap().iter().find(|s| s["suite"] == "partition").unwrap();
    assert_eq!(pick, &o["suites"][0]);
}

#[test]
fn free_gas_laplace_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"
[model]
d = 2
delta = 1.0
range = 1.0
potential = { kind = "zero" }
alpha_mark = 2.5
beta_mark = 2.0

[run]
suite = "laplace"
lambda = [[0, 0], [0, 1]]
n_samples = 5000
"#,
    );
    let out = dir.path().join("out");
    let o = run(&cfg, &out, &[]);
    assert_eq!(status(&o), 0, "{}", stderr(&o));
    assert_eq!(report(&out)["pass"], true);
}

#[test]
fn finite_range_violation_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"
[model]
d = 1
delta = 0.5
range = 0.5
potential = { kind = "bump", c = 1.0, width = 0.8 }
alpha_mark = 1.0
beta_mark = 2.0

[run]
suite = "partition"
lambda = [[0]]
n_samples = 100
"#,
    );
    let o = run(&cfg, &dir.path().join("out"), &[]);
    assert_eq!(status(&o), 2);
    assert!(stderr(&o).contains("finite range"), "{}", stderr(&o));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn unknown_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("{WEAK_MODEL}\n[run]\nsuite = \"laplace\"\nlambda = [[0]]\nn_samples = 100\nsamples = 3\n"));
    let o = conegibbs(&["validate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(status(&o), 2);
    assert!(stderr(&o).contains("samples"), "{}", stderr(&o));
}

#[test]
fn validation_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    for (extra, field) in [
        ("epsilon = 50.0\nsuite = \"tempered\"", "run.epsilon"),
        ("alpha_temp = 5.0\nsuite = \"tempered\"", "run.alpha_temp"),
        ("inner = [[4]]\nsuite = \"consistency\"", "run.inner"),
        ("rings = [2, 1]\nsuite = \"dlr\"", "run.rings"),
    ] {
        let cfg = write_config(dir.path(), &format!("{WEAK_MODEL}\n[run]\nlambda = [[0]]\nn_samples = 100\n{extra}\n"));
        let o = conegibbs(&["validate", "--config", cfg.to_str().unwrap()]);
        assert_eq!(status(&o), 2, "{extra}");
        assert!(stderr(&o).contains(field), "{extra}: {}", stderr(&o));
    }
    let cfg = write_config(dir.path(), &format!("{WEAK_MODEL}\n[run]\nsuite = \"laplace\"\nlambda = [[0]]\nn_samples = 10\n"));
    let o = conegibbs(&["validate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(status(&o), 0);
    let o = run(&cfg, &dir.path().join("out"), &[]);
    assert_eq!(status(&o), 2);
    assert!(stderr(&o).contains("run.n_samples"));
}

#[test]
fn exhausted_trial_budget_exits_3_with_error_in_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"
[model]
d = 1
delta = 0.5
range = 0.5
potential = { kind = "hard_range", c = 5.0 }
alpha_mark = 1.0
beta_mark = 2.0
mark_direction = [1.0]

[run]
suite = "consistency"
lambda = [[0], [1], [2]]
n_samples = 100
trial_budget = 1
"#,
    );
    let out = dir.path().join("out");
    let o = run(&cfg, &out, &[]);
    assert_eq!(status(&o), 3, "{}", stderr(&o));
    let r = report(&out);
    assert_eq!(r["suites"][0]["error"]["kind"], "low_acceptance");
    assert_eq!(r["status"], 3);
}

#[test]
fn dump_with_zero_samples_writes_only_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("{WEAK_MODEL}\n[run]\nsuite = \"partition\"\nlambda = [[0]]\nn_samples = 0\n"));
    let out = dir.path().join("out");
    let o = conegibbs(&["dump", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(status(&o), 0, "{}", stderr(&o));
    let names: Vec<_> = fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(names, vec!["manifest.json"]);
}

#[test]
fn dump_is_reproducible_and_rate_matches_partition_function() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &format!("{WEAK_MODEL}\n[run]\nsuite = \"partition\"\nlambda = [[0], [1]]\nxi = {{ kind = \"sampled\" }}\nn_samples = 2000\nseed = 5\n"),
    );
    let c = cfg.to_str().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(status(&conegibbs(&["dump", "--config", c, "--out", a.to_str().unwrap()])), 0);
    assert_eq!(status(&conegibbs(&["dump", "--config", c, "--out", b.to_str().unwrap()])), 0);
    assert_eq!(fs::read(a.join("manifest.json")).unwrap(), fs::read(b.join("manifest.json")).unwrap());
    assert_eq!(fs::read(a.join("samples/sample_001999.txt")).unwrap(), fs::read(b.join("samples/sample_001999.txt")).unwrap());

    let manifest: Value = serde_json::from_str(&fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    let rate = manifest["acceptance"]["rate"].as_f64().unwrap();
    let p = dir.path().join("p");
    assert_eq!(status(&run(&cfg, &p, &[])), 0);
    let z = &report(&p)["suites"][0]["cells"][0];
    let (zv, zse) = (z["lhs"].as_f64().unwrap(), z["stderr"].as_f64().unwrap());
    // geometric trial counts: the rate's delta-method standard error
    let rate_se = rate * ((1.0 - rate) / 2000.0).sqrt();
    assert!((rate - zv).abs() <= 3.0 * zse.hypot(rate_se), "rate {rate} vs Z {zv} +- {zse}");

    let text = fs::read_to_string(a.join("samples/sample_000000.txt")).unwrap();
    assert!(text.starts_with("d 1\n"));
}

#[test]
fn negative_energy_is_reported_for_isotropic_marks() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"
[model]
d = 1
delta = 0.5
range = 1.0
potential = { kind = "hard_range", c = 1.0 }
alpha_mark = 1.5
beta_mark = 1.0

[run]
suite = "consistency"
lambda = [[0], [1], [2], [3]]
xi = { kind = "sampled" }
n_samples = 500
"#,
    );
    let out = dir.path().join("out");
    let o = run(&cfg, &out, &[]);
    assert_eq!(status(&o), 3, "{}", stderr(&o));
    assert_eq!(report(&out)["suites"][0]["error"]["kind"], "negative_energy");
}
