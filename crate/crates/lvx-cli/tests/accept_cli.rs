use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lvx::volterra::Field;
use lvx::wellposedness::{ConditionReport, Verdict};
use lvx_cli::{preset, preset_names, Config};

fn presets() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("presets")
}

fn lvx(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lvx")).args(args).arg("--out").arg(out).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn check_on_the_two_dimensional_gaussian_model_fails_at_local_integrability() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = presets().join("ex3.1.ini");
    let o = lvx(&["check", cfg.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 2, "{}", stdout(&o));
    let text = std::fs::read_to_string(dir.path().join("report.txt")).unwrap();
    assert!(text.contains("[fail] kernel-local-integrability"), "{text}");
    let reports = ConditionReport::read_csv(std::fs::File::open(dir.path().join("report.csv")).unwrap()).unwrap();
    assert_eq!(reports.len(), 1);
    assert_eq!(reports[0].item("kernel-local-integrability").unwrap().verdict, Verdict::Fail);
    // the same model in one dimension admits p = 2
    let o = lvx(&["check", cfg.to_str().unwrap(), "--set", "kernel.dimension=1"], dir.path());
    assert_eq!(code(&o), 0, "{}", stdout(&o));
}

#[test]
fn exponential_family_for_rate_two() {
    let dir = tempfile::tempdir().unwrap();
    let o = lvx(&["reproduce-example", "ex4.1", "--lambda", "2"], dir.path());
    assert_eq!(code(&o), 0);
    let s = stdout(&o);
    assert!(s.contains("family: c·e^{−t} + 2"), "{s}");
    assert!(s.contains("bounded_unique: true"), "{s}");
    let o = lvx(&["reproduce-example", "ex4.1", "--lambda", "0.5"], dir.path());
    assert_eq!(code(&o), 2);
    assert!(stdout(&o).contains("irreducible kernel mass 2"), "{}", stdout(&o));
    let o = lvx(&["reproduce-example", "ex4.1", "--lambda", "-0.5"], dir.path());
    assert!(stdout(&o).contains("family: no solution"));
}

#[test]
fn renewal_field_matches_the_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = presets().join("renewal.ini");
    let o = lvx(&["volterra", cfg.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let f = Field::read_csv(std::fs::File::open(dir.path().join("field.csv")).unwrap(), 0.0).unwrap();
    assert_eq!(f.times.len(), 5001);
    let err = f.times.iter().zip(&f.values).map(|(t, v)| (v - (2.0 - (-t).exp())).abs()).fold(0.0, f64::max);
    assert!(err < 1e-6, "sup error {err}");
    let trace = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert!(trace.lines().count() > 2);
}

#[test]
fn every_preset_reproduces_its_recorded_verdict() {
    for name in preset_names() {
        let dir = tempfile::tempdir().unwrap();
        let o = lvx(&["reproduce-example", name], dir.path());
        let s = stdout(&o);
        assert!(s.contains("(reproduced)"), "{name}: {s}");
        let expected: Verdict = Config::parse(preset(name).unwrap(), name).unwrap().expected_verdict().unwrap().unwrap();
        assert_eq!(code(&o), if expected == Verdict::Pass { 0 } else { 2 }, "{name}");
    }
}

#[test]
fn configuration_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = presets().join("ex4.4.ini");
    let cfg = cfg.to_str().unwrap();
    for args in [
        vec!["check", cfg, "--set", "run.no_such_key=1"],
        vec!["check", cfg, "--set", "run.p_exponent"],
        vec!["check", cfg, "--set", "run.p_exponent=abc"],
        vec!["frobnicate", cfg],
        vec!["check", "/nonexistent/model.ini"],
        vec!["reproduce-example", "ex9.9"],
        vec!["check", cfg, "--lambda", "2"],
    ] {
        let o = lvx(&args, dir.path());
        assert_eq!(code(&o), 1, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let bad = dir.path().join("bad.ini");
    std::fs::write(&bad, "[kernel]\nfamily = heat\n\n[run]\nend_time = 1\np_exponent = x\n").unwrap();
    let o = lvx(&["check", bad.to_str().unwrap()], dir.path());
    assert_eq!(code(&o), 1);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("bad.ini:6") && err.contains("p_exponent"), "{err}");
}

#[test]
fn numerical_failure_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    // whole-line renewal with kernel mass 2 has no contraction partition
    let cfg = presets().join("ex4.1.ini");
    let o = lvx(
        &["volterra", cfg.to_str().unwrap(), "--set", "kernel.rate_per_unit_time=0.5", "--set", "run.equation=linear"],
        dir.path(),
    );
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("trace.csv").exists());
    assert!(std::fs::read_to_string(dir.path().join("report.txt")).unwrap().contains("numerical failure"));
}

#[test]
fn simulate_writes_parsable_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = presets().join("sim-affine.ini");
    let o = lvx(&["simulate", cfg.to_str().unwrap(), "--set", "run.replicates=40", "--seed", "3"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["report.txt", "report.csv", "field.csv", "moments.csv", "trace.csv", "paths.csv"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let f = Field::read_csv(std::fs::File::open(dir.path().join("field.csv")).unwrap(), 0.0).unwrap();
    assert_eq!(f.times.len(), 9);
    let moments = std::fs::read_to_string(dir.path().join("moments.csv")).unwrap();
    assert!(moments.starts_with("t,x1,moment,se,bound"));
    assert_eq!(moments.lines().count(), 1 + 9 * 16);
}

#[test]
fn ill_posed_models_are_not_simulated_unless_allowed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = presets().join("sim-additive.ini");
    let cfg = cfg.to_str().unwrap();
    let o = lvx(&["simulate", cfg, "--set", "kernel.dimension=2", "--set", "run.box_lower=-1,-1", "--set", "run.box_upper=1,1"], dir.path());
    assert_eq!(code(&o), 2);
    assert!(!dir.path().join("moments.csv").exists());
    let o = lvx(
        &["simulate", cfg, "--set", "kernel.dimension=2", "--set", "run.box_lower=-1,-1", "--set", "run.box_upper=1,1", "--set", "run.allow_ill_posed=true", "--set", "run.replicates=10"],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("moments.csv").exists());
}

#[test]
fn thread_count_does_not_change_the_output() {
    let cfg = presets().join("sim-jumps.ini");
    let mut bodies = Vec::new();
    for threads in ["1", "2"] {
        let dir = tempfile::tempdir().unwrap();
        let o = Command::new(env!("CARGO_BIN_EXE_lvx"))
            .args(["simulate", cfg.to_str().unwrap(), "--set", "run.replicates=70", "--out"])
            .arg(dir.path())
            .env("LVX_THREADS", threads)
            .output()
            .unwrap();
        assert_eq!(code(&o), 0);
        bodies.push(std::fs::read(dir.path().join("moments.csv")).unwrap());
    }
    assert_eq!(bodies[0], bodies[1]);
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_lvx")).args(["check", cfg.to_str().unwrap(), "--out"]).arg(dir.path()).env("LVX_THREADS", "zero").output().unwrap();
    assert_eq!(code(&o), 1);
}
