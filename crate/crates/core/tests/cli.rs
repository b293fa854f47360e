use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ris_semopt::baselines::OracleResult;
use ris_semopt::runner::RunManifest;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_ris-semopt"));
    c.current_dir(env!("CARGO_MANIFEST_DIR"));
    c
}

fn run(args: &[&str], out: &Path) -> Output {
    bin().args(args).arg("--out").arg(out).output().unwrap()
}

fn ok(o: &Output) {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
}

fn column(path: &Path, name: &str) -> Vec<f64> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let idx = r.headers().unwrap().iter().position(|h| h == name).unwrap();
    r.records().map(|rec| rec.unwrap()[idx].parse().unwrap()).collect()
}

#[test]
fn simulate_logs_every_step_reproducibly() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        ok(&run(&["simulate", "--scenario", "scenarios/default.json", "--steps", "100", "--seed", "9"], out));
    }
    let text = fs::read(a.join("steps.csv")).unwrap();
    assert_eq!(text, fs::read(b.join("steps.csv")).unwrap());
    assert_eq!(String::from_utf8(text).unwrap().lines().count(), 101);
    let m = RunManifest::load(&a).unwrap();
    assert_eq!(m.command, "simulate");
    assert_eq!(m.seed, 9);
    assert!(a.join("scenario.json").exists());
}

#[test]
fn missing_scenario_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["oracle", "--scenario", "scenarios/nope.json"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope.json"));
}

#[test]
fn unknown_ablation_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["train", "--scenario", "preset:tiny", "--steps", "10", "--ablate", "no_everything"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn oracle_budget_exceeded_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["oracle", "--scenario", "scenarios/default.json"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    let o = run(&["oracle", "--scenario", "scenarios/tiny.json", "--budget", "100"], dir.path());
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn oracle_json_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    ok(&run(&["oracle", "--scenario", "scenarios/tiny.json", "--seed", "3"], dir.path()));
    let text = fs::read_to_string(dir.path().join("oracle.json")).unwrap();
    let r = OracleResult::from_json(&text).unwrap();
    assert_eq!(r.evaluated, 272);
    assert_eq!(r.cardinality, 272);
    assert!(r.eta > 0.0);
    assert_eq!(OracleResult::from_json(&r.to_json()).unwrap().best, r.best);
}

#[test]
fn ablate_no_cache_calibrates_every_step() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        &["ablate", "--scenario", "scenarios/tiny.json", "--steps", "200", "--ablate", "no_cache"],
        dir.path(),
    );
    ok(&o);
    let table = fs::read_to_string(dir.path().join("ablation.csv")).unwrap();
    assert_eq!(table.lines().count(), 3, "{table}");
    let calls = column(&dir.path().join("ablation.csv"), "calibration_calls");
    assert!(calls[0] < 200.0);
    assert_eq!(calls[1], 200.0);
}

#[test]
fn checkpoint_cadence_and_resume() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    ok(&run(
        &["train", "--config", "configs/tiny.json", "--steps", "5000", "--checkpoint-every", "1000"],
        &first,
    ));
    let mut ckpts: Vec<PathBuf> = fs::read_dir(first.join("checkpoints"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "ckpt"))
        .collect();
    ckpts.sort();
    assert_eq!(ckpts.len(), 5);
    assert!(ckpts[0].ends_with("step_00001000.ckpt"));

    let second = dir.path().join("second");
    fs::create_dir_all(&second).unwrap();
    fs::copy(first.join("train.csv"), second.join("train.csv")).unwrap();
    let o = bin()
        .args(["train", "--config", "configs/tiny.json", "--steps", "6000", "--resume"])
        .arg(&ckpts[4])
        .arg("--out")
        .arg(&second)
        .output()
        .unwrap();
    ok(&o);
    let steps = column(&second.join("train.csv"), "step");
    assert_eq!(steps.len(), 6000);
    assert!(steps.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn single_value_sweep_has_one_row() {
    let dir = tempfile::tempdir().unwrap();
    ok(&run(&["sweep", "--axis", "ris_size", "--values", "16", "--seeds", "2"], dir.path()));
    let text = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert_eq!(column(&dir.path().join("points.csv"), "seed"), vec![1.0, 2.0]);
}

#[test]
fn users_sweep_per_user_efficiency_falls() {
    let dir = tempfile::tempdir().unwrap();
    ok(&run(&["sweep", "--axis", "users", "--values", "2,3,4", "--seeds", "3"], dir.path()));
    let per_user = column(&dir.path().join("sweep.csv"), "mean_eta_per_user");
    assert_eq!(per_user.len(), 3);
    assert!(per_user.windows(2).all(|w| w[1] < w[0]), "{per_user:?}");
}
