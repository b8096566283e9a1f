use std::path::Path;
use std::process::{Command, Output};

fn anticipate(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_anticipate")).args(args).current_dir(cwd).output().expect("spawn anticipate")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn small_data(dir: &Path) {
    let o = anticipate(&["gen-data", "--out", "data", "--n-train", "20", "--n-test", "10", "--seed", "5"], dir);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

fn read(dir: &Path, rel: &str) -> Vec<u8> {
    std::fs::read(dir.join(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

#[test]
fn verify_passes_and_names_injected_failure() {
    let dir = tempfile::tempdir().unwrap();
    let o = anticipate(&["verify", "--out", "v"], dir.path());
    assert_eq!(code(&o), 0, "{}{}", stdout(&o), stderr(&o));
    assert_eq!(stdout(&o).lines().filter(|l| l.starts_with("PASS")).count(), 15);
    let report: serde_json::Value = serde_json::from_slice(&read(dir.path(), "v/verify.json")).unwrap();
    assert_eq!(report["checks"].as_array().unwrap().len(), 15);

    let o = anticipate(&["verify", "--trials", "20", "--gradient-trials", "3", "--inject-fault", "sign-flip"], dir.path());
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("gradient-traj"), "{}", stderr(&o));
    assert!(stdout(&o).contains("FAIL gradient-bag"));
}

#[test]
fn gen_data_defaults_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        let o = anticipate(&["gen-data", "--out", out, "--seed", "7"], dir.path());
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let a = read(dir.path(), "a/manifest.json");
    assert_eq!(a, read(dir.path(), "b/manifest.json"));
    let m: serde_json::Value = serde_json::from_slice(&a).unwrap();
    let videos = m["videos"].as_array().unwrap();
    assert_eq!(videos.len(), 280);
    assert_eq!(videos.iter().filter(|v| v["split"] == "train").count(), 200);
    assert!(dir.path().join("a/resolved_config.txt").exists());
}

#[test]
fn bad_inputs_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = anticipate(&["gen-data", "--out", "d", "--n-train", "15"], dir.path());
    assert_eq!(code(&o), 2);
    let o = anticipate(&["train", "--data", "missing", "--out", "m"], dir.path());
    assert_eq!(code(&o), 2);
    let o = anticipate(&["eval", "--data", "missing", "--model", "none.json", "--out", "e"], dir.path());
    assert_eq!(code(&o), 2);
    let o = anticipate(&["train", "--out", "m"], dir.path());
    assert_eq!(code(&o), 2);
    std::fs::write(dir.path().join("c.txt"), "command = train\nlerning_rate = 0.1\n").unwrap();
    let o = anticipate(&["train", "--config", "c.txt", "--data", "d", "--out", "m"], dir.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("lerning_rate"));
    let o = anticipate(&["eval", "--data", "d", "--model", "m", "--out", "e", "--metric", "fps"], dir.path());
    assert_eq!(code(&o), 2);
}

#[test]
fn train_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_data(d);

    let o = anticipate(&["train", "--data", "data", "--out", "m", "--T", "4", "--iterations", "300", "--loss", "traj"], d);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let curve = String::from_utf8(read(d, "m/loss_curve.csv")).unwrap();
    let losses: Vec<f64> = curve.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(losses.len(), 300);
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    assert!(mean(&losses[270..]) < mean(&losses[..30]));

    let o = anticipate(&["eval", "--data", "data", "--model", "m/model.json", "--out", "e", "--T", "4", "--metric", "traj-iou"], d);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).starts_with("trajectory IoU"));
    let report: serde_json::Value = serde_json::from_slice(&read(d, "e/report.json")).unwrap();
    assert!(report["trajectory_iou"].as_f64().unwrap() > 0.0);
    let csv = String::from_utf8(read(d, "e/report.csv")).unwrap();
    let last = csv.lines().last().unwrap();
    let grand: f64 = last.split(',').nth(2).unwrap().parse().unwrap();
    assert_eq!(grand, report["grand_map"].as_f64().unwrap());
    // class rows average to the summary row
    let aps: Vec<f64> = csv.lines().skip(1).filter(|l| !l.starts_with("all")).map(|l| l.split(',').nth(2).unwrap().parse().unwrap()).collect();
    assert!((mean(&aps) - grand).abs() < 1e-12);

    // rerun from the stored config
    let o = anticipate(&["eval", "--config", "e/resolved_config.txt", "--out", "e2"], d);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in ["report.json", "report.csv", "detections.jsonl"] {
        assert_eq!(read(d, &format!("e/{f}")), read(d, &format!("e2/{f}")), "{f}");
    }
    let o = anticipate(&["train", "--config", "m/resolved_config.txt", "--out", "m2"], d);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(read(d, "m/model.json"), read(d, "m2/model.json"));
}

#[test]
fn supervision_and_sparse_modes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_data(d);
    for (out, extra) in [("r", ["--supervision", "random"]), ("s", ["--supervision", "smooth"]), ("sa", ["--supervision", "none"])] {
        let mut args = vec!["train", "--data", "data", "--out", out, "--iterations", "40"];
        args.extend(extra);
        if out == "sa" {
            args.extend(["--loss", "traj-sa-linear"]);
        }
        let o = anticipate(&args, d);
        assert_eq!(code(&o), 0, "{out}: {}", stderr(&o));
    }
    assert_ne!(read(d, "r/model.json"), read(d, "s/model.json"));
}

#[test]
fn divergence_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    small_data(dir.path());
    let o = anticipate(&["train", "--data", "data", "--out", "m", "--lr", "1e30", "--iterations", "50"], dir.path());
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(!dir.path().join("m/model.json").exists());
}

#[test]
fn sweep_rows_and_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    small_data(d);
    let o = anticipate(&["sweep", "--data", "data", "--out", "s", "--T-list", "8,2,16,4", "--iterations", "30", "--timing-repeats", "2"], d);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rows = |rel: &str| -> Vec<Vec<String>> {
        String::from_utf8(read(d, rel)).unwrap().lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
    };
    let first = rows("s/sweep.csv");
    let ts: Vec<&str> = first.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(ts, ["2", "4", "8", "16"]);
    let cost: Vec<f64> = first.iter().map(|r| r[1].parse().unwrap()).collect();
    assert_eq!(cost, [0.5, 0.25, 0.125, 0.0625]);
    let o = anticipate(&["sweep", "--config", "s/resolved_config.txt", "--out", "s2"], d);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let second = rows("s2/sweep.csv");
    let map = |rs: &[Vec<String>]| rs.iter().map(|r| r[3].clone()).collect::<Vec<_>>();
    assert_eq!(map(&first), map(&second));
}
