use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn musclenet(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_musclenet"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn json(path: PathBuf) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap()
}

/// Two hand-written 16-class dumps over the same four clips.
fn write_dumps(dir: &Path) -> (PathBuf, PathBuf) {
    let row = |id: usize, hot: usize, label: usize| {
        let logits: Vec<f64> = (0..16).map(|c| if c == hot { 2.0 } else { 0.1 * c as f64 }).collect();
        serde_json::json!({"clip_id": format!("c{id}"), "task": "ec", "logits": logits, "label": label}).to_string()
    };
    let x: Vec<String> = (0..4).map(|i| row(i, i, i)).collect();
    let s: Vec<String> = (0..4).map(|i| row(i, (i + 1) % 4, i)).collect();
    let (xp, sp) = (dir.join("x3d.jsonl"), dir.join("sf.jsonl"));
    std::fs::write(&xp, x.join("\n") + "\n").unwrap();
    std::fs::write(&sp, s.join("\n") + "\n").unwrap();
    (xp, sp)
}

#[test]
fn ensemble_row_is_labelled_by_x3d_share() {
    let dir = tempfile::tempdir().unwrap();
    let (x, s) = write_dumps(dir.path());
    let out = musclenet(
        &["ensemble", "--x3d", x.to_str().unwrap(), "--slowfast", s.to_str().unwrap(), "--weights", "0.25,0.75", "--out", "ens"],
        dir.path(),
    );
    ok(&out);
    let metrics = json(dir.path().join("ens/metrics.json"));
    let rows = metrics.as_array().unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0]["name"], "25/75");
    assert!(dir.path().join("ens/logits-25-75.jsonl").is_file());
    assert!(String::from_utf8_lossy(&out.stdout).contains("| 25/75 |"));
}

#[test]
fn report_over_three_ensemble_runs() {
    let dir = tempfile::tempdir().unwrap();
    let (x, s) = write_dumps(dir.path());
    for (w, name) in [("0.75,0.25", "a"), ("0.5,0.5", "b"), ("0.25,0.75", "c")] {
        let out = musclenet(
            &["ensemble", "--x3d", x.to_str().unwrap(), "--slowfast", s.to_str().unwrap(), "--weights", w, "--out", name],
            dir.path(),
        );
        ok(&out);
    }
    ok(&musclenet(&["report", "a", "b", "c", "--out", "table"], dir.path()));
    let csv = std::fs::read_to_string(dir.path().join("table/table.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "Model,Top 1 (%),Top 5 (%),AUC (%),Prec (%),Recall (%),F1 (%)");
    let names: Vec<&str> = lines[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(names, ["75/25", "50/50", "25/75"]);
    // every value prints with two decimals
    for l in &lines[1..] {
        for v in l.split(',').skip(1) {
            assert!(v == "n/a" || v.split_once('.').is_some_and(|(_, d)| d.len() == 2), "{v}");
        }
    }
    let md = std::fs::read_to_string(dir.path().join("table/table.md")).unwrap();
    assert_eq!(md.lines().count(), 5);
}

#[test]
fn missing_checkpoint_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = musclenet(&["evaluate", "--toy", "--checkpoint", "no/such/model.safetensors", "--out", "ev"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no/such/model.safetensors"));
}

#[test]
fn usage_errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    assert!(!musclenet(&["fly"], dir.path()).status.success());
    assert!(!musclenet(&["train", "--no-such-flag"], dir.path()).status.success());
    assert!(!musclenet(&["ensemble", "--weights", "0.6,0.6"], dir.path()).status.success());
}

#[test]
fn flags_override_the_config_file_and_the_result_is_echoed() {
    let dir = tempfile::tempdir().unwrap();
    let (x, s) = write_dumps(dir.path());
    let config = serde_json::json!({
        "seed": 5,
        "ensemble": {"x3d": x, "slowfast": s, "weights": [{"x": 0.5, "s": 0.5}], "threshold": 0.3}
    });
    std::fs::write(dir.path().join("cfg.json"), config.to_string()).unwrap();
    ok(&musclenet(&["--config", "cfg.json", "ensemble", "--seed", "9", "--threshold", "0.7", "--out", "run"], dir.path()));
    let echo = json(dir.path().join("run/config.json"));
    assert_eq!(echo["seed"], 9);
    assert_eq!(echo["command"], "ensemble");
    assert_eq!(echo["ensemble"]["threshold"], 0.7);
    assert_eq!(echo["ensemble"]["weights"][0]["x"], 0.5);

    // the echoed config alone repeats the run
    ok(&musclenet(&["--config", "run/config.json", "ensemble", "--out", "again"], dir.path()));
    assert_eq!(
        std::fs::read(dir.path().join("run/metrics.json")).unwrap(),
        std::fs::read(dir.path().join("again/metrics.json")).unwrap()
    );
}

#[test]
fn toy_training_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &'static str| {
        vec![
            "--deterministic", "--seed", "3", "train", "--toy", "--frames", "4", "--size", "32", "--model", "x3d-s",
            "--min-epochs", "2", "--max-epochs", "2", "--batch-size", "4", "--out", out,
        ]
    };
    ok(&musclenet(&args("a"), dir.path()));
    ok(&musclenet(&args("b"), dir.path()));
    let read = |p: &str| std::fs::read(dir.path().join(p)).unwrap();
    assert_eq!(read("a/logits.jsonl"), read("b/logits.jsonl"));
    assert!(dir.path().join("a/checkpoints/best.safetensors").is_file());
    let log = std::fs::read_to_string(dir.path().join("a/log.txt")).unwrap();
    assert!(log.contains("epoch   1"), "{log}");

    // evaluating the saved checkpoint reproduces the post-training dump
    ok(&musclenet(
        &["--seed", "3", "evaluate", "--toy", "--checkpoint", "a/checkpoints/best.safetensors", "--out", "ev"],
        dir.path(),
    ));
    assert_eq!(read("a/logits.jsonl"), read("ev/logits.jsonl"));
}

/// ftyp + moov/mvhd + mdat, enough for the duration probe.
fn mp4(duration_s: f64) -> Vec<u8> {
    let mut mvhd = vec![0u8; 12];
    mvhd.extend_from_slice(&600u32.to_be_bytes());
    mvhd.extend_from_slice(&((duration_s * 600.0) as u32).to_be_bytes());
    mvhd.extend_from_slice(&[0u8; 80]);
    let boxed = |kind: &[u8; 4], payload: &[u8]| {
        let mut b = ((payload.len() + 8) as u32).to_be_bytes().to_vec();
        b.extend_from_slice(kind);
        b.extend_from_slice(payload);
        b
    };
    let mut file = boxed(b"ftyp", b"isom\0\0\0\0isom");
    file.extend(boxed(b"moov", &boxed(b"mvhd", &mvhd)));
    file.extend(boxed(b"mdat", &[0u8; 8]));
    file
}

const FOLDERS: [&str; 16] = [
    "barbell biceps curl", "bench press", "chest fly machine", "deadlift", "hip thrust", "lat pulldown",
    "lateral raise", "leg extension", "leg raises", "push-up", "russian twist", "shoulder press", "squat",
    "t bar row", "tricep dips", "tricep pushdown",
];

#[test]
fn prepare_data_writes_a_stable_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("videos");
    for f in FOLDERS {
        std::fs::create_dir_all(root.join(f)).unwrap();
        for v in 0..3 {
            std::fs::write(root.join(f).join(format!("v{v}.mp4")), mp4(6.5)).unwrap();
        }
    }
    for out in ["p1", "p2"] {
        ok(&musclenet(&["--seed", "4", "prepare-data", "--dataset-root", "videos", "--out", out], dir.path()));
    }
    let read = |p: &str| std::fs::read(dir.path().join(p)).unwrap();
    assert_eq!(read("p1/manifest.csv"), read("p2/manifest.csv"));
    let summary = json(dir.path().join("p1/summary.json"));
    // three clips per 6.5 s video
    assert_eq!(summary["totals"]["total"], 16 * 3 * 3);
    assert_eq!(summary["classes"].as_array().unwrap().len(), 16);

    std::fs::create_dir_all(dir.path().join("empty")).unwrap();
    let out = musclenet(&["prepare-data", "--dataset-root", "empty", "--out", "p3"], dir.path());
    assert!(!out.status.success());
}
