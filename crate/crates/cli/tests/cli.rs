use std::path::Path;
use std::process::{Command, Output};

fn hstgnn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hstgnn"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

const TINY: &str = r#"
[train]
batch_size = 64
max_epochs = 2
max_steps_per_epoch = 2
patience = 0
seeds = [0]

[model.hstgnn]
d = 4
d_h = 4
k = 3

[model.baseline]
cnn_filters = 4
node_dim = 4
gru_hidden = 4
lstm_hidden = 4
"#;

fn benchmark(dir: &Path) {
    let out = hstgnn(&["simulate", "--out", path(dir), "--steps", "200", "--seed", "3"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

fn config(dir: &Path, text: &str) -> std::path::PathBuf {
    let p = dir.join("config.toml");
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(code(&hstgnn(&["--help"])), 0);
    assert_eq!(code(&hstgnn(&[])), 1);
    assert_eq!(code(&hstgnn(&["frobnicate"])), 1);
    let out = hstgnn(&["train", "--data", ".", "--model", "transformer", "--test-dataset", "0", "--out", "x.json"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown model"));
}

#[test]
fn simulate_writes_four_conditions() {
    let dir = tempfile::tempdir().unwrap();
    benchmark(dir.path());
    assert!(dir.path().join("schema.csv").exists());
    for k in 1..=4 {
        let text = std::fs::read_to_string(dir.path().join(format!("data_{k}.csv"))).unwrap();
        assert_eq!(text.lines().count(), 201);
    }
    assert!(!dir.path().join("data_5.csv").exists());

    let quiet = tempfile::tempdir().unwrap();
    let out = hstgnn(&["simulate", "--out", path(quiet.path()), "--steps", "50", "--noise-free", "--band", "5"]);
    assert_eq!(code(&out), 0);
    let out = hstgnn(&["simulate", "--out", path(quiet.path()), "--noise-free", "--noise-temp", "0.1"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn train_then_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    benchmark(dir.path());
    let cfg = config(dir.path(), TINY);
    let ckpt = dir.path().join("model.json");
    let out = hstgnn(&[
        "train", "--data", path(dir.path()), "--model", "hstgnn", "--test-dataset", "2", "--seed", "1",
        "--config", path(&cfg), "--out", path(&ckpt),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(ckpt.exists());
    assert!(dir.path().join("model.history.json").exists());

    let report = dir.path().join("eval.csv");
    let trace = dir.path().join("trace.csv");
    let out = hstgnn(&[
        "evaluate", "--ckpt", path(&ckpt), "--data", path(dir.path()), "--test-dataset", "2",
        "--report", path(&report), "--trace", path(&trace),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&report).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 6);
    for row in rows {
        let f: Vec<&str> = row.split(',').collect();
        let rmse: f64 = f[1].parse().unwrap();
        let mae: f64 = f[2].parse().unwrap();
        assert!(rmse >= mae && mae > 0.0);
        assert_eq!(f[4], "185");
    }
    let trace = std::fs::read_to_string(&trace).unwrap();
    assert_eq!(trace.lines().count(), 1 + 185 * 6);

    let out = hstgnn(&["evaluate", "--ckpt", path(&ckpt), "--data", path(dir.path()), "--test-dataset", "9"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn experiment_and_ablation_reports() {
    let dir = tempfile::tempdir().unwrap();
    benchmark(dir.path());
    let cfg = config(dir.path(), TINY);
    let report = dir.path().join("exp.csv");
    let out = hstgnn(&[
        "experiment", "--data", path(dir.path()), "--models", "cnn1d,gcn", "--seeds", "0,1",
        "--test-datasets", "1", "--config", path(&cfg), "--report", path(&report),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let summary = std::fs::read_to_string(&report).unwrap();
    // train-mean, cnn1d and gcn rows for six targets
    assert_eq!(summary.lines().count(), 1 + 3 * 6);
    assert!(dir.path().join("exp.txt").exists());
    let runs = std::fs::read_to_string(dir.path().join("exp.runs.csv")).unwrap();
    assert_eq!(runs.lines().count(), 1 + 5 * 6);

    let report = dir.path().join("abl.csv");
    let out = hstgnn(&[
        "ablate", "--data", path(dir.path()), "--variant", "no_flow", "--test-datasets", "0",
        "--config", path(&cfg), "--report", path(&report),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let summary = std::fs::read_to_string(&report).unwrap();
    assert!(summary.contains(",full,") && summary.contains(",no_flow,"));
}

#[test]
fn data_config_and_numeric_errors_have_distinct_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nothing");
    let out = hstgnn(&["train", "--data", path(&missing), "--test-dataset", "0", "--out", "m.json"]);
    assert_eq!(code(&out), 2);

    benchmark(dir.path());
    let bad = config(dir.path(), "[optimizer]\nlr = 1.0\n");
    let ckpt = dir.path().join("m.json");
    let args = |cfg: &Path| {
        vec![
            "train".to_string(), "--data".into(), path(dir.path()).into(), "--test-dataset".into(), "0".into(),
            "--config".into(), path(cfg).into(), "--out".into(), path(&ckpt).into(),
        ]
    };
    let run = |cfg: &Path| {
        let a = args(cfg);
        hstgnn(&a.iter().map(String::as_str).collect::<Vec<_>>())
    };
    assert_eq!(code(&run(&bad)), 1);
    let bad = config(dir.path(), "[train]\nbatch_size = 0\n");
    assert_eq!(code(&run(&bad)), 1);
    let diverging = config(dir.path(), &format!("{TINY}\n").replace("[train]\n", "[train]\nlr = 1e300\n"));
    let out = run(&diverging);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!ckpt.exists());
}

#[test]
fn gradcheck_passes() {
    let out = hstgnn(&["gradcheck"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(text.lines().filter(|l| l.ends_with("ok")).count(), 10);
}
