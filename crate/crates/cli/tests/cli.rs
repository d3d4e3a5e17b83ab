use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn ipr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ipr"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 temp path")
}

const SMALL_SYNTH: &str = r#"{"d_in": 6, "sizes": {"d1": 40, "d2": 48, "d3": 16}, "seed": 3}"#;
const SMALL_TRAIN: &str = r#"{
    "epochs": 3, "warmup_epochs": 1, "learning_rate": 0.001,
    "model": {"encoder_hidden": [8], "embedding_dim": 4, "classifier_hidden": []}
}"#;

struct Fixture {
    dir: TempDir,
    data: PathBuf,
    train_config: PathBuf,
}

fn fixture() -> Fixture {
    let dir = TempDir::new().unwrap();
    let synth = dir.path().join("synth.json");
    fs::write(&synth, SMALL_SYNTH).unwrap();
    let train_config = dir.path().join("train.json");
    fs::write(&train_config, SMALL_TRAIN).unwrap();
    let data = dir.path().join("data.jsonl");
    let out = ipr(&["gen-data", "--config", p(&synth), "--out", p(&data)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    Fixture {
        dir,
        data,
        train_config,
    }
}

fn train(f: &Fixture, extra: &[&str]) -> Output {
    let runs = f.dir.path().join("runs");
    let mut args = vec![
        "train",
        "--config",
        p(&f.train_config),
        "--data",
        p(&f.data),
        "--out-dir",
        p(&runs),
    ];
    args.extend_from_slice(extra);
    ipr(&args)
}

#[test]
fn gen_data_default_reports_split_sizes() {
    let dir = TempDir::new().unwrap();
    let out_path = dir.path().join("d.jsonl");
    let out = ipr(&["gen-data", "--out", p(&out_path)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = stdout(&out);
    let sizes: Vec<String> = text
        .lines()
        .skip(1)
        .map(|l| l.split_whitespace().nth(1).unwrap().to_string())
        .collect();
    assert_eq!(sizes, ["600", "1200", "140"]);
}

#[test]
fn gen_data_is_deterministic_per_seed() {
    let dir = TempDir::new().unwrap();
    let synth = dir.path().join("s.json");
    fs::write(&synth, SMALL_SYNTH).unwrap();
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    for path in [&a, &b] {
        assert_eq!(code(&ipr(&["gen-data", "--config", p(&synth), "--out", p(path)])), 0);
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let c = dir.path().join("c.jsonl");
    ipr(&["gen-data", "--config", p(&synth), "--out", p(&c), "--seed", "4"]);
    assert_ne!(fs::read(&a).unwrap(), fs::read(&c).unwrap());
}

#[test]
fn gen_data_error_codes() {
    let dir = TempDir::new().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let unwritable = blocker.join("sub").join("d.jsonl");
    let out = ipr(&["gen-data", "--out", p(&unwritable)]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));

    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"t_low": 0.95, "t_high": 0.9}"#).unwrap();
    let out = ipr(&["gen-data", "--config", p(&bad), "--out", p(&dir.path().join("x.jsonl"))]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("t_low"), "{}", stderr(&out));

    let typo = dir.path().join("typo.json");
    fs::write(&typo, r#"{"overlapp": 0.1}"#).unwrap();
    let out = ipr(&["gen-data", "--config", p(&typo), "--out", p(&dir.path().join("y.jsonl"))]);
    assert_eq!(code(&out), 2);

    let existing = dir.path().join("exists.jsonl");
    fs::write(&existing, "keep").unwrap();
    let out = ipr(&["gen-data", "--out", p(&existing)]);
    assert_eq!(code(&out), 2);
    assert_eq!(fs::read_to_string(&existing).unwrap(), "keep");
}

#[test]
fn validate_accepts_fresh_and_rejects_corrupt() {
    let f = fixture();
    let out = ipr(&["validate", "--data", p(&f.data)]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));

    let text = fs::read_to_string(&f.data).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut sample: Value = serde_json::from_str(&lines[1]).unwrap();
    sample["label"] = Value::from(17);
    let id = sample["id"].as_str().unwrap().to_string();
    lines[1] = sample.to_string();
    let corrupt = f.dir.path().join("corrupt.jsonl");
    fs::write(&corrupt, lines.join("\n") + "\n").unwrap();
    let out = ipr(&["validate", "--data", p(&corrupt)]);
    assert_eq!(code(&out), 2);
    assert!(stdout(&out).contains(&id), "{}", stdout(&out));

    let empty = f.dir.path().join("empty.jsonl");
    fs::write(&empty, "").unwrap();
    let out = ipr(&["validate", "--data", p(&empty)]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("missing header"), "{}", stderr(&out));
}

#[test]
fn train_writes_run_directory_per_mode() {
    let f = fixture();
    let base = train(&f, &["--mode", "baseline", "--seeds", "1", "--run-name", "base"]);
    assert_eq!(code(&base), 0, "{}", stderr(&base));
    let ipr_run = train(&f, &["--mode", "ipr", "--seeds", "1", "--run-name", "ipr"]);
    assert_eq!(code(&ipr_run), 0, "{}", stderr(&ipr_run));

    let runs = f.dir.path().join("runs");
    for name in ["base", "ipr"] {
        let agg: Value = serde_json::from_str(&fs::read_to_string(runs.join(name).join("aggregate.json")).unwrap()).unwrap();
        assert_eq!(agg["completed"], 1);
        assert!(agg["mean_accuracy"].is_number());
        assert!(runs.join(name).join("config.json").is_file());
        assert!(runs.join(name).join("seed-1").join("checkpoint.json").is_file());
    }
    let ipr_seed = runs.join("ipr").join("seed-1");
    for file in ["similarity.csv", "prototypes_init.json", "prototypes_final.json", "pseudo_labels.jsonl"] {
        assert!(ipr_seed.join(file).is_file(), "{file}");
    }
    let reports = fs::read_to_string(ipr_seed.join("pseudo_labels.jsonl")).unwrap();
    assert_eq!(reports.lines().count(), 48);
    assert!(!runs.join("base").join("seed-1").join("similarity.csv").exists());
}

#[test]
fn train_default_name_and_force() {
    let f = fixture();
    let out = train(&f, &["--mode", "baseline", "--seeds", "2"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let runs: Vec<_> = fs::read_dir(f.dir.path().join("runs")).unwrap().flatten().collect();
    assert_eq!(runs.len(), 1);
    let name = runs[0].file_name().into_string().unwrap();
    let (stamp, hash) = name.split_once('-').unwrap();
    assert!(stamp.ends_with('Z') && stamp.contains('T'), "{name}");
    assert_eq!(hash.len(), 12);

    let again = train(&f, &["--mode", "baseline", "--seeds", "2", "--run-name", &name]);
    assert_eq!(code(&again), 2);
    let forced = train(&f, &["--mode", "baseline", "--seeds", "2", "--run-name", &name, "--force"]);
    assert_eq!(code(&forced), 0, "{}", stderr(&forced));
}

#[test]
fn train_five_seeds_gives_five_metric_files() {
    let f = fixture();
    let out = train(&f, &["--seeds", "1,2,3,4,5", "--run-name", "five"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let run = f.dir.path().join("runs").join("five");
    for s in 1..=5 {
        assert!(run.join(format!("seed-{s}")).join("metrics.csv").is_file());
    }
    let agg: Value = serde_json::from_str(&fs::read_to_string(run.join("aggregate.json")).unwrap()).unwrap();
    assert_eq!(agg["seeds"].as_array().unwrap().len(), 5);

    let curves = f.dir.path().join("curves.csv");
    let out = ipr(&["export-curves", "--run-dir", p(&run), "--out", p(&curves)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = fs::read_to_string(&curves).unwrap();
    // 5 seeds x 3 epochs x (7 scalar metrics + 4x4 similarity cells).
    assert_eq!(text.lines().count() - 1, 5 * 3 * (7 + 16));
    assert!(text.starts_with("epoch,seed,metric,value\n"));

    let again = f.dir.path().join("curves2.csv");
    ipr(&["export-curves", "--run-dir", p(&run), "--out", p(&again)]);
    assert_eq!(fs::read(&curves).unwrap(), fs::read(&again).unwrap());
}

#[test]
fn export_curves_for_baseline_has_no_similarity() {
    let f = fixture();
    assert_eq!(code(&train(&f, &["--mode", "baseline", "--seeds", "1", "--run-name", "b"])), 0);
    let curves = f.dir.path().join("c.csv");
    let run = f.dir.path().join("runs").join("b");
    assert_eq!(code(&ipr(&["export-curves", "--run-dir", p(&run), "--out", p(&curves)])), 0);
    let text = fs::read_to_string(&curves).unwrap();
    assert!(!text.contains(",s_0_1,"));
    assert!(text.contains(",accuracy,"));
    assert_eq!(text.lines().count() - 1, 3 * 7);

    let out = ipr(&["export-curves", "--run-dir", p(f.dir.path()), "--out", p(&f.dir.path().join("z.csv"))]);
    assert_eq!(code(&out), 2);
}

#[test]
fn resolved_config_reproduces_run() {
    let f = fixture();
    let first = train(&f, &["--seeds", "7", "--set", "mu=0.3", "--run-name", "one"]);
    assert_eq!(code(&first), 0, "{}", stderr(&first));
    let runs = f.dir.path().join("runs");
    let resolved = runs.join("one").join("config.json");
    let cfg: Value = serde_json::from_str(&fs::read_to_string(&resolved).unwrap()).unwrap();
    assert_eq!(cfg["mu"], 0.3);
    let out = ipr(&[
        "train",
        "--config",
        p(&resolved),
        "--data",
        p(&f.data),
        "--out-dir",
        p(&runs),
        "--run-name",
        "two",
    ]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for file in ["metrics.csv", "similarity.csv", "checkpoint.json", "prototypes_final.json"] {
        assert_eq!(
            fs::read(runs.join("one").join("seed-7").join(file)).unwrap(),
            fs::read(runs.join("two").join("seed-7").join(file)).unwrap(),
            "{file}"
        );
    }
}

#[test]
fn eval_matches_recorded_final_accuracy() {
    let f = fixture();
    assert_eq!(code(&train(&f, &["--seeds", "4", "--run-name", "r"])), 0);
    let run = f.dir.path().join("runs").join("r");
    let out = ipr(&["eval", "--run-dir", p(&run), "--data", p(&f.data)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let acc: f64 = stdout(&out).trim().rsplit('=').next().unwrap().parse().unwrap();
    let agg: Value = serde_json::from_str(&fs::read_to_string(run.join("aggregate.json")).unwrap()).unwrap();
    let recorded = agg["seeds"][0]["final_accuracy"].as_f64().unwrap();
    assert!((acc - recorded).abs() < 1e-6, "{acc} vs {recorded}");

    let ckpt = run.join("seed-4").join("checkpoint.json");
    let st = run.join("standardizer.json");
    let out = ipr(&["eval", "--checkpoint", p(&ckpt), "--standardizer", p(&st), "--data", p(&f.data)]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains(&format!("accuracy={acc:.6}")));
}

#[test]
fn train_error_codes() {
    let f = fixture();
    let runs = f.dir.path().join("runs");
    let missing = f.dir.path().join("nope.jsonl");
    let out = ipr(&["train", "--data", p(&missing), "--out-dir", p(&runs)]);
    assert_eq!(code(&out), 2);

    let out = train(&f, &["--mode", "bogus"]);
    assert_eq!(code(&out), 2);

    let out = train(&f, &["--set", "gama=0.5"]);
    assert_eq!(code(&out), 2);

    let out = train(&f, &["--set", "gamma=2.0"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("gamma"));

    let out = train(&f, &["--seeds", "1", "--set", "learning_rate=1e300", "--run-name", "boom"]);
    assert_eq!(code(&out), 4, "{}", stderr(&out));
    assert!(stderr(&out).contains("epoch"), "{}", stderr(&out));
}
