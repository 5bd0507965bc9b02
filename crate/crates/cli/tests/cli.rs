use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use depwise::checkpoint::Checkpoint;
use depwise::taskgen::read_jsonl_file;
use tempfile::TempDir;

fn depwise(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_depwise"))
        .args(args)
        .env("DEPWISE_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn path(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_string_lossy().into_owned()
}

fn gen(dir: &TempDir, name: &str, extra: &[&str]) -> String {
    let out = path(dir, name);
    let mut args = vec!["gen", "--out", &out];
    args.extend_from_slice(extra);
    let o = depwise(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

#[test]
fn gen_writes_requested_hops_and_is_repeatable() {
    let dir = TempDir::new().unwrap();
    let a = gen(
        &dir,
        "a.jsonl",
        &["--k", "3", "--n", "100", "--noise", "none", "--seed", "4"],
    );
    let b = gen(
        &dir,
        "b.jsonl",
        &["--k", "3", "--n", "100", "--noise", "none", "--seed", "4"],
    );
    let text = fs::read(&a).unwrap();
    assert_eq!(text, fs::read(&b).unwrap());
    let data = read_jsonl_file(&a).unwrap();
    assert_eq!(data.len(), 100);
    assert!(data.iter().all(|s| s.k == 3));
    assert_eq!(String::from_utf8(text).unwrap().lines().count(), 100);
}

#[test]
fn gen_prints_a_label_histogram() {
    let dir = TempDir::new().unwrap();
    let out = path(&dir, "h.jsonl");
    let o = depwise(&["gen", "--k", "1-5", "--n", "90", "--out", &out]);
    let s = stdout(&o);
    for label in ["above", "lower-right", "overlap"] {
        assert!(
            s.lines()
                .any(|l| l.trim_start().starts_with(label) && l.trim_end().ends_with("10")),
            "{s}"
        );
    }
    let ks: Vec<usize> = read_jsonl_file(&out).unwrap().iter().map(|s| s.k).collect();
    assert!((1..=5).all(|k| ks.contains(&k)));
}

#[test]
fn usage_errors_exit_two() {
    let dir = TempDir::new().unwrap();
    let out = path(&dir, "x.jsonl");
    assert_eq!(
        depwise(&["gen", "--k", "11", "--n", "1", "--out", &out]).status.code(),
        Some(2)
    );
    assert_eq!(
        depwise(&["gen", "--k", "2", "--n", "1", "--noise", "loud", "--out", &out])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(depwise(&["eval", "--data", &out]).status.code(), Some(2));
    assert_eq!(
        depwise(&["eval", "--data", &out, "--exact", "--ckpt", &out])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(depwise(&["prop", "--suite", "nope"]).status.code(), Some(2));
    assert!(!Path::new(&out).exists());
}

#[test]
fn missing_and_malformed_inputs_exit_one() {
    let dir = TempDir::new().unwrap();
    let missing = path(&dir, "missing.jsonl");
    let o = depwise(&["eval", "--data", &missing, "--exact"]);
    assert_eq!(o.status.code(), Some(1));

    let data = gen(&dir, "d.jsonl", &["--k", "2", "--n", "3"]);
    let mut text = fs::read_to_string(&data).unwrap();
    text.push_str("{not json\n");
    fs::write(&data, text).unwrap();
    let ckpt = path(&dir, "m.json");
    let o = depwise(&["train", "--data", &data, "--out-ckpt", &ckpt]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 4"));
}

#[test]
fn exact_eval_is_perfect_and_writes_csv() {
    let dir = TempDir::new().unwrap();
    let data = gen(&dir, "e.jsonl", &["--k", "1-10", "--n", "200", "--noise", "supporting"]);
    let csv = path(&dir, "e.csv");
    let o = depwise(&["eval", "--data", &data, "--exact", "--csv", &csv]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("overall: 1.0000 (200/200)"));
    let table = fs::read_to_string(&csv).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next(), Some("k,noise,n,accuracy"));
    assert!(lines.all(|l| l.ends_with(",1")));
}

fn write_config(dir: &TempDir, name: &str, json: &str) -> String {
    let p = path(dir, name);
    fs::write(&p, json).unwrap();
    p
}

#[test]
fn training_writes_checkpoint_history_and_resumes() {
    let dir = TempDir::new().unwrap();
    let data = gen(&dir, "t.jsonl", &["--k", "1-2", "--n", "50", "--seed", "1"]);
    let cfg = write_config(
        &dir,
        "c.json",
        r#"{"d": 8, "train": {"max_epochs": 2, "batch_size": 8}}"#,
    );
    let ckpt = path(&dir, "m.json");
    let o = depwise(&["train", "--data", &data, "--config", &cfg, "--out-ckpt", &ckpt]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let ck = Checkpoint::load(&ckpt).unwrap();
    assert_eq!((ck.d, ck.epoch), (8, 2));
    ck.to_model().unwrap();
    let hist = fs::read_to_string(format!("{ckpt}.history.csv")).unwrap();
    assert_eq!(hist.lines().next(), Some("epoch,train_loss,val_loss,lr"));
    assert_eq!(hist.lines().count(), 3);

    let resumed = path(&dir, "m2.json");
    let history = path(&dir, "h2.csv");
    let o = depwise(&[
        "train",
        "--data",
        &data,
        "--config",
        &cfg,
        "--out-ckpt",
        &resumed,
        "--history",
        &history,
        "--resume",
        &ckpt,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let epochs: Vec<String> = fs::read_to_string(&history)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap().to_string())
        .collect();
    assert_eq!(epochs, ["3", "4"]);
    assert_eq!(Checkpoint::load(&resumed).unwrap().epoch, 4);

    let o = depwise(&["eval", "--data", &data, "--ckpt", &resumed]);
    assert!(o.status.success());
}

#[test]
fn zero_learning_rate_checkpoint_matches_initialization() {
    let dir = TempDir::new().unwrap();
    let data = gen(&dir, "z.jsonl", &["--k", "1", "--n", "20"]);
    let cfg = write_config(
        &dir,
        "z.json",
        r#"{"d": 8, "model_seed": 3, "train": {"lr_engine": 0, "lr_embed": 0, "max_epochs": 2}}"#,
    );
    let ckpt = path(&dir, "z-model.json");
    assert!(
        depwise(&["train", "--data", &data, "--config", &cfg, "--out-ckpt", &ckpt])
            .status
            .success()
    );
    let init = depwise::model::ModelParams::init(
        depwise::engine::EngineConfig::new(8, depwise::engine::AggregatorKind::RecurrentGated),
        3,
    )
    .unwrap();
    assert_eq!(Checkpoint::load(&ckpt).unwrap().to_model().unwrap(), init);
}

#[test]
fn checkpoint_version_mismatch_is_reported() {
    let dir = TempDir::new().unwrap();
    let data = gen(&dir, "v.jsonl", &["--k", "1", "--n", "10"]);
    let cfg = write_config(&dir, "v.json", r#"{"d": 6, "train": {"max_epochs": 1}}"#);
    let ckpt = path(&dir, "v-model.json");
    assert!(
        depwise(&["train", "--data", &data, "--config", &cfg, "--out-ckpt", &ckpt])
            .status
            .success()
    );
    let text = fs::read_to_string(&ckpt)
        .unwrap()
        .replace("depwise-model/1", "depwise-model/0");
    fs::write(&ckpt, text).unwrap();
    let o = depwise(&["eval", "--data", &data, "--ckpt", &ckpt]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("version"));
}

#[test]
fn grad_suite_passes() {
    let o = depwise(&["prop", "--suite", "grad"]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(stdout(&o).contains("PASS  grad/every_op"));
}

#[test]
fn tpr_suite_reports_crosstalk() {
    let o = depwise(&["prop", "--suite", "tpr"]);
    let s = stdout(&o);
    assert!(
        s.contains("tpr/orthonormal_recovery") && s.contains("tpr/crosstalk_scale"),
        "{s}"
    );
    // exit status mirrors the per-property lines
    assert_eq!(o.status.success(), !s.contains("FAIL"));
}

#[test]
fn noise_suite_passes() {
    assert!(depwise(&["prop", "--suite", "noise"]).status.success());
}

const HUB_STORY: &str = "C is to the right of Y and is on the same horizontal plane.\n\
    K is to the lower left of C.\n\
    E is above Y.\n\
    Y is to the left of X and is on the same horizontal plane.\n\
    What is the relation of the agent K to the agent E?";

#[test]
fn demo_traces_the_hub_story() {
    let dir = TempDir::new().unwrap();
    let story = write_config(&dir, "story.txt", HUB_STORY);
    let o = depwise(&["demo", "--story-file", &story]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = stdout(&o);
    assert!(s.contains("path: K -> C -> Y -> E (3 hops)"), "{s}");
    assert!(s.contains("predicted: below"), "{s}");
}

#[test]
fn demo_single_hop_and_disconnected() {
    let o = depwise(&[
        "demo",
        "--inline-text",
        "A is above B. What is the relation of the agent A to the agent B?",
    ]);
    let s = stdout(&o);
    assert!(s.contains("collect: empty"), "{s}");
    assert!(s.contains("predicted: above"), "{s}");

    let o = depwise(&[
        "demo",
        "--inline-text",
        "A is above B. C is below D. What is the relation of the agent A to the agent D?",
    ]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("no path"));

    let o = depwise(&["demo", "--inline-text", "A floats near B."]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn sweep_writes_the_contract_columns() {
    let dir = TempDir::new().unwrap();
    let data = gen(&dir, "s.jsonl", &["--k", "1-3", "--n", "40", "--seed", "2"]);
    let test = gen(&dir, "st.jsonl", &["--k", "1-3", "--n", "27", "--seed", "3"]);
    let cfg = write_config(
        &dir,
        "sc.json",
        r#"{"d": 6, "layers": [1, 2], "train": {"max_epochs": 1}}"#,
    );
    let out = path(&dir, "sweep.csv");
    let o = depwise(&[
        "sweep", "--data", &data, "--test", &test, "--config", &cfg, "--out", &out,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(&out).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("model,layers,k,accuracy"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.iter().filter(|r| r.starts_with("breadth,")).count(), 6);
    assert_eq!(rows.iter().filter(|r| r.starts_with("depwignn,,")).count(), 3);
}

#[test]
fn bad_thread_setting_is_a_usage_error() {
    let o = Command::new(env!("CARGO_BIN_EXE_depwise"))
        .args(["prop", "--suite", "bfs"])
        .env("DEPWISE_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}
