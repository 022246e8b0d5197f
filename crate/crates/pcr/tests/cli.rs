mod common;

use std::path::Path;
use std::process::{Command, Output};

fn pcr(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_pcr"));
    cmd.args(args).env("RUST_LOG", "info");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn fixture_args(out: &Path) -> Vec<String> {
    vec![
        "--dump".into(),
        common::fixture("posts.xml").display().to_string(),
        "--knowledge".into(),
        common::fixture("knowledge.jsonl").display().to_string(),
        "--out-dir".into(),
        out.display().to_string(),
        "--set".into(),
        "rare_tag_theta=3".into(),
        "--set".into(),
        "folds=5".into(),
    ]
}

fn run(stage: &str, out: &Path, extra: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut args = vec![stage.to_string()];
    args.extend(fixture_args(out));
    args.extend(extra.iter().map(|s| s.to_string()));
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    pcr(&refs, envs)
}

#[test]
fn missing_dump_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.xml");
    let o = pcr(&["ingest", "--dump", missing.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("nope.xml"));
}

#[test]
fn evaluate_without_predictions_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("evaluate", dir.path(), &[], &[]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("predictions.jsonl"));
}

#[test]
fn bad_config_exits_3_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("ingest", dir.path(), &["--set", "max_len=0"], &[]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("max_len"), "{}", stderr(&o));

    let o = run("ingest", dir.path(), &[], &[("PCR_EPOCHS", "many")]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("epochs"));

    let o = run("ingest", dir.path(), &["--set", "colour=blue"], &[]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn stage_failure_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let dump = dir.path().join("broken.xml");
    std::fs::write(&dump, "<posts><row Id=\"1\" Score=\"1\" PostTypeId=\"1\"").unwrap();
    let o = pcr(&["ingest", "--dump", dump.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap()], &[]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("ingest"));
}

#[test]
fn flags_beat_env_beat_file() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("pcr.conf");
    std::fs::write(&conf, "# fixture\nrare_tag_theta = 50\nnecessity_threshold = 100\n").unwrap();
    let o = run(
        "ingest",
        dir.path(),
        &["--config", conf.to_str().unwrap()],
        &[("PCR_NECESSITY_THRESHOLD", "4")],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let o = run(
        "preprocess",
        dir.path(),
        &["--config", conf.to_str().unwrap()],
        &[("PCR_NECESSITY_THRESHOLD", "4")],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    // theta 3 from the flags survives the file's 50
    let tags: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("tags.json")).unwrap()).unwrap();
    assert!(tags.get("regex").is_some());
    // threshold 4 from the environment beats the file's 100
    let corpus = std::fs::read_to_string(dir.path().join("corpus.jsonl")).unwrap();
    assert!(corpus.contains("\"necessary\""));
}

#[test]
fn json_logs_are_json() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("ingest", dir.path(), &["--json-logs"], &[]);
    assert!(o.status.success());
    let err = stderr(&o);
    let first = err.lines().next().expect("a log line");
    let v: serde_json::Value = serde_json::from_str(first).unwrap();
    assert_eq!(v["level"], "INFO");
}

#[test]
fn all_twice_gives_identical_reports() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let extra = ["--seed", "7", "--set", "epochs=2", "--set", "learning_rate=0.01"];
    for (dir, jobs) in [(&a, "1"), (&b, "3")] {
        let o = run("all", dir.path(), &[&extra[..], &["--jobs", jobs]].concat(), &[]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for f in ["posts.jsonl", "corpus.jsonl", "graphs.jsonl", "model.json", "predictions.jsonl", "report.json", "report.txt"] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert!(x == y, "{f} differs between runs");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(a.path().join("evaluate.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn cross_validation_writes_every_fold() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("all", dir.path(), &["--set", "cross_validate=true", "--set", "epochs=1"], &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let cv: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("cv_report.json")).unwrap()).unwrap();
    assert_eq!(cv["folds"].as_array().unwrap().len(), 5);
    let table = std::fs::read_to_string(dir.path().join("cv_report.txt")).unwrap();
    assert!(table.lines().any(|l| l.starts_with("mean")));
}
