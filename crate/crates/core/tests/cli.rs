//! End-to-end runs of the `dvc` binary.

use std::path::Path;
use std::process::{Command, Output};

use dvc_core::dataio::{curve_from_csv, read_predictions, Checkpoint};

fn dvc(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dvc"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(o: &Output) {
    assert_eq!(o.status.code(), Some(0), "stdout: {}\nstderr: {}", stdout(o), stderr(o));
}

const SMALL: &str = r#"{
    "synth.num_videos": 4, "synth.t_f": 32, "synth.d0": 8,
    "tep.input_len": 32, "tep.input_dim": 8, "tep.base_filters": [16, 16],
    "tep.anchor_layers": 3, "tep.anchor_filters": 16,
    "sg.embed": 16, "sg.hidden": 16,
    "train.epochs": 2, "train.pretrain_epochs": 2,
    "eval.an_max": 10, "eval.metrics": ["meteor_lite", "bleu4"]
}"#;

#[test]
fn full_recipe_runs_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("small.json"), SMALL).unwrap();
    let cfg = ["--config", "small.json"];
    let with = |extra: &[&str]| -> Output { dvc(d, &[&cfg[..], extra].concat()) };

    ok(&with(&["--seed", "7", "--out", "corpus", "gen-synth"]));
    ok(&with(&["--out", "sg", "pretrain-sg", "--data", "corpus/manifest.json"]));
    assert!(d.join("sg/pretrain_log.jsonl").exists());
    ok(&with(&["--out", "run", "--checkpoint", "sg/sg_pretrained.dvck", "train", "--data", "corpus/manifest.json"]));
    let log = std::fs::read_to_string(d.join("run/train_log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 2 * 4);

    let model = ["--checkpoint", "run/model.dvck"];
    ok(&with(&[&model[..], &["--out", "eval", "propose", "--data", "corpus/manifest.json"]].concat()));
    let proposals = read_predictions(&d.join("eval/proposals.json")).unwrap();
    assert_eq!(proposals.len(), 4);
    ok(&with(&[&model[..], &["--out", "eval", "caption", "--data", "corpus/manifest.json"]].concat()));
    let captions = read_predictions(&d.join("eval/captions.json")).unwrap();
    assert!(captions.values().flatten().all(|r| r.sentence.is_some()));

    let dense = with(&["eval-dense", "--data", "corpus/manifest.json", "--predictions", "eval/captions.json"]);
    ok(&dense);
    assert!(stdout(&dense).contains("meteor_lite") && stdout(&dense).contains("bleu4"));

    let ar = with(&["--out", "eval", "eval-proposals", "--data", "corpus/manifest.json", "--predictions", "eval/proposals.json"]);
    ok(&ar);
    let curve = curve_from_csv(&std::fs::read_to_string(d.join("eval/ar_an.csv")).unwrap()).unwrap();
    assert_eq!(curve.points.len(), 10);
    assert!(stdout(&ar).contains(&format!("AUC {:.4}", curve.auc)));

    // Same seed, same bytes.
    ok(&with(&["--out", "run2", "--checkpoint", "sg/sg_pretrained.dvck", "train", "--data", "corpus/manifest.json"]));
    assert_eq!(std::fs::read(d.join("run/model.dvck")).unwrap(), std::fs::read(d.join("run2/model.dvck")).unwrap());
    assert_eq!(log, std::fs::read_to_string(d.join("run2/train_log.jsonl")).unwrap());
    let ckpt = Checkpoint::load(&d.join("run/model.dvck")).unwrap();
    assert_eq!(ckpt.metadata.get("stage").map(String::as_str), Some("joint"));
}

#[test]
fn ground_truth_as_predictions_scores_perfect_recall() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&dvc(d, &["--seed", "7", "--out", "corpus", "gen-synth"]));
    // Every video has at most four events, so AR is 1 from AN = 4 on.
    std::fs::write(d.join("an.json"), r#"{"eval.an_min": 4, "eval.an_max": 20}"#).unwrap();
    let o = dvc(d, &["--config", "an.json", "--out", "eval", "eval-proposals", "--data", "corpus/manifest.json", "--ground-truth"]);
    ok(&o);
    assert_eq!(stdout(&o).trim(), "AUC 1.0000");
}

#[test]
fn exit_codes_separate_validation_and_runtime_errors() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&dvc(d, &["--seed", "3", "--out", "corpus", "gen-synth"]));

    let o = dvc(d, &["--out", "run", "train", "--data", "corpus/manifest.json"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("pretrain-sg"));

    std::fs::write(d.join("bad.json"), r#"{"train.lr2": 0.1}"#).unwrap();
    let o = dvc(d, &["--config", "bad.json", "--out", "x", "gen-synth"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("train.lr2"));

    std::fs::write(d.join("neg.json"), r#"{"train.epochs": -1}"#).unwrap();
    assert_eq!(dvc(d, &["--config", "neg.json", "--out", "x", "gen-synth"]).status.code(), Some(2));

    std::fs::write(d.join("junk.dvck"), b"not a checkpoint").unwrap();
    let o = dvc(d, &["--checkpoint", "junk.dvck", "--out", "x", "propose", "--data", "corpus/manifest.json"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));

    let o = dvc(d, &["eval-proposals", "--data", "missing/manifest.json", "--ground-truth"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));

    assert_eq!(dvc(d, &["no-such-command"]).status.code(), Some(2));
}
