use std::fs;
use std::path::Path;
use std::process::Command;

use serde_json::Value;

fn setnet(dir: &Path, args: &[&str]) -> (i32, Value) {
    let out = Command::new(env!("CARGO_BIN_EXE_setnet"))
        .args(args)
        .current_dir(dir)
        .output()
        .unwrap();
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 1, "expected one JSON line, got {stdout:?}");
    (out.status.code().unwrap(), serde_json::from_str(&stdout).unwrap())
}

fn write(dir: &Path, name: &str, body: &str) {
    fs::write(dir.join(name), body).unwrap();
}

#[test]
fn gradcheck_default_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let (code, v) = setnet(dir.path(), &["gradcheck", "--out", "g"]);
    assert_eq!(code, 0);
    assert!(v["result"]["max_relative_error"].as_f64().unwrap() < 1e-4);
    assert_eq!(v["result"]["passed"], true);
    assert_eq!(v["seed"], 0);
    assert!(dir.path().join("g/gradcheck.json").is_file());
}

#[test]
fn eval_ml_given_perfect_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let recs = "{\"scores\":[0.9,0.1,0.4],\"truth\":[0,2],\"pred\":[0,2]}\n\
                {\"scores\":[0.2,0.8,0.3],\"truth\":[1],\"pred\":[1]}\n\
                {\"scores\":[0.2,0.1,0.3],\"truth\":[],\"pred\":[]}\n";
    write(dir.path(), "recs.jsonl", recs);
    write(dir.path(), "cfg.json", r#"{"records": "recs.jsonl", "mode": "given"}"#);
    let (code, v) = setnet(dir.path(), &["eval-ml", "--config", "cfg.json", "--out", "e"]);
    assert_eq!(code, 0, "{v}");
    for key in ["c_p", "c_r", "c_f1", "o_p", "o_r", "o_f1"] {
        assert_eq!(v["result"]["metrics"][key], 1.0, "{key}");
    }
    assert_eq!(v["result"]["mce"], 0.0);
    let csv = fs::read_to_string(dir.path().join("e/pr_curve.csv")).unwrap();
    assert!(csv.starts_with("# schema_version=1 "));
    assert_eq!(csv.lines().count(), 2 + 4);
}

#[test]
fn counting_round_trip_beats_constant() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "synth.json", r#"{"kind": "multilabel", "n": 3000}"#);
    write(
        d,
        "train.json",
        r#"{"data": "data/multilabel_counts.jsonl", "epochs": 15}"#,
    );
    write(
        d,
        "predict.json",
        r#"{"model": "model/model.json", "features": "data/multilabel_counts.jsonl"}"#,
    );
    write(
        d,
        "eval.json",
        r#"{"records": "data/multilabel.jsonl", "mode": "predicted", "predictions": "pred/predictions.jsonl"}"#,
    );
    for (cmd, cfg, out) in [
        ("synth", "synth.json", "data"),
        ("train", "train.json", "model"),
        ("predict", "predict.json", "pred"),
    ] {
        let (code, v) = setnet(d, &[cmd, "--config", cfg, "--seed", "4", "--out", out]);
        assert_eq!(code, 0, "{cmd}: {v}");
    }
    let (code, v) = setnet(d, &["eval-ml", "--config", "eval.json", "--out", "eval"]);
    assert_eq!(code, 0, "{v}");

    let text = fs::read_to_string(d.join("data/multilabel_counts.jsonl")).unwrap();
    let truth: Vec<u64> = text
        .lines()
        .skip(1)
        .map(|l| serde_json::from_str::<Value>(l).unwrap()["count"].as_u64().unwrap())
        .collect();
    let constant = (0..=20u64)
        .map(|c| truth.iter().map(|&t| c.abs_diff(t) as f64).sum::<f64>() / truth.len() as f64)
        .fold(f64::INFINITY, f64::min);
    let got = v["result"]["mce"].as_f64().unwrap();
    assert!(got <= 0.8 * constant, "mce {got} vs best constant {constant}");
}

#[test]
fn nms_sources() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "synth.json", r#"{"kind": "boxes", "n": 30}"#);
    write(d, "train.json", r#"{"data": "data/box_counts.jsonl", "epochs": 5}"#);
    assert_eq!(setnet(d, &["synth", "--config", "synth.json", "--out", "data"]).0, 0);
    assert_eq!(setnet(d, &["train", "--config", "train.json", "--out", "model"]).0, 0);
    let configs = [
        r#"{"proposals": "data/proposals.txt"}"#,
        r#"{"proposals": "data/proposals.txt", "source": "fixed", "m_star": 2}"#,
        r#"{"proposals": "data/proposals.txt", "source": "file", "counts": "data/box_counts.jsonl"}"#,
        r#"{"proposals": "data/proposals.txt", "source": "model", "model": "model/model.json", "features": "data/image_features.jsonl"}"#,
    ];
    for (i, cfg) in configs.iter().enumerate() {
        write(d, "nms.json", cfg);
        let (code, v) = setnet(d, &["nms", "--config", "nms.json", "--out", &format!("nms{i}")]);
        assert_eq!(code, 0, "{cfg}: {v}");
        if i == 1 {
            assert!(v["result"]["kept"].as_u64().unwrap() <= 2 * v["result"]["images"].as_u64().unwrap());
        }
    }
    write(
        d,
        "nms.json",
        r#"{"proposals": "data/proposals.txt", "source": "fixed"}"#,
    );
    assert_eq!(setnet(d, &["nms", "--config", "nms.json"]).1["code"], "config");
}

#[test]
fn sample_reports_cardinality_fit() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "s.json",
        r#"{"cardinality": {"pmf": [0.0, 0.0, 1.0]}, "element": {"categorical": [0.5, 0.5]}, "n": 50}"#,
    );
    let (code, v) = setnet(dir.path(), &["sample", "--config", "s.json", "--out", "s"]);
    assert_eq!(code, 0, "{v}");
    assert_eq!(v["result"]["mean_cardinality"], 2.0);
    let text = fs::read_to_string(dir.path().join("s/samples.jsonl")).unwrap();
    assert!(text
        .lines()
        .skip(1)
        .all(|l| serde_json::from_str::<Value>(l).unwrap()["elements"]
            .as_array()
            .unwrap()
            .len()
            == 2));
}

#[test]
fn error_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (code, v) = setnet(d, &["train", "--config", "missing.json"]);
    assert_eq!((code, v["code"].as_str()), (1, Some("config")));

    write(d, "unknown.json", r#"{"data": "x.jsonl", "learning_rat": 0.1}"#);
    assert_eq!(setnet(d, &["train", "--config", "unknown.json"]).1["code"], "config");

    write(d, "bad.jsonl", "{\"features\": [1.0], \"count\": 2}\nnot json\n");
    write(d, "train.json", r#"{"data": "bad.jsonl"}"#);
    let (code, v) = setnet(d, &["train", "--config", "train.json"]);
    assert_eq!((code, v["code"].as_str()), (1, Some("data")));
    assert!(v["message"].as_str().unwrap().contains("bad.jsonl:2"));

    write(
        d,
        "big.jsonl",
        "{\"features\": [1.0], \"count\": 5000}\n{\"features\": [-1.0], \"count\": 0}\n",
    );
    write(
        d,
        "diverge.json",
        r#"{"data": "big.jsonl", "objective": "regression", "learning_rate": 1e6, "epochs": 50, "batch_size": 2}"#,
    );
    let (code, v) = setnet(d, &["train", "--config", "diverge.json"]);
    assert_eq!((code, v["code"].as_str()), (1, Some("numeric")), "{v}");

    let (code, v) = setnet(d, &["no-such-command"]);
    assert_eq!((code, v["code"].as_str()), (1, Some("config")));
}
