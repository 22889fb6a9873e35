use std::path::Path;
use std::process::{Command, Output};

use sanvaad::landmarks::{load_dataset, read_feature_dump};
use sanvaad::signplan::{load_dictionary, SignPlan};
use sanvaad::quantize::load_container;
use sanvaad::{extract_features, load_model, Label, Precision};

const DATA: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data");

fn sanvaad(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sanvaad"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = sanvaad(args);
    assert!(
        out.status.success(),
        "{args:?} failed\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn dataset_commands() {
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw.jsonl");
    ok(&["synth", "--out", p(&raw), "--per-class", "4", "--seed", "2"]);
    let samples = load_dataset(&raw).unwrap();
    assert_eq!(samples.len(), 140);

    let big = dir.path().join("big.jsonl");
    let out = ok(&["augment", "--in", p(&raw), "--out", p(&big), "--seed", "1"]);
    assert!(out.contains("140 -> 420"), "{out}");
    assert_eq!(load_dataset(&big).unwrap().len(), 420);

    // a custom label spelling plus a frame with no hands
    let text = std::fs::read_to_string(&raw).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let first_label = format!("\"label\":\"{}\"", samples[0].label.as_str());
    lines[0] = lines[0].replacen(&first_label, "\"label\":\"letter_q\"", 1);
    lines.push(r#"{"label":"A","left":null,"right":null}"#.into());
    let custom = dir.path().join("custom.jsonl");
    std::fs::write(&custom, lines.join("\n")).unwrap();

    let feats = dir.path().join("features.bin");
    assert!(!sanvaad(&["extract", "--in", p(&custom), "--out", p(&feats)]).status.success());
    let out = ok(&["extract", "--in", p(&custom), "--out", p(&feats), "--alias", "letter_q=Q"]);
    assert!(out.contains("140 feature rows"), "{out}");
    assert!(out.contains("1 frames without hands"), "{out}");
    let rows = read_feature_dump(&feats).unwrap();
    assert_eq!(rows.len(), 140);
    assert_eq!(rows[0].1, Label::from_symbol("Q").unwrap());
    for ((f, _), s) in rows.iter().zip(&samples).skip(1) {
        let want = extract_features(&s.frame).unwrap();
        for (a, b) in f.values().iter().zip(want.values()) {
            assert_eq!(*a, *b as f32 as f64);
        }
    }
}

#[test]
fn train_eval_quantize() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("m.snvd");
    let log = dir.path().join("log.csv");
    let out = ok(&[
        "train", "--synthetic", "10", "--width", "32", "--epochs", "2", "--seed", "3", "--out", p(&model),
        "--log", p(&log),
    ]);
    assert_eq!(out.lines().filter(|l| l.starts_with("epoch")).count(), 3);
    assert_eq!(std::fs::read_to_string(&log).unwrap().lines().count(), 4);
    let m = load_model(&model).unwrap();
    assert_eq!(m.network.spec.width, 32);
    assert_eq!(m.metadata.seed, 3);

    let report = dir.path().join("report.json");
    let confusion = dir.path().join("cm.csv");
    let out = ok(&[
        "eval", "--model", p(&model), "--synthetic", "10", "--report", p(&report), "--confusion", p(&confusion),
    ]);
    assert!(out.contains("accuracy"), "{out}");
    let r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r["total"], 350);
    assert_eq!(r["classes"].as_array().unwrap().len(), 35);
    let acc = r["accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));
    let csv = std::fs::read_to_string(&confusion).unwrap();
    assert_eq!(csv.lines().count(), 36);
    ok(&["eval", "--model", p(&model), "--synthetic", "4", "--corrupt"]);

    let q = dir.path().join("q.snvd");
    let out = ok(&["quantize", "--in", p(&model), "--out", p(&q)]);
    assert!(out.contains('%'), "{out}");
    assert!(std::fs::metadata(&q).unwrap().len() < std::fs::metadata(&model).unwrap().len());
    assert_eq!(load_container(&q).unwrap().metadata.precision, Precision::Int8);
    assert_eq!(load_model(&q).unwrap().network.spec, m.network.spec);
}

#[test]
fn translate_and_content() {
    let dict = format!("{DATA}/dictionary.json");
    let text = "Thank you, zebra!";
    let plan: SignPlan = serde_json::from_str(&ok(&["translate", text, "--dict", &dict])).unwrap();
    assert_eq!(plan, load_dictionary(&dict).unwrap().translate(text));

    let out = ok(&["content", "--lang", "marathi", "--topic", "sports", "--store-dir", DATA]);
    let bundle: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(bundle["entries"].as_array().unwrap().len(), 3);
    assert_eq!(bundle["language"], "marathi");
}

#[test]
fn failures_are_reported() {
    let out = sanvaad(&["eval", "--model", "/no/such/model.snvd", "--synthetic", "2"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("/no/such/model.snvd"));

    let out = sanvaad(&["train", "--out", "x.snvd"]);
    assert!(!out.status.success());

    let out = sanvaad(&["serve", "--model", "/no/such/model.snvd", "--port", "0"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("/no/such/model.snvd"));

    let out = Command::new(env!("CARGO_BIN_EXE_sanvaad"))
        .args(["serve", "--port", "0"])
        .env("SANVAAD_MODEL", "/env/model.snvd")
        .output()
        .unwrap();
    assert!(String::from_utf8_lossy(&out.stderr).contains("/env/model.snvd"));
}
