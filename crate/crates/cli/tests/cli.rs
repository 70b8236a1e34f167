use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use tempfile::TempDir;

const WORDS: &[&str] = &[
    "a", "man", "dog", "cat", "on", "the", "bench", "red", "car", "street", "with", "ball", "park", "pizza", "two",
    "people", "horse", "beach", "umbrella", "in",
];

fn capscore(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_capscore"));
    cmd.args(args).env_remove("CAPSCORE_THREADS");
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = capscore(args, &[]);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn annotations(dir: &Path, images: u64) -> PathBuf {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut anns = Vec::new();
    for img in 1..=images {
        for k in 0..5 {
            let len = rng.gen_range(5..=10);
            let text: Vec<&str> = (0..len).map(|_| *WORDS.choose(&mut rng).unwrap()).collect();
            anns.push(json!({"id": img * 10 + k, "image_id": img, "caption": text.join(" ")}));
        }
    }
    let imgs: Vec<Value> = (1..=images).map(|id| json!({"id": id})).collect();
    let path = dir.join("ann.json");
    fs::write(&path, json!({"images": imgs, "annotations": anns}).to_string()).unwrap();
    path
}

/// Every file under `dir`, keyed by relative path. The echoed config is
/// skipped since it records the output directory.
fn tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        if path.is_dir() {
            for (k, v) in tree(&path) {
                out.insert(format!("{name}/{k}"), v);
            }
        } else if name != "config.toml" {
            out.insert(name, fs::read(&path).unwrap());
        }
    }
    out
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn fixtures_score_reproduces_worked_example() {
    let dir = TempDir::new().unwrap();
    let fx = dir.path().join("fx");
    ok(&["fixtures", "--out", p(&fx)]);
    let first = tree(&fx);
    ok(&["fixtures", "--out", p(&fx)]);
    assert_eq!(first, tree(&fx));

    let out = dir.path().join("scores");
    ok(&[
        "score",
        "--annotations",
        p(&fx.join("annotations.json")),
        "--candidates",
        p(&fx.join("candidates.json")),
        "--metrics",
        "bleu-1,bleu-2,bleu-3",
        "--out",
        p(&out),
    ]);
    let summary = read_json(&out.join("summary.json"));
    let text = summary.to_string();
    for (name, expected) in [("BLEU-1", 0.727273), ("BLEU-2", 0.381385), ("BLEU-3", 0.252830)] {
        let v = find_number(&summary, name).unwrap_or_else(|| panic!("{name} missing from {text}"));
        assert!((v - expected).abs() < 1e-6, "{name} {v}");
    }
    assert!(out.join("scores.csv").exists());
    assert!(out.join("config.toml").exists());
}

/// First numeric value stored under a key equal to `name`, or in an object
/// whose "metric" field is `name`.
fn find_number(v: &Value, name: &str) -> Option<f64> {
    match v {
        Value::Object(map) => {
            if let Some(x) = map.get(name).and_then(Value::as_f64) {
                return Some(x);
            }
            if map.get("metric").and_then(Value::as_str) == Some(name) {
                for key in ["aggregate", "score", "value"] {
                    if let Some(x) = map.get(key).and_then(Value::as_f64) {
                        return Some(x);
                    }
                }
            }
            map.values().find_map(|x| find_number(x, name))
        }
        Value::Array(items) => items.iter().find_map(|x| find_number(x, name)),
        _ => None,
    }
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let ann = annotations(dir.path(), 3);
    let out = dir.path().join("o");
    let code = |args: &[&str]| capscore(args, &[]).status.code().unwrap();

    assert_eq!(code(&["score", "--annotations", p(&ann), "--metrics", "nope", "--out", p(&out)]), 1);
    assert_eq!(code(&["score", "--annotations", p(&dir.path().join("missing.json"))]), 1);
    assert_eq!(code(&["rank-eval", "--annotations", p(&ann), "--tie-mode", "sometimes"]), 1);
    assert_eq!(code(&["score", "--bogus-flag"]), 2);

    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{\"images\": [").unwrap();
    let o = capscore(&["score", "--annotations", p(&bad), "--out", p(&out)], &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line"));
}

#[test]
fn perturb_is_deterministic_and_feeds_rank_eval() {
    let dir = TempDir::new().unwrap();
    let ann = annotations(dir.path(), 40);
    let t1 = dir.path().join("t1");
    let t2 = dir.path().join("t2");
    for t in [&t1, &t2] {
        ok(&["perturb", "--annotations", p(&ann), "--mode", "replace", "--seed", "9", "--out", p(t)]);
    }
    assert_eq!(tree(&t1), tree(&t2));
    let manifest = read_json(&t1.join("tiers.json"));
    let names: Vec<&str> = manifest.as_array().unwrap().iter().map(|e| e["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["Random", "Replace50", "Replace25", "Human"]);

    let r1 = dir.path().join("r1");
    ok(&["rank-eval", "--annotations", p(&ann), "--tiers", p(&t1), "--metrics", "bleu-4,rouge-l", "--out", p(&r1)]);
    let summary = fs::read_to_string(r1.join("summary.csv")).unwrap();
    assert!(summary.starts_with("metric,rho,signature"));
    assert_eq!(summary.lines().count(), 3);

    let r2 = dir.path().join("r2");
    let out = capscore(
        &["rank-eval", "--annotations", p(&ann), "--tiers", p(&t1), "--metrics", "bleu-4,rouge-l", "--out", p(&r2)],
        &[("CAPSCORE_THREADS", "1")],
    );
    assert!(out.status.success());
    assert_eq!(tree(&r1), tree(&r2));
    assert_eq!(capscore(&["rank-eval", "--annotations", p(&ann)], &[("CAPSCORE_THREADS", "zero")]).status.code(), Some(1));
}

#[test]
fn single_tier_manifest_is_rejected() {
    let dir = TempDir::new().unwrap();
    let ann = annotations(dir.path(), 5);
    let t = dir.path().join("t");
    ok(&["perturb", "--annotations", p(&ann), "--mode", "shuffle", "--out", p(&t)]);
    let manifest = read_json(&t.join("tiers.json"));
    let one = json!([manifest[manifest.as_array().unwrap().len() - 1]]);
    fs::write(t.join("tiers.json"), one.to_string()).unwrap();
    let out = capscore(&["rank-eval", "--annotations", p(&ann), "--tiers", p(&t), "--out", p(&dir.path().join("r"))], &[]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn external_scores_only() {
    let dir = TempDir::new().unwrap();
    let ann = annotations(dir.path(), 6);
    let t = dir.path().join("t");
    ok(&["perturb", "--annotations", p(&ann), "--mode", "shuffle", "--fraction", "1.0", "--out", p(&t)]);
    let mut scores = serde_json::Map::new();
    for (tier, v) in [("ShuffleAll", 0.1), ("Original", 0.9)] {
        for img in 1..=6 {
            scores.insert(format!("{tier}/{img}"), json!(v + img as f64 * 1e-3));
        }
    }
    let ext = dir.path().join("spice.json");
    fs::write(&ext, json!({"metric": "SPICE", "scores": scores}).to_string()).unwrap();
    let r = dir.path().join("r");
    ok(&[
        "rank-eval",
        "--annotations",
        p(&ann),
        "--tiers",
        p(&t),
        "--external-scores",
        p(&ext),
        "--out",
        p(&r),
    ]);
    let summary = fs::read_to_string(r.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 2, "{summary}");
    assert!(summary.contains("SPICE"));
    let rho: f64 = summary.lines().nth(1).unwrap().split(',').nth(1).unwrap().parse().unwrap();
    assert!(rho > 0.8, "{rho}");

    scores.remove("Original/3");
    fs::write(&ext, json!({"metric": "SPICE", "scores": scores}).to_string()).unwrap();
    let out = capscore(
        &["rank-eval", "--annotations", p(&ann), "--tiers", p(&t), "--external-scores", p(&ext), "--out", p(&r)],
        &[],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn model_vs_human_from_candidates() {
    let dir = TempDir::new().unwrap();
    let ann = annotations(dir.path(), 30);
    let cands: Vec<Value> = (1..=30).map(|img| json!({"image_id": img, "caption": "pizza pizza horse"})).collect();
    let cand_path = dir.path().join("model.json");
    fs::write(&cand_path, Value::Array(cands).to_string()).unwrap();
    let r = dir.path().join("r");
    ok(&[
        "rank-eval",
        "--annotations",
        p(&ann),
        "--candidates",
        p(&cand_path),
        "--metrics",
        "cider",
        "--bins",
        "10",
        "--out",
        p(&r),
    ]);
    let summary = fs::read_to_string(r.join("summary.csv")).unwrap();
    assert!(summary.lines().count() == 2, "{summary}");
}

#[test]
fn config_file_with_flag_overrides() {
    let dir = TempDir::new().unwrap();
    let ann = annotations(dir.path(), 20);
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        format!(
            "annotations = {:?}\nmetrics = [\"bleu-1\"]\nmode = \"shuffle\"\nseed = 4\ntie_mode = \"random(3)\"\nbins = 8\n",
            p(&ann)
        ),
    )
    .unwrap();
    let a = dir.path().join("a");
    ok(&["rank-eval", "--config", p(&cfg), "--out", p(&a)]);
    let written = fs::read_to_string(a.join("config.toml")).unwrap();
    assert!(written.contains("random(3)"), "{written}");

    let b = dir.path().join("b");
    ok(&["rank-eval", "--config", p(&cfg), "--metrics", "rouge-l", "--bins", "5", "--out", p(&b)]);
    let summary = fs::read_to_string(b.join("summary.csv")).unwrap();
    assert!(summary.contains("ROUGE"), "{summary}");
    assert!(!summary.contains("BLEU"));

    fs::write(&cfg, "unknown_key = 1\n").unwrap();
    assert_eq!(capscore(&["score", "--config", p(&cfg)], &[]).status.code(), Some(1));
}
