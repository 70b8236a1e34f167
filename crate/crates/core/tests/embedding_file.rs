use std::collections::HashMap;
use std::io::Write;
use std::sync::Arc;

use capscore::embedding::{self, bertscore_pair, clipscore, clipscore_ref, load_embeddings, CaptionEmbedding, EmbeddingBundle};
use capscore::scorer::{score_corpus, BertScoreScorer, CaptionScorer, ClipScorer};
use capscore::{Caption, Error, EvalCorpus, ReferenceSet};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FILE: &str = r#"{"dim": 3, "text_model": "enc-a", "image_model": "enc-b"}
{"kind":"caption","id":"cand/1","tokens":["a","dog"],"token_vectors":[[1,0,0],[0,1,0]],"sentence_vector":[1,1,0]}
{"kind":"caption","id":"ref/1","tokens":["a","canine"],"token_vectors":[[1,0,0],[0,0.9,0.1]],"sentence_vector":[1,0.9,0.1]}

{"kind":"image","id":"1","vector":[0.6,0.8,0]}
"#;

fn write_tmp(body: &str) -> tempfile::NamedTempFile {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    f.write_all(body.as_bytes()).unwrap();
    f
}

fn corpus() -> EvalCorpus {
    let cand = Caption::new("cand/1", 1, "a dog").unwrap();
    let refs = ReferenceSet {
        image_id: 1,
        refs: vec![Caption::new("ref/1", 1, "a canine").unwrap()],
    };
    EvalCorpus::from_candidates(&[cand], &[refs]).unwrap()
}

#[test]
fn file_loads_and_scores() {
    let f = write_tmp(FILE);
    let bundle = Arc::new(load_embeddings(f.path()).unwrap());
    assert_eq!(bundle.dim, 3);
    assert_eq!(bundle.header["text_model"], "enc-a");

    let bert = BertScoreScorer::new(bundle.clone(), None);
    let report = score_corpus(&bert, &corpus()).unwrap();
    let expected = bertscore_pair(bundle.caption("cand/1").unwrap(), bundle.caption("ref/1").unwrap(), None)
        .unwrap()
        .f1;
    assert_eq!(report.per_caption["cand/1"], expected);
    assert!(report.signature.starts_with("BERTScore|tok:none|"));
    assert!(report.signature.contains("|text_model:enc-a|"));

    let clip = ClipScorer::new(bundle.clone(), 1.0, false).unwrap();
    let c = score_corpus(&clip, &corpus()).unwrap().aggregate;
    let cos = (0.6 + 0.8) / (2f64.sqrt());
    assert!((c - cos).abs() < 1e-12);
    let with_refs = ClipScorer::new(bundle, 1.0, true).unwrap();
    assert_eq!(with_refs.name(), "CLIPScore-ref");
    assert!(score_corpus(&with_refs, &corpus()).unwrap().aggregate > 0.0);
}

#[test]
fn malformed_records_name_their_line() {
    let bad_json = "{\"dim\": 2}\n{\"kind\":\"image\",\"id\":\"1\",\"vector\":[1,\n";
    match embedding::parse_embeddings(bad_json) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
        other => panic!("expected a parse error, got {other:?}"),
    }
    let wrong_dim = "{\"dim\": 2}\n\n{\"kind\":\"image\",\"id\":\"1\",\"vector\":[1,2,3]}\n";
    let msg = embedding::parse_embeddings(wrong_dim).unwrap_err().to_string();
    assert!(msg.contains("line 3"), "{msg}");
    let count_mismatch = "{\"dim\": 1}\n{\"kind\":\"caption\",\"id\":\"c\",\"tokens\":[\"a\",\"b\"],\"token_vectors\":[[1]],\"sentence_vector\":[1]}\n";
    assert!(embedding::parse_embeddings(count_mismatch).is_err());
    let duplicate = "{\"dim\": 1}\n{\"kind\":\"image\",\"id\":\"1\",\"vector\":[1]}\n{\"kind\":\"image\",\"id\":\"1\",\"vector\":[2]}\n";
    assert!(embedding::parse_embeddings(duplicate).is_err());
    assert!(embedding::parse_embeddings("").is_err());
}

#[test]
fn missing_caption_is_an_integrity_error() {
    let bundle = Arc::new(EmbeddingBundle::new(3));
    let bert = BertScoreScorer::new(bundle, None);
    assert!(matches!(score_corpus(&bert, &corpus()), Err(Error::Integrity(_))));
}

fn rand_vec(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn rand_caption(rng: &mut ChaCha8Rng, dim: usize, len: usize) -> CaptionEmbedding {
    CaptionEmbedding {
        tokens: (0..len).map(|i| format!("w{i}")).collect(),
        token_vectors: (0..len).map(|_| rand_vec(rng, dim)).collect(),
        sentence_vector: rand_vec(rng, dim),
    }
}

/// Random orthogonal matrix from Gram-Schmidt on a random basis.
fn rotation(rng: &mut ChaCha8Rng, dim: usize) -> Vec<Vec<f64>> {
    let mut q: Vec<Vec<f64>> = Vec::new();
    while q.len() < dim {
        let mut v = rand_vec(rng, dim);
        for u in &q {
            let d: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= d * b);
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-6 {
            q.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    q
}

fn apply(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    m.iter().map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

fn bundle_with(rng: &mut ChaCha8Rng, dim: usize) -> EmbeddingBundle {
    let mut b = EmbeddingBundle::new(dim);
    b.insert_image("1", rand_vec(rng, dim)).unwrap();
    for id in ["c", "r1", "r2"] {
        let len = rng.gen_range(1..=5);
        b.insert_caption(id, rand_caption(rng, dim, len)).unwrap();
    }
    b
}

fn all_scores(b: &EmbeddingBundle) -> Vec<f64> {
    let bert = embedding::bertscore("c", &["r1", "r2"], b, None).unwrap();
    vec![
        bert.precision,
        bert.recall,
        bert.f1,
        clipscore("1", "c", b, 1.0).unwrap(),
        clipscore_ref("1", "c", &["r1", "r2"], b, 1.0).unwrap(),
    ]
}

proptest! {
    #[test]
    fn scores_survive_rotation(seed in any::<u64>(), dim in 2usize..=8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = bundle_with(&mut rng, dim);
        let q = rotation(&mut rng, dim);
        let mut rotated = EmbeddingBundle::new(dim);
        for (id, v) in &b.images {
            rotated.insert_image(id.clone(), apply(&q, v)).unwrap();
        }
        for (id, c) in &b.captions {
            rotated.insert_caption(id.clone(), CaptionEmbedding {
                tokens: c.tokens.clone(),
                token_vectors: c.token_vectors.iter().map(|v| apply(&q, v)).collect(),
                sentence_vector: apply(&q, &c.sentence_vector),
            }).unwrap();
        }
        for (a, r) in all_scores(&b).iter().zip(all_scores(&rotated)) {
            prop_assert!((a - r).abs() < 1e-9);
        }
    }

    #[test]
    fn bertscore_bounds(seed in any::<u64>(), dim in 1usize..6, nonneg in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (lc, lr) = (rng.gen_range(1..=5), rng.gen_range(1..=5));
        let mut c = rand_caption(&mut rng, dim, lc);
        let mut r = rand_caption(&mut rng, dim, lr);
        if nonneg {
            for v in c.token_vectors.iter_mut().chain(r.token_vectors.iter_mut()) {
                v.iter_mut().for_each(|x| *x = x.abs());
            }
        }
        let s = bertscore_pair(&c, &r, None).unwrap();
        let lo = if nonneg { 0.0 } else { -1.0 };
        let checked = if nonneg { vec![s.precision, s.recall, s.f1] } else { vec![s.precision, s.recall] };
        for v in checked {
            prop_assert!(v >= lo - 1e-12 && v <= 1.0 + 1e-12);
        }
        if s.precision > 0.0 && s.recall > 0.0 {
            prop_assert!(s.f1 <= s.precision.max(s.recall) + 1e-12);
            prop_assert!(s.f1 <= 2.0 * s.precision.min(s.recall) + 1e-12);
        }
    }

    #[test]
    fn clipscore_ref_is_bounded_by_its_terms(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = bundle_with(&mut rng, 4);
        let clip = clipscore("1", "c", &b, 1.0).unwrap();
        let cand = &b.caption("c").unwrap().sentence_vector;
        let ref_term = ["r1", "r2"]
            .iter()
            .map(|id| embedding::cosine(cand, &b.caption(id).unwrap().sentence_vector).unwrap().max(0.0))
            .fold(0.0, f64::max);
        let h = clipscore_ref("1", "c", &["r1", "r2"], &b, 1.0).unwrap();
        prop_assert!(h <= 2.0 * clip.min(ref_term) + 1e-12);
        prop_assert!(h >= 0.0);
    }
}

#[test]
fn clipscore_ref_equal_terms_return_that_value() {
    let mut b = EmbeddingBundle::new(2);
    b.insert_image("1", vec![1.0, 0.0]).unwrap();
    let sentence = |v: Vec<f64>| CaptionEmbedding {
        tokens: vec!["x".into()],
        token_vectors: vec![vec![1.0, 0.0]],
        sentence_vector: v,
    };
    b.insert_caption("c", sentence(vec![1.0, 1.0])).unwrap();
    b.insert_caption("r", sentence(vec![0.0, 1.0])).unwrap();
    let clip = clipscore("1", "c", &b, 1.0).unwrap();
    let h = clipscore_ref("1", "c", &["r"], &b, 1.0).unwrap();
    assert!((clip - 0.5f64.sqrt()).abs() < 1e-12);
    assert!((h - clip).abs() < 1e-12);
}

#[test]
fn weights_shift_bertscore() {
    let c = CaptionEmbedding {
        tokens: vec!["a".into(), "dog".into()],
        token_vectors: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        sentence_vector: vec![1.0, 1.0],
    };
    let r = CaptionEmbedding {
        tokens: vec!["a".into()],
        token_vectors: vec![vec![1.0, 0.0]],
        sentence_vector: vec![1.0, 0.0],
    };
    let plain = bertscore_pair(&c, &r, None).unwrap();
    assert!((plain.precision - 0.5).abs() < 1e-12);
    let w: HashMap<String, f64> = [("a".to_string(), 0.0), ("dog".to_string(), 1.0)].into();
    let weighted = bertscore_pair(&c, &r, Some(&w)).unwrap();
    assert!(weighted.precision.abs() < 1e-12);
}
