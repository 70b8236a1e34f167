use std::collections::HashMap;
use std::sync::Arc;

use capscore::corpus::parse_coco_annotations;
use capscore::perturb::{build_bag, generate_tiers, replacing_methodology, shuffling_methodology};
use capscore::rankeval::{run_model_vs_human, run_tier_experiment, spearman};
use capscore::scorer::{BleuScorer, CiderScorer, FnScorer, MeteorScorer, RougeScorer};
use capscore::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const VOCAB: &[&str] = &[
    "a", "man", "woman", "dog", "cat", "sits", "on", "the", "bench", "near", "red", "car", "street", "with", "ball",
    "park", "table", "pizza", "two", "people", "riding", "horse", "beach", "holding", "umbrella", "in", "rain",
];

fn sentence(rng: &mut ChaCha8Rng) -> String {
    let len = rng.gen_range(6..=12);
    (0..len).map(|_| *VOCAB.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

fn coco_json(images: u64, per_image: usize) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut anns = Vec::new();
    let mut next = 1;
    for img in 1..=images {
        for _ in 0..per_image {
            anns.push(serde_json::json!({"id": next, "image_id": img, "caption": sentence(&mut rng)}));
            next += 1;
        }
    }
    let imgs: Vec<_> = (1..=images).map(|id| serde_json::json!({"id": id})).collect();
    serde_json::json!({"images": imgs, "annotations": anns}).to_string()
}

fn split(images: u64) -> SplitCorpus {
    let refsets = parse_coco_annotations(&coco_json(images, 5)).unwrap();
    split_references(&refsets).unwrap()
}

#[test]
fn split_holds_out_first_caption_and_keeps_four() {
    let refsets = parse_coco_annotations(&coco_json(20, 6)).unwrap();
    let a = split_references(&refsets).unwrap();
    let b = split_references(&refsets).unwrap();
    assert_eq!(a, b);
    for (set, (human, refs)) in refsets.iter().zip(a.human_candidates.iter().zip(&a.reference_sets)) {
        assert_eq!(human, &set.refs[0]);
        assert_eq!(refs.refs, set.refs[1..5].to_vec());
    }
    let short = parse_coco_annotations(&coco_json(2, 4)).unwrap();
    assert!(matches!(split_references(&short), Err(Error::Integrity(_))));
}

#[test]
fn candidate_file_round_trip() {
    let s = split(15);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cands.json");
    write_candidate_file(&path, &s.human_candidates).unwrap();
    assert_eq!(load_candidate_file(&path).unwrap(), s.human_candidates);
}

#[test]
fn bleu1_is_identical_across_shuffle_tiers() {
    let s = split(60);
    let tiers = generate_tiers(
        &s.human_candidates,
        None,
        &shuffling_methodology(&[0.25, 0.5, 1.0]),
        Scheme::CocoLite,
        2022,
    )
    .unwrap();
    let bleu1 = BleuScorer::new(1, BleuConfig::default(), Scheme::CocoLite).unwrap();
    let reports: Vec<MetricReport> = tiers
        .iter()
        .map(|(t, _)| {
            let corpus = EvalCorpus::from_candidates(&t.captions, &s.reference_sets).unwrap();
            score_corpus(&bleu1, &corpus).unwrap()
        })
        .collect();
    let original = reports.last().unwrap();
    for r in &reports {
        assert_eq!(r.aggregate.to_bits(), original.aggregate.to_bits());
        for (a, b) in r.per_caption.values().zip(original.per_caption.values()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}

fn replace_tiers(s: &SplitCorpus, seed: u64) -> Vec<Tier> {
    let bag = build_bag(&s.reference_sets, Scheme::CocoLite, 1).unwrap();
    generate_tiers(
        &s.human_candidates,
        Some(&bag),
        &replacing_methodology(&[0.25, 0.5]),
        Scheme::CocoLite,
        seed,
    )
    .unwrap()
    .into_iter()
    .map(|(t, _)| t)
    .collect()
}

#[test]
fn oracle_metric_recovers_the_order() {
    let s = split(200);
    let tiers = replace_tiers(&s, 2022);
    let ranks: HashMap<String, f64> = tiers.iter().map(|t| (t.name.clone(), t.expected_rank as f64)).collect();
    let oracle = FnScorer::new("oracle", "oracle", move |c: &Caption, _: &ReferenceSet| {
        Ok(ranks[c.id.split('/').next().unwrap()])
    });
    let r = run_tier_experiment(&tiers, &s.reference_sets, &oracle, 50, TieMode::Random { seed: 17 }).unwrap();
    assert!(r.rho > 0.93, "{}", r.rho);
    assert_eq!(r.tiers, ["Random", "Replace50", "Replace25", "Human"]);
    let frac = run_tier_experiment(&tiers, &s.reference_sets, &oracle, 50, TieMode::Fractional).unwrap();
    assert!(frac.rho > r.rho);
}

#[test]
fn ngram_metrics_prefer_less_damaged_tiers() {
    let s = split(150);
    let tiers = replace_tiers(&s, 7);
    let cider = CiderScorer::from_refsets(&s.reference_sets, Scheme::CocoLite, true, CiderConfig::default()).unwrap();
    let scorers: Vec<Box<dyn CaptionScorer>> = vec![
        Box::new(BleuScorer::new(4, BleuConfig::default(), Scheme::CocoLite).unwrap()),
        Box::new(RougeScorer::new(RougeConfig::default(), Scheme::CocoLite).unwrap()),
        Box::new(MeteorScorer::new(MeteorConfig::default(), Scheme::CocoLite, Arc::new(SynonymTable::default())).unwrap()),
        Box::new(cider),
    ];
    for m in &scorers {
        let r = run_tier_experiment(&tiers, &s.reference_sets, m.as_ref(), 50, TieMode::default()).unwrap();
        assert!(r.rho > 0.0, "{} {}", m.name(), r.rho);
        assert!(r.rho.abs() <= 1.0);
        let counts: usize = r.bins.iter().map(|b| b.counts.values().sum::<usize>()).sum();
        assert_eq!(counts, 4 * 150);
    }
}

#[test]
fn damaged_model_ranks_below_human() {
    let s = split(150);
    let tiers = replace_tiers(&s, 11);
    let model = &tiers.iter().find(|t| t.name == "Replace50").unwrap().captions;
    let rouge = RougeScorer::new(RougeConfig::default(), Scheme::CocoLite).unwrap();
    let r = run_model_vs_human(model, &s.human_candidates, &s.reference_sets, &rouge, 20, TieMode::default()).unwrap();
    assert!(r.rho > 0.0, "{}", r.rho);
    assert_eq!(r.tiers, ["Model", "Human"]);
}

#[test]
fn tie_modes_agree_when_ties_are_rare() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let known: Vec<f64> = (1..=2000).map(f64::from).collect();
    let metric: Vec<f64> = known
        .iter()
        .map(|k| ((k / 2000.0 + rng.gen_range(-0.3..0.3)) * 1e4).round() / 1e4)
        .collect();
    let a = spearman(&known, &metric, TieMode::Fractional).unwrap();
    let b = spearman(&known, &metric, TieMode::Random { seed: 1 }).unwrap();
    assert!((a - b).abs() < 0.01, "{a} {b}");
}

#[test]
fn rerun_with_same_signature_is_bit_exact() {
    let s = split(80);
    let run = || {
        let tiers = replace_tiers(&s, 99);
        let cider =
            CiderScorer::from_refsets(&s.reference_sets, Scheme::CocoLite, true, CiderConfig::default()).unwrap();
        let r = run_tier_experiment(&tiers, &s.reference_sets, &cider, 50, TieMode::Random { seed: 3 }).unwrap();
        (tiers, r)
    };
    let (t1, r1) = run();
    let (t2, r2) = run();
    assert_eq!(t1, t2);
    assert_eq!(r1.metric_signature, r2.metric_signature);
    assert_eq!(r1.rho.to_bits(), r2.rho.to_bits());
    assert_eq!(r1.bins, r2.bins);
    let other = replace_tiers(&s, 100);
    assert_ne!(t1, other);
}
