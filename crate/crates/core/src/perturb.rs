//! Degraded caption tiers: bag-of-words replacement, partial shuffling and
//! random caption swap. Every perturbation draws from a per-caption RNG
//! derived from the master seed, the tier and the caption id.

use std::collections::HashMap;

use rand::seq::{index, SliceRandom};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::corpus::{Caption, ReferenceSet};
use crate::error::{Error, Result};
use crate::rankeval::Tier;
use crate::seed::rng_for;
use crate::text::{tokenize, Scheme, TokenizedCaption};

/// Identity draws rejected before a partial shuffle is accepted as is.
const SHUFFLE_RETRIES: usize = 10;

/// Sorted words that occur at least `min_count` times in the references.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BagOfWords {
    pub words: Vec<String>,
    pub min_count: usize,
    pub scheme: Scheme,
}

impl BagOfWords {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn signature(&self) -> String {
        let mut h = Sha256::new();
        for w in &self.words {
            h.update(w.as_bytes());
            h.update(b"\n");
        }
        let digest = h.finalize();
        let hex: String = digest[..8].iter().map(|b| format!("{b:02x}")).collect();
        format!(
            "BOW|tok:{}|min:{}|size:{}|sha256:{hex}",
            self.scheme,
            self.min_count,
            self.words.len()
        )
    }
}

pub fn build_bag(refsets: &[ReferenceSet], scheme: Scheme, min_count: usize) -> Result<BagOfWords> {
    if refsets.is_empty() {
        return Err(Error::InvalidInput("bag of words needs at least one reference set".into()));
    }
    let mut counts: HashMap<String, usize> = HashMap::new();
    for set in refsets {
        for r in &set.refs {
            for tok in tokenize(&r.text, scheme) {
                *counts.entry(tok).or_insert(0) += 1;
            }
        }
    }
    let mut words: Vec<String> = counts
        .into_iter()
        .filter(|(_, c)| *c >= min_count)
        .map(|(w, _)| w)
        .collect();
    if words.is_empty() {
        return Err(Error::Integrity(format!(
            "no word occurs {min_count} or more times; the bag of words is empty"
        )));
    }
    words.sort_unstable();
    Ok(BagOfWords {
        words,
        min_count,
        scheme,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PerturbationKind {
    Replace,
    Shuffle,
    RandomSwap,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PerturbationSpec {
    pub kind: PerturbationKind,
    /// Ignored for random swap.
    pub fraction: f64,
    pub master_seed: u64,
}

impl PerturbationSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.fraction) {
            return Err(Error::Config(format!(
                "perturbation fraction must be in [0,1], got {}",
                self.fraction
            )));
        }
        Ok(())
    }

    fn seed_label(&self) -> String {
        match self.kind {
            PerturbationKind::Replace => format!("replace:{}", self.fraction),
            PerturbationKind::Shuffle => format!("shuffle:{}", self.fraction),
            PerturbationKind::RandomSwap => "random-swap".to_string(),
        }
    }
}

/// `round(fraction * len)` with halves rounded up.
pub fn perturbed_count(fraction: f64, len: usize) -> usize {
    ((fraction * len as f64 + 0.5).floor() as usize).min(len)
}

fn chosen_positions<R: Rng>(rng: &mut R, len: usize, k: usize) -> Vec<usize> {
    let mut pos = index::sample(rng, len, k).into_vec();
    pos.sort_unstable();
    pos
}

/// Replaces `round(fraction·L)` uniformly chosen positions with uniform
/// draws from the bag. A draw may equal the word it replaces.
pub fn perturb_replace<R: Rng>(
    caption: &TokenizedCaption,
    fraction: f64,
    bag: &BagOfWords,
    rng: &mut R,
) -> TokenizedCaption {
    let k = perturbed_count(fraction, caption.len());
    let mut tokens = caption.tokens.clone();
    for p in chosen_positions(rng, tokens.len(), k) {
        tokens[p] = bag.words[rng.gen_range(0..bag.words.len())].clone();
    }
    TokenizedCaption {
        tokens,
        ..caption.clone()
    }
}

/// Permutes the tokens at `round(fraction·L)` uniformly chosen positions.
/// The identity permutation is redrawn up to ten times when `k >= 2`.
pub fn perturb_shuffle<R: Rng>(caption: &TokenizedCaption, fraction: f64, rng: &mut R) -> TokenizedCaption {
    let k = perturbed_count(fraction, caption.len());
    let positions = chosen_positions(rng, caption.len(), k);
    let mut order: Vec<usize> = (0..k).collect();
    for _ in 0..=SHUFFLE_RETRIES {
        order.shuffle(rng);
        if k < 2 || order.iter().enumerate().any(|(i, &o)| i != o) {
            break;
        }
    }
    let mut tokens = caption.tokens.clone();
    for (slot, &src) in order.iter().enumerate() {
        tokens[positions[slot]] = caption.tokens[positions[src]].clone();
    }
    TokenizedCaption {
        tokens,
        ..caption.clone()
    }
}

/// Gives every image another image's caption via a seeded derangement.
/// Output order follows the input; each output keeps the target image id
/// and the source caption's id and text.
pub fn assign_random_captions(captions: &[Caption], seed: u64) -> Result<Vec<Caption>> {
    let n = captions.len();
    if n < 2 {
        return Err(Error::InvalidInput("random swap needs at least two captions".into()));
    }
    let mut rng = rng_for(seed, &["random-swap"]);
    let mut perm: Vec<usize> = (0..n).collect();
    loop {
        perm.shuffle(&mut rng);
        if perm.iter().enumerate().all(|(i, &p)| i != p) {
            break;
        }
    }
    Ok(captions
        .iter()
        .zip(&perm)
        .map(|(target, &src)| Caption {
            id: captions[src].id.clone(),
            image_id: target.image_id,
            text: captions[src].text.clone(),
        })
        .collect())
}

/// How one tier is derived from the pristine human captions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TierKind {
    Pristine,
    Perturbed(PerturbationKind, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TierSpec {
    pub name: String,
    pub expected_rank: usize,
    pub kind: TierKind,
}

fn percent(fraction: f64) -> String {
    format!("{}", (fraction * 100.0).round() as u64)
}

/// Random < Replace(largest) < ... < Replace(smallest) < Human.
pub fn replacing_methodology(fractions: &[f64]) -> Vec<TierSpec> {
    let mut fr = fractions.to_vec();
    fr.sort_by(|a, b| b.total_cmp(a));
    let mut specs = vec![TierSpec {
        name: "Random".into(),
        expected_rank: 1,
        kind: TierKind::Perturbed(PerturbationKind::RandomSwap, 0.0),
    }];
    for f in fr {
        specs.push(TierSpec {
            name: format!("Replace{}", percent(f)),
            expected_rank: specs.len() + 1,
            kind: TierKind::Perturbed(PerturbationKind::Replace, f),
        });
    }
    specs.push(TierSpec {
        name: "Human".into(),
        expected_rank: specs.len() + 1,
        kind: TierKind::Pristine,
    });
    specs
}

/// ShuffleAll < ... < Shuffle(smallest) < Original.
pub fn shuffling_methodology(fractions: &[f64]) -> Vec<TierSpec> {
    let mut fr = fractions.to_vec();
    fr.sort_by(|a, b| b.total_cmp(a));
    let mut specs: Vec<TierSpec> = Vec::new();
    for f in fr {
        let name = if f >= 1.0 {
            "ShuffleAll".to_string()
        } else {
            format!("Shuffle{}", percent(f))
        };
        specs.push(TierSpec {
            name,
            expected_rank: specs.len() + 1,
            kind: TierKind::Perturbed(PerturbationKind::Shuffle, f),
        });
    }
    specs.push(TierSpec {
        name: "Original".into(),
        expected_rank: specs.len() + 1,
        kind: TierKind::Pristine,
    });
    specs
}

/// Random swap against the pristine captions only.
pub fn random_methodology() -> Vec<TierSpec> {
    vec![
        TierSpec {
            name: "Random".into(),
            expected_rank: 1,
            kind: TierKind::Perturbed(PerturbationKind::RandomSwap, 0.0),
        },
        TierSpec {
            name: "Human".into(),
            expected_rank: 2,
            kind: TierKind::Pristine,
        },
    ]
}

/// Provenance of a generated tier.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TierProvenance {
    pub spec: Option<PerturbationSpec>,
    pub master_seed: u64,
    pub bag_signature: Option<String>,
    pub scheme: Scheme,
    /// Captions too short for the fraction, passed through with `k = 0`.
    pub unchanged: usize,
}

/// Builds every tier independently from the pristine `human` captions.
/// All tier captions are the scheme's tokens joined by single spaces, and
/// carry ids `<tier>/<image_id>`.
pub fn generate_tiers(
    human: &[Caption],
    bag: Option<&BagOfWords>,
    specs: &[TierSpec],
    scheme: Scheme,
    master_seed: u64,
) -> Result<Vec<(Tier, TierProvenance)>> {
    let pristine: Vec<TokenizedCaption> = human
        .iter()
        .map(|c| TokenizedCaption::new(&c.id, &c.text, scheme))
        .collect();
    if let Some(empty) = pristine.iter().find(|t| t.is_empty()) {
        return Err(Error::Integrity(format!(
            "caption {} has no tokens under {scheme}",
            empty.caption_id
        )));
    }

    let relabel = |name: &str, image_id: u64, text: String| Caption {
        id: format!("{name}/{image_id}"),
        image_id,
        text,
    };

    specs
        .iter()
        .map(|spec| {
            let (captions, perturbation, unchanged) = match spec.kind {
                TierKind::Pristine => (
                    pristine
                        .iter()
                        .zip(human)
                        .map(|(t, c)| relabel(&spec.name, c.image_id, t.joined()))
                        .collect::<Vec<_>>(),
                    None,
                    0,
                ),
                TierKind::Perturbed(kind, fraction) => {
                    let p = PerturbationSpec {
                        kind,
                        fraction,
                        master_seed,
                    };
                    p.validate()?;
                    match kind {
                        PerturbationKind::RandomSwap => {
                            let joined: Vec<Caption> = pristine
                                .iter()
                                .zip(human)
                                .map(|(t, c)| Caption {
                                    text: t.joined(),
                                    ..c.clone()
                                })
                                .collect();
                            let swapped = assign_random_captions(&joined, master_seed)?;
                            let caps = swapped
                                .into_iter()
                                .map(|c| relabel(&spec.name, c.image_id, c.text))
                                .collect();
                            (caps, Some(p), 0)
                        }
                        PerturbationKind::Replace | PerturbationKind::Shuffle => {
                            let bag = match (kind, bag) {
                                (PerturbationKind::Replace, None) => {
                                    return Err(Error::InvalidInput(
                                        "replacement tiers need a bag of words".into(),
                                    ))
                                }
                                (_, b) => b,
                            };
                            let label = p.seed_label();
                            let caps: Vec<Caption> = pristine
                                .par_iter()
                                .zip(human)
                                .map(|(t, c)| {
                                    let mut rng = rng_for(master_seed, &[&label, &c.id]);
                                    let out = match kind {
                                        PerturbationKind::Replace => {
                                            perturb_replace(t, fraction, bag.expect("checked"), &mut rng)
                                        }
                                        _ => perturb_shuffle(t, fraction, &mut rng),
                                    };
                                    relabel(&spec.name, c.image_id, out.joined())
                                })
                                .collect();
                            let unchanged = pristine
                                .iter()
                                .filter(|t| perturbed_count(fraction, t.len()) == 0)
                                .count();
                            (caps, Some(p), unchanged)
                        }
                    }
                }
            };
            let uses_bag = matches!(spec.kind, TierKind::Perturbed(PerturbationKind::Replace, _));
            Ok((
                Tier {
                    name: spec.name.clone(),
                    expected_rank: spec.expected_rank,
                    captions,
                },
                TierProvenance {
                    spec: perturbation,
                    master_seed,
                    bag_signature: if uses_bag { bag.map(|b| b.signature()) } else { None },
                    scheme,
                    unchanged,
                },
            ))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tc(s: &str) -> TokenizedCaption {
        TokenizedCaption::new("c", s, Scheme::CocoLite)
    }

    fn bag(words: &[&str]) -> BagOfWords {
        BagOfWords {
            words: words.iter().map(|w| w.to_string()).collect(),
            min_count: 1,
            scheme: Scheme::CocoLite,
        }
    }

    fn refsets(texts: &[&str]) -> Vec<ReferenceSet> {
        vec![ReferenceSet {
            image_id: 1,
            refs: texts
                .iter()
                .enumerate()
                .map(|(i, t)| Caption::new(i.to_string(), 1, *t).unwrap())
                .collect(),
        }]
    }

    #[test]
    fn bag_threshold() {
        let sets = refsets(&["a a a a a", "a a a a a zebra zebra"]);
        let b = build_bag(&sets, Scheme::CocoLite, 4).unwrap();
        assert_eq!(b.words, ["a"]);
        let all = build_bag(&sets, Scheme::CocoLite, 1).unwrap();
        assert_eq!(all.words, ["a", "zebra"]);
        assert!(build_bag(&sets, Scheme::CocoLite, 100).is_err());
        assert!(b.signature().starts_with("BOW|tok:coco-lite|min:4|size:1|sha256:"));
    }

    #[test]
    fn rounding_is_half_up() {
        assert_eq!(perturbed_count(0.25, 10), 3);
        assert_eq!(perturbed_count(0.25, 6), 2);
        assert_eq!(perturbed_count(0.25, 1), 0);
        assert_eq!(perturbed_count(0.5, 8), 4);
        assert_eq!(perturbed_count(1.0, 7), 7);
    }

    #[test]
    fn replace_edge_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = tc("a man riding a horse");
        assert_eq!(perturb_replace(&c, 0.0, &bag(&["x"]), &mut rng), c);
        let all = perturb_replace(&c, 1.0, &bag(&["x"]), &mut rng);
        assert!(all.tokens.iter().all(|t| t == "x"));
    }

    #[test]
    fn replace_touches_at_most_k_positions() {
        let c = tc("one two three four five six seven eight");
        let b = bag(&["zz1", "zz2", "zz3"]);
        for seed in 0..50 {
            let out = perturb_replace(&c, 0.5, &b, &mut ChaCha8Rng::seed_from_u64(seed));
            let diff = out.tokens.iter().zip(&c.tokens).filter(|(a, b)| a != b).count();
            assert_eq!(diff, 4, "bag words never coincide with originals here");
        }
    }

    #[test]
    fn shuffle_preserves_multiset() {
        let c = tc("a dog chases a red ball across the park");
        for seed in 0..50 {
            for f in [0.25, 0.5, 1.0] {
                let out = perturb_shuffle(&c, f, &mut ChaCha8Rng::seed_from_u64(seed));
                let (mut a, mut b) = (out.tokens.clone(), c.tokens.clone());
                a.sort();
                b.sort();
                assert_eq!(a, b);
            }
        }
        let one = tc("dog");
        assert_eq!(perturb_shuffle(&one, 1.0, &mut ChaCha8Rng::seed_from_u64(1)), one);
        assert_eq!(perturb_shuffle(&c, 0.0, &mut ChaCha8Rng::seed_from_u64(1)), c);
    }

    #[test]
    fn full_shuffle_of_distinct_tokens_moves_something() {
        let c = tc("one two three four five six");
        for seed in 0..100 {
            let out = perturb_shuffle(&c, 1.0, &mut ChaCha8Rng::seed_from_u64(seed));
            assert_ne!(out, c);
        }
    }

    fn caps(n: u64) -> Vec<Caption> {
        (0..n)
            .map(|i| Caption::new(format!("h{i}"), i, format!("caption number {i}")).unwrap())
            .collect()
    }

    #[test]
    fn random_swap_is_a_derangement() {
        let two = assign_random_captions(&caps(2), 9).unwrap();
        assert_eq!(two[0].text, "caption number 1");
        assert_eq!(two[1].text, "caption number 0");

        let src = caps(500);
        let out = assign_random_captions(&src, 42).unwrap();
        for (i, c) in out.iter().enumerate() {
            assert_eq!(c.image_id, i as u64);
            assert_ne!(c.text, src[i].text);
        }
        let mut a: Vec<_> = out.iter().map(|c| c.text.clone()).collect();
        let mut b: Vec<_> = src.iter().map(|c| c.text.clone()).collect();
        a.sort();
        b.sort();
        assert_eq!(a, b);
        assert_eq!(out, assign_random_captions(&src, 42).unwrap());
        assert!(assign_random_captions(&caps(1), 1).is_err());
    }

    #[test]
    fn tiers_are_deterministic_and_labelled() {
        let human = caps(30);
        let b = bag(&["red", "blue", "green"]);
        let specs = replacing_methodology(&[0.25, 0.5]);
        let names: Vec<_> = specs.iter().map(|s| s.name.as_str()).collect();
        assert_eq!(names, ["Random", "Replace50", "Replace25", "Human"]);
        let a = generate_tiers(&human, Some(&b), &specs, Scheme::CocoLite, 7).unwrap();
        let again = generate_tiers(&human, Some(&b), &specs, Scheme::CocoLite, 7).unwrap();
        assert_eq!(a, again);
        let other = generate_tiers(&human, Some(&b), &specs, Scheme::CocoLite, 8).unwrap();
        assert_ne!(a[1].0.captions, other[1].0.captions);
        assert_eq!(a[3].0.captions[5].id, "Human/5");
        assert_eq!(a[3].0.captions[5].text, "caption number 5");
        assert!(a[1].1.bag_signature.is_some());
        assert!(a[0].1.bag_signature.is_none());

        let shuffle = shuffling_methodology(&[0.25, 0.5, 1.0]);
        let names: Vec<_> = shuffle.iter().map(|s| s.name.as_str()).collect();
        assert_eq!(names, ["ShuffleAll", "Shuffle50", "Shuffle25", "Original"]);
        assert!(generate_tiers(&human, None, &specs, Scheme::CocoLite, 7).is_err());
    }

    #[test]
    fn parallel_generation_matches_sequential() {
        let human = caps(200);
        let b = bag(&["red", "blue"]);
        let specs = replacing_methodology(&[0.5]);
        let par = generate_tiers(&human, Some(&b), &specs, Scheme::CocoLite, 11).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let seq = pool
            .install(|| generate_tiers(&human, Some(&b), &specs, Scheme::CocoLite, 11))
            .unwrap();
        assert_eq!(par, seq);
    }
}
