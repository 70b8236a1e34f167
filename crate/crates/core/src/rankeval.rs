//! Tier experiments: score every caption of every tier, rank by score and
//! correlate against the known tier order.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Serialize, Serializer};

use crate::corpus::{Caption, ReferenceSet};
use crate::error::{Error, Result};
use crate::scorer::{score_all, CaptionScorer};
use crate::seed::rng_for;

pub const DEFAULT_BINS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TieMode {
    /// Tied values share the mean of their positions; ρ is the Pearson
    /// correlation of the ranks.
    #[default]
    Fractional,
    /// Ties broken by a seeded shuffle; ρ = 1 − 6Σd²/(n(n²−1)).
    Random { seed: u64 },
}

impl fmt::Display for TieMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TieMode::Fractional => f.write_str("fractional"),
            TieMode::Random { seed } => write!(f, "random({seed})"),
        }
    }
}

impl std::str::FromStr for TieMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "fractional" {
            return Ok(TieMode::Fractional);
        }
        let seed = s
            .strip_prefix("random(")
            .and_then(|r| r.strip_suffix(')'))
            .or_else(|| s.strip_prefix("random:"));
        match seed.map(|v| v.trim().parse::<u64>()) {
            Some(Ok(seed)) => Ok(TieMode::Random { seed }),
            _ => Err(Error::Config(format!(
                "unknown tie mode {s:?}; expected fractional or random(<seed>)"
            ))),
        }
    }
}

impl Serialize for TieMode {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tier {
    pub name: String,
    /// 1 is the worst tier.
    pub expected_rank: usize,
    pub captions: Vec<Caption>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub counts: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankResult {
    pub metric_signature: String,
    pub rho: f64,
    pub tie_mode: TieMode,
    pub bins: Vec<HistogramBin>,
    /// Tier names in expected-rank order.
    #[serde(skip)]
    pub tiers: Vec<String>,
    /// Metric score per caption in concatenation order.
    #[serde(skip)]
    pub scores: Vec<f64>,
}

fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::InvalidInput(format!(
            "value at position {i} is not finite ({})",
            values[i]
        ))),
        None => Ok(()),
    }
}

/// Ranks in ascending order, 1-based. `label` separates the tie-break
/// streams of different inputs under the same seed.
fn rank_with(values: &[f64], tie_mode: TieMode, label: &str) -> Result<Vec<f64>> {
    check_finite(values)?;
    let mut order: Vec<usize> = (0..values.len()).collect();
    if let TieMode::Random { seed } = tie_mode {
        // Shuffle first so the stable sort leaves equal values in random order.
        order.shuffle(&mut rng_for(seed, &["ties", label]));
    }
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));

    let mut ranks = vec![0.0; values.len()];
    match tie_mode {
        TieMode::Random { .. } => {
            for (pos, &i) in order.iter().enumerate() {
                ranks[i] = (pos + 1) as f64;
            }
        }
        TieMode::Fractional => {
            let mut start = 0;
            while start < order.len() {
                let mut end = start + 1;
                while end < order.len() && values[order[end]] == values[order[start]] {
                    end += 1;
                }
                let avg = (start + 1 + end) as f64 / 2.0;
                for &i in &order[start..end] {
                    ranks[i] = avg;
                }
                start = end;
            }
        }
    }
    Ok(ranks)
}

pub fn rank_values(values: &[f64], tie_mode: TieMode) -> Result<Vec<f64>> {
    rank_with(values, tie_mode, "metric")
}

/// Rank 1 is the lowest score.
pub fn rank_captions(scored: &[(String, f64)], tie_mode: TieMode) -> Result<Vec<f64>> {
    let values: Vec<f64> = scored.iter().map(|(_, v)| *v).collect();
    rank_values(&values, tie_mode)
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0)
}

/// 1 − 6Σd²/(n(n²−1)) for tie-free rank vectors.
pub fn spearman_formula(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    1.0 - 6.0 * d2 / (n * (n * n - 1.0))
}

fn is_constant(v: &[f64]) -> bool {
    v.iter().all(|x| *x == v[0])
}

/// Spearman's ρ between two orderings given as ranks or raw scores.
/// A constant side yields 0 in either tie mode.
pub fn spearman(known: &[f64], metric: &[f64], tie_mode: TieMode) -> Result<f64> {
    if known.len() != metric.len() {
        return Err(Error::InvalidInput(format!(
            "rank vectors differ in length ({} vs {})",
            known.len(),
            metric.len()
        )));
    }
    if known.len() < 2 {
        return Err(Error::InvalidInput("spearman needs at least two items".into()));
    }
    check_finite(known)?;
    check_finite(metric)?;
    if is_constant(known) || is_constant(metric) {
        return Ok(0.0);
    }
    let rk = rank_with(known, tie_mode, "known")?;
    let rm = rank_with(metric, tie_mode, "metric")?;
    Ok(match tie_mode {
        TieMode::Fractional => pearson(&rk, &rm),
        TieMode::Random { .. } => spearman_formula(&rk, &rm),
    })
}

fn validate_tiers<'a>(tiers: &'a [Tier], refsets: &[ReferenceSet]) -> Result<(Vec<&'a Tier>, HashMap<u64, usize>)> {
    if tiers.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "a tier experiment needs at least two tiers, got {}",
            tiers.len()
        )));
    }
    let mut ordered: Vec<&Tier> = tiers.iter().collect();
    ordered.sort_by_key(|t| t.expected_rank);
    for (i, t) in ordered.iter().enumerate() {
        if t.expected_rank != i + 1 {
            return Err(Error::InvalidInput(format!(
                "expected ranks must be distinct and contiguous from 1; tier {} has {}",
                t.name, t.expected_rank
            )));
        }
    }
    let base = ordered[0];
    if base.captions.is_empty() {
        return Err(Error::InvalidInput(format!("tier {} is empty", base.name)));
    }
    for t in &ordered[1..] {
        if t.captions.len() != base.captions.len() {
            return Err(Error::Integrity(format!(
                "tier {} has {} captions but tier {} has {}",
                t.name,
                t.captions.len(),
                base.name,
                base.captions.len()
            )));
        }
        if let Some((a, b)) = t
            .captions
            .iter()
            .zip(&base.captions)
            .find(|(a, b)| a.image_id != b.image_id)
        {
            return Err(Error::Integrity(format!(
                "tiers {} and {} are misaligned: image {} vs {}",
                t.name, base.name, a.image_id, b.image_id
            )));
        }
    }
    let index: HashMap<u64, usize> = refsets.iter().enumerate().map(|(i, r)| (r.image_id, i)).collect();
    if let Some(c) = base.captions.iter().find(|c| !index.contains_key(&c.image_id)) {
        return Err(Error::Integrity(format!("no references for image {}", c.image_id)));
    }
    Ok((ordered, index))
}

fn histogram(ranks: &[f64], tier_names: &[String], tier_size: usize, bins: usize) -> Vec<HistogramBin> {
    let n = ranks.len();
    let width = n as f64 / bins as f64;
    let mut out: Vec<HistogramBin> = (0..bins)
        .map(|i| HistogramBin {
            lo: 1.0 + i as f64 * width,
            hi: 1.0 + (i + 1) as f64 * width,
            counts: tier_names.iter().map(|t| (t.clone(), 0)).collect(),
        })
        .collect();
    for (pos, r) in ranks.iter().enumerate() {
        let b = (((r - 1.0) * bins as f64 / n as f64).floor() as usize).min(bins - 1);
        let tier = &tier_names[pos / tier_size];
        *out[b].counts.get_mut(tier).expect("tier present") += 1;
    }
    out
}

/// Concatenates the tiers worst first, scores each caption against its
/// image's references, ranks and correlates with the concatenation order.
pub fn run_tier_experiment(
    tiers: &[Tier],
    refsets: &[ReferenceSet],
    metric: &dyn CaptionScorer,
    bins: usize,
    tie_mode: TieMode,
) -> Result<RankResult> {
    if bins == 0 {
        return Err(Error::Config("bin count must be positive".into()));
    }
    let (ordered, index) = validate_tiers(tiers, refsets)?;
    let tier_size = ordered[0].captions.len();
    let pairs: Vec<(&Caption, &ReferenceSet)> = ordered
        .iter()
        .flat_map(|t| t.captions.iter())
        .map(|c| (c, &refsets[index[&c.image_id]]))
        .collect();
    let scores = score_all(metric, &pairs)?;
    let known: Vec<f64> = (1..=scores.len()).map(|i| i as f64).collect();
    let rho = spearman(&known, &scores, tie_mode)?;
    let ranks = rank_values(&scores, tie_mode)?;
    let names: Vec<String> = ordered.iter().map(|t| t.name.clone()).collect();
    Ok(RankResult {
        metric_signature: metric.signature(),
        rho,
        tie_mode,
        bins: histogram(&ranks, &names, tier_size, bins),
        tiers: names,
        scores,
    })
}

/// Two-tier experiment with the model's captions as the worse tier.
/// Model captions are realigned to the human image order.
pub fn run_model_vs_human(
    model: &[Caption],
    human: &[Caption],
    refsets: &[ReferenceSet],
    metric: &dyn CaptionScorer,
    bins: usize,
    tie_mode: TieMode,
) -> Result<RankResult> {
    let by_image: HashMap<u64, &Caption> = model.iter().map(|c| (c.image_id, c)).collect();
    if by_image.len() != model.len() {
        return Err(Error::Integrity("model captions repeat an image id".into()));
    }
    if model.len() != human.len() {
        return Err(Error::Integrity(format!(
            "model captions cover {} images but human captions cover {}",
            model.len(),
            human.len()
        )));
    }
    let aligned = human
        .iter()
        .map(|h| {
            by_image
                .get(&h.image_id)
                .map(|c| (*c).clone())
                .ok_or_else(|| Error::Integrity(format!("model captions lack image {}", h.image_id)))
        })
        .collect::<Result<Vec<_>>>()?;
    let tiers = [
        Tier {
            name: "Model".into(),
            expected_rank: 1,
            captions: aligned,
        },
        Tier {
            name: "Human".into(),
            expected_rank: 2,
            captions: human.to_vec(),
        },
    ];
    run_tier_experiment(&tiers, refsets, metric, bins, tie_mode)
}

fn fmt_edge(x: f64) -> String {
    if x.fract() == 0.0 {
        format!("{}", x as i64)
    } else {
        format!("{x}")
    }
}

pub fn rank_result_csv(result: &RankResult) -> String {
    let mut out = String::from("bin_lo,bin_hi");
    for t in &result.tiers {
        out.push(',');
        out.push_str(t);
    }
    out.push('\n');
    for b in &result.bins {
        out.push_str(&format!("{},{}", fmt_edge(b.lo), fmt_edge(b.hi)));
        for t in &result.tiers {
            out.push_str(&format!(",{}", b.counts.get(t).copied().unwrap_or(0)));
        }
        out.push('\n');
    }
    out
}

/// Writes the JSON record and its CSV twin.
pub fn export_rank_result(result: &RankResult, json_path: &Path, csv_path: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(result).map_err(|e| Error::InvalidInput(e.to_string()))?;
    fs::write(json_path, json + "\n").map_err(|e| Error::io(json_path, e))?;
    fs::write(csv_path, rank_result_csv(result)).map_err(|e| Error::io(csv_path, e))?;
    Ok(())
}
