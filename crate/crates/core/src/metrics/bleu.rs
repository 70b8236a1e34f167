use std::collections::HashMap;
use std::ops::AddAssign;

use rayon::prelude::*;

use super::report::{MetricReport, Signature};
use crate::corpus::EvalCorpus;
use crate::error::{Error, Result};
use crate::text::{ngram_counts, Scheme, TokenizedCaption};

/// How a zero clipped-count precision is kept away from `log(0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Smoothing {
    /// A zero numerator is replaced by `eps`, giving `p_n = eps / total`.
    Epsilon(f64),
    /// The `exp` scheme of standardized BLEU: the k-th order with zero
    /// matches gets `p_n = 1 / (2^k * total)`.
    Exp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RefLenPolicy {
    /// Reference length closest to the candidate length, ties to the shorter.
    #[default]
    Closest,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BleuConfig {
    pub max_order: usize,
    /// Weights for the top order; `None` means uniform `1/N`.
    pub weights: Option<Vec<f64>>,
    pub smoothing: Smoothing,
    pub ref_len: RefLenPolicy,
}

impl Default for BleuConfig {
    fn default() -> Self {
        BleuConfig {
            max_order: 4,
            weights: None,
            smoothing: Smoothing::Epsilon(1e-15),
            ref_len: RefLenPolicy::Closest,
        }
    }
}

impl BleuConfig {
    /// Settings of standardized corpus BLEU.
    pub fn standardized() -> Self {
        BleuConfig {
            smoothing: Smoothing::Exp,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_order == 0 {
            return Err(Error::Config("BLEU max order must be at least 1".into()));
        }
        if let Smoothing::Epsilon(eps) = self.smoothing {
            if !(eps > 0.0 && eps.is_finite()) {
                return Err(Error::Config(format!("BLEU epsilon must be positive, got {eps}")));
            }
        }
        if let Some(w) = &self.weights {
            if w.len() != self.max_order {
                return Err(Error::Config(format!(
                    "BLEU needs {} weights, got {}",
                    self.max_order,
                    w.len()
                )));
            }
            if w.iter().any(|x| *x < 0.0 || !x.is_finite()) {
                return Err(Error::Config("BLEU weights must be non-negative".into()));
            }
            let sum: f64 = w.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Config(format!("BLEU weights sum to {sum}, not 1")));
            }
        }
        Ok(())
    }

    pub fn signature(&self, name: &str, scheme: Scheme) -> Signature {
        let sig = Signature::new(name, Some(scheme))
            .param("n", self.max_order)
            .param(
                "reflen",
                match self.ref_len {
                    RefLenPolicy::Closest => "closest",
                },
            )
            .param(
                "w",
                match &self.weights {
                    None => "uniform".to_string(),
                    Some(w) => w
                        .iter()
                        .map(|x| super::format_param(*x))
                        .collect::<Vec<_>>()
                        .join(","),
                },
            );
        match self.smoothing {
            Smoothing::Epsilon(eps) => sig.num("eps", eps),
            Smoothing::Exp => sig.param("smooth", "exp"),
        }
    }
}

/// Sufficient statistics of BLEU; summing them gives corpus-level BLEU.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BleuStats {
    pub cand_len: usize,
    pub ref_len: usize,
    /// Clipped matches per order 1..=N.
    pub matches: Vec<usize>,
    /// Candidate n-gram counts per order 1..=N.
    pub totals: Vec<usize>,
}

impl BleuStats {
    pub fn zero(max_order: usize) -> Self {
        BleuStats {
            cand_len: 0,
            ref_len: 0,
            matches: vec![0; max_order],
            totals: vec![0; max_order],
        }
    }
}

impl AddAssign<&BleuStats> for BleuStats {
    fn add_assign(&mut self, rhs: &BleuStats) {
        self.cand_len += rhs.cand_len;
        self.ref_len += rhs.ref_len;
        for (a, b) in self.matches.iter_mut().zip(&rhs.matches) {
            *a += b;
        }
        for (a, b) in self.totals.iter_mut().zip(&rhs.totals) {
            *a += b;
        }
    }
}

/// Clipped n-gram statistics of one candidate against its references.
pub fn bleu_stats(candidate: &[String], refs: &[&[String]], cfg: &BleuConfig) -> Result<BleuStats> {
    if refs.is_empty() {
        return Err(Error::InvalidInput("BLEU needs at least one reference".into()));
    }
    let c = candidate.len();
    let ref_len = match cfg.ref_len {
        RefLenPolicy::Closest => refs
            .iter()
            .map(|r| r.len())
            .min_by_key(|&len| (len.abs_diff(c), len))
            .expect("non-empty refs"),
    };
    let mut stats = BleuStats::zero(cfg.max_order);
    stats.cand_len = c;
    stats.ref_len = ref_len;
    for n in 1..=cfg.max_order {
        let cand = ngram_counts(candidate, n)?;
        if cand.counts.is_empty() {
            continue;
        }
        let mut max_ref: HashMap<&[String], usize> = HashMap::new();
        for r in refs {
            for (gram, count) in ngram_counts(r, n)?.counts {
                let slot = max_ref.entry(gram).or_insert(0);
                *slot = (*slot).max(count);
            }
        }
        let mut matched = 0;
        for (gram, count) in &cand.counts {
            matched += (*count).min(max_ref.get(gram).copied().unwrap_or(0));
        }
        stats.matches[n - 1] = matched;
        stats.totals[n - 1] = cand.total();
    }
    Ok(stats)
}

/// Applies the BLEU formula to (possibly summed) statistics, returning
/// `BLEU_1..=BLEU_N`. `BLEU_k` for `k < N` uses uniform weights `1/k`;
/// `BLEU_N` uses the configured weights.
pub fn bleu_from_stats(stats: &BleuStats, cfg: &BleuConfig) -> Vec<f64> {
    let order = cfg.max_order;
    if stats.cand_len == 0 {
        return vec![0.0; order];
    }
    let mut log_p = Vec::with_capacity(order);
    let mut zero_orders = 0u32;
    for n in 0..order {
        let (m, t) = (stats.matches[n] as f64, stats.totals[n] as f64);
        let lp = match cfg.smoothing {
            Smoothing::Epsilon(eps) => {
                if stats.totals[n] == 0 {
                    eps.ln()
                } else if stats.matches[n] == 0 {
                    (eps / t).ln()
                } else {
                    (m / t).ln()
                }
            }
            Smoothing::Exp => {
                if stats.totals[n] == 0 {
                    f64::NEG_INFINITY
                } else if stats.matches[n] == 0 {
                    zero_orders += 1;
                    -(2f64.powi(zero_orders as i32) * t).ln()
                } else {
                    (m / t).ln()
                }
            }
        };
        log_p.push(lp);
    }

    let (c, r) = (stats.cand_len as f64, stats.ref_len as f64);
    let bp = if c > r { 1.0 } else { (1.0 - r / c).exp() };

    (1..=order)
        .map(|k| {
            let weighted: f64 = match (&cfg.weights, k == order) {
                (Some(w), true) => w
                    .iter()
                    .zip(&log_p)
                    .filter(|(w, _)| **w > 0.0)
                    .map(|(w, lp)| w * lp)
                    .sum(),
                _ => log_p[..k].iter().sum::<f64>() / k as f64,
            };
            (bp * weighted.exp()).clamp(0.0, 1.0)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BleuScores {
    /// `BLEU_1..=BLEU_N`.
    pub scores: Vec<f64>,
    /// Set when the candidate had no tokens; all scores are then 0.
    pub empty_candidate: bool,
}

pub fn bleu_sentence(
    candidate: &TokenizedCaption,
    refs: &[TokenizedCaption],
    cfg: &BleuConfig,
) -> Result<BleuScores> {
    cfg.validate()?;
    let ref_tokens: Vec<&[String]> = refs.iter().map(|r| r.tokens.as_slice()).collect();
    let stats = bleu_stats(&candidate.tokens, &ref_tokens, cfg)?;
    Ok(BleuScores {
        scores: bleu_from_stats(&stats, cfg),
        empty_candidate: candidate.is_empty(),
    })
}

/// Corpus BLEU: statistics are summed over every item before the formula is
/// applied once. Per-caption entries hold sentence-level `BLEU_N`.
pub fn bleu_corpus(corpus: &EvalCorpus, cfg: &BleuConfig, scheme: Scheme) -> Result<MetricReport> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(Error::InvalidInput("corpus BLEU needs at least one item".into()));
    }
    let per_item: Vec<(String, BleuStats)> = corpus
        .items()
        .par_iter()
        .map(|item| {
            let cand = TokenizedCaption::new(&item.candidate.id, &item.candidate.text, scheme);
            let refs: Vec<Vec<String>> = item
                .references
                .refs
                .iter()
                .map(|r| crate::text::tokenize(&r.text, scheme))
                .collect();
            let ref_slices: Vec<&[String]> = refs.iter().map(Vec::as_slice).collect();
            Ok((item.candidate.id.clone(), bleu_stats(&cand.tokens, &ref_slices, cfg)?))
        })
        .collect::<Result<_>>()?;

    let mut total = BleuStats::zero(cfg.max_order);
    let mut per_caption = std::collections::BTreeMap::new();
    for (id, stats) in &per_item {
        total += stats;
        per_caption.insert(id.clone(), bleu_from_stats(stats, cfg)[cfg.max_order - 1]);
    }

    let ref_counts: Vec<usize> = corpus.items().iter().map(|i| i.references.refs.len()).collect();
    let refs_param = if ref_counts.iter().all(|&n| n == ref_counts[0]) {
        ref_counts[0].to_string()
    } else {
        "var".to_string()
    };
    Ok(MetricReport {
        metric_name: "corpus-BLEU".into(),
        signature: cfg
            .signature("corpus-BLEU", scheme)
            .param("refs", refs_param)
            .to_string(),
        aggregate: bleu_from_stats(&total, cfg)[cfg.max_order - 1],
        per_caption,
    })
}
