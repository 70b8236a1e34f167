use super::report::Signature;
use crate::error::{Error, Result};
use crate::text::{porter_stem, Scheme, SynonymTable, TokenizedCaption};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchStage {
    Exact,
    Stem,
    Synonym,
}

impl MatchStage {
    fn name(self) -> &'static str {
        match self {
            MatchStage::Exact => "exact",
            MatchStage::Stem => "stem",
            MatchStage::Synonym => "synonym",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeteorConfig {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub stages: Vec<MatchStage>,
}

impl Default for MeteorConfig {
    fn default() -> Self {
        MeteorConfig {
            alpha: 0.9,
            beta: 3.0,
            gamma: 0.5,
            stages: vec![MatchStage::Exact, MatchStage::Stem, MatchStage::Synonym],
        }
    }
}

impl MeteorConfig {
    /// English tuning of the widely used COCO caption toolkit
    /// (alpha 0.85, beta 0.2, gamma 0.6), without its function-word weighting.
    pub fn coco_toolkit() -> Self {
        MeteorConfig {
            alpha: 0.85,
            beta: 0.2,
            gamma: 0.6,
            ..MeteorConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("METEOR alpha must be in [0,1], got {}", self.alpha)));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("METEOR gamma must be in [0,1], got {}", self.gamma)));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!("METEOR beta must be >= 0, got {}", self.beta)));
        }
        Ok(())
    }

    pub fn signature(&self, scheme: Scheme, synonyms: &SynonymTable) -> Signature {
        let stages: Vec<_> = self.stages.iter().map(|s| s.name()).collect();
        Signature::new("METEOR", Some(scheme))
            .num("alpha", self.alpha)
            .num("beta", self.beta)
            .num("gamma", self.gamma)
            .param("stages", stages.join("+"))
            .param(
                "syn",
                if synonyms.is_empty() {
                    "none".to_string()
                } else {
                    format!("table{}", synonyms.len())
                },
            )
    }
}

/// One-to-one unigram alignment between a candidate and one reference.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MeteorAlignment {
    /// `(candidate position, reference position)`, sorted by candidate position.
    pub pairs: Vec<(usize, usize)>,
    pub chunks: usize,
}

impl MeteorAlignment {
    pub fn matches(&self) -> usize {
        self.pairs.len()
    }
}

/// Search budget for the chunk-minimizing pass; beyond it the best
/// alignment found so far is kept.
const SEARCH_NODES: usize = 200_000;

/// Greedy alignment, stage by stage, fixes how many pairs each stage
/// contributes. Among alignments with those per-stage counts, the one with
/// the fewest chunks is then chosen by branch and bound.
pub fn meteor_alignment(
    candidate: &[String],
    reference: &[String],
    stages: &[MatchStage],
    synonyms: &SynonymTable,
) -> MeteorAlignment {
    let needs_stems = stages.contains(&MatchStage::Stem);
    let stems = |toks: &[String]| -> Vec<String> {
        if needs_stems {
            toks.iter().map(|t| porter_stem(t)).collect()
        } else {
            Vec::new()
        }
    };
    let (cand_stems, ref_stems) = (stems(candidate), stems(reference));
    let active: Vec<MatchStage> = stages
        .iter()
        .copied()
        .filter(|s| !(*s == MatchStage::Synonym && synonyms.is_empty()))
        .collect();

    // rel[i][j]: first active stage relating the two tokens.
    let rel: Vec<Vec<Option<usize>>> = (0..candidate.len())
        .map(|i| {
            (0..reference.len())
                .map(|j| {
                    active.iter().position(|stage| match stage {
                        MatchStage::Exact => candidate[i] == reference[j],
                        MatchStage::Stem => cand_stems[i] == ref_stems[j],
                        MatchStage::Synonym => synonyms.are_synonyms(&candidate[i], &reference[j]),
                    })
                })
                .collect()
        })
        .collect();

    let mut cand_match: Vec<Option<usize>> = vec![None; candidate.len()];
    let mut ref_used = vec![false; reference.len()];
    let mut target = vec![0usize; active.len()];
    for (s, count) in target.iter_mut().enumerate() {
        for i in 0..candidate.len() {
            if cand_match[i].is_some() {
                continue;
            }
            let free = |j: usize| !ref_used[j] && rel[i][j] == Some(s);
            let follow = i
                .checked_sub(1)
                .and_then(|p| cand_match[p])
                .map(|j| j + 1)
                .filter(|&j| j < reference.len() && free(j));
            if let Some(j) = follow.or_else(|| (0..reference.len()).find(|&j| free(j))) {
                cand_match[i] = Some(j);
                ref_used[j] = true;
                *count += 1;
            }
        }
    }

    let greedy = pairs_of(&cand_match);
    let mut search = ChunkSearch {
        rel: &rel,
        target: &target,
        best_chunks: count_chunks(&greedy),
        best: greedy,
        nodes: 0,
        current: vec![None; candidate.len()],
        used: vec![false; reference.len()],
        counts: vec![0; target.len()],
    };
    search.descend(0, 0);
    let chunks = search.best_chunks;
    MeteorAlignment {
        pairs: search.best,
        chunks,
    }
}

fn pairs_of(cand_match: &[Option<usize>]) -> Vec<(usize, usize)> {
    cand_match
        .iter()
        .enumerate()
        .filter_map(|(i, m)| m.map(|j| (i, j)))
        .collect()
}

fn count_chunks(pairs: &[(usize, usize)]) -> usize {
    if pairs.is_empty() {
        return 0;
    }
    1 + pairs
        .windows(2)
        .filter(|w| !(w[1].0 == w[0].0 + 1 && w[1].1 == w[0].1 + 1))
        .count()
}

struct ChunkSearch<'a> {
    rel: &'a [Vec<Option<usize>>],
    target: &'a [usize],
    best: Vec<(usize, usize)>,
    best_chunks: usize,
    nodes: usize,
    current: Vec<Option<usize>>,
    used: Vec<bool>,
    counts: Vec<usize>,
}

impl ChunkSearch<'_> {
    fn descend(&mut self, i: usize, chunks: usize) {
        self.nodes += 1;
        if self.nodes > SEARCH_NODES || chunks >= self.best_chunks {
            return;
        }
        let n = self.rel.len();
        let missing: usize = self.target.iter().zip(&self.counts).map(|(t, c)| t - c).sum();
        if missing == 0 {
            self.best_chunks = chunks;
            self.best = pairs_of(&self.current);
            return;
        }
        if i == n || missing > n - i {
            return;
        }
        let prev = i.checked_sub(1).and_then(|p| self.current[p]);
        let m = self.rel[i].len();
        // The position extending the previous pair goes first.
        let mut order: Vec<usize> = Vec::with_capacity(m);
        if let Some(j) = prev.map(|j| j + 1).filter(|&j| j < m) {
            order.push(j);
        }
        order.extend((0..m).filter(|&j| Some(j) != prev.map(|p| p + 1)));
        for j in order {
            let Some(s) = self.rel[i][j] else { continue };
            if self.used[j] || self.counts[s] == self.target[s] {
                continue;
            }
            let extends = prev == Some(j.wrapping_sub(1)) && j > 0;
            self.used[j] = true;
            self.counts[s] += 1;
            self.current[i] = Some(j);
            self.descend(i + 1, chunks + usize::from(!extends));
            self.current[i] = None;
            self.counts[s] -= 1;
            self.used[j] = false;
        }
        self.descend(i + 1, chunks);
    }
}

fn score_one(candidate: &[String], reference: &[String], cfg: &MeteorConfig, syn: &SynonymTable) -> f64 {
    let align = meteor_alignment(candidate, reference, &cfg.stages, syn);
    let m = align.matches();
    if m == 0 {
        return 0.0;
    }
    let p = m as f64 / candidate.len() as f64;
    let r = m as f64 / reference.len() as f64;
    let f_mean = p * r / (cfg.alpha * p + (1.0 - cfg.alpha) * r);
    let frag = align.chunks as f64 / m as f64;
    let pen = cfg.gamma * frag.powf(cfg.beta);
    (1.0 - pen) * f_mean
}

/// Maximum over references of `(1 - Pen) * F_mean`.
pub fn meteor(
    candidate: &TokenizedCaption,
    refs: &[TokenizedCaption],
    cfg: &MeteorConfig,
    syn: &SynonymTable,
) -> Result<f64> {
    if candidate.is_empty() {
        return Err(Error::InvalidInput(format!(
            "METEOR: candidate {} has no tokens",
            candidate.caption_id
        )));
    }
    if refs.is_empty() || refs.iter().any(|r| r.is_empty()) {
        return Err(Error::InvalidInput(format!(
            "METEOR: candidate {} needs non-empty references",
            candidate.caption_id
        )));
    }
    Ok(refs
        .iter()
        .map(|r| score_one(&candidate.tokens, &r.tokens, cfg, syn))
        .fold(0.0, f64::max))
}
