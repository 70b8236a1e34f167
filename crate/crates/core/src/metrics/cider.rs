use std::collections::HashMap;

use super::report::Signature;
use crate::corpus::ReferenceSet;
use crate::error::{Error, Result};
use crate::text::{ngram_counts, porter_stem, tokenize, Scheme, TokenizedCaption};

#[derive(Debug, Clone, PartialEq)]
pub struct CiderConfig {
    pub max_order: usize,
    /// Per-order weights; `None` means uniform `1/N`.
    pub weights: Option<Vec<f64>>,
    pub scale: f64,
}

impl Default for CiderConfig {
    fn default() -> Self {
        CiderConfig {
            max_order: 4,
            weights: None,
            scale: 10.0,
        }
    }
}

impl CiderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_order == 0 {
            return Err(Error::Config("CIDEr max order must be at least 1".into()));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::Config(format!("CIDEr scale must be positive, got {}", self.scale)));
        }
        if let Some(w) = &self.weights {
            let sum: f64 = w.iter().sum();
            if w.len() != self.max_order || w.iter().any(|x| *x < 0.0) || (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Config(
                    "CIDEr weights must be N non-negative values summing to 1".into(),
                ));
            }
        }
        Ok(())
    }

    fn weight(&self, order: usize) -> f64 {
        match &self.weights {
            Some(w) => w[order - 1],
            None => 1.0 / self.max_order as f64,
        }
    }

    pub fn signature(&self, stats: &CorpusStats) -> Signature {
        Signature::new("CIDEr", Some(stats.scheme))
            .param("idf", format!("corpus{}", stats.num_images))
            .param("n", self.max_order)
            .num("scale", self.scale)
            .param("stem", stats.stemmed)
            .param(
                "w",
                match &self.weights {
                    None => "uniform".to_string(),
                    Some(w) => w.iter().map(|x| super::format_param(*x)).collect::<Vec<_>>().join(","),
                },
            )
    }
}

/// Document frequencies of reference n-grams, one document per image.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusStats {
    pub num_images: usize,
    pub max_order: usize,
    pub scheme: Scheme,
    pub stemmed: bool,
    /// `doc_freq[n-1][gram]` = images whose references contain `gram`.
    pub doc_freq: Vec<HashMap<Vec<String>, usize>>,
}

impl CorpusStats {
    pub fn doc_freq(&self, gram: &[String]) -> usize {
        self.doc_freq
            .get(gram.len().wrapping_sub(1))
            .and_then(|m| m.get(gram))
            .copied()
            .unwrap_or(0)
    }

    /// Tokens as CIDEr sees them: stemmed when the statistics were.
    pub fn prepare(&self, tokens: &[String]) -> Vec<String> {
        if self.stemmed {
            tokens.iter().map(|t| porter_stem(t)).collect()
        } else {
            tokens.to_vec()
        }
    }
}

pub fn cider_build_stats(
    refsets: &[ReferenceSet],
    scheme: Scheme,
    stem: bool,
    max_order: usize,
) -> Result<CorpusStats> {
    if refsets.is_empty() {
        return Err(Error::InvalidInput("CIDEr statistics need at least one reference set".into()));
    }
    if max_order == 0 {
        return Err(Error::Config("CIDEr max order must be at least 1".into()));
    }
    let mut stats = CorpusStats {
        num_images: refsets.len(),
        max_order,
        scheme,
        stemmed: stem,
        doc_freq: vec![HashMap::new(); max_order],
    };
    for set in refsets {
        let token_lists: Vec<Vec<String>> = set
            .refs
            .iter()
            .map(|r| stats.prepare(&tokenize(&r.text, scheme)))
            .collect();
        for n in 1..=max_order {
            let mut seen: std::collections::HashSet<&[String]> = Default::default();
            for toks in &token_lists {
                seen.extend(toks.windows(n));
            }
            for gram in seen {
                *stats.doc_freq[n - 1].entry(gram.to_vec()).or_insert(0) += 1;
            }
        }
    }
    Ok(stats)
}

/// TF-IDF vector of one order: `tf(g) * ln(N / max(df(g), 1))`.
fn tfidf<'a>(tokens: &'a [String], n: usize, stats: &CorpusStats) -> HashMap<&'a [String], f64> {
    let big_n = stats.num_images as f64;
    ngram_counts(tokens, n)
        .expect("order >= 1")
        .counts
        .into_iter()
        .map(|(gram, tf)| {
            let df = stats.doc_freq(gram).max(1) as f64;
            (gram, tf as f64 * (big_n / df).ln())
        })
        .collect()
}

fn cosine(a: &HashMap<&[String], f64>, b: &HashMap<&[String], f64>) -> f64 {
    let norm = |v: &HashMap<&[String], f64>| v.values().map(|x| x * x).sum::<f64>().sqrt();
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let dot: f64 = small
        .iter()
        .filter_map(|(g, x)| large.get(g).map(|y| x * y))
        .sum();
    dot / (na * nb)
}

/// `scale * sum_n w_n * mean_j cos(g^n(c), g^n(s_j))`.
pub fn cider_score(
    candidate: &TokenizedCaption,
    refs: &[TokenizedCaption],
    stats: &CorpusStats,
    cfg: &CiderConfig,
) -> Result<f64> {
    cfg.validate()?;
    if cfg.max_order > stats.max_order {
        return Err(Error::Config(format!(
            "CIDEr order {} exceeds the statistics' order {}",
            cfg.max_order, stats.max_order
        )));
    }
    if refs.is_empty() {
        return Err(Error::InvalidInput("CIDEr needs at least one reference".into()));
    }
    let cand = stats.prepare(&candidate.tokens);
    let ref_tokens: Vec<Vec<String>> = refs.iter().map(|r| stats.prepare(&r.tokens)).collect();

    let mut total = 0.0;
    for n in 1..=cfg.max_order {
        let cv = tfidf(&cand, n, stats);
        let mean: f64 = ref_tokens
            .iter()
            .map(|r| cosine(&cv, &tfidf(r, n, stats)))
            .sum::<f64>()
            / ref_tokens.len() as f64;
        total += cfg.weight(n) * mean;
    }
    Ok(cfg.scale * total)
}
