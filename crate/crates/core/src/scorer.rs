//! Caption-level scorers: each metric behind one object-safe trait so the
//! CLI and the rank experiments can treat them uniformly.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use rayon::prelude::*;

use crate::corpus::{Caption, EvalCorpus, ReferenceSet};
use crate::embedding::{self, EmbeddingBundle};
use crate::error::{Error, Result};
use crate::metrics::{
    bleu_from_stats, bleu_stats, cider_build_stats, cider_score, meteor, rouge_l, BleuConfig,
    BleuStats, CiderConfig, CorpusStats, MeteorConfig, MetricReport, RougeConfig,
};
use crate::text::{tokenize, Scheme, SynonymTable, TokenizedCaption};

pub trait CaptionScorer: Send + Sync {
    fn name(&self) -> &str;

    fn signature(&self) -> String;

    fn score(&self, candidate: &Caption, refs: &ReferenceSet) -> Result<f64>;

    /// Corpus-level score; the mean of per-caption scores unless the metric
    /// defines its own aggregation.
    fn aggregate(&self, _corpus: &EvalCorpus, per_caption: &[f64]) -> Result<f64> {
        if per_caption.is_empty() {
            return Err(Error::InvalidInput("cannot aggregate zero captions".into()));
        }
        Ok(per_caption.iter().sum::<f64>() / per_caption.len() as f64)
    }
}

/// Scores `pairs` in parallel, preserving order.
pub fn score_all(scorer: &dyn CaptionScorer, pairs: &[(&Caption, &ReferenceSet)]) -> Result<Vec<f64>> {
    pairs
        .par_iter()
        .map(|(c, r)| {
            let v = scorer.score(c, r)?;
            if !v.is_finite() {
                return Err(Error::Integrity(format!(
                    "{} produced a non-finite score for caption {}",
                    scorer.name(),
                    c.id
                )));
            }
            Ok(v)
        })
        .collect()
}

pub fn score_corpus(scorer: &dyn CaptionScorer, corpus: &EvalCorpus) -> Result<MetricReport> {
    if corpus.is_empty() {
        return Err(Error::InvalidInput("no candidates to score".into()));
    }
    let pairs: Vec<_> = corpus
        .items()
        .iter()
        .map(|i| (&i.candidate, &i.references))
        .collect();
    let scores = score_all(scorer, &pairs)?;
    let aggregate = scorer.aggregate(corpus, &scores)?;
    let per_caption: BTreeMap<String, f64> = corpus
        .items()
        .iter()
        .zip(&scores)
        .map(|(i, s)| (i.candidate.id.clone(), *s))
        .collect();
    Ok(MetricReport {
        metric_name: scorer.name().to_string(),
        signature: scorer.signature(),
        aggregate,
        per_caption,
    })
}

fn tokenized(c: &Caption, scheme: Scheme) -> TokenizedCaption {
    TokenizedCaption::new(&c.id, &c.text, scheme)
}

fn tokenized_refs(refs: &ReferenceSet, scheme: Scheme) -> Vec<TokenizedCaption> {
    refs.refs.iter().map(|r| tokenized(r, scheme)).collect()
}

/// Sentence-level `BLEU_k`, aggregated as corpus-level `BLEU_k`.
#[derive(Debug, Clone)]
pub struct BleuScorer {
    name: String,
    order: usize,
    cfg: BleuConfig,
    scheme: Scheme,
}

impl BleuScorer {
    pub fn new(order: usize, cfg: BleuConfig, scheme: Scheme) -> Result<Self> {
        cfg.validate()?;
        if order == 0 || order > cfg.max_order {
            return Err(Error::Config(format!(
                "BLEU order {order} outside 1..={}",
                cfg.max_order
            )));
        }
        Ok(BleuScorer {
            name: format!("BLEU-{order}"),
            order,
            cfg,
            scheme,
        })
    }

    /// Standardized BLEU: `intl-lite` tokens, `exp` smoothing, order 4.
    pub fn standardized() -> Self {
        BleuScorer {
            name: "corpus-BLEU".into(),
            order: 4,
            cfg: BleuConfig::standardized(),
            scheme: Scheme::IntlLite,
        }
    }

    fn stats(&self, candidate: &Caption, refs: &ReferenceSet) -> Result<BleuStats> {
        let cand = tokenize(&candidate.text, self.scheme);
        let ref_tokens: Vec<Vec<String>> = refs.refs.iter().map(|r| tokenize(&r.text, self.scheme)).collect();
        let slices: Vec<&[String]> = ref_tokens.iter().map(Vec::as_slice).collect();
        bleu_stats(&cand, &slices, &self.cfg)
    }
}

impl CaptionScorer for BleuScorer {
    fn name(&self) -> &str {
        &self.name
    }

    fn signature(&self) -> String {
        let sig = self.cfg.signature(&self.name, self.scheme);
        if self.order == self.cfg.max_order {
            sig.to_string()
        } else {
            sig.param("k", self.order).to_string()
        }
    }

    fn score(&self, candidate: &Caption, refs: &ReferenceSet) -> Result<f64> {
        Ok(bleu_from_stats(&self.stats(candidate, refs)?, &self.cfg)[self.order - 1])
    }

    fn aggregate(&self, corpus: &EvalCorpus, _per_caption: &[f64]) -> Result<f64> {
        let parts: Vec<BleuStats> = corpus
            .items()
            .par_iter()
            .map(|i| self.stats(&i.candidate, &i.references))
            .collect::<Result<_>>()?;
        let mut total = BleuStats::zero(self.cfg.max_order);
        for p in &parts {
            total += p;
        }
        Ok(bleu_from_stats(&total, &self.cfg)[self.order - 1])
    }
}

#[derive(Debug, Clone)]
pub struct MeteorScorer {
    cfg: MeteorConfig,
    scheme: Scheme,
    synonyms: Arc<SynonymTable>,
}

impl MeteorScorer {
    pub fn new(cfg: MeteorConfig, scheme: Scheme, synonyms: Arc<SynonymTable>) -> Result<Self> {
        cfg.validate()?;
        Ok(MeteorScorer { cfg, scheme, synonyms })
    }
}

impl CaptionScorer for MeteorScorer {
    fn name(&self) -> &str {
        "METEOR"
    }

    fn signature(&self) -> String {
        self.cfg.signature(self.scheme, &self.synonyms).to_string()
    }

    fn score(&self, candidate: &Caption, refs: &ReferenceSet) -> Result<f64> {
        meteor(
            &tokenized(candidate, self.scheme),
            &tokenized_refs(refs, self.scheme),
            &self.cfg,
            &self.synonyms,
        )
    }
}

#[derive(Debug, Clone)]
pub struct RougeScorer {
    cfg: RougeConfig,
    scheme: Scheme,
}

impl RougeScorer {
    pub fn new(cfg: RougeConfig, scheme: Scheme) -> Result<Self> {
        cfg.validate()?;
        Ok(RougeScorer { cfg, scheme })
    }
}

impl CaptionScorer for RougeScorer {
    fn name(&self) -> &str {
        "ROUGE-L"
    }

    fn signature(&self) -> String {
        self.cfg.signature(self.scheme).to_string()
    }

    fn score(&self, candidate: &Caption, refs: &ReferenceSet) -> Result<f64> {
        rouge_l(
            &tokenized(candidate, self.scheme),
            &tokenized_refs(refs, self.scheme),
            &self.cfg,
        )
    }
}

#[derive(Debug, Clone)]
pub struct CiderScorer {
    cfg: CiderConfig,
    stats: Arc<CorpusStats>,
}

impl CiderScorer {
    pub fn new(cfg: CiderConfig, stats: Arc<CorpusStats>) -> Result<Self> {
        cfg.validate()?;
        Ok(CiderScorer { cfg, stats })
    }

    /// Builds document frequencies over `refsets` (stemmed when `stem`).
    pub fn from_refsets(refsets: &[ReferenceSet], scheme: Scheme, stem: bool, cfg: CiderConfig) -> Result<Self> {
        let stats = cider_build_stats(refsets, scheme, stem, cfg.max_order)?;
        Self::new(cfg, Arc::new(stats))
    }

    pub fn stats(&self) -> &CorpusStats {
        &self.stats
    }
}

impl CaptionScorer for CiderScorer {
    fn name(&self) -> &str {
        "CIDEr"
    }

    fn signature(&self) -> String {
        self.cfg.signature(&self.stats).to_string()
    }

    fn score(&self, candidate: &Caption, refs: &ReferenceSet) -> Result<f64> {
        let scheme = self.stats.scheme;
        cider_score(
            &tokenized(candidate, scheme),
            &tokenized_refs(refs, scheme),
            &self.stats,
            &self.cfg,
        )
    }
}

/// BERTScore F1 from exported contextual token embeddings.
#[derive(Debug, Clone)]
pub struct BertScoreScorer {
    bundle: Arc<EmbeddingBundle>,
    weights: Option<Arc<HashMap<String, f64>>>,
}

impl BertScoreScorer {
    pub fn new(bundle: Arc<EmbeddingBundle>, weights: Option<Arc<HashMap<String, f64>>>) -> Self {
        BertScoreScorer { bundle, weights }
    }
}

impl CaptionScorer for BertScoreScorer {
    fn name(&self) -> &str {
        "BERTScore"
    }

    fn signature(&self) -> String {
        embedding::bertscore_signature(&self.bundle, self.weights.is_some()).to_string()
    }

    fn score(&self, candidate: &Caption, refs: &ReferenceSet) -> Result<f64> {
        let ids: Vec<&str> = refs.refs.iter().map(|r| r.id.as_str()).collect();
        Ok(embedding::bertscore(&candidate.id, &ids, &self.bundle, self.weights.as_deref())?.f1)
    }
}

#[derive(Debug, Clone)]
pub struct ClipScorer {
    bundle: Arc<EmbeddingBundle>,
    w: f64,
    with_refs: bool,
}

impl ClipScorer {
    pub fn new(bundle: Arc<EmbeddingBundle>, w: f64, with_refs: bool) -> Result<Self> {
        if !(w > 0.0 && w.is_finite()) {
            return Err(Error::Config(format!("CLIPScore scale must be positive, got {w}")));
        }
        Ok(ClipScorer { bundle, w, with_refs })
    }
}

impl CaptionScorer for ClipScorer {
    fn name(&self) -> &str {
        if self.with_refs {
            "CLIPScore-ref"
        } else {
            "CLIPScore"
        }
    }

    fn signature(&self) -> String {
        embedding::clipscore_signature(self.name(), &self.bundle, self.w).to_string()
    }

    fn score(&self, candidate: &Caption, refs: &ReferenceSet) -> Result<f64> {
        let image = candidate.image_id.to_string();
        if self.with_refs {
            let ids: Vec<&str> = refs.refs.iter().map(|r| r.id.as_str()).collect();
            embedding::clipscore_ref(&image, &candidate.id, &ids, &self.bundle, self.w)
        } else {
            embedding::clipscore(&image, &candidate.id, &self.bundle, self.w)
        }
    }
}

/// Scores computed by an external tool, looked up by caption id.
#[derive(Debug, Clone)]
pub struct ExternalScorer {
    metric: String,
    source: String,
    scores: Arc<HashMap<String, f64>>,
}

impl ExternalScorer {
    pub fn new(metric: impl Into<String>, source: impl Into<String>, scores: HashMap<String, f64>) -> Self {
        ExternalScorer {
            metric: metric.into(),
            source: source.into(),
            scores: Arc::new(scores),
        }
    }
}

impl CaptionScorer for ExternalScorer {
    fn name(&self) -> &str {
        &self.metric
    }

    fn signature(&self) -> String {
        crate::metrics::Signature::new(&self.metric, None)
            .param("external", &self.source)
            .to_string()
    }

    fn score(&self, candidate: &Caption, _refs: &ReferenceSet) -> Result<f64> {
        self.scores.get(&candidate.id).copied().ok_or_else(|| {
            Error::Integrity(format!("no {} score for caption {}", self.metric, candidate.id))
        })
    }
}

type ScoreFn = dyn Fn(&Caption, &ReferenceSet) -> Result<f64> + Send + Sync;

/// Wraps an arbitrary closure as a scorer.
pub struct FnScorer {
    name: String,
    signature: String,
    f: Box<ScoreFn>,
}

impl FnScorer {
    pub fn new<F>(name: impl Into<String>, signature: impl Into<String>, f: F) -> Self
    where
        F: Fn(&Caption, &ReferenceSet) -> Result<f64> + Send + Sync + 'static,
    {
        FnScorer {
            name: name.into(),
            signature: signature.into(),
            f: Box::new(f),
        }
    }
}

impl CaptionScorer for FnScorer {
    fn name(&self) -> &str {
        &self.name
    }

    fn signature(&self) -> String {
        self.signature.clone()
    }

    fn score(&self, candidate: &Caption, refs: &ReferenceSet) -> Result<f64> {
        (self.f)(candidate, refs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::EvalItem;

    fn refset(image_id: u64, texts: &[&str]) -> ReferenceSet {
        ReferenceSet {
            image_id,
            refs: texts
                .iter()
                .enumerate()
                .map(|(i, t)| Caption::new(format!("{image_id}-{i}"), image_id, *t).unwrap())
                .collect(),
        }
    }

    #[test]
    fn bleu_scorer_matches_direct_computation() {
        let refs = refset(1, &["a cat on a mat", "the cat sat"]);
        let cand = Caption::new("c", 1, "the cat on a mat").unwrap();
        let s = BleuScorer::new(2, BleuConfig::default(), Scheme::CocoLite).unwrap();
        let v = s.score(&cand, &refs).unwrap();
        // c=5, closest r=5; p1 = 5/5, p2: "the cat", "cat on", "on a", "a mat" all present = 4/4.
        assert!((v - 1.0).abs() < 1e-12);
        assert!(s.signature().contains("|k:2|"));
        assert!(BleuScorer::new(5, BleuConfig::default(), Scheme::CocoLite).is_err());
    }

    #[test]
    fn report_carries_signature_and_scores() {
        let corpus = EvalCorpus::new(vec![EvalItem {
            image_id: 1,
            candidate: Caption::new("c", 1, "a dog").unwrap(),
            references: refset(1, &["a dog", "a hound"]),
        }])
        .unwrap();
        let s = RougeScorer::new(RougeConfig::default(), Scheme::CocoLite).unwrap();
        let r = score_corpus(&s, &corpus).unwrap();
        assert_eq!(r.per_caption["c"], 1.0);
        assert_eq!(r.aggregate, 1.0);
        assert!(r.signature.starts_with("ROUGE-L|tok:coco-lite|beta:1.2|multiref:max|v:"));
    }

    #[test]
    fn non_finite_scores_are_rejected() {
        let s = FnScorer::new("bad", "bad", |_, _| Ok(f64::NAN));
        let refs = refset(1, &["x"]);
        let cand = Caption::new("c", 1, "x").unwrap();
        assert!(score_all(&s, &[(&cand, &refs)]).is_err());
    }

    #[test]
    fn external_scorer_looks_up_ids() {
        let s = ExternalScorer::new("SPICE", "spice.json", [("c".to_string(), 0.25)].into());
        let refs = refset(1, &["x"]);
        assert_eq!(s.score(&Caption::new("c", 1, "x").unwrap(), &refs).unwrap(), 0.25);
        assert!(s.score(&Caption::new("d", 1, "x").unwrap(), &refs).is_err());
    }
}
