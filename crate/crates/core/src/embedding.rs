//! Cosine-similarity metrics over externally exported embeddings:
//! BERTScore-style greedy matching, CLIPScore and its reference variant.
//!
//! Nothing here runs a model. Vectors come from a JSON-lines bundle:
//!
//! ```text
//! {"dim": 3}
//! {"kind":"caption","id":"c1","tokens":["a","dog"],"token_vectors":[[..],[..]],"sentence_vector":[..]}
//! {"kind":"image","id":"544","vector":[..]}
//! ```

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::metrics::Signature;

#[derive(Debug, Clone, PartialEq)]
pub struct CaptionEmbedding {
    pub tokens: Vec<String>,
    pub token_vectors: Vec<Vec<f64>>,
    pub sentence_vector: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBundle {
    pub dim: usize,
    /// Header keys besides `dim`, such as encoder identifiers.
    pub header: BTreeMap<String, String>,
    pub captions: HashMap<String, CaptionEmbedding>,
    pub images: HashMap<String, Vec<f64>>,
}

impl EmbeddingBundle {
    pub fn new(dim: usize) -> Self {
        EmbeddingBundle {
            dim,
            header: BTreeMap::new(),
            captions: HashMap::new(),
            images: HashMap::new(),
        }
    }

    pub fn caption(&self, id: &str) -> Result<&CaptionEmbedding> {
        self.captions
            .get(id)
            .ok_or_else(|| Error::Integrity(format!("no embeddings for caption {id}")))
    }

    pub fn image(&self, id: &str) -> Result<&[f64]> {
        self.images
            .get(id)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Integrity(format!("no embedding for image {id}")))
    }

    fn check(&self, what: &str, v: &[f64]) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::Integrity(format!(
                "{what}: vector has {} components, expected {}",
                v.len(),
                self.dim
            )));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Integrity(format!("{what}: non-finite component")));
        }
        Ok(())
    }

    pub fn insert_caption(&mut self, id: impl Into<String>, emb: CaptionEmbedding) -> Result<()> {
        let id = id.into();
        if emb.tokens.len() != emb.token_vectors.len() {
            return Err(Error::Integrity(format!(
                "caption {id}: {} tokens but {} token vectors",
                emb.tokens.len(),
                emb.token_vectors.len()
            )));
        }
        for (i, v) in emb.token_vectors.iter().enumerate() {
            self.check(&format!("caption {id} token {i}"), v)?;
        }
        self.check(&format!("caption {id} sentence"), &emb.sentence_vector)?;
        if self.captions.insert(id.clone(), emb).is_some() {
            return Err(Error::Integrity(format!("caption {id} appears twice")));
        }
        Ok(())
    }

    pub fn insert_image(&mut self, id: impl Into<String>, vector: Vec<f64>) -> Result<()> {
        let id = id.into();
        self.check(&format!("image {id}"), &vector)?;
        if self.images.insert(id.clone(), vector).is_some() {
            return Err(Error::Integrity(format!("image {id} appears twice")));
        }
        Ok(())
    }
}

#[derive(Deserialize)]
struct Header {
    dim: usize,
    #[serde(flatten)]
    extra: BTreeMap<String, serde_json::Value>,
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum Record {
    Caption {
        id: String,
        tokens: Vec<String>,
        token_vectors: Vec<Vec<f64>>,
        sentence_vector: Vec<f64>,
    },
    Image {
        id: String,
        vector: Vec<f64>,
    },
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingBundle> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_embeddings(&text).map_err(|e| match e {
        Error::Parse {
            line,
            column,
            message,
            ..
        } => Error::Parse {
            path: path.to_path_buf(),
            line,
            column,
            message,
        },
        Error::Integrity(m) => Error::Integrity(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Parses a bundle held in memory; errors carry 1-based line numbers.
pub fn parse_embeddings(text: &str) -> Result<EmbeddingBundle> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let parse_err = |lineno: usize, e: serde_json::Error| Error::Parse {
        path: "<embeddings>".into(),
        line: lineno + 1,
        column: e.column(),
        message: e.to_string(),
    };
    let (hl, header) = lines
        .next()
        .ok_or_else(|| Error::Integrity("embedding file is empty".into()))?;
    let header: Header = serde_json::from_str(header).map_err(|e| parse_err(hl, e))?;
    if header.dim == 0 {
        return Err(Error::Integrity("embedding dim must be positive".into()));
    }
    let mut bundle = EmbeddingBundle::new(header.dim);
    bundle.header = header
        .extra
        .into_iter()
        .map(|(k, v)| match v {
            serde_json::Value::String(s) => (k, s),
            other => (k, other.to_string()),
        })
        .collect();
    for (lineno, line) in lines {
        let record: Record = serde_json::from_str(line).map_err(|e| parse_err(lineno, e))?;
        let res = match record {
            Record::Caption {
                id,
                tokens,
                token_vectors,
                sentence_vector,
            } => bundle.insert_caption(
                id,
                CaptionEmbedding {
                    tokens,
                    token_vectors,
                    sentence_vector,
                },
            ),
            Record::Image { id, vector } => bundle.insert_image(id, vector),
        };
        res.map_err(|e| match e {
            Error::Integrity(m) => Error::Integrity(format!("line {}: {m}", lineno + 1)),
            other => other,
        })?;
    }
    Ok(bundle)
}

/// Cosine similarity; 0 when either operand has zero magnitude.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidInput(format!(
            "cosine of vectors with {} and {} components",
            a.len(),
            b.len()
        )));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub rows: Vec<String>,
    pub cols: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

pub fn similarity_matrix(
    cand: &[(String, Vec<f64>)],
    refs: &[(String, Vec<f64>)],
) -> Result<SimilarityMatrix> {
    if cand.is_empty() || refs.is_empty() {
        return Err(Error::InvalidInput("similarity matrix needs tokens on both sides".into()));
    }
    let values = cand
        .iter()
        .map(|(_, a)| refs.iter().map(|(_, b)| cosine(a, b)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    Ok(SimilarityMatrix {
        rows: cand.iter().map(|(l, _)| l.clone()).collect(),
        cols: refs.iter().map(|(l, _)| l.clone()).collect(),
        values,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BertScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn weight_of(weights: Option<&HashMap<String, f64>>, token: &str) -> f64 {
    weights.and_then(|w| w.get(token)).copied().unwrap_or(1.0)
}

/// Weighted mean over `from` tokens of their best cosine against `to`.
fn greedy_side(
    from: &CaptionEmbedding,
    to: &CaptionEmbedding,
    weights: Option<&HashMap<String, f64>>,
) -> Result<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for (tok, v) in from.tokens.iter().zip(&from.token_vectors) {
        let mut best = f64::NEG_INFINITY;
        for u in &to.token_vectors {
            best = best.max(cosine(v, u)?);
        }
        let w = weight_of(weights, tok);
        num += w * best;
        den += w;
    }
    Ok(if den > 0.0 { num / den } else { 0.0 })
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Greedy-matching precision/recall/F1 of one candidate against one reference.
pub fn bertscore_pair(
    cand: &CaptionEmbedding,
    reference: &CaptionEmbedding,
    weights: Option<&HashMap<String, f64>>,
) -> Result<BertScore> {
    if cand.tokens.is_empty() || reference.tokens.is_empty() {
        return Err(Error::InvalidInput("BERTScore needs at least one token per side".into()));
    }
    let precision = greedy_side(cand, reference, weights)?;
    let recall = greedy_side(reference, cand, weights)?;
    Ok(BertScore {
        precision,
        recall,
        f1: f1(precision, recall),
    })
}

/// Scores against each reference independently and keeps the triple of the
/// reference with the highest F1. `weights` maps token strings to
/// importance weights (missing tokens weigh 1).
pub fn bertscore(
    candidate_id: &str,
    ref_ids: &[&str],
    bundle: &EmbeddingBundle,
    weights: Option<&HashMap<String, f64>>,
) -> Result<BertScore> {
    if ref_ids.is_empty() {
        return Err(Error::InvalidInput("BERTScore needs at least one reference".into()));
    }
    let cand = bundle.caption(candidate_id)?;
    let mut best: Option<BertScore> = None;
    for id in ref_ids {
        let s = bertscore_pair(cand, bundle.caption(id)?, weights)?;
        if best.map_or(true, |b| s.f1 > b.f1) {
            best = Some(s);
        }
    }
    Ok(best.expect("at least one reference"))
}

/// `w * max(cos(image, caption), 0)`.
pub fn clipscore(image_id: &str, candidate_id: &str, bundle: &EmbeddingBundle, w: f64) -> Result<f64> {
    let img = bundle.image(image_id)?;
    let cap = &bundle.caption(candidate_id)?.sentence_vector;
    Ok(w * cosine(img, cap)?.max(0.0))
}

/// Harmonic mean of CLIPScore and the best clamped caption-reference cosine.
pub fn clipscore_ref(
    image_id: &str,
    candidate_id: &str,
    ref_ids: &[&str],
    bundle: &EmbeddingBundle,
    w: f64,
) -> Result<f64> {
    if ref_ids.is_empty() {
        return Err(Error::InvalidInput("CLIPScore-ref needs at least one reference".into()));
    }
    let clip = clipscore(image_id, candidate_id, bundle, w)?;
    let cand = &bundle.caption(candidate_id)?.sentence_vector;
    let mut ref_term: f64 = 0.0;
    for id in ref_ids {
        ref_term = ref_term.max(cosine(cand, &bundle.caption(id)?.sentence_vector)?.max(0.0));
    }
    Ok(harmonic_mean(clip, ref_term))
}

pub fn harmonic_mean(a: f64, b: f64) -> f64 {
    if a <= 0.0 || b <= 0.0 {
        0.0
    } else {
        2.0 * a * b / (a + b)
    }
}

fn with_header(sig: Signature, bundle: &EmbeddingBundle) -> Signature {
    bundle
        .header
        .iter()
        .fold(sig, |s, (k, v)| s.param(k.as_str(), v.replace('|', "_")))
}

pub fn bertscore_signature(bundle: &EmbeddingBundle, weighted: bool) -> Signature {
    with_header(Signature::new("BERTScore", None), bundle)
        .param("dim", bundle.dim)
        .param("idf", if weighted { "table" } else { "none" })
        .param("multiref", "max-f1")
        .param("rescale", "no")
}

pub fn clipscore_signature(name: &str, bundle: &EmbeddingBundle, w: f64) -> Signature {
    with_header(Signature::new(name, None), bundle)
        .param("dim", bundle.dim)
        .num("w", w)
}
