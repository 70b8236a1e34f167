//! Metric names accepted on the command line and their construction.

use std::path::Path;
use std::sync::Arc;

use capscore::scorer::{
    BertScoreScorer, BleuScorer, CaptionScorer, CiderScorer, ClipScorer, ExternalScorer, MeteorScorer, RougeScorer,
};
use capscore::{load_embeddings, load_external_scores, EmbeddingBundle, ReferenceSet, SynonymTable};

use crate::config::RunConfig;
use crate::CliError;

pub const NGRAM_METRICS: &[&str] = &[
    "bleu-1",
    "bleu-2",
    "bleu-3",
    "bleu-4",
    "corpus-bleu",
    "meteor",
    "rouge-l",
    "cider",
];

pub const EMBEDDING_METRICS: &[&str] = &["bertscore", "clipscore", "clipscore-ref"];

fn canonical(name: &str) -> Result<&'static str, CliError> {
    let lower = name.trim().to_ascii_lowercase();
    let alias = match lower.as_str() {
        "sacrebleu" => "corpus-bleu",
        "rouge" | "rougel" => "rouge-l",
        other => other,
    };
    NGRAM_METRICS
        .iter()
        .chain(EMBEDDING_METRICS)
        .find(|m| **m == alias)
        .copied()
        .ok_or_else(|| {
            CliError::Usage(format!(
                "unknown metric {name:?}; known: {}, {}",
                NGRAM_METRICS.join(", "),
                EMBEDDING_METRICS.join(", ")
            ))
        })
}

/// File-name form of a metric name.
pub fn file_stem(metric_name: &str) -> String {
    metric_name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c.to_ascii_lowercase() } else { '_' })
        .collect()
}

/// Builds the configured scorers. `idf_refsets` feed CIDEr's document
/// frequencies; `caption_ids` are the ids external score files must cover.
pub fn build_scorers(
    cfg: &RunConfig,
    idf_refsets: &[ReferenceSet],
    caption_ids: &[String],
) -> Result<Vec<Box<dyn CaptionScorer>>, CliError> {
    let names: Vec<&'static str> = if cfg.metrics.is_empty() && cfg.external_scores.is_empty() {
        NGRAM_METRICS.to_vec()
    } else {
        cfg.metrics.iter().map(|m| canonical(m)).collect::<Result<_, _>>()?
    };
    let mut seen = std::collections::HashSet::new();
    if let Some(dup) = names.iter().find(|n| !seen.insert(**n)) {
        return Err(CliError::Usage(format!("metric {dup} listed twice")));
    }

    let mut bundle: Option<Arc<EmbeddingBundle>> = None;
    let mut embeddings = || -> Result<Arc<EmbeddingBundle>, CliError> {
        if let Some(b) = &bundle {
            return Ok(b.clone());
        }
        let path = cfg.embeddings.as_deref().ok_or_else(|| {
            CliError::Usage("embedding metrics need --embeddings <bundle>".into())
        })?;
        let b = Arc::new(load_embeddings(path)?);
        bundle = Some(b.clone());
        Ok(b)
    };
    let synonyms = Arc::new(match &cfg.synonyms {
        Some(p) => capscore::text::load_synonym_table(p)?,
        None => SynonymTable::default(),
    });

    let mut out: Vec<Box<dyn CaptionScorer>> = Vec::new();
    for name in names {
        let scorer: Box<dyn CaptionScorer> = match name {
            "bleu-1" | "bleu-2" | "bleu-3" | "bleu-4" => {
                let k = name[5..].parse().expect("registered order");
                Box::new(BleuScorer::new(k, cfg.bleu_config(), cfg.scheme)?)
            }
            "corpus-bleu" => Box::new(BleuScorer::standardized()),
            "meteor" => Box::new(MeteorScorer::new(cfg.meteor_config()?, cfg.scheme, synonyms.clone())?),
            "rouge-l" => Box::new(RougeScorer::new(cfg.rouge_config()?, cfg.scheme)?),
            "cider" => Box::new(CiderScorer::from_refsets(
                idf_refsets,
                cfg.scheme,
                cfg.cider.stem,
                cfg.cider_config(),
            )?),
            "bertscore" => Box::new(BertScoreScorer::new(embeddings()?, None)),
            "clipscore" => Box::new(ClipScorer::new(embeddings()?, cfg.clipscore.w, false)?),
            "clipscore-ref" => Box::new(ClipScorer::new(embeddings()?, cfg.clipscore.w, true)?),
            _ => unreachable!("canonical names only"),
        };
        out.push(scorer);
    }
    for path in &cfg.external_scores {
        let ext = load_external_scores(path, caption_ids)?;
        out.push(Box::new(ExternalScorer::new(ext.metric, source_name(path), ext.scores)));
    }
    Ok(out)
}

fn source_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}
