//! Caption-evaluation metrics and a perturbation-based harness for checking
//! how well each metric recovers a known quality order.

pub mod corpus;
pub mod embedding;
pub mod error;
pub mod metrics;
pub mod perturb;
pub mod rankeval;
pub mod scorer;
pub mod seed;
pub mod text;

pub use corpus::{
    load_candidate_file, load_coco_annotations, load_external_scores, split_references, write_candidate_file,
    Caption, EvalCorpus, EvalItem, ExternalScores, ReferenceSet, SplitCorpus,
};
pub use embedding::{load_embeddings, EmbeddingBundle};
pub use error::{Error, Result};
pub use metrics::{BleuConfig, CiderConfig, MeteorConfig, MetricReport, RougeConfig, Signature};
pub use perturb::{BagOfWords, PerturbationKind, PerturbationSpec, TierSpec};
pub use rankeval::{RankResult, Tier, TieMode};
pub use scorer::{CaptionScorer, score_corpus};
pub use text::{tokenize, Scheme, SynonymTable, TokenizedCaption};
