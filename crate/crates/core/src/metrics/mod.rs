//! BLEU, METEOR, ROUGE-L and CIDEr over tokenized captions.

mod bleu;
mod cider;
mod meteor;
mod report;
mod rouge;

pub use bleu::{
    bleu_corpus, bleu_from_stats, bleu_sentence, bleu_stats, BleuConfig, BleuScores, BleuStats,
    RefLenPolicy, Smoothing,
};
pub use cider::{cider_build_stats, cider_score, CiderConfig, CorpusStats};
pub use meteor::{meteor, meteor_alignment, MatchStage, MeteorAlignment, MeteorConfig};
pub use report::{format_param, MetricReport, Signature};
pub use rouge::{lcs_len, rouge_l, BetaMode, MultiRef, RougeConfig};
