//! Tokenization, stemming and n-gram counting shared by the n-gram metrics.

mod ngram;
mod porter;
mod synonyms;
mod tokenize;

pub use ngram::{ngram_counts, NGramCounts};
pub use porter::porter_stem;
pub use synonyms::{load_synonym_table, SynonymTable};
pub use tokenize::{tokenize, Scheme, TokenizedCaption};
