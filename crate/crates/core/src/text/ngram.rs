use std::collections::HashMap;

use crate::error::{Error, Result};

/// Multiset of contiguous n-token windows, borrowing from the token list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NGramCounts<'a> {
    pub n: usize,
    pub counts: HashMap<&'a [String], usize>,
}

impl<'a> NGramCounts<'a> {
    pub fn get(&self, gram: &[String]) -> usize {
        self.counts.get(gram).copied().unwrap_or(0)
    }

    /// Sum of multiplicities.
    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }
}

pub fn ngram_counts(tokens: &[String], n: usize) -> Result<NGramCounts<'_>> {
    if n == 0 {
        return Err(Error::InvalidInput("n-gram order must be at least 1".into()));
    }
    let mut counts = HashMap::new();
    for window in tokens.windows(n) {
        *counts.entry(window).or_insert(0) += 1;
    }
    Ok(NGramCounts { n, counts })
}
