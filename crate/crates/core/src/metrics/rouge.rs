use super::report::Signature;
use crate::error::{Error, Result};
use crate::text::{Scheme, TokenizedCaption};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BetaMode {
    /// `beta = P_lcs / R_lcs` per reference.
    Ratio,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MultiRef {
    /// Maximum of the per-reference F-measure.
    #[default]
    Max,
    /// F-measure of the maximum precision and the maximum recall taken
    /// independently across references (the COCO caption toolkit's rule).
    MaxPrecisionRecall,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RougeConfig {
    pub beta_mode: BetaMode,
    pub multi_ref: MultiRef,
}

impl Default for RougeConfig {
    fn default() -> Self {
        RougeConfig {
            beta_mode: BetaMode::Fixed(1.2),
            multi_ref: MultiRef::Max,
        }
    }
}

impl RougeConfig {
    pub fn validate(&self) -> Result<()> {
        if let BetaMode::Fixed(b) = self.beta_mode {
            if !(b > 0.0 && b.is_finite()) {
                return Err(Error::Config(format!("ROUGE-L beta must be positive, got {b}")));
            }
        }
        Ok(())
    }

    pub fn signature(&self, scheme: Scheme) -> Signature {
        let sig = Signature::new("ROUGE-L", Some(scheme)).param(
            "multiref",
            match self.multi_ref {
                MultiRef::Max => "max",
                MultiRef::MaxPrecisionRecall => "max-pr",
            },
        );
        match self.beta_mode {
            BetaMode::Ratio => sig.param("beta", "ratio"),
            BetaMode::Fixed(b) => sig.num("beta", b),
        }
    }
}

/// Longest common subsequence length, O(|a|·|b|) time, O(|b|) space.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

fn f_measure(p: f64, r: f64, mode: BetaMode) -> f64 {
    if p == 0.0 || r == 0.0 {
        return 0.0;
    }
    let beta = match mode {
        BetaMode::Ratio => p / r,
        BetaMode::Fixed(b) => b,
    };
    let b2 = beta * beta;
    (1.0 + b2) * r * p / (r + b2 * p)
}

/// ROUGE-L with the reference as X (length m) and the candidate as Y
/// (length n): `R = LCS/m`, `P = LCS/n`.
pub fn rouge_l(candidate: &TokenizedCaption, refs: &[TokenizedCaption], cfg: &RougeConfig) -> Result<f64> {
    cfg.validate()?;
    if candidate.is_empty() || refs.is_empty() || refs.iter().any(|r| r.is_empty()) {
        return Err(Error::InvalidInput(format!(
            "ROUGE-L: candidate {} and its references must be non-empty",
            candidate.caption_id
        )));
    }
    let n = candidate.len() as f64;
    let pr: Vec<(f64, f64)> = refs
        .iter()
        .map(|r| {
            let lcs = lcs_len(&r.tokens, &candidate.tokens) as f64;
            (lcs / n, lcs / r.len() as f64)
        })
        .collect();
    Ok(match cfg.multi_ref {
        MultiRef::Max => pr
            .iter()
            .map(|&(p, r)| f_measure(p, r, cfg.beta_mode))
            .fold(0.0, f64::max),
        MultiRef::MaxPrecisionRecall => {
            let p = pr.iter().map(|x| x.0).fold(0.0, f64::max);
            let r = pr.iter().map(|x| x.1).fold(0.0, f64::max);
            f_measure(p, r, cfg.beta_mode)
        }
    })
}
