use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use unicode_general_category::{get_general_category, GeneralCategory};

use crate::error::{Error, Result};

/// Characters removed by the `coco-lite` scheme.
const COCO_STRIP: &[char] = &['.', ',', '!', '?', ';', ':', '"', '\'', '(', ')', '[', ']'];

/// Named tokenization scheme. The name is embedded in every metric signature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scheme {
    /// Lowercase, drop `.,!?;:"'()[]`, split on whitespace.
    #[serde(rename = "coco-lite")]
    CocoLite,
    /// Lowercase, split every unicode punctuation character into its own
    /// token, split on whitespace.
    #[serde(rename = "intl-lite")]
    IntlLite,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::CocoLite => "coco-lite",
            Scheme::IntlLite => "intl-lite",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "coco-lite" => Ok(Scheme::CocoLite),
            "intl-lite" => Ok(Scheme::IntlLite),
            other => Err(Error::Config(format!("unknown tokenizer scheme `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizedCaption {
    pub caption_id: String,
    pub scheme: Scheme,
    /// Lowercase, non-empty, whitespace-free tokens in surface order.
    pub tokens: Vec<String>,
}

impl TokenizedCaption {
    pub fn new(caption_id: impl Into<String>, text: &str, scheme: Scheme) -> Self {
        TokenizedCaption {
            caption_id: caption_id.into(),
            scheme,
            tokens: tokenize(text, scheme),
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn joined(&self) -> String {
        self.tokens.join(" ")
    }
}

fn is_unicode_punctuation(c: char) -> bool {
    matches!(
        get_general_category(c),
        GeneralCategory::ConnectorPunctuation
            | GeneralCategory::DashPunctuation
            | GeneralCategory::OpenPunctuation
            | GeneralCategory::ClosePunctuation
            | GeneralCategory::InitialPunctuation
            | GeneralCategory::FinalPunctuation
            | GeneralCategory::OtherPunctuation
    )
}

/// Splits `text` into lowercase tokens under `scheme`.
pub fn tokenize(text: &str, scheme: Scheme) -> Vec<String> {
    let lower = text.to_lowercase();
    match scheme {
        Scheme::CocoLite => lower
            .split_whitespace()
            .map(|w| w.chars().filter(|c| !COCO_STRIP.contains(c)).collect::<String>())
            .filter(|w| !w.is_empty())
            .collect(),
        Scheme::IntlLite => {
            let mut tokens = Vec::new();
            for word in lower.split_whitespace() {
                let mut current = String::new();
                for c in word.chars() {
                    if is_unicode_punctuation(c) {
                        if !current.is_empty() {
                            tokens.push(std::mem::take(&mut current));
                        }
                        tokens.push(c.to_string());
                    } else {
                        current.push(c);
                    }
                }
                if !current.is_empty() {
                    tokens.push(current);
                }
            }
            tokens
        }
    }
}
