use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::text::Scheme;

/// Crate version recorded in every signature.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// `NAME|tok:<scheme>|<key>:<value>|...|v:<semver>`, keys sorted after `tok`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Signature {
    name: String,
    tok: String,
    params: BTreeMap<String, String>,
}

impl Signature {
    pub fn new(name: impl Into<String>, scheme: Option<Scheme>) -> Self {
        Signature {
            name: name.into(),
            tok: scheme.map_or_else(|| "none".to_string(), |s| s.name().to_string()),
            params: BTreeMap::new(),
        }
    }

    pub fn param(mut self, key: &str, value: impl ToString) -> Self {
        self.params.insert(key.to_string(), value.to_string());
        self
    }

    pub fn num(self, key: &str, value: f64) -> Self {
        self.param(key, format_param(value))
    }
}

impl fmt::Display for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}|tok:{}", self.name, self.tok)?;
        for (k, v) in &self.params {
            write!(f, "|{k}:{v}")?;
        }
        write!(f, "|v:{VERSION}")
    }
}

/// Shortest decimal form for ordinary magnitudes, exponent form for tiny ones.
pub fn format_param(value: f64) -> String {
    if value != 0.0 && value.abs() < 1e-4 {
        format!("{value:e}")
    } else {
        format!("{value}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric_name: String,
    pub signature: String,
    pub aggregate: f64,
    pub per_caption: BTreeMap<String, f64>,
}
