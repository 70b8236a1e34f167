use std::fs;
use std::path::{Path, PathBuf};

use capscore::metrics::{BetaMode, MatchStage, MultiRef};
use capscore::perturb::{random_methodology, replacing_methodology, shuffling_methodology, TierSpec};
use capscore::{BleuConfig, CiderConfig, MeteorConfig, RougeConfig, Scheme, TieMode};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Replace,
    Shuffle,
    Random,
}

/// Everything a run depends on. Read from TOML, then overridden by flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub annotations: Option<PathBuf>,
    pub candidates: Option<PathBuf>,
    pub tiers: Option<PathBuf>,
    pub scheme: Scheme,
    pub metrics: Vec<String>,
    pub mode: Mode,
    /// Empty means the mode's own fractions.
    pub fractions: Vec<f64>,
    pub seed: u64,
    pub tie_mode: String,
    pub bins: usize,
    pub min_count: usize,
    pub out: PathBuf,
    pub embeddings: Option<PathBuf>,
    pub external_scores: Vec<PathBuf>,
    pub synonyms: Option<PathBuf>,
    pub bleu: BleuParams,
    pub meteor: MeteorParams,
    pub rouge: RougeParams,
    pub cider: CiderParams,
    pub clipscore: ClipParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            annotations: None,
            candidates: None,
            tiers: None,
            scheme: Scheme::CocoLite,
            metrics: Vec::new(),
            mode: Mode::Replace,
            fractions: Vec::new(),
            seed: 0,
            tie_mode: "fractional".into(),
            bins: capscore::rankeval::DEFAULT_BINS,
            min_count: 4,
            out: PathBuf::from("capscore-out"),
            embeddings: None,
            external_scores: Vec::new(),
            synonyms: None,
            bleu: BleuParams::default(),
            meteor: MeteorParams::default(),
            rouge: RougeParams::default(),
            cider: CiderParams::default(),
            clipscore: ClipParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BleuParams {
    pub max_order: usize,
    pub epsilon: f64,
}

impl Default for BleuParams {
    fn default() -> Self {
        let d = BleuConfig::default();
        BleuParams {
            max_order: d.max_order,
            epsilon: match d.smoothing {
                capscore::metrics::Smoothing::Epsilon(e) => e,
                capscore::metrics::Smoothing::Exp => unreachable!("default smoothing is epsilon"),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeteorParams {
    /// `default` or `coco`; explicit values below override the preset.
    pub preset: Option<String>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub stages: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RougeParams {
    /// A number, or `"ratio"` for `beta = P/R`.
    pub beta: toml::Value,
    /// `max` or `max-pr`.
    pub multi_ref: String,
}

impl Default for RougeParams {
    fn default() -> Self {
        RougeParams {
            beta: toml::Value::Float(1.2),
            multi_ref: "max".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CiderParams {
    pub max_order: usize,
    pub scale: f64,
    pub stem: bool,
}

impl Default for CiderParams {
    fn default() -> Self {
        CiderParams {
            max_order: 4,
            scale: 10.0,
            stem: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClipParams {
    pub w: f64,
}

impl Default for ClipParams {
    fn default() -> Self {
        ClipParams { w: 1.0 }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let raw = fs::read_to_string(path).map_err(|e| capscore::Error::io(path, e))?;
        toml::from_str(&raw).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn tie_mode(&self) -> Result<TieMode, CliError> {
        Ok(self.tie_mode.parse()?)
    }

    pub fn annotations(&self) -> Result<&Path, CliError> {
        self.annotations
            .as_deref()
            .ok_or_else(|| CliError::Usage("--annotations is required".into()))
    }

    pub fn bleu_config(&self) -> BleuConfig {
        BleuConfig {
            max_order: self.bleu.max_order,
            smoothing: capscore::metrics::Smoothing::Epsilon(self.bleu.epsilon),
            ..BleuConfig::default()
        }
    }

    pub fn meteor_config(&self) -> Result<MeteorConfig, CliError> {
        let m = &self.meteor;
        let mut cfg = match m.preset.as_deref() {
            None | Some("default") => MeteorConfig::default(),
            Some("coco") => MeteorConfig::coco_toolkit(),
            Some(other) => return Err(CliError::Usage(format!("unknown METEOR preset {other:?}"))),
        };
        if let Some(a) = m.alpha {
            cfg.alpha = a;
        }
        if let Some(b) = m.beta {
            cfg.beta = b;
        }
        if let Some(g) = m.gamma {
            cfg.gamma = g;
        }
        if let Some(stages) = &m.stages {
            cfg.stages = stages
                .iter()
                .map(|s| match s.as_str() {
                    "exact" => Ok(MatchStage::Exact),
                    "stem" => Ok(MatchStage::Stem),
                    "synonym" => Ok(MatchStage::Synonym),
                    other => Err(CliError::Usage(format!("unknown METEOR stage {other:?}"))),
                })
                .collect::<Result<_, _>>()?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn rouge_config(&self) -> Result<RougeConfig, CliError> {
        let beta_mode = match &self.rouge.beta {
            toml::Value::String(s) if s == "ratio" => BetaMode::Ratio,
            toml::Value::Float(b) => BetaMode::Fixed(*b),
            toml::Value::Integer(b) => BetaMode::Fixed(*b as f64),
            other => return Err(CliError::Usage(format!("rouge.beta must be a number or \"ratio\", got {other}"))),
        };
        let multi_ref = match self.rouge.multi_ref.as_str() {
            "max" => MultiRef::Max,
            "max-pr" => MultiRef::MaxPrecisionRecall,
            other => return Err(CliError::Usage(format!("unknown rouge.multi_ref {other:?}"))),
        };
        let cfg = RougeConfig { beta_mode, multi_ref };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn cider_config(&self) -> CiderConfig {
        CiderConfig {
            max_order: self.cider.max_order,
            scale: self.cider.scale,
            ..CiderConfig::default()
        }
    }

    pub fn tier_specs(&self) -> Result<Vec<TierSpec>, CliError> {
        if self.fractions.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(CliError::Usage(format!("fractions must lie in [0,1]: {:?}", self.fractions)));
        }
        let fr = |default: &[f64]| {
            if self.fractions.is_empty() {
                default.to_vec()
            } else {
                self.fractions.clone()
            }
        };
        Ok(match self.mode {
            Mode::Replace => replacing_methodology(&fr(&[0.25, 0.5])),
            Mode::Shuffle => shuffling_methodology(&fr(&[0.25, 0.5, 1.0])),
            Mode::Random => random_methodology(),
        })
    }
}
