//! Command-line front end: config handling and the `score`, `perturb`,
//! `rank-eval`, `bow` and `fixtures` subcommands.

pub mod commands;
pub mod config;
pub mod registry;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use config::{Mode, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] capscore::Error),
}

impl CliError {
    /// 1 usage or config, 2 data integrity, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        use capscore::Error as E;
        match self {
            CliError::Usage(_) | CliError::Core(E::Config(_)) => 1,
            CliError::Core(E::Io { .. }) => 3,
            CliError::Core(_) => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "capscore", version, about = "Caption metrics and tier-based metric meta-evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score candidate captions with the configured metrics.
    Score(Opts),
    /// Generate degraded caption tiers.
    Perturb(Opts),
    /// Rank tiers by metric score and report Spearman's rho.
    RankEval(Opts),
    /// Build the replacement bag of words.
    Bow(Opts),
    /// Write the one-image worked-example corpus.
    Fixtures {
        #[arg(long, default_value = "fixtures")]
        out: PathBuf,
    },
}

/// Flags shared by the data commands; each overrides the config key of
/// the same name.
#[derive(Debug, Args, Default)]
pub struct Opts {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    #[arg(long)]
    pub candidates: Option<PathBuf>,
    /// Directory holding a tiers.json manifest from `perturb`.
    #[arg(long)]
    pub tiers: Option<PathBuf>,
    /// Comma-separated metric names.
    #[arg(long, value_delimiter = ',')]
    pub metrics: Option<Vec<String>>,
    /// coco-lite or intl-lite.
    #[arg(long)]
    pub scheme: Option<String>,
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    /// Perturbation fractions, comma-separated.
    #[arg(long = "fraction", value_delimiter = ',')]
    pub fractions: Option<Vec<f64>>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// fractional or random(<seed>).
    #[arg(long)]
    pub tie_mode: Option<String>,
    #[arg(long)]
    pub bins: Option<usize>,
    #[arg(long)]
    pub min_count: Option<usize>,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[arg(long)]
    pub external_scores: Vec<PathBuf>,
    #[arg(long)]
    pub synonyms: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Opts {
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($field:ident),*) => {
                $(if let Some(v) = &self.$field { cfg.$field = v.clone().into(); })*
            };
        }
        set!(annotations, candidates, tiers, embeddings, synonyms);
        if let Some(v) = &self.metrics {
            cfg.metrics = v.clone();
        }
        if let Some(v) = &self.scheme {
            cfg.scheme = v.parse()?;
        }
        if let Some(v) = self.mode {
            cfg.mode = v;
        }
        if let Some(v) = &self.fractions {
            cfg.fractions = v.clone();
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = &self.tie_mode {
            cfg.tie_mode = v.clone();
        }
        if let Some(v) = self.bins {
            cfg.bins = v;
        }
        if let Some(v) = self.min_count {
            cfg.min_count = v;
        }
        if let Some(v) = &self.out {
            cfg.out = v.clone();
        }
        if !self.external_scores.is_empty() {
            cfg.external_scores = self.external_scores.clone();
        }
        cfg.tie_mode()?;
        for p in [&cfg.annotations, &cfg.candidates, &cfg.tiers, &cfg.embeddings, &cfg.synonyms]
            .into_iter()
            .flatten()
            .chain(&cfg.external_scores)
        {
            if !p.exists() {
                return Err(CliError::Usage(format!("{} does not exist", p.display())));
            }
        }
        Ok(cfg)
    }
}

/// Runs one command and returns the text to print.
pub fn run(cli: &Cli) -> Result<String, CliError> {
    match &cli.command {
        Command::Score(o) => commands::score(&o.resolve()?),
        Command::Perturb(o) => commands::perturb(&o.resolve()?),
        Command::RankEval(o) => commands::rank_eval(&o.resolve()?),
        Command::Bow(o) => commands::bow(&o.resolve()?),
        Command::Fixtures { out } => Ok(commands::fixtures(out)?
            .iter()
            .map(|p| format!("wrote {}\n", p.display()))
            .collect()),
    }
}

/// Caps rayon's global pool at `CAPSCORE_THREADS` when set.
pub fn init_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var("CAPSCORE_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::Usage(format!("CAPSCORE_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(e.to_string()))
}
