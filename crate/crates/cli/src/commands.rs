use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use capscore::corpus::{load_candidate_file, load_coco_annotations, split_references, write_candidate_file};
use capscore::perturb::{build_bag, generate_tiers, PerturbationKind, TierKind};
use capscore::rankeval::{export_rank_result, run_model_vs_human, run_tier_experiment, Tier};
use capscore::scorer::score_corpus;
use capscore::{Caption, EvalCorpus, Error, ReferenceSet};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::registry::{build_scorers, file_stem};
use crate::CliError;

pub const FIXTURE_IMAGE_ID: u64 = 544;
pub const FIXTURE_CANDIDATE: &str = "A baseball player is swinging his bat to hit the ball.";
pub const FIXTURE_REFERENCES: [&str; 5] = [
    "A man swinging a bat at a baseball on a field.",
    "A man that has a baseball bat standing in the dirt.",
    "The stands are packed as a baseball player in a gray uniform holds a bat as a catcher holds out his mitt.",
    "A baseball player holding a bat over the top of a base.",
    "A baseball game is going on for the crowd.",
];

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    Ok(())
}

fn write(path: &Path, body: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, body).map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut body = serde_json::to_string_pretty(value).expect("output serializes");
    body.push('\n');
    write(path, body)
}

fn prepare_out(cfg: &RunConfig) -> Result<(), CliError> {
    create_dir(&cfg.out)?;
    write(&cfg.out.join("config.toml"), cfg.to_toml())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Scores candidates (or, without a candidate file, the first caption of
/// each image against the other four) with every configured metric.
pub fn score(cfg: &RunConfig) -> Result<String, CliError> {
    let refsets = load_coco_annotations(cfg.annotations()?)?;
    let corpus = match &cfg.candidates {
        Some(path) => EvalCorpus::from_candidates(&load_candidate_file(path)?, &refsets)?,
        None => {
            let split = split_references(&refsets)?;
            EvalCorpus::from_candidates(&split.human_candidates, &split.reference_sets)?
        }
    };
    if corpus.is_empty() {
        return Err(Error::InvalidInput("no candidates to score".into()).into());
    }
    let idf: Vec<ReferenceSet> = corpus.items().iter().map(|i| i.references.clone()).collect();
    let ids: Vec<String> = corpus.items().iter().map(|i| i.candidate.id.clone()).collect();
    let scorers = build_scorers(cfg, &idf, &ids)?;
    prepare_out(cfg)?;

    let mut reports = Vec::new();
    for s in &scorers {
        let report = score_corpus(s.as_ref(), &corpus)?;
        write_json(&cfg.out.join(format!("{}.report.json", file_stem(&report.metric_name))), &report)?;
        reports.push(report);
    }

    let mut csv = String::from("caption_id,image_id");
    for r in &reports {
        csv.push(',');
        csv.push_str(&csv_field(&r.metric_name));
    }
    csv.push('\n');
    for item in corpus.items() {
        csv.push_str(&format!("{},{}", csv_field(&item.candidate.id), item.candidate.image_id));
        for r in &reports {
            csv.push_str(&format!(",{}", r.per_caption[&item.candidate.id]));
        }
        csv.push('\n');
    }
    write(&cfg.out.join("scores.csv"), csv)?;

    let label = cfg
        .candidates
        .as_deref()
        .and_then(Path::file_stem)
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "human".into());
    let mut header = String::from("candidates");
    let mut row = csv_field(&label);
    let mut summary = Vec::new();
    let mut table = String::new();
    for r in &reports {
        header.push(',');
        header.push_str(&csv_field(&r.metric_name));
        row.push_str(&format!(",{}", r.aggregate));
        summary.push(SummaryRow {
            metric: r.metric_name.clone(),
            signature: r.signature.clone(),
            value: r.aggregate,
        });
        table.push_str(&format!("{:<14} {:>10.6}  {}\n", r.metric_name, r.aggregate, r.signature));
    }
    write(&cfg.out.join("summary.csv"), format!("{header}\n{row}\n"))?;
    write_json(&cfg.out.join("summary.json"), &summary)?;
    Ok(table)
}

#[derive(Debug, Serialize)]
struct SummaryRow {
    metric: String,
    signature: String,
    value: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub expected_rank: usize,
    pub file: String,
}

fn build_tiers(cfg: &RunConfig, human: &[Caption], references: &[ReferenceSet]) -> Result<Vec<(Tier, capscore::perturb::TierProvenance)>, CliError> {
    let specs = cfg.tier_specs()?;
    let needs_bag = specs
        .iter()
        .any(|s| matches!(s.kind, TierKind::Perturbed(PerturbationKind::Replace, _)));
    let bag = if needs_bag {
        Some(build_bag(references, cfg.scheme, cfg.min_count)?)
    } else {
        None
    };
    Ok(generate_tiers(human, bag.as_ref(), &specs, cfg.scheme, cfg.seed)?)
}

/// Writes each tier as a candidate file plus a provenance sidecar, and a
/// `tiers.json` manifest listing them worst first.
pub fn perturb(cfg: &RunConfig) -> Result<String, CliError> {
    let split = split_references(&load_coco_annotations(cfg.annotations()?)?)?;
    let tiers = build_tiers(cfg, &split.human_candidates, &split.reference_sets)?;
    prepare_out(cfg)?;
    let mut manifest = Vec::new();
    let mut table = String::new();
    for (tier, provenance) in &tiers {
        let file = format!("{}.json", tier.name);
        write_candidate_file(cfg.out.join(&file), &tier.captions)?;
        write_json(&cfg.out.join(format!("{}.provenance.json", tier.name)), provenance)?;
        table.push_str(&format!("{:<12} rank {}  {} captions\n", tier.name, tier.expected_rank, tier.captions.len()));
        manifest.push(ManifestEntry {
            name: tier.name.clone(),
            expected_rank: tier.expected_rank,
            file,
        });
    }
    write_json(&cfg.out.join("tiers.json"), &manifest)?;
    Ok(table)
}

pub fn load_tier_dir(dir: &Path) -> Result<Vec<Tier>, CliError> {
    let manifest_path = dir.join("tiers.json");
    let raw = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let entries: Vec<ManifestEntry> = serde_json::from_str(&raw).map_err(|e| Error::json(&manifest_path, e))?;
    entries
        .into_iter()
        .map(|e| {
            Ok(Tier {
                captions: load_candidate_file(dir.join(&e.file))?,
                name: e.name,
                expected_rank: e.expected_rank,
            })
        })
        .collect()
}

/// Runs the tier experiment for every metric. Tiers come from `--tiers`,
/// from a model candidate file against the human captions, or are
/// generated in memory from `--mode`.
pub fn rank_eval(cfg: &RunConfig) -> Result<String, CliError> {
    let split = split_references(&load_coco_annotations(cfg.annotations()?)?)?;
    let refs = &split.reference_sets;
    let tie_mode = cfg.tie_mode()?;

    enum Source {
        Tiers(Vec<Tier>),
        ModelVsHuman(Vec<Caption>),
    }
    let source = match (&cfg.tiers, &cfg.candidates) {
        (Some(_), Some(_)) => {
            return Err(CliError::Usage("give either --tiers or --candidates, not both".into()))
        }
        (Some(dir), None) => Source::Tiers(load_tier_dir(dir)?),
        (None, Some(path)) => Source::ModelVsHuman(load_candidate_file(path)?),
        (None, None) => Source::Tiers(
            build_tiers(cfg, &split.human_candidates, refs)?
                .into_iter()
                .map(|(t, _)| t)
                .collect(),
        ),
    };
    let ids: Vec<String> = match &source {
        Source::Tiers(tiers) => tiers.iter().flat_map(|t| t.captions.iter().map(|c| c.id.clone())).collect(),
        Source::ModelVsHuman(model) => model
            .iter()
            .chain(&split.human_candidates)
            .map(|c| c.id.clone())
            .collect(),
    };
    let scorers = build_scorers(cfg, refs, &ids)?;
    prepare_out(cfg)?;

    let mut summary = Vec::new();
    let mut csv = String::from("metric,rho,signature\n");
    let mut table = String::new();
    for s in &scorers {
        let result = match &source {
            Source::Tiers(tiers) => run_tier_experiment(tiers, refs, s.as_ref(), cfg.bins, tie_mode)?,
            Source::ModelVsHuman(model) => {
                run_model_vs_human(model, &split.human_candidates, refs, s.as_ref(), cfg.bins, tie_mode)?
            }
        };
        let stem = file_stem(s.name());
        export_rank_result(
            &result,
            &cfg.out.join(format!("{stem}.rank.json")),
            &cfg.out.join(format!("{stem}.rank.csv")),
        )?;
        csv.push_str(&format!("{},{},{}\n", csv_field(s.name()), result.rho, csv_field(&result.metric_signature)));
        table.push_str(&format!("{:<14} {:>9.6}\n", s.name(), result.rho));
        summary.push(SummaryRow {
            metric: s.name().to_string(),
            signature: result.metric_signature,
            value: result.rho,
        });
    }
    write(&cfg.out.join("summary.csv"), csv)?;
    write_json(&cfg.out.join("summary.json"), &summary)?;
    Ok(table)
}

/// Writes the bag of words built from the four-reference side.
pub fn bow(cfg: &RunConfig) -> Result<String, CliError> {
    let split = split_references(&load_coco_annotations(cfg.annotations()?)?)?;
    let bag = build_bag(&split.reference_sets, cfg.scheme, cfg.min_count)?;
    prepare_out(cfg)?;
    let mut body = bag.words.join("\n");
    body.push('\n');
    write(&cfg.out.join("bag_of_words.txt"), body)?;
    let mut info = BTreeMap::new();
    info.insert("signature", serde_json::Value::from(bag.signature()));
    info.insert("size", serde_json::Value::from(bag.len()));
    write_json(&cfg.out.join("bag_of_words.json"), &info)?;
    Ok(format!("{} words  {}\n", bag.len(), bag.signature()))
}

/// The one-image worked example: COCO-style annotations holding the five
/// references and a candidate file holding the candidate.
pub fn fixtures(out: &Path) -> Result<Vec<PathBuf>, CliError> {
    create_dir(out)?;
    let annotations = serde_json::json!({
        "images": [{ "id": FIXTURE_IMAGE_ID }],
        "annotations": FIXTURE_REFERENCES
            .iter()
            .enumerate()
            .map(|(i, c)| serde_json::json!({ "id": i + 1, "image_id": FIXTURE_IMAGE_ID, "caption": c }))
            .collect::<Vec<_>>(),
    });
    let ann_path = out.join("annotations.json");
    write_json(&ann_path, &annotations)?;
    let cand_path = out.join("candidates.json");
    let candidate = Caption::new(format!("candidate/{FIXTURE_IMAGE_ID}"), FIXTURE_IMAGE_ID, FIXTURE_CANDIDATE)?;
    write_candidate_file(&cand_path, &[candidate])?;
    Ok(vec![ann_path, cand_path])
}

