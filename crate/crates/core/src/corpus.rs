//! Caption corpora: COCO annotation ingestion, candidate and external-score
//! files, and the 1 + 4 reference split used by the meta-evaluation.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of references kept per image after the split.
pub const SPLIT_REFERENCES: usize = 4;

/// One caption string attached to an image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Caption {
    pub id: String,
    pub image_id: u64,
    pub text: String,
}

impl Caption {
    /// Builds a caption, rejecting text that is empty after trimming.
    pub fn new(id: impl Into<String>, image_id: u64, text: impl Into<String>) -> Result<Self> {
        let id = id.into();
        let text = text.into();
        if text.trim().is_empty() {
            return Err(Error::Integrity(format!(
                "caption {id} (image {image_id}) has empty text"
            )));
        }
        Ok(Caption { id, image_id, text })
    }
}

/// Human references for one image, in annotation-file order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceSet {
    pub image_id: u64,
    pub refs: Vec<Caption>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalItem {
    pub image_id: u64,
    pub candidate: Caption,
    pub references: ReferenceSet,
}

/// Candidates paired with their references; the unit every metric consumes.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalCorpus {
    items: Vec<EvalItem>,
}

impl EvalCorpus {
    pub fn new(items: Vec<EvalItem>) -> Result<Self> {
        let mut seen = HashSet::new();
        for item in &items {
            if !seen.insert(item.image_id) {
                return Err(Error::Integrity(format!(
                    "image {} appears twice in corpus",
                    item.image_id
                )));
            }
            if item.references.refs.is_empty() {
                return Err(Error::Integrity(format!(
                    "image {} has no references",
                    item.image_id
                )));
            }
            if item.candidate.image_id != item.image_id || item.references.image_id != item.image_id
            {
                return Err(Error::Integrity(format!(
                    "item for image {} mixes image ids",
                    item.image_id
                )));
            }
        }
        Ok(EvalCorpus { items })
    }

    /// Pairs each candidate with the reference set of its image.
    pub fn from_candidates(candidates: &[Caption], refsets: &[ReferenceSet]) -> Result<Self> {
        let by_image: HashMap<u64, &ReferenceSet> =
            refsets.iter().map(|r| (r.image_id, r)).collect();
        let items = candidates
            .iter()
            .map(|c| {
                let refs = by_image.get(&c.image_id).ok_or_else(|| {
                    Error::Integrity(format!("no references for image {}", c.image_id))
                })?;
                Ok(EvalItem {
                    image_id: c.image_id,
                    candidate: c.clone(),
                    references: (*refs).clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(items)
    }

    pub fn items(&self) -> &[EvalItem] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// The held-out human caption per image plus the remaining 4 references.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitCorpus {
    pub human_candidates: Vec<Caption>,
    pub reference_sets: Vec<ReferenceSet>,
}

#[derive(Deserialize)]
struct CocoFile {
    images: Vec<CocoImage>,
    annotations: Vec<CocoAnnotation>,
}

#[derive(Deserialize)]
struct CocoImage {
    id: u64,
}

#[derive(Deserialize)]
struct CocoAnnotation {
    id: u64,
    image_id: u64,
    caption: String,
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Loads a COCO captions annotation file into one reference set per
/// annotated image, ordered as the `images` array lists them.
pub fn load_coco_annotations(path: impl AsRef<Path>) -> Result<Vec<ReferenceSet>> {
    let path = path.as_ref();
    let raw = read_to_string(path)?;
    parse_coco_annotations(&raw).map_err(|e| match e {
        Error::Parse {
            line,
            column,
            message,
            ..
        } => Error::Parse {
            path: path.to_path_buf(),
            line,
            column,
            message,
        },
        other => other,
    })
}

/// Parses COCO annotation JSON held in memory.
pub fn parse_coco_annotations(raw: &str) -> Result<Vec<ReferenceSet>> {
    let file: CocoFile = serde_json::from_str(raw).map_err(|e| Error::json("<memory>", e))?;

    let mut image_order = Vec::with_capacity(file.images.len());
    let mut known = HashSet::with_capacity(file.images.len());
    for img in &file.images {
        if known.insert(img.id) {
            image_order.push(img.id);
        }
    }

    let mut grouped: HashMap<u64, Vec<Caption>> = HashMap::new();
    let mut ann_ids = HashSet::with_capacity(file.annotations.len());
    for (pos, ann) in file.annotations.into_iter().enumerate() {
        if !known.contains(&ann.image_id) {
            return Err(Error::Integrity(format!(
                "annotation {} (record {pos}) references image {} with no image entry",
                ann.id, ann.image_id
            )));
        }
        if !ann_ids.insert(ann.id) {
            return Err(Error::Integrity(format!(
                "annotation id {} is duplicated (record {pos})",
                ann.id
            )));
        }
        let caption = Caption::new(ann.id.to_string(), ann.image_id, ann.caption)?;
        grouped.entry(ann.image_id).or_default().push(caption);
    }

    Ok(image_order
        .into_iter()
        .filter_map(|image_id| {
            grouped
                .remove(&image_id)
                .map(|refs| ReferenceSet { image_id, refs })
        })
        .collect())
}

/// Holds out the first caption of each image as the human candidate and
/// keeps captions 2..=5 as references. Captions past the fifth are dropped.
pub fn split_references(refsets: &[ReferenceSet]) -> Result<SplitCorpus> {
    let mut human_candidates = Vec::with_capacity(refsets.len());
    let mut reference_sets = Vec::with_capacity(refsets.len());
    for set in refsets {
        if set.refs.len() < SPLIT_REFERENCES + 1 {
            return Err(Error::Integrity(format!(
                "image {} has {} captions; the split needs at least {}",
                set.image_id,
                set.refs.len(),
                SPLIT_REFERENCES + 1
            )));
        }
        human_candidates.push(set.refs[0].clone());
        reference_sets.push(ReferenceSet {
            image_id: set.image_id,
            refs: set.refs[1..=SPLIT_REFERENCES].to_vec(),
        });
    }
    Ok(SplitCorpus {
        human_candidates,
        reference_sets,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct CandidateRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<String>,
    image_id: u64,
    caption: String,
}

/// Id given to a candidate record that carries none of its own.
pub fn synthesized_caption_id(prefix: &str, image_id: u64) -> String {
    format!("{prefix}/{image_id}")
}

/// Loads `[{"image_id": .., "caption": ..}]`. Records without an `id`
/// get `<file stem>/<image_id>`.
pub fn load_candidate_file(path: impl AsRef<Path>) -> Result<Vec<Caption>> {
    let path = path.as_ref();
    let raw = read_to_string(path)?;
    let records: Vec<CandidateRecord> =
        serde_json::from_str(&raw).map_err(|e| Error::json(path, e))?;
    let prefix = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "cand".to_string());

    let mut seen_images = HashSet::with_capacity(records.len());
    let mut seen_ids = HashSet::with_capacity(records.len());
    records
        .into_iter()
        .enumerate()
        .map(|(pos, rec)| {
            if !seen_images.insert(rec.image_id) {
                return Err(Error::Integrity(format!(
                    "{}: image {} appears twice (record {pos})",
                    path.display(),
                    rec.image_id
                )));
            }
            let id = rec
                .id
                .unwrap_or_else(|| synthesized_caption_id(&prefix, rec.image_id));
            if !seen_ids.insert(id.clone()) {
                return Err(Error::Integrity(format!(
                    "{}: caption id {id} appears twice",
                    path.display()
                )));
            }
            Caption::new(id, rec.image_id, rec.caption).map_err(|e| {
                Error::Integrity(format!("{}: record {pos}: {e}", path.display()))
            })
        })
        .collect()
}

/// Writes captions in the candidate-file schema, keeping explicit ids.
pub fn write_candidate_file(path: impl AsRef<Path>, captions: &[Caption]) -> Result<()> {
    let path = path.as_ref();
    let records: Vec<CandidateRecord> = captions
        .iter()
        .map(|c| CandidateRecord {
            id: Some(c.id.clone()),
            image_id: c.image_id,
            caption: c.text.clone(),
        })
        .collect();
    let mut body = serde_json::to_string_pretty(&records).expect("candidate records serialize");
    body.push('\n');
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

#[derive(Deserialize)]
struct ExternalScoresFile {
    metric: String,
    scores: BTreeMap<String, serde_json::Value>,
}

/// Per-caption scores computed by an outside tool (e.g. SPICE).
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalScores {
    pub metric: String,
    pub scores: HashMap<String, f64>,
}

/// Loads `{"metric": .., "scores": {"<caption_id>": number}}` and checks
/// that every expected id is covered by a finite score.
pub fn load_external_scores(
    path: impl AsRef<Path>,
    expected_ids: &[String],
) -> Result<ExternalScores> {
    let path = path.as_ref();
    let raw = read_to_string(path)?;
    let all = parse_external_scores(&raw).map_err(|e| match e {
        Error::Parse {
            line,
            column,
            message,
            ..
        } => Error::Parse {
            path: path.to_path_buf(),
            line,
            column,
            message,
        },
        other => other,
    })?;
    let mut scores = HashMap::with_capacity(expected_ids.len());
    for id in expected_ids {
        match all.scores.get(id) {
            Some(v) => {
                scores.insert(id.clone(), *v);
            }
            None => {
                return Err(Error::Integrity(format!(
                    "{}: no {} score for caption {id}",
                    path.display(),
                    all.metric
                )))
            }
        }
    }
    Ok(ExternalScores {
        metric: all.metric,
        scores,
    })
}

fn parse_external_scores(raw: &str) -> Result<ExternalScores> {
    // serde_json keeps the last of duplicate keys, so duplicates are found
    // with a second streaming pass over the object keys.
    check_duplicate_score_keys(raw)?;
    let file: ExternalScoresFile =
        serde_json::from_str(raw).map_err(|e| Error::json("<memory>", e))?;
    let mut scores = HashMap::with_capacity(file.scores.len());
    for (id, value) in file.scores {
        let v = value.as_f64().filter(|v| v.is_finite()).ok_or_else(|| {
            Error::Integrity(format!("score for caption {id} is not a finite number"))
        })?;
        scores.insert(id, v);
    }
    Ok(ExternalScores {
        metric: file.metric,
        scores,
    })
}

fn check_duplicate_score_keys(raw: &str) -> Result<()> {
    use serde::de::{MapAccess, Visitor};
    use std::fmt;

    struct Keys;
    impl<'de> Visitor<'de> for Keys {
        type Value = Option<String>;
        fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
            f.write_str("a scores object")
        }
        fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<Self::Value, A::Error> {
            let mut seen = HashSet::new();
            let mut dup = None;
            while let Some(k) = map.next_key::<String>()? {
                map.next_value::<serde::de::IgnoredAny>()?;
                if dup.is_none() && !seen.insert(k.clone()) {
                    dup = Some(k);
                }
            }
            Ok(dup)
        }
    }
    struct Scores(Option<String>);
    impl<'de> Deserialize<'de> for Scores {
        fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
            d.deserialize_map(Keys).map(Scores)
        }
    }
    #[derive(Deserialize)]
    struct Outer {
        scores: Scores,
    }

    let outer: Outer = serde_json::from_str(raw).map_err(|e| Error::json("<memory>", e))?;
    match outer.scores.0 {
        Some(id) => Err(Error::Integrity(format!(
            "caption {id} has more than one external score"
        ))),
        None => Ok(()),
    }
}
