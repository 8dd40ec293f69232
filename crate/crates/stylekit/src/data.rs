//! Domain types and JSONL serialization shared by every pipeline stage.
//!
//! JSONL (UTF-8, one object per line) is the canonical interchange format
//! for pairs, triplets, embeddings, task instances, and reports. Unknown
//! fields are rejected in strict mode and preserved in lenient mode.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::registry::FeatureRegistry;
use crate::rng::seeded_rng;

/// One of the named style attributes with positive/negative prompt labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StyleFeature {
    pub id: String,
    pub name: String,
    pub category: String,
    pub positive_prompt: String,
    pub negative_prompt: String,
    pub definition: String,
    /// False when negatives only reduce the feature's frequency rather than
    /// removing it entirely (e.g. articles).
    pub fully_removable: bool,
    /// Extra numbered conditions appended to the generation prompt.
    /// Placeholder wording; replace per feature when calibrating generation.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub special_conditions: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// A positive/negative near-paraphrase sentence pair for one feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParallelPair {
    pub pair_id: String,
    pub feature_id: String,
    pub positive_text: String,
    pub negative_text: String,
    #[serde(default)]
    pub attributes: BTreeMap<String, String>,
    pub split: Split,
    #[serde(flatten)]
    pub extra: BTreeMap<String, serde_json::Value>,
}

impl ParallelPair {
    pub fn text(&self, side: Side) -> &str {
        match side {
            Side::Positive => &self.positive_text,
            Side::Negative => &self.negative_text,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Positive,
    Negative,
}

impl Side {
    pub fn flip(self) -> Side {
        match self {
            Side::Positive => Side::Negative,
            Side::Negative => Side::Positive,
        }
    }
}

/// Addresses one sentence within a pair set.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SideRef {
    pub pair_id: String,
    pub side: Side,
}

impl SideRef {
    pub fn new(pair_id: impl Into<String>, side: Side) -> Self {
        SideRef {
            pair_id: pair_id.into(),
            side,
        }
    }

    /// Stable sentence key used by embedding files: `<pair_id>#positive`.
    pub fn key(&self) -> String {
        let side = match self.side {
            Side::Positive => "positive",
            Side::Negative => "negative",
        };
        format!("{}#{}", self.pair_id, side)
    }
}

/// The unit of contrastive training.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Triplet {
    pub anchor: SideRef,
    pub positive: SideRef,
    pub negative: SideRef,
    pub feature_id: String,
    pub negative_paraphrases_anchor: bool,
}

/// A dense sentence or document vector keyed by id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub key: String,
    pub values: Vec<f64>,
}

impl Embedding {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// In-memory embedding lookup with a uniform dimension.
#[derive(Debug, Clone, Default)]
pub struct EmbeddingSet {
    map: HashMap<String, Vec<f64>>,
    dim: Option<usize>,
}

impl EmbeddingSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, key: impl Into<String>, values: Vec<f64>) -> Result<()> {
        let key = key.into();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("embedding `{key}`"),
            });
        }
        match self.dim {
            None => self.dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(Error::DimMismatch {
                    expected: d,
                    got: values.len(),
                })
            }
            _ => {}
        }
        self.map.insert(key, values);
        Ok(())
    }

    pub fn get(&self, key: &str) -> Result<&[f64]> {
        self.map
            .get(key)
            .map(|v| v.as_slice())
            .ok_or_else(|| Error::MissingEmbedding(key.to_string()))
    }

    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn keys(&self) -> impl Iterator<Item = &String> {
        self.map.keys()
    }

    pub fn from_records(records: Vec<Embedding>) -> Result<Self> {
        let mut set = Self::new();
        for rec in records {
            set.insert(rec.key, rec.values)?;
        }
        Ok(set)
    }
}

// ---------------------------------------------------------------------------
// JSONL io
// ---------------------------------------------------------------------------

/// Reads one JSON object per line, reporting the 1-based line number on failure.
pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let reader = BufReader::new(file);
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: T = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        out.push(record);
    }
    Ok(out)
}

/// Writes records as canonical JSONL, atomically (temp file + rename).
pub fn write_jsonl<T: Serialize>(path: impl AsRef<Path>, records: &[T]) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    for rec in records {
        serde_json::to_writer(&mut buf, rec)
            .map_err(|e| Error::Other(format!("serialize: {e}")))?;
        buf.push(b'\n');
    }
    write_atomic(path, &buf)
}

/// Writes bytes to `path` via a sibling temp file and rename, so a killed run
/// never leaves a truncated file at the final path.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let tmp = dir.join(format!(
        ".{}.tmp{}",
        path.file_name().map(|s| s.to_string_lossy()).unwrap_or_default(),
        std::process::id()
    ));
    {
        let mut f =
            std::fs::File::create(&tmp).map_err(|e| Error::io(tmp.display().to_string(), e))?;
        f.write_all(bytes)
            .map_err(|e| Error::io(tmp.display().to_string(), e))?;
        f.sync_all()
            .map_err(|e| Error::io(tmp.display().to_string(), e))?;
    }
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Loads and validates parallel pairs against the registry.
///
/// Input ordering is preserved. In strict mode any unknown field is an error;
/// in lenient mode unknown fields survive a round-trip via `extra`.
pub fn load_pairs(
    path: impl AsRef<Path>,
    registry: &FeatureRegistry,
    strict: bool,
) -> Result<Vec<ParallelPair>> {
    let path = path.as_ref();
    let pairs: Vec<ParallelPair> = read_jsonl(path)?;
    let mut seen: HashSet<&str> = HashSet::new();
    for (idx, pair) in pairs.iter().enumerate() {
        let line = idx + 1;
        if strict && !pair.extra.is_empty() {
            let keys: Vec<&str> = pair.extra.keys().map(|k| k.as_str()).collect();
            return Err(Error::Parse {
                path: path.display().to_string(),
                line,
                message: format!("unknown fields in strict mode: {}", keys.join(", ")),
            });
        }
        if registry.get(&pair.feature_id).is_none() {
            return Err(Error::UnknownFeature {
                feature_id: pair.feature_id.clone(),
                path: path.display().to_string(),
                line,
            });
        }
        if !seen.insert(&pair.pair_id) {
            return Err(Error::DuplicatePair {
                pair_id: pair.pair_id.clone(),
                path: path.display().to_string(),
                line,
            });
        }
        if pair.positive_text.is_empty() || pair.negative_text.is_empty() {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line,
                message: "pair sides must be nonempty".into(),
            });
        }
        if pair.positive_text == pair.negative_text {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line,
                message: "positive_text and negative_text must be distinct".into(),
            });
        }
    }
    Ok(pairs)
}

/// Index from pair_id to pair, for resolving SideRefs.
pub fn pair_index(pairs: &[ParallelPair]) -> HashMap<&str, &ParallelPair> {
    pairs.iter().map(|p| (p.pair_id.as_str(), p)).collect()
}

// ---------------------------------------------------------------------------
// Stratified split
// ---------------------------------------------------------------------------

fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor() as usize
}

/// Splits pairs into train/test stratified by feature.
///
/// Per feature, round-half-up of `train_fraction * count` pairs go to train.
/// When rounding would empty one side the lexicographically last pair_id is
/// moved across. Deterministic under a fixed seed; the returned lists keep
/// the input ordering.
pub fn split_pairs(
    pairs: &[ParallelPair],
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<ParallelPair>, Vec<ParallelPair>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "train_fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    let mut by_feature: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for pair in pairs {
        by_feature
            .entry(pair.feature_id.as_str())
            .or_default()
            .push(pair.pair_id.as_str());
    }
    let mut train_ids: HashSet<String> = HashSet::new();
    for (feature_id, mut ids) in by_feature {
        if ids.len() < 2 {
            return Err(Error::TooFewPairs {
                feature_id: feature_id.to_string(),
                count: ids.len(),
                need: 2,
            });
        }
        ids.sort_unstable();
        let n = ids.len();
        let mut take = round_half_up(train_fraction * n as f64);
        // Off-by-one repair: an empty side moves the lexicographically last id.
        take = take.clamp(1, n - 1);
        let mut rng = seeded_rng(seed, &["split", feature_id]);
        ids.shuffle(&mut rng);
        for id in ids.into_iter().take(take) {
            train_ids.insert(id.to_string());
        }
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for pair in pairs {
        let mut tagged = pair.clone();
        if train_ids.contains(&pair.pair_id) {
            tagged.split = Split::Train;
            train.push(tagged);
        } else {
            tagged.split = Split::Test;
            test.push(tagged);
        }
    }
    Ok((train, test))
}

/// Builds a synthetic pair for tests and fixtures.
pub fn synthetic_pair(pair_id: &str, feature_id: &str, split: Split) -> ParallelPair {
    ParallelPair {
        pair_id: pair_id.to_string(),
        feature_id: feature_id.to_string(),
        positive_text: format!("positive text of {pair_id}"),
        negative_text: format!("negative text of {pair_id}"),
        attributes: BTreeMap::new(),
        split,
        extra: BTreeMap::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use super::synthetic_pair as mk_pair;
    use crate::registry::FeatureRegistry;

    fn registry() -> FeatureRegistry {
        FeatureRegistry::builtin()
    }

    #[test]
    fn load_single_valid_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pairs.jsonl");
        let pair = mk_pair("p1", "active-voice", Split::Train);
        write_jsonl(&path, &[pair.clone()]).unwrap();
        let loaded = load_pairs(&path, &registry(), true).unwrap();
        assert_eq!(loaded, vec![pair]);
    }

    #[test]
    fn load_unknown_feature_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pairs.jsonl");
        let good = mk_pair("p1", "active-voice", Split::Train);
        let bad = mk_pair("p2", "nonexistent", Split::Train);
        write_jsonl(&path, &[good, bad]).unwrap();
        let err = load_pairs(&path, &registry(), true).unwrap_err();
        match err {
            Error::UnknownFeature { feature_id, line, .. } => {
                assert_eq!(feature_id, "nonexistent");
                assert_eq!(line, 2);
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn load_duplicate_pair_id() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pairs.jsonl");
        let a = mk_pair("p1", "active-voice", Split::Train);
        let b = mk_pair("p1", "formal-tone", Split::Train);
        write_jsonl(&path, &[a, b]).unwrap();
        assert!(matches!(
            load_pairs(&path, &registry(), true),
            Err(Error::DuplicatePair { .. })
        ));
    }

    #[test]
    fn strict_rejects_unknown_fields_lenient_preserves() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pairs.jsonl");
        let line = r#"{"pair_id":"p1","feature_id":"active-voice","positive_text":"a","negative_text":"b","split":"train","mystery":42}"#;
        std::fs::write(&path, format!("{line}\n")).unwrap();
        assert!(load_pairs(&path, &registry(), true).is_err());
        let lenient = load_pairs(&path, &registry(), false).unwrap();
        assert_eq!(lenient[0].extra["mystery"], serde_json::json!(42));
    }

    #[test]
    fn serialization_round_trip_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pairs.jsonl");
        let pairs: Vec<ParallelPair> = (0..5)
            .map(|i| mk_pair(&format!("p{i}"), "active-voice", Split::Train))
            .collect();
        write_jsonl(&path, &pairs).unwrap();
        let bytes1 = std::fs::read(&path).unwrap();
        let loaded = load_pairs(&path, &registry(), true).unwrap();
        write_jsonl(&path, &loaded).unwrap();
        let bytes2 = std::fs::read(&path).unwrap();
        assert_eq!(bytes1, bytes2);
    }

    #[test]
    fn split_90_10_per_feature() {
        let registry = registry();
        let mut pairs = Vec::new();
        for feature in registry.features().iter().take(4) {
            for i in 0..100 {
                pairs.push(mk_pair(&format!("{}-{i:03}", feature.id), &feature.id, Split::Train));
            }
        }
        let (train, test) = split_pairs(&pairs, 0.9, 7).unwrap();
        assert_eq!(train.len(), 360);
        assert_eq!(test.len(), 40);
        for feature in registry.features().iter().take(4) {
            let t = train.iter().filter(|p| p.feature_id == feature.id).count();
            assert_eq!(t, 90);
        }
    }

    #[test]
    fn split_half_of_two() {
        let pairs = vec![
            mk_pair("a", "active-voice", Split::Train),
            mk_pair("b", "active-voice", Split::Train),
        ];
        let (train, test) = split_pairs(&pairs, 0.5, 0).unwrap();
        assert_eq!((train.len(), test.len()), (1, 1));
    }

    #[test]
    fn split_is_deterministic_and_a_partition() {
        let mut pairs = Vec::new();
        for i in 0..37 {
            pairs.push(mk_pair(&format!("p{i:02}"), "active-voice", Split::Train));
        }
        let (tr1, te1) = split_pairs(&pairs, 0.7, 42).unwrap();
        let (tr2, te2) = split_pairs(&pairs, 0.7, 42).unwrap();
        assert_eq!(tr1, tr2);
        assert_eq!(te1, te2);
        let mut all: Vec<&str> = tr1.iter().chain(te1.iter()).map(|p| p.pair_id.as_str()).collect();
        all.sort_unstable();
        let mut orig: Vec<&str> = pairs.iter().map(|p| p.pair_id.as_str()).collect();
        orig.sort_unstable();
        assert_eq!(all, orig);
    }

    #[test]
    fn split_rejects_single_pair_feature() {
        let pairs = vec![mk_pair("only", "active-voice", Split::Train)];
        assert!(matches!(
            split_pairs(&pairs, 0.9, 0),
            Err(Error::TooFewPairs { .. })
        ));
    }
}
