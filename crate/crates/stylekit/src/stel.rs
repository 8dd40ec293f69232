//! STEL and STEL-or-Content task construction and cosine scoring.
//!
//! STEL: two anchors (A1, A2) and two test sentences (S1, S2); the parallel
//! alignment wins when cos(A1,S1) + cos(A2,S2) > cos(A1,S2) + cos(A2,S1).
//! STEL-or-Content: one anchor; the correct candidate shares the anchor's
//! style with different content, while the distractor is the anchor's own
//! opposite-style paraphrase. Exact ties score 0.5.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{EmbeddingSet, ParallelPair, Side, SideRef};
use crate::error::{Error, Result};
use crate::par::map_ordered;
use crate::rng::seeded_rng;
use crate::vecmath::cosine;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StelMode {
    Stel,
    StelOrContent,
}

impl std::str::FromStr for StelMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stel" => Ok(StelMode::Stel),
            "stel_or_content" => Ok(StelMode::StelOrContent),
            other => Err(Error::InvalidConfig(format!("unknown stel mode `{other}`"))),
        }
    }
}

/// Ground truth for an instance: STEL instances are built parallel-aligned;
/// STEL-or-Content instances name the style-matching candidate index (0 or 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum Correct {
    Parallel,
    Candidate(u8),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StelInstance {
    pub instance_id: String,
    pub mode: StelMode,
    pub feature_id: String,
    /// 2 anchors for stel, 1 for stel_or_content.
    pub anchors: Vec<String>,
    /// Exactly 2 candidate sentence keys (S1, S2).
    pub candidates: [String; 2],
    pub correct: Correct,
}

impl StelInstance {
    pub fn validate(&self) -> Result<()> {
        let want_anchors = match self.mode {
            StelMode::Stel => 2,
            StelMode::StelOrContent => 1,
        };
        if self.anchors.len() != want_anchors {
            return Err(Error::InvalidRecord(format!(
                "instance {}: expected {want_anchors} anchors, got {}",
                self.instance_id,
                self.anchors.len()
            )));
        }
        if self.candidates[0] == self.candidates[1] {
            return Err(Error::InvalidRecord(format!(
                "instance {}: candidates must be distinct",
                self.instance_id
            )));
        }
        match (self.mode, &self.correct) {
            (StelMode::Stel, Correct::Parallel) => Ok(()),
            (StelMode::StelOrContent, Correct::Candidate(i)) if *i < 2 => Ok(()),
            _ => Err(Error::InvalidRecord(format!(
                "instance {}: correct label malformed for mode",
                self.instance_id
            ))),
        }
    }
}

/// Builds task instances from the test pairs of each feature.
///
/// Every ordered pair (i, j), i != j, within a feature yields a base
/// instance plus its side-swapped mirror. When a per-feature cap is set the
/// instance list is shuffled (seeded) before truncation.
pub fn build_stel_tasks(
    pairs: &[ParallelPair],
    mode: StelMode,
    seed: u64,
    per_feature_cap: Option<usize>,
) -> Result<Vec<StelInstance>> {
    let mut by_feature: BTreeMap<&str, Vec<&ParallelPair>> = BTreeMap::new();
    for pair in pairs {
        by_feature.entry(pair.feature_id.as_str()).or_default().push(pair);
    }
    let mut out = Vec::new();
    for (feature_id, mut group) in by_feature {
        if group.len() < 2 {
            return Err(Error::TooFewPairs {
                feature_id: feature_id.to_string(),
                count: group.len(),
                need: 2,
            });
        }
        group.sort_by(|a, b| a.pair_id.cmp(&b.pair_id));
        let mut instances = Vec::new();
        for pi in &group {
            for pj in &group {
                if pi.pair_id == pj.pair_id {
                    continue;
                }
                for anchor_side in [Side::Positive, Side::Negative] {
                    let swap = anchor_side == Side::Negative;
                    let instance_id = format!(
                        "{feature_id}/{}/{}/{}",
                        pi.pair_id,
                        pj.pair_id,
                        if swap { "swapped" } else { "base" }
                    );
                    let key = |pair: &ParallelPair, side: Side| SideRef::new(&pair.pair_id, side).key();
                    let instance = match mode {
                        StelMode::Stel => StelInstance {
                            instance_id,
                            mode,
                            feature_id: feature_id.to_string(),
                            anchors: vec![
                                key(pi, anchor_side),
                                key(pi, anchor_side.flip()),
                            ],
                            candidates: [key(pj, anchor_side), key(pj, anchor_side.flip())],
                            correct: Correct::Parallel,
                        },
                        StelMode::StelOrContent => StelInstance {
                            instance_id,
                            mode,
                            feature_id: feature_id.to_string(),
                            anchors: vec![key(pi, anchor_side)],
                            // Candidate 0 shares the anchor's style (different
                            // content); candidate 1 paraphrases the anchor in
                            // the opposite style.
                            candidates: [key(pj, anchor_side), key(pi, anchor_side.flip())],
                            correct: Correct::Candidate(0),
                        },
                    };
                    instances.push(instance);
                }
            }
        }
        if let Some(cap) = per_feature_cap {
            if instances.len() > cap {
                let mut rng = seeded_rng(seed, &["stel-cap", feature_id]);
                instances.shuffle(&mut rng);
                instances.truncate(cap);
            }
        }
        out.extend(instances);
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StelReport {
    pub overall_accuracy: f64,
    pub per_feature_accuracy: BTreeMap<String, f64>,
    pub n: usize,
}

/// Scores one instance: 1 correct, 0 wrong, 0.5 tie.
fn score_instance(instance: &StelInstance, embeddings: &EmbeddingSet) -> Result<f64> {
    instance.validate()?;
    let get = |key: &str| -> Result<&[f64]> {
        let v = embeddings.get(key)?;
        if v.iter().all(|x| *x == 0.0) {
            return Err(Error::ZeroVector(key.to_string()));
        }
        Ok(v)
    };
    match instance.mode {
        StelMode::Stel => {
            let a1 = get(&instance.anchors[0])?;
            let a2 = get(&instance.anchors[1])?;
            let s1 = get(&instance.candidates[0])?;
            let s2 = get(&instance.candidates[1])?;
            let parallel = cosine(a1, s1) + cosine(a2, s2);
            let crossed = cosine(a1, s2) + cosine(a2, s1);
            Ok(if parallel > crossed {
                1.0
            } else if parallel < crossed {
                0.0
            } else {
                0.5
            })
        }
        StelMode::StelOrContent => {
            let anchor = get(&instance.anchors[0])?;
            let correct_idx = match instance.correct {
                Correct::Candidate(i) => i as usize,
                Correct::Parallel => unreachable!("validated above"),
            };
            let right = cosine(anchor, get(&instance.candidates[correct_idx])?);
            let wrong = cosine(anchor, get(&instance.candidates[1 - correct_idx])?);
            Ok(if right > wrong {
                1.0
            } else if right < wrong {
                0.0
            } else {
                0.5
            })
        }
    }
}

pub fn score_stel(instances: &[StelInstance], embeddings: &EmbeddingSet) -> Result<StelReport> {
    if instances.is_empty() {
        return Err(Error::InvalidConfig("no instances to score".into()));
    }
    let scores = map_ordered(instances, |inst| score_instance(inst, embeddings));
    let mut per_feature: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    let mut total = 0.0;
    for (instance, score) in instances.iter().zip(scores) {
        let score = score?;
        total += score;
        let entry = per_feature.entry(instance.feature_id.clone()).or_insert((0.0, 0));
        entry.0 += score;
        entry.1 += 1;
    }
    Ok(StelReport {
        overall_accuracy: total / instances.len() as f64,
        per_feature_accuracy: per_feature
            .into_iter()
            .map(|(k, (sum, n))| (k, sum / n as f64))
            .collect(),
        n: instances.len(),
    })
}

/// Mean squared difference between two per-feature score tables.
pub fn probe_mse(
    scores_a: &BTreeMap<String, f64>,
    scores_b: &BTreeMap<String, f64>,
) -> Result<f64> {
    if scores_a.is_empty() {
        return Err(Error::InvalidConfig("empty score table".into()));
    }
    let keys_a: Vec<&String> = scores_a.keys().collect();
    let keys_b: Vec<&String> = scores_b.keys().collect();
    if keys_a != keys_b {
        return Err(Error::InvalidConfig(
            "per-feature score tables have mismatched keys".into(),
        ));
    }
    let sum: f64 = scores_a
        .iter()
        .map(|(k, a)| {
            let b = scores_b[k];
            (a - b) * (a - b)
        })
        .sum();
    Ok(sum / scores_a.len() as f64)
}
