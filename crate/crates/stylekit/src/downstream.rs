//! Authorship verification (cosine + ROC-AUC) and style-transfer output
//! discrimination.

use serde::{Deserialize, Serialize};

use crate::data::EmbeddingSet;
use crate::error::{Error, Result};
use crate::par::map_ordered;
use crate::vecmath::cosine;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AvInstance {
    pub doc1_key: String,
    pub doc2_key: String,
    /// True when both documents share an author.
    pub label: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Candidate {
    A,
    B,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscriminationInstance {
    pub anchor_key: String,
    pub candidate_a_key: String,
    pub candidate_b_key: String,
    /// The candidate actually written by the target author.
    pub correct: Candidate,
}

fn nonzero<'a>(embeddings: &'a EmbeddingSet, key: &str) -> Result<&'a [f64]> {
    let v = embeddings.get(key)?;
    if v.iter().all(|x| *x == 0.0) {
        return Err(Error::ZeroVector(key.to_string()));
    }
    Ok(v)
}

/// Cosine similarity per instance, input order preserved.
pub fn av_similarities(
    instances: &[AvInstance],
    embeddings: &EmbeddingSet,
) -> Result<Vec<(f64, bool)>> {
    map_ordered(instances, |inst| {
        if inst.doc1_key == inst.doc2_key {
            return Err(Error::InvalidRecord(format!(
                "av instance keys must be distinct: `{}`",
                inst.doc1_key
            )));
        }
        let d1 = nonzero(embeddings, &inst.doc1_key)?;
        let d2 = nonzero(embeddings, &inst.doc2_key)?;
        Ok((cosine(d1, d2), inst.label))
    })
    .into_iter()
    .collect()
}

/// ROC-AUC via the rank (Mann-Whitney) formulation with average ranks for
/// ties: P(score_pos > score_neg) + 0.5 * P(score_pos == score_neg).
pub fn roc_auc(scored: &[(f64, bool)]) -> Result<f64> {
    let n_pos = scored.iter().filter(|(_, l)| *l).count();
    let n_neg = scored.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    if scored.iter().any(|(s, _)| !s.is_finite()) {
        return Err(Error::NonFinite {
            context: "roc_auc scores".into(),
        });
    }
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| scored[a].0.partial_cmp(&scored[b].0).unwrap());
    // Average rank within tie groups; ranks are 1-based.
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scored[order[j]].0 == scored[order[i]].0 {
            j += 1;
        }
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            if scored[idx].1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j;
    }
    let n_pos_f = n_pos as f64;
    Ok((rank_sum_pos - n_pos_f * (n_pos_f + 1.0) / 2.0) / (n_pos_f * n_neg as f64))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiscriminationReport {
    pub accuracy: f64,
    pub n: usize,
    /// (chosen candidate, credit) per instance; `None` marks a tie.
    pub choices: Vec<(Option<Candidate>, f64)>,
}

/// Picks the candidate closest to the anchor by cosine; ties earn 0.5.
pub fn discriminate(
    instances: &[DiscriminationInstance],
    embeddings: &EmbeddingSet,
) -> Result<DiscriminationReport> {
    if instances.is_empty() {
        return Err(Error::InvalidConfig("no instances".into()));
    }
    let choices = map_ordered(instances, |inst| -> Result<(Option<Candidate>, f64)> {
        if inst.candidate_a_key == inst.candidate_b_key {
            return Err(Error::InvalidRecord("candidates must be distinct".into()));
        }
        let anchor = nonzero(embeddings, &inst.anchor_key)?;
        let sim_a = cosine(anchor, nonzero(embeddings, &inst.candidate_a_key)?);
        let sim_b = cosine(anchor, nonzero(embeddings, &inst.candidate_b_key)?);
        let choice = if sim_a > sim_b {
            Some(Candidate::A)
        } else if sim_b > sim_a {
            Some(Candidate::B)
        } else {
            None
        };
        let credit = match choice {
            Some(c) if c == inst.correct => 1.0,
            Some(_) => 0.0,
            None => 0.5,
        };
        Ok((choice, credit))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let accuracy = choices.iter().map(|(_, credit)| credit).sum::<f64>() / choices.len() as f64;
    Ok(DiscriminationReport {
        accuracy,
        n: instances.len(),
        choices,
    })
}

/// O(P*N) pairwise AUC, kept as an independent oracle for the rank method.
pub fn roc_auc_bruteforce(scored: &[(f64, bool)]) -> Result<f64> {
    let pos: Vec<f64> = scored.iter().filter(|(_, l)| *l).map(|(s, _)| *s).collect();
    let neg: Vec<f64> = scored.iter().filter(|(_, l)| !*l).map(|(s, _)| *s).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::SingleClass);
    }
    let mut total = 0.0;
    for p in &pos {
        for n in &neg {
            total += if p > n {
                1.0
            } else if p == n {
                0.5
            } else {
                0.0
            };
        }
    }
    Ok(total / (pos.len() * neg.len()) as f64)
}
