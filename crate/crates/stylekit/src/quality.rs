//! Dataset-quality metrics: content similarity inside pairs, corpus
//! diversity, fluency-score ingestion, and human-annotation aggregation
//! with Krippendorff's alpha.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::data::{EmbeddingSet, ParallelPair, Side, SideRef};
use crate::error::{Error, Result};
use crate::vecmath::cosine;

fn nonzero<'a>(embeddings: &'a EmbeddingSet, key: &str) -> Result<&'a [f64]> {
    let v = embeddings.get(key)?;
    if v.iter().all(|x| *x == 0.0) {
        return Err(Error::ZeroVector(key.to_string()));
    }
    Ok(v)
}

/// Mean cosine between the two sides of each pair.
pub fn content_similarity(pairs: &[ParallelPair], embeddings: &EmbeddingSet) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::InvalidConfig("no pairs".into()));
    }
    let mut total = 0.0;
    for pair in pairs {
        let pos = nonzero(embeddings, &SideRef::new(&pair.pair_id, Side::Positive).key())?;
        let neg = nonzero(embeddings, &SideRef::new(&pair.pair_id, Side::Negative).key())?;
        total += cosine(pos, neg);
    }
    Ok(total / pairs.len() as f64)
}

/// `1 - mean_i(max_{j != i} cosine(e_i, e_j))`: how far each text sits from
/// its nearest neighbor. Local definition; not comparable to external scores.
pub fn diversity(embeddings: &[Vec<f64>]) -> Result<f64> {
    if embeddings.len() < 2 {
        return Err(Error::InvalidConfig("diversity needs at least 2 embeddings".into()));
    }
    for (i, v) in embeddings.iter().enumerate() {
        if v.iter().all(|x| *x == 0.0) {
            return Err(Error::ZeroVector(format!("index {i}")));
        }
    }
    let mut total = 0.0;
    for (i, a) in embeddings.iter().enumerate() {
        let max_sim = embeddings
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, b)| cosine(a, b))
            .fold(f64::NEG_INFINITY, f64::max);
        total += max_sim;
    }
    Ok(1.0 - total / embeddings.len() as f64)
}

/// Mean fluency over scores whose feature is not excluded (features that
/// deliberately generate disfluent text are excluded upstream).
pub fn fluency_summary(scores: &[(String, f64)], exclude: &BTreeSet<String>) -> Result<f64> {
    let included: Vec<f64> = scores
        .iter()
        .filter(|(feature_id, _)| !exclude.contains(feature_id))
        .map(|(_, s)| *s)
        .collect();
    if included.is_empty() {
        return Err(Error::InvalidConfig("all fluency scores excluded".into()));
    }
    Ok(included.iter().sum::<f64>() / included.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Response {
    No,
    Possibly,
    Yes,
}

impl Response {
    pub fn score(self) -> f64 {
        match self {
            Response::No => 0.0,
            Response::Possibly => 0.5,
            Response::Yes => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub item_id: String,
    pub annotator_id: String,
    pub response: Response,
    /// Whether the item was generated as a positive or a negative example.
    pub intended_label: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnnotationReport {
    pub per_item_mean: BTreeMap<String, f64>,
    pub per_item_agrees_intended: BTreeMap<String, bool>,
    pub overall_accuracy: f64,
    pub mean_majority_size: f64,
}

/// Aggregates annotator responses per item.
///
/// An item agrees with its intended label when the mean response is >= 0.5
/// for positives and strictly < 0.5 for negatives. "Possibly" counts toward
/// neither side of the majority.
pub fn aggregate_annotations(records: &[AnnotationRecord]) -> Result<AnnotationReport> {
    if records.is_empty() {
        return Err(Error::InvalidConfig("no annotation records".into()));
    }
    let mut seen: BTreeSet<(&str, &str)> = BTreeSet::new();
    for rec in records {
        if !seen.insert((rec.item_id.as_str(), rec.annotator_id.as_str())) {
            return Err(Error::InvalidRecord(format!(
                "duplicate annotation ({}, {})",
                rec.item_id, rec.annotator_id
            )));
        }
    }
    let mut by_item: BTreeMap<&str, (Vec<Response>, bool)> = BTreeMap::new();
    for rec in records {
        let entry = by_item
            .entry(rec.item_id.as_str())
            .or_insert_with(|| (Vec::new(), rec.intended_label));
        entry.0.push(rec.response);
    }
    let mut per_item_mean = BTreeMap::new();
    let mut per_item_agrees = BTreeMap::new();
    let mut agree_count = 0usize;
    let mut majority_total = 0usize;
    for (item, (responses, intended)) in &by_item {
        let mean = responses.iter().map(|r| r.score()).sum::<f64>() / responses.len() as f64;
        let agrees = if *intended { mean >= 0.5 } else { mean < 0.5 };
        if agrees {
            agree_count += 1;
        }
        let yes = responses.iter().filter(|r| **r == Response::Yes).count();
        let no = responses.iter().filter(|r| **r == Response::No).count();
        majority_total += yes.max(no);
        per_item_mean.insert(item.to_string(), mean);
        per_item_agrees.insert(item.to_string(), agrees);
    }
    Ok(AnnotationReport {
        overall_accuracy: agree_count as f64 / by_item.len() as f64,
        mean_majority_size: majority_total as f64 / by_item.len() as f64,
        per_item_mean,
        per_item_agrees_intended: per_item_agrees,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlphaMetric {
    /// Squared-difference distance; default for the ordered 0/0.5/1 scale.
    Interval,
    Nominal,
}

/// Krippendorff's alpha from the coincidence matrix:
/// `alpha = 1 - (n - 1) * sum_{v<w} o_vw d(v,w) / sum_{v<w} n_v n_w d(v,w)`.
pub fn krippendorff_alpha(records: &[AnnotationRecord], metric: AlphaMetric) -> Result<f64> {
    let mut by_item: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for rec in records {
        by_item.entry(rec.item_id.as_str()).or_default().push(rec.response.score());
    }
    // Only units with at least two annotations are pairable.
    let units: Vec<&Vec<f64>> = by_item.values().filter(|v| v.len() >= 2).collect();
    if units.len() < 2 {
        return Err(Error::InvalidConfig(
            "need at least 2 items with at least 2 annotations each".into(),
        ));
    }
    // Distinct values, ordered; f64 keys are the fixed {0, 0.5, 1} grid.
    let mut values: Vec<f64> = units.iter().flat_map(|u| u.iter().copied()).collect();
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    values.dedup();
    let v_index = |x: f64| values.iter().position(|v| *v == x).unwrap();
    let k = values.len();
    let mut coincidence = vec![vec![0.0f64; k]; k];
    let mut n_total = 0.0;
    for unit in &units {
        let m = unit.len() as f64;
        n_total += m;
        for (i, a) in unit.iter().enumerate() {
            for (j, b) in unit.iter().enumerate() {
                if i != j {
                    coincidence[v_index(*a)][v_index(*b)] += 1.0 / (m - 1.0);
                }
            }
        }
    }
    let marginals: Vec<f64> = (0..k).map(|v| coincidence[v].iter().sum()).collect();
    let distance = |v: usize, w: usize| -> f64 {
        match metric {
            AlphaMetric::Interval => {
                let d = values[v] - values[w];
                d * d
            }
            AlphaMetric::Nominal => {
                if v == w {
                    0.0
                } else {
                    1.0
                }
            }
        }
    };
    let mut observed = 0.0;
    let mut expected = 0.0;
    for v in 0..k {
        for w in (v + 1)..k {
            observed += coincidence[v][w] * distance(v, w);
            expected += marginals[v] * marginals[w] * distance(v, w);
        }
    }
    if expected == 0.0 {
        return Err(Error::NoExpectedDisagreement);
    }
    Ok(1.0 - (n_total - 1.0) * observed / expected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synthetic_pair, Split};
    use approx::assert_relative_eq;
    use rand::Rng;

    #[test]
    fn content_similarity_identical_vectors() {
        let pairs = vec![synthetic_pair("p1", "active-voice", Split::Test)];
        let mut e = EmbeddingSet::new();
        e.insert("p1#positive", vec![0.5, 0.5]).unwrap();
        e.insert("p1#negative", vec![0.5, 0.5]).unwrap();
        assert_relative_eq!(content_similarity(&pairs, &e).unwrap(), 1.0);
    }

    #[test]
    fn content_similarity_hand_mean() {
        // Pair cosines 1.0 and 0.0 -> mean 0.5.
        let pairs = vec![
            synthetic_pair("p1", "active-voice", Split::Test),
            synthetic_pair("p2", "active-voice", Split::Test),
        ];
        let mut e = EmbeddingSet::new();
        e.insert("p1#positive", vec![1.0, 0.0]).unwrap();
        e.insert("p1#negative", vec![1.0, 0.0]).unwrap();
        e.insert("p2#positive", vec![1.0, 0.0]).unwrap();
        e.insert("p2#negative", vec![0.0, 1.0]).unwrap();
        assert_relative_eq!(content_similarity(&pairs, &e).unwrap(), 0.5);
    }

    #[test]
    fn content_similarity_symmetric_in_sides() {
        let pairs = vec![synthetic_pair("p1", "active-voice", Split::Test)];
        let mut e = EmbeddingSet::new();
        e.insert("p1#positive", vec![1.0, 0.3]).unwrap();
        e.insert("p1#negative", vec![0.2, 0.9]).unwrap();
        let mut swapped = EmbeddingSet::new();
        swapped.insert("p1#positive", vec![0.2, 0.9]).unwrap();
        swapped.insert("p1#negative", vec![1.0, 0.3]).unwrap();
        assert_relative_eq!(
            content_similarity(&pairs, &e).unwrap(),
            content_similarity(&pairs, &swapped).unwrap()
        );
    }

    #[test]
    fn diversity_trivial_cases() {
        let identical = vec![vec![1.0, 0.0]; 3];
        assert_relative_eq!(diversity(&identical).unwrap(), 0.0);
        let orthogonal = vec![
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ];
        assert_relative_eq!(diversity(&orthogonal).unwrap(), 1.0);
        assert!(diversity(&[vec![1.0]]).is_err());
    }

    #[test]
    fn diversity_matches_bruteforce_pairwise_matrix() {
        let mut rng = crate::rng::seeded_rng(31, &["div"]);
        let embeddings: Vec<Vec<f64>> = (0..12)
            .map(|_| (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        // Oracle: full pairwise cosine matrix, then per-row max off-diagonal.
        let n = embeddings.len();
        let mut matrix = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                matrix[i][j] = cosine(&embeddings[i], &embeddings[j]);
            }
        }
        let mut mean_max = 0.0;
        for i in 0..n {
            let mut best = f64::NEG_INFINITY;
            for j in 0..n {
                if i != j && matrix[i][j] > best {
                    best = matrix[i][j];
                }
            }
            mean_max += best;
        }
        mean_max /= n as f64;
        assert_relative_eq!(diversity(&embeddings).unwrap(), 1.0 - mean_max, epsilon = 1e-12);
    }

    #[test]
    fn fluency_mean_and_exclusion() {
        let scores = vec![
            ("active-voice".to_string(), 0.9),
            ("fluent-construction".to_string(), 0.2),
            ("formal-tone".to_string(), 0.7),
        ];
        let mut exclude = BTreeSet::new();
        assert_relative_eq!(
            fluency_summary(&scores, &exclude).unwrap(),
            (0.9 + 0.2 + 0.7) / 3.0
        );
        exclude.insert("fluent-construction".to_string());
        assert_relative_eq!(fluency_summary(&scores, &exclude).unwrap(), 0.8);
        let all: BTreeSet<String> = scores.iter().map(|(f, _)| f.clone()).collect();
        assert!(fluency_summary(&scores, &all).is_err());
    }

    fn rec(item: &str, annotator: &str, response: Response, intended: bool) -> AnnotationRecord {
        AnnotationRecord {
            item_id: item.into(),
            annotator_id: annotator.into(),
            response,
            intended_label: intended,
        }
    }

    #[test]
    fn aggregate_ten_annotator_positive_item() {
        // 8 yes, 1 possibly, 1 no -> mean 0.85, agrees.
        let mut records = Vec::new();
        for i in 0..8 {
            records.push(rec("item", &format!("a{i}"), Response::Yes, true));
        }
        records.push(rec("item", "a8", Response::Possibly, true));
        records.push(rec("item", "a9", Response::No, true));
        let report = aggregate_annotations(&records).unwrap();
        assert_relative_eq!(report.per_item_mean["item"], 0.85);
        assert!(report.per_item_agrees_intended["item"]);
        assert_relative_eq!(report.mean_majority_size, 8.0);
    }

    #[test]
    fn aggregate_all_no_on_negative_agrees() {
        let records = vec![
            rec("item", "a", Response::No, false),
            rec("item", "b", Response::No, false),
        ];
        let report = aggregate_annotations(&records).unwrap();
        assert_eq!(report.overall_accuracy, 1.0);
    }

    #[test]
    fn aggregate_boundary_mean_half_on_negative_disagrees() {
        let records = vec![
            rec("item", "a", Response::Yes, false),
            rec("item", "b", Response::No, false),
        ];
        let report = aggregate_annotations(&records).unwrap();
        assert_relative_eq!(report.per_item_mean["item"], 0.5);
        assert!(!report.per_item_agrees_intended["item"]);
        assert_eq!(report.overall_accuracy, 0.0);
    }

    #[test]
    fn aggregate_order_invariant() {
        let mut records = vec![
            rec("i1", "a", Response::Yes, true),
            rec("i1", "b", Response::No, true),
            rec("i2", "a", Response::No, false),
            rec("i2", "b", Response::Possibly, false),
        ];
        let forward = aggregate_annotations(&records).unwrap();
        records.reverse();
        let backward = aggregate_annotations(&records).unwrap();
        assert_eq!(forward.overall_accuracy, backward.overall_accuracy);
        assert_eq!(forward.per_item_mean, backward.per_item_mean);
    }

    #[test]
    fn aggregate_rejects_duplicate_annotation() {
        let records = vec![
            rec("i", "a", Response::Yes, true),
            rec("i", "a", Response::No, true),
        ];
        assert!(aggregate_annotations(&records).is_err());
    }

    #[test]
    fn alpha_perfect_agreement_is_one() {
        let records = vec![
            rec("i1", "a", Response::Yes, true),
            rec("i1", "b", Response::Yes, true),
            rec("i2", "a", Response::No, false),
            rec("i2", "b", Response::No, false),
        ];
        assert_relative_eq!(
            krippendorff_alpha(&records, AlphaMetric::Interval).unwrap(),
            1.0
        );
    }

    #[test]
    fn alpha_hand_computed_coincidence_case() {
        // Items: u1 = (0, 0), u2 = (1, 1), u3 = (0, 1). n = 6.
        // Coincidence (symmetric): o[0][0]=2, o[1][1]=2, o[0][1]=o[1][0]=1.
        // Marginals n_0 = n_1 = 3. Only off-diagonal cell: o=1, d=1.
        // alpha = 1 - (6-1) * 1 / (3*3) = 4/9.
        let records = vec![
            rec("u1", "a", Response::No, true),
            rec("u1", "b", Response::No, true),
            rec("u2", "a", Response::Yes, true),
            rec("u2", "b", Response::Yes, true),
            rec("u3", "a", Response::No, true),
            rec("u3", "b", Response::Yes, true),
        ];
        for metric in [AlphaMetric::Interval, AlphaMetric::Nominal] {
            // Binary values: interval and nominal coincide.
            assert_relative_eq!(
                krippendorff_alpha(&records, metric).unwrap(),
                4.0 / 9.0,
                epsilon = 1e-9
            );
        }
    }

    #[test]
    fn alpha_interval_vs_nominal_on_ordered_scale() {
        // "Possibly" half-disagrees under interval but fully under nominal.
        let records = vec![
            rec("u1", "a", Response::No, true),
            rec("u1", "b", Response::Possibly, true),
            rec("u2", "a", Response::Yes, true),
            rec("u2", "b", Response::Yes, true),
            rec("u3", "a", Response::No, true),
            rec("u3", "b", Response::No, true),
        ];
        let interval = krippendorff_alpha(&records, AlphaMetric::Interval).unwrap();
        let nominal = krippendorff_alpha(&records, AlphaMetric::Nominal).unwrap();
        assert!(interval > nominal, "{interval} vs {nominal}");
    }

    #[test]
    fn alpha_independent_responses_near_zero() {
        let mut rng = crate::rng::seeded_rng(41, &["alpha-sim"]);
        let mut records = Vec::new();
        for item in 0..2000 {
            for annotator in 0..3 {
                let response = match rng.gen_range(0..3) {
                    0 => Response::No,
                    1 => Response::Possibly,
                    _ => Response::Yes,
                };
                records.push(rec(&format!("i{item}"), &format!("a{annotator}"), response, true));
            }
        }
        let alpha = krippendorff_alpha(&records, AlphaMetric::Interval).unwrap();
        assert!(alpha.abs() < 0.05, "alpha = {alpha}");
    }

    #[test]
    fn alpha_invariant_under_relabeling() {
        let records = vec![
            rec("u1", "a", Response::No, true),
            rec("u1", "b", Response::Possibly, true),
            rec("u2", "a", Response::Yes, true),
            rec("u2", "b", Response::Yes, true),
        ];
        let relabeled: Vec<AnnotationRecord> = records
            .iter()
            .map(|r| AnnotationRecord {
                item_id: format!("x-{}", r.item_id),
                annotator_id: format!("y-{}", r.annotator_id),
                ..r.clone()
            })
            .collect();
        assert_relative_eq!(
            krippendorff_alpha(&records, AlphaMetric::Interval).unwrap(),
            krippendorff_alpha(&relabeled, AlphaMetric::Interval).unwrap()
        );
    }

    #[test]
    fn alpha_insufficient_overlap() {
        let records = vec![
            rec("u1", "a", Response::Yes, true),
            rec("u2", "a", Response::No, true),
        ];
        assert!(krippendorff_alpha(&records, AlphaMetric::Interval).is_err());
    }
}
