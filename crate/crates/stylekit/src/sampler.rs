//! Feature-specific contrastive triplet construction.
//!
//! An anchor and positive are drawn from different pairs on the same style
//! side, so they match in style but not content. The negative is the
//! opposite-side paraphrase of either the anchor's pair or the positive's
//! pair; the anchor-paraphrase class is sampled to an exact fraction rather
//! than in expectation.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{pair_index, ParallelPair, Side, SideRef, Triplet};
use crate::error::{Error, Result};
use crate::par::map_ordered;
use crate::registry::FeatureRegistry;
use crate::rng::seeded_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    PositiveSideOnly,
    BothSides,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub per_feature_count: usize,
    pub paraphrase_fraction: f64,
    pub polarity: Polarity,
    pub exclude_features: BTreeSet<String>,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            per_feature_count: 8000,
            paraphrase_fraction: 0.5,
            polarity: Polarity::PositiveSideOnly,
            exclude_features: BTreeSet::new(),
            seed: 0,
        }
    }
}

/// Feature sets withheld in the generalization ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationPreset {
    InDomain,
    OutOfDomain,
    OutOfDistribution,
}

impl std::str::FromStr for AblationPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "in_domain" => Ok(AblationPreset::InDomain),
            "out_of_domain" => Ok(AblationPreset::OutOfDomain),
            "out_of_distribution" => Ok(AblationPreset::OutOfDistribution),
            other => Err(Error::UnknownPreset(other.to_string())),
        }
    }
}

const OUT_OF_DOMAIN: &[&str] = &[
    "formal-tone",
    "contractions",
    "numerical-substitution",
    "complex-sentence-structure",
    "text-emojis",
    "emojis",
];

const OUT_OF_DISTRIBUTION: &[&str] = &[
    "formal-tone",
    "polite-tone",
    "fluent-construction",
    "uppercase-only",
    "lowercase-only",
    "humor",
    "sarcasm",
    "contractions",
    "numerical-substitution",
    "numerical-digits",
    "complex-sentence-structure",
    "long-words",
    "text-emojis",
    "emojis",
    "misspellings",
];

pub fn ablation_preset(preset: AblationPreset) -> BTreeSet<String> {
    let list: &[&str] = match preset {
        AblationPreset::InDomain => &[],
        AblationPreset::OutOfDomain => OUT_OF_DOMAIN,
        AblationPreset::OutOfDistribution => OUT_OF_DISTRIBUTION,
    };
    list.iter().map(|s| s.to_string()).collect()
}

/// Draws `k` distinct indices from `0..n` by partial Fisher-Yates.
fn draw_without_replacement(n: usize, k: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut indices: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.gen_range(i..n);
        indices.swap(i, j);
    }
    indices.truncate(k);
    indices
}

/// Which pair the negative paraphrases.
#[derive(Clone, Copy, PartialEq)]
enum NegClass {
    Anchor,
    Positive,
}

fn sample_feature(
    feature_id: &str,
    pairs: &[&ParallelPair],
    config: &SamplerConfig,
) -> Result<Vec<Triplet>> {
    let n = pairs.len();
    if n < 2 {
        return Err(Error::TooFewPairs {
            feature_id: feature_id.to_string(),
            count: n,
            need: 2,
        });
    }
    let sides: &[Side] = match config.polarity {
        Polarity::PositiveSideOnly => &[Side::Positive],
        Polarity::BothSides => &[Side::Positive, Side::Negative],
    };
    // Each class enumerates (side, i, j) with i != j.
    let class_size = sides.len() * n * (n - 1);
    let want_par =
        (config.per_feature_count as f64 * config.paraphrase_fraction).ceil() as usize;
    let want_non = config.per_feature_count - want_par;
    for want in [want_par, want_non] {
        if want > class_size {
            return Err(Error::InfeasibleBudget {
                feature_id: feature_id.to_string(),
                requested: want,
                available: class_size,
            });
        }
    }

    let decode = |idx: usize| -> (Side, usize, usize) {
        let side = sides[idx / (n * (n - 1))];
        let rem = idx % (n * (n - 1));
        let i = rem / (n - 1);
        let mut j = rem % (n - 1);
        if j >= i {
            j += 1;
        }
        (side, i, j)
    };

    let mut out = Vec::with_capacity(config.per_feature_count);
    for (class, want) in [(NegClass::Anchor, want_par), (NegClass::Positive, want_non)] {
        let class_label = match class {
            NegClass::Anchor => "paraphrase",
            NegClass::Positive => "non-paraphrase",
        };
        let mut rng = seeded_rng(config.seed, &["sample", feature_id, class_label]);
        for idx in draw_without_replacement(class_size, want, &mut rng) {
            let (side, i, j) = decode(idx);
            let neg_pair = match class {
                NegClass::Anchor => pairs[i],
                NegClass::Positive => pairs[j],
            };
            out.push(Triplet {
                anchor: SideRef::new(&pairs[i].pair_id, side),
                positive: SideRef::new(&pairs[j].pair_id, side),
                negative: SideRef::new(&neg_pair.pair_id, side.flip()),
                feature_id: feature_id.to_string(),
                negative_paraphrases_anchor: class == NegClass::Anchor,
            });
        }
    }
    Ok(out)
}

/// Samples exactly `per_feature_count` triplets for every non-excluded
/// feature present in `pairs`. Output is ordered by (feature, class, draw)
/// and deterministic under a fixed seed; per-feature work runs in parallel.
pub fn sample_triplets(
    pairs: &[ParallelPair],
    config: &SamplerConfig,
    registry: &FeatureRegistry,
) -> Result<Vec<Triplet>> {
    if !(0.0..=1.0).contains(&config.paraphrase_fraction) {
        return Err(Error::InvalidConfig(format!(
            "paraphrase_fraction must be in [0, 1], got {}",
            config.paraphrase_fraction
        )));
    }
    for slug in &config.exclude_features {
        if registry.get(slug).is_none() {
            return Err(Error::InvalidConfig(format!(
                "excluded feature `{slug}` not in registry"
            )));
        }
    }
    let mut by_feature: BTreeMap<&str, Vec<&ParallelPair>> = BTreeMap::new();
    for pair in pairs {
        if config.exclude_features.contains(&pair.feature_id) {
            continue;
        }
        by_feature.entry(pair.feature_id.as_str()).or_default().push(pair);
    }
    for group in by_feature.values_mut() {
        group.sort_by(|a, b| a.pair_id.cmp(&b.pair_id));
    }
    let groups: Vec<(&str, Vec<&ParallelPair>)> = by_feature.into_iter().collect();
    let results = map_ordered(&groups, |(feature_id, group)| {
        sample_feature(feature_id, group, config)
    });
    let mut out = Vec::new();
    for result in results {
        out.extend(result?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Violation {
    pub index: usize,
    pub rule: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationReport {
    pub n_triplets: usize,
    pub violations: Vec<Violation>,
    pub paraphrase_fraction_observed: f64,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks every sampled triplet against the structural invariants.
pub fn validate_triplets(triplets: &[Triplet], pairs: &[ParallelPair]) -> Result<ValidationReport> {
    let index = pair_index(pairs);
    let mut violations = Vec::new();
    let mut seen: HashSet<(&SideRef, &SideRef, &SideRef)> = HashSet::new();
    let mut paraphrase_count = 0usize;
    for (i, t) in triplets.iter().enumerate() {
        for side_ref in [&t.anchor, &t.positive, &t.negative] {
            if !index.contains_key(side_ref.pair_id.as_str()) {
                return Err(Error::DanglingRef {
                    pair_id: side_ref.pair_id.clone(),
                });
            }
        }
        let mut violate = |rule: &str| {
            violations.push(Violation {
                index: i,
                rule: rule.to_string(),
            })
        };
        if t.anchor.side != t.positive.side {
            violate("style-polarity");
        }
        if t.anchor.pair_id == t.positive.pair_id {
            violate("content-mismatch");
        }
        if t.negative.side == t.anchor.side {
            violate("negative-style");
        }
        let from_anchor = t.negative.pair_id == t.anchor.pair_id;
        let from_positive = t.negative.pair_id == t.positive.pair_id;
        if !from_anchor && !from_positive {
            violate("negative-source");
        } else if t.negative_paraphrases_anchor != from_anchor {
            violate("paraphrase-flag");
        }
        let feats = [&t.anchor, &t.positive, &t.negative]
            .map(|r| index[r.pair_id.as_str()].feature_id.as_str());
        if feats.iter().any(|f| *f != t.feature_id) {
            violate("feature-consistency");
        }
        if !seen.insert((&t.anchor, &t.positive, &t.negative)) {
            violate("duplicate");
        }
        if t.negative_paraphrases_anchor {
            paraphrase_count += 1;
        }
    }
    Ok(ValidationReport {
        n_triplets: triplets.len(),
        violations,
        paraphrase_fraction_observed: if triplets.is_empty() {
            0.0
        } else {
            paraphrase_count as f64 / triplets.len() as f64
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synthetic_pair, Split};

    fn pairs_for(feature: &str, n: usize) -> Vec<ParallelPair> {
        (0..n)
            .map(|i| synthetic_pair(&format!("{feature}-{i:03}"), feature, Split::Train))
            .collect()
    }

    #[test]
    fn two_pair_feature_full_enumeration() {
        // Admissible space for 2 pairs, positive side, per class:
        // (i,j) in {(0,1),(1,0)}; count 2 with fraction 0.5 takes one from
        // each class. Every draw must satisfy the invariants.
        let registry = FeatureRegistry::builtin();
        let pairs = pairs_for("active-voice", 2);
        let config = SamplerConfig {
            per_feature_count: 2,
            ..SamplerConfig::default()
        };
        let triplets = sample_triplets(&pairs, &config, &registry).unwrap();
        assert_eq!(triplets.len(), 2);
        let report = validate_triplets(&triplets, &pairs).unwrap();
        assert!(report.is_clean(), "{:?}", report.violations);
        assert_eq!(report.paraphrase_fraction_observed, 0.5);
        // Both triplets use the positive side and opposite-side negatives.
        for t in &triplets {
            assert_eq!(t.anchor.side, Side::Positive);
            assert_eq!(t.negative.side, Side::Negative);
        }
    }

    #[test]
    fn exhausting_the_class_space_is_exact() {
        let registry = FeatureRegistry::builtin();
        let pairs = pairs_for("active-voice", 3);
        // Class size is 3*2 = 6 per class; request all of both.
        let config = SamplerConfig {
            per_feature_count: 12,
            ..SamplerConfig::default()
        };
        let triplets = sample_triplets(&pairs, &config, &registry).unwrap();
        assert_eq!(triplets.len(), 12);
        let unique: HashSet<_> = triplets.iter().collect();
        assert_eq!(unique.len(), 12);
    }

    #[test]
    fn infeasible_budget_is_an_error() {
        let registry = FeatureRegistry::builtin();
        let pairs = pairs_for("active-voice", 2);
        let config = SamplerConfig {
            per_feature_count: 100,
            ..SamplerConfig::default()
        };
        assert!(matches!(
            sample_triplets(&pairs, &config, &registry),
            Err(Error::InfeasibleBudget { .. })
        ));
    }

    #[test]
    fn excluding_every_feature_yields_empty_output() {
        let registry = FeatureRegistry::builtin();
        let mut pairs = Vec::new();
        for f in registry.features() {
            pairs.extend(pairs_for(&f.id, 2));
        }
        let config = SamplerConfig {
            per_feature_count: 2,
            exclude_features: registry.features().iter().map(|f| f.id.clone()).collect(),
            ..SamplerConfig::default()
        };
        let triplets = sample_triplets(&pairs, &config, &registry).unwrap();
        assert!(triplets.is_empty());
    }

    #[test]
    fn deterministic_under_fixed_seed() {
        let registry = FeatureRegistry::builtin();
        let mut pairs = pairs_for("active-voice", 20);
        pairs.extend(pairs_for("formal-tone", 20));
        let config = SamplerConfig {
            per_feature_count: 100,
            seed: 42,
            ..SamplerConfig::default()
        };
        let a = sample_triplets(&pairs, &config, &registry).unwrap();
        let b = sample_triplets(&pairs, &config, &registry).unwrap();
        assert_eq!(a, b);
        let different_seed = SamplerConfig { seed: 43, ..config };
        let c = sample_triplets(&pairs, &different_seed, &registry).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn both_sides_doubles_the_admissible_space() {
        let registry = FeatureRegistry::builtin();
        let pairs = pairs_for("active-voice", 2);
        let config = SamplerConfig {
            per_feature_count: 4,
            polarity: Polarity::BothSides,
            ..SamplerConfig::default()
        };
        let triplets = sample_triplets(&pairs, &config, &registry).unwrap();
        assert_eq!(triplets.len(), 4);
        assert!(validate_triplets(&triplets, &pairs).unwrap().is_clean());
        assert!(triplets.iter().any(|t| t.anchor.side == Side::Negative));
    }

    #[test]
    fn validate_flags_hand_built_violations() {
        let pairs = pairs_for("active-voice", 2);
        let bad = Triplet {
            anchor: SideRef::new("active-voice-000", Side::Positive),
            positive: SideRef::new("active-voice-001", Side::Negative),
            negative: SideRef::new("active-voice-000", Side::Negative),
            feature_id: "active-voice".to_string(),
            negative_paraphrases_anchor: true,
        };
        let report = validate_triplets(&[bad], &pairs).unwrap();
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].rule, "style-polarity");
    }

    #[test]
    fn validate_detects_dangling_ref() {
        let pairs = pairs_for("active-voice", 2);
        let t = Triplet {
            anchor: SideRef::new("ghost", Side::Positive),
            positive: SideRef::new("active-voice-001", Side::Positive),
            negative: SideRef::new("ghost", Side::Negative),
            feature_id: "active-voice".to_string(),
            negative_paraphrases_anchor: true,
        };
        assert!(matches!(
            validate_triplets(&[t], &pairs),
            Err(Error::DanglingRef { .. })
        ));
    }

    #[test]
    fn ablation_preset_sizes() {
        let registry = FeatureRegistry::builtin();
        assert!(ablation_preset(AblationPreset::InDomain).is_empty());
        let ood = ablation_preset(AblationPreset::OutOfDomain);
        assert_eq!(ood.len(), 6);
        let oodist = ablation_preset(AblationPreset::OutOfDistribution);
        assert_eq!(oodist.len(), 15);
        // Presets must resolve against the registry.
        for slug in ood.iter().chain(oodist.iter()) {
            assert!(registry.get(slug).is_some(), "{slug}");
        }
        assert!(ood.is_subset(&oodist));
    }

    #[test]
    fn unknown_preset_name_errors() {
        assert!(matches!(
            "out_of_everything".parse::<AblationPreset>(),
            Err(Error::UnknownPreset(_))
        ));
    }
}
