//! Synthetic-generation scaffolding: C4 sentence filtering, attributed
//! prompt assembly, and LLM response parsing. The provider clients live in
//! [`provider`].

pub mod provider;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::StyleFeature;
use crate::error::{Error, Result};
use crate::rng::seeded_rng;

/// Attribute values conditioning one generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttrChoice {
    pub topic: String,
    pub length: String,
    pub point_of_view: String,
    pub tense: String,
    pub sentence_type: String,
}

/// Value sets the attributed prompt samples from (topic is free text).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttributeSets {
    pub lengths: Vec<String>,
    pub points_of_view: Vec<String>,
    pub tenses: Vec<String>,
    pub sentence_types: Vec<String>,
}

impl Default for AttributeSets {
    fn default() -> Self {
        fn strs(items: &[&str]) -> Vec<String> {
            items.iter().map(|s| s.to_string()).collect()
        }
        AttributeSets {
            lengths: strs(&["short", "medium", "long"]),
            points_of_view: strs(&["first person", "second person", "third person"]),
            tenses: strs(&["past", "present", "future"]),
            sentence_types: strs(&["declarative", "interrogative", "imperative", "exclamatory"]),
        }
    }
}

impl AttributeSets {
    /// Samples one value per attribute, deterministically per (seed, topic).
    pub fn sample(&self, topic: &str, seed: u64) -> AttrChoice {
        let mut rng = seeded_rng(seed, &["attrs", topic]);
        let pick = |set: &[String], rng: &mut rand_chacha::ChaCha8Rng| {
            set.choose(rng).cloned().unwrap_or_default()
        };
        AttrChoice {
            topic: topic.to_string(),
            length: pick(&self.lengths, &mut rng),
            point_of_view: pick(&self.points_of_view, &mut rng),
            tense: pick(&self.tenses, &mut rng),
            sentence_type: pick(&self.sentence_types, &mut rng),
        }
    }
}

// ---------------------------------------------------------------------------
// C4 sentence filtering
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FilterConfig {
    /// Kept sentences must exceed this whitespace-token count.
    pub min_words: usize,
    /// Minimum fraction of tokens that are purely alphabetic.
    pub min_alpha_token_ratio: f64,
    /// Substrings that mark formatting or markup rather than prose.
    pub markup_patterns: Vec<String>,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            min_words: 32,
            min_alpha_token_ratio: 0.7,
            markup_patterns: ["<", ">", "|", "{", "}", "http://", "https://", "=", "\t", "©", "®"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        }
    }
}

/// Splits a document on terminal punctuation and keeps natural-text
/// sentences longer than `min_words` whitespace tokens.
pub fn filter_c4_sentences(document_text: &str, config: &FilterConfig) -> Vec<String> {
    let mut sentences = Vec::new();
    let mut current = String::new();
    for ch in document_text.chars() {
        current.push(ch);
        if matches!(ch, '.' | '!' | '?') {
            sentences.push(std::mem::take(&mut current));
        }
    }
    if !current.trim().is_empty() {
        sentences.push(current);
    }
    sentences
        .into_iter()
        .map(|s| s.trim().to_string())
        .filter(|s| {
            let tokens: Vec<&str> = s.split_whitespace().collect();
            if tokens.len() <= config.min_words {
                return false;
            }
            if config.markup_patterns.iter().any(|p| s.contains(p.as_str())) {
                return false;
            }
            let alpha = tokens
                .iter()
                .filter(|t| {
                    let stripped: String =
                        t.chars().filter(|c| !c.is_ascii_punctuation()).collect();
                    !stripped.is_empty() && stripped.chars().all(|c| c.is_ascii_alphabetic())
                })
                .count();
            alpha as f64 / tokens.len() as f64 >= config.min_alpha_token_ratio
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Prompt templates
// ---------------------------------------------------------------------------

pub const TOPIC_PROMPT_TEMPLATE: &str =
    "What is the fine-grained topic of the following text: {sentence} Only return the topic.";

pub fn build_topic_prompt(sentence: &str) -> Result<String> {
    if sentence.is_empty() {
        return Err(Error::InvalidConfig("sentence must be nonempty".into()));
    }
    Ok(TOPIC_PROMPT_TEMPLATE.replace("{sentence}", sentence))
}

fn capitalize(word: &str) -> String {
    let mut chars = word.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().collect::<String>() + chars.as_str(),
        None => String::new(),
    }
}

/// Assembles the attributed pair-generation prompt.
///
/// The five attribute lines appear in a seeded random permutation; the
/// conditions block carries the three fixed constraints plus any
/// feature-specific conditions, numbered consecutively.
pub fn build_pair_prompt(
    feature: &StyleFeature,
    attrs: &AttrChoice,
    permutation_seed: u64,
) -> String {
    let mut attribute_lines = vec![
        format!("Topic: {}", attrs.topic),
        format!("Length: {}", attrs.length),
        format!("Point of view: {}", attrs.point_of_view),
        format!("Tense: {}", attrs.tense),
        format!("Type of Sentence: {}", attrs.sentence_type),
    ];
    let mut rng = seeded_rng(permutation_seed, &["attr-permutation", &feature.id]);
    attribute_lines.shuffle(&mut rng);

    let mut prompt = format!(
        "Generate a pair of {} and {} sentences with the following attributes:\n",
        feature.positive_prompt, feature.negative_prompt
    );
    for (i, line) in attribute_lines.iter().enumerate() {
        prompt.push_str(&format!("    {}. {}\n", i + 1, line));
    }
    prompt.push_str("\nEnsure that the generated sentences meet the following conditions:\n");
    let mut conditions = vec![
        "There is no extra information in one sentence that is not in the other.".to_string(),
        "The difference between the two sentences is subtle.".to_string(),
        "The two sentences have the same length.".to_string(),
    ];
    conditions.extend(feature.special_conditions.iter().cloned());
    for (i, condition) in conditions.iter().enumerate() {
        prompt.push_str(&format!("    {}. {}\n", i + 1, condition));
    }
    prompt.push_str("Use Format:\n");
    prompt.push_str(&format!("    {}: [sentence]\n", capitalize(&feature.positive_prompt)));
    prompt.push_str(&format!("    {}: [sentence]\n", capitalize(&feature.negative_prompt)));
    prompt.push_str("Your response should only consist of the two sentences, without quotation marks.");
    prompt
}

/// Extracts the labeled pair from a model response, normalized so the
/// positive-feature sentence comes first regardless of label order.
pub fn parse_pair_response(text: &str, feature: &StyleFeature) -> Result<(String, String)> {
    let extract = |label: &str| -> Result<String> {
        let prefix_lower = format!("{}:", label.to_lowercase());
        let mut found: Option<String> = None;
        for line in text.lines() {
            let trimmed = line.trim();
            if trimmed.to_lowercase().starts_with(&prefix_lower) {
                let sentence = trimmed[prefix_lower.len()..]
                    .trim()
                    .trim_matches(|c| c == '"' || c == '\'' || c == '[' || c == ']')
                    .trim()
                    .to_string();
                if found.is_some() {
                    return Err(Error::ResponseParse {
                        message: format!("duplicate `{label}:` line"),
                        raw: text.to_string(),
                    });
                }
                found = Some(sentence);
            }
        }
        match found {
            Some(s) if !s.is_empty() => Ok(s),
            Some(_) => Err(Error::ResponseParse {
                message: format!("empty sentence after `{label}:`"),
                raw: text.to_string(),
            }),
            None => Err(Error::ResponseParse {
                message: format!("missing `{label}:` line"),
                raw: text.to_string(),
            }),
        }
    };
    let positive = extract(&feature.positive_prompt)?;
    let negative = extract(&feature.negative_prompt)?;
    Ok((positive, negative))
}
