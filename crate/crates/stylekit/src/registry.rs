//! Built-in registry of the 40 style features across 7 categories, with the
//! positive/negative prompt labels used by the pair-generation template.

use std::collections::HashMap;
use std::path::Path;

use crate::data::StyleFeature;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct FeatureRegistry {
    features: Vec<StyleFeature>,
    by_id: HashMap<String, usize>,
}

impl FeatureRegistry {
    pub fn new(features: Vec<StyleFeature>) -> Result<Self> {
        let mut by_id = HashMap::new();
        for (idx, f) in features.iter().enumerate() {
            if by_id.insert(f.id.clone(), idx).is_some() {
                return Err(Error::InvalidRecord(format!("duplicate feature id `{}`", f.id)));
            }
            if f.positive_prompt == f.negative_prompt {
                return Err(Error::InvalidRecord(format!(
                    "feature `{}`: positive and negative prompts must differ",
                    f.id
                )));
            }
        }
        Ok(FeatureRegistry { features, by_id })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let features: Vec<StyleFeature> = crate::data::read_jsonl(path)?;
        Self::new(features)
    }

    pub fn get(&self, id: &str) -> Option<&StyleFeature> {
        self.by_id.get(id).map(|&i| &self.features[i])
    }

    pub fn features(&self) -> &[StyleFeature] {
        &self.features
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    /// The 40 built-in features.
    pub fn builtin() -> Self {
        fn feature(
            id: &str,
            name: &str,
            category: &str,
            pos: &str,
            neg: &str,
            definition: &str,
            fully_removable: bool,
        ) -> StyleFeature {
            StyleFeature {
                id: id.to_string(),
                name: name.to_string(),
                category: category.to_string(),
                positive_prompt: pos.to_string(),
                negative_prompt: neg.to_string(),
                definition: definition.to_string(),
                fully_removable,
                special_conditions: Vec::new(),
            }
        }

        let features = vec![
            // Syntax
            feature("active-voice", "Usage of Active Voice", "syntax", "active", "passive",
                "The sentence's subject performs the action rather than receiving it.", true),
            feature("complex-sentence-structure", "Complex Sentence Structure", "syntax",
                "complex", "simple",
                "The sentence contains multiple clauses joined by conjunctions or relative pronouns.", true),
            feature("fluent-construction", "Fluency in Sentence Construction", "syntax",
                "fluent", "disfluent",
                "The sentence reads smoothly without false starts, fillers, or broken grammar.", true),
            feature("nominalizations", "Usage of Nominalizations", "syntax",
                "nominalization-heavy", "verb-based",
                "Actions are expressed as nouns (e.g. 'the destruction of') instead of verbs.", true),
            feature("articles", "Usage of Articles", "syntax",
                "article-rich", "article-light",
                "Determiners such as 'a', 'an', and 'the' appear frequently.", false),
            feature("subordinate-clauses", "Usage of Subordinate Clauses", "syntax",
                "subordinated", "coordinated",
                "Dependent clauses introduced by 'because', 'although', 'which', and similar words.", true),
            feature("imperative-mood", "Usage of Imperative Mood", "syntax",
                "imperative", "declarative",
                "The sentence issues a command or instruction rather than stating a fact.", true),
            feature("questions", "Usage of Questions", "syntax",
                "interrogative", "declarative",
                "The sentence is phrased as a question.", true),
            // Lexical
            feature("long-words", "Usage of Long Words", "lexical",
                "long-word", "short-word",
                "Words of many syllables dominate the sentence.", true),
            feature("contractions", "Usage of Contractions", "lexical",
                "contraction-filled", "contraction-free",
                "Shortened forms such as 'don't' and 'it's' are used.", true),
            feature("slang", "Usage of Slang", "lexical",
                "slang-filled", "standard-language",
                "Informal, nonstandard vocabulary appears in the sentence.", true),
            feature("technical-jargon", "Usage of Technical Jargon", "lexical",
                "jargon-heavy", "plain-language",
                "Specialist terminology from a technical field appears in the sentence.", true),
            feature("intensifiers", "Usage of Intensifiers", "lexical",
                "intensified", "neutral",
                "Degree adverbs such as 'very', 'extremely', and 'incredibly' amplify claims.", true),
            feature("hedging", "Usage of Hedging Language", "lexical",
                "hedged", "direct",
                "Softening expressions such as 'perhaps', 'might', and 'somewhat' qualify claims.", true),
            feature("function-words", "Usage of Function Words", "lexical",
                "function-word-rich", "function-word-light",
                "Grammatical words (prepositions, conjunctions, auxiliaries) appear frequently.", false),
            feature("pronouns", "Usage of Pronouns", "lexical",
                "pronoun-rich", "pronoun-light",
                "Personal pronouns stand in for names and noun phrases.", false),
            // Tone
            feature("formal-tone", "Usage of Formal Tone", "tone",
                "formal", "informal",
                "The sentence uses careful, conventional register without colloquialisms.", true),
            feature("polite-tone", "Usage of Polite Tone", "tone",
                "polite", "blunt",
                "The sentence uses courteous phrasing and softened requests.", true),
            feature("assertive-tone", "Usage of Assertive Tone", "tone",
                "assertive", "tentative",
                "Claims are stated confidently without qualification.", true),
            feature("emotional-language", "Usage of Emotional Language", "tone",
                "emotional", "dispassionate",
                "The sentence expresses strong feeling through word choice.", true),
            feature("subjective-language", "Usage of Subjective Language", "tone",
                "subjective", "objective",
                "The sentence expresses opinion or personal judgment rather than fact.", true),
            feature("persuasive-tone", "Usage of Persuasive Tone", "tone",
                "persuasive", "descriptive",
                "The sentence tries to convince the reader of a position.", true),
            // Orthography
            feature("uppercase-only", "Usage of Only Uppercase Letters", "orthography",
                "all-uppercase", "standard-case",
                "Every letter in the sentence is capitalized.", true),
            feature("lowercase-only", "Usage of Only Lowercase Letters", "orthography",
                "all-lowercase", "standard-case",
                "No letter in the sentence is capitalized.", true),
            feature("misspellings", "Presence of Misspelled Words", "orthography",
                "misspelled", "correctly-spelled",
                "Some words are spelled incorrectly.", true),
            feature("numerical-digits", "Usage of Numerical Digits", "orthography",
                "digit-using", "number-word-using",
                "Numbers are written as digits (7) rather than words (seven).", true),
            feature("numerical-substitution", "Usage of Numerical Substitution", "orthography",
                "leetspeak", "standard-spelling",
                "Digits replace letters inside words (e.g. 'gr8', 'l8r').", true),
            feature("abbreviations", "Usage of Abbreviations", "orthography",
                "abbreviated", "fully-spelled",
                "Shortened word forms such as 'approx.' and 'dept.' appear.", true),
            feature("british-spelling", "Usage of British Spelling", "orthography",
                "british-spelled", "american-spelled",
                "Words follow British orthography ('colour', 'organise').", true),
            // Figurative
            feature("humor", "Incorporation of Humor", "figurative",
                "humorous", "serious",
                "The sentence is written to amuse the reader.", true),
            feature("sarcasm", "Usage of Sarcasm", "figurative",
                "sarcastic", "sincere",
                "The sentence means the opposite of its literal reading, mockingly.", true),
            feature("metaphors", "Usage of Metaphors", "figurative",
                "metaphorical", "literal",
                "The sentence describes one thing in terms of another.", true),
            feature("idioms", "Usage of Idioms", "figurative",
                "idiomatic", "literal",
                "Fixed expressions whose meaning is not compositional appear.", true),
            // Punctuation
            feature("exclamation-marks", "Usage of Exclamation Marks", "punctuation",
                "exclamatory", "period-terminated",
                "The sentence ends with or contains exclamation marks.", true),
            feature("ellipses", "Usage of Ellipses", "punctuation",
                "ellipsis-using", "fully-punctuated",
                "Trailing dots (...) mark pauses or omissions.", true),
            feature("oxford-comma", "Usage of Oxford Comma", "punctuation",
                "oxford-comma-using", "oxford-comma-free",
                "A comma precedes the final conjunction in a list.", true),
            feature("parentheticals", "Usage of Parenthetical Asides", "punctuation",
                "parenthetical", "uninterrupted",
                "Asides set off by parentheses or dashes interrupt the sentence.", true),
            // Digital
            feature("emojis", "Usage of Emojis", "digital",
                "emoji-using", "emoji-free",
                "Unicode emoji characters appear in the sentence.", true),
            feature("text-emojis", "Usage of Text Emojis", "digital",
                "text-emoticon-using", "emoticon-free",
                "ASCII emoticons such as :-) and :-D appear in the sentence.", true),
            feature("hashtags", "Usage of Hashtags", "digital",
                "hashtag-using", "hashtag-free",
                "Social-media-style #hashtags appear in the sentence.", true),
        ];
        FeatureRegistry::new(features).expect("builtin registry is valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn builtin_has_40_features_in_7_categories() {
        let reg = FeatureRegistry::builtin();
        assert_eq!(reg.len(), 40);
        let categories: HashSet<&str> =
            reg.features().iter().map(|f| f.category.as_str()).collect();
        assert_eq!(categories.len(), 7);
    }

    #[test]
    fn ids_unique_and_prompts_distinct() {
        let reg = FeatureRegistry::builtin();
        let ids: HashSet<&str> = reg.features().iter().map(|f| f.id.as_str()).collect();
        assert_eq!(ids.len(), 40);
        for f in reg.features() {
            assert_ne!(f.positive_prompt, f.negative_prompt, "{}", f.id);
        }
    }

    #[test]
    fn articles_not_fully_removable() {
        let reg = FeatureRegistry::builtin();
        assert!(!reg.get("articles").unwrap().fully_removable);
    }
}
