//! Deterministic synthetic corpus generator, the desk-scale stand-in for a
//! private hospital archive.
//!
//! Each report mixes filler sentences over a pseudoword vocabulary with
//! per-class finding sentences, possibly in negated form ("no evidence of
//! ..."). The ground-truth label for a class is 1 iff a non-negated finding
//! sentence for it was emitted, and `recover_labels` re-derives labels from
//! the text alone using the same phrase tables, so generated data is
//! self-checking. Phrase tables live in a versioned data file.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CorpusError, LabeledReport, Result};

const PHRASE_DATA: &str = include_str!("../../data/synthetic_phrases.json");

#[derive(Debug, Clone, Deserialize)]
pub struct PhraseTables {
    pub version: u32,
    pub positive_templates: Vec<String>,
    pub negated_templates: Vec<String>,
    pub filler_templates: Vec<String>,
}

impl PhraseTables {
    pub fn bundled() -> PhraseTables {
        let tables: PhraseTables =
            serde_json::from_str(PHRASE_DATA).expect("bundled phrase tables parse");
        assert_eq!(tables.version, 1, "unexpected phrase table version");
        tables
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassSpec {
    pub name: String,
    /// Target probability that the class label is 1.
    pub prevalence: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub classes: Vec<ClassSpec>,
    /// Probability that a mentioned finding is emitted in negated form.
    pub negation_rate: f64,
    /// Number of distinct filler pseudowords.
    pub vocab_size: usize,
    pub n_reports: usize,
    pub seed: u64,
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        if self.n_reports == 0 {
            return Err(CorpusError::Invalid("n_reports must be positive".into()));
        }
        if self.classes.is_empty() {
            return Err(CorpusError::Invalid("at least one class required".into()));
        }
        for c in &self.classes {
            if !(0.0..=1.0).contains(&c.prevalence) {
                return Err(CorpusError::Invalid(format!(
                    "prevalence for '{}' must be in [0,1], got {}",
                    c.name, c.prevalence
                )));
            }
            if c.name.is_empty() || !c.name.chars().all(|ch| ch.is_ascii_lowercase()) {
                return Err(CorpusError::Invalid(format!(
                    "class name '{}' must be non-empty ascii lowercase",
                    c.name
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.negation_rate) {
            return Err(CorpusError::Invalid(format!(
                "negation_rate must be in [0,1], got {}",
                self.negation_rate
            )));
        }
        if self.vocab_size < 10 {
            return Err(CorpusError::Invalid("vocab_size must be >= 10".into()));
        }
        Ok(())
    }
}

/// Distinct pseudowords built from syllables; never collides with template
/// words or sensible class names.
pub fn filler_vocabulary(size: usize) -> Vec<String> {
    const SYL: [&str; 18] = [
        "ba", "de", "ki", "lo", "mu", "ne", "po", "ra", "su", "ti", "va", "zo", "fe", "gu", "hi",
        "ja", "ce", "wy",
    ];
    let mut words = Vec::with_capacity(size);
    let mut i = 0usize;
    while words.len() < size {
        let mut w = String::new();
        let mut n = i;
        // at least two syllables so fillers never equal short template words
        w.push_str(SYL[n % SYL.len()]);
        n /= SYL.len();
        w.push_str(SYL[n % SYL.len()]);
        n /= SYL.len();
        if n > 0 {
            w.push_str(SYL[(n - 1) % SYL.len()]);
        }
        words.push(w);
        i += 1;
    }
    words
}

pub fn generate_synthetic_corpus(cfg: &SynthConfig) -> Result<Vec<LabeledReport>> {
    cfg.validate()?;
    let tables = PhraseTables::bundled();
    let fillers = filler_vocabulary(cfg.vocab_size);
    for c in &cfg.classes {
        if fillers.iter().any(|w| w == &c.name) {
            return Err(CorpusError::Invalid(format!(
                "class name '{}' collides with the filler vocabulary",
                c.name
            )));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::with_capacity(cfg.n_reports);
    for i in 0..cfg.n_reports {
        let mut sentences: Vec<String> = Vec::new();
        let mut labels = BTreeMap::new();
        for class in &cfg.classes {
            let mention_prob = if cfg.negation_rate < 1.0 {
                (class.prevalence / (1.0 - cfg.negation_rate)).min(1.0)
            } else {
                class.prevalence
            };
            let mentioned = rng.gen::<f64>() < mention_prob;
            let mut label = 0u8;
            if mentioned {
                let negated = rng.gen::<f64>() < cfg.negation_rate;
                let template = if negated {
                    tables.negated_templates.choose(&mut rng).unwrap()
                } else {
                    label = 1;
                    tables.positive_templates.choose(&mut rng).unwrap()
                };
                sentences.push(template.replace("{finding}", &class.name));
            }
            labels.insert(class.name.clone(), label);
        }
        let n_filler = rng.gen_range(2..=4);
        for _ in 0..n_filler {
            let template = tables.filler_templates.choose(&mut rng).unwrap().clone();
            let mut sentence = template;
            while let Some(pos) = sentence.find("{w}") {
                // squared uniform draw skews toward low indices (Zipf-ish)
                let u: f64 = rng.gen();
                let idx = ((u * u) * cfg.vocab_size as f64) as usize;
                sentence.replace_range(pos..pos + 3, &fillers[idx.min(cfg.vocab_size - 1)]);
            }
            sentences.push(sentence);
        }
        sentences.shuffle(&mut rng);

        let text = sentences
            .iter()
            .map(|s| capitalize_first(s))
            .collect::<Vec<_>>()
            .join(". ")
            + ".";
        out.push(LabeledReport {
            id: format!("synth-{i:05}"),
            text,
            labels,
        });
    }
    Ok(out)
}

/// Re-derives labels from report text using only the phrase tables: a class
/// is positive iff its name occurs more often than negated-template
/// expansions account for.
pub fn recover_labels(text: &str, class_names: &[String]) -> BTreeMap<String, u8> {
    let tables = PhraseTables::bundled();
    let words = normalize_words(text);
    let mut out = BTreeMap::new();
    for name in class_names {
        let total = count_window(&words, &[name.clone()]);
        let negated: usize = tables
            .negated_templates
            .iter()
            .map(|t| {
                let expanded: Vec<String> = normalize_words(&t.replace("{finding}", name));
                count_window(&words, &expanded)
            })
            .sum();
        out.insert(name.clone(), u8::from(total > negated));
    }
    out
}

fn normalize_words(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(|w| w.to_string())
        .collect()
}

fn count_window(words: &[String], pattern: &[String]) -> usize {
    if pattern.is_empty() || words.len() < pattern.len() {
        return 0;
    }
    words
        .windows(pattern.len())
        .filter(|w| w.iter().zip(pattern).all(|(a, b)| a == b))
        .count()
}

fn capitalize_first(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}
