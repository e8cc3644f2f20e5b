//! Frequency-cutoff vocabulary with reserved special tokens.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::tokenize::{BOS, EOS, PAD, REP, UNK, UP};
use super::{CorpusError, Result};

pub const PAD_IDX: usize = 0;
pub const UNK_IDX: usize = 1;
pub const BOS_IDX: usize = 2;
pub const EOS_IDX: usize = 3;
pub const UP_IDX: usize = 4;
pub const REP_IDX: usize = 5;
pub const NUM_SPECIALS: usize = 6;

const SPECIALS: [&str; NUM_SPECIALS] = [PAD, UNK, BOS, EOS, UP, REP];
const VOCAB_FORMAT_VERSION: u32 = 1;

/// Token <-> index bijection. Kept tokens occupy indices >= 6, assigned by
/// descending corpus frequency with lexicographic tie-break; anything else
/// maps to `<unk>`.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    token_to_index: HashMap<String, usize>,
    index_to_token: Vec<String>,
    frequency: Vec<u64>,
    min_count: u64,
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    version: u32,
    specials: Vec<String>,
    min_count: u64,
    /// Kept tokens in index order (index 6 first).
    tokens: Vec<String>,
    /// Corpus frequency aligned with `tokens`.
    frequencies: Vec<u64>,
}

impl Vocabulary {
    /// Builds from tokenized documents, keeping tokens with corpus frequency
    /// >= `min_count`. Special marker tokens are always present and excluded
    /// from the frequency cutoff.
    pub fn build<S: AsRef<str>>(documents: &[Vec<S>], min_count: u64) -> Result<Vocabulary> {
        if documents.is_empty() {
            return Err(CorpusError::EmptyCorpus);
        }
        assert!(min_count >= 1, "min_count must be >= 1");
        let mut counts: HashMap<&str, u64> = HashMap::new();
        for doc in documents {
            for tok in doc {
                let t = tok.as_ref();
                if SPECIALS.contains(&t) {
                    continue;
                }
                *counts.entry(t).or_insert(0) += 1;
            }
        }
        let mut kept: Vec<(&str, u64)> = counts
            .into_iter()
            .filter(|&(_, c)| c >= min_count)
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));

        let mut index_to_token: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        let mut frequency = vec![0u64; NUM_SPECIALS];
        for (tok, count) in kept {
            index_to_token.push(tok.to_string());
            frequency.push(count);
        }
        let token_to_index = index_to_token
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Ok(Vocabulary {
            token_to_index,
            index_to_token,
            frequency,
            min_count,
        })
    }

    pub fn len(&self) -> usize {
        self.index_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn min_count(&self) -> u64 {
        self.min_count
    }

    /// Index of a token, `<unk>` for anything not kept.
    pub fn index_of(&self, token: &str) -> usize {
        self.token_to_index.get(token).copied().unwrap_or(UNK_IDX)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.token_to_index.contains_key(token)
    }

    pub fn token_at(&self, index: usize) -> &str {
        &self.index_to_token[index]
    }

    pub fn frequency_of(&self, token: &str) -> Option<u64> {
        self.token_to_index.get(token).map(|&i| self.frequency[i])
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.index_of(t.as_ref())).collect()
    }

    pub fn decode(&self, indices: &[usize]) -> Vec<String> {
        indices
            .iter()
            .map(|&i| self.index_to_token[i].clone())
            .collect()
    }

    pub fn to_json(&self) -> String {
        let file = VocabFile {
            version: VOCAB_FORMAT_VERSION,
            specials: SPECIALS.iter().map(|s| s.to_string()).collect(),
            min_count: self.min_count,
            tokens: self.index_to_token[NUM_SPECIALS..].to_vec(),
            frequencies: self.frequency[NUM_SPECIALS..].to_vec(),
        };
        serde_json::to_string_pretty(&file).expect("vocabulary serializes")
    }

    pub fn from_json(json: &str) -> Result<Vocabulary> {
        let file: VocabFile = serde_json::from_str(json)
            .map_err(|e| CorpusError::Invalid(format!("bad vocabulary file: {e}")))?;
        if file.version != VOCAB_FORMAT_VERSION {
            return Err(CorpusError::Invalid(format!(
                "unsupported vocabulary format version {} (expected {VOCAB_FORMAT_VERSION})",
                file.version
            )));
        }
        if file.tokens.len() != file.frequencies.len() {
            return Err(CorpusError::Invalid(
                "vocabulary token/frequency length mismatch".into(),
            ));
        }
        let mut index_to_token: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        index_to_token.extend(file.tokens);
        let mut frequency = vec![0u64; NUM_SPECIALS];
        frequency.extend(file.frequencies);
        let token_to_index = index_to_token
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Ok(Vocabulary {
            token_to_index,
            index_to_token,
            frequency,
            min_count: file.min_count,
        })
    }

    /// SHA-256 over the canonical serialized form; model containers pin this
    /// so a model can never be silently paired with the wrong vocabulary.
    pub fn hash(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.to_json().as_bytes());
        hex_string(&hasher.finalize())
    }
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
