use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::CorpusError;

pub const UNK: u32 = 0;
pub const BOS: u32 = 1;
pub const EOS: u32 = 2;
pub const EOP: u32 = 3;
pub const NUM_SPECIALS: u32 = 4;

pub const UNK_TOKEN: &str = "<unk>";
pub const BOS_TOKEN: &str = "<bos>";
pub const EOS_TOKEN: &str = "<eos>";
pub const EOP_TOKEN: &str = "<eop>";

const SPECIAL_TOKENS: [&str; 4] = [UNK_TOKEN, BOS_TOKEN, EOS_TOKEN, EOP_TOKEN];

pub const DEFAULT_MIN_COUNT: u64 = 3;
pub const DEFAULT_MAX_SIZE: usize = 20_000;

/// Word/id mapping. Ids 0..4 are the fixed special tokens; word `i` of the
/// word list has id `i + 4`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    id_of: HashMap<String, u32>,
    word_of: Vec<String>,
    min_count: u64,
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    specials: BTreeMap<String, u32>,
    words: Vec<String>,
    #[serde(default = "default_min_count")]
    min_count: u64,
}

fn default_min_count() -> u64 {
    1
}

impl Vocabulary {
    /// Builds a vocabulary from an ordered word list (most frequent first).
    pub fn from_words<I, S>(words: I, min_count: u64) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut word_of: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
        let mut id_of: HashMap<String, u32> = word_of
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i as u32))
            .collect();
        for w in words {
            let w = w.into();
            if id_of.contains_key(&w) {
                continue;
            }
            id_of.insert(w.clone(), word_of.len() as u32);
            word_of.push(w);
        }
        Vocabulary {
            id_of,
            word_of,
            min_count,
        }
    }

    /// Keeps the `max_size` most frequent words seen at least `min_count`
    /// times; equal counts are ordered lexicographically.
    pub fn from_frequencies(freq: &BTreeMap<String, u64>, min_count: u64, max_size: usize) -> Self {
        let mut ranked: Vec<(&String, u64)> = freq
            .iter()
            .filter(|(w, &c)| c >= min_count && !SPECIAL_TOKENS.contains(&w.as_str()))
            .map(|(w, &c)| (w, c))
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        ranked.truncate(max_size);
        Self::from_words(ranked.into_iter().map(|(w, _)| w.clone()), min_count)
    }

    pub fn len(&self) -> usize {
        self.word_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.word_of.len() == NUM_SPECIALS as usize
    }

    pub fn min_count(&self) -> u64 {
        self.min_count
    }

    /// Token id for a (lowercase) word; unknown words map to UNK.
    pub fn id(&self, word: &str) -> u32 {
        self.id_of.get(word).copied().unwrap_or(UNK)
    }

    pub fn get(&self, word: &str) -> Option<u32> {
        self.id_of.get(word).copied()
    }

    pub fn word(&self, id: u32) -> &str {
        self.word_of
            .get(id as usize)
            .map(String::as_str)
            .unwrap_or(UNK_TOKEN)
    }

    /// Non-special words in id order.
    pub fn words(&self) -> &[String] {
        &self.word_of[NUM_SPECIALS as usize..]
    }

    pub fn contains_id(&self, id: u32) -> bool {
        (id as usize) < self.word_of.len()
    }

    pub fn to_json(&self) -> String {
        let file = VocabFile {
            specials: SPECIAL_TOKENS
                .iter()
                .enumerate()
                .map(|(i, s)| (s.to_string(), i as u32))
                .collect(),
            words: self.words().to_vec(),
            min_count: self.min_count,
        };
        serde_json::to_string_pretty(&file).expect("vocabulary serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, CorpusError> {
        let file: VocabFile =
            serde_json::from_str(text).map_err(|e| CorpusError::Vocab(e.to_string()))?;
        for (i, s) in SPECIAL_TOKENS.iter().enumerate() {
            if file.specials.get(*s) != Some(&(i as u32)) {
                return Err(CorpusError::Vocab(format!(
                    "special token {s} must have id {i}"
                )));
            }
        }
        let n = file.words.len();
        let vocab = Self::from_words(file.words, file.min_count);
        if vocab.len() != n + NUM_SPECIALS as usize {
            return Err(CorpusError::Vocab("duplicate or special word in word list".into()));
        }
        Ok(vocab)
    }

    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        crate::io::write_atomic(path, self.to_json().as_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }
}
