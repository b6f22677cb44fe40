//! Tag extraction and keyword-based topical subsets.
//!
//! Tags are the top TF-IDF tokens of an article (stopwords and punctuation
//! excluded) plus capitalized multiword spans emitted as `joined_lowercase`
//! entity tags. An article joins a topic when any of its tags equals one of the
//! topic's keywords; topics may overlap.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::Path;
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::tokenize::{is_punctuation, words_cased};
use crate::corpus::vocab::EOP_TOKEN;
use crate::corpus::{Article, CorpusStats, CorpusStore};

pub const DEFAULT_K: usize = 12;

const STOPWORDS_TXT: &str = include_str!("../data/stopwords.txt");
const TOPICS_JSON: &str = include_str!("../data/topics.json");

#[derive(Debug, Error)]
pub enum TaggerError {
    #[error("k must be at least 1")]
    InvalidK,
    #[error("article {0:?} has no tags; run tag extraction first")]
    Untagged(String),
    #[error("topic {name:?}: {message}")]
    InvalidTopic { name: String, message: String },
    #[error("no topic specs given")]
    NoTopics,
    #[error("topic file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The shipped stopword list, plus the fragments the tokenizer produces when it
/// splits a contraction at its apostrophe ("don't" gives "don" and "t").
pub fn stopwords() -> &'static HashSet<String> {
    static SET: OnceLock<HashSet<String>> = OnceLock::new();
    SET.get_or_init(|| {
        let mut set = HashSet::new();
        for w in STOPWORDS_TXT.lines().map(str::trim).filter(|w| !w.is_empty()) {
            for part in w.split('\'') {
                if !part.is_empty() {
                    set.insert(part.to_string());
                }
            }
            set.insert(w.to_string());
        }
        set
    })
}

fn is_candidate(token: &str) -> bool {
    token != EOP_TOKEN && !token.chars().all(is_punctuation) && !stopwords().contains(token)
}

/// Text the tagger looks at for an article.
fn article_text(article: &Article) -> String {
    if article.title.trim().is_empty() {
        article.body.clone()
    } else {
        format!("{}\n\n{}", article.title, article.body)
    }
}

/// Inverse document frequencies `ln(N / df)` over a store.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Idf {
    pub documents: u64,
    pub weights: BTreeMap<String, f64>,
}

impl Idf {
    pub fn build(store: &CorpusStore) -> Self {
        Self::from_texts(store.articles().iter().map(article_text))
    }

    pub fn from_texts<I: IntoIterator<Item = String>>(texts: I) -> Self {
        let mut df: HashMap<String, u64> = HashMap::new();
        let mut n = 0u64;
        for text in texts {
            n += 1;
            let uniq: HashSet<String> = words_cased(&text)
                .into_iter()
                .map(|w| w.to_lowercase())
                .collect();
            for w in uniq {
                *df.entry(w).or_insert(0) += 1;
            }
        }
        let weights = df
            .into_iter()
            .map(|(w, d)| (w, (n as f64 / d as f64).ln()))
            .collect();
        Idf { documents: n, weights }
    }

    /// Words never seen in the corpus are weighted as if they occurred in one
    /// document.
    pub fn idf(&self, word: &str) -> f64 {
        match self.weights.get(word) {
            Some(&w) => w,
            None if self.documents > 0 => (self.documents as f64).ln(),
            None => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tag {
    pub tag: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagSet {
    pub article_id: String,
    pub tags: Vec<Tag>,
}

impl TagSet {
    pub fn names(&self) -> Vec<String> {
        self.tags.iter().map(|t| t.tag.clone()).collect()
    }
}

fn rank(scores: HashMap<String, f64>, k: usize) -> Vec<Tag> {
    let mut tags: Vec<Tag> = scores
        .into_iter()
        .map(|(tag, score)| Tag { tag, score })
        .collect();
    tags.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.tag.cmp(&b.tag)));
    tags.truncate(k);
    tags
}

/// Capitalized runs of two or more words, leading stopwords removed.
fn entity_spans(tokens: &[String]) -> Vec<Vec<String>> {
    let mut spans = Vec::new();
    let mut current: Vec<String> = Vec::new();
    let flush = |current: &mut Vec<String>, spans: &mut Vec<Vec<String>>| {
        let lowered: Vec<String> = current.iter().map(|w| w.to_lowercase()).collect();
        let start = lowered
            .iter()
            .position(|w| !stopwords().contains(w))
            .unwrap_or(lowered.len());
        if lowered.len() - start >= 2 {
            spans.push(lowered[start..].to_vec());
        }
        current.clear();
    };
    for tok in tokens {
        let capitalized = tok != EOP_TOKEN && tok.chars().next().is_some_and(char::is_uppercase);
        if capitalized {
            current.push(tok.clone());
        } else {
            flush(&mut current, &mut spans);
        }
    }
    flush(&mut current, &mut spans);
    spans
}

/// Top-`k` TF-IDF tokens of the article plus up to `k` entity tags.
pub fn extract_tags(article: &Article, idf: &Idf, k: usize) -> Result<TagSet, TaggerError> {
    if k < 1 {
        return Err(TaggerError::InvalidK);
    }
    let tokens = words_cased(&article_text(article));

    let mut tf: HashMap<String, u64> = HashMap::new();
    for t in &tokens {
        let lower = t.to_lowercase();
        if is_candidate(&lower) {
            *tf.entry(lower).or_insert(0) += 1;
        }
    }
    let token_scores = tf
        .into_iter()
        .map(|(w, c)| {
            let s = c as f64 * idf.idf(&w);
            (w, s)
        })
        .collect();
    let mut tags = rank(token_scores, k);

    let mut span_freq: HashMap<String, (u64, f64)> = HashMap::new();
    for span in entity_spans(&tokens) {
        let max_idf = span.iter().map(|w| idf.idf(w)).fold(0.0, f64::max);
        let entry = span_freq.entry(span.join("_")).or_insert((0, max_idf));
        entry.0 += 1;
    }
    let entity_scores = span_freq
        .into_iter()
        .map(|(tag, (count, max_idf))| (tag, count as f64 * max_idf))
        .collect();
    for e in rank(entity_scores, k) {
        if !tags.iter().any(|t| t.tag == e.tag) {
            tags.push(e);
        }
    }
    tags.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.tag.cmp(&b.tag)));
    Ok(TagSet {
        article_id: article.id.clone(),
        tags,
    })
}

/// Extracts tags for every article in parallel and stores them on the articles.
/// Tags an article already carried are kept in front of the extracted ones.
pub fn tag_store(store: &mut CorpusStore, idf: &Idf, k: usize) -> Result<Vec<TagSet>, TaggerError> {
    let sets: Vec<TagSet> = store
        .articles()
        .par_iter()
        .map(|a| extract_tags(a, idf, k))
        .collect::<Result<_, _>>()?;
    for (article, set) in store.articles_mut().iter_mut().zip(&sets) {
        let mut tags = article.tags.take().unwrap_or_default();
        for t in &set.tags {
            if !tags.contains(&t.tag) {
                tags.push(t.tag.clone());
            }
        }
        article.tags = Some(tags);
    }
    Ok(sets)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicSpec {
    pub name: String,
    pub keywords: BTreeSet<String>,
}

impl TopicSpec {
    pub fn new<I: IntoIterator<Item = S>, S: Into<String>>(name: &str, keywords: I) -> Self {
        TopicSpec {
            name: name.to_string(),
            keywords: keywords.into_iter().map(Into::into).collect(),
        }
    }

    pub fn validate(&self) -> Result<(), TaggerError> {
        let bad = |message: &str| TaggerError::InvalidTopic {
            name: self.name.clone(),
            message: message.to_string(),
        };
        if self.keywords.is_empty() {
            return Err(bad("no keywords"));
        }
        for k in &self.keywords {
            if k.is_empty() || k.chars().any(char::is_whitespace) || *k != k.to_lowercase() {
                return Err(bad(&format!("keyword {k:?} is not a lowercase single token")));
            }
        }
        Ok(())
    }
}

/// The three topic rows shipped with the crate.
pub fn default_topics() -> Vec<TopicSpec> {
    serde_json::from_str(TOPICS_JSON).expect("bundled topics.json parses")
}

pub fn load_topics(path: &Path) -> Result<Vec<TopicSpec>, TaggerError> {
    let specs: Vec<TopicSpec> = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    for s in &specs {
        s.validate()?;
    }
    Ok(specs)
}

/// Names of the topics whose keyword set intersects `tags`, sorted by name.
pub fn match_topics<S: AsRef<str>>(tags: &[S], specs: &[TopicSpec]) -> Vec<String> {
    let mut names: Vec<String> = specs
        .iter()
        .filter(|spec| tags.iter().any(|t| spec.keywords.contains(t.as_ref())))
        .map(|spec| spec.name.clone())
        .collect();
    names.sort();
    names.dedup();
    names
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicSubset {
    pub topic: String,
    pub article_ids: Vec<String>,
}

/// Materializes one subset per spec (in spec order) and records each article's
/// topics on the article itself.
pub fn build_subsets(
    store: &mut CorpusStore,
    specs: &[TopicSpec],
) -> Result<Vec<(TopicSubset, CorpusStats)>, TaggerError> {
    if specs.is_empty() {
        return Err(TaggerError::NoTopics);
    }
    for s in specs {
        s.validate()?;
    }
    if let Some(a) = store.articles().iter().find(|a| a.tags.is_none()) {
        return Err(TaggerError::Untagged(a.id.clone()));
    }
    let mut subsets: Vec<(TopicSubset, CorpusStats)> = specs
        .iter()
        .map(|s| {
            (
                TopicSubset {
                    topic: s.name.clone(),
                    article_ids: Vec::new(),
                },
                CorpusStats::default(),
            )
        })
        .collect();
    for article in store.articles_mut() {
        let tags = article.tags.as_deref().unwrap_or_default();
        let topics = match_topics(tags, specs);
        for (spec, (subset, stats)) in specs.iter().zip(subsets.iter_mut()) {
            if topics.contains(&spec.name) {
                subset.article_ids.push(article.id.clone());
                stats.add(article);
            }
        }
        article.topics = topics;
    }
    Ok(subsets)
}
