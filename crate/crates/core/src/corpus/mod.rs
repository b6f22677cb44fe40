//! Article corpora: ingestion, append-only persistence, tokenization and the
//! vocabulary that feeds the language models.

pub mod tokenize;
pub mod vocab;

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use tokenize::{detokenize, detokenize_words, tokenize, words, words_cased};
pub use vocab::Vocabulary;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: malformed record: {message}")]
    Malformed { line: usize, message: String },
    #[error("duplicate article id {0:?}")]
    DuplicateId(String),
    #[error("article {0:?} has an empty body")]
    EmptyBody(String),
    #[error("article id must be non-empty")]
    EmptyId,
    #[error("corpus is empty")]
    EmptyStore,
    #[error("min_count must be at least 1")]
    InvalidMinCount,
    #[error("vocabulary file: {0}")]
    Vocab(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One news item, scraped or generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Article {
    pub id: String,
    pub title: String,
    pub body: String,
    #[serde(default)]
    pub source: String,
    /// `None` until the tagger has run (or tags were supplied by the input).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tags: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub topics: Vec<String>,
}

impl Article {
    pub fn new(id: impl Into<String>, title: impl Into<String>, body: impl Into<String>) -> Self {
        Article {
            id: id.into(),
            title: title.into(),
            body: body.into(),
            source: String::new(),
            tags: None,
            topics: Vec::new(),
        }
    }

    fn check(&self) -> Result<(), CorpusError> {
        if self.id.is_empty() {
            return Err(CorpusError::EmptyId);
        }
        if self.body.trim().is_empty() {
            return Err(CorpusError::EmptyBody(self.id.clone()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub article_count: u64,
    /// Whitespace-delimited words across all bodies.
    pub word_count: u64,
}

impl CorpusStats {
    pub fn add(&mut self, article: &Article) {
        self.article_count += 1;
        self.word_count += article.body.split_whitespace().count() as u64;
    }

    pub fn of<'a>(articles: impl IntoIterator<Item = &'a Article>) -> Self {
        let mut s = CorpusStats::default();
        for a in articles {
            s.add(a);
        }
        s
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub ids: Vec<u32>,
}

impl TokenSequence {
    pub fn new(ids: Vec<u32>) -> Self {
        TokenSequence { ids }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

impl From<Vec<u32>> for TokenSequence {
    fn from(ids: Vec<u32>) -> Self {
        TokenSequence { ids }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputFormat {
    Jsonl,
    PlainDir,
}

/// Articles in insertion order plus an id index, optionally backed by an
/// append-only JSONL file.
#[derive(Debug, Default)]
pub struct CorpusStore {
    articles: Vec<Article>,
    index: HashMap<String, usize>,
    backing: Option<PathBuf>,
}

impl CorpusStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Opens (or creates) a JSONL-backed store. Later inserts are appended.
    pub fn open(path: &Path) -> Result<Self, CorpusError> {
        let mut store = if path.exists() {
            read_jsonl(path)?.0
        } else {
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent)?;
            }
            fs::File::create(path)?;
            CorpusStore::new()
        };
        store.backing = Some(path.to_path_buf());
        Ok(store)
    }

    pub fn insert(&mut self, article: Article) -> Result<(), CorpusError> {
        article.check()?;
        if self.index.contains_key(&article.id) {
            return Err(CorpusError::DuplicateId(article.id));
        }
        if let Some(path) = &self.backing {
            let mut f = fs::OpenOptions::new().append(true).open(path)?;
            let mut line = serde_json::to_string(&article).expect("article serializes");
            line.push('\n');
            f.write_all(line.as_bytes())?;
        }
        self.index.insert(article.id.clone(), self.articles.len());
        self.articles.push(article);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&Article> {
        self.index.get(id).map(|&i| &self.articles[i])
    }

    pub fn articles(&self) -> &[Article] {
        &self.articles
    }

    /// Mutable access for annotation passes (tags, topics). Ids must not change.
    pub fn articles_mut(&mut self) -> &mut [Article] {
        &mut self.articles
    }

    pub fn len(&self) -> usize {
        self.articles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.articles.is_empty()
    }

    pub fn stats(&self) -> CorpusStats {
        CorpusStats::of(&self.articles)
    }

    /// Serializes the whole store as JSONL.
    pub fn to_jsonl(&self) -> String {
        crate::io::to_jsonl(&self.articles)
    }

    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        crate::io::write_atomic(path, self.to_jsonl().as_bytes())?;
        Ok(())
    }

    /// Counts lowercased tokens over all bodies (paragraph markers excluded).
    pub fn frequencies(&self) -> BTreeMap<String, u64> {
        let mut freq = BTreeMap::new();
        for a in &self.articles {
            for (w, c) in tokenize(&a.body, None).1 {
                *freq.entry(w).or_insert(0) += c;
            }
        }
        freq
    }

    /// Concatenated token stream of the given articles, each wrapped in BOS and
    /// EOS so that decoding from BOS starts where an article starts.
    pub fn encode<'a>(&'a self, vocab: &Vocabulary, ids: impl IntoIterator<Item = &'a str>) -> TokenSequence {
        let mut out = Vec::new();
        for id in ids {
            if let Some(a) = self.get(id) {
                out.push(vocab::BOS);
                out.extend(tokenize(&a.body, Some(vocab)).0.ids);
                out.push(vocab::EOS);
            }
        }
        TokenSequence::new(out)
    }
}

/// Reads a corpus and returns the store plus counts accumulated while reading.
pub fn ingest(path: &Path, format: InputFormat) -> Result<(CorpusStore, CorpusStats), CorpusError> {
    match format {
        InputFormat::Jsonl => read_jsonl(path),
        InputFormat::PlainDir => read_plain_dir(path),
    }
}

fn read_jsonl(path: &Path) -> Result<(CorpusStore, CorpusStats), CorpusError> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut store = CorpusStore::new();
    let mut stats = CorpusStats::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let article: Article = serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
            line: i + 1,
            message: e.to_string(),
        })?;
        article.check().map_err(|e| CorpusError::Malformed {
            line: i + 1,
            message: e.to_string(),
        })?;
        stats.add(&article);
        store.insert(article)?;
    }
    Ok((store, stats))
}

/// Every `*.txt` file is one article: the file stem is the id, the first line the
/// title and the remainder the body.
fn read_plain_dir(dir: &Path) -> Result<(CorpusStore, CorpusStats), CorpusError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "txt"))
        .collect();
    paths.sort();
    let mut store = CorpusStore::new();
    let mut stats = CorpusStats::default();
    for p in paths {
        let text = fs::read_to_string(&p)?;
        let (title, body) = match text.split_once('\n') {
            Some((t, b)) => (t.trim().to_string(), b.trim().to_string()),
            None => (String::new(), text.trim().to_string()),
        };
        let id = p
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let mut article = Article::new(id, title, body);
        article.source = p.display().to_string();
        article.check()?;
        stats.add(&article);
        store.insert(article)?;
    }
    Ok((store, stats))
}

/// Vocabulary of the store's bodies.
pub fn build_vocab(store: &CorpusStore, min_count: u64, max_size: usize) -> Result<Vocabulary, CorpusError> {
    if store.is_empty() {
        return Err(CorpusError::EmptyStore);
    }
    if min_count < 1 {
        return Err(CorpusError::InvalidMinCount);
    }
    Ok(Vocabulary::from_frequencies(&store.frequencies(), min_count, max_size))
}
