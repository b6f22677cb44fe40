//! Article manifests built from kept sentences, their edit rules and the
//! plain-text rendering of a validated manifest.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::tokenize::is_punctuation;
use crate::corpus::{words, words_cased};
use crate::novelty::Sentence;

pub const EXCERPT_MIN_WORDS: usize = 50;
pub const EXCERPT_MAX_WORDS: usize = 100;

/// Rule identifiers carried by violations.
pub mod rule {
    pub const SINGLE_EDIT: &str = "single-edit";
    pub const WORD_COUNT: &str = "word-count";
    pub const EMPTY_EXCERPT: &str = "empty-excerpt";
    pub const BODY_VERBATIM: &str = "body-verbatim";
    pub const EMPTY_BODY: &str = "empty-body";
    pub const TITLE_SOURCE: &str = "title-source";
    pub const UNKNOWN_SENTENCE: &str = "unknown-sentence";
    pub const EDIT_PROVENANCE: &str = "edit-provenance";
    pub const IMAGE_ATTRIBUTION: &str = "image-attribution";

    /// Rules a stored draft may never break, as opposed to ones that only
    /// block publishing.
    pub fn is_hard(id: &str) -> bool {
        matches!(id, SINGLE_EDIT | BODY_VERBATIM | UNKNOWN_SENTENCE | EDIT_PROVENANCE)
    }
}

#[derive(Debug, Error)]
pub enum AssembleError {
    #[error("manifest has {} violation(s)", .0.violations.len())]
    Invalid(EditVerdict),
    #[error("malformed manifest: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One edit applied to a pool sentence. Positions count chars for the char
/// edits and tokens (as split by the tokenizer, case kept) for word edits.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EditOp {
    #[default]
    None,
    DeleteChar {
        position: usize,
    },
    ReplaceChar {
        position: usize,
        with: char,
    },
    DeleteWord {
        position: usize,
    },
    ReplaceWord {
        position: usize,
        with: String,
    },
    DropSentence,
    Reorder,
}

impl EditOp {
    pub fn changes_text(&self) -> bool {
        !matches!(self, EditOp::None | EditOp::DropSentence | EditOp::Reorder)
    }

    /// The edited sentence, or `None` when the position is out of range.
    pub fn apply(&self, original: &str) -> Option<String> {
        match self {
            EditOp::None | EditOp::DropSentence | EditOp::Reorder => Some(original.to_string()),
            EditOp::DeleteChar { position } => {
                let mut cs: Vec<char> = original.chars().collect();
                (*position < cs.len()).then(|| {
                    cs.remove(*position);
                    cs.into_iter().collect()
                })
            }
            EditOp::ReplaceChar { position, with } => {
                let mut cs: Vec<char> = original.chars().collect();
                (*position < cs.len()).then(|| {
                    cs[*position] = *with;
                    cs.into_iter().collect()
                })
            }
            EditOp::DeleteWord { position } => {
                let (start, end) = *token_spans(original).get(*position)?;
                // take the following space with the word, or the preceding one at the end
                let tail = original[end..].len() - original[end..].trim_start().len();
                let (start, end) = if tail > 0 || start == 0 {
                    (start, end + tail)
                } else {
                    let head = original[..start].len() - original[..start].trim_end().len();
                    (start - head, end)
                };
                Some(format!("{}{}", &original[..start], &original[end..]))
            }
            EditOp::ReplaceWord { position, with } => {
                let (start, end) = *token_spans(original).get(*position)?;
                Some(format!("{}{}{}", &original[..start], with, &original[end..]))
            }
        }
    }
}

/// Byte spans of the tokens [`words_cased`] yields for a single line.
pub fn token_spans(text: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut word_start: Option<usize> = None;
    for (i, c) in text.char_indices() {
        if c.is_whitespace() || is_punctuation(c) {
            if let Some(s) = word_start.take() {
                spans.push((s, i));
            }
            if is_punctuation(c) {
                spans.push((i, i + c.len_utf8()));
            }
        } else if word_start.is_none() {
            word_start = Some(i);
        }
    }
    if let Some(s) = word_start {
        spans.push((s, text.len()));
    }
    spans
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub rule: String,
    pub message: String,
    /// `title`, `excerpt`, `excerpt[i]`, `body`, `body[i]` or `image`.
    pub location: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EditVerdict {
    pub valid: bool,
    pub violations: Vec<Violation>,
}

impl EditVerdict {
    pub fn ok() -> Self {
        EditVerdict {
            valid: true,
            violations: Vec::new(),
        }
    }

    pub fn from_violations(violations: Vec<Violation>) -> Self {
        EditVerdict {
            valid: violations.is_empty(),
            violations,
        }
    }

    fn push(&mut self, rule: &str, message: impl Into<String>, location: impl Into<String>) {
        self.violations.push(Violation {
            rule: rule.to_string(),
            message: message.into(),
            location: location.into(),
        });
        self.valid = false;
    }

    pub fn merge(mut self, other: EditVerdict) -> Self {
        self.violations.extend(other.violations);
        self.valid = self.violations.is_empty();
        self
    }

    pub fn has_hard_violation(&self) -> bool {
        self.violations.iter().any(|v| rule::is_hard(&v.rule))
    }

    pub fn rules(&self) -> Vec<&str> {
        self.violations.iter().map(|v| v.rule.as_str()).collect()
    }
}

fn one_deletion<T: PartialEq>(long: &[T], short: &[T]) -> bool {
    if long.len() != short.len() + 1 {
        return false;
    }
    let p = long.iter().zip(short).take_while(|(a, b)| a == b).count();
    long[p + 1..] == short[p..]
}

fn one_substitution<T: PartialEq>(a: &[T], b: &[T]) -> bool {
    a.len() == b.len() && a.iter().zip(b).filter(|(x, y)| x != y).count() == 1
}

/// Whether `edited` is `original` with at most one deleted or replaced char,
/// or one deleted or replaced word token.
pub fn is_single_edit(original: &str, edited: &str) -> bool {
    if original == edited {
        return true;
    }
    let (a, b): (Vec<char>, Vec<char>) = (original.chars().collect(), edited.chars().collect());
    if one_deletion(&a, &b) || one_substitution(&a, &b) {
        return true;
    }
    let (wa, wb) = (words_cased(original), words_cased(edited));
    one_deletion(&wa, &wb) || one_substitution(&wa, &wb)
}

pub fn validate_sentence_edit(original: &str, edited: &str) -> EditVerdict {
    let mut v = EditVerdict::ok();
    if !is_single_edit(original, edited) {
        v.push(
            rule::SINGLE_EDIT,
            "only one letter or one word may be deleted or replaced",
            "sentence",
        );
    }
    v
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub sentence_id: String,
    #[serde(default)]
    pub edit: EditOp,
    /// Edited text; when absent the text is the edit applied to the original.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

impl ManifestEntry {
    pub fn verbatim(sentence_id: impl Into<String>) -> Self {
        ManifestEntry {
            sentence_id: sentence_id.into(),
            edit: EditOp::None,
            text: None,
        }
    }

    pub fn edited(sentence_id: impl Into<String>, edit: EditOp) -> Self {
        ManifestEntry {
            sentence_id: sentence_id.into(),
            edit,
            text: None,
        }
    }

    pub fn is_dropped(&self) -> bool {
        self.edit == EditOp::DropSentence
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageCredit {
    pub url: String,
    pub author: String,
    pub work_title: String,
}

impl ImageCredit {
    pub fn credit_line(&self) -> String {
        format!("\"{}\" by {} via Creative Commons", self.work_title, self.author)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    #[default]
    Draft,
    Validated,
    Published,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ArticleManifest {
    pub id: String,
    pub topic: String,
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub excerpt: Vec<ManifestEntry>,
    #[serde(default)]
    pub body: Vec<ManifestEntry>,
    #[serde(default)]
    pub image: Option<ImageCredit>,
    #[serde(default)]
    pub status: Status,
}

/// Kept sentences addressable by [`Sentence::id`], in their original order.
#[derive(Debug, Clone, Default)]
pub struct SentencePool {
    sentences: Vec<Sentence>,
    by_id: HashMap<String, usize>,
}

impl SentencePool {
    pub fn new(sentences: Vec<Sentence>) -> Self {
        let by_id = sentences.iter().enumerate().map(|(i, s)| (s.id(), i)).collect();
        SentencePool { sentences, by_id }
    }

    pub fn get(&self, id: &str) -> Option<&Sentence> {
        self.by_id.get(id).map(|&i| &self.sentences[i])
    }

    pub fn sentences(&self) -> &[Sentence] {
        &self.sentences
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }
}

/// Resolves an entry to its final text, recording unknown ids and
/// inconsistent edits.
fn entry_text(entry: &ManifestEntry, pool: &SentencePool, loc: &str, verdict: &mut EditVerdict) -> Option<(String, String)> {
    let Some(sentence) = pool.get(&entry.sentence_id) else {
        verdict.push(
            rule::UNKNOWN_SENTENCE,
            format!("sentence {} is not in the kept pool", entry.sentence_id),
            loc,
        );
        return None;
    };
    let original = sentence.text.clone();
    let applied = entry.edit.apply(&original);
    let Some(applied) = applied else {
        verdict.push(rule::EDIT_PROVENANCE, "edit position is outside the sentence", loc);
        return None;
    };
    match &entry.text {
        Some(t) if entry.edit.changes_text() && *t != applied => {
            verdict.push(rule::EDIT_PROVENANCE, "edited text does not match the recorded edit", loc);
            None
        }
        Some(t) => Some((original, t.clone())),
        None => Some((original, applied)),
    }
}

fn whitespace_words(texts: &[String]) -> usize {
    texts.iter().map(|t| t.split_whitespace().count()).sum()
}

/// Final excerpt sentences of a manifest, skipping dropped and unresolvable
/// entries.
pub fn excerpt_texts(manifest: &ArticleManifest, pool: &SentencePool) -> Vec<String> {
    let mut scratch = EditVerdict::ok();
    manifest
        .excerpt
        .iter()
        .filter(|e| !e.is_dropped())
        .filter_map(|e| entry_text(e, pool, "", &mut scratch).map(|(_, t)| t))
        .collect()
}

pub fn validate_excerpt(manifest: &ArticleManifest, pool: &SentencePool) -> EditVerdict {
    let mut v = EditVerdict::ok();
    let mut texts = Vec::new();
    for (i, entry) in manifest.excerpt.iter().enumerate() {
        let loc = format!("excerpt[{i}]");
        let Some((original, text)) = entry_text(entry, pool, &loc, &mut v) else {
            continue;
        };
        if entry.is_dropped() {
            continue;
        }
        if !is_single_edit(&original, &text) {
            v.push(
                rule::SINGLE_EDIT,
                "only one letter or one word may be deleted or replaced",
                loc,
            );
        }
        texts.push(text);
    }
    if texts.is_empty() {
        v.push(rule::EMPTY_EXCERPT, "the excerpt has no sentences", "excerpt");
    }
    let n = whitespace_words(&texts);
    if !(EXCERPT_MIN_WORDS..=EXCERPT_MAX_WORDS).contains(&n) {
        v.push(
            rule::WORD_COUNT,
            format!("excerpt has {n} words, expected {EXCERPT_MIN_WORDS} to {EXCERPT_MAX_WORDS}"),
            "excerpt",
        );
    }
    v
}

pub fn validate_body(manifest: &ArticleManifest, pool: &SentencePool) -> EditVerdict {
    let mut v = EditVerdict::ok();
    let mut kept = 0;
    for (i, entry) in manifest.body.iter().enumerate() {
        let loc = format!("body[{i}]");
        let Some((original, text)) = entry_text(entry, pool, &loc, &mut v) else {
            continue;
        };
        if entry.edit.changes_text() || text != original {
            v.push(rule::BODY_VERBATIM, "body sentences must be used verbatim", loc);
        }
        if !entry.is_dropped() {
            kept += 1;
        }
    }
    if kept == 0 {
        v.push(rule::EMPTY_BODY, "the body has no sentences", "body");
    }
    v
}

fn strip_punctuation_ends(tokens: &[String]) -> &[String] {
    let is_p = |t: &String| t.chars().all(is_punctuation);
    let start = tokens.iter().take_while(|t| is_p(t)).count();
    let end = tokens.len() - tokens[start..].iter().rev().take_while(|t| is_p(t)).count();
    &tokens[start..end]
}

fn contains_run(hay: &[String], needle: &[String]) -> bool {
    hay.windows(needle.len()).any(|w| w == needle)
}

/// The title must be a contiguous, case-insensitive token run of a body or
/// pool sentence.
pub fn validate_title(manifest: &ArticleManifest, pool: &SentencePool) -> EditVerdict {
    let mut v = EditVerdict::ok();
    let tokens = words(&manifest.title);
    let needle = strip_punctuation_ends(&tokens);
    if needle.is_empty() {
        v.push(rule::TITLE_SOURCE, "the title is empty", "title");
        return v;
    }
    let body = manifest.body.iter().filter_map(|e| pool.get(&e.sentence_id)).map(|s| s.text.as_str());
    let found = body
        .chain(pool.sentences().iter().map(|s| s.text.as_str()))
        .any(|s| contains_run(&words(s), needle));
    if !found {
        v.push(
            rule::TITLE_SOURCE,
            "the title must be taken from a body or pool sentence",
            "title",
        );
    }
    v
}

pub fn validate_image(manifest: &ArticleManifest) -> EditVerdict {
    let mut v = EditVerdict::ok();
    if let Some(img) = &manifest.image {
        for (field, value) in [("url", &img.url), ("author", &img.author), ("work_title", &img.work_title)] {
            if value.trim().is_empty() {
                v.push(rule::IMAGE_ATTRIBUTION, format!("image {field} is required"), "image");
            }
        }
    }
    v
}

/// Every rule at once: title, excerpt, body and image.
pub fn validate_manifest(manifest: &ArticleManifest, pool: &SentencePool) -> EditVerdict {
    validate_title(manifest, pool)
        .merge(validate_excerpt(manifest, pool))
        .merge(validate_body(manifest, pool))
        .merge(validate_image(manifest))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub section: String,
    pub sentence_id: String,
    pub edit: EditOp,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssembledArticle {
    pub id: String,
    pub topic: String,
    pub title: String,
    pub excerpt: String,
    pub body: Vec<String>,
    pub image: Option<ImageCredit>,
    pub provenance: Vec<Provenance>,
}

impl AssembledArticle {
    /// Title, excerpt, body paragraphs and credit line separated by blank lines.
    pub fn to_text(&self) -> String {
        let mut parts = vec![self.title.clone(), self.excerpt.clone()];
        parts.extend(self.body.iter().cloned());
        if let Some(img) = &self.image {
            parts.push(format!("Image: {}", img.credit_line()));
        }
        parts.join("\n\n") + "\n"
    }

    pub fn body_text(&self) -> String {
        self.body.join("\n\n")
    }

    /// Whitespace-separated words of the whole article.
    pub fn word_count(&self) -> usize {
        [&self.title, &self.excerpt]
            .into_iter()
            .chain(&self.body)
            .map(|t| t.split_whitespace().count())
            .sum()
    }
}

/// Renders a manifest that passes [`validate_manifest`].
pub fn render_article(manifest: &ArticleManifest, pool: &SentencePool) -> Result<AssembledArticle, AssembleError> {
    let verdict = validate_manifest(manifest, pool);
    if !verdict.valid {
        return Err(AssembleError::Invalid(verdict));
    }
    let mut provenance = Vec::new();
    let mut scratch = EditVerdict::ok();
    let mut excerpt = Vec::new();
    for e in manifest.excerpt.iter().filter(|e| !e.is_dropped()) {
        if let Some((_, text)) = entry_text(e, pool, "", &mut scratch) {
            provenance.push(Provenance {
                section: "excerpt".into(),
                sentence_id: e.sentence_id.clone(),
                edit: e.edit.clone(),
                text: text.clone(),
            });
            excerpt.push(text);
        }
    }
    let mut body = Vec::new();
    let mut paragraph: Vec<String> = Vec::new();
    for e in manifest.body.iter().filter(|e| !e.is_dropped()) {
        let Some(s) = pool.get(&e.sentence_id) else { continue };
        provenance.push(Provenance {
            section: "body".into(),
            sentence_id: e.sentence_id.clone(),
            edit: e.edit.clone(),
            text: s.text.clone(),
        });
        paragraph.push(s.text.clone());
        if s.ends_paragraph {
            body.push(paragraph.join(" "));
            paragraph.clear();
        }
    }
    if !paragraph.is_empty() {
        body.push(paragraph.join(" "));
    }
    Ok(AssembledArticle {
        id: manifest.id.clone(),
        topic: manifest.topic.clone(),
        title: manifest.title.trim().to_string(),
        excerpt: excerpt.join(" "),
        body,
        image: manifest.image.clone(),
        provenance,
    })
}

pub fn load_manifest(path: &std::path::Path) -> Result<ArticleManifest, AssembleError> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

pub fn save_manifest(path: &std::path::Path, manifest: &ArticleManifest) -> Result<(), AssembleError> {
    let json = serde_json::to_string_pretty(manifest)?;
    crate::io::write_atomic(path, json.as_bytes())?;
    Ok(())
}
