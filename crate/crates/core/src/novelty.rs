//! Sentence-level novelty filter: every generated sentence is compared with
//! the corpus by character edit distance and kept only when it is more than
//! `threshold` dissimilar to its closest corpus sentence.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{detokenize_words, words, CorpusStore};
use crate::decoder::GeneratedSample;

pub const DEFAULT_THRESHOLD: f64 = 0.30;

/// Lowercase words ending in `.` that do not end a sentence.
const ABBREVIATIONS: &[&str] = &[
    "mr.", "mrs.", "ms.", "dr.", "st.", "vs.", "jr.", "sr.", "u.s.", "u.k.", "u.n.", "d.c.", "gov.", "sen.", "rep.",
    "gen.", "lt.", "col.", "sgt.", "prof.", "e.g.", "i.e.",
];

#[derive(Debug, Error)]
pub enum NoveltyError {
    #[error("corpus index is empty")]
    EmptyIndex,
    #[error("threshold must lie in (0, 1), got {0}")]
    InvalidThreshold(f64),
    #[error("malformed report: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Corpus,
    Generated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sentence {
    pub text: String,
    pub origin: Origin,
    pub parent_id: String,
    pub index: usize,
    /// A blank line follows this sentence in its parent text.
    #[serde(default)]
    pub ends_paragraph: bool,
}

impl Sentence {
    /// `{parent_id}:{index}`, unique within one pool or corpus.
    pub fn id(&self) -> String {
        format!("{}:{}", self.parent_id, self.index)
    }
}

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

fn is_closer(c: char) -> bool {
    matches!(c, '"' | '\'' | ')')
}

fn suppresses_split(word: &str) -> bool {
    let w = word.trim_start_matches(['"', '\'', '(']).to_lowercase();
    if ABBREVIATIONS.contains(&w.as_str()) {
        return true;
    }
    // single-letter initials such as the "u." of a tokenized "u. s."
    let mut cs = w.chars();
    matches!((cs.next(), cs.next(), cs.next()), (Some(c), Some('.'), None) if c.is_alphabetic())
}

fn split_paragraph(par: &str, out: &mut Vec<String>) {
    let chars: Vec<(usize, char)> = par.char_indices().collect();
    let mut start = 0;
    let mut i = 0;
    while i < chars.len() {
        if !is_terminator(chars[i].1) {
            i += 1;
            continue;
        }
        let mut j = i + 1;
        while j < chars.len() && (is_terminator(chars[j].1) || is_closer(chars[j].1)) {
            j += 1;
        }
        let end = chars.get(j).map_or(par.len(), |&(b, _)| b);
        if j < chars.len() && !chars[j].1.is_whitespace() {
            i = j;
            continue;
        }
        let word_start = par[..chars[i].0].rfind(char::is_whitespace).map_or(0, |p| p + 1);
        let word = &par[word_start..chars[i].0 + 1];
        if chars[i].1 == '.' && j == i + 1 && suppresses_split(word) {
            i = j;
            continue;
        }
        push_sentence(par[start..end].trim(), out);
        start = end;
        i = j;
    }
    push_sentence(par[start..].trim(), out);
}

/// Drops pieces without a letter or digit, such as a stray ".".
fn push_sentence(s: &str, out: &mut Vec<String>) {
    if s.chars().any(char::is_alphanumeric) {
        out.push(s.to_string());
    }
}

/// Splits on `.`, `!` or `?` (plus trailing quotes and brackets) followed by
/// whitespace or the end of the text. Known abbreviations and single-letter
/// initials do not split; blank lines always do. Pieces with no letter or
/// digit are dropped.
pub fn split_sentences(text: &str, origin: Origin, parent_id: &str) -> Vec<Sentence> {
    let mut out = Vec::new();
    let mut para = String::new();
    let flush = |para: &mut String, out: &mut Vec<Sentence>| {
        let mut texts = Vec::new();
        split_paragraph(para, &mut texts);
        let n = texts.len();
        for (k, t) in texts.into_iter().enumerate() {
            out.push(Sentence {
                text: t,
                origin,
                parent_id: parent_id.to_string(),
                index: out.len(),
                ends_paragraph: k + 1 == n,
            });
        }
        para.clear();
    };
    for line in text.lines() {
        if line.trim().is_empty() {
            flush(&mut para, &mut out);
        } else {
            if !para.is_empty() {
                para.push(' ');
            }
            para.push_str(line.trim());
        }
    }
    flush(&mut para, &mut out);
    out
}

/// Canonical form used for comparison: lowercased tokens re-joined by the
/// detokenizer, so corpus text and model output are spelled alike.
pub fn normalize(text: &str) -> String {
    detokenize_words(&words(text))
}

/// Unit-cost edit distance over chars. With `cutoff = Some(k)` only a
/// diagonal band of width at most `2k + 1` is filled and `None` means "more
/// than k".
pub fn levenshtein(a: &str, b: &str, cutoff: Option<usize>) -> Option<usize> {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    levenshtein_chars(&a, &b, cutoff)
}

pub fn levenshtein_chars(a: &[char], b: &[char], cutoff: Option<usize>) -> Option<usize> {
    let k = cutoff.unwrap_or(a.len().max(b.len()));
    if a.len().abs_diff(b.len()) > k {
        return None;
    }
    let prefix = a.iter().zip(b).take_while(|(x, y)| x == y).count();
    let (a, b) = (&a[prefix..], &b[prefix..]);
    let suffix = a.iter().rev().zip(b.iter().rev()).take_while(|(x, y)| x == y).count();
    let (a, b) = (&a[..a.len() - suffix], &b[..b.len() - suffix]);
    let (n, m) = (a.len(), b.len());
    if n == 0 || m == 0 {
        return Some(n.max(m));
    }
    // a path through cell (i, j) costs at least |j - i| to get there and
    // |(m - j) - (n - i)| to finish, so only diagonals j - i in
    // [min(0, m - n) - slack, max(0, m - n) + slack] can stay within k
    let k = k.min(n.max(m));
    let shift = m as isize - n as isize;
    let slack = ((k - shift.unsigned_abs()) / 2) as isize;
    let (dlo, dhi) = (shift.min(0) - slack, shift.max(0) + slack);
    let big = k as u32 + 1;
    let mut prev: Vec<u32> = (0..=m)
        .map(|j| if j as isize <= dhi { j as u32 } else { big })
        .collect();
    let mut cur = vec![big; m + 1];
    for i in 1..=n {
        let lo = (i as isize + dlo).max(0) as usize;
        let hi = ((i as isize + dhi) as usize).min(m);
        let mut reach = big;
        let first = if lo == 0 {
            cur[0] = i as u32;
            reach = (i as u32 + (n - i).abs_diff(m) as u32).min(big);
            1
        } else {
            cur[lo - 1] = big;
            lo
        };
        let ai = a[i - 1];
        for j in first..=hi {
            let sub = prev[j - 1] + u32::from(ai != b[j - 1]);
            let v = sub.min(prev[j] + 1).min(cur[j - 1] + 1).min(big);
            cur[j] = v;
            reach = reach.min(v + (n - i).abs_diff(m - j) as u32);
        }
        if hi < m {
            cur[hi + 1] = big;
        }
        if reach > k as u32 {
            return None;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    (prev[m] <= k as u32).then_some(prev[m] as usize)
}

const BUCKETS: usize = 64;

#[derive(Debug, Clone)]
struct Histogram([u16; BUCKETS]);

impl Histogram {
    fn of(chars: &[char]) -> Self {
        let mut h = [0u16; BUCKETS];
        for &c in chars {
            let b = c as usize % BUCKETS;
            h[b] = h[b].saturating_add(1);
        }
        Histogram(h)
    }

    /// Every edit moves at most one char into and one out of a bucket, so the
    /// larger of the surplus and deficit totals bounds the distance from below.
    fn lower_bound(&self, other: &Histogram) -> usize {
        let (mut over, mut under) = (0usize, 0usize);
        for (&x, &y) in self.0.iter().zip(&other.0) {
            if x > y {
                over += usize::from(x - y);
            } else {
                under += usize::from(y - x);
            }
        }
        over.max(under)
    }
}

struct Entry {
    sentence: Sentence,
    chars: Vec<char>,
    hist: Histogram,
}

/// Deduplicated corpus sentences in normalized form, bucketed by length.
/// Sentence ids are positions in first-seen order.
pub struct CorpusIndex {
    entries: Vec<Entry>,
    by_len: Vec<Vec<usize>>,
    exact: HashMap<String, usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Match {
    pub id: usize,
    pub distance: usize,
}

impl CorpusIndex {
    pub fn build(store: &CorpusStore) -> Self {
        Self::from_texts(store.articles().iter().map(|a| (a.id.as_str(), a.body.as_str())))
    }

    /// Index of `(parent id, text)` pairs.
    pub fn from_texts<'a>(texts: impl IntoIterator<Item = (&'a str, &'a str)>) -> Self {
        let mut index = CorpusIndex {
            entries: Vec::new(),
            by_len: Vec::new(),
            exact: HashMap::new(),
        };
        for (parent, text) in texts {
            for s in split_sentences(text, Origin::Corpus, parent) {
                let norm = normalize(&s.text);
                if norm.is_empty() || index.exact.contains_key(&norm) {
                    continue;
                }
                let id = index.entries.len();
                let chars: Vec<char> = norm.chars().collect();
                if index.by_len.len() <= chars.len() {
                    index.by_len.resize(chars.len() + 1, Vec::new());
                }
                index.by_len[chars.len()].push(id);
                index.entries.push(Entry {
                    sentence: s,
                    hist: Histogram::of(&chars),
                    chars,
                });
                index.exact.insert(norm, id);
            }
        }
        index
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn sentence(&self, id: usize) -> &Sentence {
        &self.entries[id].sentence
    }

    /// Normalized text of sentence `id`.
    pub fn text(&self, id: usize) -> String {
        self.entries[id].chars.iter().collect()
    }

    /// Exact closest corpus sentence to `text`, ties going to the lowest id.
    pub fn closest_match(&self, text: &str) -> Result<Match, NoveltyError> {
        if self.is_empty() {
            return Err(NoveltyError::EmptyIndex);
        }
        let q: Vec<char> = normalize(text).chars().collect();
        Ok(self.search(&q, None, None).expect("unbounded search always matches"))
    }

    /// Candidates are visited by growing length difference. A candidate must
    /// beat the best so far, or tie it with a lower id, so its cutoff is
    /// `best - 1` or `best`. `bound` caps every cutoff; a match within
    /// `stop_at` ends the scan early.
    fn search(&self, q: &[char], bound: Option<usize>, stop_at: Option<usize>) -> Option<Match> {
        let norm: String = q.iter().collect();
        if let Some(&id) = self.exact.get(&norm) {
            return Some(Match { id, distance: 0 });
        }
        let hist = Histogram::of(q);
        let len = q.len();
        let max_len = self.by_len.len().saturating_sub(1).max(len);
        let mut best: Option<Match> = None;
        let limit = |best: &Option<Match>| best.map_or(bound.unwrap_or(usize::MAX), |b| b.distance);
        for d in 0..=max_len {
            if d > limit(&best) {
                break;
            }
            let lens = [len.checked_sub(d), if d == 0 { None } else { Some(len + d) }];
            for l in lens.into_iter().flatten() {
                let Some(bucket) = self.by_len.get(l) else { continue };
                for &id in bucket {
                    let cutoff = match best {
                        None => bound.unwrap_or(usize::MAX),
                        Some(b) if id < b.id => b.distance,
                        Some(b) if b.distance == 0 => continue,
                        Some(b) => b.distance - 1,
                    };
                    let e = &self.entries[id];
                    if d > cutoff || hist.lower_bound(&e.hist) > cutoff {
                        continue;
                    }
                    let cutoff = (cutoff != usize::MAX).then_some(cutoff);
                    if let Some(distance) = levenshtein_chars(q, &e.chars, cutoff) {
                        best = Some(Match { id, distance });
                        if stop_at.is_some_and(|s| distance <= s) {
                            return best;
                        }
                    }
                }
            }
        }
        best
    }
}

/// `distance / max(len a, len b)` in chars.
pub fn dissimilarity(distance: usize, len_a: usize, len_b: usize) -> f64 {
    let m = len_a.max(len_b);
    if m == 0 {
        0.0
    } else {
        distance as f64 / m as f64
    }
}

/// Largest `d` for which `f(d) <= threshold`, for `f` non-decreasing on `0..=n`.
fn largest_within(n: usize, threshold: f64, f: impl Fn(usize) -> f64) -> Option<usize> {
    if f(0) > threshold {
        return None;
    }
    let (mut lo, mut hi) = (0, n);
    while lo < hi {
        let mid = lo + (hi - lo).div_ceil(2);
        if f(mid) <= threshold {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    Some(lo)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Keep,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoveltyReport {
    pub sentence: Sentence,
    /// Index id of the reported corpus sentence.
    pub closest_match: Option<usize>,
    /// `{article}:{index}` of the reported corpus sentence.
    pub closest_source: Option<String>,
    pub distance: Option<usize>,
    /// Of the reported match; without one, a lower bound for the true closest.
    pub dissimilarity: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ScanMode {
    /// Stop at the first match that settles a rejection, and skip candidates
    /// too far away to change a keep.
    #[default]
    Pruned,
    /// Always find the exact closest match.
    Exact,
}

#[derive(Debug, Clone, Default)]
pub struct FilterOutcome {
    pub reports: Vec<NoveltyReport>,
    pub kept: Vec<Sentence>,
}

impl FilterOutcome {
    pub fn summary(&self) -> Summary {
        let mut s = Summary::default();
        for r in &self.reports {
            match r.verdict {
                Verdict::Keep => s.kept += 1,
                Verdict::Reject => s.rejected += 1,
            }
            let bin = ((r.dissimilarity * 10.0) as usize).min(9);
            s.histogram[bin] += 1;
        }
        s
    }
}

/// Report counts plus a 10-bin histogram of reported dissimilarity.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub kept: usize,
    pub rejected: usize,
    pub histogram: [usize; 10],
}

/// Verdict and report for one generated sentence.
pub fn assess(sentence: &Sentence, index: &CorpusIndex, threshold: f64, mode: ScanMode) -> NoveltyReport {
    let q: Vec<char> = normalize(&sentence.text).chars().collect();
    let len = q.len();
    let report = |m: Option<Match>, dis: f64, verdict| NoveltyReport {
        sentence: sentence.clone(),
        closest_match: m.map(|m| m.id),
        closest_source: m.map(|m| index.sentence(m.id).id()),
        distance: m.map(|m| m.distance),
        dissimilarity: dis,
        verdict,
    };
    let found = match mode {
        ScanMode::Exact => index.search(&q, None, None),
        ScanMode::Pruned => {
            // the true closest b rejects only if d_b <= threshold * max(len, len_b)
            // <= threshold * (len + d_b), so nothing beyond `keep_bound` matters;
            // d <= reject_at rejects whichever sentence turns out closest
            let keep_bound = largest_within(len.max(1) * 2, threshold, |d| dissimilarity(d, len + d, 0));
            let reject_at = largest_within(len, threshold, |d| dissimilarity(d, len, 0));
            match keep_bound {
                Some(b) => index.search(&q, Some(b), reject_at),
                None => None,
            }
        }
    };
    match found {
        Some(m) => {
            let dis = dissimilarity(m.distance, len, index.entries[m.id].chars.len());
            let verdict = if dis > threshold { Verdict::Keep } else { Verdict::Reject };
            report(Some(m), dis, verdict)
        }
        None if index.is_empty() => report(None, 1.0, Verdict::Keep),
        None => {
            let floor = largest_within(len.max(1) * 2, threshold, |d| dissimilarity(d, len + d, 0)).map_or(0, |b| b + 1);
            report(None, dissimilarity(floor, len + floor, 0), Verdict::Keep)
        }
    }
}

/// Splits every sample into sentences and judges each against the index.
/// Reports follow pool order; kept sentences keep their relative order.
pub fn filter_pool(
    pool: &[GeneratedSample],
    index: &CorpusIndex,
    threshold: f64,
    mode: ScanMode,
) -> Result<FilterOutcome, NoveltyError> {
    let sentences: Vec<Sentence> = pool
        .iter()
        .flat_map(|s| split_sentences(&s.text, Origin::Generated, &s.id))
        .collect();
    filter_sentences(&sentences, index, threshold, mode)
}

pub fn filter_sentences(
    sentences: &[Sentence],
    index: &CorpusIndex,
    threshold: f64,
    mode: ScanMode,
) -> Result<FilterOutcome, NoveltyError> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(NoveltyError::InvalidThreshold(threshold));
    }
    let reports: Vec<NoveltyReport> = sentences.par_iter().map(|s| assess(s, index, threshold, mode)).collect();
    let kept = reports
        .iter()
        .filter(|r| r.verdict == Verdict::Keep)
        .map(|r| r.sentence.clone())
        .collect();
    Ok(FilterOutcome { reports, kept })
}

/// JSONL of reports followed by one `{"summary": ...}` line.
pub fn report_jsonl(outcome: &FilterOutcome) -> Result<String, NoveltyError> {
    let mut out = crate::io::to_jsonl(&outcome.reports);
    let summary = serde_json::json!({ "summary": outcome.summary() });
    let _ = writeln!(out, "{summary}");
    Ok(out)
}

pub fn write_report(path: &Path, outcome: &FilterOutcome) -> Result<(), NoveltyError> {
    crate::io::write_atomic(path, report_jsonl(outcome)?.as_bytes())?;
    Ok(())
}

pub fn write_kept(path: &Path, kept: &[Sentence]) -> Result<(), NoveltyError> {
    crate::io::write_atomic(path, crate::io::to_jsonl(kept).as_bytes())?;
    Ok(())
}

pub fn read_kept(path: &Path) -> Result<Vec<Sentence>, NoveltyError> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(NoveltyError::from))
        .collect()
}
