use std::collections::BTreeMap;

use super::vocab::{Vocabulary, EOP_TOKEN};
use super::TokenSequence;

/// Characters that always become standalone tokens.
pub const PUNCTUATION: &[char] = &['.', ',', '!', '?', ';', ':', '"', '(', ')', '\''];

pub fn is_punctuation(c: char) -> bool {
    PUNCTUATION.contains(&c)
}

/// Splits text into word tokens while preserving case.
///
/// Whitespace separates words, each punctuation character is its own token and
/// a blank line (paragraph break) yields the paragraph marker token.
pub fn words_cased(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for (i, paragraph) in paragraphs(text).iter().enumerate() {
        if i > 0 && !out.is_empty() {
            out.push(EOP_TOKEN.to_string());
        }
        for raw in paragraph.split_whitespace() {
            let mut word = String::new();
            for c in raw.chars() {
                if is_punctuation(c) {
                    if !word.is_empty() {
                        out.push(std::mem::take(&mut word));
                    }
                    out.push(c.to_string());
                } else {
                    word.push(c);
                }
            }
            if !word.is_empty() {
                out.push(word);
            }
        }
    }
    // a trailing blank paragraph never produces a dangling marker
    while out.last().map(String::as_str) == Some(EOP_TOKEN) {
        out.pop();
    }
    out
}

/// Lowercased word tokens, the form used for vocabularies and tagging.
pub fn words(text: &str) -> Vec<String> {
    words_cased(text)
        .into_iter()
        .map(|w| if w == EOP_TOKEN { w } else { w.to_lowercase() })
        .collect()
}

fn paragraphs(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            if !current.is_empty() {
                out.push(std::mem::take(&mut current));
            }
        } else {
            current.push_str(line);
            current.push('\n');
        }
    }
    if !current.is_empty() {
        out.push(current);
    }
    out
}

/// Tokenizes `text` into ids. Without a vocabulary every word maps to UNK and
/// only the frequency table is meaningful.
pub fn tokenize(text: &str, vocab: Option<&Vocabulary>) -> (TokenSequence, BTreeMap<String, u64>) {
    let tokens = words(text);
    let mut freq = BTreeMap::new();
    let mut ids = Vec::with_capacity(tokens.len());
    for t in &tokens {
        if t != EOP_TOKEN {
            *freq.entry(t.clone()).or_insert(0) += 1;
        }
        ids.push(match vocab {
            Some(v) => v.id(t),
            None => {
                if t == EOP_TOKEN {
                    super::vocab::EOP
                } else {
                    super::vocab::UNK
                }
            }
        });
    }
    (TokenSequence::new(ids), freq)
}

/// Renders token strings as readable text. Punctuation attaches to its
/// neighbours, quotes alternate between opening and closing, sentence starts are
/// capitalized and paragraph markers become blank lines.
pub fn detokenize_words<S: AsRef<str>>(tokens: &[S]) -> String {
    let mut out = String::new();
    let mut quote_open = false;
    let mut attach_next = true;
    let mut capitalize = true;
    for tok in tokens {
        let tok = tok.as_ref();
        if tok == EOP_TOKEN {
            while out.ends_with(' ') {
                out.pop();
            }
            if !out.is_empty() {
                out.push_str("\n\n");
            }
            attach_next = true;
            capitalize = true;
            quote_open = false;
            continue;
        }
        let (space_before, next_attaches) = match tok {
            "." | "," | "!" | "?" | ";" | ":" | ")" => (false, false),
            "(" => (true, true),
            "'" => (false, true),
            "\"" => {
                quote_open = !quote_open;
                if quote_open {
                    (true, true)
                } else {
                    (false, false)
                }
            }
            _ => (true, false),
        };
        if space_before && !attach_next && !out.is_empty() {
            out.push(' ');
        }
        if capitalize && tok.chars().next().is_some_and(char::is_alphanumeric) {
            let mut cs = tok.chars();
            if let Some(first) = cs.next() {
                // only when lowercasing gives the same letter back
                let upper: String = first.to_uppercase().collect();
                if upper.to_lowercase() == first.to_string() {
                    out.push_str(&upper);
                } else {
                    out.push(first);
                }
                out.push_str(cs.as_str());
            }
            capitalize = false;
        } else if tok == "i" {
            out.push('I');
        } else {
            out.push_str(tok);
        }
        if matches!(tok, "." | "!" | "?") {
            capitalize = true;
        }
        attach_next = next_attaches;
    }
    out
}

pub fn detokenize(ids: &[u32], vocab: &Vocabulary) -> String {
    let words: Vec<&str> = ids
        .iter()
        .filter(|&&id| id != super::vocab::BOS && id != super::vocab::EOS)
        .map(|&id| vocab.word(id))
        .collect();
    detokenize_words(&words)
}
