//! Essential-sentence extraction and token-budgeted tiling.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{SourceDocument, Sentence};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TileError {
    #[error("token budget leaves no room for input: context window {context_window}, reserve {prompt_reserve}")]
    EmptyBudget {
        context_window: usize,
        prompt_reserve: usize,
    },
    #[error("document {0} has no text")]
    EmptyDocument(String),
}

/// Token counting behind which a model tokenizer can be substituted.
pub trait Tokenizer: Send + Sync {
    /// Byte spans of each token in `text`.
    fn token_spans(&self, text: &str) -> Vec<(usize, usize)>;

    fn count(&self, text: &str) -> usize {
        self.token_spans(text).len()
    }
}

/// Whitespace-delimited tokens.
#[derive(Debug, Clone, Copy, Default)]
pub struct WhitespaceTokenizer;

impl Tokenizer for WhitespaceTokenizer {
    fn token_spans(&self, text: &str) -> Vec<(usize, usize)> {
        let mut spans = Vec::new();
        let mut start = None;
        for (i, c) in text.char_indices() {
            match (c.is_whitespace(), start) {
                (true, Some(s)) => {
                    spans.push((s, i));
                    start = None;
                }
                (false, None) => start = Some(i),
                _ => {}
            }
        }
        if let Some(s) = start {
            spans.push((s, text.len()));
        }
        spans
    }

    fn count(&self, text: &str) -> usize {
        text.split_whitespace().count()
    }
}

pub fn count_tokens(text: &str) -> usize {
    WhitespaceTokenizer.count(text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TokenBudget {
    pub context_window: usize,
    pub prompt_reserve: usize,
}

impl Default for TokenBudget {
    fn default() -> Self {
        Self {
            context_window: 8192,
            prompt_reserve: 1024,
        }
    }
}

impl TokenBudget {
    /// Tokens available for tile payload.
    pub fn effective(&self) -> Result<usize, TileError> {
        match self.context_window.checked_sub(self.prompt_reserve) {
            Some(n) if n > 0 => Ok(n),
            _ => Err(TileError::EmptyBudget {
                context_window: self.context_window,
                prompt_reserve: self.prompt_reserve,
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tile {
    pub id: String,
    pub entity_id: String,
    pub sentences: Vec<Sentence>,
    pub token_total: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Tiling {
    pub tiles: Vec<Tile>,
    pub warnings: Vec<String>,
}

pub const MIN_SENTENCE_TOKENS: usize = 4;

/// Split a document into sentences and keep the ones that look like content.
///
/// Boundaries are terminal punctuation (optionally followed by closing quotes
/// or brackets) before whitespace, and line breaks. A sentence is dropped if
/// it has fewer than [`MIN_SENTENCE_TOKENS`] tokens, if more than half of its
/// non-space characters are non-alphabetic, or if it repeats an earlier
/// sentence of the same document verbatim.
pub fn extract_essential_sentences(
    doc: &SourceDocument,
    tokenizer: &dyn Tokenizer,
) -> Result<Vec<Sentence>, TileError> {
    if doc.raw_text.trim().is_empty() {
        return Err(TileError::EmptyDocument(doc.url.clone()));
    }
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for (start, end) in sentence_spans(&doc.raw_text) {
        let text = &doc.raw_text[start..end];
        let token_count = tokenizer.count(text);
        if token_count < MIN_SENTENCE_TOKENS || mostly_non_alphabetic(text) {
            continue;
        }
        if !seen.insert(text) {
            continue;
        }
        out.push(Sentence {
            text: text.to_string(),
            doc_url: doc.url.clone(),
            char_offset: start,
            token_count,
        });
    }
    Ok(out)
}

fn mostly_non_alphabetic(text: &str) -> bool {
    let (alpha, total) = text
        .chars()
        .filter(|c| !c.is_whitespace())
        .fold((0usize, 0usize), |(a, t), c| (a + usize::from(c.is_alphabetic()), t + 1));
    (total - alpha) * 2 > total
}

/// Trimmed byte spans of raw sentences.
pub fn sentence_spans(text: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut start = 0;
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut i = 0;
    while i < chars.len() {
        let (pos, c) = chars[i];
        let boundary_end = if c == '\n' {
            Some(pos)
        } else if matches!(c, '.' | '!' | '?') {
            let mut j = i + 1;
            while j < chars.len() && matches!(chars[j].1, '"' | '\'' | ')' | ']' | '\u{201d}' | '\u{2019}') {
                j += 1;
            }
            let at_break = j == chars.len() || chars[j].1.is_whitespace();
            if at_break {
                let end = chars.get(j).map_or(text.len(), |&(p, _)| p);
                i = j.saturating_sub(1);
                Some(end)
            } else {
                None
            }
        } else {
            None
        };
        if let Some(end) = boundary_end {
            push_trimmed(text, start, end, &mut spans);
            start = chars.get(i + 1).map_or(text.len(), |&(p, _)| p);
        }
        i += 1;
    }
    push_trimmed(text, start, text.len(), &mut spans);
    spans
}

fn push_trimmed(text: &str, start: usize, end: usize, spans: &mut Vec<(usize, usize)>) {
    if start >= end {
        return;
    }
    let piece = &text[start..end];
    let lead = piece.len() - piece.trim_start().len();
    let trimmed = piece.trim();
    if !trimmed.is_empty() {
        spans.push((start + lead, start + lead + trimmed.len()));
    }
}

/// Pack sentences into tiles of at most `budget.effective()` tokens, in input
/// order, starting a new tile whenever the next sentence does not fit. A
/// sentence longer than the budget is cut at token boundaries into fragments
/// that concatenate back to the original text.
pub fn tile(
    entity_id: &str,
    sentences: &[Sentence],
    budget: &TokenBudget,
    tokenizer: &dyn Tokenizer,
) -> Result<Tiling, TileError> {
    let limit = budget.effective()?;
    let mut tiling = Tiling::default();
    let mut current: Vec<Sentence> = Vec::new();
    let mut total = 0usize;

    let flush = |current: &mut Vec<Sentence>, total: &mut usize, tiles: &mut Vec<Tile>| {
        if current.is_empty() {
            return;
        }
        tiles.push(Tile {
            id: format!("{entity_id}/t{:04}", tiles.len()),
            entity_id: entity_id.to_string(),
            sentences: std::mem::take(current),
            token_total: std::mem::take(total),
        });
    };

    for s in sentences {
        let pieces = if s.token_count > limit {
            tiling.warnings.push(format!(
                "sentence at {}+{} has {} tokens, split to fit budget {limit}",
                s.doc_url, s.char_offset, s.token_count
            ));
            split_sentence(s, limit, tokenizer)
        } else {
            vec![s.clone()]
        };
        for piece in pieces {
            if total + piece.token_count > limit {
                flush(&mut current, &mut total, &mut tiling.tiles);
            }
            total += piece.token_count;
            current.push(piece);
        }
    }
    flush(&mut current, &mut total, &mut tiling.tiles);
    Ok(tiling)
}

fn split_sentence(s: &Sentence, limit: usize, tokenizer: &dyn Tokenizer) -> Vec<Sentence> {
    let spans = tokenizer.token_spans(&s.text);
    let starts: Vec<usize> = spans.chunks(limit).map(|c| c[0].0).collect();
    let mut out = Vec::with_capacity(starts.len());
    for (i, chunk) in spans.chunks(limit).enumerate() {
        let from = if i == 0 { 0 } else { starts[i] };
        let to = starts.get(i + 1).copied().unwrap_or(s.text.len());
        out.push(Sentence {
            text: s.text[from..to].to_string(),
            doc_url: s.doc_url.clone(),
            char_offset: s.char_offset + from,
            token_count: chunk.len(),
        });
    }
    out
}
