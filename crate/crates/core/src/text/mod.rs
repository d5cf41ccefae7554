//! Sentence segmentation and tokenization with character offsets.
//!
//! All offsets in this crate count Unicode scalar values, not bytes.

mod segment;
mod tokenize;

pub use segment::{Segmenter, DEFAULT_ABBREVIATIONS};
pub use tokenize::{tokenize, tokenize_range};

use serde::{Deserialize, Serialize};

/// Half-open character range `[begin, end)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CharSpan {
    pub begin: usize,
    pub end: usize,
}

impl CharSpan {
    pub fn new(begin: usize, end: usize) -> Self {
        Self { begin, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.begin
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.begin
    }

    pub fn contains(&self, other: &CharSpan) -> bool {
        self.begin <= other.begin && other.end <= self.end
    }

    pub fn overlaps(&self, other: &CharSpan) -> bool {
        self.begin < other.end && other.begin < self.end
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub begin: usize,
    pub end: usize,
    /// Lowercased surface; what word-level models look up.
    pub norm: String,
}

impl Token {
    pub fn span(&self) -> CharSpan {
        CharSpan::new(self.begin, self.end)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub report_id: String,
    pub index: usize,
    pub begin: usize,
    pub end: usize,
    pub tokens: Vec<Token>,
}

impl Sentence {
    pub fn span(&self) -> CharSpan {
        CharSpan::new(self.begin, self.end)
    }
}

/// Byte offsets of every character of a string, for O(1) char-range slicing.
#[derive(Clone, Debug)]
pub struct CharIndex<'a> {
    text: &'a str,
    offsets: Vec<usize>,
}

impl<'a> CharIndex<'a> {
    pub fn new(text: &'a str) -> Self {
        let mut offsets: Vec<usize> = text.char_indices().map(|(b, _)| b).collect();
        offsets.push(text.len());
        Self { text, offsets }
    }

    /// Number of characters.
    pub fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn slice(&self, begin: usize, end: usize) -> Option<&'a str> {
        if begin > end || end > self.len() {
            return None;
        }
        Some(&self.text[self.offsets[begin]..self.offsets[end]])
    }
}

/// Slices `text` by character offsets.
pub fn char_slice(text: &str, begin: usize, end: usize) -> Option<&str> {
    CharIndex::new(text).slice(begin, end)
}
