//! Tokenization, vocabulary, the prompt/response dataset and its on-disk
//! format, and automated response filtering.
//!
//! Tokens are whole words: text is split on whitespace and every
//! punctuation or symbol character is detached as a token of its own. Keeping
//! tokens word-aligned lets the linguistic scorers in [`crate::analyzers`]
//! attach one score to each model position.

mod dataset;
mod encode;
mod filter;
mod vocab;

pub use dataset::{load_dataset, save_dataset, DatasetError, PairSource, PromptResponsePair};
pub use encode::{encode_pair, EncodeError, Token, TokenizedExample};
pub use filter::{filter_responses, FilterOutcome, FilterSettings, RejectReason, Rejection};
pub use vocab::{build_vocabulary, Special, Vocabulary, VocabularyError};

/// Word tokenizer configuration shared by every stage that needs to agree on
/// token boundaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Tokenizer {
    pub lowercase: bool,
}

impl Default for Tokenizer {
    fn default() -> Self {
        Self { lowercase: true }
    }
}

impl Tokenizer {
    pub fn tokenize(&self, text: &str) -> Vec<String> {
        tokenize(text, self.lowercase)
    }
}

fn is_detached(c: char) -> bool {
    // Anything that is neither part of a word nor whitespace: ASCII
    // punctuation, unicode punctuation, symbols and emoji.
    !c.is_alphanumeric() && !c.is_whitespace()
}

/// Splits `text` on whitespace and detaches punctuation/symbol characters as
/// single-character tokens. Never yields an empty token.
pub fn tokenize(text: &str, lowercase: bool) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        let mut word = String::new();
        for c in chunk.chars() {
            if is_detached(c) {
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
    if lowercase {
        for tok in &mut out {
            *tok = tok.to_lowercase();
        }
    }
    out
}
