use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{PromptResponsePair, Special, Tokenizer, Vocabulary};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    /// Original surface. Out-of-vocabulary words keep their text and carry
    /// the `UNK` id.
    pub surface: String,
    pub id: u32,
}

impl Token {
    fn special(s: Special) -> Self {
        Self { surface: s.surface().to_string(), id: s.id() }
    }

    pub fn is_special(&self) -> bool {
        // UNK stands in for a real word, so it is not a structural special.
        matches!(self.id, 0..=2 | 4) && self.surface.starts_with('<')
    }
}

/// `BOS prompt… SEP response… EOS`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedExample {
    pub tokens: Vec<Token>,
    /// BOS, prompt tokens and SEP.
    pub prompt_len: usize,
}

impl TokenizedExample {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn ids(&self) -> Vec<u32> {
        self.tokens.iter().map(|t| t.id).collect()
    }

    /// Positions of BOS, SEP and EOS.
    pub fn structural_positions(&self) -> Vec<usize> {
        self.tokens.iter().enumerate().filter(|(_, t)| t.is_special()).map(|(i, _)| i).collect()
    }

    /// Surfaces of the prompt and response words, without specials.
    pub fn content_surfaces(&self) -> Vec<&str> {
        self.tokens.iter().filter(|t| !t.is_special()).map(|t| t.surface.as_str()).collect()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EncodeError {
    #[error("prompt or response tokenizes to zero tokens")]
    PairTooShort,
    #[error("max_len must be at least 4, got {0}")]
    MaxLenTooSmall(usize),
}

/// Lays out a pair as one sequence. When it does not fit in `max_len` the
/// prompt is cut from its end first (keeping at least one token), then the
/// response; BOS, SEP and EOS are always present.
pub fn encode_pair(
    pair: &PromptResponsePair,
    vocab: &Vocabulary,
    tokenizer: Tokenizer,
    max_len: usize,
) -> Result<TokenizedExample, EncodeError> {
    if max_len < 4 {
        return Err(EncodeError::MaxLenTooSmall(max_len));
    }
    let prompt = tokenizer.tokenize(&pair.prompt);
    let response = tokenizer.tokenize(&pair.response);
    if prompt.is_empty() || response.is_empty() {
        return Err(EncodeError::PairTooShort);
    }

    let budget = max_len - 3;
    let keep_prompt = prompt.len().min(budget.saturating_sub(response.len()).max(1));
    let keep_response = response.len().min(budget - keep_prompt);

    let word = |s: &String| Token { surface: s.clone(), id: vocab.id(s) };
    let mut tokens = Vec::with_capacity(3 + keep_prompt + keep_response);
    tokens.push(Token::special(Special::Bos));
    tokens.extend(prompt[..keep_prompt].iter().map(word));
    tokens.push(Token::special(Special::Sep));
    tokens.extend(response[..keep_response].iter().map(word));
    tokens.push(Token::special(Special::Eos));

    Ok(TokenizedExample { tokens, prompt_len: keep_prompt + 2 })
}
