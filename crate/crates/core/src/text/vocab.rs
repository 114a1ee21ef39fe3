use std::collections::HashMap;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use thiserror::Error;

use super::Tokenizer;

/// Reserved ids. Every vocabulary starts with these five entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u32)]
pub enum Special {
    Pad = 0,
    Bos = 1,
    Eos = 2,
    Unk = 3,
    Sep = 4,
}

impl Special {
    pub const ALL: [Special; 5] = [Special::Pad, Special::Bos, Special::Eos, Special::Unk, Special::Sep];

    pub fn id(self) -> u32 {
        self as u32
    }

    pub fn surface(self) -> &'static str {
        match self {
            Special::Pad => "<pad>",
            Special::Bos => "<bos>",
            Special::Eos => "<eos>",
            Special::Unk => "<unk>",
            Special::Sep => "<sep>",
        }
    }
}

#[derive(Debug, Error)]
pub enum VocabularyError {
    #[error("min_count must be at least 1")]
    InvalidMinCount,
    #[error("vocabulary file {path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("vocabulary file line {line}: {reason}")]
    Malformed { line: usize, reason: String },
}

/// Immutable bidirectional map between surface forms and ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    entries: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    /// A vocabulary holding only the special tokens.
    pub fn specials_only() -> Self {
        Self::from_entries(Vec::new()).expect("specials are unique")
    }

    /// Builds a vocabulary from non-special surfaces, in id order after the
    /// specials.
    pub fn from_entries(words: Vec<String>) -> Result<Self, VocabularyError> {
        let mut entries: Vec<String> = Special::ALL.iter().map(|s| s.surface().to_string()).collect();
        entries.extend(words);
        let mut index = HashMap::with_capacity(entries.len());
        for (i, e) in entries.iter().enumerate() {
            if e.is_empty() || e.chars().any(char::is_whitespace) {
                return Err(VocabularyError::Malformed { line: i + 1, reason: format!("invalid surface form {e:?}") });
            }
            if index.insert(e.clone(), i as u32).is_some() {
                return Err(VocabularyError::Malformed {
                    line: i + 1,
                    reason: format!("duplicate surface form {e:?}"),
                });
            }
        }
        Ok(Self { entries, index })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Id for `surface`, or `UNK` when absent.
    pub fn id(&self, surface: &str) -> u32 {
        self.lookup(surface).unwrap_or(Special::Unk.id())
    }

    pub fn lookup(&self, surface: &str) -> Option<u32> {
        self.index.get(surface).copied()
    }

    pub fn surface(&self, id: u32) -> Option<&str> {
        self.entries.get(id as usize).map(String::as_str)
    }

    pub fn decode(&self, ids: &[u32]) -> Vec<&str> {
        ids.iter().map(|&id| self.surface(id).unwrap_or(Special::Unk.surface())).collect()
    }

    pub fn entries(&self) -> &[String] {
        &self.entries
    }

    /// One surface per line; line number (from zero) is the id.
    pub fn save(&self, path: &Path) -> Result<(), VocabularyError> {
        let io_err = |source| VocabularyError::Io { path: path.display().to_string(), source };
        let mut f = io::BufWriter::new(fs::File::create(path).map_err(io_err)?);
        for e in &self.entries {
            writeln!(f, "{e}").map_err(io_err)?;
        }
        f.flush().map_err(io_err)
    }

    pub fn load(path: &Path) -> Result<Self, VocabularyError> {
        let text = fs::read_to_string(path)
            .map_err(|source| VocabularyError::Io { path: path.display().to_string(), source })?;
        let lines: Vec<&str> = text.lines().collect();
        if lines.len() < Special::ALL.len() {
            return Err(VocabularyError::Malformed { line: lines.len() + 1, reason: "missing special tokens".into() });
        }
        for (i, s) in Special::ALL.iter().enumerate() {
            if lines[i] != s.surface() {
                return Err(VocabularyError::Malformed {
                    line: i + 1,
                    reason: format!("expected {} at id {}", s.surface(), s.id()),
                });
            }
        }
        Self::from_entries(lines[Special::ALL.len()..].iter().map(|s| s.to_string()).collect())
    }
}

/// Specials plus every token occurring at least `min_count` times, ordered
/// by descending frequency with lexicographic tie-break.
pub fn build_vocabulary<S: AsRef<str>>(
    corpus: &[S],
    min_count: usize,
    tokenizer: Tokenizer,
) -> Result<Vocabulary, VocabularyError> {
    if min_count == 0 {
        return Err(VocabularyError::InvalidMinCount);
    }
    let mut counts: HashMap<String, usize> = HashMap::new();
    for text in corpus {
        for tok in tokenizer.tokenize(text.as_ref()) {
            *counts.entry(tok).or_default() += 1;
        }
    }
    let mut words: Vec<(String, usize)> = counts.into_iter().filter(|(_, c)| *c >= min_count).collect();
    words.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Vocabulary::from_entries(words.into_iter().map(|(w, _)| w).collect())
}
