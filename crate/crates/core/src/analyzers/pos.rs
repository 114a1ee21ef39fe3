use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::AnalyzerError;

/// Universal part-of-speech tags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum PosTag {
    Noun,
    Propn,
    Verb,
    Adj,
    Adv,
    Aux,
    Det,
    Pron,
    Adp,
    Cconj,
    Sconj,
    Num,
    Part,
    Intj,
    Punct,
    Sym,
    X,
}

impl PosTag {
    /// Nouns, verbs and adjectives carry the content of a message.
    pub fn is_content(self) -> bool {
        matches!(self, PosTag::Noun | PosTag::Propn | PosTag::Verb | PosTag::Adj)
    }

    pub fn is_nominal(self) -> bool {
        matches!(self, PosTag::Noun | PosTag::Propn)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PosTag::Noun => "NOUN",
            PosTag::Propn => "PROPN",
            PosTag::Verb => "VERB",
            PosTag::Adj => "ADJ",
            PosTag::Adv => "ADV",
            PosTag::Aux => "AUX",
            PosTag::Det => "DET",
            PosTag::Pron => "PRON",
            PosTag::Adp => "ADP",
            PosTag::Cconj => "CCONJ",
            PosTag::Sconj => "SCONJ",
            PosTag::Num => "NUM",
            PosTag::Part => "PART",
            PosTag::Intj => "INTJ",
            PosTag::Punct => "PUNCT",
            PosTag::Sym => "SYM",
            PosTag::X => "X",
        }
    }
}

impl fmt::Display for PosTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PosTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.to_ascii_uppercase().as_str() {
            "NOUN" => PosTag::Noun,
            "PROPN" => PosTag::Propn,
            "VERB" => PosTag::Verb,
            "ADJ" | "ADJECTIVE" => PosTag::Adj,
            "ADV" | "ADVERB" => PosTag::Adv,
            "AUX" => PosTag::Aux,
            "DET" | "DETERMINER" => PosTag::Det,
            "PRON" | "PRONOUN" => PosTag::Pron,
            "ADP" => PosTag::Adp,
            "CCONJ" => PosTag::Cconj,
            "SCONJ" => PosTag::Sconj,
            "NUM" => PosTag::Num,
            "PART" => PosTag::Part,
            "INTJ" => PosTag::Intj,
            "PUNCT" => PosTag::Punct,
            "SYM" => PosTag::Sym,
            "X" => PosTag::X,
            _ => return Err(format!("unknown POS tag {s:?}")),
        })
    }
}

const BUNDLED_LEXICON: &str = include_str!("../../data/lexicon.tsv");
const BUNDLED_SUFFIXES: &str = include_str!("../../data/suffixes.tsv");

/// Lexicon + suffix-rule tagger.
///
/// Resolution order: exact (lowercased) lexicon entry, longest matching
/// suffix rule, token shape (punctuation, numbers), default tag. A suffix
/// only applies when at least two characters of stem remain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PosLexicon {
    words: HashMap<String, PosTag>,
    /// Longest suffix first; equal lengths keep file order.
    suffixes: Vec<(String, PosTag)>,
    default: PosTag,
}

impl PosLexicon {
    pub fn new(words: HashMap<String, PosTag>, mut suffixes: Vec<(String, PosTag)>, default: PosTag) -> Self {
        let words = words.into_iter().map(|(w, t)| (w.to_lowercase(), t)).collect();
        suffixes.sort_by_key(|(s, _)| std::cmp::Reverse(s.chars().count()));
        Self { words, suffixes, default }
    }

    /// Small English lexicon shipped with the crate, default tag NOUN.
    pub fn bundled() -> Self {
        let words = parse_tsv(BUNDLED_LEXICON, "bundled lexicon").expect("bundled lexicon parses");
        let suffixes = parse_tsv(BUNDLED_SUFFIXES, "bundled suffixes").expect("bundled suffixes parse");
        Self::new(words.into_iter().collect(), suffixes, PosTag::Noun)
    }

    /// Loads `surface<TAB>tag` lexicon and `suffix<TAB>tag` rule files.
    pub fn from_files(lexicon: &Path, suffixes: &Path, default: PosTag) -> Result<Self, AnalyzerError> {
        let read = |p: &Path| {
            fs::read_to_string(p).map_err(|source| AnalyzerError::Io { path: p.display().to_string(), source })
        };
        let words = parse_tsv(&read(lexicon)?, &lexicon.display().to_string())?;
        let rules = parse_tsv(&read(suffixes)?, &suffixes.display().to_string())?;
        Ok(Self::new(words.into_iter().collect(), rules, default))
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn tag(&self, token: &str) -> PosTag {
        let lower = token.to_lowercase();
        if let Some(&t) = self.words.get(&lower) {
            return t;
        }
        let n = lower.chars().count();
        for (suffix, tag) in &self.suffixes {
            if n >= suffix.chars().count() + 2 && lower.ends_with(suffix.as_str()) {
                return *tag;
            }
        }
        if !lower.chars().any(char::is_alphanumeric) {
            return if lower.chars().all(|c| c.is_ascii_punctuation()) { PosTag::Punct } else { PosTag::Sym };
        }
        if lower.chars().all(|c| c.is_numeric()) {
            return PosTag::Num;
        }
        self.default
    }

    pub fn tag_all<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<PosTag> {
        tokens.iter().map(|t| self.tag(t.as_ref())).collect()
    }
}

fn parse_tsv(text: &str, origin: &str) -> Result<Vec<(String, PosTag)>, AnalyzerError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let malformed = |reason: String| AnalyzerError::Malformed { path: origin.to_string(), line: i + 1, reason };
        let (word, tag) = line.split_once('\t').ok_or_else(|| malformed("expected <surface>\\t<tag>".into()))?;
        let tag = tag.trim().parse::<PosTag>().map_err(malformed)?;
        out.push((word.trim().to_string(), tag));
    }
    Ok(out)
}

/// 1 for nouns, verbs and adjectives, 0 otherwise.
pub fn tag_pos<S: AsRef<str>>(tokens: &[S], lexicon: &PosLexicon) -> Vec<u8> {
    tokens.iter().map(|t| u8::from(lexicon.tag(t.as_ref()).is_content())).collect()
}
