//! Per-token linguistic scores feeding the unmask probability: TF-IDF
//! salience, a content-word indicator from a rule-based POS tagger, a
//! subject/verb/object indicator, and a seeded uniform noise draw.

mod dependency;
mod pos;
mod random;
mod tfidf;

use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dependency::score_dependency;
pub use pos::{tag_pos, PosLexicon, PosTag};
pub use random::draw_random_scores;
pub use tfidf::{fit_tfidf, score_tfidf, TfidfModel};

use crate::text::TokenizedExample;

#[derive(Debug, Error)]
pub enum AnalyzerError {
    #[error("cannot fit TF-IDF on an empty corpus")]
    EmptyCorpus,
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("{path}:{line}: {reason}")]
    Malformed { path: String, line: usize, reason: String },
}

/// The four score channels for one sequence, all of equal length.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TokenScores {
    pub tfidf: Vec<f64>,
    pub pos: Vec<u8>,
    pub dep: Vec<u8>,
    pub random: Vec<f64>,
}

impl TokenScores {
    pub fn len(&self) -> usize {
        self.tfidf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tfidf.is_empty()
    }

    pub fn is_aligned(&self) -> bool {
        let n = self.tfidf.len();
        self.pos.len() == n && self.dep.len() == n && self.random.len() == n
    }
}

/// Analyzer state fitted on a corpus of encoded examples. Immutable once
/// built; scoring is pure.
#[derive(Debug, Clone)]
pub struct TokenAnalyzer {
    pub tfidf: TfidfModel,
    pub lexicon: PosLexicon,
}

impl TokenAnalyzer {
    /// Fits TF-IDF with one document per example (prompt and response words,
    /// specials excluded).
    pub fn fit(examples: &[TokenizedExample], lexicon: PosLexicon) -> Result<Self, AnalyzerError> {
        let corpus: Vec<Vec<&str>> = examples.iter().map(|e| e.content_surfaces()).collect();
        Ok(Self { tfidf: TfidfModel::fit(&corpus)?, lexicon })
    }

    /// Scores every position of `example`. Structural specials score 0 on
    /// every linguistic channel; the noise channel covers all positions.
    pub fn score(&self, example: &TokenizedExample, random_seed: u64) -> TokenScores {
        let n = example.len();
        let content: Vec<usize> = (0..n).filter(|&i| !example.tokens[i].is_special()).collect();
        let surfaces: Vec<&str> = content.iter().map(|&i| example.tokens[i].surface.as_str()).collect();

        let mut tfidf = vec![0.0; n];
        if !surfaces.is_empty() {
            for (&i, s) in content.iter().zip(self.tfidf.score(&surfaces)) {
                tfidf[i] = s;
            }
        }
        let tags: Vec<PosTag> = example
            .tokens
            .iter()
            .map(|t| if t.is_special() { PosTag::X } else { self.lexicon.tag(&t.surface) })
            .collect();
        let pos = tags.iter().map(|t| u8::from(t.is_content())).collect();
        let dep = score_dependency(&tags);
        TokenScores { tfidf, pos, dep, random: draw_random_scores(n, random_seed) }
    }
}

/// One line of a score dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub example: usize,
    pub position: usize,
    pub token: String,
    pub tfidf: f64,
    pub pos: u8,
    pub dep: u8,
    pub random: f64,
}

/// Writes per-token score records, one JSON object per line.
pub fn write_score_dump<'a>(
    path: &Path,
    rows: impl IntoIterator<Item = (usize, &'a TokenizedExample, &'a TokenScores)>,
) -> Result<(), AnalyzerError> {
    let io_err = |source| AnalyzerError::Io { path: path.display().to_string(), source };
    let mut w = io::BufWriter::new(std::fs::File::create(path).map_err(io_err)?);
    for (example, ex, s) in rows {
        for (position, tok) in ex.tokens.iter().enumerate() {
            let rec = ScoreRecord {
                example,
                position,
                token: tok.surface.clone(),
                tfidf: s.tfidf[position],
                pos: s.pos[position],
                dep: s.dep[position],
                random: s.random[position],
            };
            serde_json::to_writer(&mut w, &rec).map_err(|e| io_err(e.into()))?;
            w.write_all(b"\n").map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::{encode_pair, PairSource, PromptResponsePair, Tokenizer, Vocabulary};
    use chrono::DateTime;

    fn example(p: &str, r: &str) -> TokenizedExample {
        let pair = PromptResponsePair {
            prompt: p.into(),
            response: r.into(),
            source: PairSource::Manual,
            template_id: None,
            created_at: DateTime::UNIX_EPOCH,
        };
        encode_pair(&pair, &Vocabulary::specials_only(), Tokenizer::default(), 64).unwrap()
    }

    #[test]
    fn scores_align_and_specials_are_zero() {
        let exs = [example("dogs chase cats", "the cat sleeps"), example("what is new", "nothing much")];
        let a = TokenAnalyzer::fit(&exs, PosLexicon::bundled()).unwrap();
        let s = a.score(&exs[0], 3);
        assert!(s.is_aligned());
        assert_eq!(s.len(), exs[0].len());
        for i in exs[0].structural_positions() {
            assert_eq!((s.tfidf[i], s.pos[i], s.dep[i]), (0.0, 0, 0));
        }
        // dogs chase cats → subject, verb, object
        assert_eq!(&s.dep[1..4], &[1, 1, 1]);
        assert_eq!(&s.pos[1..4], &[1, 1, 1]);
        assert!(s.tfidf[1] > 0.0);
        assert_eq!(s, a.score(&exs[0], 3));
    }

    #[test]
    fn tfidf_fit_on_content_words() {
        let exs = [example("a b", "c"), example("b", "d")];
        let a = TokenAnalyzer::fit(&exs, PosLexicon::bundled()).unwrap();
        assert_eq!(a.tfidf.doc_count, 2);
        assert_eq!(a.tfidf.df("b"), 2);
        assert_eq!(a.tfidf.df("<bos>"), 0);
        assert!(matches!(TokenAnalyzer::fit(&[], PosLexicon::bundled()), Err(AnalyzerError::EmptyCorpus)));
    }

    #[test]
    fn score_dump_lines() {
        let exs = [example("hi there", "yo")];
        let a = TokenAnalyzer::fit(&exs, PosLexicon::bundled()).unwrap();
        let s = a.score(&exs[0], 0);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("scores.jsonl");
        write_score_dump(&p, [(0, &exs[0], &s)]).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let recs: Vec<ScoreRecord> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(recs.len(), exs[0].len());
        assert_eq!(recs[1].token, "hi");
        assert_eq!(recs[1].random, s.random[1]);
    }
}
