use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::AnalyzerError;

/// Document frequencies over a fitted corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TfidfModel {
    pub doc_count: usize,
    pub doc_freq: BTreeMap<String, usize>,
}

impl TfidfModel {
    /// Counts, for every surface, the number of documents containing it.
    pub fn fit<S: AsRef<str>>(corpus: &[Vec<S>]) -> Result<Self, AnalyzerError> {
        if corpus.is_empty() {
            return Err(AnalyzerError::EmptyCorpus);
        }
        let mut doc_freq = BTreeMap::new();
        for doc in corpus {
            let distinct: HashSet<&str> = doc.iter().map(AsRef::as_ref).collect();
            for t in distinct {
                *doc_freq.entry(t.to_string()).or_insert(0) += 1;
            }
        }
        Ok(Self { doc_count: corpus.len(), doc_freq })
    }

    pub fn df(&self, term: &str) -> usize {
        self.doc_freq.get(term).copied().unwrap_or(0)
    }

    /// Smoothed idf: ln((1+N)/(1+df)) + 1. Unseen terms use df = 0.
    pub fn idf(&self, term: &str) -> f64 {
        ((1 + self.doc_count) as f64 / (1 + self.df(term)) as f64).ln() + 1.0
    }

    /// Per-token tf·idf with relative term frequency count/|doc|. Repeated
    /// surfaces in `doc` receive identical scores.
    pub fn score<S: AsRef<str>>(&self, doc: &[S]) -> Vec<f64> {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for t in doc {
            *counts.entry(t.as_ref()).or_insert(0) += 1;
        }
        let len = doc.len() as f64;
        doc.iter()
            .map(|t| {
                let t = t.as_ref();
                let tf = counts[t] as f64 / len;
                tf * self.idf(t)
            })
            .collect()
    }
}

/// Function form of [`TfidfModel::fit`].
pub fn fit_tfidf<S: AsRef<str>>(corpus: &[Vec<S>]) -> Result<TfidfModel, AnalyzerError> {
    TfidfModel::fit(corpus)
}

/// Function form of [`TfidfModel::score`].
pub fn score_tfidf<S: AsRef<str>>(model: &TfidfModel, doc: &[S]) -> Vec<f64> {
    model.score(doc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn docs(d: &[&[&str]]) -> Vec<Vec<String>> {
        d.iter().map(|x| x.iter().map(|s| s.to_string()).collect()).collect()
    }

    #[test]
    fn document_frequencies() {
        let m = fit_tfidf(&docs(&[&["a", "b"], &["b", "c"]])).unwrap();
        assert_eq!(m.doc_count, 2);
        assert_eq!((m.df("a"), m.df("b"), m.df("c")), (1, 2, 1));
    }

    #[test]
    fn df_counts_documents_not_occurrences() {
        let m = fit_tfidf(&docs(&[&["a", "a", "a"]])).unwrap();
        assert_eq!(m.doc_freq.len(), 1);
        assert_eq!(m.df("a"), 1);
    }

    #[test]
    fn empty_corpus() {
        assert!(matches!(fit_tfidf::<String>(&[]), Err(AnalyzerError::EmptyCorpus)));
    }

    #[test]
    fn hand_computed_scores() {
        let m = fit_tfidf(&docs(&[&["a", "b", "c", "d"]])).unwrap();
        let s = score_tfidf(&m, &["a", "b", "c", "d"]);
        // tf = 1/4, idf = ln(2/2) + 1 = 1
        assert_eq!(s, [0.25; 4]);
        // single-token doc: tf = 1, score = idf
        assert_eq!(score_tfidf(&m, &["a"]), [1.0]);
        // unseen surface with N = 1: idf = ln(2/1) + 1
        assert_abs_diff_eq!(m.idf("zzz"), 1.693_147_180_559_945_3, epsilon = 1e-15);
        let s = score_tfidf(&m, &["zzz", "a"]);
        assert_abs_diff_eq!(s[0], 0.5 * (2f64.ln() + 1.0), epsilon = 1e-15);
    }

    #[test]
    fn repeated_surfaces_share_a_score() {
        let m = fit_tfidf(&docs(&[&["x", "y"], &["y"]])).unwrap();
        let s = score_tfidf(&m, &["x", "y", "x"]);
        assert_eq!(s[0], s[2]);
        assert!(s[0] > s[1]);
    }

    #[test]
    fn idf_non_increasing_in_df() {
        let m = fit_tfidf(&docs(&[&["a", "b", "c"], &["b", "c"], &["c"]])).unwrap();
        assert!(m.idf("zzz") >= m.idf("a"));
        assert!(m.idf("a") >= m.idf("b"));
        assert!(m.idf("b") >= m.idf("c"));
        assert_eq!(m.idf("c"), 1.0);
    }
}
