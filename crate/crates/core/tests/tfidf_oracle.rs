//! TF-IDF scores against a naive nested-loop recomputation.

use maskdistill::analyzers::{fit_tfidf, score_tfidf};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Recomputes tf and df by scanning every token of every document.
fn brute_force(corpus: &[Vec<String>], doc: &[String]) -> Vec<f64> {
    let n_docs = corpus.len();
    let mut out = Vec::with_capacity(doc.len());
    for t in doc {
        let mut count = 0usize;
        for u in doc {
            if u == t {
                count += 1;
            }
        }
        let mut df = 0usize;
        for d in corpus {
            let mut found = false;
            for u in d {
                if u == t {
                    found = true;
                }
            }
            if found {
                df += 1;
            }
        }
        let tf = count as f64 / doc.len() as f64;
        let idf = ((1 + n_docs) as f64 / (1 + df) as f64).ln() + 1.0;
        out.push(tf * idf);
    }
    out
}

fn random_doc(rng: &mut ChaCha8Rng) -> Vec<String> {
    let len = rng.random_range(1..=10);
    (0..len).map(|_| format!("w{}", rng.random_range(0..8))).collect()
}

#[test]
fn matches_brute_force_on_random_corpora() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..100 {
        let n_docs = rng.random_range(1..=5);
        let corpus: Vec<Vec<String>> = (0..n_docs).map(|_| random_doc(&mut rng)).collect();
        let model = fit_tfidf(&corpus).unwrap();
        // every corpus document plus one unseen document
        let mut docs = corpus.clone();
        docs.push(random_doc(&mut rng));
        for doc in &docs {
            assert_eq!(score_tfidf(&model, doc), brute_force(&corpus, doc), "case {case}");
        }
    }
}
