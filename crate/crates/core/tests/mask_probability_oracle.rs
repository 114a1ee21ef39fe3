//! Unmask probabilities against the plain logistic formula evaluated
//! term by term.

use maskdistill::analyzers::TokenScores;
use maskdistill::masking::{unmask_probability, MaskWeights};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn oracle(s: &TokenScores, w: &MaskWeights) -> Vec<f64> {
    let mut out = Vec::new();
    for i in 0..s.tfidf.len() {
        let mut z = w.bias;
        z += w.w_tfidf * s.tfidf[i];
        z += w.w_pos * s.pos[i] as f64;
        z += w.w_dep * s.dep[i] as f64;
        z += w.w_random * s.random[i];
        out.push(1.0 / (1.0 + (-z).exp()));
    }
    out
}

#[test]
fn matches_direct_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for case in 0..500 {
        let n = rng.random_range(1..40);
        let s = TokenScores {
            tfidf: (0..n).map(|_| rng.random_range(0.0..4.0)).collect(),
            pos: (0..n).map(|_| rng.random_range(0..=1)).collect(),
            dep: (0..n).map(|_| rng.random_range(0..=1)).collect(),
            random: (0..n).map(|_| rng.random::<f64>()).collect(),
        };
        let w = MaskWeights {
            w_tfidf: rng.random_range(-5.0..5.0),
            w_pos: rng.random_range(-5.0..5.0),
            w_dep: rng.random_range(-5.0..5.0),
            w_random: rng.random_range(-5.0..5.0),
            bias: rng.random_range(-3.0..3.0),
        };
        let got = unmask_probability(&s, &w).unwrap();
        for (g, e) in got.iter().zip(oracle(&s, &w)) {
            let rel = (g - e).abs() / e.abs().max(f64::MIN_POSITIVE);
            assert!(rel <= 1e-12, "case {case}: {g} vs {e}");
        }
    }
}
