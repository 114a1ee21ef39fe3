use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `length` draws from U[0, 1), reproducible from `seed`.
pub fn draw_random_scores(length: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..length).map(|_| rng.random::<f64>()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty() {
        assert!(draw_random_scores(0, 7).is_empty());
    }

    #[test]
    fn deterministic() {
        assert_eq!(draw_random_scores(32, 42), draw_random_scores(32, 42));
        assert_ne!(draw_random_scores(32, 42), draw_random_scores(32, 43));
    }

    #[test]
    fn uniform_mean() {
        let xs = draw_random_scores(100_000, 1);
        assert!(xs.iter().all(|x| (0.0..1.0).contains(x)));
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        assert!((0.49..=0.51).contains(&mean), "mean {mean}");
    }
}
