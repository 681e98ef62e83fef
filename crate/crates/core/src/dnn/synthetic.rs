//! Small generated datasets.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::{Dataset, Sample};

/// Features on the 1/16 grid in `[-1, 1]`, labelled 1 on the positive side
/// of a random hyperplane through the origin and 0 otherwise.
pub fn linearly_separable(samples: usize, features: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let normal: Vec<f64> = (0..features).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Dataset::new(
        (0..samples)
            .map(|_| {
                let x: Vec<f64> = (0..features).map(|_| rng.gen_range(-16..=16) as f64 / 16.0).collect();
                let side: f64 = x.iter().zip(&normal).map(|(a, b)| a * b).sum();
                Sample { features: x, label: if side > 0.0 { 1.0 } else { 0.0 } }
            })
            .collect(),
    )
}

/// Like [`linearly_separable`] but every feature is drawn from `values`.
pub fn few_values(samples: usize, features: usize, values: &[f64], seed: u64) -> Dataset {
    assert!(!values.is_empty());
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let normal: Vec<f64> = (0..features).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Dataset::new(
        (0..samples)
            .map(|_| {
                let x: Vec<f64> = (0..features).map(|_| *values.choose(&mut rng).expect("nonempty")).collect();
                let side: f64 = x.iter().zip(&normal).map(|(a, b)| a * b).sum();
                Sample { features: x, label: if side > 0.0 { 1.0 } else { 0.0 } }
            })
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_and_determinism() {
        let d = linearly_separable(20, 3, 1);
        assert_eq!(d.len(), 20);
        assert!(d.samples.iter().all(|s| s.features.len() == 3));
        assert!(d.samples.iter().all(|s| s.label == 0.0 || s.label == 1.0));
        assert_eq!(d, linearly_separable(20, 3, 1));
        assert_ne!(d, linearly_separable(20, 3, 2));
    }

    #[test]
    fn few_values_uses_only_given_values() {
        let d = few_values(30, 4, &[0.25, -0.5, 1.0], 3);
        assert!(d.samples.iter().flat_map(|s| &s.features).all(|x| [0.25, -0.5, 1.0].contains(x)));
    }
}
