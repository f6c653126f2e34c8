//! Sampling weights and sequential weighted sampling without replacement.
//!
//! A subset is drawn one index at a time: index `i` is picked with probability
//! `w[i] / (remaining mass)` and then removed. The exact probability of an
//! unordered subset under this scheme is therefore the sum, over all of its
//! orderings `a_1..a_z`, of `prod_j w[a_j] / (1 - sum_{b<j} w[a_b])`.

use itertools::Itertools;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sums below this are treated as zero.
pub const MIN_MASS: f64 = 1e-12;

/// Largest subset for which [`subset_probability`] enumerates orderings.
pub const MAX_ENUMERATED_SUBSET: usize = 8;

/// Nonnegative weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Number of strictly positive entries.
    pub fn support(&self) -> usize {
        self.0.iter().filter(|&&w| w > 0.0).count()
    }
}

impl std::ops::Index<usize> for WeightVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Divides by the total. Fails on negative/non-finite entries or when the
/// total is below [`MIN_MASS`].
pub fn normalize(w: &[f64]) -> Result<WeightVector> {
    if let Some(bad) = w.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::Weights(format!(
            "weight {bad} is not a finite nonnegative value"
        )));
    }
    let total: f64 = w.iter().sum();
    if total < MIN_MASS {
        return Err(Error::Weights(format!("total weight {total} is numerically zero")));
    }
    Ok(WeightVector(w.iter().map(|v| v / total).collect()))
}

/// Ordered, distinct row indices of a drawn context.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextSubset(Vec<usize>);

impl ContextSubset {
    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn into_indices(self) -> Vec<usize> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Draws `z` distinct indices sequentially, each with probability
/// proportional to its weight among the indices not yet drawn.
pub fn sample_without_replacement<R: Rng + ?Sized>(w: &WeightVector, z: usize, rng: &mut R) -> Result<ContextSubset> {
    let support = w.support();
    if z == 0 || z > support {
        return Err(Error::Sampling(format!(
            "cannot draw {z} indices from {support} positive weights"
        )));
    }
    let mut remaining: Vec<f64> = w.0.clone();
    let mut picked = Vec::with_capacity(z);
    for _ in 0..z {
        // Recompute the mass rather than subtracting, so rounding never drifts.
        let mass: f64 = remaining.iter().sum();
        let u = rng.random::<f64>() * mass;
        let mut acc = 0.0;
        let mut choice = None;
        for (i, &wi) in remaining.iter().enumerate() {
            if wi > 0.0 {
                acc += wi;
                choice = Some(i);
                if u < acc {
                    break;
                }
            }
        }
        // `choice` is the last positive entry when rounding leaves u == mass.
        let i = choice.expect("positive support checked above");
        remaining[i] = 0.0;
        picked.push(i);
    }
    Ok(ContextSubset(picked))
}

/// Exact probability that [`sample_without_replacement`] returns exactly the
/// set `subset` (in any order), by enumerating all orderings.
pub fn subset_probability(w: &WeightVector, subset: &[usize]) -> Result<f64> {
    let z = subset.len();
    if z > MAX_ENUMERATED_SUBSET {
        return Err(Error::Enumeration(format!(
            "subset of size {z} exceeds the enumeration cap {MAX_ENUMERATED_SUBSET}"
        )));
    }
    if let Some(&bad) = subset.iter().find(|&&i| i >= w.len()) {
        return Err(Error::Dimension(format!(
            "index {bad} out of range for {} weights",
            w.len()
        )));
    }
    if subset.iter().duplicates().next().is_some() {
        return Err(Error::Sampling("subset contains duplicate indices".into()));
    }
    Ok(subset
        .iter()
        .copied()
        .permutations(z)
        .map(|order| ordering_probability(w, &order))
        .sum())
}

/// Probability of drawing exactly the sequence `order`.
pub fn ordering_probability(w: &WeightVector, order: &[usize]) -> f64 {
    let mut drawn = 0.0;
    let mut p = 1.0;
    for &i in order {
        let rest = 1.0 - drawn;
        if rest <= 0.0 {
            return 0.0;
        }
        p *= w[i] / rest;
        drawn += w[i];
    }
    p
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize(&[2.0, 2.0]).unwrap().as_slice(), &[0.5, 0.5]);
        assert_eq!(normalize(&[0.0, 3.0, 1.0]).unwrap().as_slice(), &[0.0, 0.75, 0.25]);
        assert!(normalize(&[0.0, 0.0]).is_err());
        assert!(normalize(&[1e-13, 0.0]).is_err());
        assert!(normalize(&[-1.0, 2.0]).is_err());
    }

    #[test]
    fn exhaustion_gives_permutation() {
        let w = WeightVector::uniform(5);
        let mut s = sample_without_replacement(&w, 5, &mut stream_rng(1, 0))
            .unwrap()
            .into_indices();
        s.sort();
        assert_eq!(s, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn point_mass() {
        let w = normalize(&[1.0, 0.0, 0.0]).unwrap();
        for seed in 0..50 {
            let s = sample_without_replacement(&w, 1, &mut stream_rng(seed, 0)).unwrap();
            assert_eq!(s.indices(), &[0]);
        }
        assert!(sample_without_replacement(&w, 2, &mut stream_rng(0, 0)).is_err());
    }

    #[test]
    fn hand_enumerated_pair() {
        let w = normalize(&[0.5, 0.3, 0.2]).unwrap();
        let p = subset_probability(&w, &[0, 1]).unwrap();
        assert_relative_eq!(p, 0.5 * (0.3 / 0.5) + 0.3 * (0.5 / 0.7), epsilon = 1e-15);
        assert_relative_eq!(p, 0.514_285_714_285_714_3, epsilon = 1e-15);
    }

    #[test]
    fn uniform_subset_is_inverse_binomial() {
        let w = WeightVector::uniform(7);
        let p = subset_probability(&w, &[1, 4, 6]).unwrap();
        assert_relative_eq!(p, 1.0 / 35.0, epsilon = 1e-14);
        let all: Vec<usize> = (0..7).collect();
        assert_relative_eq!(subset_probability(&w, &all).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn enumeration_errors() {
        let w = WeightVector::uniform(10);
        let nine: Vec<usize> = (0..9).collect();
        assert!(matches!(subset_probability(&w, &nine), Err(Error::Enumeration(_))));
        assert!(subset_probability(&w, &[10]).is_err());
        assert!(subset_probability(&w, &[1, 1]).is_err());
    }

    fn arb_weights() -> impl Strategy<Value = Vec<f64>> {
        (4usize..=10).prop_flat_map(|n| prop::collection::vec(0.01f64..10.0, n))
    }

    proptest! {
        #[test]
        fn subset_probabilities_sum_to_one(raw in arb_weights(), z in 1usize..=4) {
            let w = normalize(&raw).unwrap();
            let total: f64 = (0..w.len())
                .combinations(z)
                .map(|s| subset_probability(&w, &s).unwrap())
                .sum();
            prop_assert!((total - 1.0).abs() < 1e-10, "total {}", total);
        }

        #[test]
        fn sampling_is_seeded_and_skips_zero_weights(
            raw in prop::collection::vec(prop_oneof![Just(0.0), 0.1f64..5.0], 3..30),
            seed in any::<u64>(),
        ) {
            prop_assume!(raw.iter().filter(|&&v| v > 0.0).count() >= 2);
            let w = normalize(&raw).unwrap();
            let z = w.support().min(5);
            let a = sample_without_replacement(&w, z, &mut stream_rng(seed, 2)).unwrap();
            let b = sample_without_replacement(&w, z, &mut stream_rng(seed, 2)).unwrap();
            prop_assert_eq!(&a, &b);
            prop_assert!(a.indices().iter().all(|&i| raw[i] > 0.0));
            prop_assert_eq!(a.indices().iter().unique().count(), z);
        }
    }
}
