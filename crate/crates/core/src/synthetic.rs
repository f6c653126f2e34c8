//! Seeded synthetic classification data for tests, benches and demos.

use ndarray::Array2;
use rand_distr::{Distribution, Normal};

use crate::data::Dataset;
use crate::rng::stream_rng;

/// Isotropic Gaussian blobs, one per class, rows ordered by class.
///
/// Class centers are drawn from `N(0, separation^2)` per coordinate and each
/// point from `N(center, 1)`.
pub fn gaussian_blobs(class_sizes: &[usize], d: usize, separation: f64, seed: u64) -> Dataset {
    let k = class_sizes.len();
    let n: usize = class_sizes.iter().sum();
    let mut rng = stream_rng(seed, 0);
    let center_dist = Normal::new(0.0, separation).expect("finite separation");
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let centers: Vec<Vec<f64>> = (0..k)
        .map(|_| (0..d).map(|_| center_dist.sample(&mut rng)).collect())
        .collect();

    let mut features = Array2::<f64>::zeros((n, d));
    let mut labels = Vec::with_capacity(n);
    let mut i = 0;
    for (class, &size) in class_sizes.iter().enumerate() {
        for _ in 0..size {
            for j in 0..d {
                features[[i, j]] = centers[class][j] + noise.sample(&mut rng);
            }
            labels.push(class);
            i += 1;
        }
    }
    Dataset::from_arrays(features, labels, k).expect("blob dataset is well formed")
}
