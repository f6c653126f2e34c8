//! Bagging baseline: average predictions over independently drawn
//! uniform-weight contexts.

use ndarray::{Array2, ArrayView2};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::learners::{Context, ContextPredictor, ProbMatrix};
use crate::rng::stream_rng;
use crate::sampler::{sample_without_replacement, WeightVector};

/// Bag `b` draws its context from stream `b` of `seed`.
pub fn bag_fit_predict<P: ContextPredictor + ?Sized>(
    train: &Dataset,
    predictor: &P,
    num_bags: usize,
    context_size: usize,
    seed: u64,
    queries: ArrayView2<'_, f64>,
) -> Result<ProbMatrix> {
    if num_bags == 0 {
        return Err(Error::Config("need at least one bag".into()));
    }
    if context_size == 0 || context_size > train.len() {
        return Err(Error::Config(format!(
            "context size {context_size} must lie in 1..={}",
            train.len()
        )));
    }
    let k = train.num_classes();
    let w = WeightVector::uniform(train.len());
    let mut sum = Array2::<f64>::zeros((queries.nrows(), k));
    for b in 0..num_bags {
        let subset = sample_without_replacement(&w, context_size, &mut stream_rng(seed, b as u64))?;
        let ctx = Context::gather(train.features(), train.labels(), subset.indices());
        let p = predictor.predict(&ctx, queries, k)?;
        sum += &p.view();
    }
    sum.mapv_inplace(|v| v / num_bags as f64);
    ProbMatrix::new(sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::KernelPredictor;
    use crate::synthetic::gaussian_blobs;

    #[test]
    fn single_bag_is_single_context_prediction() {
        let ds = gaussian_blobs(&[30, 30, 30], 3, 2.0, 4);
        let p = KernelPredictor::default();
        let out = bag_fit_predict(&ds, &p, 1, 12, 99, ds.features()).unwrap();
        let subset = sample_without_replacement(&WeightVector::uniform(90), 12, &mut stream_rng(99, 0)).unwrap();
        let ctx = Context::gather(ds.features(), ds.labels(), subset.indices());
        assert_eq!(out, p.predict(&ctx, ds.features(), 3).unwrap());
    }

    #[test]
    fn rows_are_stochastic() {
        let ds = gaussian_blobs(&[30, 30, 30], 3, 2.0, 4);
        let out = bag_fit_predict(&ds, &KernelPredictor::default(), 8, 10, 1, ds.features()).unwrap();
        for row in out.view().rows() {
            assert!((row.sum() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn errors() {
        let ds = gaussian_blobs(&[5, 5], 2, 2.0, 4);
        let p = KernelPredictor::default();
        assert!(bag_fit_predict(&ds, &p, 0, 3, 1, ds.features()).is_err());
        assert!(bag_fit_predict(&ds, &p, 2, 11, 1, ds.features()).is_err());
    }
}
