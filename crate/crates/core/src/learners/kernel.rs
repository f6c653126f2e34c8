//! Gaussian-kernel class smoother used as the built-in context predictor.
//!
//! For a query `x` the class-`k` probability is
//!
//! ```text
//! p(k) = (sum_{i: y_i = k} K(x, x_i) + beta) / (sum_i K(x, x_i) + K * beta)
//! K(x, x') = exp(-|x - x'|^2 / (2 h^2))
//! ```
//!
//! Kernel weights are accumulated in sorted order, which makes the output
//! bit-for-bit independent of the order of context rows.

use std::fmt;

use ndarray::{Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;
use serde::de::{self, Deserializer};
use serde::{Deserialize, Serialize, Serializer};

use super::{Context, ContextPredictor, ProbMatrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Bandwidth {
    Fixed(f64),
    /// Median pairwise Euclidean distance among the context rows; 1.0 when
    /// that median is zero or undefined.
    #[default]
    MedianHeuristic,
}

const MEDIAN_HEURISTIC: &str = "median-heuristic";

impl fmt::Display for Bandwidth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bandwidth::Fixed(h) => write!(f, "{h}"),
            Bandwidth::MedianHeuristic => f.write_str(MEDIAN_HEURISTIC),
        }
    }
}

impl std::str::FromStr for Bandwidth {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == MEDIAN_HEURISTIC {
            return Ok(Bandwidth::MedianHeuristic);
        }
        let h: f64 = s.parse().map_err(|_| {
            Error::Config(format!(
                "bandwidth must be a positive number or {MEDIAN_HEURISTIC:?}, got {s:?}"
            ))
        })?;
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::Config(format!("bandwidth must be positive, got {h}")));
        }
        Ok(Bandwidth::Fixed(h))
    }
}

impl Serialize for Bandwidth {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Bandwidth::Fixed(h) => s.serialize_f64(*h),
            Bandwidth::MedianHeuristic => s.serialize_str(MEDIAN_HEURISTIC),
        }
    }
}

impl<'de> Deserialize<'de> for Bandwidth {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(h) if h > 0.0 && h.is_finite() => Ok(Bandwidth::Fixed(h)),
            Repr::Num(h) => Err(de::Error::custom(format!("bandwidth must be positive, got {h}"))),
            Repr::Str(s) => s.parse().map_err(de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelPredictorConfig {
    pub bandwidth: Bandwidth,
    /// Pseudo-count added to every class.
    pub smoothing: f64,
}

impl Default for KernelPredictorConfig {
    fn default() -> Self {
        Self {
            bandwidth: Bandwidth::MedianHeuristic,
            smoothing: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct KernelPredictor {
    config: KernelPredictorConfig,
}

impl KernelPredictor {
    pub fn new(config: KernelPredictorConfig) -> Result<Self> {
        if !(config.smoothing >= 0.0 && config.smoothing.is_finite()) {
            return Err(Error::Config(format!(
                "smoothing must be a finite value >= 0, got {}",
                config.smoothing
            )));
        }
        if let Bandwidth::Fixed(h) = config.bandwidth {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::Config(format!("bandwidth must be positive, got {h}")));
            }
        }
        Ok(Self { config })
    }

    pub fn config(&self) -> &KernelPredictorConfig {
        &self.config
    }

    /// Bandwidth actually used for `context`.
    pub fn resolve_bandwidth(&self, context: &Context) -> f64 {
        match self.config.bandwidth {
            Bandwidth::Fixed(h) => h,
            Bandwidth::MedianHeuristic => median_pairwise_distance(context.features()).unwrap_or(1.0),
        }
    }
}

fn median_pairwise_distance(x: ArrayView2<'_, f64>) -> Option<f64> {
    let z = x.nrows();
    if z < 2 {
        return None;
    }
    let mut dists = Vec::with_capacity(z * (z - 1) / 2);
    for i in 0..z {
        for j in (i + 1)..z {
            dists.push(sq_dist(x.row(i), x.row(j)).sqrt());
        }
    }
    let m = dists.len();
    let mid = m / 2;
    let (_, &mut upper, _) = dists.select_nth_unstable_by(mid, f64::total_cmp);
    let median = if m % 2 == 1 {
        upper
    } else {
        // largest element of the lower half
        let lower = dists[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    };
    (median > 0.0).then_some(median)
}

#[inline]
fn sq_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(u, v)| (u - v) * (u - v)).sum()
}

impl ContextPredictor for KernelPredictor {
    fn predict(&self, context: &Context, queries: ArrayView2<'_, f64>, num_classes: usize) -> Result<ProbMatrix> {
        if context.is_empty() {
            return Err(Error::Predictor("empty context".into()));
        }
        if queries.ncols() != context.num_features() {
            return Err(Error::Dimension(format!(
                "queries have {} features, context has {}",
                queries.ncols(),
                context.num_features()
            )));
        }
        if num_classes == 0 {
            return Err(Error::Config("num_classes must be positive".into()));
        }
        if let Some(&y) = context.labels().iter().find(|&&y| y >= num_classes) {
            return Err(Error::Predictor(format!(
                "context label {y} inconsistent with {num_classes} classes"
            )));
        }

        let h = self.resolve_bandwidth(context);
        let inv_two_h2 = 1.0 / (2.0 * h * h);
        let beta = self.config.smoothing;
        let ctx_x = context.features();
        let ctx_y = context.labels();

        let rows: Vec<Vec<f64>> = (0..queries.nrows())
            .into_par_iter()
            .map(|r| {
                let q = queries.row(r);
                let mut scaled: Vec<(f64, usize)> = ctx_x
                    .outer_iter()
                    .zip(ctx_y)
                    .map(|(xi, &yi)| (sq_dist(q, xi) * inv_two_h2, yi))
                    .collect();
                // Without smoothing the ratio is shift invariant, so subtract
                // the nearest distance to keep at least one weight at 1.
                if beta == 0.0 {
                    let min = scaled.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
                    scaled.iter_mut().for_each(|p| p.0 -= min);
                }
                let mut weights: Vec<(f64, usize)> = scaled.into_iter().map(|(e, y)| ((-e).exp(), y)).collect();
                weights.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

                let mut class_mass = vec![0.0; num_classes];
                let mut total = 0.0;
                for &(w, y) in &weights {
                    class_mass[y] += w;
                    total += w;
                }
                let denom = total + num_classes as f64 * beta;
                class_mass.iter().map(|&m| (m + beta) / denom).collect()
            })
            .collect();

        let m = rows.len();
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        let values = Array2::from_shape_vec((m, num_classes), flat).map_err(|e| Error::Dimension(e.to_string()))?;
        Ok(ProbMatrix::from_raw(values))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;

    fn predictor(bandwidth: Bandwidth, smoothing: f64) -> KernelPredictor {
        KernelPredictor::new(KernelPredictorConfig { bandwidth, smoothing }).unwrap()
    }

    #[test]
    fn single_context_point_beta_zero() {
        let ctx = Context::new(array![[0.3, -1.0]], vec![0]).unwrap();
        let p = predictor(Bandwidth::MedianHeuristic, 0.0)
            .predict(&ctx, array![[0.3, -1.0]].view(), 3)
            .unwrap();
        assert_eq!(p.row(0).to_vec(), vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn huge_smoothing_is_uniform() {
        let ctx = Context::new(array![[0.0], [1.0], [2.0]], vec![0, 0, 1]).unwrap();
        let p = predictor(Bandwidth::Fixed(1.0), 1e15)
            .predict(&ctx, array![[0.0]].view(), 2)
            .unwrap();
        assert_relative_eq!(p.row(0)[0], 0.5, epsilon = 1e-12);
        assert_relative_eq!(p.row(0)[1], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn equidistant_opposite_classes() {
        let ctx = Context::new(array![[-1.0], [1.0]], vec![0, 1]).unwrap();
        let p = predictor(Bandwidth::Fixed(0.7), 0.0)
            .predict(&ctx, array![[0.0]].view(), 2)
            .unwrap();
        assert_eq!(p.row(0).to_vec(), vec![0.5, 0.5]);
    }

    #[test]
    fn hand_evaluated_formula() {
        // context x=(0,1,2), y=(0,1,0), query 0.5, h=1, beta=0.1, K=2
        let ctx = Context::new(array![[0.0], [1.0], [2.0]], vec![0, 1, 0]).unwrap();
        let p = predictor(Bandwidth::Fixed(1.0), 0.1)
            .predict(&ctx, array![[0.5]].view(), 2)
            .unwrap();
        let k0 = (-0.125f64).exp();
        let k1 = (-0.125f64).exp();
        let k2 = (-1.125f64).exp();
        let denom = k0 + k1 + k2 + 0.2;
        assert_relative_eq!(p.row(0)[0], (k0 + k2 + 0.1) / denom, epsilon = 1e-15);
        assert_relative_eq!(p.row(0)[1], (k1 + 0.1) / denom, epsilon = 1e-15);
        // independent evaluation: 0.5708957691966904 / 0.4291042308033096
        assert_relative_eq!(p.row(0)[0], 0.570_895_769_196_690_4, epsilon = 1e-12);
    }

    #[test]
    fn median_heuristic() {
        let x = array![[0.0], [1.0], [3.0]];
        // distances 1, 3, 2 -> median 2
        assert_eq!(median_pairwise_distance(x.view()), Some(2.0));
        let x = array![[0.0], [1.0], [3.0], [7.0]];
        // 1,3,7,2,6,4 -> sorted 1,2,3,4,6,7 -> 3.5
        assert_eq!(median_pairwise_distance(x.view()), Some(3.5));
        assert_eq!(median_pairwise_distance(array![[1.0], [1.0]].view()), None);
        let ctx = Context::new(array![[2.0], [2.0]], vec![0, 1]).unwrap();
        assert_eq!(KernelPredictor::default().resolve_bandwidth(&ctx), 1.0);
    }

    #[test]
    fn errors() {
        let p = KernelPredictor::default();
        let empty = Context::new(Array2::zeros((0, 2)), vec![]).unwrap();
        assert!(p.predict(&empty, array![[0.0, 0.0]].view(), 2).is_err());
        let ctx = Context::new(array![[0.0, 1.0]], vec![2]).unwrap();
        assert!(p.predict(&ctx, array![[0.0, 0.0]].view(), 2).is_err());
        assert!(p.predict(&ctx, array![[0.0]].view(), 3).is_err());
        assert!(KernelPredictor::new(KernelPredictorConfig {
            bandwidth: Bandwidth::Fixed(0.0),
            smoothing: 0.1
        })
        .is_err());
        assert!(KernelPredictor::new(KernelPredictorConfig {
            bandwidth: Bandwidth::Fixed(1.0),
            smoothing: -1.0
        })
        .is_err());
    }

    #[test]
    fn bandwidth_serde() {
        let cfg = KernelPredictorConfig::default();
        let s = serde_json::to_string(&cfg).unwrap();
        assert_eq!(s, r#"{"bandwidth":"median-heuristic","smoothing":0.1}"#);
        let fixed: KernelPredictorConfig = serde_json::from_str(r#"{"bandwidth":0.5,"smoothing":0.0}"#).unwrap();
        assert_eq!(fixed.bandwidth, Bandwidth::Fixed(0.5));
        assert!(serde_json::from_str::<KernelPredictorConfig>(r#"{"bandwidth":-1,"smoothing":0.0}"#).is_err());
    }
}
