//! In-context predictors.
//!
//! A [`ContextPredictor`] maps a labeled context set and a batch of query rows
//! to class probabilities, without any fitting step. Boosting treats it as a
//! black box: a weak learner is just a predictor plus the context it is
//! conditioned on.

pub mod bridge;
pub mod kernel;
pub mod probe;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use bridge::{BridgeConfig, BridgeError, BridgePredictor};
pub use kernel::{Bandwidth, KernelPredictor, KernelPredictorConfig};
pub use probe::{duplicate_probe, ProbeMode};

/// Tolerance on row sums of a probability matrix.
pub const ROW_SUM_TOL: f64 = 1e-9;

/// Labeled rows a predictor conditions on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ContextRepr", into = "ContextRepr")]
pub struct Context {
    features: Array2<f64>,
    labels: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct ContextRepr {
    features: Vec<Vec<f64>>,
    labels: Vec<usize>,
}

impl TryFrom<ContextRepr> for Context {
    type Error = Error;

    fn try_from(repr: ContextRepr) -> Result<Self> {
        let z = repr.features.len();
        let d = repr.features.first().map_or(0, Vec::len);
        if repr.features.iter().any(|r| r.len() != d) {
            return Err(Error::Dimension("ragged context feature rows".into()));
        }
        let flat: Vec<f64> = repr.features.into_iter().flatten().collect();
        let features = Array2::from_shape_vec((z, d), flat).map_err(|e| Error::Dimension(e.to_string()))?;
        Context::new(features, repr.labels)
    }
}

impl From<Context> for ContextRepr {
    fn from(ctx: Context) -> Self {
        ContextRepr {
            features: ctx.features.rows().into_iter().map(|r| r.to_vec()).collect(),
            labels: ctx.labels,
        }
    }
}

impl Context {
    pub fn new(features: Array2<f64>, labels: Vec<usize>) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::Dimension(format!(
                "context has {} rows but {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        Ok(Self { features, labels })
    }

    /// Gathers rows `indices` of `features` / `labels`.
    pub fn gather(features: ArrayView2<'_, f64>, labels: &[usize], indices: &[usize]) -> Self {
        Self {
            features: features.select(Axis(0), indices),
            labels: indices.iter().map(|&i| labels[i]).collect(),
        }
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_features(&self) -> usize {
        self.features.ncols()
    }

    /// Returns a copy with `count` copies of `(x, y)` appended.
    pub fn with_appended(&self, x: ArrayView1<'_, f64>, y: usize, count: usize) -> Result<Self> {
        if x.len() != self.num_features() {
            return Err(Error::Dimension(format!(
                "row of width {} appended to context of width {}",
                x.len(),
                self.num_features()
            )));
        }
        let mut features = self.features.clone();
        for _ in 0..count {
            features.push_row(x).map_err(|e| Error::Dimension(e.to_string()))?;
        }
        let mut labels = self.labels.clone();
        labels.extend(std::iter::repeat_n(y, count));
        Ok(Self { features, labels })
    }

    /// Returns a copy with the rows at `positions` overwritten by `(x, y)`.
    pub fn with_replaced(&self, x: ArrayView1<'_, f64>, y: usize, positions: &[usize]) -> Result<Self> {
        if x.len() != self.num_features() {
            return Err(Error::Dimension(format!(
                "row of width {} written into context of width {}",
                x.len(),
                self.num_features()
            )));
        }
        let mut out = self.clone();
        for &p in positions {
            if p >= out.len() {
                return Err(Error::Dimension(format!("position {p} outside context")));
            }
            out.features.row_mut(p).assign(&x);
            out.labels[p] = y;
        }
        Ok(out)
    }
}

/// Row-stochastic `m x K` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMatrix(Array2<f64>);

impl ProbMatrix {
    /// Validates that every row is a probability vector within [`ROW_SUM_TOL`].
    pub fn new(values: Array2<f64>) -> Result<Self> {
        for (i, row) in values.rows().into_iter().enumerate() {
            if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(Error::Predictor(format!("row {i} has entries outside [0, 1]")));
            }
            let s = row.sum();
            if (s - 1.0).abs() > ROW_SUM_TOL {
                return Err(Error::Predictor(format!("row {i} sums to {s}")));
            }
        }
        Ok(Self(values))
    }

    pub(crate) fn from_raw(values: Array2<f64>) -> Self {
        debug_assert!(values.rows().into_iter().all(|r| (r.sum() - 1.0).abs() <= ROW_SUM_TOL));
        Self(values)
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.0.view()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.0.row(i)
    }

    pub fn nrows(&self) -> usize {
        self.0.nrows()
    }

    pub fn num_classes(&self) -> usize {
        self.0.ncols()
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.0
    }

    /// Per-row argmax, lowest index on ties.
    pub fn argmax(&self) -> Vec<usize> {
        self.0.rows().into_iter().map(|r| argmax(r)).collect()
    }
}

pub(crate) fn argmax(row: ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (k, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = k;
        }
    }
    best
}

/// Anything that predicts class probabilities for `queries` given a labeled
/// context. Implementations must be deterministic, and their output must not
/// depend on the order of context rows.
pub trait ContextPredictor: Send + Sync {
    fn predict(&self, context: &Context, queries: ArrayView2<'_, f64>, num_classes: usize) -> Result<ProbMatrix>;
}

impl<P: ContextPredictor + ?Sized> ContextPredictor for &P {
    fn predict(&self, context: &Context, queries: ArrayView2<'_, f64>, num_classes: usize) -> Result<ProbMatrix> {
        (**self).predict(context, queries, num_classes)
    }
}

impl<P: ContextPredictor + ?Sized> ContextPredictor for Box<P> {
    fn predict(&self, context: &Context, queries: ArrayView2<'_, f64>, num_classes: usize) -> Result<ProbMatrix> {
        (**self).predict(context, queries, num_classes)
    }
}

/// Serializable description of a predictor, used by the CLI and stored in
/// model files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LearnerSpec {
    Kernel(KernelPredictorConfig),
    Bridge { endpoint: String },
}

impl LearnerSpec {
    pub fn build(&self, timeout: std::time::Duration) -> Result<Box<dyn ContextPredictor>> {
        Ok(match self {
            LearnerSpec::Kernel(cfg) => Box::new(KernelPredictor::new(*cfg)?),
            LearnerSpec::Bridge { endpoint } => {
                let mut cfg = BridgeConfig::new(endpoint.clone());
                cfg.timeout = timeout;
                Box::new(BridgePredictor::new(cfg))
            }
        })
    }
}

impl std::str::FromStr for LearnerSpec {
    type Err = Error;

    /// `kernel` or `bridge=URL`.
    fn from_str(s: &str) -> Result<Self> {
        if s == "kernel" {
            return Ok(LearnerSpec::Kernel(KernelPredictorConfig::default()));
        }
        match s.strip_prefix("bridge=") {
            Some(url) if !url.is_empty() => Ok(LearnerSpec::Bridge {
                endpoint: url.to_string(),
            }),
            _ => Err(Error::Config(format!(
                "learner must be kernel or bridge=URL, got {s:?}"
            ))),
        }
    }
}

/// Predictor that ignores its context and returns the uniform distribution.
/// Useful as a null model.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformPredictor;

impl ContextPredictor for UniformPredictor {
    fn predict(&self, _context: &Context, queries: ArrayView2<'_, f64>, num_classes: usize) -> Result<ProbMatrix> {
        Ok(ProbMatrix::from_raw(Array2::from_elem(
            (queries.nrows(), num_classes),
            1.0 / num_classes as f64,
        )))
    }
}
