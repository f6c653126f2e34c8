//! Gradient boosting where every weak learner is an in-context predictor
//! conditioned on a weighted subsample of the training set.
//!
//! The crate is organized by stage:
//!
//! * [`data`]: CSV ingestion and seeded splits.
//! * [`learners`]: the [`ContextPredictor`] abstraction, a Gaussian-kernel
//!   reference predictor, and an HTTP client for external PFN servers.
//! * [`sampler`]: sampling weights and sequential weighted sampling without
//!   replacement, with exact subset probabilities.
//! * [`boosting`]: residuals, weight-update rules, line search, the boosting
//!   loop, ensemble prediction, and a bagging baseline.
//! * [`metrics`]: one-vs-one AUC, accuracy and log-loss.
//! * [`validation`]: exhaustive checks of the reweighting argument at small N.

pub mod boosting;
pub mod data;
pub mod error;
pub mod learners;
pub mod metrics;
pub mod rng;
pub mod sampler;
pub mod synthetic;
pub mod validation;

pub use boosting::{
    bag_fit_predict, boost_fit, boost_fit_monitored, ensemble_predict, BoostConfig, EnsembleModel, FitResult,
    GammaMode, LossCurve, ScoreMatrix, UpdateRule,
};
pub use data::{load_csv, split, Dataset, SplitSpec};
pub use error::{Error, Result};
pub use learners::{Context, ContextPredictor, KernelPredictor, KernelPredictorConfig, LearnerSpec, ProbMatrix};
pub use metrics::{auc_ovo, evaluate, EvalReport};
pub use sampler::{ContextSubset, WeightVector};
