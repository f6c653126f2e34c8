//! Gradient boosting with context-sampled weak learners.
//!
//! Each round computes cross-entropy residuals of the current scores, turns
//! them into sampling weights with one of the [`UpdateRule`]s, draws a
//! context of `context_size` rows without replacement, and adds the
//! predictor conditioned on that context with a line-searched step.

mod bagging;
mod ensemble;
mod line_search;
mod loss;
mod update;

pub use bagging::bag_fit_predict;
pub use ensemble::{
    boost_fit, boost_fit_monitored, ensemble_predict, ensemble_scores, residual_fit_error, BoostConfig,
    CandidateSource, EnsembleModel, FitResult, GammaMode, LossCurve, Round, DEFAULT_BATCH_SIZE, MODEL_VERSION,
};
pub use line_search::{golden_section, line_search};
pub use loss::{ce_loss, residuals, shifted, softmax_probs, Residuals, ScoreMatrix};
pub use update::{adaboost_alpha, alpha_from_error, update_adaboost, update_exphadamard, update_hadamard, UpdateRule};
