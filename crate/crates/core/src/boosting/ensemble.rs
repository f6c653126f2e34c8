//! The boosting loop over context-conditioned weak learners, ensemble
//! prediction, and model persistence.

use std::io::Write;
use std::path::Path;

use ndarray::{s, Array2, ArrayView2, Zip};
use serde::{Deserialize, Serialize};

use super::line_search::line_search;
use super::loss::{ce_loss, residuals, softmax_probs, ScoreMatrix};
use super::update::{adaboost_alpha, update_adaboost, update_exphadamard, update_hadamard, UpdateRule};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::learners::{Context, ContextPredictor, LearnerSpec, ProbMatrix};
use crate::rng::{round_stream, stream_rng};
use crate::sampler::{sample_without_replacement, WeightVector};

pub const MODEL_VERSION: &str = "boostpfn-model/1";
pub const DEFAULT_BATCH_SIZE: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GammaMode {
    #[serde(alias = "line-search")]
    LineSearch,
    /// Use the AdaBoost coefficient `alpha` as the step. Only valid with the
    /// AdaBoost update rule.
    Alpha,
}

impl std::fmt::Display for GammaMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GammaMode::LineSearch => "line-search",
            GammaMode::Alpha => "alpha",
        })
    }
}

impl std::str::FromStr for GammaMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "line-search" | "line_search" => Ok(GammaMode::LineSearch),
            "alpha" => Ok(GammaMode::Alpha),
            _ => Err(Error::Config(format!(
                "gamma mode must be line-search or alpha, got {s:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostConfig {
    pub rounds: usize,
    pub context_size: usize,
    pub update_rule: UpdateRule,
    pub gamma_mode: GammaMode,
    pub rgbm_mode: bool,
    pub gamma_max: f64,
    pub line_search_tol: f64,
    pub epsilon_clamp: f64,
    pub seed: u64,
}

impl Default for BoostConfig {
    fn default() -> Self {
        Self {
            rounds: 10,
            context_size: 500,
            update_rule: UpdateRule::ExpHadamard,
            gamma_mode: GammaMode::LineSearch,
            rgbm_mode: false,
            gamma_max: 2.0,
            line_search_tol: 1e-6,
            epsilon_clamp: 1e-10,
            seed: 0,
        }
    }
}

impl BoostConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::Config("rounds must be >= 1".into()));
        }
        if self.context_size == 0 {
            return Err(Error::Config("context size must be >= 1".into()));
        }
        if !(self.gamma_max > 0.0 && self.gamma_max.is_finite()) {
            return Err(Error::Config(format!(
                "gamma_max must be positive, got {}",
                self.gamma_max
            )));
        }
        if self.line_search_tol.is_nan() || self.line_search_tol <= 0.0 {
            return Err(Error::Config("line_search_tol must be positive".into()));
        }
        if !(self.epsilon_clamp > 0.0 && self.epsilon_clamp < 0.5) {
            return Err(Error::Config("epsilon_clamp must lie in (0, 0.5)".into()));
        }
        if self.gamma_mode == GammaMode::Alpha && self.update_rule != UpdateRule::AdaBoost {
            return Err(Error::Config(
                "gamma mode alpha requires the adaboost update rule".into(),
            ));
        }
        Ok(())
    }
}

/// Which weight vector a round's context was drawn from. Only recorded in
/// RGBM mode, where three candidates compete.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CandidateSource {
    Current,
    Previous,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Round {
    pub gamma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    pub rule: UpdateRule,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<CandidateSource>,
    pub context: Context,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel {
    pub version: String,
    pub config: BoostConfig,
    /// Predictor the rounds were fitted with, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learner: Option<LearnerSpec>,
    pub num_classes: usize,
    pub feature_names: Vec<String>,
    pub label_names: Vec<String>,
    pub rounds: Vec<Round>,
}

impl EnsembleModel {
    pub fn num_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: EnsembleModel = serde_json::from_str(text)?;
        if model.version != MODEL_VERSION {
            return Err(Error::Parse(format!(
                "unsupported model version {:?} (expected {MODEL_VERSION:?})",
                model.version
            )));
        }
        if model.label_names.len() != model.num_classes {
            return Err(Error::Parse("label_names length differs from num_classes".into()));
        }
        for (m, round) in model.rounds.iter().enumerate() {
            if round.context.is_empty() || round.context.num_features() != model.num_features() {
                return Err(Error::Parse(format!("round {m} has a malformed context")));
            }
            if !round.gamma.is_finite() {
                return Err(Error::Parse(format!("round {m} has a non-finite gamma")));
            }
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Cross-entropy after each round; index 0 is the loss of `F_0 = 0`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LossCurve {
    pub train: Vec<f64>,
    pub test: Option<Vec<f64>>,
}

impl LossCurve {
    /// CSV with header `round,train_loss,test_loss`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["round", "train_loss", "test_loss"])?;
        for (m, train) in self.train.iter().enumerate() {
            let test = self.test.as_ref().map(|t| format!("{:?}", t[m])).unwrap_or_default();
            wtr.write_record([m.to_string(), format!("{train:?}"), test])?;
        }
        wtr.flush().map_err(|e| Error::io("<curve writer>", e))?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub model: EnsembleModel,
    pub curve: LossCurve,
}

fn draw_context(train: &Dataset, w: &WeightVector, z: usize, seed: u64, stream: u64) -> Result<Context> {
    // Rules like Hadamard can drive weights to exactly zero; the context then
    // shrinks to the positive support.
    let z = z.min(w.support());
    let subset = sample_without_replacement(w, z, &mut stream_rng(seed, stream))?;
    Ok(Context::gather(train.features(), train.labels(), subset.indices()))
}

/// `min_sigma sum_i |g_i - sigma h_i|^2` in closed form.
pub fn residual_fit_error(gradient: ArrayView2<'_, f64>, h: ArrayView2<'_, f64>) -> f64 {
    let gg: f64 = gradient.iter().map(|v| v * v).sum();
    let hh: f64 = h.iter().map(|v| v * v).sum();
    let gh: f64 = Zip::from(gradient).and(h).fold(0.0, |acc, &g, &hv| acc + g * hv);
    if hh > 0.0 {
        gg - gh * gh / hh
    } else {
        gg
    }
}

pub fn boost_fit<P: ContextPredictor + ?Sized>(
    train: &Dataset,
    predictor: &P,
    config: &BoostConfig,
) -> Result<FitResult> {
    boost_fit_monitored(train, predictor, config, None)
}

/// Runs the boosting loop. When `eval` is given, its cross-entropy is
/// tracked alongside the training loss.
pub fn boost_fit_monitored<P: ContextPredictor + ?Sized>(
    train: &Dataset,
    predictor: &P,
    config: &BoostConfig,
    eval: Option<&Dataset>,
) -> Result<FitResult> {
    config.validate()?;
    let n = train.len();
    let k = train.num_classes();
    if config.context_size > n {
        return Err(Error::Config(format!(
            "context size {} exceeds training size {n}",
            config.context_size
        )));
    }
    if let Some(ev) = eval {
        if ev.num_features() != train.num_features() || ev.num_classes() != k {
            return Err(Error::Dimension(
                "evaluation set does not match the training schema".into(),
            ));
        }
    }
    let labels = train.labels();
    let x = train.features();

    let mut scores: ScoreMatrix = Array2::zeros((n, k));
    let mut eval_scores = eval.map(|ev| Array2::<f64>::zeros((ev.len(), k)));
    let mut curve = LossCurve {
        train: vec![ce_loss(labels, scores.view())],
        test: eval.map(|ev| vec![ce_loss(ev.labels(), eval_scores.as_ref().unwrap().view())]),
    };

    let uniform = WeightVector::uniform(n);
    let mut prev_weights = uniform.clone();
    let mut prev_predictions: Option<Vec<usize>> = None;
    let mut rounds = Vec::with_capacity(config.rounds);

    for m in 0..config.rounds {
        let r = residuals(labels, scores.view());
        let weights = match config.update_rule {
            UpdateRule::ExpHadamard => update_exphadamard(&prev_weights, &r)?,
            UpdateRule::Hadamard => update_hadamard(&prev_weights, &r)?,
            UpdateRule::AdaBoost => match &prev_predictions {
                Some(pred) => update_adaboost(&prev_weights, pred, labels, k, config.epsilon_clamp)?.0,
                None => prev_weights.clone(),
            },
        };

        let (context, h, source) = if config.rgbm_mode {
            let candidates = [
                (CandidateSource::Current, &weights),
                (CandidateSource::Previous, &prev_weights),
                (CandidateSource::Uniform, &uniform),
            ];
            let mut best: Option<(f64, Context, ProbMatrix, CandidateSource)> = None;
            for (c, (source, w)) in candidates.into_iter().enumerate() {
                let ctx = draw_context(train, w, config.context_size, config.seed, round_stream(m, c))?;
                let h = predictor.predict(&ctx, x, k)?;
                let err = residual_fit_error(r.gradient.view(), h.view());
                if best.as_ref().is_none_or(|b| err < b.0) {
                    best = Some((err, ctx, h, source));
                }
            }
            let (_, ctx, h, source) = best.expect("three candidates");
            (ctx, h, Some(source))
        } else {
            let ctx = draw_context(train, &weights, config.context_size, config.seed, round_stream(m, 0))?;
            let h = predictor.predict(&ctx, x, k)?;
            (ctx, h, None)
        };
        check_shape(&h, n, k)?;

        let predictions = h.argmax();
        let alpha = match config.update_rule {
            UpdateRule::AdaBoost => Some(adaboost_alpha(&weights, &predictions, labels, k, config.epsilon_clamp)?.1),
            _ => None,
        };
        let gamma = match config.gamma_mode {
            GammaMode::Alpha => alpha.expect("validated: alpha mode implies adaboost"),
            GammaMode::LineSearch => line_search(
                scores.view(),
                h.view(),
                labels,
                config.gamma_max,
                config.line_search_tol,
            ),
        };

        scores.scaled_add(gamma, &h.view());
        curve.train.push(ce_loss(labels, scores.view()));
        if let (Some(ev), Some(evs)) = (eval, eval_scores.as_mut()) {
            let he = predictor.predict(&context, ev.features(), k)?;
            check_shape(&he, ev.len(), k)?;
            evs.scaled_add(gamma, &he.view());
            if let Some(t) = curve.test.as_mut() {
                t.push(ce_loss(ev.labels(), evs.view()));
            }
        }

        rounds.push(Round {
            gamma,
            alpha,
            rule: config.update_rule,
            source,
            context,
        });
        prev_weights = weights;
        prev_predictions = Some(predictions);
    }

    Ok(FitResult {
        model: EnsembleModel {
            version: MODEL_VERSION.to_string(),
            config: config.clone(),
            learner: None,
            num_classes: k,
            feature_names: train.feature_names().to_vec(),
            label_names: train.label_names().to_vec(),
            rounds,
        },
        curve,
    })
}

fn check_shape(p: &ProbMatrix, m: usize, k: usize) -> Result<()> {
    if p.nrows() != m || p.num_classes() != k {
        return Err(Error::Predictor(format!(
            "predictor returned {}x{}, expected {m}x{k}",
            p.nrows(),
            p.num_classes()
        )));
    }
    Ok(())
}

/// Accumulated scores `F(x) = sum_m gamma_m h_m(x)`, evaluated batch by batch.
pub fn ensemble_scores<P: ContextPredictor + ?Sized>(
    model: &EnsembleModel,
    predictor: &P,
    queries: ArrayView2<'_, f64>,
    batch_size: usize,
) -> Result<ScoreMatrix> {
    if queries.ncols() != model.num_features() {
        return Err(Error::Dimension(format!(
            "queries have {} features, model expects {}",
            queries.ncols(),
            model.num_features()
        )));
    }
    let m = queries.nrows();
    let k = model.num_classes;
    let batch = batch_size.max(1);
    let mut scores = Array2::<f64>::zeros((m, k));
    let mut start = 0;
    while start < m {
        let end = (start + batch).min(m);
        let q = queries.slice(s![start..end, ..]);
        let mut out = scores.slice_mut(s![start..end, ..]);
        for round in &model.rounds {
            let h = predictor.predict(&round.context, q, k)?;
            check_shape(&h, end - start, k)?;
            out.scaled_add(round.gamma, &h.view());
        }
        start = end;
    }
    Ok(scores)
}

pub fn ensemble_predict<P: ContextPredictor + ?Sized>(
    model: &EnsembleModel,
    predictor: &P,
    queries: ArrayView2<'_, f64>,
    batch_size: usize,
) -> Result<ProbMatrix> {
    Ok(softmax_probs(
        ensemble_scores(model, predictor, queries, batch_size)?.view(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::{KernelPredictor, UniformPredictor};
    use crate::synthetic::gaussian_blobs;
    use ndarray::array;

    fn small() -> Dataset {
        gaussian_blobs(&[40, 40], 2, 3.0, 5)
    }

    #[test]
    fn config_validation() {
        let ok = BoostConfig::default();
        assert!(ok.validate().is_ok());
        assert!(BoostConfig {
            rounds: 0,
            ..ok.clone()
        }
        .validate()
        .is_err());
        assert!(BoostConfig {
            gamma_mode: GammaMode::Alpha,
            ..ok.clone()
        }
        .validate()
        .is_err());
        assert!(BoostConfig {
            gamma_mode: GammaMode::Alpha,
            update_rule: UpdateRule::AdaBoost,
            ..ok.clone()
        }
        .validate()
        .is_ok());
        let ds = small();
        let too_big = BoostConfig { context_size: 81, ..ok };
        assert!(boost_fit(&ds, &KernelPredictor::default(), &too_big).is_err());
    }

    #[test]
    fn fit_records_every_round() {
        let ds = small();
        let cfg = BoostConfig {
            rounds: 4,
            context_size: 10,
            ..Default::default()
        };
        let fit = boost_fit(&ds, &KernelPredictor::default(), &cfg).unwrap();
        assert_eq!(fit.model.rounds.len(), 4);
        assert_eq!(fit.curve.train.len(), 5);
        assert!(fit
            .model
            .rounds
            .iter()
            .all(|r| r.context.len() == 10 && r.alpha.is_none()));
    }

    #[test]
    fn alpha_mode_uses_alpha_as_gamma() {
        let ds = small();
        let cfg = BoostConfig {
            rounds: 3,
            context_size: 8,
            update_rule: UpdateRule::AdaBoost,
            gamma_mode: GammaMode::Alpha,
            ..Default::default()
        };
        let fit = boost_fit(&ds, &KernelPredictor::default(), &cfg).unwrap();
        for r in &fit.model.rounds {
            assert_eq!(Some(r.gamma), r.alpha);
        }
    }

    #[test]
    fn single_round_prediction_is_softmax_of_weak_learner() {
        let ds = small();
        let p = KernelPredictor::default();
        let ctx = Context::gather(ds.features(), ds.labels(), &[0, 1, 50, 60]);
        let model = EnsembleModel {
            version: MODEL_VERSION.into(),
            config: BoostConfig::default(),
            learner: None,
            num_classes: 2,
            feature_names: ds.feature_names().to_vec(),
            label_names: ds.label_names().to_vec(),
            rounds: vec![Round {
                gamma: 1.0,
                alpha: None,
                rule: UpdateRule::ExpHadamard,
                source: None,
                context: ctx.clone(),
            }],
        };
        let out = ensemble_predict(&model, &p, ds.features(), 7).unwrap();
        let h = p.predict(&ctx, ds.features(), 2).unwrap();
        assert_eq!(out, softmax_probs(h.view()));

        let mut halves = model.clone();
        halves.rounds[0].gamma = 0.5;
        halves.rounds.push(halves.rounds[0].clone());
        let a = ensemble_scores(&model, &p, ds.features(), 100).unwrap();
        let b = ensemble_scores(&halves, &p, ds.features(), 100).unwrap();
        assert!(a.iter().zip(b.iter()).all(|(u, v)| (u - v).abs() < 1e-15));

        assert!(ensemble_predict(&model, &p, array![[1.0]].view(), 10).is_err());
    }

    #[test]
    fn uniform_learner_never_moves_loss() {
        let ds = small();
        let cfg = BoostConfig {
            rounds: 3,
            context_size: 5,
            ..Default::default()
        };
        let fit = boost_fit(&ds, &UniformPredictor, &cfg).unwrap();
        for l in &fit.curve.train {
            assert!((l - 2f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn model_json_round_trip() {
        let ds = small();
        let cfg = BoostConfig {
            rounds: 2,
            context_size: 6,
            update_rule: UpdateRule::AdaBoost,
            ..Default::default()
        };
        let fit = boost_fit(&ds, &KernelPredictor::default(), &cfg).unwrap();
        let json = fit.model.to_json().unwrap();
        assert_eq!(EnsembleModel::from_json(&json).unwrap(), fit.model);
        let value: serde_json::Value = serde_json::from_str(&json).unwrap();
        let top: Vec<&str> = json
            .lines()
            .filter_map(|l| l.strip_prefix("  \""))
            .filter_map(|l| l.split('"').next())
            .collect();
        assert_eq!(
            top,
            [
                "version",
                "config",
                "num_classes",
                "feature_names",
                "label_names",
                "rounds"
            ]
        );
        let round = &value["rounds"][0];
        assert!(round["alpha"].is_number());
        assert_eq!(round["rule"], "adaboost");
        assert!(round["context"]["features"].is_array());

        let bad = json.replace(MODEL_VERSION, "other/9");
        assert!(EnsembleModel::from_json(&bad).is_err());
    }

    #[test]
    fn curve_csv_layout() {
        let curve = LossCurve {
            train: vec![0.5, 0.25],
            test: None,
        };
        let mut buf = Vec::new();
        curve.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "round,train_loss,test_loss\n0,0.5,\n1,0.25,\n"
        );
        let curve = LossCurve {
            train: vec![0.5],
            test: Some(vec![0.75]),
        };
        let mut buf = Vec::new();
        curve.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "round,train_loss,test_loss\n0,0.5,0.75\n"
        );
    }
}
