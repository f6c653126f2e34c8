//! Subcommand implementations. Each takes fully merged arguments, computes
//! everything in memory and only then writes its outputs.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anyhow::{anyhow, bail, Context as _, Result};
use boostpfn::boosting::{bag_fit_predict, boost_fit_monitored, ensemble_predict, DEFAULT_BATCH_SIZE};
use boostpfn::data::load_feature_csv;
use boostpfn::learners::{duplicate_probe, Bandwidth, BridgeConfig, ProbeMode};
use boostpfn::synthetic::gaussian_blobs;
use boostpfn::validation::{
    k_above_threshold, lemma_layout, random_assumption_search, verify_reweighting, LemmaScenario,
};
use boostpfn::{
    load_csv, sampler, BoostConfig, Context, ContextPredictor, Dataset, EnsembleModel, Error, GammaMode,
    KernelPredictorConfig, LearnerSpec, ProbMatrix, UpdateRule,
};
use serde::Serialize;

use crate::args::{
    AblateArgs, AssumptionArgs, DataArgs, EvaluateArgs, FitArgs, LearnerArgs, LemmaArgs, PredictArgs, ProbeArgs,
    ProbeModeArg,
};
use crate::manifest::{Outputs, RunManifest};

/// Environment variable holding the bridge request timeout in milliseconds.
pub const BRIDGE_TIMEOUT_ENV: &str = "BOOSTPFN_BRIDGE_TIMEOUT_MS";

pub const DEFAULT_ROUNDS: usize = 10;
pub const DEFAULT_CONTEXT_SIZE: usize = 500;
pub const DEFAULT_PROBE_COUNTS: [usize; 7] = [0, 1, 2, 10, 20, 50, 100];

pub fn bridge_timeout() -> Result<Duration> {
    match std::env::var(BRIDGE_TIMEOUT_ENV) {
        Ok(v) => {
            let ms: u64 = v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{BRIDGE_TIMEOUT_ENV} must be an integer, got {v:?}")))?;
            Ok(Duration::from_millis(ms))
        }
        Err(_) => Ok(boostpfn::learners::bridge::DEFAULT_TIMEOUT),
    }
}

fn required<T: Clone>(value: &Option<T>, flag: &str) -> Result<T> {
    value
        .clone()
        .ok_or_else(|| Error::Config(format!("missing required option --{flag}")).into())
}

/// Resolves `--learner`, `--bandwidth` and `--smoothing` into a spec.
pub fn resolve_learner(args: &LearnerArgs, kernel_default: KernelPredictorConfig) -> Result<LearnerSpec> {
    let spec: LearnerSpec = args.learner.as_deref().unwrap_or("kernel").parse()?;
    Ok(match spec {
        LearnerSpec::Kernel(_) => LearnerSpec::Kernel(KernelPredictorConfig {
            bandwidth: args.bandwidth.unwrap_or(kernel_default.bandwidth),
            smoothing: args.smoothing.unwrap_or(kernel_default.smoothing),
        }),
        bridge @ LearnerSpec::Bridge { .. } => {
            if args.bandwidth.is_some() || args.smoothing.is_some() {
                return Err(
                    Error::Config("--bandwidth and --smoothing only apply to the kernel learner".into()).into(),
                );
            }
            bridge
        }
    })
}

fn learner_name(spec: &LearnerSpec) -> String {
    match spec {
        LearnerSpec::Kernel(_) => "kernel".into(),
        LearnerSpec::Bridge { endpoint } => format!("bridge={endpoint}"),
    }
}

/// Writes the resolved learner back into flag form for manifests.
fn learner_args(spec: &LearnerSpec) -> LearnerArgs {
    match spec {
        LearnerSpec::Kernel(cfg) => LearnerArgs {
            learner: Some(learner_name(spec)),
            bandwidth: Some(cfg.bandwidth),
            smoothing: Some(cfg.smoothing),
        },
        LearnerSpec::Bridge { .. } => LearnerArgs {
            learner: Some(learner_name(spec)),
            ..Default::default()
        },
    }
}

fn build_predictor(spec: &LearnerSpec) -> Result<Box<dyn ContextPredictor>> {
    let timeout = bridge_timeout()?;
    if let LearnerSpec::Bridge { endpoint } = spec {
        // fail fast with a clear message rather than on the first round
        let mut cfg = BridgeConfig::new(endpoint.clone());
        cfg.timeout = timeout;
        boostpfn::learners::BridgePredictor::new(cfg)
            .health()
            .map_err(Error::from)
            .with_context(|| format!("bridge at {endpoint} is not healthy"))?;
    }
    Ok(spec.build(timeout)?)
}

fn load_labeled(path: &Path, label_col: &str, manifest: &mut RunManifest) -> Result<Dataset> {
    manifest.add_input(path)?;
    Ok(load_csv(path, label_col)?)
}

/// Puts `other` on `train`'s feature and class layout.
fn align(other: Dataset, train_features: &[String], vocabulary: &[String], what: &str) -> Result<Dataset> {
    if other.feature_names() != train_features {
        return Err(Error::Data(format!(
            "{what} feature columns {:?} differ from the model's {:?}",
            other.feature_names(),
            train_features
        ))
        .into());
    }
    Ok(other.relabel(vocabulary)?)
}

fn json_text(value: &impl Serialize) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// Writes a JSON report to `out` (with a manifest) or prints it.
fn emit_report(report: &impl Serialize, out: Option<&PathBuf>, manifest: RunManifest) -> Result<()> {
    let text = json_text(report)?;
    match out {
        Some(path) => {
            let mut outputs = Outputs::default();
            outputs.add(path, text);
            outputs.commit_with_manifest(path, manifest)
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn cmd_fit(args: FitArgs) -> Result<()> {
    let train_path = required(&args.train, "train")?;
    let label_col = required(&args.label_col, "label-col")?;
    let out = required(&args.out, "out")?;
    let spec = resolve_learner(&args.boost.learner, KernelPredictorConfig::default())?;

    let mut manifest = RunManifest::new("fit", (), None)?;
    manifest.add_input(&train_path)?;
    let train = manifest.time("load", || load_csv(&train_path, &label_col))?;
    let test = match &args.test {
        Some(p) => {
            let t = load_labeled(p, &label_col, &mut manifest)?;
            Some(align(t, train.feature_names(), train.label_names(), "test")?)
        }
        None => None,
    };

    let config = BoostConfig {
        rounds: args.boost.rounds.unwrap_or(DEFAULT_ROUNDS),
        context_size: args.boost.context_size.unwrap_or(DEFAULT_CONTEXT_SIZE.min(train.len())),
        update_rule: args.update.unwrap_or(UpdateRule::ExpHadamard),
        gamma_mode: args.boost.gamma_mode.unwrap_or(GammaMode::LineSearch),
        rgbm_mode: args.boost.rgbm,
        seed: args.boost.seed.unwrap_or(0),
        ..BoostConfig::default()
    };
    config.validate()?;
    let predictor = build_predictor(&spec)?;

    let fit = manifest.time("fit", || {
        boost_fit_monitored(&train, predictor.as_ref(), &config, test.as_ref())
    })?;
    let mut model = fit.model;
    model.learner = Some(spec.clone());

    let resolved = FitArgs {
        train: Some(train_path),
        label_col: Some(label_col),
        update: Some(config.update_rule),
        test: args.test.clone(),
        out: Some(out.clone()),
        curves: args.curves.clone(),
        boost: crate::args::BoostArgs {
            rounds: Some(config.rounds),
            context_size: Some(config.context_size),
            gamma_mode: Some(config.gamma_mode),
            rgbm: config.rgbm_mode,
            seed: Some(config.seed),
            learner: learner_args(&spec),
        },
    };
    manifest.config = serde_json::to_value(&resolved)?;
    manifest.seed = Some(config.seed);

    let mut outputs = Outputs::default();
    outputs.add(&out, model.to_json()?);
    if let Some(curves) = &args.curves {
        let mut buf = Vec::new();
        fit.curve.write_csv(&mut buf)?;
        outputs.add(curves, buf);
    }
    outputs.commit_with_manifest(&out, manifest)
}

fn model_predictor(model: &EnsembleModel, override_learner: Option<&str>) -> Result<Box<dyn ContextPredictor>> {
    let spec = match override_learner {
        Some(s) => s.parse::<LearnerSpec>()?,
        None => model
            .learner
            .clone()
            .ok_or_else(|| Error::Config("model does not record its learner; pass --learner".into()))?,
    };
    build_predictor(&spec)
}

fn load_model(path: &Path, manifest: &mut RunManifest) -> Result<EnsembleModel> {
    manifest.add_input(path)?;
    Ok(EnsembleModel::load(path)?)
}

fn batch_size(value: Option<usize>) -> Result<usize> {
    match value.unwrap_or(DEFAULT_BATCH_SIZE) {
        0 => Err(Error::Config("--batch-size must be positive".into()).into()),
        b => Ok(b),
    }
}

/// CSV with header `id,p_<class>...,predicted`.
pub fn predictions_csv(probs: &ProbMatrix, label_names: &[String]) -> String {
    let mut out = String::from("id");
    for name in label_names {
        out.push_str(",p_");
        out.push_str(name);
    }
    out.push_str(",predicted\n");
    for (i, pred) in probs.argmax().into_iter().enumerate() {
        out.push_str(&i.to_string());
        for p in probs.row(i) {
            out.push(',');
            out.push_str(&format!("{p:?}"));
        }
        out.push(',');
        out.push_str(&label_names[pred]);
        out.push('\n');
    }
    out
}

pub fn cmd_predict(args: PredictArgs) -> Result<()> {
    let model_path = required(&args.model, "model")?;
    let data_path = required(&args.data, "data")?;
    let out = required(&args.out, "out")?;
    let batch = batch_size(args.batch_size)?;

    let mut manifest = RunManifest::new("predict", &args, None)?;
    let model = load_model(&model_path, &mut manifest)?;
    manifest.seed = Some(model.config.seed);
    manifest.add_input(&data_path)?;
    let queries = manifest.time("load", || load_feature_csv(&data_path, &model.feature_names))?;
    let predictor = model_predictor(&model, args.learner.as_deref())?;
    let probs = manifest.time("predict", || {
        ensemble_predict(&model, predictor.as_ref(), queries.view(), batch)
    })?;

    let mut outputs = Outputs::default();
    outputs.add(&out, predictions_csv(&probs, &model.label_names));
    outputs.commit_with_manifest(&out, manifest)
}

#[derive(Debug, Clone, Serialize)]
pub struct BaggingReport {
    pub num_bags: usize,
    pub context_size: usize,
    pub seed: u64,
    pub report: boostpfn::EvalReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvaluateReport {
    pub model: boostpfn::EvalReport,
    pub bagging: Option<BaggingReport>,
}

pub fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let model_path = required(&args.model, "model")?;
    let test_path = required(&args.test, "test")?;
    let label_col = required(&args.label_col, "label-col")?;
    let batch = batch_size(args.batch_size)?;

    let mut manifest = RunManifest::new("evaluate", &args, None)?;
    let model = load_model(&model_path, &mut manifest)?;
    manifest.seed = Some(model.config.seed);
    let test = load_labeled(&test_path, &label_col, &mut manifest)?;
    let test = align(test, &model.feature_names, &model.label_names, "test")?;
    let predictor = model_predictor(&model, args.learner.as_deref())?;

    let probs = manifest.time("predict", || {
        ensemble_predict(&model, predictor.as_ref(), test.features(), batch)
    })?;
    let report = boostpfn::evaluate(test.labels(), &probs)?;

    let bagging = match args.bags {
        None => None,
        Some(num_bags) => {
            let train_path = args
                .train
                .clone()
                .ok_or_else(|| Error::Config("--bags needs --train".into()))?;
            let train = load_labeled(&train_path, &label_col, &mut manifest)?;
            let train = align(train, &model.feature_names, &model.label_names, "train")?;
            let context_size = args.context_size.unwrap_or(model.config.context_size);
            let seed = args.seed.unwrap_or(model.config.seed);
            let bag_probs = manifest.time("bagging", || {
                bag_fit_predict(
                    &train,
                    predictor.as_ref(),
                    num_bags,
                    context_size,
                    seed,
                    test.features(),
                )
            })?;
            Some(BaggingReport {
                num_bags,
                context_size,
                seed,
                report: boostpfn::evaluate(test.labels(), &bag_probs)?,
            })
        }
    };
    emit_report(&EvaluateReport { model: report, bagging }, args.out.as_ref(), manifest)
}

/// Dataset for the validate subcommands: the CSV when given, else `builtin`.
fn validation_data(args: &DataArgs, builtin: impl FnOnce() -> Dataset, manifest: &mut RunManifest) -> Result<Dataset> {
    match &args.data {
        Some(path) => {
            let label_col = required(&args.label_col, "label-col")?;
            load_labeled(path, &label_col, manifest)
        }
        None => Ok(builtin()),
    }
}

/// Kernel settings for the validate subcommands. The median heuristic
/// rescales with every context, which can break the add-the-target
/// comparisons on small contexts, so these default to a fixed bandwidth.
pub fn validation_kernel() -> KernelPredictorConfig {
    KernelPredictorConfig {
        bandwidth: Bandwidth::Fixed(1.0),
        smoothing: 0.1,
    }
}

pub fn assumption_blobs(seed: u64) -> Dataset {
    gaussian_blobs(&[60, 60, 60], 3, 1.0, seed)
}

pub fn probe_blobs() -> Dataset {
    gaussian_blobs(&[100, 100], 4, 1.0, 3)
}

pub fn cmd_validate_lemma(args: LemmaArgs) -> Result<()> {
    let spec = resolve_learner(&args.learner, validation_kernel())?;
    let mut manifest = RunManifest::new("validate lemma", &args, None)?;
    let train = validation_data(&args.data, lemma_layout, &mut manifest)?;
    let n = train.len();
    if let Some(want) = args.n {
        if want != n {
            return Err(Error::Config(format!("--n {want} but the data has {n} rows")).into());
        }
    }
    let z = args.z.unwrap_or(2);
    let target = args.target.unwrap_or(0);
    let k = match args.k {
        Some(k) => k,
        None => k_above_threshold(n, z, target, 0.5)?,
    };
    let predictor = build_predictor(&spec)?;
    let scenario = LemmaScenario { n, z, target, k };
    let report = manifest.time("enumerate", || verify_reweighting(predictor.as_ref(), &train, scenario))?;
    emit_report(&report, args.out.as_ref(), manifest)
}

pub fn cmd_validate_assumption(args: AssumptionArgs) -> Result<()> {
    let spec = resolve_learner(&args.learner, validation_kernel())?;
    let seed = args.seed.unwrap_or(0);
    let mut manifest = RunManifest::new("validate assumption", &args, Some(seed))?;
    let train = validation_data(&args.data, || assumption_blobs(seed), &mut manifest)?;
    let predictor = build_predictor(&spec)?;
    let context_size = args.context_size.unwrap_or(5);
    let trials = args.trials.unwrap_or(10_000);
    let report = manifest.time("search", || {
        random_assumption_search(predictor.as_ref(), &train, context_size, trials, seed)
    })?;
    emit_report(&report, args.out.as_ref(), manifest)
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbePoint {
    pub count: usize,
    pub probability: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbeReport {
    pub target: usize,
    pub label: String,
    pub context_size: usize,
    pub add: Option<Vec<ProbePoint>>,
    pub replace: Option<Vec<ProbePoint>>,
}

pub fn cmd_validate_probe(args: ProbeArgs) -> Result<()> {
    let spec = resolve_learner(&args.learner, validation_kernel())?;
    let seed = args.seed.unwrap_or(0);
    let mut manifest = RunManifest::new("validate probe", &args, Some(seed))?;
    let data = validation_data(&args.data, probe_blobs, &mut manifest)?;
    let target = args.target.unwrap_or(0);
    if target >= data.len() {
        return Err(Error::Config(format!("--target {target} outside 0..{}", data.len())).into());
    }
    let context_size = args.context_size.unwrap_or(150.min(data.len() - 1));
    if context_size == 0 || context_size >= data.len() {
        return Err(Error::Config(format!("--context-size must lie in 1..{}", data.len())).into());
    }
    let mut counts = args.counts.clone().unwrap_or_else(|| DEFAULT_PROBE_COUNTS.to_vec());
    counts.sort_unstable();
    counts.dedup();

    // base context: uniform draw over every row but the target
    let mut w = vec![1.0; data.len()];
    w[target] = 0.0;
    let w = sampler::normalize(&w)?;
    let subset = sampler::sample_without_replacement(&w, context_size, &mut boostpfn::rng::stream_rng(seed, 1))?;
    let base = Context::gather(data.features(), data.labels(), subset.indices());
    let y = data.labels()[target];
    let predictor = build_predictor(&spec)?;

    let run = |mode: ProbeMode| -> Result<Vec<ProbePoint>> {
        let points = duplicate_probe(
            predictor.as_ref(),
            &base,
            data.row(target),
            y,
            data.num_classes(),
            mode,
            &counts,
            seed,
        )?;
        Ok(points
            .into_iter()
            .map(|(count, probability)| ProbePoint { count, probability })
            .collect())
    };
    let wants = |mode| args.mode.is_none_or(|m: ProbeModeArg| m.0 == mode);
    let start = Instant::now();
    let add = if wants(ProbeMode::Add) {
        Some(run(ProbeMode::Add)?)
    } else {
        None
    };
    let replace = if wants(ProbeMode::Replace) {
        Some(run(ProbeMode::Replace)?)
    } else {
        None
    };
    manifest.timings.push(crate::manifest::PhaseTiming {
        phase: "probe".into(),
        seconds: start.elapsed().as_secs_f64(),
    });

    let report = ProbeReport {
        target,
        label: data.label_names()[y].clone(),
        context_size,
        add,
        replace,
    };
    emit_report(&report, args.out.as_ref(), manifest)
}

#[derive(Debug, Clone, Serialize)]
pub struct RuleResult {
    pub rule: UpdateRule,
    pub auc_ovo: Option<f64>,
    pub accuracy: f64,
    pub log_loss: f64,
    pub final_train_loss: f64,
    pub fit_seconds: f64,
    pub predict_seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationReport {
    pub config: BoostConfig,
    pub learner: LearnerSpec,
    pub rules: Vec<RuleResult>,
}

pub fn cmd_ablate(args: AblateArgs) -> Result<()> {
    let train_path = required(&args.train, "train")?;
    let test_path = required(&args.test, "test")?;
    let label_col = required(&args.label_col, "label-col")?;
    let spec = resolve_learner(&args.boost.learner, KernelPredictorConfig::default())?;

    let mut manifest = RunManifest::new("ablate", &args, None)?;
    let train = load_labeled(&train_path, &label_col, &mut manifest)?;
    let test = load_labeled(&test_path, &label_col, &mut manifest)?;
    let test = align(test, train.feature_names(), train.label_names(), "test")?;
    let base = BoostConfig {
        rounds: args.boost.rounds.unwrap_or(DEFAULT_ROUNDS),
        context_size: args.boost.context_size.unwrap_or(DEFAULT_CONTEXT_SIZE.min(train.len())),
        gamma_mode: args.boost.gamma_mode.unwrap_or(GammaMode::LineSearch),
        rgbm_mode: args.boost.rgbm,
        seed: args.boost.seed.unwrap_or(0),
        ..BoostConfig::default()
    };
    if base.gamma_mode == GammaMode::Alpha {
        bail!(Error::Config(
            "ablate compares all three rules; gamma mode alpha only works with adaboost".into()
        ));
    }
    manifest.seed = Some(base.seed);
    let predictor = build_predictor(&spec)?;

    let mut rules = Vec::new();
    for rule in UpdateRule::ALL {
        let config = BoostConfig {
            update_rule: rule,
            ..base.clone()
        };
        let start = Instant::now();
        let fit = boost_fit_monitored(&train, predictor.as_ref(), &config, None)?;
        let fit_seconds = start.elapsed().as_secs_f64();
        let start = Instant::now();
        let probs = ensemble_predict(&fit.model, predictor.as_ref(), test.features(), DEFAULT_BATCH_SIZE)?;
        let predict_seconds = start.elapsed().as_secs_f64();
        let eval = boostpfn::evaluate(test.labels(), &probs)?;
        manifest.timings.push(crate::manifest::PhaseTiming {
            phase: format!("{rule}"),
            seconds: fit_seconds + predict_seconds,
        });
        rules.push(RuleResult {
            rule,
            auc_ovo: eval.auc_ovo,
            accuracy: eval.accuracy,
            log_loss: eval.log_loss,
            final_train_loss: *fit.curve.train.last().ok_or_else(|| anyhow!("empty loss curve"))?,
            fit_seconds,
            predict_seconds,
        });
    }
    let report = AblationReport {
        config: base,
        learner: spec,
        rules,
    };
    emit_report(&report, args.out.as_ref(), manifest)
}
