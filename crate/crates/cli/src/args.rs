//! Command-line flags.
//!
//! Every option that can also come from `--config` is an `Option` here so a
//! flag given on the command line can be told apart from a default.

use std::path::PathBuf;
use std::str::FromStr;

use boostpfn::boosting::{GammaMode, UpdateRule};
use boostpfn::learners::{Bandwidth, ProbeMode};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Debug, Parser)]
#[command(name = "boostpfn", version, about = "Gradient boosting over in-context predictors")]
pub struct Cli {
    /// Worker threads for prediction (default: available parallelism).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// JSON file whose keys mirror the flags of the subcommand. Flags given
    /// on the command line win. A run manifest is accepted too.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a boosted ensemble and write it as JSON.
    Fit(FitArgs),
    /// Write per-class probabilities for every row of a CSV.
    Predict(PredictArgs),
    /// Score a model on a labeled CSV, optionally next to a bagging baseline.
    Evaluate(EvaluateArgs),
    /// Exhaustive and randomized checks of the reweighting argument.
    #[command(subcommand)]
    Validate(ValidateCommand),
    /// Compare the three weight-update rules on one train/test pair.
    Ablate(AblateArgs),
}

/// Parses through `FromStr` on the way in and `Display` on the way out, so
/// config files use the same spellings as flags.
mod as_str {
    use super::*;

    pub fn serialize<T: ToString, S: Serializer>(v: &Option<T>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(v) => s.serialize_some(&v.to_string()),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, T, D>(d: D) -> Result<Option<T>, D::Error>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
        D: Deserializer<'de>,
    {
        Option::<String>::deserialize(d)?
            .map(|s| s.parse().map_err(serde::de::Error::custom))
            .transpose()
    }
}

/// Fills every `None` field of `self` from `other`.
pub trait Merge {
    fn merge(&mut self, other: Self);
}

macro_rules! merge_fields {
    ($ty:ty { $($opt:ident),* } flags { $($flag:ident),* } nested { $($nested:ident),* }) => {
        impl Merge for $ty {
            fn merge(&mut self, other: Self) {
                $( if self.$opt.is_none() { self.$opt = other.$opt; } )*
                $( self.$flag |= other.$flag; )*
                $( self.$nested.merge(other.$nested); )*
            }
        }
    };
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct LearnerArgs {
    /// `kernel` or `bridge=URL`.
    #[arg(long)]
    pub learner: Option<String>,

    /// Kernel bandwidth: a positive number or `median-heuristic`.
    #[arg(long)]
    #[serde(with = "as_str")]
    pub bandwidth: Option<Bandwidth>,

    /// Kernel pseudo-count added to every class.
    #[arg(long)]
    pub smoothing: Option<f64>,
}

merge_fields!(LearnerArgs { learner, bandwidth, smoothing } flags {} nested {});

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct BoostArgs {
    #[arg(long)]
    pub rounds: Option<usize>,

    #[arg(long)]
    pub context_size: Option<usize>,

    /// `line-search` or `alpha` (alpha requires `--update adaboost`).
    #[arg(long)]
    #[serde(with = "as_str")]
    pub gamma_mode: Option<GammaMode>,

    /// Pick each round's context from three candidates.
    #[arg(long)]
    pub rgbm: bool,

    #[arg(long)]
    pub seed: Option<u64>,

    #[command(flatten)]
    #[serde(flatten)]
    pub learner: LearnerArgs,
}

merge_fields!(BoostArgs { rounds, context_size, gamma_mode, seed } flags { rgbm } nested { learner });

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct FitArgs {
    #[arg(long)]
    pub train: Option<PathBuf>,

    #[arg(long)]
    pub label_col: Option<String>,

    /// `exphadamard`, `hadamard` or `adaboost`.
    #[arg(long)]
    #[serde(with = "as_str")]
    pub update: Option<UpdateRule>,

    /// Labeled CSV whose loss is tracked in the curve file.
    #[arg(long)]
    pub test: Option<PathBuf>,

    /// Model output path.
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Loss-curve CSV output path.
    #[arg(long)]
    pub curves: Option<PathBuf>,

    #[command(flatten)]
    #[serde(flatten)]
    pub boost: BoostArgs,
}

merge_fields!(FitArgs { train, label_col, update, test, out, curves } flags {} nested { boost });

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct PredictArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,

    /// CSV holding the model's feature columns; other columns are ignored.
    #[arg(long)]
    pub data: Option<PathBuf>,

    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Query rows per predictor call.
    #[arg(long)]
    pub batch_size: Option<usize>,

    /// Overrides the learner stored in the model (e.g. another bridge URL).
    #[arg(long)]
    pub learner: Option<String>,
}

merge_fields!(PredictArgs { model, data, out, batch_size, learner } flags {} nested {});

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,

    #[arg(long)]
    pub test: Option<PathBuf>,

    #[arg(long)]
    pub label_col: Option<String>,

    /// Also report a bagging baseline with this many bags.
    #[arg(long)]
    pub bags: Option<usize>,

    /// Training CSV for the bagging baseline.
    #[arg(long)]
    pub train: Option<PathBuf>,

    /// Bagging context size (default: the model's).
    #[arg(long)]
    pub context_size: Option<usize>,

    /// Bagging seed (default: the model's).
    #[arg(long)]
    pub seed: Option<u64>,

    #[arg(long)]
    pub batch_size: Option<usize>,

    #[arg(long)]
    pub learner: Option<String>,

    /// Report path; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

merge_fields!(EvaluateArgs { model, test, label_col, bags, train, context_size, seed, batch_size, learner, out } flags {} nested {});

#[derive(Debug, Subcommand)]
pub enum ValidateCommand {
    /// Exact expectation of the target's true-class probability under
    /// uniform and target-upweighted sampling.
    Lemma(LemmaArgs),
    /// Randomized search for contexts where adding the target does not help.
    Assumption(AssumptionArgs),
    /// True-class probability as copies of the target are added or swapped in.
    Probe(ProbeArgs),
}

/// A labeled CSV, or a built-in dataset when absent.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct DataArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,

    #[arg(long)]
    pub label_col: Option<String>,
}

merge_fields!(DataArgs { data, label_col } flags {} nested {});

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct LemmaArgs {
    /// Training size; must match the data (default 6).
    #[arg(long)]
    pub n: Option<usize>,

    #[arg(long)]
    pub z: Option<usize>,

    /// Weight multiplier for the target (default: just above the threshold).
    #[arg(long)]
    pub k: Option<f64>,

    #[arg(long)]
    pub target: Option<usize>,

    #[arg(long)]
    pub out: Option<PathBuf>,

    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,

    #[command(flatten)]
    #[serde(flatten)]
    pub learner: LearnerArgs,
}

merge_fields!(LemmaArgs { n, z, k, target, out } flags {} nested { data, learner });

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct AssumptionArgs {
    #[arg(long)]
    pub context_size: Option<usize>,

    #[arg(long)]
    pub trials: Option<usize>,

    #[arg(long)]
    pub seed: Option<u64>,

    #[arg(long)]
    pub out: Option<PathBuf>,

    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,

    #[command(flatten)]
    #[serde(flatten)]
    pub learner: LearnerArgs,
}

merge_fields!(AssumptionArgs { context_size, trials, seed, out } flags {} nested { data, learner });

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct ProbeArgs {
    /// Row index of the probed sample.
    #[arg(long)]
    pub target: Option<usize>,

    /// Rows in the base context (drawn uniformly, target excluded).
    #[arg(long)]
    pub context_size: Option<usize>,

    /// Comma-separated duplicate counts.
    #[arg(long, value_delimiter = ',')]
    pub counts: Option<Vec<usize>>,

    /// `add` or `replace`; both when absent.
    #[arg(long)]
    #[serde(with = "as_str")]
    pub mode: Option<ProbeModeArg>,

    #[arg(long)]
    pub seed: Option<u64>,

    #[arg(long)]
    pub out: Option<PathBuf>,

    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,

    #[command(flatten)]
    #[serde(flatten)]
    pub learner: LearnerArgs,
}

merge_fields!(ProbeArgs { target, context_size, counts, mode, seed, out } flags {} nested { data, learner });

/// [`ProbeMode`] with a `Display` impl for config round trips.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProbeModeArg(pub ProbeMode);

impl FromStr for ProbeModeArg {
    type Err = boostpfn::Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.parse().map(ProbeModeArg)
    }
}

impl std::fmt::Display for ProbeModeArg {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self.0 {
            ProbeMode::Add => "add",
            ProbeMode::Replace => "replace",
        })
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case")]
pub struct AblateArgs {
    #[arg(long)]
    pub train: Option<PathBuf>,

    #[arg(long)]
    pub test: Option<PathBuf>,

    #[arg(long)]
    pub label_col: Option<String>,

    /// Report path; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,

    #[command(flatten)]
    #[serde(flatten)]
    pub boost: BoostArgs,
}

merge_fields!(AblateArgs { train, test, label_col, out } flags {} nested { boost });
