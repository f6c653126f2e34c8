//! The `boostpfn` command line: argument types, config-file merging and the
//! subcommand implementations, kept in a library so tests can drive them
//! without spawning processes.

pub mod args;
pub mod commands;
pub mod manifest;

use std::collections::BTreeSet;
use std::path::Path;

use anyhow::{Context as _, Result};
use boostpfn::Error;
use serde::de::DeserializeOwned;
use serde::Serialize;

use args::{Cli, Command, Merge, ValidateCommand};

pub use commands::{cmd_ablate, cmd_evaluate, cmd_fit, cmd_predict};

/// Reads a `--config` file into `T`. A run manifest is accepted and its
/// `config` object used. Keys that no flag of the subcommand knows are
/// rejected.
pub fn load_config<T: DeserializeOwned + Serialize + Default>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut value: serde_json::Value =
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
    if let Some(inner) = value.get("config").filter(|_| value.get("command").is_some()) {
        value = inner.clone();
    }
    let obj = value
        .as_object()
        .ok_or_else(|| Error::Config(format!("config {} is not a JSON object", path.display())))?;
    let known: BTreeSet<String> = match serde_json::to_value(T::default())? {
        serde_json::Value::Object(m) => m.keys().cloned().collect(),
        _ => BTreeSet::new(),
    };
    if let Some(bad) = obj.keys().find(|k| !known.contains(*k)) {
        return Err(Error::Config(format!("unknown config key {bad:?} in {}", path.display())).into());
    }
    serde_json::from_value(value).map_err(|e| Error::Config(format!("config {}: {e}", path.display())).into())
}

fn merged<T: DeserializeOwned + Serialize + Default + Merge>(mut args: T, config: Option<&Path>) -> Result<T> {
    if let Some(path) = config {
        args.merge(load_config(path)?);
    }
    Ok(args)
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            return Err(Error::Config("--threads must be positive".into()).into());
        }
        // a second call in the same process (tests) keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    let config = cli.config.as_deref();
    match cli.command {
        Command::Fit(a) => cmd_fit(merged(a, config)?),
        Command::Predict(a) => cmd_predict(merged(a, config)?),
        Command::Evaluate(a) => cmd_evaluate(merged(a, config)?),
        Command::Ablate(a) => cmd_ablate(merged(a, config)?),
        Command::Validate(ValidateCommand::Lemma(a)) => commands::cmd_validate_lemma(merged(a, config)?),
        Command::Validate(ValidateCommand::Assumption(a)) => commands::cmd_validate_assumption(merged(a, config)?),
        Command::Validate(ValidateCommand::Probe(a)) => commands::cmd_validate_probe(merged(a, config)?),
    }
}

/// Short class name and exit code for an error.
pub fn classify(err: &anyhow::Error) -> (&'static str, i32) {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Io { .. } => ("io", 3),
                Error::Csv(_) | Error::Parse(_) | Error::Json(_) => ("parse", 4),
                Error::Data(_) | Error::Dimension(_) => ("data", 5),
                Error::Predictor(_) | Error::Bridge(_) => ("predictor", 6),
                Error::Config(_) | Error::Enumeration(_) => ("config", 2),
                Error::Weights(_) | Error::Sampling(_) | Error::Metric(_) => ("numeric", 7),
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return ("io", 3);
        }
        if cause.downcast_ref::<serde_json::Error>().is_some() {
            return ("parse", 4);
        }
    }
    ("error", 1)
}
