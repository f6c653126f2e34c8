//! Duplicate-target probes: how does the true-class probability of a single
//! sample change as copies of that sample are added to, or substituted into,
//! the context?

use ndarray::{ArrayView1, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Context, ContextPredictor};
use crate::error::{Error, Result};
use crate::rng::stream_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbeMode {
    /// Append `c` copies of the target.
    Add,
    /// Overwrite `c` context rows with the target, other-class rows first.
    Replace,
}

impl std::str::FromStr for ProbeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "add" => Ok(ProbeMode::Add),
            "replace" => Ok(ProbeMode::Replace),
            _ => Err(Error::Config(format!("probe mode must be add or replace, got {s:?}"))),
        }
    }
}

/// Returns `(count, q(y | x, modified context))` for each entry of `counts`.
///
/// In replace mode one random order of candidate positions is drawn up front
/// (rows of another class, shuffled, then same-class rows, shuffled) and the
/// first `c` positions are overwritten, so larger counts extend smaller ones.
#[allow(clippy::too_many_arguments)]
pub fn duplicate_probe<P: ContextPredictor + ?Sized>(
    predictor: &P,
    base: &Context,
    target_x: ArrayView1<'_, f64>,
    target_y: usize,
    num_classes: usize,
    mode: ProbeMode,
    counts: &[usize],
    seed: u64,
) -> Result<Vec<(usize, f64)>> {
    if base.is_empty() {
        return Err(Error::Predictor("empty base context".into()));
    }
    if target_y >= num_classes {
        return Err(Error::Config(format!(
            "target class {target_y} out of range for {num_classes} classes"
        )));
    }
    if counts.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Config("probe counts must be sorted ascending".into()));
    }
    let max = counts.last().copied().unwrap_or(0);
    if mode == ProbeMode::Replace && max > base.len() {
        return Err(Error::Config(format!(
            "cannot replace {max} rows of a {}-row context",
            base.len()
        )));
    }

    let order = match mode {
        ProbeMode::Add => Vec::new(),
        ProbeMode::Replace => {
            let mut rng = stream_rng(seed, 0);
            let (mut other, mut same): (Vec<usize>, Vec<usize>) =
                (0..base.len()).partition(|&i| base.labels()[i] != target_y);
            other.shuffle(&mut rng);
            same.shuffle(&mut rng);
            other.extend(same);
            other
        }
    };

    let query = target_x.insert_axis(Axis(0));
    counts
        .iter()
        .map(|&c| {
            let ctx = match mode {
                ProbeMode::Add => base.with_appended(target_x, target_y, c)?,
                ProbeMode::Replace => base.with_replaced(target_x, target_y, &order[..c])?,
            };
            let p = predictor.predict(&ctx, query, num_classes)?;
            Ok((c, p.row(0)[target_y]))
        })
        .collect()
}
