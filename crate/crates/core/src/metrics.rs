//! Classification metrics: binary AUC (Mann-Whitney), one-vs-one multiclass
//! AUC (Hand & Till), accuracy and log-loss.

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learners::ProbMatrix;

/// Probability that a random positive outscores a random negative, ties
/// counting one half. Computed from mid-ranks in `O(n log n)`.
pub fn auc_binary(positive: &[bool], scores: &[f64]) -> Result<f64> {
    if positive.len() != scores.len() {
        return Err(Error::Dimension(format!(
            "{} labels for {} scores",
            positive.len(),
            scores.len()
        )));
    }
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Metric("AUC needs both positive and negative samples".into()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Metric("NaN score".into()));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let mut rank_sum_pos = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // ranks are 1-based; the tie group [start, end) shares the mid-rank
        let mid_rank = (start + end + 1) as f64 / 2.0;
        let pos_in_group = order[start..end].iter().filter(|&&i| positive[i]).count();
        rank_sum_pos += mid_rank * pos_in_group as f64;
        start = end;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Unweighted mean over class pairs `{i, j}` of
/// `(AUC(i vs j on p[., i]) + AUC(j vs i on p[., j])) / 2`, restricted to
/// samples of classes `i` and `j`.
pub fn auc_ovo(labels: &[usize], probs: &ProbMatrix) -> Result<f64> {
    let k = probs.num_classes();
    if k < 2 {
        return Err(Error::Metric("AUC-OVO needs at least 2 classes".into()));
    }
    if labels.len() != probs.nrows() {
        return Err(Error::Dimension(format!(
            "{} labels for {} probability rows",
            labels.len(),
            probs.nrows()
        )));
    }
    let mut present = vec![false; k];
    for &y in labels {
        if y >= k {
            return Err(Error::Metric(format!("label {y} out of range for {k} classes")));
        }
        present[y] = true;
    }
    if let Some(missing) = present.iter().position(|&p| !p) {
        return Err(Error::Metric(format!("class {missing} is absent from the labels")));
    }

    let p = probs.view();
    let mut total = 0.0;
    let mut pairs = 0usize;
    for (i, j) in (0..k).tuple_combinations() {
        let rows: Vec<usize> = (0..labels.len())
            .filter(|&r| labels[r] == i || labels[r] == j)
            .collect();
        let is_i: Vec<bool> = rows.iter().map(|&r| labels[r] == i).collect();
        let is_j: Vec<bool> = is_i.iter().map(|b| !b).collect();
        let si: Vec<f64> = rows.iter().map(|&r| p[[r, i]]).collect();
        let sj: Vec<f64> = rows.iter().map(|&r| p[[r, j]]).collect();
        total += 0.5 * (auc_binary(&is_i, &si)? + auc_binary(&is_j, &sj)?);
        pairs += 1;
    }
    Ok(total / pairs as f64)
}

/// Fraction of rows whose argmax (lowest index on ties) equals the label.
pub fn accuracy(labels: &[usize], probs: &ProbMatrix) -> f64 {
    let hits = probs.argmax().iter().zip(labels).filter(|(p, y)| p == y).count();
    hits as f64 / labels.len() as f64
}

/// Probabilities are clipped here before taking logs.
pub const LOG_LOSS_FLOOR: f64 = 1e-15;

pub fn log_loss(labels: &[usize], probs: &ProbMatrix) -> f64 {
    let total: f64 = labels
        .iter()
        .enumerate()
        .map(|(i, &y)| -probs.row(i)[y].max(LOG_LOSS_FLOOR).ln())
        .sum();
    total / labels.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// `None` when some class has no test sample.
    pub auc_ovo: Option<f64>,
    pub accuracy: f64,
    pub log_loss: f64,
    pub n_test: usize,
    pub num_classes: usize,
}

pub fn evaluate(labels: &[usize], probs: &ProbMatrix) -> Result<EvalReport> {
    if labels.is_empty() || labels.len() != probs.nrows() {
        return Err(Error::Dimension(format!(
            "{} labels for {} probability rows",
            labels.len(),
            probs.nrows()
        )));
    }
    let auc = match auc_ovo(labels, probs) {
        Ok(v) => Some(v),
        Err(Error::Metric(_)) if labels.iter().all(|&y| y < probs.num_classes()) => None,
        Err(e) => return Err(e),
    };
    Ok(EvalReport {
        auc_ovo: auc,
        accuracy: accuracy(labels, probs),
        log_loss: log_loss(labels, probs),
        n_test: labels.len(),
        num_classes: probs.num_classes(),
    })
}
