//! Sampling-weight update rules.

use serde::{Deserialize, Serialize};

use super::loss::Residuals;
use crate::error::{Error, Result};
use crate::sampler::{normalize, WeightVector, MIN_MASS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UpdateRule {
    /// `w * exp(|r|)`
    ExpHadamard,
    /// `w * |r|`
    Hadamard,
    /// SAMME-style reweighting of misclassified rows.
    AdaBoost,
}

impl UpdateRule {
    pub const ALL: [UpdateRule; 3] = [UpdateRule::ExpHadamard, UpdateRule::Hadamard, UpdateRule::AdaBoost];

    pub fn name(self) -> &'static str {
        match self {
            UpdateRule::ExpHadamard => "exphadamard",
            UpdateRule::Hadamard => "hadamard",
            UpdateRule::AdaBoost => "adaboost",
        }
    }
}

impl std::fmt::Display for UpdateRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for UpdateRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        UpdateRule::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown update rule {s:?} (exphadamard|hadamard|adaboost)")))
    }
}

fn check_len(w: &WeightVector, n: usize) -> Result<()> {
    if w.len() != n {
        return Err(Error::Dimension(format!("{} weights for {n} samples", w.len())));
    }
    Ok(())
}

pub fn update_exphadamard(w: &WeightVector, r: &Residuals) -> Result<WeightVector> {
    check_len(w, r.magnitude.len())?;
    let raw: Vec<f64> = w
        .as_slice()
        .iter()
        .zip(&r.magnitude)
        .map(|(wi, m)| wi * m.exp())
        .collect();
    normalize(&raw)
}

/// Keeps `w` when every product vanishes (all residuals zero).
pub fn update_hadamard(w: &WeightVector, r: &Residuals) -> Result<WeightVector> {
    check_len(w, r.magnitude.len())?;
    let raw: Vec<f64> = w.as_slice().iter().zip(&r.magnitude).map(|(wi, m)| wi * m).collect();
    if raw.iter().sum::<f64>() < MIN_MASS {
        return Ok(w.clone());
    }
    normalize(&raw)
}

/// Weighted error `eps` (clamped to `[clamp, 1 - clamp]`) and
/// `alpha = ln((1 - eps) / eps) + ln(K - 1)`.
pub fn adaboost_alpha(
    w: &WeightVector,
    predictions: &[usize],
    labels: &[usize],
    num_classes: usize,
    epsilon_clamp: f64,
) -> Result<(f64, f64)> {
    check_len(w, labels.len())?;
    if predictions.len() != labels.len() {
        return Err(Error::Dimension(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if num_classes < 2 {
        return Err(Error::Config("AdaBoost update needs K >= 2".into()));
    }
    let raw_eps: f64 = w
        .as_slice()
        .iter()
        .zip(predictions.iter().zip(labels))
        .filter(|(_, (p, y))| p != y)
        .map(|(wi, _)| wi)
        .sum();
    let eps = raw_eps.clamp(epsilon_clamp, 1.0 - epsilon_clamp);
    Ok((eps, alpha_from_error(eps, num_classes)))
}

pub fn alpha_from_error(eps: f64, num_classes: usize) -> f64 {
    ((1.0 - eps) / eps).ln() + ((num_classes - 1) as f64).ln()
}

/// Multiplies the weight of every misclassified row by `exp(alpha)` and
/// renormalizes. Returns the new weights and `alpha`.
pub fn update_adaboost(
    w: &WeightVector,
    predictions: &[usize],
    labels: &[usize],
    num_classes: usize,
    epsilon_clamp: f64,
) -> Result<(WeightVector, f64)> {
    let (_, alpha) = adaboost_alpha(w, predictions, labels, num_classes, epsilon_clamp)?;
    let boost = alpha.exp();
    let raw: Vec<f64> = w
        .as_slice()
        .iter()
        .zip(predictions.iter().zip(labels))
        .map(|(wi, (p, y))| if p != y { wi * boost } else { *wi })
        .collect();
    Ok((normalize(&raw)?, alpha))
}
