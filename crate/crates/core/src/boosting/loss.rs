//! Softmax link and multiclass cross-entropy on accumulated scores.

use ndarray::{Array2, ArrayView1, ArrayView2, Zip};

use crate::learners::ProbMatrix;

/// Accumulated `n x K` boosting scores.
pub type ScoreMatrix = Array2<f64>;

fn log_sum_exp(row: ArrayView1<'_, f64>) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Row-wise softmax with max subtraction.
pub fn softmax_probs(scores: ArrayView2<'_, f64>) -> ProbMatrix {
    let mut out = scores.to_owned();
    for mut row in out.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    ProbMatrix::from_raw(out)
}

/// Mean of `-log softmax(F)[i, y_i]`, evaluated as `logsumexp(F_i) - F_i[y_i]`.
pub fn ce_loss(labels: &[usize], scores: ArrayView2<'_, f64>) -> f64 {
    debug_assert_eq!(labels.len(), scores.nrows());
    let total: f64 = scores
        .rows()
        .into_iter()
        .zip(labels)
        .map(|(row, &y)| log_sum_exp(row) - row[y])
        .sum();
    total / labels.len() as f64
}

/// Negative gradient of the per-sample cross-entropy, plus its scalar
/// magnitude `1 - p(true class)` per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Residuals {
    pub gradient: Array2<f64>,
    pub magnitude: Vec<f64>,
}

/// `gradient[i, k] = 1{k = y_i} - p[i, k]`, `magnitude[i] = 1 - p[i, y_i]`.
pub fn residuals(labels: &[usize], scores: ArrayView2<'_, f64>) -> Residuals {
    let probs = softmax_probs(scores).into_inner();
    let mut gradient = probs.mapv(|p| -p);
    let mut magnitude = Vec::with_capacity(labels.len());
    for (i, &y) in labels.iter().enumerate() {
        gradient[[i, y]] += 1.0;
        magnitude.push((1.0 - probs[[i, y]]).clamp(0.0, 1.0));
    }
    Residuals { gradient, magnitude }
}

/// `F + gamma * h`.
pub fn shifted(scores: ArrayView2<'_, f64>, h: ArrayView2<'_, f64>, gamma: f64) -> ScoreMatrix {
    let mut out = scores.to_owned();
    Zip::from(&mut out).and(h).for_each(|f, &hv| *f += gamma * hv);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn softmax_examples() {
        let p = softmax_probs(Array2::zeros((1, 4)).view());
        assert_eq!(p.row(0).to_vec(), vec![0.25; 4]);
        let p = softmax_probs(array![[2f64.ln(), 0.0]].view());
        assert_relative_eq!(p.row(0)[0], 2.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(p.row(0)[1], 1.0 / 3.0, epsilon = 1e-15);
        let p = softmax_probs(array![[1000.0, 0.0]].view());
        assert_eq!(p.row(0)[0], 1.0);
        assert!(p.row(0)[1] >= 0.0 && p.row(0)[1] < 1e-300);
    }

    #[test]
    fn loss_examples() {
        assert_relative_eq!(
            ce_loss(&[0, 1], Array2::zeros((2, 2)).view()),
            2f64.ln(),
            epsilon = 1e-15
        );
        // p(true) = 0.9 for K=2 when F = (ln 9, 0)
        assert_relative_eq!(
            ce_loss(&[0], array![[9f64.ln(), 0.0]].view()),
            -(0.9f64.ln()),
            epsilon = 1e-15
        );
        assert_relative_eq!(-(0.9f64.ln()), 0.105_360_515_657_826_3, epsilon = 1e-15);
        let base = array![[0.3, -0.2, 0.1]];
        let mut up = base.clone();
        up[[0, 2]] += 0.5;
        assert!(ce_loss(&[2], up.view()) < ce_loss(&[2], base.view()));
        // finite for extreme scores
        assert!(ce_loss(&[1], array![[1000.0, 0.0]].view()).is_finite());
    }

    #[test]
    fn residual_examples() {
        let r = residuals(&[0, 1, 2, 3], Array2::zeros((4, 4)).view());
        assert!(r.magnitude.iter().all(|&m| m == 0.75));
        let r = residuals(&[0], array![[1000.0, 0.0]].view());
        assert_eq!(r.magnitude, vec![0.0]);
        assert!(r.gradient.iter().all(|g| g.abs() < 1e-300));
    }

    proptest! {
        #[test]
        fn gradient_rows_sum_to_zero(vals in prop::collection::vec(-20.0f64..20.0, 12), y in prop::collection::vec(0usize..3, 4)) {
            let f = Array2::from_shape_vec((4, 3), vals).unwrap();
            let r = residuals(&y, f.view());
            for row in r.gradient.rows() {
                prop_assert!(row.sum().abs() < 1e-12);
            }
            prop_assert!(r.magnitude.iter().all(|m| (0.0..=1.0).contains(m)));
        }
    }
}
