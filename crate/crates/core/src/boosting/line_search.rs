//! Step size for a new weak learner: golden-section search on
//! `gamma -> ce_loss(F + gamma * h)` over `[0, gamma_max]`.
//!
//! The objective is convex in `gamma`. Both endpoints are compared against
//! the interior minimizer, so the returned step never increases the loss
//! beyond its value at `gamma = 0`.

use ndarray::ArrayView2;

use super::loss::{ce_loss, shifted};

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Minimizes a unimodal `f` on `[lo, hi]` down to an interval of width `tol`.
pub fn golden_section<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, tol: f64) -> f64 {
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

pub fn line_search(
    scores: ArrayView2<'_, f64>,
    h: ArrayView2<'_, f64>,
    labels: &[usize],
    gamma_max: f64,
    tol: f64,
) -> f64 {
    let loss = |g: f64| ce_loss(labels, shifted(scores, h, g).view());
    let interior = golden_section(loss, 0.0, gamma_max, tol);
    let mut best = (interior, loss(interior));
    let at_max = loss(gamma_max);
    if at_max <= best.1 {
        best = (gamma_max, at_max);
    }
    if loss(0.0) < best.1 {
        best = (0.0, loss(0.0));
    }
    best.0
}
