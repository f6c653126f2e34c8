//! Exhaustive desk-scale checks of why reweighting helps.
//!
//! Two questions are answered exactly by enumeration:
//!
//! * Does a predictor get better at a target sample when that sample is added
//!   to its context, compared with leaving the context alone or adding some
//!   other sample? ([`verify_add_target`])
//! * When the target's sampling weight is multiplied by `k` (all other weights
//!   scaled by `lambda = (N - k) / (N - 1)`), does the expected true-class
//!   probability over all size-`z` contexts increase? ([`verify_reweighting`])

use std::collections::HashMap;

use itertools::Itertools;
use ndarray::{array, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::learners::{Context, ContextPredictor};
use crate::rng::stream_rng;
use crate::sampler::{
    normalize, ordering_probability, sample_without_replacement, subset_probability, WeightVector,
    MAX_ENUMERATED_SUBSET,
};

/// Expectation differences at or below this are treated as ties.
pub const STRICT_MARGIN: f64 = 1e-12;

/// Upper bound on the number of subsets enumerated by [`exact_expectation`].
pub const MAX_SUBSETS: u64 = 10_000;

pub fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, i| acc * (n - i) as u64 / (i + 1) as u64)
}

fn check_enumerable(n: usize, z: usize) -> Result<()> {
    if z == 0 || z > n {
        return Err(Error::Config(format!("context size {z} must lie in 1..={n}")));
    }
    if z > MAX_ENUMERATED_SUBSET || binomial(n, z) > MAX_SUBSETS {
        return Err(Error::Enumeration(format!(
            "C({n}, {z}) = {} subsets of size {z} exceeds the enumeration bound",
            binomial(n, z)
        )));
    }
    Ok(())
}

fn true_class_prob<P: ContextPredictor + ?Sized>(
    predictor: &P,
    train: &Dataset,
    subset: &[usize],
    target: usize,
) -> Result<f64> {
    let ctx = Context::gather(train.features(), train.labels(), subset);
    query_prob(
        predictor,
        &ctx,
        train.row(target),
        train.labels()[target],
        train.num_classes(),
    )
}

fn query_prob<P: ContextPredictor + ?Sized>(
    predictor: &P,
    ctx: &Context,
    x: ArrayView1<'_, f64>,
    y: usize,
    num_classes: usize,
) -> Result<f64> {
    let p = predictor.predict(ctx, x.insert_axis(Axis(0)), num_classes)?;
    Ok(p.row(0)[y])
}

/// `E[q(y_i | x_i, S)]` over size-`z` contexts `S` drawn from `w`, summed
/// exactly over all `C(N, z)` subsets in lexicographic order.
pub fn exact_expectation<P: ContextPredictor + ?Sized>(
    predictor: &P,
    train: &Dataset,
    w: &WeightVector,
    z: usize,
    target: usize,
) -> Result<f64> {
    let n = train.len();
    check_enumerable(n, z)?;
    if w.len() != n || target >= n {
        return Err(Error::Dimension("weights or target do not match the dataset".into()));
    }
    let mut total = 0.0;
    for subset in (0..n).combinations(z) {
        let p = subset_probability(w, &subset)?;
        if p > 0.0 {
            total += p * true_class_prob(predictor, train, &subset, target)?;
        }
    }
    Ok(total)
}

/// The same expectation regrouped around the target: for every `D0` of size
/// `z - 1` without the target, the subset `D0 + {i}` contributes
/// `A = p(D0 + i) q(D0 + i)` and the subsets `D0 + {j}` contribute
/// `B = sum_j p(D0 + j) q(D0 + j)`. A subset without the target arises from
/// `z` different `D0`, so `B` terms carry weight `1 / z`.
pub fn expectation_by_decomposition<P: ContextPredictor + ?Sized>(
    predictor: &P,
    train: &Dataset,
    w: &WeightVector,
    z: usize,
    target: usize,
) -> Result<f64> {
    let n = train.len();
    check_enumerable(n, z)?;
    let others: Vec<usize> = (0..n).filter(|&j| j != target).collect();
    let mut total = 0.0;
    for d0 in others.iter().copied().combinations(z - 1) {
        let mut with_target = d0.clone();
        with_target.push(target);
        let a = subset_probability(w, &with_target)? * true_class_prob(predictor, train, &with_target, target)?;
        let mut b = 0.0;
        for &j in others.iter().filter(|j| !d0.contains(j)) {
            let mut with_j = d0.clone();
            with_j.push(j);
            b += subset_probability(w, &with_j)? * true_class_prob(predictor, train, &with_j, target)?;
        }
        total += a + b / z as f64;
    }
    Ok(total)
}

/// Monte-Carlo estimate of [`exact_expectation`]: `(mean, standard error)`.
pub fn monte_carlo_expectation<P: ContextPredictor + ?Sized>(
    predictor: &P,
    train: &Dataset,
    w: &WeightVector,
    z: usize,
    target: usize,
    draws: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let mut rng = stream_rng(seed, 0);
    // q depends only on the unordered subset
    let mut cache: HashMap<Vec<usize>, f64> = HashMap::new();
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..draws {
        let mut s = sample_without_replacement(w, z, &mut rng)?.into_indices();
        s.sort_unstable();
        let q = match cache.get(&s) {
            Some(&q) => q,
            None => {
                let q = true_class_prob(predictor, train, &s, target)?;
                cache.insert(s, q);
                q
            }
        };
        sum += q;
        sum_sq += q * q;
    }
    let m = draws as f64;
    let mean = sum / m;
    let var = (sum_sq / m - mean * mean).max(0.0) * m / (m - 1.0);
    Ok((mean, (var / m).sqrt()))
}

/// One reweighting scenario: target `target` gets weight `k / N`, every other
/// sample `lambda / N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LemmaScenario {
    pub n: usize,
    pub z: usize,
    pub target: usize,
    pub k: f64,
}

impl LemmaScenario {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || self.z == 0 || self.z > self.n {
            return Err(Error::Config(format!(
                "need 0 < z <= N and N >= 2, got N={} z={}",
                self.n, self.z
            )));
        }
        if self.target >= self.n {
            return Err(Error::Config(format!("target {} outside 0..{}", self.target, self.n)));
        }
        if !(self.k >= 1.0 && self.k < self.n as f64) {
            return Err(Error::Config(format!("k must lie in [1, N), got {}", self.k)));
        }
        Ok(())
    }

    pub fn p0(&self) -> f64 {
        1.0 / self.n as f64
    }

    /// `(1 - k p0) / (1 - p0)`.
    pub fn lambda(&self) -> f64 {
        (1.0 - self.k * self.p0()) / (1.0 - self.p0())
    }

    /// `lambda^z * prod_a (1 - (a-1) p0) / prod_a (1 - (a-1) lambda p0)`,
    /// the ratio by which the probability of every target-free subset shrinks.
    pub fn lambda_b(&self) -> f64 {
        let p0 = self.p0();
        let lambda = self.lambda();
        let (num, den) = (0..self.z).fold((1.0, 1.0), |(num, den), a| {
            let drawn = a as f64;
            (num * (1.0 - drawn * p0), den * (1.0 - drawn * lambda * p0))
        });
        lambda.powi(self.z as i32) * num / den
    }

    /// `(N - z)(1 - lambda_B) + 1`.
    pub fn threshold_k(&self) -> f64 {
        (self.n - self.z) as f64 * (1.0 - self.lambda_b()) + 1.0
    }

    pub fn uniform_weights(&self) -> WeightVector {
        WeightVector::uniform(self.n)
    }

    pub fn reweighted(&self) -> Result<WeightVector> {
        let p0 = self.p0();
        let lambda = self.lambda();
        let raw: Vec<f64> = (0..self.n)
            .map(|a| if a == self.target { self.k * p0 } else { lambda * p0 })
            .collect();
        normalize(&raw)
    }
}

/// Solves `k = threshold_k(k) + margin` for `k` in `(1, N)` by bisection.
/// Errors when no such `k` exists (e.g. `z = 1`, where the threshold equals
/// `k` itself).
pub fn k_above_threshold(n: usize, z: usize, target: usize, margin: f64) -> Result<f64> {
    let gap = |k: f64| {
        let s = LemmaScenario { n, z, target, k };
        k - s.threshold_k() - margin
    };
    let (mut lo, mut hi) = (1.0, n as f64 - 1e-9);
    if gap(lo) >= 0.0 || gap(hi) <= 0.0 {
        return Err(Error::Config(format!(
            "no k in (1, {n}) exceeds the threshold by {margin} for z = {z}"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if gap(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeComparison {
    pub probe_index: usize,
    pub with_probe: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    /// `q(y | x, D)`; `None` for an empty context.
    pub base: Option<f64>,
    /// `q(y | x, D + {(x, y)})`
    pub with_target: f64,
    pub beats_base: Option<bool>,
    pub probes: Vec<ProbeComparison>,
    pub holds: bool,
}

/// Compares `q(y|x, D + {(x,y)})` against `q(y|x, D)` and against
/// `q(y|x, D + {(x_j, y_j)})` for every probe. Failed comparisons are
/// reported, not raised.
pub fn verify_add_target<P: ContextPredictor + ?Sized>(
    predictor: &P,
    context: &Context,
    target_x: ArrayView1<'_, f64>,
    target_y: usize,
    probes: &[(ArrayView1<'_, f64>, usize)],
    num_classes: usize,
) -> Result<AssumptionReport> {
    let with_target = query_prob(
        predictor,
        &context.with_appended(target_x, target_y, 1)?,
        target_x,
        target_y,
        num_classes,
    )?;
    let base = if context.is_empty() {
        None
    } else {
        Some(query_prob(predictor, context, target_x, target_y, num_classes)?)
    };
    let beats_base = base.map(|b| with_target > b);
    let probes = probes
        .iter()
        .enumerate()
        .map(|(j, (x, y))| {
            let q = query_prob(
                predictor,
                &context.with_appended(*x, *y, 1)?,
                target_x,
                target_y,
                num_classes,
            )?;
            Ok(ProbeComparison {
                probe_index: j,
                with_probe: q,
                holds: with_target > q,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let holds = beats_base.unwrap_or(true) && probes.iter().all(|p| p.holds);
    Ok(AssumptionReport {
        base,
        with_target,
        beats_base,
        probes,
        holds,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub scenario: LemmaScenario,
    pub lambda: f64,
    pub lambda_b: f64,
    pub threshold_k: f64,
    pub k_exceeds_threshold: bool,
    /// Every `(D0, j)` comparison of the assumption held on this dataset.
    pub assumption_holds: bool,
    pub assumption_checks: usize,
    pub assumption_failures: usize,
    /// Expectation under the reweighted distribution.
    pub lhs: f64,
    /// Expectation under uniform weights.
    pub rhs: f64,
    /// `lhs > rhs + STRICT_MARGIN`.
    pub holds: bool,
    /// Range of `p(S; w2) / p(S; w1)` over subsets containing the target.
    pub containing_ratio_min: f64,
    pub containing_ratio_max: f64,
    /// Ratio of ordering probabilities for orderings that draw the target first.
    pub target_first_ratio: f64,
    /// Range of `p(S; w2) / p(S; w1)` over subsets without the target.
    pub excluding_ratio_min: f64,
    pub excluding_ratio_max: f64,
}

/// Checks the assumption for every `D0` of size `z - 1` without the target,
/// against every remaining `j`. Returns `(checks, failures)`.
pub fn scenario_assumption_checks<P: ContextPredictor + ?Sized>(
    predictor: &P,
    train: &Dataset,
    z: usize,
    target: usize,
) -> Result<(usize, usize)> {
    let n = train.len();
    check_enumerable(n, z)?;
    let others: Vec<usize> = (0..n).filter(|&j| j != target).collect();
    let (mut checks, mut failures) = (0, 0);
    for d0 in others.iter().copied().combinations(z - 1) {
        let ctx = Context::gather(train.features(), train.labels(), &d0);
        let probes: Vec<(ArrayView1<'_, f64>, usize)> = others
            .iter()
            .filter(|j| !d0.contains(j))
            .map(|&j| (train.row(j), train.labels()[j]))
            .collect();
        let report = verify_add_target(
            predictor,
            &ctx,
            train.row(target),
            train.labels()[target],
            &probes,
            train.num_classes(),
        )?;
        checks += 1;
        if !report.holds {
            failures += 1;
        }
    }
    Ok((checks, failures))
}

pub fn verify_reweighting<P: ContextPredictor + ?Sized>(
    predictor: &P,
    train: &Dataset,
    scenario: LemmaScenario,
) -> Result<LemmaReport> {
    scenario.validate()?;
    if scenario.n != train.len() {
        return Err(Error::Config(format!(
            "scenario N = {} but dataset has {} rows",
            scenario.n,
            train.len()
        )));
    }
    let (n, z, i) = (scenario.n, scenario.z, scenario.target);
    check_enumerable(n, z)?;
    let (assumption_checks, assumption_failures) = scenario_assumption_checks(predictor, train, z, i)?;

    let w1 = scenario.uniform_weights();
    let w2 = scenario.reweighted()?;
    let rhs = exact_expectation(predictor, train, &w1, z, i)?;
    let lhs = exact_expectation(predictor, train, &w2, z, i)?;

    let (mut c_min, mut c_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut e_min, mut e_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for subset in (0..n).combinations(z) {
        let ratio = subset_probability(&w2, &subset)? / subset_probability(&w1, &subset)?;
        if subset.contains(&i) {
            c_min = c_min.min(ratio);
            c_max = c_max.max(ratio);
        } else {
            e_min = e_min.min(ratio);
            e_max = e_max.max(ratio);
        }
    }
    let first: Vec<usize> = std::iter::once(i)
        .chain((0..n).filter(|&j| j != i).take(z - 1))
        .collect();
    let target_first_ratio = ordering_probability(&w2, &first) / ordering_probability(&w1, &first);
    let threshold_k = scenario.threshold_k();

    Ok(LemmaReport {
        scenario,
        lambda: scenario.lambda(),
        lambda_b: scenario.lambda_b(),
        threshold_k,
        k_exceeds_threshold: scenario.k > threshold_k,
        assumption_holds: assumption_failures == 0,
        assumption_checks,
        assumption_failures,
        lhs,
        rhs,
        holds: lhs > rhs + STRICT_MARGIN,
        containing_ratio_min: c_min,
        containing_ratio_max: c_max,
        target_first_ratio,
        excluding_ratio_min: e_min,
        excluding_ratio_max: e_max,
    })
}

/// One failed randomized comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub target: usize,
    pub context: Vec<usize>,
    pub probe: usize,
    pub report: AssumptionReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionSearchReport {
    pub trials: usize,
    /// Trials whose base context already gave the target probability 1.
    pub skipped: usize,
    pub failures: usize,
    /// The first few failures, in trial order.
    pub counterexamples: Vec<Counterexample>,
}

const MAX_COUNTEREXAMPLES: usize = 10;

/// Randomized search for violations of the assumption on `train`. Each trial
/// draws a target row, a uniform context of `context_size` other rows, and a
/// probe row of a different class from outside the context.
pub fn random_assumption_search<P: ContextPredictor + ?Sized>(
    predictor: &P,
    train: &Dataset,
    context_size: usize,
    trials: usize,
    seed: u64,
) -> Result<AssumptionSearchReport> {
    let n = train.len();
    if context_size == 0 || context_size + 2 > n {
        return Err(Error::Config(format!(
            "context size {context_size} leaves no room for a target and a probe among {n} rows"
        )));
    }
    let mut rng = stream_rng(seed, 0);
    let mut report = AssumptionSearchReport {
        trials,
        skipped: 0,
        failures: 0,
        counterexamples: Vec::new(),
    };
    for _ in 0..trials {
        let target = rng.random_range(0..n);
        let y = train.labels()[target];
        let mut others: Vec<usize> = (0..n).filter(|&j| j != target).collect();
        others.shuffle(&mut rng);
        let (context, rest) = others.split_at(context_size);
        let Some(&probe) = rest.iter().find(|&&j| train.labels()[j] != y) else {
            report.skipped += 1;
            continue;
        };
        let ctx = Context::gather(train.features(), train.labels(), context);
        let r = verify_add_target(
            predictor,
            &ctx,
            train.row(target),
            y,
            &[(train.row(probe), train.labels()[probe])],
            train.num_classes(),
        )?;
        if r.base.is_some_and(|b| b >= 1.0) {
            report.skipped += 1;
            continue;
        }
        if !r.holds {
            report.failures += 1;
            if report.counterexamples.len() < MAX_COUNTEREXAMPLES {
                report.counterexamples.push(Counterexample {
                    target,
                    context: context.to_vec(),
                    probe,
                    report: r,
                });
            }
        }
    }
    Ok(report)
}

/// Fixed six-point, two-class layout used by default for lemma checks.
pub fn lemma_layout() -> Dataset {
    let features = array![[0.0, 0.0], [0.4, 0.3], [1.1, -0.2], [2.0, 0.5], [2.6, 0.1], [3.1, -0.4]];
    Dataset::from_arrays(features, vec![0, 0, 0, 1, 1, 1], 2).expect("fixed layout is valid")
}
