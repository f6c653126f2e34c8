use boostpfn::learners::{Bandwidth, KernelPredictor, KernelPredictorConfig};
use boostpfn::sampler::normalize;
use boostpfn::validation::{
    exact_expectation, expectation_by_decomposition, k_above_threshold, lemma_layout, monte_carlo_expectation,
    LemmaScenario,
};

fn kernel() -> KernelPredictor {
    KernelPredictor::new(KernelPredictorConfig {
        bandwidth: Bandwidth::Fixed(1.0),
        smoothing: 0.1,
    })
    .unwrap()
}

#[test]
fn monte_carlo_agrees_with_enumeration() {
    let train = lemma_layout();
    let w = normalize(&[0.35, 0.1, 0.2, 0.05, 0.15, 0.15]).unwrap();
    let exact = exact_expectation(&kernel(), &train, &w, 2, 0).unwrap();
    let (mean, se) = monte_carlo_expectation(&kernel(), &train, &w, 2, 0, 1_000_000, 3).unwrap();
    assert!(se > 0.0 && se < 1e-3);
    assert!(
        (mean - exact).abs() < 3.0 * se,
        "exact {exact}, estimate {mean} +- {se}"
    );
}

#[test]
fn decomposition_matches_enumeration_under_reweighting() {
    let train = lemma_layout();
    let (n, z, target) = (6, 2, 0);
    let k = k_above_threshold(n, z, target, 0.5).unwrap();
    let scenario = LemmaScenario { n, z, target, k };
    for w in [scenario.uniform_weights(), scenario.reweighted().unwrap()] {
        for z in 1..=4 {
            let a = exact_expectation(&kernel(), &train, &w, z, target).unwrap();
            let b = expectation_by_decomposition(&kernel(), &train, &w, z, target).unwrap();
            assert!((a - b).abs() < 1e-12, "z={z}: {a} vs {b}");
        }
    }
}

#[test]
fn reweighting_toward_the_target_raises_its_expected_probability() {
    let train = lemma_layout();
    for target in 0..6 {
        let k = k_above_threshold(6, 2, target, 0.5).unwrap();
        let s = LemmaScenario { n: 6, z: 2, target, k };
        let before = exact_expectation(&kernel(), &train, &s.uniform_weights(), 2, target).unwrap();
        let after = exact_expectation(&kernel(), &train, &s.reweighted().unwrap(), 2, target).unwrap();
        assert!(after > before, "target {target}: {after} <= {before}");
    }
}
