use boostpfn::boosting::{
    bag_fit_predict, boost_fit, boost_fit_monitored, ensemble_predict, BoostConfig, EnsembleModel, GammaMode,
    UpdateRule,
};
use boostpfn::data::{read_csv, split, write_csv, SplitSpec};
use boostpfn::learners::{KernelPredictor, UniformPredictor};
use boostpfn::synthetic::gaussian_blobs;
use boostpfn::Error;

fn config(rule: UpdateRule) -> BoostConfig {
    BoostConfig {
        rounds: 8,
        context_size: 40,
        update_rule: rule,
        seed: 21,
        ..Default::default()
    }
}

#[test]
fn fit_is_reproducible_and_seed_sensitive() {
    let train = gaussian_blobs(&[80, 80, 40], 3, 1.5, 4);
    let p = KernelPredictor::default();
    for rule in UpdateRule::ALL {
        let a = boost_fit(&train, &p, &config(rule)).unwrap();
        let b = boost_fit(&train, &p, &config(rule)).unwrap();
        assert_eq!(a.model.to_json().unwrap(), b.model.to_json().unwrap());
        assert_eq!(a.curve, b.curve);
        let c = boost_fit(
            &train,
            &p,
            &BoostConfig {
                seed: 22,
                ..config(rule)
            },
        )
        .unwrap();
        assert_ne!(a.model.rounds[0].context, c.model.rounds[0].context);
    }
}

#[test]
fn batching_does_not_change_predictions() {
    let data = gaussian_blobs(&[100, 100, 100], 4, 1.0, 6);
    let (train, test) = split(
        &data,
        SplitSpec {
            train_fraction: 0.7,
            seed: 6,
        },
    )
    .unwrap();
    let p = KernelPredictor::default();
    let model = boost_fit(&train, &p, &config(UpdateRule::ExpHadamard)).unwrap().model;
    let whole = ensemble_predict(&model, &p, test.features(), usize::MAX).unwrap();
    for batch in [1, 7, 64] {
        let parts = ensemble_predict(&model, &p, test.features(), batch).unwrap();
        let worst = (&whole.view() - &parts.view())
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(worst <= 1e-12, "batch {batch}: {worst:e}");
    }
}

#[test]
fn saved_model_predicts_identically() {
    let train = gaussian_blobs(&[50, 50], 2, 2.0, 8);
    let p = KernelPredictor::default();
    let model = boost_fit(&train, &p, &config(UpdateRule::Hadamard)).unwrap().model;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    model.save(&path).unwrap();
    let loaded = EnsembleModel::load(&path).unwrap();
    assert_eq!(loaded, model);
    let a = ensemble_predict(&model, &p, train.features(), 32).unwrap();
    let b = ensemble_predict(&loaded, &p, train.features(), 32).unwrap();
    assert_eq!(a, b);
}

#[test]
fn rgbm_records_sources_and_keeps_loss_monotone() {
    let train = gaussian_blobs(&[90, 90, 30], 3, 1.2, 12);
    let p = KernelPredictor::default();
    for rule in UpdateRule::ALL {
        let cfg = BoostConfig {
            rgbm_mode: true,
            rounds: 12,
            ..config(rule)
        };
        let fit = boost_fit(&train, &p, &cfg).unwrap();
        assert!(fit.model.rounds.iter().all(|r| r.source.is_some()));
        assert!(fit.curve.train.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    }
    let plain = boost_fit(&train, &p, &config(UpdateRule::ExpHadamard)).unwrap();
    assert!(plain.model.rounds.iter().all(|r| r.source.is_none()));
}

#[test]
fn alpha_mode_steps_by_alpha() {
    let train = gaussian_blobs(&[60, 60, 60], 3, 1.5, 2);
    let p = KernelPredictor::default();
    let cfg = BoostConfig {
        gamma_mode: GammaMode::Alpha,
        ..config(UpdateRule::AdaBoost)
    };
    let fit = boost_fit(&train, &p, &cfg).unwrap();
    for r in &fit.model.rounds {
        assert_eq!(Some(r.gamma), r.alpha);
    }
    let bad = BoostConfig {
        gamma_mode: GammaMode::Alpha,
        ..config(UpdateRule::Hadamard)
    };
    assert!(matches!(boost_fit(&train, &p, &bad), Err(Error::Config(_))));
}

#[test]
fn uninformative_learner_leaves_loss_flat() {
    let train = gaussian_blobs(&[30, 30], 2, 2.0, 1);
    let fit = boost_fit(&train, &UniformPredictor, &config(UpdateRule::ExpHadamard)).unwrap();
    let first = fit.curve.train[0];
    assert!(fit.curve.train.iter().all(|&l| (l - first).abs() < 1e-12));
}

#[test]
fn eval_curve_tracks_held_out_rows() {
    let data = gaussian_blobs(&[70, 70], 3, 2.0, 5);
    let (train, test) = split(
        &data,
        SplitSpec {
            train_fraction: 0.6,
            seed: 5,
        },
    )
    .unwrap();
    let fit = boost_fit_monitored(
        &train,
        &KernelPredictor::default(),
        &config(UpdateRule::AdaBoost),
        Some(&test),
    )
    .unwrap();
    let eval = fit.curve.test.unwrap();
    assert_eq!(eval.len(), fit.curve.train.len());
    assert!((eval[0] - (2f64).ln()).abs() < 1e-12);
    assert!(eval.last().unwrap() < &eval[0]);
}

#[test]
fn bagging_variance_shrinks_with_more_bags() {
    let data = gaussian_blobs(&[100, 100, 100], 4, 1.0, 3);
    let (train, test) = split(
        &data,
        SplitSpec {
            train_fraction: 0.8,
            seed: 3,
        },
    )
    .unwrap();
    let p = KernelPredictor::default();
    let spread = |bags: usize| -> f64 {
        let runs: Vec<_> = (0..10u64)
            .map(|seed| {
                bag_fit_predict(&train, &p, bags, 20, seed, test.features())
                    .unwrap()
                    .into_inner()
            })
            .collect();
        let mean = runs
            .iter()
            .fold(ndarray::Array2::<f64>::zeros(runs[0].raw_dim()), |acc, r| acc + r)
            / 10.0;
        runs.iter().map(|r| (r - &mean).mapv(|v| v * v).sum()).sum::<f64>() / 10.0
    };
    let one = spread(1);
    let sixteen = spread(16);
    assert!(sixteen < one / 4.0, "variance {one} -> {sixteen}");
}

#[test]
fn csv_round_trip_preserves_values_and_labels() {
    let data = gaussian_blobs(&[5, 7, 3], 4, 1.0, 13);
    let mut buf = Vec::new();
    write_csv(&data, &mut buf, "target").unwrap();
    let back = read_csv(buf.as_slice(), "target").unwrap();
    assert_eq!(back.features(), data.features());
    assert_eq!(back.label_names(), data.label_names());
    let names: Vec<&str> = back.labels().iter().map(|&y| back.label_names()[y].as_str()).collect();
    let orig: Vec<&str> = data.labels().iter().map(|&y| data.label_names()[y].as_str()).collect();
    assert_eq!(names, orig);
}

#[test]
fn split_seeds_give_different_partitions() {
    let data = gaussian_blobs(&[50, 50], 2, 1.0, 0);
    let (a, _) = split(
        &data,
        SplitSpec {
            train_fraction: 0.5,
            seed: 1,
        },
    )
    .unwrap();
    let (b, _) = split(
        &data,
        SplitSpec {
            train_fraction: 0.5,
            seed: 2,
        },
    )
    .unwrap();
    let (c, _) = split(
        &data,
        SplitSpec {
            train_fraction: 0.5,
            seed: 1,
        },
    )
    .unwrap();
    assert_ne!(a.features(), b.features());
    assert_eq!(a.features(), c.features());
}
