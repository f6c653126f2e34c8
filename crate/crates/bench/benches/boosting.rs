use std::hint::black_box;

use boostpfn::boosting::{boost_fit, ensemble_predict, BoostConfig, UpdateRule};
use boostpfn::learners::{Context, ContextPredictor, KernelPredictor};
use boostpfn::rng::stream_rng;
use boostpfn::sampler::{normalize, sample_without_replacement};
use boostpfn::synthetic::gaussian_blobs;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

fn kernel_predict(c: &mut Criterion) {
    let data = gaussian_blobs(&[500, 500, 500], 10, 1.0, 0);
    let p = KernelPredictor::default();
    let queries = data.subset(&(0..data.len()).step_by(6).collect::<Vec<_>>()).unwrap();
    let mut group = c.benchmark_group("kernel_predict");
    for z in [50, 200, 1000] {
        let idx: Vec<usize> = (0..z).map(|i| i * data.len() / z).collect();
        let ctx = Context::gather(data.features(), data.labels(), &idx);
        group.bench_with_input(BenchmarkId::from_parameter(z), &ctx, |b, ctx| {
            b.iter(|| p.predict(black_box(ctx), queries.features(), 3).unwrap())
        });
    }
    group.finish();
}

fn sampler(c: &mut Criterion) {
    let mut group = c.benchmark_group("sample_without_replacement");
    for n in [1_000, 10_000] {
        let raw: Vec<f64> = (0..n).map(|i| 1.0 + (i % 7) as f64).collect();
        let w = normalize(&raw).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &w, |b, w| {
            let mut rng = stream_rng(1, 0);
            b.iter(|| sample_without_replacement(w, 500, &mut rng).unwrap())
        });
    }
    group.finish();
}

fn fit_and_predict(c: &mut Criterion) {
    let train = gaussian_blobs(&[300, 300, 300], 8, 1.0, 2);
    let p = KernelPredictor::default();
    let mut group = c.benchmark_group("boost_fit");
    group.sample_size(10);
    for rule in UpdateRule::ALL {
        let cfg = BoostConfig {
            rounds: 5,
            context_size: 200,
            update_rule: rule,
            seed: 1,
            ..Default::default()
        };
        group.bench_function(rule.to_string(), |b| {
            b.iter(|| boost_fit(&train, &p, black_box(&cfg)).unwrap())
        });
    }
    group.finish();

    let cfg = BoostConfig {
        rounds: 10,
        context_size: 200,
        seed: 1,
        ..Default::default()
    };
    let model = boost_fit(&train, &p, &cfg).unwrap().model;
    c.bench_function("ensemble_predict/900x10", |b| {
        b.iter(|| ensemble_predict(&model, &p, train.features(), 1024).unwrap())
    });
}

criterion_group!(benches, kernel_predict, sampler, fit_and_predict);
criterion_main!(benches);
