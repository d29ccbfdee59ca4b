//! The rayon-backed loops against the same work pinned to one thread. Build
//! with `--no-default-features` to measure the plain sequential fallback.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use figmn::bench::gaussian_rows;
use figmn::data::{cross_validate, read_csv, ClassColumn, XvalOptions};
use figmn::inference::{reconstruct_batch, SlicePlan};
use figmn::mixture::{IgmnConfig, MixtureModel};

fn many_components(rows: &[Vec<f64>]) -> MixtureModel {
    // A narrow initial width and a high novelty level keep K in the dozens.
    let mut model = MixtureModel::from_data(IgmnConfig::new(0.05, 0.2), rows).unwrap();
    for x in rows {
        model.learn_one(x).unwrap();
    }
    model
}

fn mode_label() -> &'static str {
    if figmn::parallel_enabled() {
        "pool"
    } else {
        "no-rayon"
    }
}

fn training(c: &mut Criterion) {
    let rows = gaussian_rows(300, 48, 7);
    let mut group = c.benchmark_group("train_many_components");
    group.sample_size(10);
    group.bench_function(BenchmarkId::new(mode_label(), 48), |b| b.iter(|| many_components(&rows)));
    group.bench_function(BenchmarkId::new("one-thread", 48), |b| {
        b.iter(|| figmn::run_single_threaded(|| many_components(&rows)))
    });
    group.finish();
}

fn inference(c: &mut Criterion) {
    let rows = gaussian_rows(300, 48, 8);
    let model = many_components(&rows);
    let plan = SlicePlan::targets_last(48, 2).unwrap();
    let inputs: Vec<Vec<f64>> = rows.iter().map(|r| r[..46].to_vec()).collect();
    let mut group = c.benchmark_group("reconstruct_batch");
    group.bench_function(BenchmarkId::new(mode_label(), model.len()), |b| {
        b.iter(|| reconstruct_batch(&model, &inputs, &plan).unwrap())
    });
    group.bench_function(BenchmarkId::new("one-thread", model.len()), |b| {
        b.iter(|| figmn::run_single_threaded(|| reconstruct_batch(&model, &inputs, &plan).unwrap()))
    });
    group.finish();
}

fn grid_search(c: &mut Criterion) {
    let mut text = String::from("a,b,c,class\n");
    for (i, r) in gaussian_rows(200, 3, 9).iter().enumerate() {
        let k = i % 2;
        text += &format!("{},{},{},{k}\n", r[0] + 2.0 * k as f64, r[1], r[2]);
    }
    let ds = read_csv(text.as_bytes(), "synthetic", &ClassColumn::Last).unwrap();
    let opts = XvalOptions {
        config: IgmnConfig::new(0.1, 0.001),
        folds: 2,
        seed: 1,
        deltas: vec![0.01, 0.1, 1.0],
        standardize: false,
        nested: false,
    };
    let mut group = c.benchmark_group("grid_search");
    group.sample_size(10);
    group.bench_function(mode_label(), |b| b.iter(|| cross_validate(&ds, &opts).unwrap()));
    group.bench_function("one-thread", |b| {
        b.iter(|| figmn::run_single_threaded(|| cross_validate(&ds, &opts).unwrap()))
    });
    group.finish();
}

criterion_group!(benches, training, inference, grid_search);
criterion_main!(benches);
