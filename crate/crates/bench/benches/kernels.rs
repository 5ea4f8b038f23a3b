use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use spgan_bench::{desk_config, porous_cube};
use spgan_core::tensor::{ConvParams, Graph, Tensor};
use spgan_core::{count_cells, two_point_correlation, Estimator, Phase, SpganModel};

fn morphology(c: &mut Criterion) {
    let mut group = c.benchmark_group("count_cells");
    for size in [32, 64] {
        let v = porous_cube(size, 1);
        group.bench_with_input(BenchmarkId::from_parameter(size), &v, |b, v| {
            b.iter(|| count_cells(black_box(v), Phase::Void))
        });
    }
    group.finish();
}

fn correlation(c: &mut Criterion) {
    let v = porous_cube(64, 2);
    let mut group = c.benchmark_group("tpc_64");
    group.sample_size(20);
    group.bench_function("exhaustive_r16", |b| {
        b.iter(|| two_point_correlation(black_box(&v), Phase::Void, 16, Estimator::Exhaustive))
    });
    group.bench_function("monte_carlo_r16_10k", |b| {
        let est = Estimator::MonteCarlo {
            n_pairs: 10_000,
            seed: 3,
        };
        b.iter(|| two_point_correlation(black_box(&v), Phase::Void, 16, est))
    });
    group.finish();
}

fn convolution(c: &mut Criterion) {
    let x = Tensor::full(&[4, 8, 16, 16, 16], 0.5);
    let w = Tensor::full(&[16, 8, 4, 4, 4], 0.01);
    let p = ConvParams::new(2, 1);
    let mut group = c.benchmark_group("conv3d_4x8x16^3_to_16");
    group.sample_size(20);
    group.bench_function("forward", |b| {
        b.iter(|| {
            let mut g = Graph::new();
            let xv = g.constant(x.clone());
            let wv = g.constant(w.clone());
            g.conv3d(xv, wv, None, p).unwrap()
        })
    });
    group.bench_function("forward_backward", |b| {
        b.iter(|| {
            let mut g = Graph::new();
            let xv = g.leaf(x.clone(), true);
            let wv = g.leaf(w.clone(), true);
            let y = g.conv3d(xv, wv, None, p).unwrap();
            let loss = g.mean(y);
            g.backward(loss).unwrap();
        })
    });
    group.finish();
}

fn training(c: &mut Criterion) {
    let corpus = vec![porous_cube(16, 4)];
    let mut group = c.benchmark_group("spgan_16");
    group.sample_size(10);
    group.bench_function("train_iteration", |b| {
        let mut model = SpganModel::new(desk_config()).unwrap();
        b.iter(|| {
            let mut rng = model.iteration_rng(model.iteration);
            let batch = model.sample_batch(&corpus, &mut rng).unwrap();
            model.train_iteration(&batch, &mut rng).unwrap()
        })
    });
    group.finish();
}

criterion_group!(benches, morphology, correlation, convolution, training);
criterion_main!(benches);
