use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use isomesh::fixtures;
use isomesh::geometry::{build_icosphere, fibonacci_sample};
use isomesh::metrics::pm_distance;
use isomesh::nn::{to_flat, Activation, Mlp, DEFAULT_LAYERS};
use isomesh::transport::{correspond, SinkhornParams};

fn mlp_passes(c: &mut Criterion) {
    let mlp = Mlp::<f32>::new(&DEFAULT_LAYERS, Activation::Relu, 1);
    let mut group = c.benchmark_group("mlp");
    for rows in [256usize, 2500] {
        let input = to_flat::<f32>(fibonacci_sample(1.0, rows).points());
        group.bench_with_input(BenchmarkId::new("forward", rows), &input, |b, x| {
            b.iter(|| mlp.forward_batch(black_box(x)))
        });
        group.bench_with_input(BenchmarkId::new("forward_backward", rows), &input, |b, x| {
            b.iter(|| {
                let cache = mlp.forward_cached(black_box(x));
                let grad = cache.output().to_vec();
                mlp.backward(&cache, &grad)
            })
        });
    }
    group.finish();
}

fn sinkhorn(c: &mut Criterion) {
    let params = SinkhornParams::default();
    let mut group = c.benchmark_group("sinkhorn");
    group.sample_size(10);
    for n in [200usize, 1000] {
        let a = fibonacci_sample(1.0, n).into_points();
        let b = fixtures::ellipsoid_cloud(1.0, n).into_points();
        group.bench_with_input(BenchmarkId::new("correspond", n), &n, |bench, _| {
            bench.iter(|| correspond(black_box(&a), black_box(&b), &params).unwrap())
        });
    }
    group.finish();
}

fn pm(c: &mut Criterion) {
    let r = build_icosphere(16, 1.0);
    let g = fixtures::truth_mesh(fixtures::Shape::Ellipsoid, 1.0);
    let mut group = c.benchmark_group("pm_distance");
    group.sample_size(10);
    group.bench_function("icosphere16_vs_ellipsoid", |b| b.iter(|| pm_distance(black_box(&r), black_box(&g))));
    group.finish();
}

criterion_group!(benches, mlp_passes, sinkhorn, pm);
criterion_main!(benches);
