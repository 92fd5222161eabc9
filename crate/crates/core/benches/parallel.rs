//! Data-parallel kernels on a single-thread pool versus the default pool.
//!
//! With `--no-default-features` both arms run the sequential fallback.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use preindex_core::clustering::{init_random_min_entropy, KMeansConfig, RepresentationSet};
use preindex_core::corruptions::{corrupt_batch, NoiseKind, NoiseSpec};
use preindex_core::micronet::{synthetic_dataset, Dataset, Model, ModelSpec, SyntheticConfig};
use preindex_core::preindex::{self, compute_preindex, PreIndexConfig, Shift};
use preindex_core::rng::Prng;
use rayon::ThreadPool;

fn pools() -> Vec<(String, ThreadPool)> {
    let default = rayon::ThreadPoolBuilder::new().build().expect("pool");
    let label = format!("default_pool_{}", default.current_num_threads());
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().expect("pool");
    vec![("1_thread".into(), single), (label, default)]
}

fn dataset(samples: usize, shape: [usize; 3]) -> Dataset {
    synthetic_dataset(&SyntheticConfig {
        samples,
        classes: 4,
        shape,
        seed: 1,
    })
    .expect("valid config")
}

fn bench_clustering(c: &mut Criterion) {
    let mut rng = Prng::new(2);
    let reps: Vec<Vec<f64>> = (0..600)
        .map(|i| (0..48).map(|_| (i % 4) as f64 + rng.uniform_range(-1.0, 1.0)).collect())
        .collect();
    let labels = (0..600).map(|i| i % 4).collect();
    let rs = RepresentationSet::new(reps, labels, 4).expect("valid set");
    let mut group = c.benchmark_group("min_entropy_kmeans");
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| pool.install(|| init_random_min_entropy(black_box(&rs), 3, &KMeansConfig::default())))
        });
    }
    group.finish();
}

fn bench_corruption(c: &mut Criterion) {
    let data = dataset(64, [32, 32, 3]);
    let mut group = c.benchmark_group("corrupt_batch");
    for kind in [NoiseKind::Blur, NoiseKind::Frost] {
        let spec = NoiseSpec::new(kind, 5, 4).expect("valid level");
        for (name, pool) in pools() {
            group.bench_function(BenchmarkId::new(kind.name(), name), |b| {
                b.iter(|| pool.install(|| corrupt_batch(black_box(data.images()), &spec)))
            });
        }
    }
    group.finish();
}

fn bench_extraction(c: &mut Criterion) {
    let data = dataset(200, [16, 16, 1]);
    let model = Model::init(ModelSpec::desk_cnn([16, 16, 1], 4), 5).expect("valid spec");
    let spec = NoiseSpec::new(NoiseKind::Gaussian, 5, 6).expect("valid level");
    let mut group = c.benchmark_group("scoring");
    group.sample_size(20);
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::new("extract", &name), |b| {
            b.iter(|| pool.install(|| preindex::extract(&model, black_box(data.images()))))
        });
        group.bench_function(BenchmarkId::new("compute_preindex", &name), |b| {
            b.iter(|| {
                pool.install(|| {
                    compute_preindex(&model, black_box(&data), Shift::Noise(spec), &PreIndexConfig::default())
                })
            })
        });
    }
    group.finish();
}

criterion_group!(benches, bench_clustering, bench_corruption, bench_extraction);
criterion_main!(benches);
