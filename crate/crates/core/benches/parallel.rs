//! Data-parallel kernels against a single worker. Without the `parallel`
//! feature both variants run the sequential path.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tailext::experiment::{make_benchmark, BenchmarkConfig};
use tailext::losses::{LossKind, Objective};
use tailext::model::{dataset_gradient, Activation};
use tailext::{par, ClassStats, ClassifierState};

fn workload() -> (ClassifierState, tailext::dataset::FeatureDataset, ClassStats) {
    let data = make_benchmark(&BenchmarkConfig::default(), 0).expect("benchmark data");
    let l = data.space.num_target();
    let stats = ClassStats::from_labels(data.train.labels().iter().copied(), l).unwrap();
    let space = tailext::LabelSpace::targets_only(l).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let state = ClassifierState::with_hidden(space, data.train.feature_dim(), 64, Activation::Relu, &mut rng);
    (state, data.train, stats)
}

fn kernels(c: &mut Criterion) {
    let (state, train, stats) = workload();
    let objective = Objective::new(LossKind::BalancedSoftmax, &stats, &state.space).unwrap();
    let workers = [("sequential", Some(1)), ("parallel", None)];

    let mut group = c.benchmark_group("full_batch_gradient");
    group.sample_size(20);
    for (name, threads) in workers {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            par::install(threads, || b.iter(|| black_box(dataset_gradient(&state, &objective, &train).unwrap())))
        });
    }
    group.finish();

    let mut group = c.benchmark_group("predict_batch");
    for (name, threads) in workers {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            par::install(threads, || b.iter(|| black_box(state.predict_batch(train.feature_matrix()).unwrap())))
        });
    }
    group.finish();
}

criterion_group!(benches, kernels);
criterion_main!(benches);
