use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use semshield_core::confidence::DEFAULT_NND_K;
use semshield_core::{
    fit_for_kb, score_batch, sylvester_solve, synthetic, DenseMatrix, FitOptions, KnowledgeBase, ScoreMethod,
    ScoringInputs,
};
use std::hint::black_box;

fn spd(rng: &mut ChaCha8Rng, n: usize) -> DenseMatrix {
    let x = DenseMatrix::new(n, n, (0..n * n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    x.matmul(&x.transpose())
        .unwrap()
        .add(&DenseMatrix::identity(n).scale(0.1))
        .unwrap()
}

fn sylvester(c: &mut Criterion) {
    let mut group = c.benchmark_group("sylvester_solve");
    for (k, n) in [(12, 12), (49, 64), (85, 128)] {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = spd(&mut rng, k);
        let b = spd(&mut rng, n);
        let rhs = DenseMatrix::new(k, n, (0..k * n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        group.bench_with_input(
            BenchmarkId::from_parameter(format!("{k}x{n}")),
            &(a, b, rhs),
            |bench, (a, b, rhs)| {
                bench.iter(|| sylvester_solve(black_box(a), black_box(b), black_box(rhs), 0.0).unwrap())
            },
        );
    }
    group.finish();
}

fn pipeline(c: &mut Criterion) {
    let kb = KnowledgeBase::bundled_traffic_signs();
    let set = synthetic::generate(&synthetic::SynthConfig::new(kb.clone(), 1)).unwrap();
    let opts = FitOptions::default();

    c.bench_function("fit/2150x64", |b| {
        b.iter(|| fit_for_kb(&kb, black_box(&set.train_features), &set.train_labels, &opts).unwrap())
    });

    let model = fit_for_kb(&kb, &set.train_features, &set.train_labels, &opts).unwrap();
    let projection = model.bind(&kb).unwrap();
    let protos = kb.build_prototypes();
    let inputs = ScoringInputs {
        predictions: &set.predictions,
        labels: Some(&set.test_labels),
        features: Some(&set.test_features),
        projection: Some(&projection),
        prototypes: Some(&protos),
        probs: Some(&set.probs),
        train_features: Some(&set.train_features),
        mcd: Some(&set.mcd),
        nnd_k: DEFAULT_NND_K,
    };
    let mut group = c.benchmark_group("score_batch/860");
    for method in ScoreMethod::ALL {
        group.bench_function(method.name(), |b| {
            b.iter(|| score_batch(method, black_box(&inputs)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, sylvester, pipeline);
criterion_main!(benches);
