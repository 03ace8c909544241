use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use optlist::learner::greedy_learn;
use optlist::{CostMatrix, RngKey};
use rand::Rng;

fn random_matrix(n_tasks: usize, n_opts: usize) -> CostMatrix {
    let mut rng = RngKey::from_seed(1).stream();
    let n = n_tasks * n_opts;
    let valid: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let test: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    CostMatrix::from_grids(
        (0..n_tasks).map(|t| format!("t{t}")).collect(),
        (0..n_opts).map(|o| format!("o{o}")).collect(),
        valid,
        test,
    )
    .unwrap()
}

fn greedy(c: &mut Criterion) {
    let mut group = c.benchmark_group("greedy_learn");
    for &(tasks, opts) in &[(128, 256), (128, 1000)] {
        let m = random_matrix(tasks, opts);
        group.bench_with_input(BenchmarkId::from_parameter(format!("{tasks}x{opts}")), &m, |b, m| {
            b.iter(|| greedy_learn(m, 100).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, greedy);
criterion_main!(benches);
