use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use metaflow::adapt::predict_normalized;
use metaflow::lstm::{init_params, Dims};
use metaflow::meta::meta_gradient;
use metaflow::parallel::Execution;
use metaflow::synth::{make_transfer_scenario, ScenarioConfig};
use metaflow::tasks::{build_task_set, sample_episode};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn modes() -> [(&'static str, Execution); 2] {
    [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)]
}

fn bench(c: &mut Criterion) {
    let scenario = ScenarioConfig { n_source_stations: 160, ..ScenarioConfig::default() };
    let sc = make_transfer_scenario(&scenario, 1).unwrap();
    let tasks = build_task_set(&sc.source, 10, 5, 0.8).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let theta = init_params(Dims::new(32, 30, 10).unwrap(), &mut rng);

    let mut group = c.benchmark_group("meta_gradient");
    for n_tasks in [4, 16] {
        let batch = sample_episode(&tasks.train_tasks, n_tasks, 16, 16, &mut rng).unwrap();
        for (name, exec) in modes() {
            group.bench_with_input(BenchmarkId::new(name, n_tasks), &batch, |b, batch| {
                b.iter(|| meta_gradient(&theta, batch, 0.001, 5, exec).unwrap())
            });
        }
    }
    group.finish();

    let samples = &tasks.test_tasks[0].samples;
    let mut group = c.benchmark_group("predict");
    for (name, exec) in modes() {
        group.bench_function(BenchmarkId::new(name, samples.len()), |b| {
            b.iter(|| predict_normalized(&theta, samples, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(20);
    targets = bench
}
criterion_main!(benches);
