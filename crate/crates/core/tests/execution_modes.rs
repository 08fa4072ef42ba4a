use metaflow::experiment::{run_bench, ExperimentConfig};
use metaflow::meta::meta_train;
use metaflow::parallel::Execution;
use metaflow::synth::{make_transfer_scenario, ScenarioConfig};
use metaflow::tasks::build_task_set;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn meta_training_is_identical_across_execution_modes() {
    let sc = make_transfer_scenario(&ScenarioConfig { n_source_stations: 60, ..Default::default() }, 8).unwrap();
    let tasks = build_task_set(&sc.source, 10, 5, 0.8).unwrap();
    let mut config = ExperimentConfig::desk().meta;
    config.max_iterations = 25;
    config.eval_every = 5;
    config.hidden = 8;
    let run = |execution| {
        let cfg = metaflow::meta::MetaConfig { execution, ..config.clone() };
        meta_train(&tasks, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap()
    };
    let seq = run(Execution::Sequential);
    let par = run(Execution::Parallel);
    assert_eq!(seq.theta0, par.theta0);
    assert_eq!(seq.final_theta, par.final_theta);
    assert_eq!(seq.log.to_csv(false), par.log.to_csv(false));
}

#[test]
fn bench_is_identical_across_execution_modes() {
    let mut c = ExperimentConfig::desk();
    c.seed = Some(1);
    c.bench_seeds = vec![2, 1];
    c.scenario.n_source_stations = 30;
    c.meta.max_iterations = 10;
    c.meta.hidden = 6;
    c.adaptation.max_epochs = 2;
    c.source_pretrain.max_epochs = 2;
    let par = run_bench(&ExperimentConfig { execution: Execution::Parallel, ..c.clone() }).unwrap();
    let seq = run_bench(&ExperimentConfig { execution: Execution::Sequential, ..c }).unwrap();
    assert_eq!(par.reports, seq.reports);
    // seeds are reduced in sorted order whatever the config lists
    assert_eq!(par.runs.iter().map(|r| r.seed).collect::<Vec<_>>(), vec![1, 2]);
}
