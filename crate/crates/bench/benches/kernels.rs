use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use envdesign_core::agents::AgentKind;
use envdesign_core::dual::verify_duality;
use envdesign_core::generator::{generate_maze, reinforce_gradient, GeneratorPolicyParams};
use envdesign_core::mdp::random_instance;
use envdesign_core::oracle::brute_force_max_maze;
use envdesign_core::soft_maze::{
    optimal_agent_policy, soft_maze_mdp, transition_gradient, SoftMazeConfig, SoftWallParams,
};

fn soft_maze(c: &mut Criterion) {
    let config = SoftMazeConfig::new(5).unwrap();
    let params = SoftWallParams::uniform(&config).unwrap();
    let mdp = soft_maze_mdp(&config, params.blockage()).unwrap();
    c.bench_function("soft 5x5 optimal policy", |b| b.iter(|| optimal_agent_policy(black_box(&mdp)).unwrap()));
    let policy = optimal_agent_policy(&mdp).unwrap();
    c.bench_function("soft 5x5 transition gradient", |b| {
        b.iter(|| transition_gradient(&config, black_box(&params), &policy).unwrap())
    });
}

fn duality(c: &mut Criterion) {
    let (mdp, policy) = random_instance(7, 4, 3, 0.9).unwrap();
    c.bench_function("verify duality 4 states 3 actions", |b| {
        b.iter(|| verify_duality(black_box(&mdp), &policy, 1e-9).unwrap())
    });
}

fn generator(c: &mut Criterion) {
    let params = GeneratorPolicyParams::new(6, 128, 0).unwrap();
    c.bench_function("generate 6x6 maze", |b| b.iter(|| generate_maze(black_box(&params), 1, 34)));
    let batch: Vec<_> = (0..32).map(|i| generate_maze(&params, i, 34)).collect();
    c.bench_function("reinforce gradient 6x6 batch 32", |b| {
        b.iter(|| reinforce_gradient(black_box(&params), &batch, 0.0, 0.01).unwrap())
    });
}

fn oracle(c: &mut Criterion) {
    let mut group = c.benchmark_group("oracle");
    group.sample_size(10);
    group.bench_function("4x4 optimal", |b| b.iter(|| brute_force_max_maze(4, AgentKind::Optimal, 128).unwrap()));
    group.bench_function("4x4 dfs", |b| b.iter(|| brute_force_max_maze(4, AgentKind::Dfs, 128).unwrap()));
    group.finish();
}

criterion_group!(benches, soft_maze, duality, generator, oracle);
criterion_main!(benches);
