//! Per-slot game and closed-loop episode throughput.

use aegis_core::baselines::PolicyTag;
use aegis_core::config::ExperimentConfig;
use aegis_core::game::audit::{random_instance, InstanceSpec};
use aegis_core::game::{GameConfig, GameVariant};
use aegis_core::harness::run_episode;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

fn spec(n_users: usize) -> InstanceSpec {
    InstanceSpec {
        n_users,
        activity: 0.6,
        bandwidth_levels: 8,
        compute_levels: 8,
    }
}

fn slot_game(c: &mut Criterion) {
    let mut group = c.benchmark_group("slot_game");
    let cfg = GameConfig::default();
    for n in [10, 20, 40] {
        let inst = random_instance(&spec(n), &mut ChaCha8Rng::seed_from_u64(n as u64));
        let game = inst.game(GameVariant::FULL);
        group.bench_with_input(BenchmarkId::new("run", n), &game, |b, g| b.iter(|| black_box(g.run(&cfg))));
        let profile = game.run(&cfg).profile.actions;
        group.bench_with_input(BenchmarkId::new("verify_equilibrium", n), &game, |b, g| {
            b.iter(|| black_box(g.verify_equilibrium(&profile, 1e-9)))
        });
    }
    group.finish();
}

fn brute_force(c: &mut Criterion) {
    let inst = random_instance(
        &InstanceSpec {
            n_users: 3,
            activity: 1.0,
            bandwidth_levels: 2,
            compute_levels: 2,
        },
        &mut ChaCha8Rng::seed_from_u64(3),
    );
    let game = inst.game(GameVariant::FULL);
    c.bench_function("brute_force_3_users_2x2", |b| b.iter(|| black_box(game.brute_force_max_potential(1 << 20).unwrap())));
}

fn episodes(c: &mut Criterion) {
    let mut group = c.benchmark_group("episode");
    group.sample_size(10);
    let cfg = ExperimentConfig::default();
    for policy in [PolicyTag::Aegis, PolicyTag::SloEdge, PolicyTag::EqualShare] {
        group.bench_with_input(BenchmarkId::new(policy.name(), 20), &policy, |b, &p| {
            b.iter(|| black_box(run_episode(&cfg, p, 20, 1).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, slot_game, brute_force, episodes);
criterion_main!(benches);
