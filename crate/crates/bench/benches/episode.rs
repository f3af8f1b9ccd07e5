use std::sync::Arc;

use altshift_core::characterize::CharacterizeConfig;
use altshift_core::estimation::NoiseMap;
use altshift_core::{run_batch, run_episode, ControllerMode, EpisodeConfig, Plant};
use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

fn bench_episode(c: &mut Criterion) {
    let plant = Plant::stepped();
    let cfg = EpisodeConfig::default();
    c.bench_function("run_episode/baseline_60s", |b| b.iter(|| run_episode(black_box(&cfg), &plant).unwrap()));

    let map = Arc::new(NoiseMap::zeros(CharacterizeConfig::default().grid));
    let corrected = cfg.with_mode(ControllerMode::Corrected(map));
    c.bench_function("run_episode/corrected_60s", |b| {
        b.iter(|| run_episode(black_box(&corrected), &plant).unwrap())
    });

    let mut group = c.benchmark_group("run_batch");
    group.sample_size(10);
    group.bench_function("20_episodes", |b| b.iter(|| run_batch(black_box(&cfg), &plant, 0, 20).unwrap()));
    group.finish();
}

criterion_group!(benches, bench_episode);
criterion_main!(benches);
