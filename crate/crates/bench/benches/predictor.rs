//! LSTM forward, backward and online-update cost.

use aegis_core::predictor::{LstmConfig, LstmParams, OnlineLstm, Sample};
use criterion::{criterion_group, criterion_main, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

fn lstm(c: &mut Criterion) {
    let cfg = LstmConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let params = LstmParams::init(cfg.hidden, &mut rng);
    let window: Vec<f64> = (0..cfg.window).map(|_| rng.random_range(-1.0..1.0)).collect();
    let batch = [Sample {
        window: window.clone(),
        next: 0.5,
    }];

    c.bench_function("lstm_forward_window", |b| b.iter(|| black_box(params.forward_window(&window).unwrap())));
    c.bench_function("lstm_loss_and_gradient", |b| b.iter(|| black_box(params.loss_and_gradient(&batch).unwrap())));

    let series: Vec<f64> = (0..64).map(|_| rng.random_range(-100.0..-90.0)).collect();
    c.bench_function("online_observe_and_predict", |b| {
        b.iter_batched(
            || {
                let mut m = OnlineLstm::new(cfg, &mut ChaCha8Rng::seed_from_u64(2));
                for &v in &series[..cfg.window] {
                    m.observe(v).unwrap();
                }
                m
            },
            |mut m| {
                for &v in &series[cfg.window..] {
                    m.observe(v).unwrap();
                    black_box(m.predict().unwrap());
                }
            },
            criterion::BatchSize::SmallInput,
        )
    });
}

criterion_group!(benches, lstm);
criterion_main!(benches);
