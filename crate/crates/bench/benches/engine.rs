use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use volmix_core::autodiff::Tape;
use volmix_core::market_data::{compute_log_returns, rolling_volatility};
use volmix_core::model::ModelConfig;
use volmix_core::training::mse_loss;
use volmix_core::{Tensor, TimeMixerModel};

fn series(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.2 + 0.05 * (i as f64 * 0.07).sin() + 0.01 * (i as f64 * 1.3).cos()).collect()
}

fn model(horizon: usize) -> TimeMixerModel {
    TimeMixerModel::init(ModelConfig { lookback: 96, horizon, ..Default::default() }).unwrap()
}

fn forward_backward(c: &mut Criterion) {
    let batch = 32;
    let mut group = c.benchmark_group("train_step");
    for horizon in [12, 96] {
        let m = model(horizon);
        let x = series(batch * 96);
        let y = series(batch * horizon);
        group.bench_with_input(BenchmarkId::from_parameter(horizon), &horizon, |b, &f| {
            b.iter(|| {
                let mut tape = Tape::new();
                let bound = m.params().bind(&mut tape).unwrap();
                let xv = tape.constant(vec![batch, 96, 1], x.clone()).unwrap();
                let yv = tape.constant(vec![batch, f, 1], y.clone()).unwrap();
                let pred = m.forward_normalized(&mut tape, &bound, xv).unwrap();
                let loss = mse_loss(&mut tape, pred, yv).unwrap();
                black_box(tape.backward(loss).unwrap());
            })
        });
    }
    group.finish();
}

fn inference(c: &mut Criterion) {
    let m = model(12);
    let windows: Vec<Vec<f64>> = (0..256).map(|i| series(96 + i)[i..].to_vec()).collect();
    let refs: Vec<&[f64]> = windows.iter().map(|w| w.as_slice()).collect();
    c.bench_function("predict_batch_256", |b| b.iter(|| black_box(m.predict_batch(&refs).unwrap())));
}

fn volatility(c: &mut Criterion) {
    let closes: Vec<f64> = series(5000).iter().scan(100.0, |p, r| {
        *p *= 1.0 + 0.1 * (r - 0.2);
        Some(*p)
    }).collect();
    c.bench_function("rolling_volatility_5000", |b| {
        b.iter(|| black_box(rolling_volatility(&compute_log_returns(&closes).unwrap(), 21, 252.0).unwrap()))
    });
}

fn moving_average(c: &mut Criterion) {
    let x = Tensor::new(vec![32, 96, 32], series(32 * 96 * 32)).unwrap();
    c.bench_function("moving_average_k25", |b| {
        b.iter(|| {
            let mut tape = Tape::inference();
            let v = tape.leaf(&x).unwrap();
            black_box(tape.moving_average(v, 25).unwrap());
        })
    });
}

criterion_group!(benches, forward_backward, inference, volatility, moving_average);
criterion_main!(benches);
