use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use fedfair::fairness::demographic_disparity;
use fedfair::fl::Simulation;
use fedfair::models::{train_logistic, TrainConfig};
use fedfair::FLConfig;
use fedfair_bench::federation;

fn dd(c: &mut Criterion) {
    let fed = federation(1, 20_000);
    let data = fed.clients.values().next().unwrap().union();
    let preds: Vec<u8> = (0..data.len()).map(|i| (i % 3 == 0) as u8).collect();
    c.bench_function("demographic_disparity_20k", |b| {
        b.iter(|| demographic_disparity(black_box(&preds), &data, "SEX").unwrap())
    });
}

fn logistic(c: &mut Criterion) {
    let fed = federation(1, 5_000);
    let split = fed.clients.values().next().unwrap();
    let cfg = TrainConfig {
        epochs: 5,
        ..TrainConfig::default()
    };
    c.bench_function("train_logistic_5k_5_epochs", |b| {
        b.iter(|| train_logistic(black_box(split), &cfg).unwrap())
    });
}

fn fedavg_round(c: &mut Criterion) {
    let fed = federation(20, 1_000);
    let sim = Simulation::new(&fed, &FLConfig::default(), None).unwrap();
    let params = sim.initial_params();
    c.bench_function("fedavg_round_20_clients", |b| {
        b.iter(|| sim.step(black_box(&params), 0).unwrap())
    });
}

criterion_group!(benches, dd, logistic, fedavg_round);
criterion_main!(benches);
