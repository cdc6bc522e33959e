use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use tdem_bench::{exp_decay, major_axis, window};
use tdem_core::dynamics::{flow, step, BodyState};
use tdem_core::numerics::sym_eigen;
use tdem_core::stability::{certify, probe_stability, second_variation};
use tdem_core::{Margins, ProbeSettings, Vec3};

fn dynamics(c: &mut Criterion) {
    let s = exp_decay();
    let state = BodyState::at_rest_frame(Vec3::new(0.2, 0.3, 0.9));
    c.bench_function("step", |b| b.iter(|| step(&s, black_box(1.0), black_box(&state), 1e-3).unwrap()));
    c.bench_function("flow 1000 steps", |b| b.iter(|| flow(&s, black_box(&state), 0.0, 1.0, 1e-3).unwrap()));
}

fn linear_algebra(c: &mut Criterion) {
    let s = exp_decay();
    let re = major_axis(&s, &window(11));
    let sv = second_variation(&s, 2.0, &re).unwrap();
    c.bench_function("second_variation", |b| b.iter(|| second_variation(&s, black_box(2.0), &re).unwrap()));
    c.bench_function("sym_eigen 6x6", |b| b.iter(|| sym_eigen(black_box(&sv.matrix))));
}

fn certificate(c: &mut Criterion) {
    let s = exp_decay();
    let mut group = c.benchmark_group("certify");
    group.sample_size(10);
    for samples in [11, 101] {
        let w = window(samples);
        let re = major_axis(&s, &w);
        group.bench_with_input(BenchmarkId::from_parameter(samples), &w, |b, w| {
            b.iter(|| certify(&s, &re, w, 0.1, 9, &Margins::default()).unwrap())
        });
    }
    group.finish();
}

fn probe(c: &mut Criterion) {
    let s = exp_decay();
    let re = major_axis(&s, &window(11));
    let mut group = c.benchmark_group("probe");
    group.sample_size(10);
    for workers in [1, 4] {
        let settings = ProbeSettings {
            epsilon: 0.2,
            deltas: vec![0.02],
            t0_list: vec![0.0, 2.0],
            horizon: 10.0,
            trials: 8,
            dt: 1e-2,
            seed: 1,
            workers,
        };
        group.bench_with_input(BenchmarkId::new("workers", workers), &settings, |b, p| {
            b.iter(|| probe_stability(&s, &re, p).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, dynamics, linear_algebra, certificate, probe);
criterion_main!(benches);
