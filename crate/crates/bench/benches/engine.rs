use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use monlyap_core::circuit::{self, CircuitModel};
use monlyap_core::lyapunov::{self, LyapunovRun};
use monlyap_core::spinchain::{self, ThetaSet};
use monlyap_core::{StateVector, TrajectoryEngine};
use std::hint::black_box;

fn theta() -> ThetaSet {
    let mut flat = [0.0; 16];
    for (k, v) in flat.iter_mut().enumerate() {
        *v = 0.37 * k as f64 - 2.1;
    }
    ThetaSet::from_flat(&flat)
}

fn gate_application(c: &mut Criterion) {
    let gate = spinchain::build_two_site_gate(&theta()).unwrap();
    let mut g = c.benchmark_group("gate");
    for l in [8, 12, 16] {
        let mut rng = circuit::trajectory_rng(1, 0);
        let mut state = StateVector::random(l, &mut rng).unwrap();
        g.bench_with_input(BenchmarkId::new("two_site", l), &l, |b, _| {
            b.iter(|| spinchain::apply_two_site(black_box(&mut state), &gate, l / 2).unwrap())
        });
        g.bench_with_input(BenchmarkId::new("brickwork_layer", l), &l, |b, _| {
            b.iter(|| circuit::brickwork_layer(black_box(&mut state), &theta(), 1).unwrap())
        });
    }
    g.finish();
}

fn engine_step(c: &mut Criterion) {
    let mut g = c.benchmark_group("engine_step");
    for (l, q) in [(8, 8), (12, 2), (12, 8)] {
        let model = CircuitModel::temporally_random(l, 0.3).unwrap();
        let mut engine = TrajectoryEngine::new(model, q, 1, 0).unwrap();
        g.bench_with_input(BenchmarkId::new(format!("q{q}"), l), &l, |b, _| {
            b.iter(|| engine.step().unwrap())
        });
    }
    g.finish();
}

fn orthonormalize(c: &mut Criterion) {
    let mut g = c.benchmark_group("orthonormalize");
    for (l, q) in [(8, 8), (12, 8)] {
        let mut rng = circuit::trajectory_rng(2, 0);
        let base: Vec<StateVector> = (0..q).map(|_| StateVector::random(l, &mut rng).unwrap()).collect();
        g.bench_with_input(BenchmarkId::new(format!("q{q}"), l), &l, |b, _| {
            b.iter_batched_ref(
                || base.clone(),
                |p| lyapunov::orthonormalize(black_box(p)).unwrap(),
                criterion::BatchSize::SmallInput,
            )
        });
    }
    g.finish();
}

fn lyapunov_bin(c: &mut Criterion) {
    let model = CircuitModel::temporally_random(10, 0.3).unwrap();
    let engine = TrajectoryEngine::new(model, 6, 1, 0).unwrap();
    let mut run = LyapunovRun::new(engine, 8, 64, 5e-3).unwrap();
    c.bench_function("lyapunov_bin_L10_q6_b8", |b| b.iter(|| run.advance_bin().unwrap()));
}

criterion_group!(benches, gate_application, engine_step, orthonormalize, lyapunov_bin);
criterion_main!(benches);
