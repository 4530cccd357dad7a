use criterion::{criterion_group, criterion_main, Criterion};
use eulerdd::dgroup::generators;
use eulerdd::engine::{prepared_state, propagate, Environment};
use eulerdd::noise::{sample_realization, NoiseField};
use eulerdd::*;
use std::hint::black_box;

fn propagation(c: &mut Criterion) {
    let spec = LorentzianNoiseSpec::default().with_amplitude(9e4).with_seed(1);
    let field = NoiseField::new(&spec, &sample_realization(&spec, 0)).unwrap();
    let params = SimParams {
        realizations: 1,
        ..SimParams::default()
    };
    for (label, shape) in [("square", PulseShape::Square), ("gaussian", PulseShape::gaussian())] {
        let seq = SequenceSpec::new(SequenceKind::Xy8, 64, 712e-9, 500e-9, shape);
        let schedule = build_schedule(&seq).unwrap();
        let env = Environment {
            noise: Some(field.clone()),
            delta: 7e5,
        };
        c.bench_function(&format!("propagate xy8 N=64 {label}"), |b| {
            b.iter(|| propagate(black_box(&schedule), &env, &prepared_state(), &params).unwrap())
        });
    }
}

fn noise_eval(c: &mut Criterion) {
    let spec = LorentzianNoiseSpec::default().with_amplitude(9e4);
    let field = NoiseField::new(&spec, &sample_realization(&spec, 3)).unwrap();
    c.bench_function("noise eval", |b| b.iter(|| field.eval(black_box(3.7e-5))));
}

fn eulerian(c: &mut Criterion) {
    let graph = build_cayley(&pauli_group(), &generators(&[Pauli::X, Pauli::Y, Pauli::Z])).unwrap();
    c.bench_function("eulerian cycle pauli {X,Y,Z}", |b| {
        b.iter(|| eulerian_cycle(black_box(&graph), &GroupElement::identity()).unwrap())
    });
}

fn fitting(c: &mut Criterion) {
    let points: Vec<CurvePoint> = (0..41)
        .map(|i| {
            let t = 6e-6 * i as f64 / 40.0;
            CurvePoint {
                pulses: 0,
                t,
                value: 0.5 + 0.5 * (-(t / 1.85e-6).powi(2)).exp(),
                stderr: 1e-3,
            }
        })
        .collect();
    let curve = DecayCurve::new(points).unwrap();
    c.bench_function("fit gaussian decay", |b| {
        b.iter(|| fit_decay(black_box(&curve), 2, FitModel::Free).unwrap())
    });
}

criterion_group!(benches, propagation, noise_eval, eulerian, fitting);
criterion_main!(benches);
