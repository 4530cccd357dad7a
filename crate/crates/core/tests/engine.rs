use std::f64::consts::PI;

use eulerdd::engine::{evolve, prepared_state, readout_fidelity, Environment};
use eulerdd::noise::NoiseField;
use eulerdd::su2::C64;
use eulerdd::*;
use proptest::prelude::*;

fn params(m: usize) -> SimParams {
    SimParams {
        realizations: m,
        ..SimParams::default()
    }
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
}

#[test]
fn rk4_error_shrinks_sixteenfold_per_halving() {
    let tau_d = 100e-9;
    let schedule = Schedule::single_pulse(PulseShape::gaussian(), tau_d, 0.3);
    let env = Environment::with_detuning(2.0 * PI * 3e6);
    let run = |dt: f64| {
        let p = SimParams {
            dt: Some(dt),
            ..params(1)
        };
        evolve(&schedule, &env, &Ket::zero(), &[tau_d], &p).unwrap()[0]
    };
    let reference = run(tau_d / 6400.0);
    let errors: Vec<f64> = [50.0, 100.0, 200.0, 400.0]
        .iter()
        .map(|d| run(tau_d / d).distance(&reference))
        .collect();
    for w in errors.windows(2) {
        let ratio = w[0] / w[1];
        assert!((ratio / 16.0 - 1.0).abs() <= 0.2, "ratio {ratio}, errors {errors:?}");
    }
}

/// Closed-form propagator of `H = (Ω cos φ σx + Ω sin φ σy + δ σz)/2`.
fn exact_step(omega: f64, phi: f64, delta: f64, t: f64) -> [[C64; 2]; 2] {
    let (hx, hy, hz) = (omega * phi.cos(), omega * phi.sin(), delta);
    let norm = (hx * hx + hy * hy + hz * hz).sqrt();
    if norm == 0.0 {
        return [
            [C64::new(1.0, 0.0), C64::new(0.0, 0.0)],
            [C64::new(0.0, 0.0), C64::new(1.0, 0.0)],
        ];
    }
    let (c, s) = ((0.5 * norm * t).cos(), (0.5 * norm * t).sin());
    let (nx, ny, nz) = (hx / norm, hy / norm, hz / norm);
    let i = C64::new(0.0, 1.0);
    [
        [C64::new(c, 0.0) - i * s * nz, -i * s * C64::new(nx, -ny)],
        [-i * s * C64::new(nx, ny), C64::new(c, 0.0) + i * s * nz],
    ]
}

fn exact_fidelity(seq: &SequenceSpec, delta: f64) -> f64 {
    let schedule = build_schedule(seq).unwrap();
    let omega = PI / seq.tau_d;
    let mut psi = [C64::new(1.0, 0.0), C64::new(0.0, 0.0)];
    let mut apply = |u: [[C64; 2]; 2]| {
        psi = [u[0][0] * psi[0] + u[0][1] * psi[1], u[1][0] * psi[0] + u[1][1] * psi[1]];
    };
    apply(exact_step(1.0, 0.0, 0.0, PI / 2.0));
    for seg in schedule.segments() {
        match seg.kind {
            control::SegmentKind::Idle => apply(exact_step(0.0, 0.0, delta, seg.duration)),
            control::SegmentKind::Pulse { phase } => apply(exact_step(omega, phase, delta, seg.duration)),
        }
    }
    apply(exact_step(1.0, PI, 0.0, PI / 2.0));
    psi[0].norm_sqr()
}

#[test]
fn square_pulse_sequences_match_exact_propagation() {
    for kind in [SequenceKind::CpmgY, SequenceKind::Xy4, SequenceKind::Xy8] {
        let seq = SequenceSpec::new(kind, 16, 712e-9, 500e-9, PulseShape::Square);
        let schedule = build_schedule(&seq).unwrap();
        for delta in [-1.3e6, 2e5, 7.6e5] {
            let env = Environment::with_detuning(delta);
            let ket = evolve(&schedule, &env, &prepared_state(), &[schedule.total_time()], &params(1)).unwrap()[0];
            let got = readout_fidelity(&ket).unwrap();
            let want = exact_fidelity(&seq, delta);
            assert!((got - want).abs() < 1e-7, "{seq:?} δ={delta}: {got} vs {want}");
        }
    }
}

#[test]
fn slow_cpmg_refocuses_static_detuning() {
    let seq = SequenceSpec::new(SequenceKind::CpmgY, 8, 712e-9, 500e-9, PulseShape::Square);
    let counts: Vec<usize> = (1..=45).map(|k| 8 * k).collect();
    let curve = run_dd_scan(
        &seq,
        &counts,
        None,
        &DephasingSpec::from_t2_star(1.85e-6, 0),
        &params(1000),
    )
    .unwrap();
    let coherence = normalize_coherence(&curve).unwrap();
    assert_eq!(coherence.points().last().unwrap().pulses, 360);
    for p in coherence.points() {
        assert!(p.value >= 0.99, "{p:?}");
    }
}

#[test]
fn fid_recovers_t2_star() {
    let times = linspace(0.0, 6e-6, 41);
    let curve = run_fid(&DephasingSpec::from_t2_star(1.85e-6, 0), &times, &params(1000)).unwrap();
    assert_eq!(curve.points()[0].value, 1.0);
    let fit = fit_decay(&curve, 2, FitModel::Free).unwrap();
    assert!((fit.time_constant / 1.85e-6 - 1.0).abs() <= 0.05, "{fit}");

    let flat = run_fid(&DephasingSpec::None, &times, &params(10)).unwrap();
    assert!(flat.values().iter().all(|v| (v - 1.0).abs() < 1e-10));
}

#[test]
fn stderr_follows_central_limit_scaling() {
    let times = [0.0, 1.5e-6];
    let dephasing = DephasingSpec::from_t2_star(1.85e-6, 0);
    let small = run_fid(&dephasing, &times, &params(1000)).unwrap().points()[1].stderr;
    let large = run_fid(&dephasing, &times, &params(4000)).unwrap().points()[1].stderr;
    assert!((large / small / 0.5 - 1.0).abs() <= 0.25, "{small} {large}");
}

#[test]
fn quiet_relaxation_keeps_population() {
    let curve = run_relaxation(None, &DephasingSpec::None, &linspace(0.0, 1e-5, 6), &params(4)).unwrap();
    assert!(curve.values().iter().all(|v| (v - 1.0).abs() < 1e-10));
}

#[test]
fn calibration_is_self_consistent_and_monotone() {
    let noise = LorentzianNoiseSpec::default();
    let p = params(400);
    let cal = calibrate_amplitude(&noise, 12.87e-6, None, &p).unwrap();
    assert!((cal.achieved_t1 / 12.87e-6 - 1.0).abs() <= 0.05, "{cal:?}");

    let times = linspace(0.0, 3.0 * 12.87e-6, 31);
    let curve = run_relaxation(
        Some(&noise.with_amplitude(cal.amplitude)),
        &DephasingSpec::None,
        &times,
        &p,
    )
    .unwrap();
    let refit = fit_decay_unweighted(&curve, 1, FitModel::FixedHalf).unwrap();
    assert!((refit.time_constant / 12.87e-6 - 1.0).abs() <= 0.05, "{refit}");

    let doubled = calibrate_amplitude(&noise, 2.0 * 12.87e-6, None, &p).unwrap();
    assert!(doubled.amplitude < cal.amplitude, "{doubled:?} vs {cal:?}");
}

#[test]
fn strong_dephasing_inhibits_relaxation() {
    let noise = LorentzianNoiseSpec::default();
    let p = params(200);
    let cal = calibrate_amplitude(&noise, 12.87e-6, None, &p).unwrap();
    let spec = noise.with_amplitude(cal.amplitude);
    let times = linspace(0.0, 1e-3, 21);
    let curve = run_relaxation(Some(&spec), &DephasingSpec::from_t2_star(1.8e-6, 0), &times, &p).unwrap();
    let fit = fit_decay_unweighted(&curve, 1, FitModel::FixedHalf).unwrap();
    assert!(fit.time_constant >= 10.0 * cal.achieved_t1, "{fit} vs {cal:?}");
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let noise = LorentzianNoiseSpec::default().with_amplitude(9e4);
    let seq = SequenceSpec::new(SequenceKind::Xy8, 8, 712e-9, 500e-9, PulseShape::gaussian());
    let dephasing = DephasingSpec::from_t2_star(1.85e-6, 0);
    let run = |threads| {
        let p = SimParams {
            threads: Some(threads),
            master_seed: 42,
            ..params(64)
        };
        run_dd_scan(&seq, &[8, 16, 24], Some(&noise), &dephasing, &p)
            .unwrap()
            .to_csv()
    };
    assert_eq!(run(1), run(8));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn propagation_preserves_a_valid_state(
        amplitude in 0.0f64..3e5,
        delta in -3e6f64..3e6,
        seed in any::<u64>(),
        gaussian in any::<bool>(),
    ) {
        let shape = if gaussian { PulseShape::gaussian() } else { PulseShape::Square };
        let seq = SequenceSpec::new(SequenceKind::Xy8, 8, 300e-9, 100e-9, shape);
        let schedule = build_schedule(&seq).unwrap();
        let spec = LorentzianNoiseSpec::default().with_amplitude(amplitude).with_seed(seed);
        let field = NoiseField::new(&spec, &noise::sample_realization(&spec, 0)).unwrap();
        let env = Environment { noise: Some(field), delta };
        let state = engine::propagate(&schedule, &env, &prepared_state(), &params(1)).unwrap();
        let rho = state.rho();
        prop_assert!((rho.trace().re - 1.0).abs() < 1e-9);
        prop_assert!(rho.max_abs_diff(&rho.adjoint()) < 1e-9);
        prop_assert!(SpinState::new(*rho).is_ok());
    }
}
