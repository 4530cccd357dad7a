//! Measurement protocols averaged over noise and detuning realizations.

use crate::analysis::{fit_decay_unweighted, FitError, FitModel};
use crate::control::{build_schedule, Schedule, SequenceSpec};
use crate::noise::{DephasingSpec, LorentzianNoiseSpec};
use crate::seed::{derive_seed, Stream};
use crate::su2::Ket;

use super::propagate::{evolve, ket_population0, prepared_state, readout_fidelity, Environment};
use super::{apply_envelope, monte_carlo, CurvePoint, DecayCurve, EngineError, SimParams};

/// Relative T1 mismatch accepted by [`calibrate_amplitude`].
pub const CALIBRATION_TOLERANCE: f64 = 0.02;
pub const MAX_CALIBRATION_ITERATIONS: usize = 30;
/// Targets above this (s) are refused with `NoConvergence`.
pub const MAX_CALIBRATION_TARGET: f64 = 1e-2;

/// `N ∈ {8, 32, …, 344, 360}`.
pub fn default_pulse_counts() -> Vec<usize> {
    let mut counts: Vec<usize> = (8..=344).step_by(24).collect();
    counts.push(360);
    counts
}

/// Noise and dephasing specs reseeded from the run's master seed.
fn seeded(
    noise: Option<&LorentzianNoiseSpec>,
    dephasing: &DephasingSpec,
    params: &SimParams,
) -> (Option<LorentzianNoiseSpec>, DephasingSpec) {
    let noise = noise.map(|n| n.with_seed(derive_seed(params.master_seed, Stream::RunNoise, 0)));
    let dephasing = dephasing.with_seed(derive_seed(params.master_seed, Stream::RunDetuning, 0));
    (noise, dephasing)
}

fn check_times(times: &[f64]) -> Result<(), EngineError> {
    if times.is_empty() {
        return Err(EngineError::InvalidParams("time list is empty".into()));
    }
    if times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(EngineError::InvalidParams(
            "times must be finite and non-negative".into(),
        ));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(EngineError::InvalidParams("times must be strictly increasing".into()));
    }
    Ok(())
}

fn check_specs(noise: Option<&LorentzianNoiseSpec>, dephasing: &DephasingSpec) -> Result<(), EngineError> {
    if let Some(n) = noise {
        n.validate()?;
    }
    dephasing.validate()?;
    Ok(())
}

fn collect(pulses: &[usize], times: &[f64], stats: Vec<(f64, f64)>) -> Result<DecayCurve, EngineError> {
    let points = stats
        .into_iter()
        .enumerate()
        .map(|(i, (value, stderr))| CurvePoint {
            pulses: pulses.get(i).copied().unwrap_or(0),
            t: times[i],
            value,
            stderr,
        })
        .collect();
    DecayCurve::new(points).map_err(|e| EngineError::InvalidParams(e.to_string()))
}

/// Runs `schedule` per realization and measures at each checkpoint.
fn sample_curve(
    schedule: &Schedule,
    initial: Ket,
    checkpoints: &[f64],
    noise: Option<&LorentzianNoiseSpec>,
    dephasing: &DephasingSpec,
    params: &SimParams,
    measure: fn(&Ket) -> Result<f64, crate::su2::StateError>,
) -> Result<Vec<(f64, f64)>, EngineError> {
    params.validate_for(schedule)?;
    monte_carlo(params, checkpoints.len(), |i| {
        let env = Environment::sample(noise, dephasing, i)?;
        evolve(schedule, &env, &initial, checkpoints, params)?
            .iter()
            .map(|k| measure(k).map_err(EngineError::from))
            .collect()
    })
}

/// Dynamical-decoupling scan: prepare, apply `N` pulses of `seq`, read out.
/// All `N` share one run of the longest sequence.
pub fn run_dd_scan(
    seq: &SequenceSpec,
    pulse_counts: &[usize],
    noise: Option<&LorentzianNoiseSpec>,
    dephasing: &DephasingSpec,
    params: &SimParams,
) -> Result<DecayCurve, EngineError> {
    check_specs(noise, dephasing)?;
    if pulse_counts.is_empty() || pulse_counts.windows(2).any(|w| w[1] <= w[0]) {
        return Err(EngineError::InvalidParams(
            "pulse counts must be non-empty and strictly increasing".into(),
        ));
    }
    for &n in pulse_counts {
        let spec = seq.with_pulses(n);
        spec.validate()?;
        spec.validate_cycles()?;
    }
    let n_max = *pulse_counts.last().expect("checked non-empty");
    let schedule = build_schedule(&seq.with_pulses(n_max))?;
    let tau_c = seq.tau_c();
    let times: Vec<f64> = pulse_counts.iter().map(|&n| n as f64 * tau_c).collect();
    let (noise, dephasing) = seeded(noise, dephasing, params);
    let stats = sample_curve(
        &schedule,
        prepared_state(),
        &times,
        noise.as_ref(),
        &dephasing,
        params,
        readout_fidelity,
    )?;
    let curve = collect(pulse_counts, &times, stats)?;
    let t2 = match dephasing {
        DephasingSpec::Envelope { t2 } => Some(t2),
        _ => params.envelope_t2,
    };
    Ok(match t2 {
        Some(t2) => apply_envelope(&curve, t2),
        None => curve,
    })
}

/// Ramsey free induction decay under quasi-static detuning.
pub fn run_fid(dephasing: &DephasingSpec, times: &[f64], params: &SimParams) -> Result<DecayCurve, EngineError> {
    if matches!(dephasing, DephasingSpec::Envelope { .. }) {
        return Err(EngineError::InvalidParams(
            "FID needs quasi-static or no dephasing".into(),
        ));
    }
    check_specs(None, dephasing)?;
    check_times(times)?;
    let schedule = Schedule::idle(*times.last().expect("checked non-empty"));
    let (_, dephasing) = seeded(None, dephasing, params);
    let stats = sample_curve(
        &schedule,
        prepared_state(),
        times,
        None,
        &dephasing,
        params,
        readout_fidelity,
    )?;
    collect(&[], times, stats)
}

/// Population of `|0⟩` versus time, starting in `|0⟩` with no pulses.
pub fn run_relaxation(
    noise: Option<&LorentzianNoiseSpec>,
    dephasing: &DephasingSpec,
    times: &[f64],
    params: &SimParams,
) -> Result<DecayCurve, EngineError> {
    if matches!(dephasing, DephasingSpec::Envelope { .. }) {
        return Err(EngineError::InvalidParams(
            "relaxation needs quasi-static or no dephasing".into(),
        ));
    }
    check_specs(noise, dephasing)?;
    check_times(times)?;
    let schedule = Schedule::idle(*times.last().expect("checked non-empty"));
    let (noise, dephasing) = seeded(noise, dephasing, params);
    let stats = sample_curve(
        &schedule,
        Ket::zero(),
        times,
        noise.as_ref(),
        &dephasing,
        params,
        ket_population0,
    )?;
    collect(&[], times, stats)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub amplitude: f64,
    /// T1 fitted at `amplitude` (s).
    pub achieved_t1: f64,
    pub iterations: usize,
}

/// Tunes the noise amplitude until the relaxation curve fitted with
/// `0.5 + 0.5·exp(−t/T1)` under uniform weights gives `target_t1`. Every
/// trial reuses the same realizations. `times` defaults to 31 points over
/// `[0, 3·target_t1]`.
///
/// Targets above [`MAX_CALIBRATION_TARGET`] would need integrating far past
/// the noise period and are refused with `NoConvergence` after 0 iterations.
pub fn calibrate_amplitude(
    noise: &LorentzianNoiseSpec,
    target_t1: f64,
    times: Option<&[f64]>,
    params: &SimParams,
) -> Result<Calibration, EngineError> {
    if !(target_t1.is_finite() && target_t1 > 0.0) {
        if target_t1.is_infinite() {
            return Err(EngineError::NoConvergence {
                iterations: 0,
                amplitude: 0.0,
                achieved: f64::INFINITY,
            });
        }
        return Err(EngineError::InvalidParams(format!(
            "target T1 = {target_t1:e} s must be positive"
        )));
    }
    if target_t1 > MAX_CALIBRATION_TARGET {
        return Err(EngineError::NoConvergence {
            iterations: 0,
            amplitude: 0.0,
            achieved: f64::INFINITY,
        });
    }
    let default_times: Vec<f64> = (0..31).map(|i| 3.0 * target_t1 * i as f64 / 30.0).collect();
    let times = times.unwrap_or(&default_times);
    check_times(times)?;

    let unit_power = noise.with_amplitude(1.0).mean_square_field();
    let mut x = (0.7 / (target_t1 * unit_power.sqrt())).ln();
    let mut last: Option<(f64, f64)> = None;
    let mut achieved = f64::NAN;
    for iteration in 1..=MAX_CALIBRATION_ITERATIONS {
        let amplitude = x.exp();
        let spec = noise.with_amplitude(amplitude);
        let curve = run_relaxation(Some(&spec), &DephasingSpec::None, times, params)?;
        let t1 = match fit_decay_unweighted(&curve, 1, FitModel::FixedHalf) {
            Ok(fit) => fit.time_constant,
            Err(FitError::NoDecay { .. }) | Err(FitError::Degenerate) => {
                x += 4f64.ln();
                last = None;
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        achieved = t1;
        let y = (t1 / target_t1).ln();
        if y.abs() <= (1.0 + CALIBRATION_TOLERANCE).ln() {
            return Ok(Calibration {
                amplitude,
                achieved_t1: t1,
                iterations: iteration,
            });
        }
        // T1 falls with A, so the log-log slope is negative; default to −1.
        let slope = match last {
            Some((x0, y0)) if x != x0 => {
                let s = (y - y0) / (x - x0);
                if s < -0.1 && s > -10.0 {
                    s
                } else {
                    -1.0
                }
            }
            _ => -1.0,
        };
        last = Some((x, y));
        x -= (y / slope).clamp(-10f64.ln(), 10f64.ln());
    }
    Err(EngineError::NoConvergence {
        iterations: MAX_CALIBRATION_ITERATIONS,
        amplitude: x.exp(),
        achieved,
    })
}
