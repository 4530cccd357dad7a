//! Spin propagation and Monte Carlo experiment runners.

mod propagate;
mod runners;

use std::fs;
use std::io;
use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

use crate::analysis::FitError;
use crate::control::{ControlError, Schedule};
use crate::noise::NoiseError;
use crate::su2::StateError;

pub use propagate::{
    evolve, ket_population0, preparation, prepared_state, propagate, readout, readout_fidelity, Environment,
    MAX_LOCAL_ERROR, RATE_STEP, STEPS_PER_SEGMENT,
};
pub use runners::{
    calibrate_amplitude, default_pulse_counts, run_dd_scan, run_fid, run_relaxation, Calibration,
    CALIBRATION_TOLERANCE, MAX_CALIBRATION_ITERATIONS, MAX_CALIBRATION_TARGET,
};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("integrator step too large: local error estimate {estimate:e} exceeds 1e-6")]
    StepTooLarge { estimate: f64 },
    #[error("invalid simulation parameters: {0}")]
    InvalidParams(String),
    #[error("checkpoint {0:e} s lies outside the schedule")]
    CheckpointOutOfRange(f64),
    #[error(
        "calibration did not converge after {iterations} iterations (last A = {amplitude:e}, T1 = {achieved:e} s)"
    )]
    NoConvergence {
        iterations: usize,
        amplitude: f64,
        achieved: f64,
    },
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimParams {
    /// Fixed integrator step (s); `None` picks one per segment.
    pub dt: Option<f64>,
    pub realizations: usize,
    pub master_seed: u64,
    /// `T2` of the post-hoc envelope applied to DD scans.
    pub envelope_t2: Option<f64>,
    /// Worker threads; `None` uses rayon's default.
    pub threads: Option<usize>,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            dt: None,
            realizations: 1000,
            master_seed: 0,
            envelope_t2: None,
            threads: None,
        }
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<(), EngineError> {
        if self.realizations == 0 {
            return Err(EngineError::InvalidParams("realizations must be at least 1".into()));
        }
        if let Some(dt) = self.dt {
            if !(dt.is_finite() && dt > 0.0) {
                return Err(EngineError::InvalidParams(format!("dt = {dt:e} s must be positive")));
            }
        }
        if let Some(t2) = self.envelope_t2 {
            if !(t2.is_finite() && t2 > 0.0) {
                return Err(EngineError::InvalidParams(format!(
                    "envelope T2 = {t2:e} s must be positive"
                )));
            }
        }
        if self.threads == Some(0) {
            return Err(EngineError::InvalidParams("threads must be at least 1".into()));
        }
        Ok(())
    }

    /// Also requires `dt ≤ τ_d/50` when the schedule has finite pulses.
    pub fn validate_for(&self, schedule: &Schedule) -> Result<(), EngineError> {
        self.validate()?;
        if let Some(dt) = self.dt {
            let finite = !schedule.shape().is_delta() && schedule.pulse_count() > 0 && schedule.tau_d() > 0.0;
            if finite && dt > schedule.tau_d() / 50.0 * (1.0 + 1e-12) {
                return Err(EngineError::InvalidParams(format!(
                    "dt = {dt:e} s exceeds tau_d/50 = {:e} s",
                    schedule.tau_d() / 50.0
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    /// Pulse count, 0 where not applicable.
    pub pulses: usize,
    pub t: f64,
    pub value: f64,
    pub stderr: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CurveError {
    #[error("times must be strictly increasing (point {index})")]
    NotIncreasing { index: usize },
    #[error("point {index} is not finite")]
    NonFinite { index: usize },
    #[error("point {index} has negative stderr")]
    NegativeStderr { index: usize },
}

/// Mean and standard error of a measured quantity versus time.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayCurve {
    points: Vec<CurvePoint>,
}

impl DecayCurve {
    pub fn new(points: Vec<CurvePoint>) -> Result<Self, CurveError> {
        for (index, p) in points.iter().enumerate() {
            if !(p.t.is_finite() && p.value.is_finite() && p.stderr.is_finite()) {
                return Err(CurveError::NonFinite { index });
            }
            if p.stderr < 0.0 {
                return Err(CurveError::NegativeStderr { index });
            }
            if index > 0 && p.t <= points[index - 1].t {
                return Err(CurveError::NotIncreasing { index });
            }
        }
        Ok(DecayCurve { points })
    }

    pub(crate) fn from_points_unchecked(points: Vec<CurvePoint>) -> Self {
        DecayCurve { points }
    }

    pub fn points(&self) -> &[CurvePoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.t).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.value).collect()
    }

    /// True when every value is a probability.
    pub fn in_unit_range(&self) -> bool {
        self.points.iter().all(|p| (0.0..=1.0).contains(&p.value))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("N,t_s,value,stderr\n");
        for p in &self.points {
            out.push_str(&format!("{},{:e},{},{}\n", p.pulses, p.t, p.value, p.stderr));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> io::Result<()> {
        fs::write(path, self.to_csv())
    }
}

/// Multiplies values and errors by `0.5·exp(−(t/T2)²) + 0.5`.
pub fn apply_envelope(curve: &DecayCurve, t2: f64) -> DecayCurve {
    let points = curve
        .points
        .iter()
        .map(|p| {
            let factor = 0.5 * (-(p.t / t2).powi(2)).exp() + 0.5;
            CurvePoint {
                value: p.value * factor,
                stderr: p.stderr * factor,
                ..*p
            }
        })
        .collect();
    DecayCurve { points }
}

fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        n if n <= 8 => xs.iter().sum(),
        n => pairwise_sum(&xs[..n / 2]) + pairwise_sum(&xs[n / 2..]),
    }
}

/// Mean and standard error of the mean.
pub fn mean_stderr(samples: &[f64]) -> (f64, f64) {
    let n = samples.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = pairwise_sum(samples) / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let dev: Vec<f64> = samples.iter().map(|x| (x - mean).powi(2)).collect();
    let var = pairwise_sum(&dev) / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Runs `work(i)` for every realization and reduces each output column to
/// mean and stderr. Results do not depend on the thread count.
pub(crate) fn monte_carlo<F>(params: &SimParams, columns: usize, work: F) -> Result<Vec<(f64, f64)>, EngineError>
where
    F: Fn(u64) -> Result<Vec<f64>, EngineError> + Sync,
{
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(threads) = params.threads {
        builder = builder.num_threads(threads);
    }
    let pool = builder.build().map_err(|e| EngineError::ThreadPool(e.to_string()))?;
    let rows: Vec<Vec<f64>> = pool.install(|| {
        (0..params.realizations as u64)
            .into_par_iter()
            .map(&work)
            .collect::<Result<_, _>>()
    })?;
    Ok((0..columns)
        .map(|c| {
            let column: Vec<f64> = rows.iter().map(|r| r[c]).collect();
            mean_stderr(&column)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn point(t: f64, value: f64) -> CurvePoint {
        CurvePoint {
            pulses: 0,
            t,
            value,
            stderr: 0.01,
        }
    }

    #[test]
    fn envelope_examples() {
        let c = DecayCurve::new(vec![point(0.0, 1.0), point(896e-6, 1.0), point(1.0, 1.0)]).unwrap();
        let e = apply_envelope(&c, 896e-6);
        assert_eq!(e.points()[0].value, 1.0);
        assert_eq!(e.points()[1].value, 0.5 * (-1.0f64).exp() + 0.5);
        assert!((e.points()[2].value - 0.5).abs() < 1e-15);
        assert_eq!(e.points()[0].stderr, 0.01);
    }

    #[test]
    fn curve_validation() {
        assert_eq!(
            DecayCurve::new(vec![point(1.0, 1.0), point(1.0, 1.0)]),
            Err(CurveError::NotIncreasing { index: 1 })
        );
        assert_eq!(
            DecayCurve::new(vec![point(f64::NAN, 1.0)]),
            Err(CurveError::NonFinite { index: 0 })
        );
        let mut p = point(0.0, 1.0);
        p.stderr = -1.0;
        assert_eq!(DecayCurve::new(vec![p]), Err(CurveError::NegativeStderr { index: 0 }));
    }

    #[test]
    fn csv_layout() {
        let c = DecayCurve::new(vec![
            CurvePoint {
                pulses: 8,
                t: 1.5e-6,
                value: 0.75,
                stderr: 0.0,
            },
            CurvePoint {
                pulses: 16,
                t: 3e-6,
                value: 0.5,
                stderr: 0.125,
            },
        ])
        .unwrap();
        assert_eq!(c.to_csv(), "N,t_s,value,stderr\n8,1.5e-6,0.75,0\n16,3e-6,0.5,0.125\n");
    }

    #[test]
    fn params_validation() {
        let schedule = Schedule::single_pulse(crate::control::PulseShape::Square, 100e-9, 0.0);
        let ok = SimParams {
            dt: Some(2e-9),
            ..SimParams::default()
        };
        assert!(ok.validate_for(&schedule).is_ok());
        let coarse = SimParams {
            dt: Some(3e-9),
            ..SimParams::default()
        };
        assert!(matches!(
            coarse.validate_for(&schedule),
            Err(EngineError::InvalidParams(_))
        ));
        let none = SimParams {
            realizations: 0,
            ..SimParams::default()
        };
        assert!(none.validate().is_err());
    }

    #[test]
    fn mean_stderr_matches_direct_formula() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let (m, s) = mean_stderr(&xs);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_stderr(&[0.3]), (0.3, 0.0));
    }

    #[test]
    fn monte_carlo_is_thread_independent() {
        let work = |i: u64| Ok(vec![((i * 7919) % 1000) as f64 * 1e-3, (i as f64).sin()]);
        let one = SimParams {
            realizations: 777,
            threads: Some(1),
            ..SimParams::default()
        };
        let many = SimParams {
            threads: Some(8),
            ..one.clone()
        };
        assert_eq!(
            monte_carlo(&one, 2, work).unwrap(),
            monte_carlo(&many, 2, work).unwrap()
        );
    }

    proptest! {
        #[test]
        fn envelope_factor_bounds(t in 0.0f64..1e-2, t2 in 1e-6f64..1e-2, v in 0.0f64..=1.0) {
            let c = DecayCurve::new(vec![point(t, v)]).unwrap();
            let e = apply_envelope(&c, t2).points()[0];
            prop_assert!(e.value <= v && e.value >= 0.5 * v);
        }
    }
}
