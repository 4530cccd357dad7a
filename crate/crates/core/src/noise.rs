//! Stochastic environments.
//!
//! The relaxation channel is a transverse field built from `2 n_max + 1`
//! harmonics spaced by `Δω` (ordinary frequency, Hz) with Lorentzian
//! weights and uniformly random phases:
//!
//! ```text
//! b_x(t) =  A Σ_n W(n) cos(2π n Δω t + φ_n)
//! b_y(t) = −A Σ_n W(n) sin(2π n Δω t + φ_n)
//! W(n)   = sqrt(2 Δω R / ((2π n Δω)² + R²))
//! ```
//!
//! The dephasing channel is a detuning `δ` drawn once per realization.

use std::f64::consts::{PI, TAU};
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::seed::{derive_seed, Stream};

/// Largest waveform export, in samples.
pub const MAX_EXPORT_SAMPLES: f64 = 1e8;

#[derive(Debug, Error)]
pub enum NoiseError {
    #[error("harmonic {n} exceeds the cutoff {n_max}")]
    CutoffExceeded { n: i64, n_max: usize },
    #[error("invalid noise parameter: {0}")]
    InvalidSpec(String),
    #[error("operation needs a quasi-static dephasing spec")]
    WrongMode,
    #[error("at least {min} realizations are needed, got {got}")]
    TooFewRealizations { min: usize, got: usize },
    #[error("{0} samples exceed the export budget")]
    SampleBudgetExceeded(f64),
    #[error("realization has {got} phases, spec needs {expected}")]
    RealizationMismatch { got: usize, expected: usize },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LorentzianNoiseSpec {
    /// Correlation rate `R` (1/s).
    pub rate: f64,
    /// Harmonic spacing `Δω` (Hz).
    pub step_hz: f64,
    /// Harmonics run over `−n_max..=n_max`.
    pub n_max: usize,
    /// Overall field scale `A` (rad/s).
    pub amplitude: f64,
    pub master_seed: u64,
}

impl Default for LorentzianNoiseSpec {
    fn default() -> Self {
        LorentzianNoiseSpec {
            rate: TAU * 2.5e3,
            step_hz: 1e3,
            n_max: 10,
            amplitude: 0.0,
            master_seed: 0,
        }
    }
}

impl LorentzianNoiseSpec {
    pub fn with_amplitude(&self, amplitude: f64) -> Self {
        LorentzianNoiseSpec {
            amplitude,
            ..self.clone()
        }
    }

    pub fn with_seed(&self, master_seed: u64) -> Self {
        LorentzianNoiseSpec {
            master_seed,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), NoiseError> {
        if !(self.rate.is_finite() && self.rate > 0.0) {
            return Err(NoiseError::InvalidSpec(format!(
                "rate R = {} must be positive",
                self.rate
            )));
        }
        if !(self.step_hz.is_finite() && self.step_hz > 0.0) {
            return Err(NoiseError::InvalidSpec(format!(
                "step {} Hz must be positive",
                self.step_hz
            )));
        }
        if self.n_max == 0 {
            return Err(NoiseError::InvalidSpec("n_max must be at least 1".into()));
        }
        if !(self.amplitude.is_finite() && self.amplitude >= 0.0) {
            return Err(NoiseError::InvalidSpec(format!(
                "amplitude {} must be non-negative",
                self.amplitude
            )));
        }
        Ok(())
    }

    pub fn harmonic_count(&self) -> usize {
        2 * self.n_max + 1
    }

    /// Repetition period `1/Δω` of every realization.
    pub fn period(&self) -> f64 {
        1.0 / self.step_hz
    }

    /// Highest angular frequency present, `2π n_max Δω`.
    pub fn max_angular_frequency(&self) -> f64 {
        TAU * self.n_max as f64 * self.step_hz
    }

    /// Bound on `|b(t)|`: `A Σ W(n)`.
    pub fn field_bound(&self) -> f64 {
        self.amplitude * self.weights().iter().sum::<f64>()
    }

    /// `W(n)` for `n = −n_max..=n_max`.
    pub fn weights(&self) -> Vec<f64> {
        let n_max = self.n_max as i64;
        (-n_max..=n_max).map(|n| raw_weight(self, n)).collect()
    }

    /// Ensemble (and per-realization time-averaged) `⟨b_x²⟩ = A²/2 Σ W(n)²`.
    pub fn mean_square_field(&self) -> f64 {
        0.5 * self.amplitude * self.amplitude * self.weights().iter().map(|w| w * w).sum::<f64>()
    }

    /// Ensemble autocorrelation of `b_x` at `lag`, normalized to 1 at zero lag.
    pub fn autocorrelation(&self, lag: f64) -> f64 {
        let n_max = self.n_max as i64;
        let (num, den) = (-n_max..=n_max).fold((0.0, 0.0), |(num, den), n| {
            let w2 = raw_weight(self, n).powi(2);
            (num + w2 * (TAU * n as f64 * self.step_hz * lag).cos(), den + w2)
        });
        num / den
    }
}

fn raw_weight(spec: &LorentzianNoiseSpec, n: i64) -> f64 {
    let omega = TAU * n as f64 * spec.step_hz;
    (2.0 * spec.step_hz * spec.rate / (omega * omega + spec.rate * spec.rate)).sqrt()
}

/// Harmonic weight `W(n)`.
pub fn weight(spec: &LorentzianNoiseSpec, n: i64) -> Result<f64, NoiseError> {
    if n.unsigned_abs() as usize > spec.n_max {
        return Err(NoiseError::CutoffExceeded { n, n_max: spec.n_max });
    }
    Ok(raw_weight(spec, n))
}

/// Random phases of one noise realization, stored for `n = −n_max..=n_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseRealization {
    phases: Vec<f64>,
    index: u64,
}

impl NoiseRealization {
    pub fn from_phases(phases: Vec<f64>, index: u64) -> Self {
        NoiseRealization { phases, index }
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    pub fn index(&self) -> u64 {
        self.index
    }

    /// Phase of harmonic `n`.
    pub fn phase(&self, n: i64) -> f64 {
        let n_max = (self.phases.len() / 2) as i64;
        self.phases[(n + n_max) as usize]
    }
}

/// Phases for realization `index`, uniform in `[0, 2π)` and fixed by
/// `(master_seed, index)` alone.
pub fn sample_realization(spec: &LorentzianNoiseSpec, index: u64) -> NoiseRealization {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.master_seed, Stream::NoisePhases, index));
    let phases = (0..spec.harmonic_count()).map(|_| rng.random_range(0.0..TAU)).collect();
    NoiseRealization { phases, index }
}

/// Transverse field `(b_x, b_y)` in rad/s at time `t`.
pub fn field_at(spec: &LorentzianNoiseSpec, realization: &NoiseRealization, t: f64) -> (f64, f64) {
    let n_max = spec.n_max as i64;
    let (mut bx, mut by) = (0.0, 0.0);
    for n in -n_max..=n_max {
        let w = raw_weight(spec, n);
        let arg = TAU * n as f64 * spec.step_hz * t + realization.phase(n);
        bx += w * arg.cos();
        by -= w * arg.sin();
    }
    (spec.amplitude * bx, spec.amplitude * by)
}

/// Precomputed evaluator of one realization's field.
///
/// Uses `b_x − i b_y = A Σ W(n) e^{iφ_n} z^n` with `z = e^{2πiΔωt}`, so each
/// evaluation costs one `sin_cos` and a short power recurrence.
#[derive(Debug, Clone)]
pub struct NoiseField {
    // A·W(n)·e^{iφ_n}, n = −n_max..=n_max
    coefficients: Vec<Complex64>,
    n_max: usize,
    angular_step: f64,
    bound: f64,
    max_frequency: f64,
}

impl NoiseField {
    pub fn new(spec: &LorentzianNoiseSpec, realization: &NoiseRealization) -> Result<Self, NoiseError> {
        spec.validate()?;
        if realization.phases.len() != spec.harmonic_count() {
            return Err(NoiseError::RealizationMismatch {
                got: realization.phases.len(),
                expected: spec.harmonic_count(),
            });
        }
        let coefficients = spec
            .weights()
            .iter()
            .zip(&realization.phases)
            .map(|(&w, &phi)| Complex64::from_polar(spec.amplitude * w, phi))
            .collect();
        Ok(NoiseField {
            coefficients,
            n_max: spec.n_max,
            angular_step: TAU * spec.step_hz,
            bound: spec.field_bound(),
            max_frequency: spec.max_angular_frequency(),
        })
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn max_angular_frequency(&self) -> f64 {
        self.max_frequency
    }

    #[inline]
    pub fn eval(&self, t: f64) -> (f64, f64) {
        let (s, c) = (self.angular_step * t).sin_cos();
        let z = Complex64::new(c, s);
        let centre = self.n_max;
        let mut acc = self.coefficients[centre];
        let mut zn = Complex64::new(1.0, 0.0);
        for k in 1..=self.n_max {
            zn *= z;
            acc += self.coefficients[centre + k] * zn + self.coefficients[centre - k] * zn.conj();
        }
        (acc.re, -acc.im)
    }
}

/// Monte Carlo estimate of `⟨b_x(t) b_x(t+lag)⟩ / ⟨b_x(t)²⟩`, pooled over
/// `realizations` and a uniform grid covering one repetition period.
pub fn estimate_autocorrelation(spec: &LorentzianNoiseSpec, lag: f64, realizations: usize) -> Result<f64, NoiseError> {
    const MIN_REALIZATIONS: usize = 50;
    const GRID: usize = 1000;
    if realizations < MIN_REALIZATIONS {
        return Err(NoiseError::TooFewRealizations {
            min: MIN_REALIZATIONS,
            got: realizations,
        });
    }
    spec.validate()?;
    let spec = spec.with_amplitude(1.0);
    let dt = spec.period() / GRID as f64;
    let (mut cross, mut power) = (0.0, 0.0);
    for index in 0..realizations as u64 {
        let field = NoiseField::new(&spec, &sample_realization(&spec, index))?;
        for k in 0..GRID {
            let t = k as f64 * dt;
            let now = field.eval(t).0;
            cross += now * field.eval(t + lag).0;
            power += now * now;
        }
    }
    Ok(cross / power)
}

/// Time average of `(b_x² + b_y²)/2` over one repetition period, sampled on
/// `samples` uniform points.
pub fn time_averaged_power(spec: &LorentzianNoiseSpec, realization: &NoiseRealization, samples: usize) -> f64 {
    let dt = spec.period() / samples as f64;
    let sum: f64 = (0..samples)
        .map(|k| {
            let (bx, by) = field_at(spec, realization, k as f64 * dt);
            0.5 * (bx * bx + by * by)
        })
        .sum();
    sum / samples as f64
}

/// Quasi-static dephasing model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DephasingSpec {
    None,
    /// Detuning `δ ~ N(0, σ²)` in rad/s, constant within a realization.
    QuasiStatic {
        sigma: f64,
        seed: u64,
    },
    /// Post-hoc multiplication by `0.5 exp(−(t/T2)²) + 0.5`.
    Envelope {
        t2: f64,
    },
}

impl DephasingSpec {
    /// Quasi-static spec whose free-induction decay is `exp(−(t/T2*)²)`,
    /// i.e. `σ = √2 / T2*`.
    pub fn from_t2_star(t2_star: f64, seed: u64) -> Self {
        DephasingSpec::QuasiStatic {
            sigma: std::f64::consts::SQRT_2 / t2_star,
            seed,
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        match self {
            DephasingSpec::QuasiStatic { sigma, .. } => DephasingSpec::QuasiStatic { sigma, seed },
            other => other,
        }
    }

    pub fn validate(&self) -> Result<(), NoiseError> {
        match *self {
            DephasingSpec::QuasiStatic { sigma, .. } if !(sigma.is_finite() && sigma >= 0.0) => {
                Err(NoiseError::InvalidSpec(format!("sigma {sigma} must be non-negative")))
            }
            DephasingSpec::Envelope { t2 } if !(t2.is_finite() && t2 > 0.0) => {
                Err(NoiseError::InvalidSpec(format!("T2 {t2} must be positive")))
            }
            _ => Ok(()),
        }
    }
}

/// Detuning of realization `index` (rad/s).
pub fn sample_detuning(spec: &DephasingSpec, index: u64) -> Result<f64, NoiseError> {
    match *spec {
        DephasingSpec::QuasiStatic { sigma, seed } => {
            if sigma == 0.0 {
                return Ok(0.0);
            }
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, Stream::Detuning, index));
            let z: f64 = rng.sample(StandardNormal);
            Ok(sigma * z)
        }
        _ => Err(NoiseError::WrongMode),
    }
}

/// Writes `t_s,bx_rad_s,by_rad_s` rows sampled at `k / sample_rate`.
pub fn write_waveform<W: Write>(
    spec: &LorentzianNoiseSpec,
    realization: &NoiseRealization,
    duration: f64,
    sample_rate: f64,
    mut out: W,
) -> Result<usize, NoiseError> {
    let samples = duration * sample_rate;
    if !(samples.is_finite() && samples >= 0.0) {
        return Err(NoiseError::InvalidSpec(
            "duration and sample rate must be positive".into(),
        ));
    }
    if samples > MAX_EXPORT_SAMPLES {
        return Err(NoiseError::SampleBudgetExceeded(samples));
    }
    let rows = samples.round() as usize;
    writeln!(out, "t_s,bx_rad_s,by_rad_s")?;
    for k in 0..rows {
        let t = k as f64 / sample_rate;
        let (bx, by) = field_at(spec, realization, t);
        // Adding 0.0 turns -0 into +0.
        writeln!(out, "{t:e},{:e},{:e}", bx + 0.0, by + 0.0)?;
    }
    out.flush()?;
    Ok(rows)
}

/// [`write_waveform`] into a file; returns the number of rows.
pub fn export_waveform(
    spec: &LorentzianNoiseSpec,
    realization: &NoiseRealization,
    duration: f64,
    sample_rate: f64,
    path: &Path,
) -> Result<usize, NoiseError> {
    let samples = duration * sample_rate;
    if samples > MAX_EXPORT_SAMPLES {
        return Err(NoiseError::SampleBudgetExceeded(samples));
    }
    let file = BufWriter::new(File::create(path)?);
    write_waveform(spec, realization, duration, sample_rate, file)
}

/// Lorentzian half-width in Hz corresponding to the rate `R`.
pub fn rate_to_hz(rate: f64) -> f64 {
    rate / (2.0 * PI)
}
