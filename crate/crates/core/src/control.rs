//! Pulse shapes, named sequences and realized control schedules.
//!
//! Every period of a schedule is laid out as `[idle τ][pulse τ_d][idle τ]`,
//! so neighbouring pulses are separated by `2τ` and the period is
//! `τ_c = 2τ + τ_d`. A schedule of `N` pulses lasts exactly `N τ_c`.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt::Write as _;

use thiserror::Error;

use crate::dgroup::PulseWord;
use crate::su2::Pauli;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("time {t:e} s lies outside the pulse segment [0, {tau_d:e}] s")]
    OutOfSegment { t: f64, tau_d: f64 },
    #[error("delta pulses are exact rotations and have no envelope")]
    NoEnvelope,
    #[error("invalid timing: {0}")]
    InvalidTiming(String),
    #[error("letter {0} cannot be realized by a transverse drive")]
    UnsupportedLetter(Pauli),
    #[error("pulse count {pulses} is not a multiple of the base word length {base}")]
    IncompleteCycle { pulses: usize, base: usize },
    #[error("malformed segment table line {line}: {message}")]
    Table { line: usize, message: String },
}

/// Default Gaussian truncation, in units of σ on either side of the centre.
pub const DEFAULT_GAUSSIAN_HALF_WIDTH: f64 = 2.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PulseShape {
    /// Instantaneous rotation.
    Delta,
    Square,
    /// Gaussian centred in the segment and truncated at `±half_width` σ,
    /// with `σ = τ_d / (2·half_width)`.
    Gaussian {
        half_width: f64,
    },
}

impl PulseShape {
    pub fn gaussian() -> Self {
        PulseShape::Gaussian {
            half_width: DEFAULT_GAUSSIAN_HALF_WIDTH,
        }
    }

    pub fn is_delta(&self) -> bool {
        matches!(self, PulseShape::Delta)
    }

    /// Largest value of the envelope over the segment.
    pub fn peak_rate(&self, tau_d: f64) -> f64 {
        match *self {
            PulseShape::Delta => f64::INFINITY,
            PulseShape::Square => PI / tau_d,
            PulseShape::Gaussian { half_width } => gaussian_peak(half_width, tau_d),
        }
    }
}

fn gaussian_peak(half_width: f64, tau_d: f64) -> f64 {
    let sigma = tau_d / (2.0 * half_width);
    let area = sigma * (2.0 * PI).sqrt() * libm::erf(half_width / std::f64::consts::SQRT_2);
    PI / area
}

/// Rabi rate Ω(t) in rad/s at time `t` into a pulse of duration `tau_d`.
/// The envelope integrates to π over the segment.
pub fn envelope_at(shape: &PulseShape, t: f64, tau_d: f64) -> Result<f64, ControlError> {
    if !(0.0..=tau_d).contains(&t) {
        return Err(ControlError::OutOfSegment { t, tau_d });
    }
    Ok(PulseEnvelope::new(shape, tau_d)?.rate(t))
}

/// Envelope with its normalization precomputed, for repeated evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseEnvelope {
    peak: f64,
    centre: f64,
    // 1/(2σ²); zero for square pulses
    curvature: f64,
}

impl PulseEnvelope {
    pub fn new(shape: &PulseShape, tau_d: f64) -> Result<Self, ControlError> {
        match *shape {
            PulseShape::Delta => Err(ControlError::NoEnvelope),
            PulseShape::Square => Ok(PulseEnvelope {
                peak: PI / tau_d,
                centre: 0.5 * tau_d,
                curvature: 0.0,
            }),
            PulseShape::Gaussian { half_width } => {
                let sigma = tau_d / (2.0 * half_width);
                Ok(PulseEnvelope {
                    peak: gaussian_peak(half_width, tau_d),
                    centre: 0.5 * tau_d,
                    curvature: 0.5 / (sigma * sigma),
                })
            }
        }
    }

    pub fn peak(&self) -> f64 {
        self.peak
    }

    /// Ω at local time `t`; the caller keeps `t` inside the segment.
    #[inline]
    pub fn rate(&self, t: f64) -> f64 {
        if self.curvature == 0.0 {
            self.peak
        } else {
            let x = t - self.centre;
            self.peak * (-self.curvature * x * x).exp()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum SequenceKind {
    CpmgY,
    Xy4,
    Xy8,
    Custom(PulseWord),
}

impl SequenceKind {
    pub fn word(&self) -> PulseWord {
        match self {
            SequenceKind::CpmgY => PulseWord::cpmg(Pauli::Y),
            SequenceKind::Xy4 => PulseWord::xy4(),
            SequenceKind::Xy8 => PulseWord::xy8(),
            SequenceKind::Custom(w) => w.clone(),
        }
    }

    pub fn name(&self) -> String {
        match self {
            SequenceKind::CpmgY => "cpmg-y".into(),
            SequenceKind::Xy4 => "xy4".into(),
            SequenceKind::Xy8 => "xy8".into(),
            SequenceKind::Custom(w) => format!("custom:{w}"),
        }
    }

    /// Drive phase of pulse `k` (0-based).
    pub fn phase(&self, k: usize) -> Result<f64, ControlError> {
        let word = self.word();
        letter_phase(word.letters()[k % word.len()])
    }
}

fn letter_phase(letter: Pauli) -> Result<f64, ControlError> {
    match letter {
        Pauli::X => Ok(0.0),
        Pauli::Y => Ok(FRAC_PI_2),
        other => Err(ControlError::UnsupportedLetter(other)),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceSpec {
    pub kind: SequenceKind,
    pub pulses: usize,
    /// Half of the inter-pulse gap, seconds.
    pub tau: f64,
    /// Pulse duration, seconds; ignored for delta pulses.
    pub tau_d: f64,
    pub shape: PulseShape,
}

impl SequenceSpec {
    pub fn new(kind: SequenceKind, pulses: usize, tau: f64, tau_d: f64, shape: PulseShape) -> Self {
        SequenceSpec {
            kind,
            pulses,
            tau,
            tau_d,
            shape,
        }
    }

    /// Pulse duration actually occupied in the schedule.
    pub fn effective_tau_d(&self) -> f64 {
        if self.shape.is_delta() {
            0.0
        } else {
            self.tau_d
        }
    }

    pub fn tau_c(&self) -> f64 {
        2.0 * self.tau + self.effective_tau_d()
    }

    pub fn with_pulses(&self, pulses: usize) -> Self {
        SequenceSpec { pulses, ..self.clone() }
    }

    pub fn validate(&self) -> Result<(), ControlError> {
        if self.pulses == 0 {
            return Err(ControlError::InvalidTiming("pulse count must be at least 1".into()));
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(ControlError::InvalidTiming(format!(
                "tau = {:e} s must be positive",
                self.tau
            )));
        }
        if !self.shape.is_delta() && !(self.tau_d.is_finite() && self.tau_d > 0.0) {
            return Err(ControlError::InvalidTiming(format!(
                "tau_d = {:e} s must be positive",
                self.tau_d
            )));
        }
        if let PulseShape::Gaussian { half_width } = self.shape {
            if !(half_width.is_finite() && half_width > 0.0) {
                return Err(ControlError::InvalidTiming(
                    "Gaussian half-width must be positive".into(),
                ));
            }
        }
        for letter in self.kind.word().letters() {
            letter_phase(*letter)?;
        }
        Ok(())
    }

    /// Requires `N` to cover whole repetitions of the base word.
    pub fn validate_cycles(&self) -> Result<(), ControlError> {
        let base = self.kind.word().len();
        if self.pulses % base != 0 {
            return Err(ControlError::IncompleteCycle {
                pulses: self.pulses,
                base,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SegmentKind {
    Idle,
    Pulse { phase: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub duration: f64,
    pub kind: SegmentKind,
}

impl Segment {
    pub fn idle(duration: f64) -> Self {
        Segment {
            duration,
            kind: SegmentKind::Idle,
        }
    }

    pub fn pulse(duration: f64, phase: f64) -> Self {
        Segment {
            duration,
            kind: SegmentKind::Pulse { phase },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    segments: Vec<Segment>,
    shape: PulseShape,
    tau: f64,
    tau_d: f64,
    total_time: f64,
}

impl Schedule {
    /// Free evolution for `duration` seconds.
    pub fn idle(duration: f64) -> Self {
        Schedule {
            segments: vec![Segment::idle(duration)],
            shape: PulseShape::Delta,
            tau: 0.5 * duration,
            tau_d: 0.0,
            total_time: duration,
        }
    }

    /// Single pulse of the given shape with no surrounding idle time.
    pub fn single_pulse(shape: PulseShape, tau_d: f64, phase: f64) -> Self {
        let duration = if shape.is_delta() { 0.0 } else { tau_d };
        Schedule {
            segments: vec![Segment::pulse(duration, phase)],
            shape,
            tau: 0.0,
            tau_d: duration,
            total_time: duration,
        }
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn shape(&self) -> &PulseShape {
        &self.shape
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn tau_d(&self) -> f64 {
        self.tau_d
    }

    pub fn total_time(&self) -> f64 {
        self.total_time
    }

    pub fn pulse_count(&self) -> usize {
        self.segments
            .iter()
            .filter(|s| matches!(s.kind, SegmentKind::Pulse { .. }))
            .count()
    }

    /// Text table, one segment per line: `duration_ns,phase_mrad` or `duration_ns,IDLE`.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        for seg in &self.segments {
            match seg.kind {
                SegmentKind::Idle => writeln!(out, "{:.6},IDLE", seg.duration * 1e9),
                SegmentKind::Pulse { phase } => {
                    writeln!(out, "{:.6},{:.3}", seg.duration * 1e9, phase * 1e3)
                }
            }
            .expect("writing to a String cannot fail");
        }
        out
    }
}

/// Parses a segment table written by [`Schedule::to_table`]. Blank lines and
/// `#` comments are skipped.
pub fn parse_segment_table(text: &str) -> Result<Vec<Segment>, ControlError> {
    let mut segments = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: &str| ControlError::Table {
            line: i + 1,
            message: message.to_string(),
        };
        let (dur, rest) = line.split_once(',').ok_or_else(|| err("expected two fields"))?;
        let duration_ns: f64 = dur.trim().parse().map_err(|_| err("bad duration"))?;
        if duration_ns.is_nan() || duration_ns < 0.0 {
            return Err(err("negative duration"));
        }
        let duration = duration_ns * 1e-9;
        let rest = rest.trim();
        segments.push(if rest.eq_ignore_ascii_case("IDLE") {
            Segment::idle(duration)
        } else {
            let mrad: f64 = rest.parse().map_err(|_| err("bad phase"))?;
            Segment::pulse(duration, mrad * 1e-3)
        });
    }
    Ok(segments)
}

pub fn build_schedule(spec: &SequenceSpec) -> Result<Schedule, ControlError> {
    spec.validate()?;
    let tau_d = spec.effective_tau_d();
    let edge_idle = 0.5 * spec.tau_c() - 0.5 * tau_d;
    if edge_idle < 0.0 {
        return Err(ControlError::InvalidTiming(format!(
            "edge idle {edge_idle:e} s is negative"
        )));
    }
    let mut segments = Vec::with_capacity(2 * spec.pulses + 1);
    segments.push(Segment::idle(edge_idle));
    for k in 0..spec.pulses {
        segments.push(Segment::pulse(tau_d, spec.kind.phase(k)?));
        let gap = if k + 1 == spec.pulses {
            edge_idle
        } else {
            2.0 * spec.tau
        };
        segments.push(Segment::idle(gap));
    }
    Ok(Schedule {
        segments,
        shape: spec.shape,
        tau: spec.tau,
        tau_d,
        total_time: spec.pulses as f64 * spec.tau_c(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LarmorCheck {
    Clear,
    /// `τ_c` sits near `k / (2 f)`; odd `k` is the stronger resonance.
    Warning {
        k: u64,
        resonant_tau_c: f64,
        strong: bool,
    },
}

/// Relative half-width of the resonance band, as a fraction of `1/(2f)`.
pub const LARMOR_BAND: f64 = 0.05;

/// Flags periods that land within `LARMOR_BAND / (2f)` of a multiple of
/// `1 / (2f)`.
pub fn check_larmor_resonance(tau_c: f64, f_larmor: f64) -> LarmorCheck {
    if !(f_larmor > 0.0 && tau_c > 0.0) {
        return LarmorCheck::Clear;
    }
    let half_period = 0.5 / f_larmor;
    let k = (tau_c / half_period).round().max(1.0);
    let resonant_tau_c = k * half_period;
    if (tau_c - resonant_tau_c).abs() <= LARMOR_BAND * half_period {
        let k = k as u64;
        LarmorCheck::Warning {
            k,
            resonant_tau_c,
            strong: k % 2 == 1,
        }
    } else {
        LarmorCheck::Clear
    }
}
