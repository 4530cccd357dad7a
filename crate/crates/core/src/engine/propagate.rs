//! Fourth-order Runge–Kutta propagation of a spin ket under
//! `H(t) = Ω(t)(cos φ S_x + sin φ S_y) + b_x(t) S_x + b_y(t) S_y + δ S_z`.

use std::f64::consts::{FRAC_PI_2, PI};

use crate::control::{PulseEnvelope, Schedule, SegmentKind};
use crate::noise::{sample_detuning, sample_realization, DephasingSpec, LorentzianNoiseSpec, NoiseField};
use crate::su2::{axis_rotation, population0, Ket, Mat2, SpinState, StateError, C64};

use super::{EngineError, SimParams};

/// Largest rotation angle (rad) per default integrator step.
pub const RATE_STEP: f64 = 0.05;
/// Default steps per pulse (`τ_d`) and per inter-pulse gap (`2τ`).
pub const STEPS_PER_SEGMENT: f64 = 200.0;
/// Upper limit on the local truncation estimate `(‖H‖h)^5/120`.
pub const MAX_LOCAL_ERROR: f64 = 1e-6;
/// Checkpoints closer than this to a boundary are taken at the boundary.
pub const TIME_TOL: f64 = 1e-15;

/// Stochastic part of the Hamiltonian for one realization.
#[derive(Debug, Clone, Default)]
pub struct Environment {
    pub noise: Option<NoiseField>,
    /// Static detuning δ (rad/s).
    pub delta: f64,
}

impl Environment {
    pub fn quiet() -> Self {
        Environment::default()
    }

    pub fn with_detuning(delta: f64) -> Self {
        Environment { noise: None, delta }
    }

    /// Environment of realization `index`. Specs carry their own seeds.
    pub fn sample(
        noise: Option<&LorentzianNoiseSpec>,
        dephasing: &DephasingSpec,
        index: u64,
    ) -> Result<Self, EngineError> {
        let noise = match noise {
            Some(spec) if spec.amplitude > 0.0 => Some(NoiseField::new(spec, &sample_realization(spec, index))?),
            _ => None,
        };
        let delta = match dephasing {
            DephasingSpec::QuasiStatic { .. } => sample_detuning(dephasing, index)?,
            _ => 0.0,
        };
        Ok(Environment { noise, delta })
    }

    #[inline]
    fn transverse(&self, t: f64) -> (f64, f64) {
        match &self.noise {
            Some(field) => field.eval(t),
            None => (0.0, 0.0),
        }
    }

    fn field_bound(&self) -> f64 {
        self.noise.as_ref().map_or(0.0, NoiseField::bound)
    }

    fn frequency_bound(&self) -> f64 {
        self.noise.as_ref().map_or(0.0, NoiseField::max_angular_frequency)
    }
}

/// Preparation pulse: π/2 about +X.
pub fn preparation() -> Mat2 {
    axis_rotation(0.0, FRAC_PI_2)
}

/// Readout pulse: π/2 about −X.
pub fn readout() -> Mat2 {
    axis_rotation(PI, FRAC_PI_2)
}

/// State after the preparation pulse acting on |0⟩.
pub fn prepared_state() -> Ket {
    preparation().apply(&Ket::zero())
}

/// `⟨0|R ρ R†|0⟩` for the readout pulse `R`.
pub fn readout_fidelity(ket: &Ket) -> Result<f64, StateError> {
    population0(&SpinState::from_ket(&readout().apply(ket)))
}

pub fn ket_population0(ket: &Ket) -> Result<f64, StateError> {
    population0(&SpinState::from_ket(ket))
}

/// Evolves `initial` through `schedule` and returns the final density matrix.
pub fn propagate(
    schedule: &Schedule,
    env: &Environment,
    initial: &Ket,
    params: &SimParams,
) -> Result<SpinState, EngineError> {
    let kets = evolve(schedule, env, initial, &[schedule.total_time()], params)?;
    Ok(SpinState::from_ket(&kets[0]))
}

/// Evolves `initial` and returns the ket at each checkpoint (seconds from the
/// schedule start, non-decreasing). A checkpoint on a segment boundary is
/// taken after any instantaneous pulses at that instant.
pub fn evolve(
    schedule: &Schedule,
    env: &Environment,
    initial: &Ket,
    checkpoints: &[f64],
    params: &SimParams,
) -> Result<Vec<Ket>, EngineError> {
    params.validate_for(schedule)?;
    if checkpoints.windows(2).any(|w| w[1] < w[0]) {
        return Err(EngineError::InvalidParams("checkpoints must be non-decreasing".into()));
    }
    if let Some(&last) = checkpoints.last() {
        if last > schedule.total_time() + TIME_TOL || checkpoints[0] < 0.0 {
            return Err(EngineError::CheckpointOutOfRange(last));
        }
    }
    let envelope = match schedule.shape() {
        shape if shape.is_delta() => None,
        shape => Some(PulseEnvelope::new(shape, schedule.tau_d())?),
    };

    let mut out = Vec::with_capacity(checkpoints.len());
    let mut pending = checkpoints.iter().copied().peekable();
    let mut ket = *initial;
    let mut t = 0.0;
    for seg in schedule.segments() {
        if seg.duration <= 0.0 {
            if let SegmentKind::Pulse { phase } = seg.kind {
                ket = axis_rotation(phase, PI).apply(&ket);
            }
            continue;
        }
        while pending.next_if(|&c| c <= t + TIME_TOL).is_some() {
            out.push(ket);
        }
        let end = t + seg.duration;
        let (phase, rate) = match (seg.kind, &envelope) {
            (SegmentKind::Pulse { phase }, Some(env)) => (phase, Some(env)),
            (SegmentKind::Pulse { .. }, None) => {
                return Err(EngineError::InvalidParams("finite pulse in a delta schedule".into()))
            }
            (SegmentKind::Idle, _) => (0.0, None),
        };
        let h_max = step_limit(schedule, seg.kind, env, rate.map(PulseEnvelope::peak), params)?;
        let segment = SegmentDrive {
            start: t,
            duration: seg.duration,
            cos_phi: phase.cos(),
            sin_phi: phase.sin(),
            envelope: rate,
            env,
        };
        let mut from = t;
        while let Some(c) = pending.next_if(|&c| c < end - TIME_TOL) {
            ket = segment.integrate(ket, from, c, h_max);
            out.push(ket);
            from = c;
        }
        ket = segment.integrate(ket, from, end, h_max);
        t = end;
    }
    out.extend(pending.map(|_| ket));
    Ok(out)
}

fn step_limit(
    schedule: &Schedule,
    kind: SegmentKind,
    env: &Environment,
    peak: Option<f64>,
    params: &SimParams,
) -> Result<f64, EngineError> {
    let rate_bound = peak.unwrap_or(0.0) + env.field_bound() + env.delta.abs();
    let h = match params.dt {
        Some(dt) => dt,
        None => {
            let scale = match kind {
                SegmentKind::Pulse { .. } => schedule.tau_d(),
                SegmentKind::Idle => 2.0 * schedule.tau(),
            } / STEPS_PER_SEGMENT;
            let scale = if scale > 0.0 { scale } else { f64::INFINITY };
            let fastest = rate_bound.max(env.frequency_bound());
            let cap = if fastest > 0.0 {
                RATE_STEP / fastest
            } else {
                f64::INFINITY
            };
            // Infinite only when H vanishes, where one step is exact.
            scale.min(cap)
        }
    };
    // ‖H‖ = |h|/2 for H = h·σ/2.
    let estimate = (0.5 * rate_bound * h.min(schedule.total_time())).powi(5) / 120.0;
    if estimate > MAX_LOCAL_ERROR {
        return Err(EngineError::StepTooLarge { estimate });
    }
    Ok(h)
}

struct SegmentDrive<'a> {
    start: f64,
    duration: f64,
    cos_phi: f64,
    sin_phi: f64,
    envelope: Option<&'a PulseEnvelope>,
    env: &'a Environment,
}

impl SegmentDrive<'_> {
    /// `dψ/dt = −i H(t) ψ`.
    #[inline]
    fn derivative(&self, t: f64, psi: &[C64; 2]) -> [C64; 2] {
        let (mut hx, mut hy) = self.env.transverse(t);
        if let Some(envelope) = self.envelope {
            let local = (t - self.start).clamp(0.0, self.duration);
            let omega = envelope.rate(local);
            hx += omega * self.cos_phi;
            hy += omega * self.sin_phi;
        }
        let hz = self.env.delta;
        let [a, b] = *psi;
        let plus = C64::new(hx, hy);
        let minus = plus.conj();
        // −(i/2)·[[hz, hx − i hy], [hx + i hy, −hz]] ψ
        let half_minus_i = C64::new(0.0, -0.5);
        [half_minus_i * (a * hz + minus * b), half_minus_i * (plus * a - b * hz)]
    }

    fn integrate(&self, ket: Ket, from: f64, to: f64, h_max: f64) -> Ket {
        let span = to - from;
        if span <= 0.0 {
            return ket;
        }
        let steps = if h_max.is_finite() {
            ((span / h_max) * (1.0 - 1e-12)).ceil().max(1.0) as usize
        } else {
            1
        };
        let h = span / steps as f64;
        let mut psi = ket.0;
        for k in 0..steps {
            let t = from + k as f64 * h;
            psi = self.rk4_step(t, h, &psi);
        }
        Ket(psi)
    }

    #[inline]
    fn rk4_step(&self, t: f64, h: f64, psi: &[C64; 2]) -> [C64; 2] {
        let axpy = |x: &[C64; 2], k: &[C64; 2], s: f64| [x[0] + k[0] * s, x[1] + k[1] * s];
        let k1 = self.derivative(t, psi);
        let k2 = self.derivative(t + 0.5 * h, &axpy(psi, &k1, 0.5 * h));
        let k3 = self.derivative(t + 0.5 * h, &axpy(psi, &k2, 0.5 * h));
        let k4 = self.derivative(t + h, &axpy(psi, &k3, h));
        let w = h / 6.0;
        let next = [
            psi[0] + (k1[0] + (k2[0] + k3[0]) * 2.0 + k4[0]) * w,
            psi[1] + (k1[1] + (k2[1] + k3[1]) * 2.0 + k4[1]) * w,
        ];
        let norm = (next[0].norm_sqr() + next[1].norm_sqr()).sqrt();
        [next[0] / norm, next[1] / norm]
    }
}
