//! Eulerian dynamical decoupling of a single spin qubit.
//!
//! * [`su2`]: two-level states and rotations.
//! * [`dgroup`]: decoupling groups, Cayley graphs and Eulerian cycles.
//! * [`control`]: pulse shapes and sequence schedules.
//! * [`noise`]: Lorentzian transverse noise and quasi-static dephasing.
//! * [`engine`]: RK4 propagation and Monte Carlo experiment runners.
//! * [`analysis`]: decay-curve fitting.

pub mod analysis;
pub mod control;
pub mod dgroup;
pub mod engine;
pub mod noise;
pub mod seed;
pub mod su2;

pub use analysis::{fit_decay, fit_decay_unweighted, normalize_coherence, FitError, FitModel, FitResult};
pub use control::{
    build_schedule, check_larmor_resonance, ControlError, LarmorCheck, PulseShape, Schedule, SequenceKind, SequenceSpec,
};
pub use dgroup::{
    build_cayley, cumulative_path, eulerian_cycle, pauli_group, verify_average_decoupling, verify_eulerian,
    CayleyGraph, EulerianDiagnostic, GroupElement, GroupError, PulseWord,
};
pub use engine::{
    apply_envelope, calibrate_amplitude, run_dd_scan, run_fid, run_relaxation, Calibration, CurvePoint, DecayCurve,
    EngineError, SimParams,
};
pub use noise::{DephasingSpec, LorentzianNoiseSpec, NoiseError};
pub use su2::{Ket, Mat2, Pauli, SpinState, StateError};
