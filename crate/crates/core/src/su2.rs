//! Complex 2×2 algebra for a single spin-1/2.
//!
//! Basis ordering is fixed crate-wide: index 0 is the level |0⟩ and index 1
//! is the level |−1⟩ (written |1⟩ below). Spin operators are `S_k = σ_k / 2`.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;
use thiserror::Error;

pub type C64 = Complex64;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

/// Tolerance for the Hermiticity / trace / positivity checks on density matrices.
pub const STATE_TOL: f64 = 1e-10;
/// Tolerance on population readout before it is rejected instead of clamped.
pub const POPULATION_TOL: f64 = 1e-9;
/// Default tolerance for equality up to a global phase.
pub const PHASE_EQ_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StateError {
    #[error("density matrix is not Hermitian (deviation {0:e})")]
    NotHermitian(f64),
    #[error("density matrix trace {0} differs from 1")]
    BadTrace(f64),
    #[error("density matrix has negative eigenvalue {0:e}")]
    NotPositive(f64),
    #[error("non-finite entry in density matrix")]
    NonFinite,
    #[error("population {0} lies outside [0, 1]")]
    PopulationOutOfRange(f64),
}

/// Single-qubit Pauli label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub const ALL: [Pauli; 4] = [Pauli::I, Pauli::X, Pauli::Y, Pauli::Z];
    pub const NON_IDENTITY: [Pauli; 3] = [Pauli::X, Pauli::Y, Pauli::Z];

    pub fn symbol(self) -> char {
        match self {
            Pauli::I => 'I',
            Pauli::X => 'X',
            Pauli::Y => 'Y',
            Pauli::Z => 'Z',
        }
    }

    pub fn from_symbol(c: char) -> Option<Pauli> {
        match c.to_ascii_uppercase() {
            'I' => Some(Pauli::I),
            'X' => Some(Pauli::X),
            'Y' => Some(Pauli::Y),
            'Z' => Some(Pauli::Z),
            _ => None,
        }
    }
}

impl fmt::Display for Pauli {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.symbol())
    }
}

/// Dense complex 2×2 matrix, row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat2(pub [[C64; 2]; 2]);

impl Mat2 {
    pub const fn new(a: C64, b: C64, c: C64, d: C64) -> Self {
        Mat2([[a, b], [c, d]])
    }

    pub const fn identity() -> Self {
        Mat2::new(ONE, ZERO, ZERO, ONE)
    }

    pub const fn zero() -> Self {
        Mat2::new(ZERO, ZERO, ZERO, ZERO)
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> C64 {
        self.0[r][c]
    }

    pub fn adjoint(&self) -> Self {
        let m = &self.0;
        Mat2::new(m[0][0].conj(), m[1][0].conj(), m[0][1].conj(), m[1][1].conj())
    }

    pub fn trace(&self) -> C64 {
        self.0[0][0] + self.0[1][1]
    }

    pub fn scale(&self, s: C64) -> Self {
        let m = &self.0;
        Mat2::new(m[0][0] * s, m[0][1] * s, m[1][0] * s, m[1][1] * s)
    }

    fn entries(&self) -> impl Iterator<Item = C64> + '_ {
        self.0.iter().flat_map(|row| row.iter().copied())
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.entries().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &Mat2) -> f64 {
        (*self - *other).max_abs()
    }

    pub fn is_finite(&self) -> bool {
        self.entries().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// ‖U†U − I‖ in the max-abs entry norm.
    pub fn unitarity_defect(&self) -> f64 {
        (self.adjoint() * *self).max_abs_diff(&Mat2::identity())
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.unitarity_defect() <= tol
    }

    /// `U ρ U†`.
    pub fn conjugate(&self, rho: &Mat2) -> Mat2 {
        *self * *rho * self.adjoint()
    }

    pub fn apply(&self, ket: &Ket) -> Ket {
        let m = &self.0;
        let [a, b] = ket.0;
        Ket([m[0][0] * a + m[0][1] * b, m[1][0] * a + m[1][1] * b])
    }

    /// Unit phase `e^{iα}` that best aligns `self` onto `other` (Frobenius sense).
    pub fn best_phase_to(&self, other: &Mat2) -> C64 {
        let overlap: C64 = self.entries().zip(other.entries()).map(|(a, b)| a.conj() * b).sum();
        if overlap.norm() == 0.0 {
            ONE
        } else {
            overlap / overlap.norm()
        }
    }

    /// Max-abs distance after removing the best global phase.
    pub fn phase_distance(&self, other: &Mat2) -> f64 {
        let phase = self.best_phase_to(other);
        self.scale(phase).max_abs_diff(other)
    }

    pub fn equal_up_to_phase(&self, other: &Mat2, tol: f64) -> bool {
        self.phase_distance(other) <= tol
    }
}

impl Mul for Mat2 {
    type Output = Mat2;

    fn mul(self, rhs: Mat2) -> Mat2 {
        let a = &self.0;
        let b = &rhs.0;
        Mat2::new(
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        )
    }
}

impl Add for Mat2 {
    type Output = Mat2;

    fn add(self, rhs: Mat2) -> Mat2 {
        let a = &self.0;
        let b = &rhs.0;
        Mat2::new(
            a[0][0] + b[0][0],
            a[0][1] + b[0][1],
            a[1][0] + b[1][0],
            a[1][1] + b[1][1],
        )
    }
}

impl Sub for Mat2 {
    type Output = Mat2;

    fn sub(self, rhs: Mat2) -> Mat2 {
        let a = &self.0;
        let b = &rhs.0;
        Mat2::new(
            a[0][0] - b[0][0],
            a[0][1] - b[0][1],
            a[1][0] - b[1][0],
            a[1][1] - b[1][1],
        )
    }
}

/// Pure state amplitudes `(⟨0|ψ⟩, ⟨1|ψ⟩)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ket(pub [C64; 2]);

impl Ket {
    pub const fn zero() -> Self {
        Ket([ONE, ZERO])
    }

    pub const fn one() -> Self {
        Ket([ZERO, ONE])
    }

    pub fn norm_sqr(&self) -> f64 {
        self.0[0].norm_sqr() + self.0[1].norm_sqr()
    }

    pub fn normalized(&self) -> Ket {
        let n = self.norm_sqr().sqrt();
        Ket([self.0[0] / n, self.0[1] / n])
    }

    /// Euclidean distance, phase included.
    pub fn distance(&self, other: &Ket) -> f64 {
        ((self.0[0] - other.0[0]).norm_sqr() + (self.0[1] - other.0[1]).norm_sqr()).sqrt()
    }

    /// `|ψ⟩⟨ψ|`
    pub fn projector(&self) -> Mat2 {
        let [a, b] = self.0;
        Mat2::new(a * a.conj(), a * b.conj(), b * a.conj(), b * b.conj())
    }
}

/// Standard Pauli matrix.
pub fn pauli(which: Pauli) -> Mat2 {
    match which {
        Pauli::I => Mat2::identity(),
        Pauli::X => Mat2::new(ZERO, ONE, ONE, ZERO),
        Pauli::Y => Mat2::new(ZERO, -I, I, ZERO),
        Pauli::Z => Mat2::new(ONE, ZERO, ZERO, -ONE),
    }
}

/// Spin operator `S_k = σ_k / 2`.
pub fn spin_op(which: Pauli) -> Mat2 {
    pauli(which).scale(C64::new(0.5, 0.0))
}

/// `exp(−iθ (cos φ S_x + sin φ S_y))`, the propagator of a constant drive
/// with phase `phi` accumulated to rotation angle `theta = Ω t`.
pub fn axis_rotation(phi: f64, theta: f64) -> Mat2 {
    let (s, c) = (0.5 * theta).sin_cos();
    let (sp, cp) = phi.sin_cos();
    // −i s e^{∓iφ}
    let upper = C64::new(-s * sp, -s * cp);
    let lower = C64::new(s * sp, -s * cp);
    Mat2::new(C64::new(c, 0.0), upper, lower, C64::new(c, 0.0))
}

/// Density matrix of a spin-1/2, validated on construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinState {
    rho: Mat2,
}

impl SpinState {
    pub fn new(rho: Mat2) -> Result<Self, StateError> {
        if !rho.is_finite() {
            return Err(StateError::NonFinite);
        }
        let herm = rho.max_abs_diff(&rho.adjoint());
        if herm > STATE_TOL {
            return Err(StateError::NotHermitian(herm));
        }
        let tr = rho.trace();
        if (tr.re - 1.0).abs() > STATE_TOL || tr.im.abs() > STATE_TOL {
            return Err(StateError::BadTrace(tr.re));
        }
        // Smaller eigenvalue of a 2×2 Hermitian matrix.
        let a = rho.get(0, 0).re;
        let d = rho.get(1, 1).re;
        let off = rho.get(0, 1).norm();
        let lambda_min = 0.5 * (a + d) - (0.25 * (a - d) * (a - d) + off * off).sqrt();
        if lambda_min < -STATE_TOL {
            return Err(StateError::NotPositive(lambda_min));
        }
        Ok(SpinState { rho })
    }

    pub fn from_ket(ket: &Ket) -> Self {
        SpinState {
            rho: ket.normalized().projector(),
        }
    }

    pub fn ground() -> Self {
        SpinState::from_ket(&Ket::zero())
    }

    pub fn maximally_mixed() -> Self {
        SpinState {
            rho: Mat2::identity().scale(C64::new(0.5, 0.0)),
        }
    }

    pub fn rho(&self) -> &Mat2 {
        &self.rho
    }

    /// `U ρ U†`; `U` is assumed unitary.
    pub fn evolve(&self, u: &Mat2) -> SpinState {
        SpinState {
            rho: u.conjugate(&self.rho),
        }
    }

    pub fn population0(&self) -> Result<f64, StateError> {
        population0(self)
    }
}

/// Readout `F = ⟨0|ρ|0⟩`, clamped into [0, 1] when within tolerance.
pub fn population0(state: &SpinState) -> Result<f64, StateError> {
    let p = state.rho.get(0, 0).re;
    if !(-POPULATION_TOL..=1.0 + POPULATION_TOL).contains(&p) {
        return Err(StateError::PopulationOutOfRange(p));
    }
    Ok(p.clamp(0.0, 1.0))
}
