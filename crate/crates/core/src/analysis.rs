//! Decay-curve fitting.
//!
//! Model: `value(t) = baseline + contrast · exp(−(t/T)^p)` with `p` fixed by
//! the caller. Fits are weighted least squares (weights `1/stderr²`), seeded
//! by a log-spaced scan over `T` and refined by damped Gauss–Newton.

use std::fmt;

use thiserror::Error;

use crate::engine::{CurvePoint, DecayCurve};

/// Relative `T` step at which Gauss–Newton stops.
pub const FIT_RTOL: f64 = 1e-8;
/// Fits preferring `T` beyond this multiple of the time span report no decay.
pub const MAX_SPAN_RATIO: f64 = 1e3;
const GRID_POINTS: usize = 241;
const MAX_ITERATIONS: usize = 500;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("need at least 4 points, got {0}")]
    TooFewPoints(usize),
    #[error("curve contains non-finite values")]
    NonFinite,
    #[error("stretch exponent must be 1 or 2, got {0}")]
    InvalidExponent(u8),
    #[error("all values are equal; nothing to fit")]
    Degenerate,
    #[error("no decay: best time constant {best:e} s exceeds {limit:e} s")]
    NoDecay { best: f64, limit: f64 },
    #[error("value {value} at t = {t:e} s is below the normalization floor 0.45")]
    RangeViolation { t: f64, value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitModel {
    /// Baseline and contrast fitted along with `T`.
    Free,
    /// Baseline and contrast fixed at 0.5.
    FixedHalf,
}

impl FitModel {
    pub fn name(self) -> &'static str {
        match self {
            FitModel::Free => "free",
            FitModel::FixedHalf => "fixed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitResult {
    pub time_constant: f64,
    pub exponent: u8,
    pub baseline: f64,
    pub contrast: f64,
    pub r_squared: f64,
    /// Variance of `T` from the scaled inverse normal matrix.
    pub covariance_t: f64,
    pub model: FitModel,
}

impl FitResult {
    pub fn stderr_t(&self) -> f64 {
        self.covariance_t.max(0.0).sqrt()
    }

    pub fn evaluate(&self, t: f64) -> f64 {
        self.baseline + self.contrast * (-(t / self.time_constant).powi(self.exponent as i32)).exp()
    }

    /// `key = value` lines.
    pub fn to_key_values(&self) -> String {
        format!(
            "model = {}\nexponent = {}\nT_s = {:e}\nT_stderr_s = {:e}\nbaseline = {}\ncontrast = {}\nr_squared = {}\n",
            self.model.name(),
            self.exponent,
            self.time_constant,
            self.stderr_t(),
            self.baseline,
            self.contrast,
            self.r_squared
        )
    }
}

impl fmt::Display for FitResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "T = {:.4e} s ± {:.2e} (p = {}, {} model, r² = {:.5})",
            self.time_constant,
            self.stderr_t(),
            self.exponent,
            self.model.name(),
            self.r_squared
        )
    }
}

struct Data {
    t: Vec<f64>,
    y: Vec<f64>,
    w: Vec<f64>,
    p: i32,
    model: FitModel,
}

impl Data {
    fn basis(&self, i: usize, tc: f64) -> f64 {
        (-(self.t[i] / tc).powi(self.p)).exp()
    }

    /// Best `(baseline, contrast)` for a given `T`, with its residual sum.
    fn linear_part(&self, tc: f64) -> (f64, f64, f64) {
        let (b, c) = match self.model {
            FitModel::FixedHalf => (0.5, 0.5),
            FitModel::Free => {
                let (mut sw, mut se, mut see, mut sy, mut sey) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for i in 0..self.t.len() {
                    let (w, e, y) = (self.w[i], self.basis(i, tc), self.y[i]);
                    sw += w;
                    se += w * e;
                    see += w * e * e;
                    sy += w * y;
                    sey += w * e * y;
                }
                let det = sw * see - se * se;
                if det.abs() <= 1e-12 * sw * see.max(f64::MIN_POSITIVE) {
                    (sy / sw, 0.0)
                } else {
                    ((see * sy - se * sey) / det, (sw * sey - se * sy) / det)
                }
            }
        };
        (b, c, self.ssr(b, c, tc))
    }

    fn ssr(&self, b: f64, c: f64, tc: f64) -> f64 {
        (0..self.t.len())
            .map(|i| {
                let r = self.y[i] - b - c * self.basis(i, tc);
                self.w[i] * r * r
            })
            .sum()
    }

    /// Weighted Jacobian rows and residuals at `(b, c, T)`.
    fn linearize(&self, b: f64, c: f64, tc: f64) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut rows = Vec::with_capacity(self.t.len());
        let mut res = Vec::with_capacity(self.t.len());
        for i in 0..self.t.len() {
            let sw = self.w[i].sqrt();
            let x = (self.t[i] / tc).powi(self.p);
            let e = (-x).exp();
            let d_t = c * e * self.p as f64 * x / tc;
            rows.push(match self.model {
                FitModel::Free => vec![sw, sw * e, sw * d_t],
                FitModel::FixedHalf => vec![sw * d_t],
            });
            res.push(sw * (self.y[i] - b - c * e));
        }
        (rows, res)
    }
}

fn normal_matrix(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let k = rows[0].len();
    let mut m = vec![vec![0.0; k]; k];
    for row in rows {
        for a in 0..k {
            for b in 0..k {
                m[a][b] += row[a] * row[b];
            }
        }
    }
    m
}

/// Gaussian elimination with partial pivoting; `None` when singular.
fn solve(mut m: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Option<Vec<f64>> {
    let k = rhs.len();
    for col in 0..k {
        let pivot = (col..k).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))?;
        if m[pivot][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, pivot);
        rhs.swap(col, pivot);
        for r in col + 1..k {
            let f = m[r][col] / m[col][col];
            let pivot_row = m[col].clone();
            for (dst, src) in m[r][col..k].iter_mut().zip(&pivot_row[col..k]) {
                *dst -= f * src;
            }
            rhs[r] -= f * rhs[col];
        }
    }
    let mut x = vec![0.0; k];
    for r in (0..k).rev() {
        let s: f64 = (r + 1..k).map(|c| m[r][c] * x[c]).sum();
        x[r] = (rhs[r] - s) / m[r][r];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

pub fn fit_decay(curve: &DecayCurve, exponent: u8, model: FitModel) -> Result<FitResult, FitError> {
    if exponent != 1 && exponent != 2 {
        return Err(FitError::InvalidExponent(exponent));
    }
    let points = curve.points();
    if points.len() < 4 {
        return Err(FitError::TooFewPoints(points.len()));
    }
    if points
        .iter()
        .any(|p| !(p.t.is_finite() && p.value.is_finite() && p.stderr.is_finite()))
    {
        return Err(FitError::NonFinite);
    }
    let (lo, hi) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
        (lo.min(p.value), hi.max(p.value))
    });
    let span = points[points.len() - 1].t - points[0].t;
    if hi - lo <= 1e-15 * hi.abs().max(1.0) || span <= 0.0 {
        return Err(FitError::Degenerate);
    }

    // Zero errors are floored at the smallest positive one; unit weights if
    // no point carries an error.
    let floor = points
        .iter()
        .map(|p| p.stderr)
        .filter(|&s| s > 0.0)
        .fold(f64::INFINITY, f64::min);
    let w = points
        .iter()
        .map(|p| {
            if floor.is_finite() {
                1.0 / p.stderr.max(floor).powi(2)
            } else {
                1.0
            }
        })
        .collect();
    let data = Data {
        t: points.iter().map(|p| p.t).collect(),
        y: points.iter().map(|p| p.value).collect(),
        w,
        p: exponent as i32,
        model,
    };

    let log_lo = (span * 1e-3).ln();
    let log_hi = (span * MAX_SPAN_RATIO).ln();
    let (mut tc, mut best) = (span, f64::INFINITY);
    for g in 0..GRID_POINTS {
        let cand = (log_lo + (log_hi - log_lo) * g as f64 / (GRID_POINTS - 1) as f64).exp();
        let ssr = data.linear_part(cand).2;
        if ssr < best {
            best = ssr;
            tc = cand;
        }
    }
    let (mut b, mut c, mut ssr) = data.linear_part(tc);

    let limit = MAX_SPAN_RATIO * span;
    for _ in 0..MAX_ITERATIONS {
        let (rows, res) = data.linearize(b, c, tc);
        let jtr: Vec<f64> = (0..rows[0].len())
            .map(|a| rows.iter().zip(&res).map(|(row, r)| row[a] * r).sum())
            .collect();
        let Some(step) = solve(normal_matrix(&rows), jtr) else {
            break;
        };
        let d_t = *step.last().expect("T is always a parameter");
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let cand_t = tc + scale * d_t;
            if cand_t > 0.0 {
                let (cb, cc) = match model {
                    FitModel::Free => (b + scale * step[0], c + scale * step[1]),
                    FitModel::FixedHalf => (b, c),
                };
                let cand_ssr = data.ssr(cb, cc, cand_t);
                if cand_ssr <= ssr {
                    accepted = Some((cb, cc, cand_t, cand_ssr));
                    break;
                }
            }
            scale *= 0.5;
        }
        let Some((nb, nc, nt, nssr)) = accepted else { break };
        let rel = ((nt - tc) / tc).abs();
        (b, c, tc, ssr) = (nb, nc, nt, nssr);
        if rel < FIT_RTOL || tc > 10.0 * limit {
            break;
        }
    }
    if tc > limit {
        return Err(FitError::NoDecay { best: tc, limit });
    }

    let (rows, _) = data.linearize(b, c, tc);
    let k = rows[0].len();
    let dof = data.t.len().saturating_sub(k).max(1) as f64;
    let s2 = ssr / dof;
    let mut unit = vec![0.0; k];
    unit[k - 1] = 1.0;
    let covariance_t = solve(normal_matrix(&rows), unit).map_or(f64::INFINITY, |x| x[k - 1] * s2);

    let sw: f64 = data.w.iter().sum();
    let mean = data.w.iter().zip(&data.y).map(|(w, y)| w * y).sum::<f64>() / sw;
    let sst: f64 = data.w.iter().zip(&data.y).map(|(w, y)| w * (y - mean).powi(2)).sum();
    let r_squared = (1.0 - ssr / sst).clamp(0.0, 1.0);

    Ok(FitResult {
        time_constant: tc,
        exponent,
        baseline: b,
        contrast: c,
        r_squared,
        covariance_t,
        model,
    })
}

/// [`fit_decay`] with every point weighted equally, ignoring `stderr`.
pub fn fit_decay_unweighted(curve: &DecayCurve, exponent: u8, model: FitModel) -> Result<FitResult, FitError> {
    let points = curve
        .points()
        .iter()
        .map(|p| CurvePoint { stderr: 0.0, ..*p })
        .collect();
    fit_decay(&DecayCurve::from_points_unchecked(points), exponent, model)
}

/// Maps fidelity to coherence: `value' = 2·value − 1`, `stderr' = 2·stderr`.
pub fn normalize_coherence(curve: &DecayCurve) -> Result<DecayCurve, FitError> {
    let points = curve
        .points()
        .iter()
        .map(|p| {
            if p.value < 0.45 {
                Err(FitError::RangeViolation { t: p.t, value: p.value })
            } else {
                Ok(CurvePoint {
                    value: 2.0 * p.value - 1.0,
                    stderr: 2.0 * p.stderr,
                    ..*p
                })
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(DecayCurve::from_points_unchecked(points))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn curve(ts: &[f64], mut f: impl FnMut(f64) -> f64, stderr: f64) -> DecayCurve {
        DecayCurve::new(
            ts.iter()
                .map(|&t| CurvePoint {
                    pulses: 0,
                    t,
                    value: f(t),
                    stderr,
                })
                .collect(),
        )
        .unwrap()
    }

    fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn recovers_noiseless_gaussian() {
        let ts = linspace(0.0, 6e-6, 25);
        let c = curve(&ts, |t| 0.5 + 0.5 * (-(t / 2e-6f64).powi(2)).exp(), 0.0);
        for model in [FitModel::Free, FitModel::FixedHalf] {
            let fit = fit_decay(&c, 2, model).unwrap();
            assert!((fit.time_constant / 2e-6 - 1.0).abs() < 1e-6, "{model:?}: {fit}");
            assert!(fit.r_squared > 1.0 - 1e-12);
        }
    }

    #[test]
    fn recovers_noisy_exponential() {
        let tc = 1.83e-3;
        let ts = linspace(0.0, 5e-3, 40);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let noise = Normal::new(0.0, 0.01).unwrap();
        let c = curve(&ts, |t| 0.5 + 0.5 * (-t / tc).exp() + noise.sample(&mut rng), 0.01);
        let fit = fit_decay(&c, 1, FitModel::Free).unwrap();
        assert!((fit.time_constant / tc - 1.0).abs() < 0.03, "{fit}");
    }

    #[test]
    fn error_cases() {
        let ts = linspace(0.0, 1e-6, 10);
        assert_eq!(
            fit_decay(&curve(&ts, |_| 0.7, 0.0), 1, FitModel::Free).unwrap_err(),
            FitError::Degenerate
        );
        assert_eq!(
            fit_decay(&curve(&ts[..3], |t| 1.0 - t, 0.0), 1, FitModel::Free).unwrap_err(),
            FitError::TooFewPoints(3)
        );
        let c = curve(&ts, |t| 1.0 - t, 0.0);
        assert_eq!(
            fit_decay(&c, 3, FitModel::Free).unwrap_err(),
            FitError::InvalidExponent(3)
        );
        // Barely decaying from 1 toward the fixed 0.5 floor.
        let flat = curve(&ts, |t| 1.0 - 1e-9 * t / 1e-6, 0.0);
        assert!(matches!(
            fit_decay(&flat, 1, FitModel::FixedHalf),
            Err(FitError::NoDecay { .. })
        ));
    }

    #[test]
    fn fit_is_scale_equivariant() {
        let ts = linspace(0.0, 8e-6, 30);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let noise = Normal::new(0.0, 0.005).unwrap();
        let values: Vec<f64> = ts
            .iter()
            .map(|&t| 0.52 + 0.47 * (-(t / 3e-6f64).powi(2)).exp() + noise.sample(&mut rng))
            .collect();
        let make = |scale: f64| {
            DecayCurve::new(
                ts.iter()
                    .zip(&values)
                    .map(|(&t, &v)| CurvePoint {
                        pulses: 0,
                        t: t * scale,
                        value: v,
                        stderr: 0.005,
                    })
                    .collect(),
            )
            .unwrap()
        };
        let base = fit_decay(&make(1.0), 2, FitModel::Free).unwrap();
        let scaled = fit_decay(&make(1e3), 2, FitModel::Free).unwrap();
        assert!((scaled.time_constant / (1e3 * base.time_constant) - 1.0).abs() < 1e-7);
    }

    #[test]
    fn covariance_covers_truth() {
        let tc = 2e-6;
        let ts = linspace(0.0, 6e-6, 60);
        let noise = Normal::new(0.0, 0.01).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        // Ten batches of 200 trials, pooled.
        let trials = 2000;
        let mut inside = 0;
        for _ in 0..trials {
            let c = curve(
                &ts,
                |t| 0.5 + 0.5 * (-(t / tc).powi(2)).exp() + noise.sample(&mut rng),
                0.01,
            );
            let fit = fit_decay(&c, 2, FitModel::Free).unwrap();
            if (fit.time_constant - tc).abs() <= 2.0 * fit.stderr_t() {
                inside += 1;
            }
        }
        assert!(inside as f64 >= 0.95 * trials as f64, "{inside}/{trials}");
    }

    #[test]
    fn coherence_normalization() {
        let ts = [0.0, 1.0, 2.0];
        let values = [1.0, 0.5, 0.75];
        let c = DecayCurve::new(
            ts.iter()
                .zip(values)
                .map(|(&t, value)| CurvePoint {
                    pulses: 0,
                    t,
                    value,
                    stderr: 0.01,
                })
                .collect(),
        )
        .unwrap();
        let n = normalize_coherence(&c).unwrap();
        let got: Vec<f64> = n.points().iter().map(|p| p.value).collect();
        assert_eq!(got, [1.0, 0.0, 0.5]);
        assert_eq!(n.points()[0].stderr, 0.02);
        let low = DecayCurve::new(vec![CurvePoint {
            pulses: 0,
            t: 0.0,
            value: 0.4,
            stderr: 0.0,
        }])
        .unwrap();
        assert!(matches!(
            normalize_coherence(&low),
            Err(FitError::RangeViolation { .. })
        ));
    }
}
