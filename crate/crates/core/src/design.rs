//! Inverse pulse design from a generating function θ(t).
//!
//! Given an odd, smooth θ the field
//!
//! ```text
//! β(t) = -θ''/(2θ) + ((θ'/2)^2 - 1)/θ^2
//! ```
//!
//! makes the symmetric transfer matrix over `[-t, t]` equal to
//! `[[θ'/2, θ], [((θ'/2)^2 - 1)/θ, θ'/2]]`. The polyharmonic family uses
//! `θ(t) = Σ a_k sin(k t)` for `k ∈ {1, 3, 5, 7}` with four endpoint constraints.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::dynamics::ToleranceSpec;
use crate::error::{Error, Result};
use crate::linalg::Mat2;
use crate::pulse::{Convention, Interval, Pulse, PulseShape, RotationConvention};

/// Harmonics of the polyharmonic θ.
pub const THETA_FREQUENCIES: [f64; 4] = [1.0, 3.0, 5.0, 7.0];

/// Half-width of the design interval `[-π/2, π/2]`.
pub const HALF_PERIOD: f64 = FRAC_PI_2;

/// |θ| below which β is evaluated from a Taylor expansion about the nearby zero.
const SINGULAR_WINDOW: f64 = 1e-2;
/// Order of the Taylor expansion used inside the singular window.
const TAYLOR_ORDER: usize = 12;
/// Allowed deviation of |θ'| from 2 at a zero of θ.
const SLOPE_TOL: f64 = 1e-6;

/// A smooth generating function with analytic derivatives of any order.
pub trait ThetaFunction {
    fn derivative(&self, order: usize, t: f64) -> f64;

    fn value(&self, t: f64) -> f64 {
        self.derivative(0, t)
    }
}

/// `Σ amplitude · sin(frequency · t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SineSeries {
    pub terms: Vec<(f64, f64)>,
}

impl SineSeries {
    /// `sin(2ωt)/ω`, the generator of the constant field `β = ω²`.
    pub fn harmonic(omega: f64) -> Self {
        SineSeries {
            terms: vec![(1.0 / omega, 2.0 * omega)],
        }
    }
}

fn sine_derivative(amplitude: f64, frequency: f64, order: usize, t: f64) -> f64 {
    let (s, c) = (frequency * t).sin_cos();
    let base = match order % 4 {
        0 => s,
        1 => c,
        2 => -s,
        _ => -c,
    };
    amplitude * frequency.powi(order as i32) * base
}

impl ThetaFunction for SineSeries {
    fn derivative(&self, order: usize, t: f64) -> f64 {
        self.terms
            .iter()
            .map(|&(a, w)| sine_derivative(a, w, order, t))
            .sum()
    }
}

/// Coefficients of the polyharmonic θ plus the design parameters that fixed them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaDesign {
    /// `(a1, a3, a5, a7)`.
    pub a: [f64; 4],
    /// Target `θ(π/2)`: the squeezing magnitude.
    pub b: f64,
    /// Free parameter `θ'''(0)`.
    pub c: f64,
}

impl ThetaFunction for ThetaDesign {
    fn derivative(&self, order: usize, t: f64) -> f64 {
        self.a
            .iter()
            .zip(THETA_FREQUENCIES.iter())
            .map(|(&a, &w)| sine_derivative(a, w, order, t))
            .sum()
    }
}

/// Rows evaluate `(θ(π/2), θ'(0), θ''(π/2), θ'''(0))` from `(a1, a3, a5, a7)`.
pub fn constraint_matrix() -> [[f64; 4]; 4] {
    let mut m = [[0.0; 4]; 4];
    for (j, &w) in THETA_FREQUENCIES.iter().enumerate() {
        let s = (w * FRAC_PI_2).sin().round();
        m[0][j] = s;
        m[1][j] = w;
        m[2][j] = -w * w * s;
        m[3][j] = -w * w * w;
    }
    m
}

impl ThetaDesign {
    /// Right-hand side of the constraint system, `(b, 2, -2/b, c)`.
    pub fn targets(&self) -> [f64; 4] {
        [self.b, 2.0, -2.0 / self.b, self.c]
    }

    /// The constraint values reconstructed from the coefficients.
    pub fn constraints(&self) -> [f64; 4] {
        [
            self.derivative(0, FRAC_PI_2),
            self.derivative(1, 0.0),
            self.derivative(2, FRAC_PI_2),
            self.derivative(3, 0.0),
        ]
    }

    pub fn residual(&self) -> f64 {
        self.constraints()
            .iter()
            .zip(self.targets().iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn beta(&self, t: f64) -> Result<f64> {
        beta_from_theta(self, t)
    }
}

fn solve4(mut m: [[f64; 4]; 4], mut rhs: [f64; 4]) -> Result<[f64; 4]> {
    let scale = m.iter().flatten().fold(0.0_f64, |a, v| a.max(v.abs()));
    for col in 0..4 {
        let pivot = (col..4)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .unwrap_or(col);
        if m[pivot][col].abs() <= f64::EPSILON * scale {
            return Err(Error::SingularSystem);
        }
        m.swap(pivot, col);
        rhs.swap(pivot, col);
        for row in col + 1..4 {
            let f = m[row][col] / m[col][col];
            for k in col..4 {
                m[row][k] -= f * m[col][k];
            }
            rhs[row] -= f * rhs[col];
        }
    }
    let mut x = [0.0; 4];
    for row in (0..4).rev() {
        let tail: f64 = (row + 1..4).map(|k| m[row][k] * x[k]).sum();
        x[row] = (rhs[row] - tail) / m[row][row];
    }
    Ok(x)
}

/// Solves the endpoint constraints `(θ(π/2), θ'(0), θ''(π/2), θ'''(0)) = (b, 2, -2/b, c)`.
pub fn solve_theta(b: f64, c: f64) -> Result<ThetaDesign> {
    if !b.is_finite() || !c.is_finite() {
        return Err(Error::invalid("design parameters must be finite"));
    }
    if b == 0.0 {
        return Err(Error::ZeroB);
    }
    let a = solve4(constraint_matrix(), [b, 2.0, -2.0 / b, c])?;
    Ok(ThetaDesign { a, b, c })
}

fn poly_mul(a: &[f64], b: &[f64], len: usize) -> Vec<f64> {
    let mut out = vec![0.0; len];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            if i + j < len {
                out[i + j] += x * y;
            }
        }
    }
    out
}

fn horner(coeffs: &[f64], s: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * s + c)
}

/// Locates a zero of θ near `t` by Newton iteration.
fn nearby_zero(theta: &dyn ThetaFunction, t: f64) -> Option<f64> {
    let mut z = t;
    for _ in 0..50 {
        let v = theta.derivative(0, z);
        let d = theta.derivative(1, z);
        if d == 0.0 || !d.is_finite() {
            return None;
        }
        let step = v / d;
        z -= step;
        if step.abs() <= 1e-15 * (1.0 + z.abs()) {
            break;
        }
    }
    let tiny = 1e-12 * (1.0 + theta.derivative(1, z).abs());
    ((z - t).abs() <= 0.25 && theta.derivative(0, z).abs() <= tiny).then_some(z)
}

/// β at `t = zero + s` from the Taylor series of θ about a regular zero.
///
/// Numerator and denominator of the field share a double root at `s = 0`; both
/// are divided out exactly before evaluation.
fn regularized_beta(theta: &dyn ThetaFunction, zero: f64, s: f64) -> f64 {
    let m = TAYLOR_ORDER;
    let mut fact = 1.0;
    let mut c = vec![0.0; m + 1];
    for (j, cj) in c.iter_mut().enumerate().skip(1) {
        fact *= j as f64;
        *cj = theta.derivative(j, zero) / fact;
    }
    let d1: Vec<f64> = (0..m).map(|j| (j + 1) as f64 * c[j + 1]).collect();
    let d2: Vec<f64> = (0..m - 1)
        .map(|j| ((j + 1) * (j + 2)) as f64 * c[j + 2])
        .collect();

    let len = m;
    let d2c = poly_mul(&d2, &c, len);
    let d1d1 = poly_mul(&d1, &d1, len);
    let cc = poly_mul(&c, &c, len);
    // Orders 0 and 1 of the numerator vanish at a regular zero (|θ'| = 2).
    let num: Vec<f64> = (2..len).map(|j| -0.5 * d2c[j] + 0.25 * d1d1[j]).collect();
    let den: Vec<f64> = (2..len).map(|j| cc[j]).collect();
    horner(&num, s) / horner(&den, s)
}

/// Exact field generated by `theta` at time `t`.
pub fn beta_from_theta(theta: &dyn ThetaFunction, t: f64) -> Result<f64> {
    let th = theta.derivative(0, t);
    let d1 = theta.derivative(1, t);
    if th.abs() < SINGULAR_WINDOW {
        if let Some(zero) = nearby_zero(theta, t) {
            let slope = theta.derivative(1, zero);
            if (slope.abs() - 2.0).abs() <= SLOPE_TOL {
                return Ok(regularized_beta(theta, zero, t - zero));
            }
            if th.abs() < 1e-6 {
                return Err(Error::SingularTheta { t: zero, slope });
            }
        } else if th == 0.0 {
            return Err(Error::SingularTheta { t, slope: d1 });
        }
    }
    let d2 = theta.derivative(2, t);
    let half = 0.5 * d1;
    Ok(-d2 / (2.0 * th) + (half * half - 1.0) / (th * th))
}

/// A solved design together with its interval `[-π/2, π/2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExactPulse {
    pub theta: ThetaDesign,
    pub interval: Interval,
}

impl ExactPulse {
    pub fn new(theta: ThetaDesign) -> Self {
        ExactPulse {
            theta,
            interval: Interval::new(-HALF_PERIOD, HALF_PERIOD),
        }
    }

    pub fn from_parameters(b: f64, c: f64) -> Result<Self> {
        Ok(Self::new(solve_theta(b, c)?))
    }

    pub fn beta(&self, t: f64) -> Result<f64> {
        self.theta.beta(t)
    }

    /// `n` equally spaced `(t, β)` samples over the interval, endpoints included.
    pub fn sample(&self, n: usize) -> Result<Vec<(f64, f64)>> {
        if n < 2 {
            return Err(Error::invalid("need at least two samples"));
        }
        let Interval { start, end } = self.interval;
        (0..n)
            .map(|i| {
                let t = start + (end - start) * i as f64 / (n - 1) as f64;
                Ok((t, self.beta(t)?))
            })
            .collect()
    }

    /// The design as a pulse with `k(t) = β(t)` (direct convention, no rotation).
    pub fn to_pulse(&self) -> Pulse {
        Pulse::new(
            PulseShape::Exact(self.theta),
            self.interval,
            Convention::DirectBeta,
        )
    }

    pub fn to_pulse_with(&self, rotation: RotationConvention) -> Pulse {
        self.to_pulse().with_rotation(rotation)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SignProfile {
    AllPositive,
    Mixed,
    AllNegative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// β ≥ 0 everywhere: the pulse squeezes.
    Squeezing,
    /// β changes sign or is negative: a candidate for stable loops.
    Loop,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaZero {
    pub t: f64,
    pub slope: f64,
    /// `||θ'| - 2|`.
    pub deviation: f64,
    pub regular: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidityReport {
    pub zeros: Vec<ThetaZero>,
    pub sign_profile: SignProfile,
    pub regime: Regime,
    pub min_beta: f64,
    pub max_abs_beta: f64,
    /// `max |β(t) - β(-t)|` over the check grid.
    pub symmetry_residual: f64,
    pub endpoint_beta: (f64, f64),
    /// Points where β could not be evaluated.
    pub singular_points: Vec<f64>,
    pub valid: bool,
}

/// Sign threshold separating "zero" from a genuine negative excursion of β.
const SIGN_TOL: f64 = 1e-9;

/// Checks zeros, sign profile and symmetry of the field built from `theta` on `interval`.
pub fn validate_theta(
    theta: &dyn ThetaFunction,
    interval: Interval,
    n_check: usize,
) -> Result<ValidityReport> {
    if n_check < 16 {
        return Err(Error::invalid("n_check must be at least 16"));
    }
    let Interval { start, end } = interval;
    let grid: Vec<f64> = (0..n_check)
        .map(|i| start + (end - start) * i as f64 / (n_check - 1) as f64)
        .collect();

    let mut zeros: Vec<ThetaZero> = Vec::new();
    let push_zero = |t: f64, zeros: &mut Vec<ThetaZero>| {
        if zeros.iter().any(|z| (z.t - t).abs() < 1e-9) {
            return;
        }
        let slope = theta.derivative(1, t);
        let deviation = (slope.abs() - 2.0).abs();
        zeros.push(ThetaZero {
            t,
            slope,
            deviation,
            regular: deviation <= SLOPE_TOL,
        });
    };
    let values: Vec<f64> = grid.iter().map(|&t| theta.derivative(0, t)).collect();
    let scale = values.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1.0);
    for (i, &t) in grid.iter().enumerate() {
        if values[i].abs() <= 1e-12 * scale {
            push_zero(t, &mut zeros);
        }
        if i + 1 < grid.len() && values[i] * values[i + 1] < 0.0 {
            let (mut lo, mut hi) = (t, grid[i + 1]);
            let flo = values[i];
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if theta.derivative(0, mid) * flo > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            push_zero(0.5 * (lo + hi), &mut zeros);
        }
    }
    zeros.sort_by(|a, b| a.t.total_cmp(&b.t));

    let mut min_beta = f64::INFINITY;
    let mut max_beta = f64::NEG_INFINITY;
    let mut max_abs_beta = 0.0_f64;
    let mut symmetry_residual = 0.0_f64;
    let mut singular_points = Vec::new();
    let mut betas = Vec::with_capacity(grid.len());
    for &t in &grid {
        match beta_from_theta(theta, t) {
            Ok(b) => {
                min_beta = min_beta.min(b);
                max_beta = max_beta.max(b);
                max_abs_beta = max_abs_beta.max(b.abs());
                if let Ok(mirror) = beta_from_theta(theta, -t) {
                    symmetry_residual = symmetry_residual.max((b - mirror).abs());
                }
                betas.push(Some(b));
            }
            Err(_) => {
                singular_points.push(t);
                betas.push(None);
            }
        }
    }
    let sign_profile = if min_beta >= -SIGN_TOL {
        SignProfile::AllPositive
    } else if max_beta <= SIGN_TOL {
        SignProfile::AllNegative
    } else {
        SignProfile::Mixed
    };
    let regime = match sign_profile {
        SignProfile::AllPositive => Regime::Squeezing,
        _ => Regime::Loop,
    };
    let endpoint_beta = (
        betas.first().copied().flatten().unwrap_or(f64::NAN),
        betas.last().copied().flatten().unwrap_or(f64::NAN),
    );
    let valid = singular_points.is_empty() && zeros.iter().all(|z| z.regular);
    Ok(ValidityReport {
        zeros,
        sign_profile,
        regime,
        min_beta,
        max_abs_beta,
        symmetry_residual,
        endpoint_beta,
        singular_points,
        valid,
    })
}

pub fn validate_design(pulse: &ExactPulse, n_check: usize) -> Result<ValidityReport> {
    validate_theta(&pulse.theta, pulse.interval, n_check)
}

/// Integrates the symmetric (anti-commutator) flow `h' = Λh + hΛ`, `h(0) = 1`
/// with `Λ = [[0, 1], [-k(t), 0]]`, from 0 to `t_end`.
///
/// `h(t)` is the transfer matrix over `[-t, t]` when `k` is even in time. Only
/// used to verify designs; trajectories always use the left flow.
pub fn symmetric_flow(
    pulse: &Pulse,
    t_end: f64,
    n_samples: usize,
    tol: &ToleranceSpec,
) -> Result<Vec<(f64, Mat2)>> {
    if n_samples < 2 {
        return Err(Error::invalid("need at least two samples"));
    }
    if !(t_end > 0.0) {
        return Err(Error::invalid("t_end must be positive"));
    }
    let rhs = |t: f64, h: &Mat2| -> Result<Mat2> {
        let k = pulse.coefficient(t)?;
        let diag = h.h21 - k * h.h12;
        let sigma = h.h11 + h.h22;
        Ok(Mat2::new(diag, sigma, -k * sigma, diag))
    };
    let mut out = Vec::with_capacity(n_samples);
    let mut h = Mat2::IDENTITY;
    out.push((0.0, h));
    for i in 1..n_samples {
        let a = t_end * (i - 1) as f64 / (n_samples - 1) as f64;
        let b = t_end * i as f64 / (n_samples - 1) as f64;
        let n = ((b - a) / tol.step).ceil().max(1.0) as usize;
        let dt = (b - a) / n as f64;
        for s in 0..n {
            let t = a + dt * s as f64;
            let k1 = rhs(t, &h)?;
            let k2 = rhs(t + 0.5 * dt, &(h + k1.scale(0.5 * dt)))?;
            let k3 = rhs(t + 0.5 * dt, &(h + k2.scale(0.5 * dt)))?;
            let k4 = rhs(t + dt, &(h + k3.scale(dt)))?;
            h = h + (k1 + k2.scale(2.0) + k3.scale(2.0) + k4).scale(dt / 6.0);
        }
        if !h.is_finite() {
            return Err(Error::NonFiniteState {
                t: b,
                guard: crate::dynamics::OVERFLOW_GUARD,
            });
        }
        out.push((b, h));
    }
    Ok(out)
}
