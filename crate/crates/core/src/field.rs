//! Laboratory-scale estimates: solenoid field corrections, the rotating
//! cylinder, unit scaling and the radiative-force ratio (cgs units).

use std::f64::consts::PI;
use std::fmt::Write as _;

use num::{BigInt, BigRational, One, ToPrimitive};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// 1 coulomb in esu.
pub const COULOMB_ESU: f64 = 2.997_924_58e9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    /// cm/s
    pub c: f64,
    /// erg·s
    pub hbar: f64,
    /// esu
    pub e: f64,
    /// g
    pub m: f64,
    /// Abraham–Lorentz time `(2/3) e² / (m c³)`, s.
    pub gamma: f64,
}

impl PhysicalConstants {
    pub fn new(c: f64, hbar: f64, e: f64, m: f64) -> Result<Self> {
        if ![c, hbar, e, m].iter().all(|v| v.is_finite() && *v > 0.0) {
            return Err(Error::invalid("physical constants must be positive"));
        }
        Ok(PhysicalConstants {
            c,
            hbar,
            e,
            m,
            gamma: 2.0 * e * e / (3.0 * m * c * c * c),
        })
    }

    pub fn proton() -> Self {
        Self::new(
            2.997_924_58e10,
            1.054_571_817e-27,
            4.803_204_71e-10,
            1.672_621_92e-24,
        )
        .expect("valid constants")
    }

    pub fn electron() -> Self {
        Self::new(
            2.997_924_58e10,
            1.054_571_817e-27,
            4.803_204_71e-10,
            9.109_383_70e-28,
        )
        .expect("valid constants")
    }

    pub fn particle(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "proton" => Ok(Self::proton()),
            "electron" => Ok(Self::electron()),
            other => Err(Error::invalid(format!("unknown particle '{other}'"))),
        }
    }
}

/// `1 / (4ⁿ n! (n+1)!)`, the weight of `(r/c)^{2n} ∂_t^{2n} B` in the radial series.
pub fn correction_coefficient(n: u32) -> BigRational {
    let mut den = BigInt::one();
    for k in 1..=n {
        den *= BigInt::from(4u32) * BigInt::from(k) * BigInt::from(k + 1);
    }
    BigRational::new(BigInt::one(), den)
}

fn rational_to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Time profile `B(τ)` in dimensionless time `τ = t/T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FieldProfile {
    /// `offset + Σ amplitude · sin(omega τ)`.
    Series { offset: f64, terms: Vec<(f64, f64)> },
    /// Uniform periodic samples over one period of length `period` (last sample excluded).
    Tabulated { samples: Vec<f64>, period: f64 },
}

impl FieldProfile {
    pub fn constant(b0: f64) -> Self {
        FieldProfile::Series {
            offset: b0,
            terms: Vec::new(),
        }
    }

    /// `amplitude · sin(2π τ)`.
    pub fn unit_sine(amplitude: f64) -> Self {
        FieldProfile::Series {
            offset: 0.0,
            terms: vec![(amplitude, 2.0 * PI)],
        }
    }

    /// Largest number of series terms (`n = 0 .. n_terms`) this profile supports.
    pub fn term_limit(&self) -> usize {
        match self {
            FieldProfile::Series { .. } => usize::MAX,
            FieldProfile::Tabulated { .. } => 2,
        }
    }

    /// `∂^order B / ∂τ^order` at `τ` for series profiles.
    fn series_derivative(offset: f64, terms: &[(f64, f64)], order: u32, tau: f64) -> f64 {
        let base = if order == 0 { offset } else { 0.0 };
        base + terms
            .iter()
            .map(|&(a, w)| {
                let (s, c) = (w * tau).sin_cos();
                let phase = match order % 4 {
                    0 => s,
                    1 => c,
                    2 => -s,
                    _ => -c,
                };
                a * w.powi(order as i32) * phase
            })
            .sum::<f64>()
    }

    /// Upper bound of `|∂^{2n} B / ∂τ^{2n}|`.
    fn derivative_bound(&self, order: u32) -> Result<f64> {
        match self {
            FieldProfile::Series { offset, terms } => {
                if order == 0 {
                    Ok(offset.abs() + terms.iter().map(|(a, _)| a.abs()).sum::<f64>())
                } else {
                    Ok(terms
                        .iter()
                        .map(|(a, w)| a.abs() * w.abs().powi(order as i32))
                        .sum())
                }
            }
            FieldProfile::Tabulated { samples, period } => {
                let d = spectral_derivative(samples, *period, order)?;
                Ok(d.iter().fold(0.0_f64, |m, v| m.max(v.abs())))
            }
        }
    }
}

/// Derivative of periodic samples by FFT.
fn spectral_derivative(samples: &[f64], period: f64, order: u32) -> Result<Vec<f64>> {
    let n = samples.len();
    if n < 4 || !(period > 0.0) {
        return Err(Error::invalid(
            "tabulated profile needs at least 4 samples and a positive period",
        ));
    }
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let mut buf: Vec<Complex<f64>> = samples.iter().map(|&v| Complex::new(v, 0.0)).collect();
    fwd.process(&mut buf);
    for (k, c) in buf.iter_mut().enumerate() {
        let m = if k <= n / 2 {
            k as f64
        } else {
            k as f64 - n as f64
        };
        // drop the unpaired Nyquist mode for odd orders
        if order % 2 == 1 && n.is_multiple_of(2) && k == n / 2 {
            *c = Complex::new(0.0, 0.0);
            continue;
        }
        let ik = Complex::new(0.0, 2.0 * PI * m / period);
        *c *= ik.powu(order);
    }
    inv.process(&mut buf);
    Ok(buf.iter().map(|c| c.re / n as f64).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionTerm {
    pub n: u32,
    /// Exact coefficient as `p/q`.
    pub coefficient: String,
    pub coefficient_value: f64,
    /// `(r/(cT))^{2n} · coefficient · max|∂^{2n}B/∂τ^{2n}|`, gauss.
    pub magnitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionSeries {
    pub base_profile: FieldProfile,
    pub r: f64,
    pub t_scale: f64,
    pub terms: Vec<CorrectionTerm>,
    /// Largest residual of the truncated series under `∂²_r + (3/r)∂_r − c⁻²∂²_t`,
    /// scaled by `r² / (4N(N+1))` to gauss.
    pub wave_residual: f64,
    /// Magnitude of the first omitted term.
    pub next_term: f64,
    pub residual_ok: bool,
}

/// Radial series `B(t, r) = Σ_{n<n_terms} coef(n) (r/(cT))^{2n} ∂_τ^{2n} B`.
///
/// The coefficients obey `coef(n) = 4(n+1)(n+2) coef(n+1)`, so the truncated
/// series leaves exactly the first omitted term as residual; the check
/// evaluates that residual on a grid of `τ`.
pub fn field_with_corrections(
    profile: &FieldProfile,
    r: f64,
    t_scale: f64,
    n_terms: usize,
    constants: &PhysicalConstants,
) -> Result<CorrectionSeries> {
    if n_terms == 0 {
        return Err(Error::invalid("need at least one term"));
    }
    if !(r >= 0.0 && r.is_finite() && t_scale > 0.0 && t_scale.is_finite()) {
        return Err(Error::invalid("radius must be non-negative and T positive"));
    }
    if n_terms > profile.term_limit() {
        return Err(Error::InsufficientSmoothness {
            requested: n_terms,
            limit: profile.term_limit(),
        });
    }
    let x = r / (constants.c * t_scale);
    let mut terms = Vec::with_capacity(n_terms);
    for n in 0..n_terms as u32 {
        let coef = correction_coefficient(n);
        let value = rational_to_f64(&coef);
        let magnitude = x.powi(2 * n as i32) * value * profile.derivative_bound(2 * n)?;
        terms.push(CorrectionTerm {
            n,
            coefficient: coef.to_string(),
            coefficient_value: value,
            magnitude,
        });
    }
    let n_next = n_terms as u32;
    let next_term = match profile {
        FieldProfile::Series { .. } => {
            x.powi(2 * n_next as i32)
                * rational_to_f64(&correction_coefficient(n_next))
                * profile.derivative_bound(2 * n_next)?
        }
        FieldProfile::Tabulated { .. } => f64::NAN,
    };
    let wave_residual = match profile {
        FieldProfile::Series {
            offset,
            terms: series,
        } => series_wave_residual(*offset, series, r, t_scale, n_terms as u32, constants.c),
        FieldProfile::Tabulated { .. } => f64::NAN,
    };
    let residual_ok =
        wave_residual.is_finite() && wave_residual <= next_term * (1.0 + 1e-9) + f64::MIN_POSITIVE;
    Ok(CorrectionSeries {
        base_profile: profile.clone(),
        r,
        t_scale,
        terms,
        wave_residual,
        next_term,
        residual_ok,
    })
}

/// Applies `∂²_r + (3/r)∂_r − c⁻² ∂²_t` to the truncated series and returns the
/// scaled maximum over `τ ∈ [0, 1]`.
///
/// The operator maps every term onto the powers `r^{2m} ∂_τ^{2m+2} B`; their
/// weights are collected in exact arithmetic before any float evaluation, so
/// the cancellation between neighbouring terms is exact.
fn series_wave_residual(
    offset: f64,
    series: &[(f64, f64)],
    r: f64,
    t_scale: f64,
    n_terms: u32,
    c: f64,
) -> f64 {
    if r == 0.0 {
        return 0.0;
    }
    // weight of r^{2m} ∂^{2m+2}B / (cT)^{2m+2}: radial part of term m+1 minus
    // temporal part of term m
    let weights: Vec<f64> = (0..n_terms)
        .map(|m| {
            let radial = if m + 1 < n_terms {
                correction_coefficient(m + 1)
                    * BigRational::from_integer(BigInt::from(4 * (m + 1) * (m + 2)))
            } else {
                BigRational::from_integer(BigInt::from(0))
            };
            rational_to_f64(&(radial - correction_coefficient(m)))
        })
        .collect();
    let big_n = n_terms as f64;
    let scale = r * r / (4.0 * big_n * (big_n + 1.0));
    let ct = c * t_scale;
    let mut worst = 0.0_f64;
    for i in 0..=256 {
        let tau = i as f64 / 256.0;
        let mut total = 0.0;
        for (m, w) in weights.iter().enumerate() {
            if *w == 0.0 {
                continue;
            }
            let m = m as i32;
            let d = FieldProfile::series_derivative(offset, series, 2 * m as u32 + 2, tau);
            total += w * r.powi(2 * m) * d / ct.powi(2 * m + 2);
        }
        worst = worst.max(total.abs() * scale);
    }
    worst
}

/// `B = 4π ω Q / c` for a cylinder whose 1 cm belts each carry charge `Q` (esu).
pub fn rotating_cylinder_field(
    radius: f64,
    omega: f64,
    charge_per_belt: f64,
    c: f64,
) -> Result<f64> {
    if !(radius > 0.0 && omega >= 0.0 && charge_per_belt > 0.0 && c > 0.0) {
        return Err(Error::invalid("cylinder inputs must be positive"));
    }
    Ok(4.0 * PI * omega * charge_per_belt / c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    /// s
    pub t: f64,
    /// cm
    pub q: f64,
    /// g·cm/s
    pub p: f64,
    /// cm/s
    pub v: f64,
    /// gauss
    pub b_max: f64,
    /// radiative to oscillator force, `≈ γ/T`
    pub radiative_ratio: f64,
}

/// Units in which the dimensionless equations hold for time scale `T`.
pub fn lab_scaling(
    t_scale: f64,
    constants: &PhysicalConstants,
    beta_max_dimless: f64,
) -> Result<ScalingRow> {
    if !(t_scale > 0.0 && t_scale.is_finite()) {
        return Err(Error::invalid("T must be positive"));
    }
    let PhysicalConstants {
        c,
        hbar,
        e,
        m,
        gamma,
    } = *constants;
    let q = (hbar * t_scale / m).sqrt();
    let p = (hbar * m / t_scale).sqrt();
    Ok(ScalingRow {
        t: t_scale,
        q,
        p,
        v: p / m,
        b_max: 2.0 * m * c * beta_max_dimless / (e * t_scale),
        radiative_ratio: gamma / t_scale,
    })
}

/// Plain-text table with one column per row of `rows`.
pub fn format_scaling_table(rows: &[ScalingRow]) -> String {
    let mut s = String::new();
    let line = |s: &mut String, label: &str, f: &dyn Fn(&ScalingRow) -> f64| {
        let _ = write!(s, "{label:<18}");
        for r in rows {
            let _ = write!(s, "{:>14.3e}", f(r));
        }
        s.push('\n');
    };
    line(&mut s, "T [s]", &|r| r.t);
    line(&mut s, "q [cm]", &|r| r.q);
    line(&mut s, "p [g cm/s]", &|r| r.p);
    line(&mut s, "v [cm/s]", &|r| r.v);
    line(&mut s, "B_max [G]", &|r| r.b_max);
    line(&mut s, "F_rad/F_osc", &|r| r.radiative_ratio);
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn coefficients_are_exact() {
        let r = |n: i64, d: i64| BigRational::new(BigInt::from(n), BigInt::from(d));
        assert_eq!(correction_coefficient(0), r(1, 1));
        assert_eq!(correction_coefficient(1), r(1, 8));
        assert_eq!(correction_coefficient(2), r(1, 192));
        assert_eq!(correction_coefficient(3), r(1, 9216));
        for n in 0..12u32 {
            let ratio = correction_coefficient(n) / correction_coefficient(n + 1);
            let k = BigInt::from(4 * (n + 1) * (n + 2));
            assert_eq!(ratio, BigRational::from_integer(k));
        }
    }

    #[test]
    fn constant_profile_has_no_corrections() {
        let s = field_with_corrections(
            &FieldProfile::constant(3.0),
            20.0,
            1.0,
            3,
            &PhysicalConstants::proton(),
        )
        .unwrap();
        assert_eq!(s.terms[0].magnitude, 3.0);
        assert!(s.terms[1..].iter().all(|t| t.magnitude == 0.0));
        assert!(s.residual_ok);
    }

    #[test]
    fn first_correction_for_a_slow_sine() {
        let k = PhysicalConstants::proton();
        let s = field_with_corrections(&FieldProfile::unit_sine(1.0), 20.0, 1.0, 3, &k).unwrap();
        let expected = (20.0 / k.c).powi(2) * (2.0 * PI).powi(2) / 8.0;
        assert_relative_eq!(s.terms[1].magnitude, expected, max_relative = 1e-12);
        assert_relative_eq!(s.terms[1].magnitude, 2.196e-18, max_relative = 1e-3);
        assert!(
            s.terms[0].magnitude > s.terms[1].magnitude
                && s.terms[1].magnitude > s.terms[2].magnitude
        );
        assert!(s.residual_ok, "{} vs {}", s.wave_residual, s.next_term);
        assert_eq!(s.terms[2].coefficient, "1/192");
    }

    #[test]
    fn residual_matches_next_term_for_fast_fields() {
        // large r/(cT) so the residual is well above rounding
        let k = PhysicalConstants::proton();
        let s = field_with_corrections(&FieldProfile::unit_sine(1.0), 1e9, 1.0, 2, &k).unwrap();
        assert_relative_eq!(s.wave_residual, s.next_term, max_relative = 1e-6);
    }

    #[test]
    fn tabulated_profiles_are_limited() {
        let samples: Vec<f64> = (0..64)
            .map(|i| (2.0 * PI * i as f64 / 64.0).sin())
            .collect();
        let p = FieldProfile::Tabulated {
            samples,
            period: 1.0,
        };
        let k = PhysicalConstants::proton();
        assert!(matches!(
            field_with_corrections(&p, 20.0, 1.0, 3, &k),
            Err(Error::InsufficientSmoothness {
                requested: 3,
                limit: 2
            })
        ));
        let s = field_with_corrections(&p, 20.0, 1.0, 2, &k).unwrap();
        let analytic =
            field_with_corrections(&FieldProfile::unit_sine(1.0), 20.0, 1.0, 2, &k).unwrap();
        assert_relative_eq!(
            s.terms[1].magnitude,
            analytic.terms[1].magnitude,
            max_relative = 1e-9
        );
    }

    #[test]
    fn cylinder_estimate() {
        let c = PhysicalConstants::proton().c;
        let b = rotating_cylinder_field(20.0, 1.0, COULOMB_ESU, c).unwrap();
        assert_relative_eq!(b, 4.0 * PI * 0.1, max_relative = 1e-12);
        assert_eq!(
            rotating_cylinder_field(20.0, 0.0, COULOMB_ESU, c).unwrap(),
            0.0
        );
        assert_relative_eq!(
            rotating_cylinder_field(20.0, 2.0, COULOMB_ESU, c).unwrap(),
            2.0 * b,
            max_relative = 1e-15
        );
    }

    #[test]
    fn scaling_laws() {
        let k = PhysicalConstants::proton();
        let a = lab_scaling(1.0, &k, 0.7).unwrap();
        let b = lab_scaling(100.0, &k, 0.7).unwrap();
        assert_relative_eq!(b.q / a.q, 10.0, max_relative = 1e-12);
        assert_relative_eq!(b.p / a.p, 0.1, max_relative = 1e-12);
        assert_relative_eq!(a.q * a.p, k.hbar, max_relative = 1e-15);
        assert_relative_eq!(
            k.gamma,
            2.0 * k.e * k.e / (3.0 * k.m * k.c.powi(3)),
            max_relative = 1e-12
        );
        let table = format_scaling_table(&[a, b]);
        assert_eq!(table.lines().count(), 6);
    }
}
