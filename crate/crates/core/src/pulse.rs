//! Time-dependent field pulses and the ODE coefficients they induce.

use serde::{Deserialize, Serialize};

use crate::design::{beta_from_theta, ThetaDesign};
use crate::error::{Error, Result};

/// A closed time interval `[start, end]`; serialized as a two-element array.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Interval {
    pub start: f64,
    pub end: f64,
}

impl Interval {
    pub const fn new(start: f64, end: f64) -> Self {
        Interval { start, end }
    }

    pub fn length(&self) -> f64 {
        self.end - self.start
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.start && t <= self.end
    }
}

impl From<[f64; 2]> for Interval {
    fn from(a: [f64; 2]) -> Self {
        Interval::new(a[0], a[1])
    }
}

impl From<Interval> for [f64; 2] {
    fn from(i: Interval) -> Self {
        [i.start, i.end]
    }
}

/// How the field `β(t)` enters the oscillator coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Convention {
    /// `k = β²`, rotation rate `β` (uniform-field Hamiltonian).
    SquaredBeta,
    /// `k = β` (inverse-design pulses); rotation chosen by [`RotationConvention`].
    DirectBeta,
}

/// Rotation rate used by trajectories of `DirectBeta` pulses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum RotationConvention {
    /// No rotational factor: the pulse acts as a pure elastic field.
    #[default]
    None,
    /// Rotate at the rate `k(t)`.
    Field,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PulseShape {
    /// `β0 + β1 sin(ω1 t) + β2 sin(ω2 t)`.
    Biharmonic {
        beta0: f64,
        beta1: f64,
        beta2: f64,
        omega1: f64,
        omega2: f64,
    },
    /// Field generated by a polyharmonic θ.
    Exact(ThetaDesign),
    /// Stores the ODE coefficient `k` itself.
    Constant { k: f64 },
    /// Uniform samples of `β` over the pulse interval, endpoints included.
    Tabulated { samples: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pulse {
    pub shape: PulseShape,
    pub interval: Interval,
    pub convention: Convention,
    #[serde(default)]
    pub rotation: RotationConvention,
    /// Repeat the pulse outside its interval.
    #[serde(default)]
    pub periodic: bool,
}

#[inline(always)]
pub(crate) fn biharmonic_beta(beta0: f64, beta1: f64, beta2: f64, s1: f64, s2: f64) -> f64 {
    beta0 + beta1 * s1 + beta2 * s2
}

/// Catmull–Rom interpolation of uniform samples at fractional index `u`.
fn catmull_rom(samples: &[f64], u: f64, periodic: bool) -> f64 {
    let n = samples.len();
    let last = n - 1;
    let i = (u.floor() as isize).clamp(0, last as isize - 1) as usize;
    let s = u - i as f64;
    let at = |j: isize| -> f64 {
        if periodic {
            // first and last samples coincide
            samples[j.rem_euclid(last as isize) as usize]
        } else if j < 0 {
            2.0 * samples[0] - samples[1]
        } else if j as usize > last {
            2.0 * samples[last] - samples[last - 1]
        } else {
            samples[j as usize]
        }
    };
    let i = i as isize;
    let (p0, p1, p2, p3) = (at(i - 1), at(i), at(i + 1), at(i + 2));
    let s2 = s * s;
    let s3 = s2 * s;
    0.5 * (2.0 * p1
        + (p2 - p0) * s
        + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * s2
        + (3.0 * (p1 - p2) + p3 - p0) * s3)
}

impl Pulse {
    pub fn new(shape: PulseShape, interval: Interval, convention: Convention) -> Self {
        Pulse {
            shape,
            interval,
            convention,
            rotation: RotationConvention::None,
            periodic: false,
        }
    }

    /// Biharmonic field on `[0, 1]` under the squared convention, repeated periodically.
    pub fn biharmonic(beta0: f64, beta1: f64, beta2: f64, omega1: f64, omega2: f64) -> Self {
        Pulse::new(
            PulseShape::Biharmonic {
                beta0,
                beta1,
                beta2,
                omega1,
                omega2,
            },
            Interval::new(0.0, 1.0),
            Convention::SquaredBeta,
        )
        .periodic(true)
    }

    /// The reference biharmonic family with `ω1 = 2π`, `ω2 = 4π`, `β0 = 0`.
    pub fn strutt(beta1: f64, beta2: f64) -> Self {
        use std::f64::consts::PI;
        Pulse::biharmonic(0.0, beta1, beta2, 2.0 * PI, 4.0 * PI)
    }

    /// Constant coefficient `k` on `interval`.
    pub fn constant(k: f64, interval: Interval, convention: Convention) -> Self {
        Pulse::new(PulseShape::Constant { k }, interval, convention)
    }

    pub fn tabulated(
        samples: Vec<f64>,
        interval: Interval,
        convention: Convention,
    ) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::invalid("tabulated pulse needs at least two samples"));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("tabulated samples must be finite"));
        }
        Ok(Pulse::new(
            PulseShape::Tabulated { samples },
            interval,
            convention,
        ))
    }

    pub fn periodic(mut self, periodic: bool) -> Self {
        self.periodic = periodic;
        self
    }

    pub fn with_rotation(mut self, rotation: RotationConvention) -> Self {
        self.rotation = rotation;
        self
    }

    pub fn with_interval(mut self, interval: Interval) -> Self {
        self.interval = interval;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let Interval { start, end } = self.interval;
        if !(start.is_finite() && end.is_finite() && end > start) {
            return Err(Error::invalid(
                "pulse interval must be finite with end > start",
            ));
        }
        match &self.shape {
            PulseShape::Biharmonic {
                beta0,
                beta1,
                beta2,
                omega1,
                omega2,
            } => {
                if ![beta0, beta1, beta2, omega1, omega2]
                    .iter()
                    .all(|v| v.is_finite())
                {
                    return Err(Error::invalid("biharmonic parameters must be finite"));
                }
            }
            PulseShape::Constant { k } => {
                if !k.is_finite() {
                    return Err(Error::invalid("constant coefficient must be finite"));
                }
                if self.convention == Convention::SquaredBeta && *k < 0.0 {
                    return Err(Error::invalid("squared convention needs k >= 0"));
                }
            }
            PulseShape::Tabulated { samples } => {
                if samples.len() < 2 {
                    return Err(Error::invalid("tabulated pulse needs at least two samples"));
                }
            }
            PulseShape::Exact(_) => {}
        }
        Ok(())
    }

    /// Whether the shape is an analytic function of `t` valid for every `t`.
    fn is_global(&self) -> bool {
        matches!(
            self.shape,
            PulseShape::Biharmonic { .. } | PulseShape::Constant { .. }
        )
    }

    /// Errors unless `[t0, t1]` is covered by the pulse.
    pub fn check_span(&self, t0: f64, t1: f64) -> Result<()> {
        if self.periodic {
            return Ok(());
        }
        let Interval { start, end } = self.interval;
        let slack = 1e-12 * (1.0 + start.abs().max(end.abs()));
        if t0 < start - slack || t1 > end + slack {
            return Err(Error::IntervalOutsidePulse { t0, t1, start, end });
        }
        Ok(())
    }

    /// Maps `t` into the interval for shapes that are only defined there.
    fn local_time(&self, t: f64) -> Result<f64> {
        let Interval { start, end } = self.interval;
        if self.interval.contains(t) {
            return Ok(t);
        }
        if self.periodic {
            return Ok(start + (t - start).rem_euclid(end - start));
        }
        let slack = 1e-12 * (1.0 + start.abs().max(end.abs()));
        if t >= start - slack && t <= end + slack {
            return Ok(t.clamp(start, end));
        }
        Err(Error::IntervalOutsidePulse {
            t0: t,
            t1: t,
            start,
            end,
        })
    }

    /// Raw shape value: `β` for field shapes, `k` for `Constant`.
    fn shape_value(&self, t: f64) -> Result<f64> {
        if !self.is_global() {
            self.check_span(t, t)?;
        }
        match &self.shape {
            PulseShape::Biharmonic {
                beta0,
                beta1,
                beta2,
                omega1,
                omega2,
            } => Ok(biharmonic_beta(
                *beta0,
                *beta1,
                *beta2,
                (omega1 * t).sin(),
                (omega2 * t).sin(),
            )),
            PulseShape::Constant { k } => Ok(*k),
            PulseShape::Exact(theta) => beta_from_theta(theta, self.local_time(t)?),
            PulseShape::Tabulated { samples } => {
                let tl = self.local_time(t)?;
                let Interval { start, end } = self.interval;
                let u = (tl - start) / (end - start) * (samples.len() - 1) as f64;
                Ok(catmull_rom(samples, u, self.periodic))
            }
        }
    }

    /// `(k, rotation rate)` at `t`.
    pub fn rates(&self, t: f64) -> Result<(f64, f64)> {
        let v = self.shape_value(t)?;
        let constant = matches!(self.shape, PulseShape::Constant { .. });
        Ok(match (self.convention, constant) {
            (Convention::SquaredBeta, false) => (v * v, v),
            (Convention::SquaredBeta, true) => {
                if v < 0.0 {
                    return Err(Error::invalid("squared convention needs k >= 0"));
                }
                (v, v.sqrt())
            }
            (Convention::DirectBeta, _) => match self.rotation {
                RotationConvention::None => (v, 0.0),
                RotationConvention::Field => (v, v),
            },
        })
    }

    /// The field `β(t)`.
    pub fn field(&self, t: f64) -> Result<f64> {
        let v = self.shape_value(t)?;
        match (&self.shape, self.convention) {
            (PulseShape::Constant { .. }, Convention::SquaredBeta) => {
                if v < 0.0 {
                    return Err(Error::invalid("squared convention needs k >= 0"));
                }
                Ok(v.sqrt())
            }
            _ => Ok(v),
        }
    }

    /// ODE coefficient `k(t)`.
    pub fn coefficient(&self, t: f64) -> Result<f64> {
        Ok(self.rates(t)?.0)
    }

    pub fn rotation_rate(&self, t: f64) -> Result<f64> {
        Ok(self.rates(t)?.1)
    }

    /// Samples the pulse on `n` points of its interval.
    pub fn peak(&self, n: usize) -> Result<PulsePeak> {
        if n < 2 {
            return Err(Error::invalid("need at least two samples"));
        }
        let Interval { start, end } = self.interval;
        let mut peak = PulsePeak {
            max_abs_field: 0.0,
            max_coefficient: f64::NEG_INFINITY,
            min_coefficient: f64::INFINITY,
        };
        for i in 0..n {
            let t = start + (end - start) * i as f64 / (n - 1) as f64;
            let (k, _) = self.rates(t)?;
            peak.max_abs_field = peak.max_abs_field.max(self.field(t)?.abs());
            peak.max_coefficient = peak.max_coefficient.max(k);
            peak.min_coefficient = peak.min_coefficient.min(k);
        }
        Ok(peak)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulsePeak {
    pub max_abs_field: f64,
    pub max_coefficient: f64,
    pub min_coefficient: f64,
}

impl PulsePeak {
    /// Amplitude of the equivalent uniform field, `sqrt(max k)`.
    pub fn physical_amplitude(&self) -> f64 {
        self.max_coefficient.max(0.0).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn biharmonic_conventions() {
        let p = Pulse::biharmonic(0.5, 1.0, -2.0, 1.0, 2.0);
        let t = 0.3;
        let b = 0.5 + (0.3_f64).sin() - 2.0 * (0.6_f64).sin();
        assert_abs_diff_eq!(p.field(t).unwrap(), b, epsilon = 1e-15);
        assert_abs_diff_eq!(p.coefficient(t).unwrap(), b * b, epsilon = 1e-15);
        assert_abs_diff_eq!(p.rotation_rate(t).unwrap(), b, epsilon = 1e-15);
        // defined for any t
        assert!(p.field(17.0).is_ok());
    }

    #[test]
    fn constant_stores_coefficient() {
        let i = Interval::new(0.0, 1.0);
        let p = Pulse::constant(4.0, i, Convention::SquaredBeta);
        assert_eq!(p.rates(0.5).unwrap(), (4.0, 2.0));
        assert_eq!(p.field(0.5).unwrap(), 2.0);
        let q = Pulse::constant(4.0, i, Convention::DirectBeta);
        assert_eq!(q.rates(0.5).unwrap(), (4.0, 0.0));
        assert_eq!(
            q.with_rotation(RotationConvention::Field)
                .rates(0.5)
                .unwrap(),
            (4.0, 4.0)
        );
        assert!(Pulse::constant(-1.0, i, Convention::SquaredBeta)
            .validate()
            .is_err());
    }

    #[test]
    fn tabulated_interpolates_cubics_between_knots() {
        let f = |t: f64| 1.0 + t - 0.5 * t * t;
        let samples: Vec<f64> = (0..=20).map(|i| f(i as f64 / 20.0)).collect();
        let p = Pulse::tabulated(samples, Interval::new(0.0, 1.0), Convention::DirectBeta).unwrap();
        // Catmull-Rom reproduces quadratics away from the ends
        for t in [0.13, 0.5, 0.77] {
            assert_abs_diff_eq!(p.field(t).unwrap(), f(t), epsilon = 1e-12);
        }
        assert_abs_diff_eq!(p.field(1.0).unwrap(), f(1.0), epsilon = 1e-15);
        assert!(matches!(
            p.field(1.5),
            Err(Error::IntervalOutsidePulse { .. })
        ));
    }

    #[test]
    fn periodic_exact_pulse_wraps() {
        let d = crate::design::solve_theta(2.0, -5.0).unwrap();
        let p = crate::design::ExactPulse::new(d).to_pulse().periodic(true);
        let t = 0.4;
        let pi = std::f64::consts::PI;
        assert_abs_diff_eq!(
            p.field(t + pi).unwrap(),
            p.field(t).unwrap(),
            epsilon = 1e-12
        );
        assert!(p.clone().periodic(false).field(t + pi).is_err());
    }

    #[test]
    fn interval_serializes_as_pair() {
        let s = serde_json::to_string(&Interval::new(-1.0, 2.0)).unwrap();
        assert_eq!(s, "[-1.0,2.0]");
    }
}
