//! External forces along Ox and the drift they induce.

use serde::{Deserialize, Serialize};

use crate::dynamics::{fuzzy_centre, FuzzyCentre};
use crate::error::{Error, Result};
use crate::linalg::PhaseVector;
use crate::protocol::{
    protocol_map, run_protocol, ProtocolOptions, ProtocolResult, SqueezeFactors, Stage,
};

/// Force term `F(t)` entering the Hamiltonian as `+F(t) x`, so `ṗx` gains `-F(t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ForceSpec {
    Constant {
        f: f64,
    },
    /// `f sin(omega t)`.
    Harmonic {
        f: f64,
        omega: f64,
    },
    Sum {
        parts: Vec<ForceSpec>,
    },
}

impl ForceSpec {
    pub fn value(&self, t: f64) -> f64 {
        match self {
            ForceSpec::Constant { f } => *f,
            ForceSpec::Harmonic { f, omega } => f * (omega * t).sin(),
            ForceSpec::Sum { parts } => parts.iter().map(|p| p.value(t)).sum(),
        }
    }

    pub fn scaled(&self, s: f64) -> ForceSpec {
        match self {
            ForceSpec::Constant { f } => ForceSpec::Constant { f: s * f },
            ForceSpec::Harmonic { f, omega } => ForceSpec::Harmonic {
                f: s * f,
                omega: *omega,
            },
            ForceSpec::Sum { parts } => ForceSpec::Sum {
                parts: parts.iter().map(|p| p.scaled(s)).collect(),
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            ForceSpec::Constant { f } => f.is_finite(),
            ForceSpec::Harmonic { f, omega } => f.is_finite() && omega.is_finite(),
            ForceSpec::Sum { parts } => return parts.iter().try_for_each(|p| p.validate()),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid("force parameters must be finite"))
        }
    }
}

/// |β| below which the guiding centre is not sampled.
const CENTRE_FIELD_FLOOR: f64 = 1e-6;
/// |cos| at or below which a drift counts as transversal to Ox.
const TRANSVERSAL_COS: f64 = 0.1;
/// Relative size below which a centre displacement counts as no drift.
const DRIFT_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub centre_start: FuzzyCentre,
    pub centre_end: FuzzyCentre,
    pub drift: (f64, f64),
    /// Cosine between the drift and +Ox; `None` when there is no drift.
    pub transversality: Option<f64>,
    pub transversal: bool,
    /// How far inward the field used for the start/end centre was sampled,
    /// when the field vanishes at the protocol ends.
    pub start_shift: f64,
    pub end_shift: f64,
}

/// Guiding-centre drift between the first and last samples of a protocol run.
pub fn drift_report(stages: &[Stage], run: &ProtocolResult) -> Result<DriftReport> {
    let rec = &run.trajectory;
    let field_at = |i: usize| -> Result<f64> {
        let (s, t) = run.sample_stage[i];
        stages[s].pulse.field(t)
    };
    let mut first = None;
    for i in 0..rec.len() {
        let b = field_at(i)?;
        if b.abs() > CENTRE_FIELD_FLOOR {
            first = Some((i, b));
            break;
        }
    }
    let mut last = None;
    for i in (0..rec.len()).rev() {
        let b = field_at(i)?;
        if b.abs() > CENTRE_FIELD_FLOOR {
            last = Some((i, b));
            break;
        }
    }
    let ((i0, b0), (i1, b1)) = match (first, last) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::ZeroField { beta: 0.0 }),
    };
    // the centre diverges as β → 0, so only the field value is taken from the
    // shifted instant; the states stay at the protocol ends
    let centre_start = fuzzy_centre(&rec.initial_state(), b0)?;
    let centre_end = fuzzy_centre(&rec.final_state(), b1)?;
    let drift = (
        centre_end.xbar - centre_start.xbar,
        centre_end.ybar - centre_start.ybar,
    );
    let norm = drift.0.hypot(drift.1);
    // rounding noise of the two centre evaluations is not a drift direction
    let scale = centre_start.xbar.hypot(centre_start.ybar).max(1.0);
    let transversality = (norm > DRIFT_FLOOR * scale).then(|| drift.0 / norm);
    Ok(DriftReport {
        centre_start,
        centre_end,
        drift,
        transversality,
        transversal: transversality.is_some_and(|c| c.abs() <= TRANSVERSAL_COS),
        start_shift: rec.t[i0] - rec.t[0],
        end_shift: rec.t[rec.len() - 1] - rec.t[i1],
    })
}

/// Runs the protocol under `force` and reports the guiding-centre drift.
pub fn perturbed_run(
    stages: &[Stage],
    q0: PhaseVector,
    force: &ForceSpec,
    opts: &ProtocolOptions,
) -> Result<(ProtocolResult, DriftReport)> {
    force.validate()?;
    let run = run_protocol(stages, q0, Some(force), opts)?;
    let drift = drift_report(stages, &run)?;
    Ok((run, drift))
}

/// Decomposition of a forced protocol into its linear part and its offset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForcedFactors {
    /// Scalings of the linear (unforced) map.
    pub linear: SqueezeFactors,
    /// Endpoint of the forced run started from rest at the origin.
    pub offset: PhaseVector,
    pub forced_final: PhaseVector,
    /// `x_final / x0` of the forced run.
    pub ratio_x: Option<f64>,
    pub ratio_y: Option<f64>,
}

pub fn forced_squeeze_factors(
    stages: &[Stage],
    q0: PhaseVector,
    force: &ForceSpec,
    opts: &ProtocolOptions,
) -> Result<ForcedFactors> {
    force.validate()?;
    let u = protocol_map(stages, &opts.tol)?;
    let forced = run_protocol(stages, q0, Some(force), opts)?.final_state;
    let offset = run_protocol(stages, PhaseVector::ZERO, Some(force), opts)?.final_state;
    let linear = SqueezeFactors::from_map(&u, &q0, &u.apply(&q0));
    let ratio = |a: f64, b: f64| (b != 0.0).then(|| a / b);
    Ok(ForcedFactors {
        linear,
        offset,
        forced_final: forced,
        ratio_x: ratio(forced.x, q0.x),
        ratio_y: ratio(forced.y, q0.y),
    })
}

/// Parses `const:F`, `sin:F` or `sin:F:omega`.
impl std::str::FromStr for ForceSpec {
    type Err = Error;

    fn from_str(spec: &str) -> Result<Self> {
        let bad = || {
            Error::invalid(format!(
                "force '{spec}': expected const:F, sin:F or sin:F:omega"
            ))
        };
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
        let parts: Vec<&str> = spec.trim().split(':').collect();
        let force = match parts.as_slice() {
            ["const", f] => ForceSpec::Constant { f: num(f)? },
            ["sin", f] => ForceSpec::Harmonic {
                f: num(f)?,
                omega: 1.0,
            },
            ["sin", f, w] => ForceSpec::Harmonic {
                f: num(f)?,
                omega: num(w)?,
            },
            _ => return Err(bad()),
        };
        force.validate()?;
        Ok(force)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::ExactPulse;
    use crate::protocol::reversed;
    use approx::assert_abs_diff_eq;

    #[test]
    fn force_values() {
        assert_eq!(ForceSpec::Constant { f: 0.5 }.value(3.0), 0.5);
        let h = ForceSpec::Harmonic { f: 2.0, omega: 1.0 };
        assert_abs_diff_eq!(h.value(0.5), 2.0 * 0.5f64.sin(), epsilon = 1e-15);
        let s = ForceSpec::Sum {
            parts: vec![ForceSpec::Constant { f: 1.0 }, h.clone()],
        };
        assert_abs_diff_eq!(
            s.scaled(2.0).value(0.5),
            2.0 + 4.0 * 0.5f64.sin(),
            epsilon = 1e-15
        );
        let json = serde_json::to_string(&h).unwrap();
        assert_eq!(json, r#"{"kind":"harmonic","f":2.0,"omega":1.0}"#);
        assert_eq!("sin:2:1".parse::<ForceSpec>().unwrap(), h);
        assert_eq!(
            "const: 0.5".parse::<ForceSpec>().unwrap(),
            ForceSpec::Constant { f: 0.5 }
        );
        assert!("cos:1".parse::<ForceSpec>().is_err());
        assert!("const:nan".parse::<ForceSpec>().is_err());
    }

    fn two_pulse_stages() -> Vec<Stage> {
        let a = ExactPulse::from_parameters(2.0, -3.0).unwrap().to_pulse();
        let b = ExactPulse::from_parameters(1.8, -3.5).unwrap().to_pulse();
        vec![Stage::full(a), Stage::full(b)]
    }

    #[test]
    fn zero_force_reproduces_unforced_run() {
        let stages = two_pulse_stages();
        let q0 = PhaseVector::new(0.5, -5.0, 10.0, 20.0);
        let opts = ProtocolOptions {
            samples_per_stage: 21,
            ..Default::default()
        };
        let plain = run_protocol(&stages, q0, None, &opts).unwrap();
        let forced =
            run_protocol(&stages, q0, Some(&ForceSpec::Constant { f: 0.0 }), &opts).unwrap();
        assert_eq!(plain.final_state, forced.final_state);
        let ff =
            forced_squeeze_factors(&stages, q0, &ForceSpec::Constant { f: 0.0 }, &opts).unwrap();
        assert_eq!(ff.offset, PhaseVector::ZERO);
        assert_eq!(ff.linear.lambda_x, plain.factors.lambda_x);
    }

    #[test]
    fn doubling_the_force_doubles_the_offset() {
        let stages = two_pulse_stages();
        let q0 = PhaseVector::new(0.5, -5.0, 10.0, 20.0);
        let opts = ProtocolOptions {
            samples_per_stage: 21,
            ..Default::default()
        };
        let f = ForceSpec::Harmonic { f: 1.0, omega: 1.0 };
        let one = forced_squeeze_factors(&stages, q0, &f, &opts).unwrap();
        let two = forced_squeeze_factors(&stages, q0, &f.scaled(2.0), &opts).unwrap();
        assert!(two.offset.distance(&one.offset.scale(2.0)) < 1e-10);
        assert_eq!(one.linear, two.linear);
    }

    #[test]
    fn unforced_closed_protocol_has_no_drift() {
        let mut stages = two_pulse_stages();
        stages.extend(reversed(&stages));
        let opts = ProtocolOptions {
            samples_per_stage: 41,
            ..Default::default()
        };
        let (_, drift) = perturbed_run(
            &stages,
            PhaseVector::new(0.5, -5.0, 10.0, 20.0),
            &ForceSpec::Constant { f: 0.0 },
            &opts,
        )
        .unwrap();
        assert!(
            drift.drift.0.abs() < 1e-6 && drift.drift.1.abs() < 1e-6,
            "{drift:?}"
        );
        // the field vanishes at the protocol ends, so sampling moves inward
        assert!(drift.start_shift > 0.0 && drift.end_shift > 0.0);
    }
}
