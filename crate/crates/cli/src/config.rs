use std::f64::consts::{FRAC_PI_2, PI};
use std::path::PathBuf;

use fuzzyloop::{
    Convention, ExactPulse, ForceSpec, Interval, PhaseVector, Pulse, RotationConvention, Stage,
};
use serde::{Deserialize, Serialize};

use crate::output::Failure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Svg,
}

/// Everything a run depends on. Loaded from TOML, then overridden by flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub step: f64,
    /// Richardson error monitor on transfer-matrix integrations.
    pub monitor: bool,
    pub format: Option<Format>,
    pub out_dir: Option<PathBuf>,
    pub workers: Option<usize>,
    pub strutt: StruttConfig,
    pub trajectory: TrajectoryConfig,
    pub design: DesignConfig,
    pub protocol: ProtocolConfig,
    pub perturb: PerturbConfig,
    pub units: UnitsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            step: 1e-4,
            monitor: false,
            format: None,
            out_dir: None,
            workers: None,
            strutt: StruttConfig::default(),
            trajectory: TrajectoryConfig::default(),
            design: DesignConfig::default(),
            protocol: ProtocolConfig::default(),
            perturb: PerturbConfig::default(),
            units: UnitsConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, Failure> {
        toml::from_str(text).map_err(|e| Failure::Usage(format!("config: {e}")))
    }

    pub fn to_toml(&self) -> Result<String, Failure> {
        toml::to_string(self).map_err(|e| Failure::Usage(format!("config: {e}")))
    }

    /// The part of the config that determines output bytes: where files go
    /// and how many threads compute them does not.
    pub fn fingerprint(&self) -> RunConfig {
        RunConfig {
            out_dir: None,
            workers: None,
            ..self.clone()
        }
    }

    pub fn tolerance(&self) -> fuzzyloop::ToleranceSpec {
        let t = fuzzyloop::ToleranceSpec::with_step(self.step);
        if self.monitor {
            t.monitored()
        } else {
            t
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StruttConfig {
    pub grid: [usize; 2],
    pub beta1_range: [f64; 2],
    pub beta2_range: [f64; 2],
    pub beta0: f64,
    pub omega1: f64,
    pub omega2: f64,
    pub t_span: [f64; 2],
    pub eps_thr: f64,
    pub find_squeeze: Option<f64>,
    pub squeeze_residual: f64,
}

impl Default for StruttConfig {
    fn default() -> Self {
        let g = fuzzyloop::ScanGrid::default();
        StruttConfig {
            grid: [g.n1, g.n2],
            beta1_range: g.beta1_range,
            beta2_range: g.beta2_range,
            beta0: g.beta0,
            omega1: g.omega1,
            omega2: g.omega2,
            t_span: g.t_span,
            eps_thr: 1e-6,
            find_squeeze: None,
            squeeze_residual: 1e-2,
        }
    }
}

impl StruttConfig {
    pub fn grid(&self) -> fuzzyloop::ScanGrid {
        fuzzyloop::ScanGrid {
            beta1_range: self.beta1_range,
            beta2_range: self.beta2_range,
            n1: self.grid[0],
            n2: self.grid[1],
            omega1: self.omega1,
            omega2: self.omega2,
            beta0: self.beta0,
            t_span: self.t_span,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Rotation {
    /// Designed pulses act as a pure elastic field.
    #[default]
    None,
    /// Designed pulses also turn the plane at the rate of the field.
    Field,
}

impl From<Rotation> for RotationConvention {
    fn from(r: Rotation) -> Self {
        match r {
            Rotation::None => RotationConvention::None,
            Rotation::Field => RotationConvention::Field,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PulseConfig {
    Biharmonic {
        beta0: f64,
        beta1: f64,
        beta2: f64,
        omega1: f64,
        omega2: f64,
    },
    Design {
        b: f64,
        c: f64,
        #[serde(default)]
        rotation: Rotation,
    },
    /// Constant `k = β²`, with rotation rate `β`.
    Constant { beta: f64, duration: f64 },
}

impl PulseConfig {
    pub fn strutt(beta1: f64, beta2: f64) -> Self {
        PulseConfig::Biharmonic {
            beta0: 0.0,
            beta1,
            beta2,
            omega1: 2.0 * PI,
            omega2: 4.0 * PI,
        }
    }

    /// Periodic pulse; trajectories may run past the first period.
    pub fn build(&self) -> Result<Pulse, fuzzyloop::Error> {
        Ok(match *self {
            PulseConfig::Biharmonic {
                beta0,
                beta1,
                beta2,
                omega1,
                omega2,
            } => Pulse::biharmonic(beta0, beta1, beta2, omega1, omega2),
            PulseConfig::Design { b, c, rotation } => ExactPulse::from_parameters(b, c)?
                .to_pulse_with(rotation.into())
                .periodic(true),
            PulseConfig::Constant { beta, duration } => Pulse::constant(
                beta * beta,
                Interval::new(0.0, duration),
                Convention::SquaredBeta,
            )
            .periodic(true),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectoryConfig {
    pub q0: [f64; 4],
    pub t_span: [f64; 2],
    pub samples: usize,
    /// `none`, `const:F`, `sin:F` or `sin:F:omega`.
    pub force: String,
    pub pulse: PulseConfig,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        TrajectoryConfig {
            q0: [10.0, -5.0, -20.0, 20.0],
            t_span: [0.0, 6.0],
            samples: 601,
            force: "none".into(),
            pulse: PulseConfig::strutt(PI / 4.0, -10.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignConfig {
    pub b: f64,
    pub c: f64,
    pub samples: usize,
    pub check_points: usize,
    /// `two-pulse`: also run the two-pulse squeezing protocol.
    pub protocol: Option<String>,
}

impl Default for DesignConfig {
    fn default() -> Self {
        DesignConfig {
            b: 2.0,
            c: -3.0,
            samples: 201,
            check_points: 256,
            protocol: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageConfig {
    pub b: f64,
    pub c: f64,
    #[serde(default)]
    pub rotation: Rotation,
    /// Defaults to the full design interval.
    pub duration: Option<f64>,
}

impl StageConfig {
    pub fn build(&self) -> Result<Stage, fuzzyloop::Error> {
        let pulse =
            ExactPulse::from_parameters(self.b, self.c)?.to_pulse_with(self.rotation.into());
        Ok(match self.duration {
            Some(d) => Stage::new(pulse, d),
            None => Stage::full(pulse),
        })
    }
}

pub fn squeeze_stages() -> Vec<StageConfig> {
    vec![
        StageConfig {
            b: 2.0,
            c: -3.0,
            rotation: Rotation::None,
            duration: None,
        },
        StageConfig {
            b: 1.8,
            c: -3.5,
            rotation: Rotation::None,
            duration: None,
        },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolConfig {
    pub q0: [f64; 4],
    /// Append the stages again in reverse order.
    pub reverse: bool,
    pub samples_per_stage: usize,
    pub clock_start: f64,
    pub stages: Vec<StageConfig>,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        ProtocolConfig {
            q0: [0.5, -5.0, 10.0, 20.0],
            reverse: false,
            samples_per_stage: 401,
            clock_start: -FRAC_PI_2,
            stages: squeeze_stages(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbConfig {
    pub q0: [f64; 4],
    pub force: String,
    pub reverse: bool,
    pub samples_per_stage: usize,
    pub clock_start: f64,
    pub stages: Vec<StageConfig>,
}

impl Default for PerturbConfig {
    fn default() -> Self {
        PerturbConfig {
            q0: [0.5, -5.0, 10.0, 20.0],
            force: "sin:1".into(),
            reverse: true,
            samples_per_stage: 401,
            clock_start: -FRAC_PI_2,
            stages: squeeze_stages(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UnitsConfig {
    /// Operation times in seconds.
    pub t: Vec<f64>,
    pub particle: String,
    /// Dimensionless peak field; `None` takes it from the two-pulse protocol.
    pub beta_max: Option<f64>,
    /// Solenoid radius (cm), angular velocity (1/s) and charge per belt (`1C` or esu).
    pub cylinder: Option<(f64, f64, String)>,
    pub corrections: Option<u32>,
    pub correction_radius: f64,
    pub correction_period: f64,
}

impl Default for UnitsConfig {
    fn default() -> Self {
        UnitsConfig {
            t: vec![1e-2, 1.0, 1e2],
            particle: "proton".into(),
            beta_max: None,
            cylinder: None,
            corrections: None,
            correction_radius: 20.0,
            correction_period: 1.0,
        }
    }
}

pub fn parse_force(spec: &str) -> Result<Option<ForceSpec>, Failure> {
    match spec.trim() {
        "none" | "" => Ok(None),
        s => s
            .parse()
            .map(Some)
            .map_err(|e: fuzzyloop::Error| Failure::Usage(e.to_string())),
    }
}

pub fn parse_charge(spec: &str) -> Result<f64, Failure> {
    let bad = || {
        Failure::Usage(format!(
            "charge '{spec}': expected a number in esu or a number followed by C"
        ))
    };
    let s = spec.trim();
    let (num, coulomb) = match s.strip_suffix('C') {
        Some(n) => (n, true),
        None => (s, false),
    };
    let v: f64 = num.trim().parse().map_err(|_| bad())?;
    Ok(if coulomb {
        v * fuzzyloop::field::COULOMB_ESU
    } else {
        v
    })
}

pub fn state(q: [f64; 4]) -> PhaseVector {
    PhaseVector::from_array(q)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_round_trips_through_toml() {
        let mut cfg = RunConfig::default();
        cfg.units.cylinder = Some((20.0, 1.0, "1C".into()));
        cfg.strutt.find_squeeze = Some(4.0);
        cfg.trajectory.pulse = PulseConfig::Design {
            b: 2.0,
            c: -5.0,
            rotation: Rotation::Field,
        };
        let text = cfg.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_documents_fill_defaults() {
        let cfg = RunConfig::from_toml("step = 1e-3\n[strutt]\ngrid = [3, 3]\n").unwrap();
        assert_eq!(cfg.step, 1e-3);
        assert_eq!(cfg.strutt.grid, [3, 3]);
        assert_eq!(cfg.strutt.beta1_range, [-15.0, 15.0]);
        assert!(RunConfig::from_toml("stepp = 1").is_err());
    }

    #[test]
    fn forces_and_charges_parse() {
        assert_eq!(
            parse_force("const:0.5").unwrap(),
            Some(ForceSpec::Constant { f: 0.5 })
        );
        assert_eq!(
            parse_force("sin:2:3").unwrap(),
            Some(ForceSpec::Harmonic { f: 2.0, omega: 3.0 })
        );
        assert_eq!(parse_force("none").unwrap(), None);
        assert!(parse_force("cos:1").is_err());
        assert_eq!(parse_charge("1C").unwrap(), fuzzyloop::field::COULOMB_ESU);
        assert_eq!(parse_charge("12.5").unwrap(), 12.5);
        assert!(parse_charge("x").is_err());
    }
}
