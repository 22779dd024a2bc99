//! Concatenated pulse protocols and loop detection.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::dynamics::{
    compose_planar, integrate_states, integrate_transfer, rotation_phase, PlanarMap, ToleranceSpec,
    TrajectoryMeta, TrajectoryRecord, TransferMatrix,
};
use crate::error::{Error, Result};
use crate::linalg::{Mat4, PhaseVector};
use crate::perturb::ForceSpec;
use crate::pulse::Pulse;

/// A pulse applied for `duration`, starting at the beginning of its own interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub pulse: Pulse,
    pub duration: f64,
}

impl Stage {
    pub fn new(pulse: Pulse, duration: f64) -> Self {
        Stage { pulse, duration }
    }

    /// The whole pulse interval as one stage.
    pub fn full(pulse: Pulse) -> Self {
        let duration = pulse.interval.length();
        Stage { pulse, duration }
    }

    pub fn local_span(&self) -> (f64, f64) {
        let t0 = self.pulse.interval.start;
        (t0, t0 + self.duration)
    }
}

/// Stages in reverse order.
pub fn reversed(stages: &[Stage]) -> Vec<Stage> {
    stages.iter().rev().cloned().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolOptions {
    pub tol: ToleranceSpec,
    pub samples_per_stage: usize,
    /// Global clock at the start of the first stage; forces are evaluated on this clock.
    pub clock_start: f64,
}

impl Default for ProtocolOptions {
    fn default() -> Self {
        ProtocolOptions {
            tol: ToleranceSpec::default(),
            samples_per_stage: 401,
            clock_start: -FRAC_PI_2,
        }
    }
}

/// Per-axis scalings of a protocol map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SqueezeFactors {
    /// `u11`.
    pub lambda_x: f64,
    /// `u33`.
    pub lambda_y: f64,
    /// `x_final / x0`, if `x0 ≠ 0`.
    pub ratio_x: Option<f64>,
    pub ratio_y: Option<f64>,
    /// Largest off-diagonal entry of the composed map.
    pub offdiag_residual: f64,
}

impl SqueezeFactors {
    pub fn from_map(u: &Mat4, q0: &PhaseVector, qf: &PhaseVector) -> Self {
        let mut off = 0.0_f64;
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    off = off.max(u.get(i, j).abs());
                }
            }
        }
        let ratio = |a: f64, b: f64| (b != 0.0).then(|| a / b);
        SqueezeFactors {
            lambda_x: u.get(0, 0),
            lambda_y: u.get(2, 2),
            ratio_x: ratio(qf.x, q0.x),
            ratio_y: ratio(qf.y, q0.y),
            offdiag_residual: off,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolResult {
    pub final_state: PhaseVector,
    pub stage_matrices: Vec<TransferMatrix>,
    pub stage_maps: Vec<PlanarMap>,
    /// Unforced map of the whole protocol.
    pub composed: Mat4,
    pub factors: SqueezeFactors,
    /// Trajectory on the global clock.
    pub trajectory: TrajectoryRecord,
    /// For each trajectory sample, `(stage index, pulse-local time)`.
    pub sample_stage: Vec<(usize, f64)>,
}

fn validate_stages(stages: &[Stage]) -> Result<()> {
    if stages.is_empty() {
        return Err(Error::invalid("protocol needs at least one stage"));
    }
    for s in stages {
        if !(s.duration.is_finite() && s.duration > 0.0) {
            return Err(Error::invalid("stage durations must be positive"));
        }
    }
    Ok(())
}

/// Runs the stages back to back from `q0`.
pub fn run_protocol(
    stages: &[Stage],
    q0: PhaseVector,
    force: Option<&ForceSpec>,
    opts: &ProtocolOptions,
) -> Result<ProtocolResult> {
    validate_stages(stages)?;
    let mut clock = opts.clock_start;
    let mut q = q0;
    let mut stage_matrices = Vec::with_capacity(stages.len());
    let mut stage_maps = Vec::with_capacity(stages.len());
    let mut composed = Mat4::identity();
    let mut trajectory: Option<TrajectoryRecord> = None;
    let mut sample_stage = Vec::new();

    for (idx, stage) in stages.iter().enumerate() {
        let (t0, t1) = stage.local_span();
        let tm = integrate_transfer(&stage.pulse, t0, t1, &opts.tol)?;
        let map = compose_planar(tm.h, -rotation_phase(&stage.pulse, t0, t1)?);
        composed = map.composed * composed;

        let (times, states) = integrate_states(
            &stage.pulse,
            q,
            t0,
            t1,
            opts.samples_per_stage,
            force,
            clock - t0,
            &opts.tol,
        )?;
        let skip = usize::from(idx > 0);
        sample_stage.extend(times.iter().skip(skip).map(|&t| (idx, t)));
        let global: Vec<f64> = times.iter().map(|t| t - t0 + clock).collect();
        let meta = TrajectoryMeta {
            pulse: vec![stage.pulse.clone()],
            force: force.cloned(),
            tolerances: opts.tol,
        };
        let rec = TrajectoryRecord::from_states(global, &states, meta);
        match trajectory.as_mut() {
            Some(all) => all.append(&rec),
            None => trajectory = Some(rec),
        }
        q = *states.last().expect("at least two samples");
        clock += stage.duration;
        stage_matrices.push(tm);
        stage_maps.push(map);
    }
    let factors = SqueezeFactors::from_map(&composed, &q0, &q);
    Ok(ProtocolResult {
        final_state: q,
        stage_matrices,
        stage_maps,
        composed,
        factors,
        trajectory: trajectory.expect("non-empty protocol"),
        sample_stage,
    })
}

/// Unforced 4×4 map of the protocol, without sampling a trajectory.
pub fn protocol_map(stages: &[Stage], tol: &ToleranceSpec) -> Result<Mat4> {
    validate_stages(stages)?;
    let mut u = Mat4::identity();
    for stage in stages {
        let (t0, t1) = stage.local_span();
        let h = integrate_transfer(&stage.pulse, t0, t1, tol)?;
        u = compose_planar(h.h, -rotation_phase(&stage.pulse, t0, t1)?).composed * u;
    }
    Ok(u)
}

/// Largest `sqrt(k)` and `|β|` met over the protocol.
pub fn protocol_peak(
    stages: &[Stage],
    samples_per_stage: usize,
) -> Result<crate::pulse::PulsePeak> {
    validate_stages(stages)?;
    let mut out = crate::pulse::PulsePeak {
        max_abs_field: 0.0,
        max_coefficient: f64::NEG_INFINITY,
        min_coefficient: f64::INFINITY,
    };
    for s in stages {
        let (t0, t1) = s.local_span();
        let pulse = s
            .pulse
            .clone()
            .with_interval(crate::pulse::Interval::new(t0, t1));
        let peak = pulse.peak(samples_per_stage)?;
        out.max_abs_field = out.max_abs_field.max(peak.max_abs_field);
        out.max_coefficient = out.max_coefficient.max(peak.max_coefficient);
        out.min_coefficient = out.min_coefficient.min(peak.min_coefficient);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoopSearch {
    pub tol: ToleranceSpec,
    /// Coarse sampling interval for the distance curve.
    pub sample_dt: f64,
}

impl Default for LoopSearch {
    fn default() -> Self {
        LoopSearch {
            tol: ToleranceSpec::default(),
            sample_dt: 1e-2,
        }
    }
}

/// Smallest elapsed time `≤ t_max` at which the trajectory from `q0` (starting
/// at the pulse interval start) returns within `tol` of `q0` in all four
/// components. Returns the location of the distance minimum.
pub fn find_loop_period(
    pulse: &Pulse,
    q0: PhaseVector,
    t_max: f64,
    tol: f64,
    force: Option<&ForceSpec>,
    search: &LoopSearch,
) -> Result<Option<f64>> {
    if !(t_max.is_finite() && t_max > 0.0) {
        return Err(Error::invalid("t_max must be positive"));
    }
    if !(tol > 0.0) || !(search.sample_dt > 0.0) {
        return Err(Error::invalid(
            "tolerance and sample interval must be positive",
        ));
    }
    let t0 = pulse.interval.start;
    let n = (t_max / search.sample_dt).ceil().max(2.0) as usize + 1;
    let (times, states) = integrate_states(pulse, q0, t0, t0 + t_max, n, force, 0.0, &search.tol)?;
    let d: Vec<f64> = states.iter().map(|q| q.distance(&q0)).collect();

    let mut armed = false;
    for i in 1..n {
        if d[i] > tol {
            armed = true;
        }
        if !armed {
            continue;
        }
        let is_min = d[i] <= d[i - 1] && (i + 1 == n || d[i] <= d[i + 1]);
        if !is_min {
            continue;
        }
        // the coarse minimum can miss a tight return; refine any plausible dip
        let slack = d[i - 1].max(*d.get(i + 1).unwrap_or(&d[i]));
        if d[i] > tol && (slack - d[i]) < d[i] - tol {
            continue;
        }
        let hi = (i + 1).min(n - 1);
        let (t_best, d_best) = refine_minimum(
            pulse,
            &states[i - 1],
            times[i - 1],
            times[hi],
            &q0,
            force,
            &search.tol,
        )?;
        if d_best <= tol {
            return Ok(Some(t_best - t0));
        }
    }
    Ok(None)
}

fn refine_minimum(
    pulse: &Pulse,
    qa: &PhaseVector,
    ta: f64,
    tb: f64,
    target: &PhaseVector,
    force: Option<&ForceSpec>,
    tol: &ToleranceSpec,
) -> Result<(f64, f64)> {
    let dist = |t: f64| -> Result<f64> {
        if t <= ta {
            return Ok(qa.distance(target));
        }
        let (_, s) = integrate_states(pulse, *qa, ta, t, 2, force, 0.0, tol)?;
        Ok(s[1].distance(target))
    };
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (ta, tb);
    let mut c = b - g * (b - a);
    let mut e = a + g * (b - a);
    let (mut fc, mut fe) = (dist(c)?, dist(e)?);
    for _ in 0..80 {
        if (b - a).abs() < 1e-10 {
            break;
        }
        if fc <= fe {
            b = e;
            e = c;
            fe = fc;
            c = b - g * (b - a);
            fc = dist(c)?;
        } else {
            a = c;
            c = e;
            fc = fe;
            e = a + g * (b - a);
            fe = dist(e)?;
        }
    }
    let t = 0.5 * (a + b);
    Ok((t, dist(t)?))
}
