//! Transfer-matrix integration and full planar trajectories.
//!
//! The planar Hamiltonian `H = ½(p² + k r²) − r_rot L_z` splits into an
//! oscillatory part, propagated by a 2×2 unimodular `h` acting identically on
//! the `(x, px)` and `(y, py)` pairs, and a rotation of both pairs by the
//! accumulated angle `∫ r_rot dt`.

use num::complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Mat2, Mat4, PhaseVector};
use crate::perturb::ForceSpec;
use crate::pulse::Pulse;

/// Entries beyond this magnitude abort integration with `NonFiniteState`.
pub const OVERFLOW_GUARD: f64 = 1e12;

/// Fixed-step RK4 control.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToleranceSpec {
    pub step: f64,
    /// Also integrate at half step and report the Richardson estimate `|h_dt − h_dt/2| / 15`.
    pub monitor: bool,
}

impl Default for ToleranceSpec {
    fn default() -> Self {
        ToleranceSpec {
            step: 1e-4,
            monitor: false,
        }
    }
}

impl ToleranceSpec {
    pub fn with_step(step: f64) -> Self {
        ToleranceSpec {
            step,
            monitor: false,
        }
    }

    pub fn monitored(mut self) -> Self {
        self.monitor = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step.is_finite() && self.step > 0.0) {
            return Err(Error::invalid(
                "integration step must be positive and finite",
            ));
        }
        Ok(())
    }

    /// Number of steps covering `span`.
    pub fn steps_for(&self, span: f64) -> usize {
        (span / self.step).ceil().max(1.0) as usize
    }
}

/// One RK4 step of `q' = p, p' = -k q` with coefficients at the start, middle and end.
#[inline(always)]
pub(crate) fn rk4_pair(q: f64, p: f64, ka: f64, km: f64, kb: f64, dt: f64) -> (f64, f64) {
    let hdt = 0.5 * dt;
    let sdt = dt / 6.0;
    let k1q = p;
    let k1p = -ka * q;
    let q2 = q + hdt * k1q;
    let p2 = p + hdt * k1p;
    let k2q = p2;
    let k2p = -km * q2;
    let q3 = q + hdt * k2q;
    let p3 = p + hdt * k2p;
    let k3q = p3;
    let k3p = -km * q3;
    let q4 = q + dt * k3q;
    let p4 = p + dt * k3p;
    let k4q = p4;
    let k4p = -kb * q4;
    (
        q + sdt * (k1q + 2.0 * k2q + 2.0 * k3q + k4q),
        p + sdt * (k1p + 2.0 * k2p + 2.0 * k3p + k4p),
    )
}

/// Start, midpoint and end of step `s`.
#[inline(always)]
pub(crate) fn step_times(t0: f64, dt: f64, s: usize) -> (f64, f64, f64) {
    let ta = t0 + s as f64 * dt;
    (ta, ta + 0.5 * dt, t0 + (s + 1) as f64 * dt)
}

fn transfer_steps(pulse: &Pulse, t0: f64, t1: f64, n: usize) -> Result<Mat2> {
    let dt = (t1 - t0) / n as f64;
    let mut h = Mat2::IDENTITY;
    let mut ka = pulse.coefficient(t0)?;
    for s in 0..n {
        let (_, tm, tb) = step_times(t0, dt, s);
        let km = pulse.coefficient(tm)?;
        let kb = pulse.coefficient(tb)?;
        let (h11, h21) = rk4_pair(h.h11, h.h21, ka, km, kb, dt);
        let (h12, h22) = rk4_pair(h.h12, h.h22, ka, km, kb, dt);
        h = Mat2::new(h11, h12, h21, h22);
        if !(h.max_abs() <= OVERFLOW_GUARD) {
            return Err(Error::NonFiniteState {
                t: tb,
                guard: OVERFLOW_GUARD,
            });
        }
        ka = kb;
    }
    Ok(h)
}

/// A propagated 2×2 matrix with its trace, discriminant and eigenvalues.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransferMatrix {
    pub h: Mat2,
    pub sigma: f64,
    /// `Σ² − 4`.
    pub delta: f64,
    pub eigenvalues: [Complex64; 2],
    pub error_estimate: Option<f64>,
}

impl TransferMatrix {
    pub fn from_mat2(h: Mat2) -> Self {
        let sigma = h.h11 + h.h22;
        let det = h.det();
        let disc = sigma * sigma - 4.0 * det;
        let eigenvalues = if disc >= 0.0 {
            let root = disc.sqrt();
            let big = 0.5 * (sigma + if sigma >= 0.0 { root } else { -root });
            let small = if big != 0.0 { det / big } else { 0.0 };
            [Complex64::new(big, 0.0), Complex64::new(small, 0.0)]
        } else {
            let im = 0.5 * (-disc).sqrt();
            [
                Complex64::new(0.5 * sigma, im),
                Complex64::new(0.5 * sigma, -im),
            ]
        };
        TransferMatrix {
            h,
            sigma,
            delta: sigma * sigma - 4.0,
            eigenvalues,
            error_estimate: None,
        }
    }

    pub fn det(&self) -> f64 {
        self.h.det()
    }

    pub fn eigenvalue_product(&self) -> Complex64 {
        self.eigenvalues[0] * self.eigenvalues[1]
    }
}

/// Propagates `h' = Λ h`, `h(t0) = 1`, with `Λ = [[0, 1], [-k(t), 0]]`, up to `t1`.
pub fn integrate_transfer(
    pulse: &Pulse,
    t0: f64,
    t1: f64,
    tol: &ToleranceSpec,
) -> Result<TransferMatrix> {
    tol.validate()?;
    if !(t0.is_finite() && t1.is_finite() && t1 > t0) {
        return Err(Error::invalid("integration needs finite t1 > t0"));
    }
    pulse.validate()?;
    pulse.check_span(t0, t1)?;
    let n = tol.steps_for(t1 - t0);
    let h = transfer_steps(pulse, t0, t1, n)?;
    let mut out = TransferMatrix::from_mat2(h);
    if tol.monitor {
        let fine = transfer_steps(pulse, t0, t1, 2 * n)?;
        out.error_estimate = Some(h.max_abs_diff(&fine) / 15.0);
    }
    Ok(out)
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const GAUSS_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gauss_kronrod(f: &dyn Fn(f64) -> Result<f64>, a: f64, b: f64) -> Result<(f64, f64)> {
    let c = 0.5 * (a + b);
    let r = 0.5 * (b - a);
    let fc = f(c)?;
    let mut kronrod = GK_WEIGHTS[7] * fc;
    let mut gauss = GAUSS_WEIGHTS[3] * fc;
    for i in 0..7 {
        let x = r * GK_NODES[i];
        let s = f(c - x)? + f(c + x)?;
        kronrod += GK_WEIGHTS[i] * s;
        if i % 2 == 1 {
            gauss += GAUSS_WEIGHTS[i / 2] * s;
        }
    }
    Ok((kronrod * r, ((kronrod - gauss) * r).abs()))
}

fn adaptive(f: &dyn Fn(f64) -> Result<f64>, a: f64, b: f64, tol: f64, depth: u32) -> Result<f64> {
    let (value, err) = gauss_kronrod(f, a, b)?;
    if err <= tol || depth == 0 || (b - a).abs() < 1e-12 {
        return Ok(value);
    }
    let m = 0.5 * (a + b);
    Ok(adaptive(f, a, m, 0.5 * tol, depth - 1)? + adaptive(f, m, b, 0.5 * tol, depth - 1)?)
}

/// Accumulated rotation angle `∫ r_rot dt` over `[t0, t1]` (the field `β` under
/// the squared convention), by adaptive Gauss–Kronrod to absolute error 1e-10.
pub fn rotation_phase(pulse: &Pulse, t0: f64, t1: f64) -> Result<f64> {
    if !(t0.is_finite() && t1.is_finite() && t1 >= t0) {
        return Err(Error::invalid("rotation phase needs finite t1 >= t0"));
    }
    pulse.check_span(t0, t1)?;
    if t1 == t0 {
        return Ok(0.0);
    }
    let f = |t: f64| pulse.rotation_rate(t);
    // split periodic repetitions so every panel sees a smooth integrand
    let mut cuts = vec![t0];
    if pulse.periodic {
        let start = pulse.interval.start;
        let len = pulse.interval.length();
        let mut k = ((t0 - start) / len).floor() + 1.0;
        while start + k * len < t1 {
            cuts.push(start + k * len);
            k += 1.0;
        }
    }
    cuts.push(t1);
    let pieces = (cuts.len() - 1) as f64;
    cuts.windows(2)
        .map(|w| adaptive(&f, w[0], w[1], 1e-11 / pieces, 40))
        .sum()
}

/// `u = R(φ) · blockdiag(h, h)` on `(x, px, y, py)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanarMap {
    pub osc: Mat2,
    pub phi: f64,
    pub composed: Mat4,
}

impl PlanarMap {
    pub fn apply(&self, q: &PhaseVector) -> PhaseVector {
        self.composed.apply(q)
    }

    pub fn then(&self, next: &PlanarMap) -> Mat4 {
        next.composed * self.composed
    }
}

/// Builds `R(φ) · blockdiag(h, h)` where `R` turns `(x, y)` and `(px, py)`
/// counter-clockwise by `phi`.
pub fn compose_planar(osc: Mat2, phi: f64) -> PlanarMap {
    PlanarMap {
        osc,
        phi,
        composed: Mat4::rotation(phi) * Mat4::block_diag(&osc),
    }
}

/// Full 4×4 map of the unforced flow over `[t0, t1]`.
///
/// The `−r L_z` term turns the plane clockwise, so the composed rotation angle
/// is `−∫ r dt`.
pub fn planar_map(pulse: &Pulse, t0: f64, t1: f64, tol: &ToleranceSpec) -> Result<PlanarMap> {
    let h = integrate_transfer(pulse, t0, t1, tol)?;
    let phi = rotation_phase(pulse, t0, t1)?;
    Ok(compose_planar(h.h, -phi))
}

#[inline(always)]
fn planar_rhs(q: &PhaseVector, k: f64, r: f64, f: f64) -> PhaseVector {
    PhaseVector::new(
        q.px + r * q.y,
        -k * q.x + r * q.py - f,
        q.py - r * q.x,
        -k * q.y - r * q.px,
    )
}

/// Integrates the planar equations, returning `n_samples` equally spaced states.
///
/// The force is evaluated at `t + clock_offset`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn integrate_states(
    pulse: &Pulse,
    q0: PhaseVector,
    t0: f64,
    t1: f64,
    n_samples: usize,
    force: Option<&ForceSpec>,
    clock_offset: f64,
    tol: &ToleranceSpec,
) -> Result<(Vec<f64>, Vec<PhaseVector>)> {
    tol.validate()?;
    if n_samples < 2 {
        return Err(Error::invalid("need at least two samples"));
    }
    if !(t0.is_finite() && t1.is_finite() && t1 > t0) {
        return Err(Error::invalid("trajectory needs finite t1 > t0"));
    }
    if !q0.is_finite() {
        return Err(Error::invalid("initial state must be finite"));
    }
    pulse.validate()?;
    pulse.check_span(t0, t1)?;
    let force_at = |t: f64| force.map_or(0.0, |f| f.value(t + clock_offset));

    let segments = n_samples - 1;
    let seg = (t1 - t0) / segments as f64;
    let m = tol.steps_for(seg);
    let dt = seg / m as f64;
    let half = 0.5 * dt;

    let mut times = Vec::with_capacity(n_samples);
    let mut states = Vec::with_capacity(n_samples);
    let mut q = q0;
    times.push(t0);
    states.push(q);
    for i in 0..segments {
        let a = t0 + seg * i as f64;
        let (mut ka, mut ra) = pulse.rates(a)?;
        let mut fa = force_at(a);
        for s in 0..m {
            let (_, tm, tb) = step_times(a, dt, s);
            let (km, rm) = pulse.rates(tm)?;
            let (kb, rb) = pulse.rates(tb)?;
            let (fm, fb) = (force_at(tm), force_at(tb));
            let k1 = planar_rhs(&q, ka, ra, fa);
            let k2 = planar_rhs(&(q + k1.scale(half)), km, rm, fm);
            let k3 = planar_rhs(&(q + k2.scale(half)), km, rm, fm);
            let k4 = planar_rhs(&(q + k3.scale(dt)), kb, rb, fb);
            q = q + (k1 + k2.scale(2.0) + k3.scale(2.0) + k4).scale(dt / 6.0);
            if !(q.max_abs() <= OVERFLOW_GUARD) {
                return Err(Error::NonFiniteState {
                    t: tb,
                    guard: OVERFLOW_GUARD,
                });
            }
            (ka, ra, fa) = (kb, rb, fb);
        }
        times.push(if i + 1 == segments {
            t1
        } else {
            t0 + seg * (i + 1) as f64
        });
        states.push(q);
    }
    Ok((times, states))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub pulse: Vec<Pulse>,
    pub force: Option<ForceSpec>,
    pub tolerances: ToleranceSpec,
}

/// Sampled trajectory in column form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub t: Vec<f64>,
    pub x: Vec<f64>,
    pub px: Vec<f64>,
    pub y: Vec<f64>,
    pub py: Vec<f64>,
    pub lz: Vec<f64>,
    pub meta: TrajectoryMeta,
}

impl TrajectoryRecord {
    pub fn from_states(times: Vec<f64>, states: &[PhaseVector], meta: TrajectoryMeta) -> Self {
        TrajectoryRecord {
            x: states.iter().map(|q| q.x).collect(),
            px: states.iter().map(|q| q.px).collect(),
            y: states.iter().map(|q| q.y).collect(),
            py: states.iter().map(|q| q.py).collect(),
            lz: states.iter().map(angular_momentum).collect(),
            t: times,
            meta,
        }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn state(&self, i: usize) -> PhaseVector {
        PhaseVector::new(self.x[i], self.px[i], self.y[i], self.py[i])
    }

    pub fn initial_state(&self) -> PhaseVector {
        self.state(0)
    }

    pub fn final_state(&self) -> PhaseVector {
        self.state(self.len() - 1)
    }

    pub fn states(&self) -> Vec<PhaseVector> {
        (0..self.len()).map(|i| self.state(i)).collect()
    }

    /// Largest `|L_z(t) − L_z(t0)|`.
    pub fn max_lz_deviation(&self) -> f64 {
        let l0 = self.lz.first().copied().unwrap_or(0.0);
        self.lz.iter().fold(0.0_f64, |m, l| m.max((l - l0).abs()))
    }

    /// Extends this record with `other`, dropping its first sample.
    pub(crate) fn append(&mut self, other: &TrajectoryRecord) {
        let skip = usize::from(!self.is_empty());
        self.t.extend_from_slice(&other.t[skip..]);
        self.x.extend_from_slice(&other.x[skip..]);
        self.px.extend_from_slice(&other.px[skip..]);
        self.y.extend_from_slice(&other.y[skip..]);
        self.py.extend_from_slice(&other.py[skip..]);
        self.lz.extend_from_slice(&other.lz[skip..]);
        self.meta.pulse.extend(other.meta.pulse.iter().cloned());
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,x,px,y,py,lz\n");
        for i in 0..self.len() {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                self.t[i], self.x[i], self.px[i], self.y[i], self.py[i], self.lz[i]
            ));
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::invalid(e.to_string()))
    }
}

/// Samples the planar trajectory from `q0` over `[t0, t1]`, optionally with a
/// force along Ox evaluated on the pulse clock.
pub fn propagate_trajectory(
    pulse: &Pulse,
    q0: PhaseVector,
    t0: f64,
    t1: f64,
    n_samples: usize,
    force: Option<&ForceSpec>,
    tol: &ToleranceSpec,
) -> Result<TrajectoryRecord> {
    let (times, states) = integrate_states(pulse, q0, t0, t1, n_samples, force, 0.0, tol)?;
    let meta = TrajectoryMeta {
        pulse: vec![pulse.clone()],
        force: force.cloned(),
        tolerances: *tol,
    };
    Ok(TrajectoryRecord::from_states(times, &states, meta))
}

/// Guiding-centre coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FuzzyCentre {
    pub xbar: f64,
    pub ybar: f64,
}

/// Guiding centre for field `beta_now`, with `ω_c = 2β`,
/// `vx = px + βy` and `vy = py − βx`.
pub fn fuzzy_centre(q: &PhaseVector, beta_now: f64) -> Result<FuzzyCentre> {
    if !(beta_now.abs() >= 1e-12) {
        return Err(Error::ZeroField { beta: beta_now });
    }
    let omega_c = 2.0 * beta_now;
    let vx = q.px + beta_now * q.y;
    let vy = q.py - beta_now * q.x;
    Ok(FuzzyCentre {
        xbar: q.x + vy / omega_c,
        ybar: q.y - vx / omega_c,
    })
}

pub fn angular_momentum(q: &PhaseVector) -> f64 {
    q.x * q.py - q.y * q.px
}
