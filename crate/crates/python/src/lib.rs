//! Python bindings. Results that are plain records come back as dicts; pulses,
//! transfer matrices, stability maps and pulse designs are wrapped as classes.

use std::f64::consts::{FRAC_PI_2, PI};

use fuzzyloop::protocol::{protocol_peak, LoopSearch};
use fuzzyloop::{
    CellClass, Convention, Error, ExactPulse, FieldProfile, ForceSpec, Interval, PhaseVector,
    PhysicalConstants, ProtocolOptions, RotationConvention, ScanGrid, ScanOptions, Stage,
    ThetaDesign, ToleranceSpec,
};
use pyo3::create_exception;
use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyComplex;
use pythonize::pythonize;
use serde::Serialize;

create_exception!(pyfuzzyloop, NumericalError, PyArithmeticError);

fn err(e: Error) -> PyErr {
    match e {
        Error::NonFiniteState { .. } | Error::SingularSystem => {
            NumericalError::new_err(e.to_string())
        }
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    Ok(pythonize(py, value)?)
}

fn tol(step: f64) -> PyResult<ToleranceSpec> {
    let t = ToleranceSpec::with_step(step);
    t.validate().map_err(err)?;
    Ok(t)
}

fn force(spec: Option<&str>) -> PyResult<Option<ForceSpec>> {
    match spec.map(str::trim) {
        None | Some("none") | Some("") => Ok(None),
        Some(s) => s.parse().map(Some).map_err(err),
    }
}

fn rotation(name: &str) -> PyResult<RotationConvention> {
    match name {
        "none" => Ok(RotationConvention::None),
        "field" => Ok(RotationConvention::Field),
        _ => Err(PyValueError::new_err(format!(
            "rotation '{name}': expected 'none' or 'field'"
        ))),
    }
}

fn convention(squared: bool) -> Convention {
    if squared {
        Convention::SquaredBeta
    } else {
        Convention::DirectBeta
    }
}

fn state(q: (f64, f64, f64, f64)) -> PhaseVector {
    PhaseVector::new(q.0, q.1, q.2, q.3)
}

/// Field profile `β(t)` and the convention mapping it to the oscillator coefficient.
#[pyclass(name = "Pulse", module = "pyfuzzyloop", frozen)]
struct PyPulse {
    inner: fuzzyloop::Pulse,
}

#[pymethods]
impl PyPulse {
    /// Biharmonic field with ω1 = 2π, ω2 = 4π on [0, 1], squared convention, periodic.
    #[staticmethod]
    fn strutt(beta1: f64, beta2: f64) -> Self {
        PyPulse {
            inner: fuzzyloop::Pulse::strutt(beta1, beta2),
        }
    }

    #[staticmethod]
    #[pyo3(signature = (beta0, beta1, beta2, omega1 = 2.0 * PI, omega2 = 4.0 * PI))]
    fn biharmonic(beta0: f64, beta1: f64, beta2: f64, omega1: f64, omega2: f64) -> Self {
        PyPulse {
            inner: fuzzyloop::Pulse::biharmonic(beta0, beta1, beta2, omega1, omega2),
        }
    }

    /// Constant coefficient on [t0, t1]; `squared` selects k = β².
    #[staticmethod]
    #[pyo3(signature = (k, t0, t1, squared = false))]
    fn constant(k: f64, t0: f64, t1: f64, squared: bool) -> PyResult<Self> {
        let p = fuzzyloop::Pulse::constant(k, Interval::new(t0, t1), convention(squared));
        p.validate().map_err(err)?;
        Ok(PyPulse { inner: p })
    }

    /// Samples on a uniform grid over [t0, t1], Catmull–Rom interpolated.
    #[staticmethod]
    #[pyo3(signature = (samples, t0, t1, squared = false))]
    fn tabulated(samples: Vec<f64>, t0: f64, t1: f64, squared: bool) -> PyResult<Self> {
        let p = fuzzyloop::Pulse::tabulated(samples, Interval::new(t0, t1), convention(squared))
            .map_err(err)?;
        Ok(PyPulse { inner: p })
    }

    /// Pulse producing the squeeze `[[0, b], [-1/b, 0]]` with free parameter `c`.
    #[staticmethod]
    #[pyo3(signature = (b, c, rotation = "none"))]
    fn design(b: f64, c: f64, rotation: &str) -> PyResult<Self> {
        let rot = self::rotation(rotation)?;
        let p = ExactPulse::from_parameters(b, c).map_err(err)?;
        Ok(PyPulse {
            inner: p.to_pulse_with(rot),
        })
    }

    fn periodic(&self, flag: bool) -> Self {
        PyPulse {
            inner: self.inner.clone().periodic(flag),
        }
    }

    #[getter]
    fn interval(&self) -> (f64, f64) {
        (self.inner.interval.start, self.inner.interval.end)
    }

    fn field(&self, t: f64) -> PyResult<f64> {
        self.inner.field(t).map_err(err)
    }

    fn coefficient(&self, t: f64) -> PyResult<f64> {
        self.inner.coefficient(t).map_err(err)
    }

    fn rotation_rate(&self, t: f64) -> PyResult<f64> {
        self.inner.rotation_rate(t).map_err(err)
    }

    #[pyo3(signature = (samples = 2001))]
    fn peak<'py>(&self, py: Python<'py>, samples: usize) -> PyResult<Bound<'py, PyAny>> {
        let peak = self.inner.peak(samples).map_err(err)?;
        to_py(py, &peak)
    }

    fn to_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner)
    }

    fn __repr__(&self) -> String {
        format!("Pulse({:?})", self.inner)
    }
}

/// 2×2 transfer matrix of the oscillator part, with its trace and eigenvalues.
#[pyclass(name = "TransferMatrix", module = "pyfuzzyloop", frozen)]
struct PyTransfer {
    inner: fuzzyloop::TransferMatrix,
}

#[pymethods]
impl PyTransfer {
    #[getter]
    fn h(&self) -> ((f64, f64), (f64, f64)) {
        let h = &self.inner.h;
        ((h.h11, h.h12), (h.h21, h.h22))
    }

    #[getter]
    fn sigma(&self) -> f64 {
        self.inner.sigma
    }

    #[getter]
    fn delta(&self) -> f64 {
        self.inner.delta
    }

    #[getter]
    fn error_estimate(&self) -> Option<f64> {
        self.inner.error_estimate
    }

    #[getter]
    fn eigenvalues<'py>(&self, py: Python<'py>) -> Vec<Bound<'py, PyComplex>> {
        self.inner
            .eigenvalues
            .iter()
            .map(|z| PyComplex::from_doubles(py, z.re, z.im))
            .collect()
    }

    fn det(&self) -> f64 {
        self.inner.det()
    }

    fn __repr__(&self) -> String {
        let h = &self.inner.h;
        format!(
            "TransferMatrix([[{}, {}], [{}, {}]], sigma={})",
            h.h11, h.h12, h.h21, h.h22, self.inner.sigma
        )
    }
}

fn span(pulse: &fuzzyloop::Pulse, t0: Option<f64>, t1: Option<f64>) -> (f64, f64) {
    (
        t0.unwrap_or(pulse.interval.start),
        t1.unwrap_or(pulse.interval.end),
    )
}

#[pyfunction]
#[pyo3(signature = (pulse, t0 = None, t1 = None, step = 1e-4))]
fn integrate_transfer(
    py: Python<'_>,
    pulse: &PyPulse,
    t0: Option<f64>,
    t1: Option<f64>,
    step: f64,
) -> PyResult<PyTransfer> {
    let (a, b) = span(&pulse.inner, t0, t1);
    let tol = tol(step)?;
    let p = &pulse.inner;
    let inner = py
        .detach(|| fuzzyloop::integrate_transfer(p, a, b, &tol))
        .map_err(err)?;
    Ok(PyTransfer { inner })
}

/// Full planar map: `{"osc": ..., "phi": ..., "composed": 4×4 rows}`.
#[pyfunction]
#[pyo3(signature = (pulse, t0 = None, t1 = None, step = 1e-4))]
fn planar_map<'py>(
    py: Python<'py>,
    pulse: &PyPulse,
    t0: Option<f64>,
    t1: Option<f64>,
    step: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let (a, b) = span(&pulse.inner, t0, t1);
    let tol = tol(step)?;
    let map = fuzzyloop::planar_map(&pulse.inner, a, b, &tol).map_err(err)?;
    to_py(py, &map)
}

/// Sampled trajectory as a dict of columns t, x, px, y, py, lz plus metadata.
#[pyfunction]
#[pyo3(signature = (pulse, q0, t0 = None, t1 = None, samples = 601, force = None, step = 1e-4))]
#[allow(clippy::too_many_arguments)]
fn propagate_trajectory<'py>(
    py: Python<'py>,
    pulse: &PyPulse,
    q0: (f64, f64, f64, f64),
    t0: Option<f64>,
    t1: Option<f64>,
    samples: usize,
    force: Option<&str>,
    step: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let (a, b) = span(&pulse.inner, t0, t1);
    let tol = tol(step)?;
    let f = self::force(force)?;
    let p = &pulse.inner;
    let rec = py
        .detach(|| fuzzyloop::propagate_trajectory(p, state(q0), a, b, samples, f.as_ref(), &tol))
        .map_err(err)?;
    to_py(py, &rec)
}

#[pyfunction]
#[pyo3(signature = (sigma, eps_thr = 1e-6))]
fn classify(sigma: f64, eps_thr: f64) -> &'static str {
    fuzzyloop::classify(sigma, eps_thr).as_str()
}

/// Trace and class of every cell of a biharmonic amplitude grid.
#[pyclass(name = "StruttMap", module = "pyfuzzyloop", frozen)]
struct PyStruttMap {
    inner: fuzzyloop::StruttMap,
}

fn cell_class(name: &str) -> PyResult<CellClass> {
    [
        CellClass::Stable,
        CellClass::Threshold,
        CellClass::Unstable,
        CellClass::Diverged,
    ]
    .into_iter()
    .find(|c| c.as_str() == name)
    .ok_or_else(|| PyValueError::new_err(format!("unknown class '{name}'")))
}

#[pymethods]
impl PyStruttMap {
    #[getter]
    fn shape(&self) -> (usize, usize) {
        (self.inner.grid.n1, self.inner.grid.n2)
    }

    fn count(&self, class: &str) -> PyResult<usize> {
        Ok(self.inner.count(cell_class(class)?))
    }

    fn cells<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.cells)
    }

    fn nearest<'py>(&self, py: Python<'py>, beta1: f64, beta2: f64) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, self.inner.nearest(beta1, beta2))
    }

    fn separatrix(&self) -> Vec<(f64, f64)> {
        self.inner.separatrix()
    }

    /// Cells whose matrix is closest to `diag(λ, 1/λ)` in either sign; empty when none qualify.
    #[pyo3(signature = (lam, residual_tol = 1e-2))]
    fn find_squeeze_points<'py>(
        &self,
        py: Python<'py>,
        lam: f64,
        residual_tol: f64,
    ) -> PyResult<Bound<'py, PyAny>> {
        match fuzzyloop::find_squeeze_points(&self.inner, lam, residual_tol) {
            Ok(points) => to_py(py, &points),
            Err(Error::EmptyResult(_)) => to_py(py, &Vec::<()>::new()),
            Err(e) => Err(err(e)),
        }
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv()
    }

    fn to_svg(&self) -> String {
        self.inner.to_svg(None)
    }
}

#[pyfunction]
#[pyo3(signature = (
    grid = (61, 61), beta1_range = (-15.0, 15.0), beta2_range = (-15.0, 15.0),
    beta0 = 0.0, omega1 = 2.0 * PI, omega2 = 4.0 * PI, t_span = (0.0, 1.0),
    eps_thr = 1e-6, step = 1e-4, workers = None
))]
#[allow(clippy::too_many_arguments)]
fn scan_strutt(
    py: Python<'_>,
    grid: (usize, usize),
    beta1_range: (f64, f64),
    beta2_range: (f64, f64),
    beta0: f64,
    omega1: f64,
    omega2: f64,
    t_span: (f64, f64),
    eps_thr: f64,
    step: f64,
    workers: Option<usize>,
) -> PyResult<PyStruttMap> {
    let g = ScanGrid {
        beta1_range: [beta1_range.0, beta1_range.1],
        beta2_range: [beta2_range.0, beta2_range.1],
        n1: grid.0,
        n2: grid.1,
        omega1,
        omega2,
        beta0,
        t_span: [t_span.0, t_span.1],
    };
    let opts = ScanOptions {
        tol: tol(step)?,
        eps_thr,
        workers,
    };
    let inner = py
        .detach(|| fuzzyloop::scan_strutt(&g, &opts))
        .map_err(err)?;
    Ok(PyStruttMap { inner })
}

/// Sine-series generating function solved from the squeeze parameters `b`, `c`.
#[pyclass(name = "Design", module = "pyfuzzyloop", frozen)]
struct PyDesign {
    inner: ThetaDesign,
}

#[pymethods]
impl PyDesign {
    #[new]
    fn new(b: f64, c: f64) -> PyResult<Self> {
        Ok(PyDesign {
            inner: fuzzyloop::solve_theta(b, c).map_err(err)?,
        })
    }

    #[getter]
    fn a(&self) -> [f64; 4] {
        self.inner.a
    }

    #[getter]
    fn b(&self) -> f64 {
        self.inner.b
    }

    #[getter]
    fn c(&self) -> f64 {
        self.inner.c
    }

    fn constraints(&self) -> [f64; 4] {
        self.inner.constraints()
    }

    fn residual(&self) -> f64 {
        self.inner.residual()
    }

    fn beta(&self, t: f64) -> PyResult<f64> {
        self.inner.beta(t).map_err(err)
    }

    fn sample(&self, n: usize) -> PyResult<Vec<(f64, f64)>> {
        ExactPulse::new(self.inner).sample(n).map_err(err)
    }

    #[pyo3(signature = (check_points = 256))]
    fn validate<'py>(&self, py: Python<'py>, check_points: usize) -> PyResult<Bound<'py, PyAny>> {
        let report =
            fuzzyloop::validate_design(&ExactPulse::new(self.inner), check_points).map_err(err)?;
        to_py(py, &report)
    }

    #[pyo3(signature = (rotation = "none"))]
    fn pulse(&self, rotation: &str) -> PyResult<PyPulse> {
        Ok(PyPulse {
            inner: ExactPulse::new(self.inner).to_pulse_with(self::rotation(rotation)?),
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "Design(b={}, c={}, a={:?})",
            self.inner.b, self.inner.c, self.inner.a
        )
    }
}

fn stages(pulses: &[PyRef<'_, PyPulse>], reverse: bool) -> Vec<Stage> {
    let s: Vec<Stage> = pulses
        .iter()
        .map(|p| Stage::full(p.inner.clone()))
        .collect();
    if reverse {
        fuzzyloop::reversed(&s)
    } else {
        s
    }
}

/// Runs full-length stages back to back. With a force the result also carries
/// the guiding-centre drift under `"drift"`.
#[pyfunction]
#[pyo3(signature = (pulses, q0, force = None, reverse = false, samples_per_stage = 401, clock_start = -FRAC_PI_2, step = 1e-4))]
#[allow(clippy::too_many_arguments)]
fn run_protocol<'py>(
    py: Python<'py>,
    pulses: Vec<PyRef<'py, PyPulse>>,
    q0: (f64, f64, f64, f64),
    force: Option<&str>,
    reverse: bool,
    samples_per_stage: usize,
    clock_start: f64,
    step: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let st = stages(&pulses, reverse);
    let opts = ProtocolOptions {
        tol: tol(step)?,
        samples_per_stage,
        clock_start,
    };
    let f = self::force(force)?;
    let out = match &f {
        None => {
            let run = py
                .detach(|| fuzzyloop::run_protocol(&st, state(q0), None, &opts))
                .map_err(err)?;
            to_py(py, &run)?
        }
        Some(f) => {
            let (run, drift) = py
                .detach(|| fuzzyloop::perturbed_run(&st, state(q0), f, &opts))
                .map_err(err)?;
            let d = to_py(py, &run)?;
            d.set_item("drift", to_py(py, &drift)?)?;
            d
        }
    };
    Ok(out)
}

/// Linear squeeze factors of the stages plus the offset and ratios produced by `force`.
#[pyfunction]
#[pyo3(signature = (pulses, q0, force, reverse = false, clock_start = -FRAC_PI_2, step = 1e-4))]
fn forced_squeeze_factors<'py>(
    py: Python<'py>,
    pulses: Vec<PyRef<'py, PyPulse>>,
    q0: (f64, f64, f64, f64),
    force: &str,
    reverse: bool,
    clock_start: f64,
    step: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let st = stages(&pulses, reverse);
    let opts = ProtocolOptions {
        tol: tol(step)?,
        samples_per_stage: 2,
        clock_start,
    };
    let f =
        self::force(Some(force))?.ok_or_else(|| PyValueError::new_err("a force is required"))?;
    let ff = py
        .detach(|| fuzzyloop::forced_squeeze_factors(&st, state(q0), &f, &opts))
        .map_err(err)?;
    to_py(py, &ff)
}

/// Peak field over a sequence of stages.
#[pyfunction]
#[pyo3(signature = (pulses, samples_per_stage = 2001))]
fn stages_peak<'py>(
    py: Python<'py>,
    pulses: Vec<PyRef<'py, PyPulse>>,
    samples_per_stage: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let peak = protocol_peak(&stages(&pulses, false), samples_per_stage).map_err(err)?;
    to_py(py, &peak)
}

/// Earliest time at which the orbit returns within `tol` of `q0`, or None.
#[pyfunction]
#[pyo3(signature = (pulse, q0, t_max, tol = 1e-2, force = None, sample_dt = 1e-2, step = 1e-4))]
#[allow(clippy::too_many_arguments)]
fn find_loop_period(
    py: Python<'_>,
    pulse: &PyPulse,
    q0: (f64, f64, f64, f64),
    t_max: f64,
    tol: f64,
    force: Option<&str>,
    sample_dt: f64,
    step: f64,
) -> PyResult<Option<f64>> {
    let search = LoopSearch {
        tol: self::tol(step)?,
        sample_dt,
    };
    let f = self::force(force)?;
    let p = &pulse.inner;
    py.detach(|| fuzzyloop::find_loop_period(p, state(q0), t_max, tol, f.as_ref(), &search))
        .map_err(err)
}

fn constants(particle: &str) -> PyResult<PhysicalConstants> {
    PhysicalConstants::particle(particle).map_err(err)
}

/// Exact coefficient of the n-th radial correction as a `fractions.Fraction`.
#[pyfunction]
fn correction_coefficient(py: Python<'_>, n: u32) -> PyResult<Bound<'_, PyAny>> {
    let c = fuzzyloop::correction_coefficient(n);
    py.import("fractions")?
        .getattr("Fraction")?
        .call1((c.to_string(),))
}

/// Radial corrections of a unit-sine field profile of the given amplitude.
#[pyfunction]
#[pyo3(signature = (r, t_scale, n_terms, amplitude = 1.0, particle = "proton"))]
fn field_corrections<'py>(
    py: Python<'py>,
    r: f64,
    t_scale: f64,
    n_terms: usize,
    amplitude: f64,
    particle: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let series = fuzzyloop::field_with_corrections(
        &FieldProfile::unit_sine(amplitude),
        r,
        t_scale,
        n_terms,
        &constants(particle)?,
    )
    .map_err(err)?;
    to_py(py, &series)
}

/// Length, momentum, velocity and field scales for time unit `t_scale` seconds.
#[pyfunction]
#[pyo3(signature = (t_scale, beta_max, particle = "proton"))]
fn lab_scaling<'py>(
    py: Python<'py>,
    t_scale: f64,
    beta_max: f64,
    particle: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let row = fuzzyloop::lab_scaling(t_scale, &constants(particle)?, beta_max).map_err(err)?;
    to_py(py, &row)
}

/// Field in gauss inside a rotating cylinder carrying `charge_esu` per unit length.
#[pyfunction]
#[pyo3(signature = (radius, omega, charge_esu, c = None))]
fn rotating_cylinder_field(
    radius: f64,
    omega: f64,
    charge_esu: f64,
    c: Option<f64>,
) -> PyResult<f64> {
    let c = c.unwrap_or(PhysicalConstants::proton().c);
    fuzzyloop::rotating_cylinder_field(radius, omega, charge_esu, c).map_err(err)
}

#[pyfunction]
fn angular_momentum(q: (f64, f64, f64, f64)) -> f64 {
    fuzzyloop::angular_momentum(&state(q))
}

#[pymodule]
fn pyfuzzyloop(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add("NumericalError", m.py().get_type::<NumericalError>())?;
    m.add("COULOMB_ESU", fuzzyloop::field::COULOMB_ESU)?;
    m.add_class::<PyPulse>()?;
    m.add_class::<PyTransfer>()?;
    m.add_class::<PyStruttMap>()?;
    m.add_class::<PyDesign>()?;
    m.add_function(wrap_pyfunction!(integrate_transfer, m)?)?;
    m.add_function(wrap_pyfunction!(planar_map, m)?)?;
    m.add_function(wrap_pyfunction!(propagate_trajectory, m)?)?;
    m.add_function(wrap_pyfunction!(classify, m)?)?;
    m.add_function(wrap_pyfunction!(scan_strutt, m)?)?;
    m.add_function(wrap_pyfunction!(run_protocol, m)?)?;
    m.add_function(wrap_pyfunction!(forced_squeeze_factors, m)?)?;
    m.add_function(wrap_pyfunction!(stages_peak, m)?)?;
    m.add_function(wrap_pyfunction!(find_loop_period, m)?)?;
    m.add_function(wrap_pyfunction!(correction_coefficient, m)?)?;
    m.add_function(wrap_pyfunction!(field_corrections, m)?)?;
    m.add_function(wrap_pyfunction!(lab_scaling, m)?)?;
    m.add_function(wrap_pyfunction!(rotating_cylinder_field, m)?)?;
    m.add_function(wrap_pyfunction!(angular_momentum, m)?)?;
    Ok(())
}
