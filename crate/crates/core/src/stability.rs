//! Stability maps over biharmonic amplitudes.
//!
//! Every cell integrates the transfer matrix of
//! `β(t) = β0 + β1 sin(ω1 t) + β2 sin(ω2 t)` over the grid's time span and is
//! classified by its trace. Cells are integrated eight at a time with shared
//! sine tables; each lane performs exactly the floating-point operations of
//! [`integrate_transfer`](crate::dynamics::integrate_transfer), so results are
//! bit-identical to the scalar path and independent of the worker count.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{rk4_pair, step_times, ToleranceSpec, TransferMatrix, OVERFLOW_GUARD};
use crate::error::{Error, Result};
use crate::linalg::Mat2;
use crate::pulse::{biharmonic_beta, Pulse};

const LANES: usize = 8;
/// Trace magnitude recorded for cells that hit the overflow guard.
pub const SATURATED_SIGMA: f64 = 1e12;
/// Squeeze points must reproduce the target factor this closely.
pub const SQUEEZE_LAMBDA_TOL: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanGrid {
    pub beta1_range: [f64; 2],
    pub beta2_range: [f64; 2],
    pub n1: usize,
    pub n2: usize,
    pub omega1: f64,
    pub omega2: f64,
    pub beta0: f64,
    pub t_span: [f64; 2],
}

impl Default for ScanGrid {
    fn default() -> Self {
        ScanGrid {
            beta1_range: [-15.0, 15.0],
            beta2_range: [-15.0, 15.0],
            n1: 601,
            n2: 601,
            omega1: 2.0 * PI,
            omega2: 4.0 * PI,
            beta0: 0.0,
            t_span: [0.0, 1.0],
        }
    }
}

fn linspace(range: [f64; 2], n: usize, i: usize) -> f64 {
    let [lo, hi] = range;
    ((n - 1 - i) as f64 * lo + i as f64 * hi) / (n - 1) as f64
}

impl ScanGrid {
    pub fn validate(&self) -> Result<()> {
        if self.n1 < 2 || self.n2 < 2 {
            return Err(Error::invalid("grid needs at least 2 points per axis"));
        }
        for r in [self.beta1_range, self.beta2_range] {
            if !(r[0].is_finite() && r[1].is_finite() && r[0] < r[1]) {
                return Err(Error::invalid("grid ranges need finite min < max"));
            }
        }
        if !(self.t_span[0].is_finite()
            && self.t_span[1].is_finite()
            && self.t_span[1] > self.t_span[0])
        {
            return Err(Error::invalid("time span needs t1 > t0"));
        }
        if ![self.omega1, self.omega2, self.beta0]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(Error::invalid("grid frequencies and offset must be finite"));
        }
        Ok(())
    }

    pub fn beta1(&self, i: usize) -> f64 {
        linspace(self.beta1_range, self.n1, i)
    }

    pub fn beta2(&self, j: usize) -> f64 {
        linspace(self.beta2_range, self.n2, j)
    }

    pub fn spacing(&self) -> (f64, f64) {
        (
            (self.beta1_range[1] - self.beta1_range[0]) / (self.n1 - 1) as f64,
            (self.beta2_range[1] - self.beta2_range[0]) / (self.n2 - 1) as f64,
        )
    }

    pub fn pulse(&self, beta1: f64, beta2: f64) -> Pulse {
        Pulse::biharmonic(self.beta0, beta1, beta2, self.omega1, self.omega2)
    }

    pub fn duration(&self) -> f64 {
        self.t_span[1] - self.t_span[0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CellClass {
    Stable,
    Threshold,
    Unstable,
    Diverged,
}

impl CellClass {
    pub fn as_str(&self) -> &'static str {
        match self {
            CellClass::Stable => "stable",
            CellClass::Threshold => "threshold",
            CellClass::Unstable => "unstable",
            CellClass::Diverged => "diverged",
        }
    }
}

/// Stable if `|σ| < 2 − ε`, Threshold if `||σ| − 2| ≤ ε`, Unstable otherwise.
pub fn classify(sigma: f64, eps_thr: f64) -> CellClass {
    let g = sigma.abs() - 2.0;
    if g.abs() <= eps_thr {
        CellClass::Threshold
    } else if g < 0.0 {
        CellClass::Stable
    } else {
        CellClass::Unstable
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub beta1: f64,
    pub beta2: f64,
    pub sigma: f64,
    pub h: Mat2,
    pub class: CellClass,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanOptions {
    pub tol: ToleranceSpec,
    pub eps_thr: f64,
    /// Worker threads; `None` uses every available core.
    pub workers: Option<usize>,
}

impl Default for ScanOptions {
    fn default() -> Self {
        ScanOptions {
            tol: ToleranceSpec::default(),
            eps_thr: 1e-6,
            workers: None,
        }
    }
}

/// `sin(ω t)` at every start/mid/end time of the integration grid.
struct SineTables {
    s1: Vec<f64>,
    s2: Vec<f64>,
    n: usize,
    dt: f64,
}

impl SineTables {
    fn new(grid: &ScanGrid, tol: &ToleranceSpec) -> Self {
        let [t0, t1] = grid.t_span;
        let n = tol.steps_for(t1 - t0);
        let dt = (t1 - t0) / n as f64;
        let mut times = Vec::with_capacity(2 * n + 1);
        for s in 0..n {
            let (ta, tm, _) = step_times(t0, dt, s);
            times.push(ta);
            times.push(tm);
        }
        times.push(step_times(t0, dt, n - 1).2);
        SineTables {
            s1: times.iter().map(|t| (grid.omega1 * t).sin()).collect(),
            s2: times.iter().map(|t| (grid.omega2 * t).sin()).collect(),
            n,
            dt,
        }
    }
}

/// Integrates `L` cells at once. Returns each lane's matrix and whether it diverged.
fn integrate_lanes<const L: usize>(
    tables: &SineTables,
    beta0: f64,
    b1: &[f64; L],
    b2: &[f64; L],
) -> ([Mat2; L], [bool; L]) {
    let (s1, s2, dt) = (&tables.s1, &tables.s2, tables.dt);
    let coeff = |lane: usize, idx: usize| {
        let b = biharmonic_beta(beta0, b1[lane], b2[lane], s1[idx], s2[idx]);
        b * b
    };
    let mut h11 = [1.0; L];
    let mut h12 = [0.0; L];
    let mut h21 = [0.0; L];
    let mut h22 = [1.0; L];
    let mut alive = [true; L];
    let mut ka = [0.0; L];
    for (l, k) in ka.iter_mut().enumerate() {
        *k = coeff(l, 0);
    }
    for s in 0..tables.n {
        let mut km = [0.0; L];
        let mut kb = [0.0; L];
        for l in 0..L {
            km[l] = coeff(l, 2 * s + 1);
            kb[l] = coeff(l, 2 * s + 2);
        }
        let mut any = false;
        for l in 0..L {
            let (a11, a21) = rk4_pair(h11[l], h21[l], ka[l], km[l], kb[l], dt);
            let (a12, a22) = rk4_pair(h12[l], h22[l], ka[l], km[l], kb[l], dt);
            let keep = alive[l];
            h11[l] = if keep { a11 } else { h11[l] };
            h12[l] = if keep { a12 } else { h12[l] };
            h21[l] = if keep { a21 } else { h21[l] };
            h22[l] = if keep { a22 } else { h22[l] };
            let ok = Mat2::new(h11[l], h12[l], h21[l], h22[l]).max_abs() <= OVERFLOW_GUARD;
            alive[l] = keep && ok;
            any |= alive[l];
        }
        if !any {
            break;
        }
        ka = kb;
    }
    let mut out = [Mat2::IDENTITY; L];
    let mut diverged = [false; L];
    for l in 0..L {
        out[l] = Mat2::new(h11[l], h12[l], h21[l], h22[l]);
        diverged[l] = !alive[l];
    }
    (out, diverged)
}

fn cell_from(beta1: f64, beta2: f64, h: Mat2, diverged: bool, eps_thr: f64) -> CellResult {
    if diverged {
        let sigma = if h.trace() < 0.0 {
            -SATURATED_SIGMA
        } else {
            SATURATED_SIGMA
        };
        CellResult {
            beta1,
            beta2,
            sigma,
            h,
            class: CellClass::Diverged,
        }
    } else {
        let sigma = h.trace();
        CellResult {
            beta1,
            beta2,
            sigma,
            h,
            class: classify(sigma, eps_thr),
        }
    }
}

/// Evaluates cells at arbitrary amplitudes with the grid's frequencies and span.
pub struct CellProbe {
    grid: ScanGrid,
    tables: SineTables,
    eps_thr: f64,
}

impl CellProbe {
    pub fn new(grid: &ScanGrid, opts: &ScanOptions) -> Result<Self> {
        grid.validate()?;
        opts.tol.validate()?;
        Ok(CellProbe {
            grid: *grid,
            tables: SineTables::new(grid, &opts.tol),
            eps_thr: opts.eps_thr,
        })
    }

    pub fn cell(&self, beta1: f64, beta2: f64) -> CellResult {
        let (h, d) = integrate_lanes::<1>(&self.tables, self.grid.beta0, &[beta1], &[beta2]);
        cell_from(beta1, beta2, h[0], d[0], self.eps_thr)
    }

    pub fn grid(&self) -> &ScanGrid {
        &self.grid
    }
}

/// A classified grid, stored row by row (`β2` rows, `β1` columns).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StruttMap {
    pub grid: ScanGrid,
    pub options: ScanOptions,
    pub cells: Vec<CellResult>,
}

fn with_pool<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        Some(0) => Err(Error::invalid("worker count must be positive")),
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w)
                .build()
                .map_err(|e| Error::invalid(e.to_string()))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

/// Integrates and classifies every cell of `grid`. Diverging cells are kept as
/// `Diverged` with a saturated trace.
pub fn scan_strutt(grid: &ScanGrid, opts: &ScanOptions) -> Result<StruttMap> {
    grid.validate()?;
    opts.tol.validate()?;
    let tables = SineTables::new(grid, &opts.tol);
    let total = grid.n1 * grid.n2;
    let chunks: Vec<usize> = (0..total).step_by(LANES).collect();
    let run = || {
        chunks
            .par_iter()
            .map(|&first| {
                let mut b1 = [0.0; LANES];
                let mut b2 = [0.0; LANES];
                let count = LANES.min(total - first);
                for l in 0..LANES {
                    // padding lanes repeat the last real cell
                    let idx = first + l.min(count - 1);
                    b1[l] = grid.beta1(idx % grid.n1);
                    b2[l] = grid.beta2(idx / grid.n1);
                }
                let (hs, div) = integrate_lanes::<LANES>(&tables, grid.beta0, &b1, &b2);
                (0..count)
                    .map(|l| cell_from(b1[l], b2[l], hs[l], div[l], opts.eps_thr))
                    .collect::<Vec<_>>()
            })
            .collect::<Vec<_>>()
    };
    let cells = with_pool(opts.workers, run)?
        .into_iter()
        .flatten()
        .collect();
    Ok(StruttMap {
        grid: *grid,
        options: *opts,
        cells,
    })
}

impl StruttMap {
    pub fn cell(&self, i: usize, j: usize) -> &CellResult {
        &self.cells[j * self.grid.n1 + i]
    }

    /// Grid cell nearest to `(beta1, beta2)`.
    pub fn nearest(&self, beta1: f64, beta2: f64) -> &CellResult {
        let (d1, d2) = self.grid.spacing();
        let i = ((beta1 - self.grid.beta1_range[0]) / d1)
            .round()
            .clamp(0.0, (self.grid.n1 - 1) as f64) as usize;
        let j = ((beta2 - self.grid.beta2_range[0]) / d2)
            .round()
            .clamp(0.0, (self.grid.n2 - 1) as f64) as usize;
        self.cell(i, j)
    }

    pub fn count(&self, class: CellClass) -> usize {
        self.cells.iter().filter(|c| c.class == class).count()
    }

    /// Points where `|Σ| − 2` changes sign between neighbouring cells,
    /// placed by linear interpolation.
    pub fn separatrix(&self) -> Vec<(f64, f64)> {
        let g = |c: &CellResult| c.sigma.abs() - 2.0;
        let mut out = Vec::new();
        let (n1, n2) = (self.grid.n1, self.grid.n2);
        for j in 0..n2 {
            for i in 0..n1 {
                let a = self.cell(i, j);
                let mut edge = |b: &CellResult| {
                    let (ga, gb) = (g(a), g(b));
                    if ga == 0.0 {
                        out.push((a.beta1, a.beta2));
                    } else if ga * gb < 0.0 {
                        let u = ga / (ga - gb);
                        out.push((
                            a.beta1 + u * (b.beta1 - a.beta1),
                            a.beta2 + u * (b.beta2 - a.beta2),
                        ));
                    }
                };
                if i + 1 < n1 {
                    edge(self.cell(i + 1, j));
                }
                if j + 1 < n2 {
                    edge(self.cell(i, j + 1));
                }
            }
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.cells.len() * 96);
        out.push_str("beta1,beta2,sigma,h11,h12,h21,h22,class\n");
        for c in &self.cells {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                c.beta1,
                c.beta2,
                c.sigma,
                c.h.h11,
                c.h.h12,
                c.h.h21,
                c.h.h22,
                c.class.as_str()
            );
        }
        out
    }

    /// Heatmap: stable cells clear, unstable filled, threshold cells stroked,
    /// separatrix crossings as dots. `metadata` is embedded verbatim (escaped).
    pub fn to_svg(&self, metadata: Option<&str>) -> String {
        let (n1, n2) = (self.grid.n1, self.grid.n2);
        let cell = (600 / n1.max(n2)).max(1);
        let margin = 40;
        let (w, h) = (n1 * cell, n2 * cell);
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}">"#,
            w + 2 * margin,
            h + 2 * margin,
            w + 2 * margin,
            h + 2 * margin
        );
        if let Some(meta) = metadata {
            let _ = writeln!(s, "<metadata>{}</metadata>", escape_xml(meta));
        }
        let _ = writeln!(s, r#"<g transform="translate({margin},{margin})">"#);
        let _ = writeln!(
            s,
            r##"<rect x="0" y="0" width="{w}" height="{h}" fill="#ffffff" stroke="#000000"/>"##
        );
        // rows are drawn top-down from the largest β2
        for j in 0..n2 {
            let y = (n2 - 1 - j) * cell;
            let mut i = 0;
            while i < n1 {
                let class = self.cell(i, j).class;
                let mut run = 1;
                while i + run < n1 && self.cell(i + run, j).class == class {
                    run += 1;
                }
                let fill = match class {
                    CellClass::Unstable => Some("#e6550d"),
                    CellClass::Diverged => Some("#a63603"),
                    _ => None,
                };
                if let Some(fill) = fill {
                    let _ = writeln!(
                        s,
                        r#"<rect x="{}" y="{y}" width="{}" height="{cell}" fill="{fill}"/>"#,
                        i * cell,
                        run * cell
                    );
                } else if class == CellClass::Threshold {
                    let _ = writeln!(
                        s,
                        r##"<rect x="{}" y="{y}" width="{}" height="{cell}" fill="none" stroke="#3182bd"/>"##,
                        i * cell,
                        run * cell
                    );
                }
                i += run;
            }
        }
        let (d1, d2) = self.grid.spacing();
        for (b1, b2) in self.separatrix() {
            let x = (b1 - self.grid.beta1_range[0]) / d1 * cell as f64 + 0.5 * cell as f64;
            let y = (self.grid.beta2_range[1] - b2) / d2 * cell as f64 + 0.5 * cell as f64;
            let _ = writeln!(
                s,
                r##"<circle cx="{x:.2}" cy="{y:.2}" r="0.5" fill="#08519c"/>"##
            );
        }
        let _ = writeln!(s, "</g>");
        let [a, b] = self.grid.beta1_range;
        let [c, d] = self.grid.beta2_range;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">beta1 [{a}, {b}]</text>"#,
            margin + w / 2,
            h + margin + 25
        );
        let _ = writeln!(
            s,
            r#"<text x="12" y="{}" font-size="12" text-anchor="middle" transform="rotate(-90 12 {})">beta2 [{c}, {d}]</text>"#,
            margin + h / 2,
            margin + h / 2
        );
        s.push_str("</svg>\n");
        s
    }
}

pub(crate) fn escape_xml(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SqueezePoint {
    pub beta1: f64,
    pub beta2: f64,
    /// `h11` at the refined point.
    pub lambda: f64,
    /// `|h12| + |h21|`.
    pub residual: f64,
    pub h: Mat2,
}

fn residual_of(h: &Mat2) -> f64 {
    h.h12.abs() + h.h21.abs()
}

/// Cells where `h11 = lambda_target` with a small off-diagonal residual.
///
/// Crossings of `h11 − λ` between neighbouring cells are refined by
/// bracketing root search along the cell edge (at most 60 iterations) and
/// kept if `|h11 − λ| ≤ 1e-3` and `|h12| + |h21| ≤ residual_tol`. Sorted by
/// residual.
pub fn find_squeeze_points(
    map: &StruttMap,
    lambda_target: f64,
    residual_tol: f64,
) -> Result<Vec<SqueezePoint>> {
    if !(lambda_target >= 1.0) {
        return Err(Error::invalid("lambda_target must be at least 1"));
    }
    if !(residual_tol > 0.0) {
        return Err(Error::invalid("residual_tol must be positive"));
    }
    let probe = CellProbe::new(&map.grid, &map.options)?;
    let (n1, n2) = (map.grid.n1, map.grid.n2);
    let f = |c: &CellResult| c.h.h11 - lambda_target;
    let usable = |c: &CellResult| c.class != CellClass::Diverged;

    let mut edges = Vec::new();
    for j in 0..n2 {
        for i in 0..n1 {
            let a = map.cell(i, j);
            if !usable(a) {
                continue;
            }
            let mut push = |b: &CellResult| {
                if !usable(b) {
                    return;
                }
                let (fa, fb) = (f(a), f(b));
                if fa == 0.0 || fa * fb < 0.0 {
                    let u = if fa == 0.0 { 0.0 } else { fa / (fa - fb) };
                    let est = residual_of(&a.h) + u * (residual_of(&b.h) - residual_of(&a.h));
                    // keep only edges whose interpolated residual could pass
                    if est <= 2.0 * residual_tol {
                        edges.push((*a, *b));
                    }
                }
            };
            if i + 1 < n1 {
                push(map.cell(i + 1, j));
            }
            if j + 1 < n2 {
                push(map.cell(i, j + 1));
            }
        }
    }

    let refine = |(a, b): &(CellResult, CellResult)| -> Option<SqueezePoint> {
        let at = |u: f64| {
            probe.cell(
                a.beta1 + u * (b.beta1 - a.beta1),
                a.beta2 + u * (b.beta2 - a.beta2),
            )
        };
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        let (mut flo, mut fhi) = (f(a), f(b));
        let mut best = *a;
        if flo != 0.0 {
            // Illinois variant of regula falsi
            let mut side = 0i8;
            for _ in 0..60 {
                let u = (lo * fhi - hi * flo) / (fhi - flo);
                let c = at(u);
                let fc = f(&c);
                best = c;
                if c.class == CellClass::Diverged || fc.abs() <= 1e-9 || (hi - lo) < 1e-14 {
                    break;
                }
                if fc * fhi < 0.0 {
                    lo = hi;
                    flo = fhi;
                    hi = u;
                    fhi = fc;
                    if side == -1 {
                        flo *= 0.5;
                    }
                    side = -1;
                } else {
                    hi = u;
                    fhi = fc;
                    flo *= 0.5;
                    side = 1;
                }
                if lo > hi {
                    std::mem::swap(&mut lo, &mut hi);
                    std::mem::swap(&mut flo, &mut fhi);
                }
            }
        }
        let lambda = best.h.h11;
        let residual = residual_of(&best.h);
        ((lambda - lambda_target).abs() <= SQUEEZE_LAMBDA_TOL
            && residual <= residual_tol
            && best.class != CellClass::Diverged)
            .then_some(SqueezePoint {
                beta1: best.beta1,
                beta2: best.beta2,
                lambda,
                residual,
                h: best.h,
            })
    };
    let mut points: Vec<SqueezePoint> = with_pool(map.options.workers, || {
        edges.par_iter().filter_map(refine).collect()
    })?;
    points.sort_by(|p, q| {
        p.residual
            .total_cmp(&q.residual)
            .then(p.beta1.total_cmp(&q.beta1))
            .then(p.beta2.total_cmp(&q.beta2))
    });
    if points.is_empty() {
        return Err(Error::EmptyResult(format!(
            "no cell reaches h11 = {lambda_target} with residual <= {residual_tol}"
        )));
    }
    Ok(points)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPoint {
    pub beta1: f64,
    pub beta2: f64,
    pub sigma: f64,
    pub class: CellClass,
    /// Distance from the query point in the amplitude plane.
    pub distance: f64,
}

/// Nearest point on the `|Σ| = 2` belt along the axis-parallel lines through
/// `(beta1, beta2)`, within `radius`.
pub fn refine_threshold(
    probe: &CellProbe,
    beta1: f64,
    beta2: f64,
    radius: f64,
) -> Result<ThresholdPoint> {
    if !(radius > 0.0) {
        return Err(Error::invalid("radius must be positive"));
    }
    let g = |c: &CellResult| c.sigma.abs() - 2.0;
    let samples = 41;
    let mut best: Option<ThresholdPoint> = None;
    for axis in 0..2 {
        let point = |s: f64| {
            if axis == 0 {
                (beta1 + s, beta2)
            } else {
                (beta1, beta2 + s)
            }
        };
        let offsets: Vec<f64> = (0..samples)
            .map(|i| -radius + 2.0 * radius * i as f64 / (samples - 1) as f64)
            .collect();
        let cells: Vec<CellResult> = offsets
            .iter()
            .map(|&s| {
                let (a, b) = point(s);
                probe.cell(a, b)
            })
            .collect();
        for k in 0..samples - 1 {
            let (ca, cb) = (&cells[k], &cells[k + 1]);
            if ca.class == CellClass::Diverged || cb.class == CellClass::Diverged {
                continue;
            }
            let (ga, gb) = (g(ca), g(cb));
            if ga * gb > 0.0 {
                continue;
            }
            let (mut lo, mut hi, mut glo) = (offsets[k], offsets[k + 1], ga);
            let mut c = *ca;
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                let (a, b) = point(mid);
                c = probe.cell(a, b);
                let gm = g(&c);
                if gm == 0.0 {
                    break;
                }
                if gm * glo > 0.0 {
                    lo = mid;
                    glo = gm;
                } else {
                    hi = mid;
                }
            }
            let distance = (c.beta1 - beta1).hypot(c.beta2 - beta2);
            if best.is_none_or(|b| distance < b.distance) {
                best = Some(ThresholdPoint {
                    beta1: c.beta1,
                    beta2: c.beta2,
                    sigma: c.sigma,
                    class: c.class,
                    distance,
                });
            }
        }
    }
    best.ok_or_else(|| {
        Error::EmptyResult(format!(
            "no threshold crossing within {radius} of ({beta1}, {beta2})"
        ))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FreeKind {
    Quickened,
    Delayed,
    Inverted,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreeEvolutionKind {
    pub kind: FreeKind,
    /// Effective free-evolution time; `None` when the matrix is not a shear.
    pub tau: Option<f64>,
}

/// Interprets a threshold matrix as an effective free evolution over `t_span`.
///
/// At `Σ ≈ 2` the map is the shear `[[1, τ], [0, 1]]`. At `Σ ≈ −2` it is
/// `−[[1, −h12], [0, 1]]`, whose square is a shear with `τ = −2 h12`; that
/// doubled span is compared against `2 t_span`.
pub fn threshold_kind(h: &TransferMatrix, eps_thr: f64, t_span: f64) -> Result<FreeEvolutionKind> {
    let sigma = h.sigma;
    if !((sigma.abs() - 2.0).abs() <= eps_thr) {
        return Err(Error::NotOnThreshold {
            sigma,
            eps: eps_thr,
        });
    }
    if h.h.h21.abs() > eps_thr {
        return Ok(FreeEvolutionKind {
            kind: FreeKind::None,
            tau: None,
        });
    }
    let span_kind = |tau: f64, span: f64| {
        if tau > span {
            FreeKind::Quickened
        } else if tau > 0.0 && tau < span {
            FreeKind::Delayed
        } else {
            FreeKind::None
        }
    };
    if sigma > 0.0 {
        let tau = h.h.h12;
        Ok(FreeEvolutionKind {
            kind: span_kind(tau, t_span),
            tau: Some(tau),
        })
    } else {
        let tau = -2.0 * h.h.h12;
        let kind = if h.h.h12 > 0.0 {
            FreeKind::Inverted
        } else {
            span_kind(tau, 2.0 * t_span)
        };
        Ok(FreeEvolutionKind {
            kind,
            tau: Some(tau),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::integrate_transfer;
    use approx::assert_abs_diff_eq;

    fn small_grid(n: usize) -> ScanGrid {
        // twenty periods around a strongly unstable cell, so some lanes overflow
        ScanGrid {
            beta1_range: [-11.0, -9.5],
            beta2_range: [-7.5, -6.0],
            n1: n,
            n2: n + 1,
            t_span: [0.0, 20.0],
            ..Default::default()
        }
    }

    #[test]
    fn classification_bands() {
        assert_eq!(classify(0.0, 1e-6), CellClass::Stable);
        assert_eq!(classify(2.0, 1e-6), CellClass::Threshold);
        assert_eq!(classify(-2.0 + 5e-7, 1e-6), CellClass::Threshold);
        assert_eq!(classify(4.0, 1e-6), CellClass::Unstable);
        assert_eq!(classify(-2.1, 1e-6), CellClass::Unstable);
    }

    #[test]
    fn grid_endpoints_are_exact() {
        let g = ScanGrid::default();
        assert_eq!(g.beta1(0), -15.0);
        assert_eq!(g.beta1(600), 15.0);
        assert_eq!(g.beta1(300), 0.0);
        assert!(ScanGrid { n1: 1, ..g }.validate().is_err());
        assert!(ScanGrid {
            beta1_range: [1.0, 1.0],
            ..g
        }
        .validate()
        .is_err());
    }

    #[test]
    fn lane_cells_match_scalar_integration_bitwise() {
        let grid = small_grid(5);
        let opts = ScanOptions {
            tol: ToleranceSpec::with_step(1e-3),
            ..Default::default()
        };
        let map = scan_strutt(&grid, &opts).unwrap();
        assert_eq!(map.cells.len(), 30);
        for c in &map.cells {
            match integrate_transfer(&grid.pulse(c.beta1, c.beta2), 0.0, 20.0, &opts.tol) {
                Ok(tm) => {
                    assert_eq!(tm.h, c.h, "({}, {})", c.beta1, c.beta2);
                    assert_eq!(tm.sigma, c.sigma);
                }
                Err(Error::NonFiniteState { .. }) => assert_eq!(c.class, CellClass::Diverged),
                Err(e) => panic!("{e}"),
            }
        }
        assert!(map.count(CellClass::Diverged) > 0);
        let d = map
            .cells
            .iter()
            .find(|c| c.class == CellClass::Diverged)
            .unwrap();
        assert_eq!(d.sigma.abs(), SATURATED_SIGMA);
    }

    #[test]
    fn zero_field_cell_is_a_unit_shear() {
        let grid = ScanGrid {
            n1: 3,
            n2: 3,
            ..Default::default()
        };
        let map = scan_strutt(&grid, &ScanOptions::default()).unwrap();
        let c = map.cell(1, 1);
        assert_eq!((c.beta1, c.beta2), (0.0, 0.0));
        assert_eq!(c.sigma, 2.0);
        assert_eq!(c.class, CellClass::Threshold);
        assert_abs_diff_eq!(c.h.h12, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn csv_rows_match_grid() {
        let grid = ScanGrid {
            n1: 3,
            n2: 3,
            ..Default::default()
        };
        let map = scan_strutt(
            &grid,
            &ScanOptions {
                tol: ToleranceSpec::with_step(1e-3),
                ..Default::default()
            },
        )
        .unwrap();
        let csv = map.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "beta1,beta2,sigma,h11,h12,h21,h22,class");
        assert_eq!(lines.len(), 10);
        let svg = map.to_svg(Some("a<b"));
        assert!(svg.starts_with("<svg") && svg.contains("a&lt;b"));
    }

    #[test]
    fn threshold_kinds() {
        let tm = |h: Mat2| TransferMatrix::from_mat2(h);
        let k = threshold_kind(&tm(Mat2::new(1.0, 3.0, 0.0, 1.0)), 1e-6, 1.0).unwrap();
        assert_eq!((k.kind, k.tau), (FreeKind::Quickened, Some(3.0)));
        let k = threshold_kind(&tm(Mat2::new(1.0, 0.5, 0.0, 1.0)), 1e-6, 1.0).unwrap();
        assert_eq!((k.kind, k.tau), (FreeKind::Delayed, Some(0.5)));
        let k = threshold_kind(&tm(Mat2::new(-1.0, 2.0, 0.0, -1.0)), 1e-6, 1.0).unwrap();
        assert_eq!((k.kind, k.tau), (FreeKind::Inverted, Some(-4.0)));
        let k = threshold_kind(&tm(Mat2::new(1.0, 0.0, 0.5, 1.0)), 1e-6, 1.0).unwrap();
        assert_eq!(k.kind, FreeKind::None);
        assert!(matches!(
            threshold_kind(&tm(Mat2::new(0.5, 0.0, 0.0, 2.0)), 1e-6, 1.0),
            Err(Error::NotOnThreshold { .. })
        ));
    }

    #[test]
    fn no_unit_squeeze_inside_a_stable_patch() {
        let grid = ScanGrid {
            beta1_range: [0.7, 0.9],
            beta2_range: [-10.1, -9.9],
            n1: 5,
            n2: 5,
            ..Default::default()
        };
        let opts = ScanOptions {
            tol: ToleranceSpec::with_step(1e-3),
            ..Default::default()
        };
        let map = scan_strutt(&grid, &opts).unwrap();
        assert_eq!(map.count(CellClass::Stable), 25);
        assert!(matches!(
            find_squeeze_points(&map, 1.0, 1e-2),
            Err(Error::EmptyResult(_))
        ));
    }
}
