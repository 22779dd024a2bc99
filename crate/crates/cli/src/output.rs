use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

/// Failures that carry their own exit code.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(msg) => write!(f, "{msg}"),
            Failure::Io { path, source } => write!(f, "{}: {source}", path.display()),
        }
    }
}

impl std::error::Error for Failure {}

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(f) = cause.downcast_ref::<Failure>() {
            return match f {
                Failure::Usage(_) => EXIT_USAGE,
                Failure::Io { .. } => EXIT_IO,
            };
        }
        if let Some(e) = cause.downcast_ref::<fuzzyloop::Error>() {
            return match e {
                fuzzyloop::Error::NonFiniteState { .. } | fuzzyloop::Error::SingularSystem => {
                    EXIT_NUMERIC
                }
                _ => EXIT_USAGE,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return EXIT_IO;
        }
    }
    EXIT_USAGE
}

#[derive(Debug, Clone, Serialize)]
pub struct Tolerances {
    pub step: f64,
    pub monitor: bool,
    pub overflow_guard: f64,
    pub eps_thr: f64,
}

/// Provenance block attached to every output.
#[derive(Debug, Clone, Serialize)]
pub struct Metadata {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub config_sha256: String,
    pub tolerances: Tolerances,
    pub config: RunConfig,
}

impl Metadata {
    pub fn new(command: &'static str, cfg: &RunConfig) -> anyhow::Result<Self> {
        let config = cfg.fingerprint();
        let canonical = serde_json::to_string(&config)?;
        let digest = Sha256::digest(canonical.as_bytes());
        Ok(Metadata {
            tool: "fuzzyloop",
            version: env!("CARGO_PKG_VERSION"),
            command,
            config_sha256: format!("{digest:x}"),
            tolerances: Tolerances {
                step: cfg.step,
                monitor: cfg.monitor,
                overflow_guard: fuzzyloop::dynamics::OVERFLOW_GUARD,
                eps_thr: cfg.strutt.eps_thr,
            },
            config,
        })
    }

    pub fn to_json(&self) -> anyhow::Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub struct Writer {
    dir: PathBuf,
    pub written: Vec<PathBuf>,
}

impl Writer {
    pub fn new(dir: &Path) -> Result<Self, Failure> {
        fs::create_dir_all(dir).map_err(|source| Failure::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        Ok(Writer {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<(), Failure> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|source| Failure::Io {
            path: path.clone(),
            source,
        })?;
        self.written.push(path);
        Ok(())
    }

    /// CSV body plus a `<stem>.meta.json` sidecar.
    pub fn csv(&mut self, stem: &str, body: &str, meta: &Metadata) -> anyhow::Result<()> {
        self.write(&format!("{stem}.csv"), body)?;
        self.write(&format!("{stem}.meta.json"), &(meta.to_json()? + "\n"))?;
        Ok(())
    }

    /// `{"metadata": …, key: value}` as pretty JSON.
    pub fn json<T: Serialize>(
        &mut self,
        stem: &str,
        key: &str,
        value: &T,
        meta: &Metadata,
    ) -> anyhow::Result<()> {
        let mut doc = serde_json::Map::new();
        doc.insert("metadata".into(), serde_json::to_value(meta)?);
        doc.insert(key.into(), serde_json::to_value(value)?);
        self.write(
            &format!("{stem}.json"),
            &(serde_json::to_string_pretty(&doc)? + "\n"),
        )?;
        Ok(())
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Minimal line plot: framed axes, one polyline, start and end markers.
pub fn polyline_svg(
    points: &[(f64, f64)],
    xlabel: &str,
    ylabel: &str,
    meta: &Metadata,
) -> anyhow::Result<String> {
    let (w, h, m) = (600.0, 600.0, 50.0);
    let finite: Vec<(f64, f64)> = points
        .iter()
        .copied()
        .filter(|p| p.0.is_finite() && p.1.is_finite())
        .collect();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, y) in &finite {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if finite.is_empty() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    let span = |a: f64, b: f64| if b > a { b - a } else { 1.0 };
    let (sx, sy) = (w / span(x0, x1), h / span(y0, y1));
    let px = |x: f64| m + (x - x0) * sx;
    let py = |y: f64| m + h - (y - y0) * sy;
    let mut s = String::new();
    s += &format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" viewBox=\"0 0 {0} {1}\">\n",
        w + 2.0 * m,
        h + 2.0 * m
    );
    s += &format!(
        "<metadata>{}</metadata>\n",
        escape(&serde_json::to_string(meta)?)
    );
    s += &format!("<rect x=\"{m}\" y=\"{m}\" width=\"{w}\" height=\"{h}\" fill=\"none\" stroke=\"#000000\"/>\n");
    let path: Vec<String> = finite
        .iter()
        .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
        .collect();
    s += &format!(
        "<polyline fill=\"none\" stroke=\"#08519c\" stroke-width=\"1\" points=\"{}\"/>\n",
        path.join(" ")
    );
    if let (Some(a), Some(b)) = (finite.first(), finite.last()) {
        s += &format!(
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"#31a354\"/>\n",
            px(a.0),
            py(a.1)
        );
        s += &format!(
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"#e6550d\"/>\n",
            px(b.0),
            py(b.1)
        );
    }
    s += &format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\">{} [{x0:.4}, {x1:.4}]</text>\n",
        m + w / 2.0,
        h + m + 30.0,
        escape(xlabel)
    );
    s += &format!(
        "<text x=\"14\" y=\"{0}\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 14 {0})\">{1} [{y0:.4}, {y1:.4}]</text>\n",
        m + h / 2.0,
        escape(ylabel)
    );
    s += "</svg>\n";
    Ok(s)
}
