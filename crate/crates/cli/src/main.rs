use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

mod commands;
mod config;
mod output;

use config::{Format, PulseConfig, Rotation, RunConfig};
use output::Failure;

#[derive(Parser, Debug)]
#[command(
    name = "fuzzyloop",
    version,
    about = "Charged-particle dynamics in time-dependent magnetic fields"
)]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (default: current directory).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// RK4 step.
    #[arg(long, global = true)]
    step: Option<f64>,
    /// Worker threads for scans (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Stability map over biharmonic amplitudes.
    Strutt(StruttArgs),
    /// Sampled phase-space trajectory under one pulse.
    Trajectory(TrajectoryArgs),
    /// Pulse design from endpoint constraints.
    Design(DesignArgs),
    /// Multi-stage protocol and its squeezing factors.
    Protocol(ProtocolArgs),
    /// Forced protocol and guiding-centre drift.
    Perturb(PerturbArgs),
    /// Laboratory units, field corrections and the rotating-cylinder estimate.
    Units(UnitsArgs),
}

#[derive(Args, Debug)]
struct StruttArgs {
    /// Grid size as N1xN2.
    #[arg(long)]
    grid: Option<String>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    beta1_range: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    beta2_range: Option<Vec<f64>>,
    #[arg(long)]
    eps_thr: Option<f64>,
    /// Search the map for pure squeezes with h11 equal to this value.
    #[arg(long, allow_hyphen_values = true)]
    find_squeeze: Option<f64>,
    /// Largest accepted |h12| + |h21| for squeeze points.
    #[arg(long)]
    squeeze_residual: Option<f64>,
}

#[derive(Args, Debug)]
struct TrajectoryArgs {
    /// closed-loop, fragment, design-loop or forced-loop.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    beta1: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    beta2: Option<f64>,
    /// Designed pulse endpoint value (with --c).
    #[arg(long, allow_hyphen_values = true)]
    b: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    c: Option<f64>,
    #[arg(long, value_enum)]
    rotation: Option<Rotation>,
    /// Initial state x,px,y,py.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    q0: Option<Vec<f64>>,
    #[arg(long, allow_hyphen_values = true)]
    t0: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    t1: Option<f64>,
    #[arg(long)]
    samples: Option<usize>,
    /// none, const:F, sin:F or sin:F:omega.
    #[arg(long)]
    force: Option<String>,
}

#[derive(Args, Debug)]
struct DesignArgs {
    #[arg(long, allow_hyphen_values = true)]
    b: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    c: Option<f64>,
    #[arg(long)]
    samples: Option<usize>,
    /// Also run a protocol (two-pulse).
    #[arg(long)]
    protocol: Option<String>,
}

#[derive(Args, Debug)]
struct ProtocolArgs {
    /// two-pulse (default stages).
    #[arg(long)]
    preset: Option<String>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    q0: Option<Vec<f64>>,
    /// Append the stages in reverse order.
    #[arg(long)]
    reverse: bool,
    #[arg(long, value_enum)]
    rotation: Option<Rotation>,
}

#[derive(Args, Debug)]
struct PerturbArgs {
    /// two-pulse-sin (squeeze, reverse, sin force) or forced-loop (loop under a constant force).
    #[arg(long)]
    preset: Option<String>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    q0: Option<Vec<f64>>,
    #[arg(long)]
    force: Option<String>,
    #[arg(long)]
    no_reverse: bool,
}

#[derive(Args, Debug)]
struct UnitsArgs {
    /// Operation times in seconds.
    #[arg(long = "T", value_delimiter = ',')]
    t: Option<Vec<f64>>,
    #[arg(long)]
    particle: Option<String>,
    #[arg(long)]
    beta_max: Option<f64>,
    /// Rotating cylinder: RADIUS_CM OMEGA CHARGE (charge in esu, or e.g. 1C).
    #[arg(long, num_args = 3, value_names = ["RADIUS", "OMEGA", "CHARGE"])]
    cylinder: Option<Vec<String>>,
    /// Field-correction terms, as N or n=N.
    #[arg(long)]
    corrections: Option<String>,
}

fn vec4(v: &[f64]) -> Result<[f64; 4], Failure> {
    v.try_into().map_err(|_| {
        Failure::Usage(format!(
            "expected 4 comma-separated values, got {}",
            v.len()
        ))
    })
}

fn pair(v: &[f64]) -> Result<[f64; 2], Failure> {
    v.try_into().map_err(|_| {
        Failure::Usage(format!(
            "expected 2 comma-separated values, got {}",
            v.len()
        ))
    })
}

fn load(cli: &Cli) -> anyhow::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| Failure::Io {
                path: path.clone(),
                source,
            })?;
            RunConfig::from_toml(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(s) = cli.step {
        cfg.step = s;
    }
    if cli.workers.is_some() {
        cfg.workers = cli.workers;
    }
    if cli.format.is_some() {
        cfg.format = cli.format;
    }
    if cli.out_dir.is_some() {
        cfg.out_dir = cli.out_dir.clone();
    }
    match &cli.command {
        Command::Strutt(a) => {
            let s = &mut cfg.strutt;
            if let Some(g) = &a.grid {
                s.grid = parse_grid(g)?;
            }
            if let Some(r) = &a.beta1_range {
                s.beta1_range = pair(r)?;
            }
            if let Some(r) = &a.beta2_range {
                s.beta2_range = pair(r)?;
            }
            if let Some(e) = a.eps_thr {
                s.eps_thr = e;
            }
            if a.find_squeeze.is_some() {
                s.find_squeeze = a.find_squeeze;
            }
            if let Some(r) = a.squeeze_residual {
                s.squeeze_residual = r;
            }
        }
        Command::Trajectory(a) => {
            let t = &mut cfg.trajectory;
            if let Some(p) = &a.preset {
                commands::trajectory_preset(t, p)?;
            }
            if a.beta1.is_some() || a.beta2.is_some() {
                let (b1, b2) = match t.pulse {
                    PulseConfig::Biharmonic { beta1, beta2, .. } => (beta1, beta2),
                    _ => (0.0, 0.0),
                };
                t.pulse = PulseConfig::strutt(a.beta1.unwrap_or(b1), a.beta2.unwrap_or(b2));
            }
            if a.b.is_some() || a.c.is_some() || a.rotation.is_some() {
                let (b0, c0, r0) = match t.pulse {
                    PulseConfig::Design { b, c, rotation } => (b, c, rotation),
                    _ => (2.0, -3.0, Rotation::None),
                };
                t.pulse = PulseConfig::Design {
                    b: a.b.unwrap_or(b0),
                    c: a.c.unwrap_or(c0),
                    rotation: a.rotation.unwrap_or(r0),
                };
            }
            if let Some(q) = &a.q0 {
                t.q0 = vec4(q)?;
            }
            if let Some(v) = a.t0 {
                t.t_span[0] = v;
            }
            if let Some(v) = a.t1 {
                t.t_span[1] = v;
            }
            if let Some(n) = a.samples {
                t.samples = n;
            }
            if let Some(f) = &a.force {
                t.force = f.clone();
            }
        }
        Command::Design(a) => {
            let d = &mut cfg.design;
            if let Some(b) = a.b {
                d.b = b;
            }
            if let Some(c) = a.c {
                d.c = c;
            }
            if let Some(n) = a.samples {
                d.samples = n;
            }
            if a.protocol.is_some() {
                d.protocol = a.protocol.clone();
            }
        }
        Command::Protocol(a) => {
            let p = &mut cfg.protocol;
            if let Some(name) = &a.preset {
                if name != "two-pulse" {
                    return Err(Failure::Usage(format!("unknown protocol preset '{name}'")).into());
                }
                p.stages = config::squeeze_stages();
            }
            if let Some(q) = &a.q0 {
                p.q0 = vec4(q)?;
            }
            if a.reverse {
                p.reverse = true;
            }
            if let Some(r) = a.rotation {
                p.stages.iter_mut().for_each(|s| s.rotation = r);
            }
        }
        Command::Perturb(a) => {
            if let Some(name) = &a.preset {
                commands::perturb_preset(&mut cfg.perturb, name)?;
            }
            let p = &mut cfg.perturb;
            if let Some(q) = &a.q0 {
                p.q0 = vec4(q)?;
            }
            if let Some(f) = &a.force {
                p.force = f.clone();
            }
            if a.no_reverse {
                p.reverse = false;
            }
        }
        Command::Units(a) => {
            let u = &mut cfg.units;
            if let Some(t) = &a.t {
                u.t = t.clone();
            }
            if let Some(p) = &a.particle {
                u.particle = p.clone();
            }
            if a.beta_max.is_some() {
                u.beta_max = a.beta_max;
            }
            if let Some(c) = &a.cylinder {
                let num = |s: &str| {
                    s.parse::<f64>()
                        .map_err(|_| Failure::Usage(format!("cylinder: '{s}' is not a number")))
                };
                u.cylinder = Some((num(&c[0])?, num(&c[1])?, c[2].clone()));
            }
            if let Some(n) = &a.corrections {
                let digits = n.trim().trim_start_matches("n=");
                u.corrections = Some(digits.parse().map_err(|_| {
                    Failure::Usage(format!("corrections: '{n}' is not a term count"))
                })?);
            }
        }
    }
    Ok(cfg)
}

fn parse_grid(s: &str) -> Result<[usize; 2], Failure> {
    let bad = || Failure::Usage(format!("grid '{s}': expected N1xN2"));
    let (a, b) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    Ok([
        a.trim().parse().map_err(|_| bad())?,
        b.trim().parse().map_err(|_| bad())?,
    ])
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = load(&cli).context("configuration")?;
    if !(cfg.step > 0.0 && cfg.step.is_finite()) {
        return Err(Failure::Usage("step must be positive".into()).into());
    }
    if cfg.workers == Some(0) {
        return Err(Failure::Usage("workers must be at least 1".into()).into());
    }
    let name = match cli.command {
        Command::Strutt(_) => commands::strutt(&cfg).map(|_| "strutt"),
        Command::Trajectory(_) => commands::trajectory(&cfg).map(|_| "trajectory"),
        Command::Design(_) => commands::design(&cfg).map(|_| "design"),
        Command::Protocol(_) => commands::protocol(&cfg).map(|_| "protocol"),
        Command::Perturb(_) => commands::perturb(&cfg).map(|_| "perturb"),
        Command::Units(_) => commands::units(&cfg).map(|_| "units"),
    }?;
    // the effective settings, reusable as --config for an identical rerun
    let dir = cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    let mut w = output::Writer::new(&dir)?;
    w.write(
        &format!("{name}.config.toml"),
        &cfg.fingerprint().to_toml()?,
    )?;
    println!("wrote {}", w.written[0].display());
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(output::exit_code(&err));
    }
}
