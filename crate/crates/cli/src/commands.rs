use std::f64::consts::{FRAC_PI_2, PI};
use std::path::Path;

use fuzzyloop::field::{format_scaling_table, FieldProfile};
use fuzzyloop::protocol::protocol_peak;
use fuzzyloop::*;
use serde::Serialize;
use serde_json::json;
use std::result::Result;

use crate::config::{
    self, parse_charge, parse_force, state, Format, PerturbConfig, PulseConfig, RunConfig,
    StageConfig, TrajectoryConfig,
};
use crate::output::{polyline_svg, Failure, Metadata, Writer};

fn writer(cfg: &RunConfig) -> Result<Writer, Failure> {
    Writer::new(cfg.out_dir.as_deref().unwrap_or(Path::new(".")))
}

fn report_written(w: &Writer) {
    for p in &w.written {
        println!("wrote {}", p.display());
    }
}

fn emit_trajectory(
    w: &mut Writer,
    stem: &str,
    rec: &TrajectoryRecord,
    format: Format,
    meta: &Metadata,
) -> anyhow::Result<()> {
    match format {
        Format::Csv => w.csv(stem, &rec.to_csv(), meta),
        Format::Json => w.json(stem, "trajectory", rec, meta),
        Format::Svg => {
            let pts: Vec<(f64, f64)> = rec.x.iter().copied().zip(rec.y.iter().copied()).collect();
            w.write(&format!("{stem}.svg"), &polyline_svg(&pts, "x", "y", meta)?)?;
            Ok(())
        }
    }
}

pub fn strutt(cfg: &RunConfig) -> anyhow::Result<()> {
    let s = &cfg.strutt;
    let grid = s.grid();
    let opts = ScanOptions {
        tol: cfg.tolerance(),
        eps_thr: s.eps_thr,
        workers: cfg.workers,
    };
    let map = scan_strutt(&grid, &opts)?;
    let meta = Metadata::new("strutt", cfg)?;
    let mut w = writer(cfg)?;
    match cfg.format {
        None => {
            w.csv("strutt", &map.to_csv(), &meta)?;
            w.write(
                "strutt.svg",
                &map.to_svg(Some(&serde_json::to_string(&meta)?)),
            )?;
        }
        Some(Format::Csv) => w.csv("strutt", &map.to_csv(), &meta)?,
        Some(Format::Json) => w.json("strutt", "map", &map, &meta)?,
        Some(Format::Svg) => w.write(
            "strutt.svg",
            &map.to_svg(Some(&serde_json::to_string(&meta)?)),
        )?,
    }
    println!(
        "cells: stable {}, threshold {}, unstable {}, diverged {}",
        map.count(CellClass::Stable),
        map.count(CellClass::Threshold),
        map.count(CellClass::Unstable),
        map.count(CellClass::Diverged)
    );
    if let Some(lambda) = s.find_squeeze {
        let points = match find_squeeze_points(&map, lambda, s.squeeze_residual) {
            Ok(p) => p,
            Err(Error::EmptyResult(msg)) => {
                eprintln!("note: {msg}");
                Vec::new()
            }
            Err(e) => return Err(e.into()),
        };
        println!("squeeze points for lambda = {lambda}: {}", points.len());
        if let Some(best) = points.first() {
            println!(
                "  best ({:.5}, {:.5}) residual {:.3e}",
                best.beta1, best.beta2, best.residual
            );
        }
        w.json("squeeze", "squeeze_points", &points, &meta)?;
    }
    report_written(&w);
    Ok(())
}

pub fn trajectory_preset(t: &mut TrajectoryConfig, name: &str) -> Result<(), Failure> {
    let design = |b, c| PulseConfig::Design {
        b,
        c,
        rotation: config::Rotation::None,
    };
    let (pulse, q0, span, force) = match name {
        "closed-loop" => (
            PulseConfig::strutt(PI / 4.0, -10.0),
            [10.0, -5.0, -20.0, 20.0],
            [0.0, 6.0],
            "none",
        ),
        "fragment" => (
            PulseConfig::strutt(-593.0 / 50.0, -0.4),
            [0.0, -5.0, 0.0, 20.0],
            [0.0, 2.0],
            "none",
        ),
        "design-loop" => (
            design(2.0, -5.0),
            [0.0, 10.0, 0.0, 5.0],
            [-FRAC_PI_2, 52.0 - FRAC_PI_2],
            "none",
        ),
        "forced-loop" => (
            design(1.5, -7.0),
            [1.0, -30.0, -1.0, 30.0],
            [-FRAC_PI_2, 39.0 - FRAC_PI_2],
            "const:0.5",
        ),
        _ => {
            return Err(Failure::Usage(format!(
                "unknown trajectory preset '{name}'"
            )))
        }
    };
    t.pulse = pulse;
    t.q0 = q0;
    t.t_span = span;
    t.force = force.into();
    Ok(())
}

pub fn trajectory(cfg: &RunConfig) -> anyhow::Result<()> {
    let t = &cfg.trajectory;
    let [t0, t1] = t.t_span;
    if t1.partial_cmp(&t0) != Some(std::cmp::Ordering::Greater) {
        return Err(Failure::Usage(format!("empty time span [{t0}, {t1}]")).into());
    }
    if t.samples < 2 {
        return Err(Failure::Usage("need at least two samples".into()).into());
    }
    let pulse = t.pulse.build()?;
    let force = parse_force(&t.force)?;
    let q0 = state(t.q0);
    let rec = propagate_trajectory(
        &pulse,
        q0,
        t0,
        t1,
        t.samples,
        force.as_ref(),
        &cfg.tolerance(),
    )?;
    let qf = rec.final_state();
    println!(
        "final state (x, px, y, py) = ({:.6}, {:.6}, {:.6}, {:.6})",
        qf.x, qf.px, qf.y, qf.py
    );
    println!(
        "endpoint-to-start distance: position {:.6e}, phase space {:.6e}",
        (qf.x - q0.x).hypot(qf.y - q0.y),
        qf.distance(&q0)
    );
    println!("max |Lz - Lz(0)| = {:.3e}", rec.max_lz_deviation());
    let meta = Metadata::new("trajectory", cfg)?;
    let mut w = writer(cfg)?;
    emit_trajectory(
        &mut w,
        "trajectory",
        &rec,
        cfg.format.unwrap_or(Format::Csv),
        &meta,
    )?;
    report_written(&w);
    Ok(())
}

pub fn design(cfg: &RunConfig) -> anyhow::Result<()> {
    let d = &cfg.design;
    let pulse = ExactPulse::from_parameters(d.b, d.c)?;
    let validity = validate_design(&pulse, d.check_points)?;
    let samples = pulse.sample(d.samples.max(2))?;
    let format = cfg.format.unwrap_or(Format::Csv);
    let meta = Metadata::new("design", cfg)?;
    let mut doc = json!({
        "b": pulse.theta.b,
        "c": pulse.theta.c,
        "a": pulse.theta.a,
        "interval": pulse.interval,
        "constraint_residual": pulse.theta.residual(),
        "validity": validity,
    });
    if format == Format::Json {
        doc["samples"] = json!(samples);
    }
    let mut w = writer(cfg)?;
    w.json("design", "design", &doc, &meta)?;
    match format {
        Format::Csv => {
            let mut csv = String::from("t,beta\n");
            for (t, b) in &samples {
                csv += &format!("{t},{b}\n");
            }
            w.csv("design_beta", &csv, &meta)?;
        }
        Format::Svg => w.write(
            "design_beta.svg",
            &polyline_svg(&samples, "t", "beta", &meta)?,
        )?,
        Format::Json => {}
    }
    println!(
        "a = [{:.10}, {:.10}, {:.10}, {:.10}]",
        pulse.theta.a[0], pulse.theta.a[1], pulse.theta.a[2], pulse.theta.a[3]
    );
    println!(
        "sign profile {:?}, regime {:?}, beta in [{:.6}, {:.6}], valid {}",
        validity.sign_profile,
        validity.regime,
        validity.min_beta,
        validity.max_abs_beta,
        validity.valid
    );
    if let Some(name) = &d.protocol {
        if name != "two-pulse" {
            return Err(Failure::Usage(format!("unknown protocol '{name}'")).into());
        }
        let pc = config::ProtocolConfig::default();
        let report = protocol_report(
            cfg,
            &pc.stages,
            false,
            pc.q0,
            None,
            pc.samples_per_stage,
            pc.clock_start,
        )?;
        print_factors(&report.0);
        w.json("design_protocol", "protocol", &report.0, &meta)?;
    }
    report_written(&w);
    Ok(())
}

#[derive(Serialize)]
struct ProtocolReport {
    stages: Vec<StageConfig>,
    reversed: bool,
    q0: PhaseVector,
    final_state: PhaseVector,
    return_distance: f64,
    factors: protocol::SqueezeFactors,
    composed: Mat4,
    stage_matrices: Vec<TransferMatrix>,
}

fn build_stages(stages: &[StageConfig], reverse: bool) -> anyhow::Result<Vec<Stage>> {
    let mut out = stages
        .iter()
        .map(|s| s.build())
        .collect::<Result<Vec<_>, _>>()?;
    if reverse {
        let back = reversed(&out);
        out.extend(back);
    }
    Ok(out)
}

fn protocol_report(
    cfg: &RunConfig,
    stages: &[StageConfig],
    reverse: bool,
    q0: [f64; 4],
    force: Option<&ForceSpec>,
    samples_per_stage: usize,
    clock_start: f64,
) -> anyhow::Result<(ProtocolReport, ProtocolResult)> {
    let built = build_stages(stages, reverse)?;
    let opts = ProtocolOptions {
        tol: cfg.tolerance(),
        samples_per_stage,
        clock_start,
    };
    let q0 = state(q0);
    let run = run_protocol(&built, q0, force, &opts)?;
    let report = ProtocolReport {
        stages: stages.to_vec(),
        reversed: reverse,
        q0,
        final_state: run.final_state,
        return_distance: run.final_state.distance(&q0),
        factors: run.factors,
        composed: run.composed,
        stage_matrices: run.stage_matrices.clone(),
    };
    Ok((report, run))
}

fn print_factors(r: &ProtocolReport) {
    let f = &r.factors;
    println!(
        "lambda_x = u11 = {:.6}, lambda_y = u33 = {:.6}, off-diagonal max {:.3e}",
        f.lambda_x, f.lambda_y, f.offdiag_residual
    );
    let q = r.final_state;
    println!(
        "final state (x, px, y, py) = ({:.6}, {:.6}, {:.6}, {:.6}); |q - q0| = {:.3e}",
        q.x, q.px, q.y, q.py, r.return_distance
    );
}

pub fn protocol(cfg: &RunConfig) -> anyhow::Result<()> {
    let p = &cfg.protocol;
    if p.stages.is_empty() {
        return Err(Failure::Usage("protocol needs at least one stage".into()).into());
    }
    let (report, run) = protocol_report(
        cfg,
        &p.stages,
        p.reverse,
        p.q0,
        None,
        p.samples_per_stage,
        p.clock_start,
    )?;
    print_factors(&report);
    let meta = Metadata::new("protocol", cfg)?;
    let mut w = writer(cfg)?;
    w.json("protocol", "protocol", &report, &meta)?;
    emit_trajectory(
        &mut w,
        "protocol_trajectory",
        &run.trajectory,
        cfg.format.unwrap_or(Format::Csv),
        &meta,
    )?;
    report_written(&w);
    Ok(())
}

pub fn perturb_preset(p: &mut PerturbConfig, name: &str) -> Result<(), Failure> {
    match name {
        "two-pulse-sin" => *p = PerturbConfig::default(),
        "forced-loop" => {
            let stage = StageConfig {
                b: 1.5,
                c: -7.0,
                rotation: config::Rotation::None,
                duration: None,
            };
            *p = PerturbConfig {
                q0: [1.0, -30.0, -1.0, 30.0],
                force: "const:0.5".into(),
                reverse: false,
                stages: vec![stage; 13],
                ..PerturbConfig::default()
            };
        }
        _ => {
            return Err(Failure::Usage(format!(
                "unknown perturbation preset '{name}'"
            )))
        }
    }
    Ok(())
}

pub fn perturb(cfg: &RunConfig) -> anyhow::Result<()> {
    let p = &cfg.perturb;
    if p.stages.is_empty() {
        return Err(Failure::Usage("protocol needs at least one stage".into()).into());
    }
    let force =
        parse_force(&p.force)?.ok_or_else(|| Failure::Usage("perturb needs a force".into()))?;
    let (report, run) = protocol_report(
        cfg,
        &p.stages,
        p.reverse,
        p.q0,
        Some(&force),
        p.samples_per_stage,
        p.clock_start,
    )?;
    let built = build_stages(&p.stages, p.reverse)?;
    let drift = perturb::drift_report(&built, &run)?;
    let opts = ProtocolOptions {
        tol: cfg.tolerance(),
        samples_per_stage: p.samples_per_stage,
        clock_start: p.clock_start,
    };
    let forced = forced_squeeze_factors(&built, state(p.q0), &force, &opts)?;
    print_factors(&report);
    println!(
        "centre drift ({:.6e}, {:.6e}), cosine to force {}, transversal {}",
        drift.drift.0,
        drift.drift.1,
        drift
            .transversality
            .map_or("n/a".to_string(), |c| format!("{c:.4}")),
        drift.transversal
    );
    println!(
        "forced offset (x, px, y, py) = ({:.6}, {:.6}, {:.6}, {:.6})",
        forced.offset.x, forced.offset.px, forced.offset.y, forced.offset.py
    );
    let meta = Metadata::new("perturb", cfg)?;
    let mut w = writer(cfg)?;
    let doc =
        json!({ "force": force, "protocol": report, "drift": drift, "forced_factors": forced });
    w.json("perturb", "perturbation", &doc, &meta)?;
    emit_trajectory(
        &mut w,
        "perturb_trajectory",
        &run.trajectory,
        cfg.format.unwrap_or(Format::Csv),
        &meta,
    )?;
    report_written(&w);
    Ok(())
}

pub fn units(cfg: &RunConfig) -> anyhow::Result<()> {
    let u = &cfg.units;
    let consts = PhysicalConstants::particle(&u.particle)?;
    let beta_max = match u.beta_max {
        Some(b) => b,
        None => {
            let stages = build_stages(&config::squeeze_stages(), false)?;
            protocol_peak(&stages, 2001)?.physical_amplitude()
        }
    };
    let rows =
        u.t.iter()
            .map(|&t| lab_scaling(t, &consts, beta_max))
            .collect::<Result<Vec<_>, _>>()?;
    println!("{} (beta_max = {beta_max:.6})", u.particle);
    print!("{}", format_scaling_table(&rows));

    let cylinder = match &u.cylinder {
        Some((radius, omega, charge)) => {
            let b = rotating_cylinder_field(*radius, *omega, parse_charge(charge)?, consts.c)?;
            println!("rotating cylinder: B = {b:.6} G");
            Some(
                json!({ "radius": radius, "omega": omega, "charge_esu": parse_charge(charge)?, "field_gauss": b }),
            )
        }
        None => None,
    };

    let corrections = match u.corrections {
        Some(n) => {
            let coefficients: Vec<_> = (0..=n)
                .map(|k| {
                    let c = correction_coefficient(k);
                    println!("coefficient n={k}: {c}");
                    json!({ "n": k, "exact": c.to_string() })
                })
                .collect();
            if n >= 2 {
                println!("note: the n=2 coefficient is 1/192; the value 1/24 that also circulates does not satisfy the wave-equation recurrence");
            }
            let series = field_with_corrections(
                &FieldProfile::unit_sine(1.0),
                u.correction_radius,
                u.correction_period,
                n as usize + 1,
                &consts,
            )?;
            for t in &series.terms {
                println!(
                    "  term n={} magnitude {:.4e} (r = {} cm, T = {} s, unit sine)",
                    t.n, t.magnitude, u.correction_radius, u.correction_period
                );
            }
            println!(
                "  wave residual {:.4e}, next term {:.4e}, ok {}",
                series.wave_residual, series.next_term, series.residual_ok
            );
            Some(json!({ "coefficients": coefficients, "series": series }))
        }
        None => None,
    };

    let meta = Metadata::new("units", cfg)?;
    let mut w = writer(cfg)?;
    let doc = json!({ "particle": u.particle, "beta_max": beta_max, "rows": rows, "cylinder": cylinder, "corrections": corrections });
    w.json("units", "units", &doc, &meta)?;
    if cfg.format == Some(Format::Csv) {
        let mut csv = String::from("t,q,p,v,b_max,radiative_ratio\n");
        for r in &rows {
            csv += &format!(
                "{},{},{},{},{},{}\n",
                r.t, r.q, r.p, r.v, r.b_max, r.radiative_ratio
            );
        }
        w.csv("units", &csv, &meta)?;
    }
    report_written(&w);
    Ok(())
}
