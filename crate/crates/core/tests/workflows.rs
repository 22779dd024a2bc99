use std::f64::consts::{FRAC_PI_2, PI};

use fuzzyloop::*;

#[test]
fn design_json_has_the_documented_shape() {
    let design = ExactPulse::from_parameters(2.0, -3.0).unwrap();
    let v: serde_json::Value = serde_json::to_value(design).unwrap();
    assert_eq!(v["theta"]["b"], 2.0);
    assert_eq!(v["interval"][0], -FRAC_PI_2);
    assert_eq!(v["interval"][1], FRAC_PI_2);
    let back: ExactPulse = serde_json::from_value(v).unwrap();
    assert_eq!(back, design);
}

#[test]
fn designed_pulse_squeezes_position_by_b() {
    // Over its own interval the design maps x to 0·x + b·p, p to −x/b.
    let design = ExactPulse::from_parameters(1.8, -3.5).unwrap();
    let h = integrate_transfer(
        &design.to_pulse(),
        -FRAC_PI_2,
        FRAC_PI_2,
        &ToleranceSpec::default(),
    )
    .unwrap();
    assert!(h.h.max_abs_diff(&Mat2::new(0.0, 1.8, -1.0 / 1.8, 0.0)) < 1e-9);
}

#[test]
fn odd_pulses_allow_no_pure_squeeze_off_unity() {
    // β(1 − t) = −β(t), so k = β² is even about t = 1/2 and h11 = h22 in every
    // cell; a diagonal unimodular h then needs h11 = ±1.
    let grid = ScanGrid {
        n1: 121,
        n2: 121,
        ..ScanGrid::default()
    };
    let map = scan_strutt(&grid, &ScanOptions::default()).unwrap();
    for c in map.cells.iter().filter(|c| c.class != CellClass::Diverged) {
        assert!(
            (c.h.h11 - c.h.h22).abs() <= 1e-8 * c.h.max_abs().max(1.0),
            "{c:?}"
        );
    }
    for lambda in [2.0, 4.0] {
        assert!(matches!(
            find_squeeze_points(&map, lambda, 1e-2),
            Err(Error::EmptyResult(_))
        ));
    }
    // a loose residual finds the nearest non-pure candidates instead
    let loose = find_squeeze_points(&map, 2.0, 10.0).unwrap();
    assert!(loose.iter().all(|p| (p.lambda - 2.0).abs() <= 1e-3));
    assert!(loose.windows(2).all(|w| w[0].residual <= w[1].residual));
    let patch = ScanGrid {
        beta1_range: [-1.0, 1.0],
        beta2_range: [-1.0, 1.0],
        n1: 9,
        n2: 9,
        ..ScanGrid::default()
    };
    let small = scan_strutt(&patch, &ScanOptions::default()).unwrap();
    assert!(matches!(
        find_squeeze_points(&small, 1.0, 1e-3),
        Err(Error::EmptyResult(_))
    ));
}

#[test]
fn separatrix_lies_between_classes() {
    let grid = ScanGrid {
        n1: 61,
        n2: 61,
        ..ScanGrid::default()
    };
    let map = scan_strutt(&grid, &ScanOptions::default()).unwrap();
    let belt = map.separatrix();
    assert!(!belt.is_empty());
    let probe = CellProbe::new(&grid, &ScanOptions::default()).unwrap();
    let (b1, b2) = belt[belt.len() / 2];
    let t = refine_threshold(&probe, b1, b2, 2.0 * grid.spacing().0).unwrap();
    assert!((t.sigma.abs() - 2.0).abs() < 1e-9);
}

#[test]
fn trajectory_records_round_trip_through_json() {
    let pulse = Pulse::strutt(PI / 4.0, -10.0);
    let rec = propagate_trajectory(
        &pulse,
        PhaseVector::new(1.0, 0.0, 0.0, 1.0),
        0.0,
        1.0,
        11,
        None,
        &ToleranceSpec::default(),
    )
    .unwrap();
    let json = rec.to_json().unwrap();
    let back: TrajectoryRecord = serde_json::from_str(&json).unwrap();
    assert_eq!(back.final_state(), rec.final_state());
    let csv = rec.to_csv();
    assert_eq!(csv.lines().count(), 12);
    assert!(csv.starts_with("t,x,px,y,py,lz\n"));
}

#[test]
fn protocol_stage_maps_compose_to_the_total() {
    let a = ExactPulse::from_parameters(2.0, -3.0)
        .unwrap()
        .to_pulse_with(RotationConvention::Field);
    let b = ExactPulse::from_parameters(1.8, -3.5)
        .unwrap()
        .to_pulse_with(RotationConvention::Field);
    let stages = vec![Stage::full(a), Stage::full(b)];
    let run = run_protocol(
        &stages,
        PhaseVector::new(0.5, -5.0, 10.0, 20.0),
        None,
        &ProtocolOptions::default(),
    )
    .unwrap();
    let composed = run.stage_maps[0].then(&run.stage_maps[1]);
    assert!(composed.max_abs_diff(&run.composed) < 1e-12);
    assert!((run.composed.det() - 1.0).abs() < 1e-9);
    let direct = run.trajectory.final_state();
    assert!(direct.distance(&run.composed.apply(&PhaseVector::new(0.5, -5.0, 10.0, 20.0))) < 1e-8);
}

#[test]
fn unforced_loop_has_no_drift() {
    let k = Pulse::constant(1.0, Interval::new(0.0, PI), Convention::SquaredBeta);
    let stages = vec![Stage::full(k.clone()), Stage::full(k)];
    let (_, report) = perturbed_run(
        &stages,
        PhaseVector::new(1.0, 0.3, -0.5, 2.0),
        &ForceSpec::Constant { f: 0.0 },
        &ProtocolOptions::default(),
    )
    .unwrap();
    assert!(report.drift.0.abs() < 1e-9 && report.drift.1.abs() < 1e-9);
    assert_eq!(report.transversality, None);
}

#[test]
fn constant_force_pushes_the_centre_across_the_force() {
    // In a steady field the centre drifts along ±Oy under a force along Ox.
    let k = Pulse::constant(1.0, Interval::new(0.0, 2.0 * PI), Convention::SquaredBeta);
    let (_, report) = perturbed_run(
        &[Stage::full(k)],
        PhaseVector::new(1.0, 0.0, 0.0, 1.0),
        &ForceSpec::Constant { f: 0.5 },
        &ProtocolOptions::default(),
    )
    .unwrap();
    assert!(report.transversal, "{report:?}");
    assert!(report.drift.1.abs() > 0.1);
}
