use std::f64::consts::{FRAC_PI_2, PI};

use fuzzyloop::*;
use proptest::prelude::*;

fn amp() -> impl Strategy<Value = f64> {
    -15.0..15.0f64
}

fn state() -> impl Strategy<Value = PhaseVector> {
    prop::array::uniform4(-5.0..5.0f64).prop_map(PhaseVector::from_array)
}

fn tol() -> ToleranceSpec {
    ToleranceSpec::default()
}

/// Designs whose θ keeps regular zeros; `b` away from 0 and moderate `c`.
fn design() -> impl Strategy<Value = (f64, f64)> {
    (1.5..2.5f64, -6.0..-2.5f64)
}

fn add(a: PhaseVector, b: PhaseVector) -> PhaseVector {
    PhaseVector::new(a.x + b.x, a.px + b.px, a.y + b.y, a.py + b.py)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn transfer_matrix_is_unimodular(b1 in amp(), b2 in amp()) {
        let h = integrate_transfer(&Pulse::strutt(b1, b2), 0.0, 1.0, &tol()).unwrap();
        let scale = h.h.max_abs().powi(2).max(1.0);
        prop_assert!((h.det() - 1.0).abs() <= 1e-8 * scale, "det {} at ({b1}, {b2})", h.det());
    }

    #[test]
    fn eigenvalues_are_reciprocal(b1 in amp(), b2 in amp()) {
        let h = integrate_transfer(&Pulse::strutt(b1, b2), 0.0, 1.0, &tol()).unwrap();
        let p = h.eigenvalue_product();
        let scale = h.h.max_abs().powi(2).max(1.0);
        prop_assert!((p.re - 1.0).abs() <= 1e-8 * scale && p.im.abs() <= 1e-8 * scale);
    }

    #[test]
    fn sign_flip_leaves_trace_unchanged(b1 in amp(), b2 in amp()) {
        // β → −β flips the rotation but not k = β².
        let a = integrate_transfer(&Pulse::strutt(b1, b2), 0.0, 1.0, &tol()).unwrap();
        let b = integrate_transfer(&Pulse::strutt(-b1, -b2), 0.0, 1.0, &tol()).unwrap();
        prop_assert_eq!(a.h, b.h);
        let pa = rotation_phase(&Pulse::strutt(b1, b2), 0.0, 1.0).unwrap();
        let pb = rotation_phase(&Pulse::strutt(-b1, -b2), 0.0, 1.0).unwrap();
        prop_assert!((pa + pb).abs() <= 1e-10);
    }

    #[test]
    fn split_map_matches_direct_integration(b1 in amp(), b2 in amp(), q0 in state()) {
        let pulse = Pulse::strutt(b1, b2);
        let rec = propagate_trajectory(&pulse, q0, 0.0, 1.0, 11, None, &tol()).unwrap();
        let map = planar_map(&pulse, 0.0, 1.0, &tol()).unwrap();
        let scale = rec.states().iter().map(|q| q.max_abs()).fold(1.0, f64::max);
        prop_assert!(map.apply(&q0).distance(&rec.final_state()) <= 1e-6 * scale);
    }

    #[test]
    fn angular_momentum_is_conserved(b1 in amp(), b2 in amp(), q0 in state()) {
        let rec = propagate_trajectory(&Pulse::strutt(b1, b2), q0, 0.0, 1.0, 51, None, &tol()).unwrap();
        let scale = rec.states().iter().map(|q| q.max_abs()).fold(1.0, f64::max);
        prop_assert!(rec.max_lz_deviation() <= 1e-7 * scale * scale);
    }

    #[test]
    fn zero_force_is_bit_identical(b1 in amp(), b2 in amp(), q0 in state()) {
        let pulse = Pulse::strutt(b1, b2);
        let free = propagate_trajectory(&pulse, q0, 0.0, 1.0, 11, None, &tol()).unwrap();
        let zero = propagate_trajectory(&pulse, q0, 0.0, 1.0, 11, Some(&ForceSpec::Constant { f: 0.0 }), &tol()).unwrap();
        prop_assert_eq!(free.states(), zero.states());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn forced_flow_is_affine(q0 in state(), f in -2.0..2.0f64, w in 0.2..3.0f64, g in -2.0..2.0f64) {
        let stages = vec![Stage::full(ExactPulse::from_parameters(2.0, -3.0).unwrap().to_pulse())];
        let opts = ProtocolOptions::default();
        let u = protocol_map(&stages, &opts.tol).unwrap();
        let f1 = ForceSpec::Harmonic { f, omega: w };
        let f2 = ForceSpec::Constant { f: g };
        let forced = run_protocol(&stages, q0, Some(&f1), &opts).unwrap().final_state;
        let r1 = run_protocol(&stages, PhaseVector::ZERO, Some(&f1), &opts).unwrap().final_state;
        let r2 = run_protocol(&stages, PhaseVector::ZERO, Some(&f2), &opts).unwrap().final_state;
        prop_assert!(forced.distance(&add(u.apply(&q0), r1)) <= 1e-8);
        let both = ForceSpec::Sum { parts: vec![f1, f2] };
        let r12 = run_protocol(&stages, PhaseVector::ZERO, Some(&both), &opts).unwrap().final_state;
        prop_assert!(r12.distance(&add(r1, r2)) <= 1e-8);
    }

    #[test]
    fn reconstruction_identity_holds((b, c) in design()) {
        let pulse = ExactPulse::from_parameters(b, c).unwrap();
        let report = validate_design(&pulse, 64).unwrap();
        prop_assume!(report.valid);
        let flow = symmetric_flow(&pulse.to_pulse(), FRAC_PI_2, 33, &tol()).unwrap();
        for &(t, h) in &flow {
            let half = 0.5 * pulse.theta.derivative(1, t);
            prop_assert!((h.h11 - half).abs() <= 1e-6 && (h.h22 - half).abs() <= 1e-6, "t={t}");
            prop_assert!((h.h11 - h.h22).abs() <= 1e-8);
        }
        let end = flow.last().unwrap().1;
        prop_assert!(end.max_abs_diff(&Mat2::new(0.0, b, -1.0 / b, 0.0)) <= 1e-6);
    }

    #[test]
    fn protocol_then_reverse_is_identity((b1, c1) in design(), (b2, c2) in design()) {
        let s = vec![
            Stage::full(ExactPulse::from_parameters(b1, c1).unwrap().to_pulse()),
            Stage::full(ExactPulse::from_parameters(b2, c2).unwrap().to_pulse()),
        ];
        let mut all = s.clone();
        all.extend(reversed(&s));
        let u = protocol_map(&all, &tol()).unwrap();
        prop_assert!(u.max_abs_diff(&Mat4::identity()) <= 1e-6);
    }

    #[test]
    fn closed_loop_offsets_do_not_depend_on_start(q0 in state(), f in -1.0..1.0f64) {
        let half = Stage::new(Pulse::constant(1.0, Interval::new(0.0, PI), Convention::DirectBeta), PI);
        let stages = vec![half.clone(), half];
        let opts = ProtocolOptions::default();
        let force = ForceSpec::Constant { f };
        let offset = |q: PhaseVector| {
            let end = run_protocol(&stages, q, Some(&force), &opts).unwrap().final_state;
            PhaseVector::new(end.x - q.x, end.px - q.px, end.y - q.y, end.py - q.py)
        };
        // Two half periods of k = 1 compose to the identity, so the forced map
        // is a pure translation.
        prop_assert!(offset(q0).distance(&offset(PhaseVector::ZERO)) <= 1e-8);
    }
}

#[test]
fn scan_is_schedule_independent() {
    let grid = ScanGrid {
        n1: 23,
        n2: 19,
        ..ScanGrid::default()
    };
    let base = scan_strutt(
        &grid,
        &ScanOptions {
            workers: Some(1),
            ..ScanOptions::default()
        },
    )
    .unwrap();
    for w in [2, 3, 8] {
        let other = scan_strutt(
            &grid,
            &ScanOptions {
                workers: Some(w),
                ..ScanOptions::default()
            },
        )
        .unwrap();
        for (a, b) in base.cells.iter().zip(&other.cells) {
            assert_eq!(a.sigma.to_bits(), b.sigma.to_bits());
            assert_eq!(a.h, b.h);
        }
    }
}

#[test]
fn symplecticity_over_random_pulses() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    for _ in 0..200 {
        let pulse = Pulse::biharmonic(
            rng.gen_range(-5.0..5.0),
            rng.gen_range(-15.0..15.0),
            rng.gen_range(-15.0..15.0),
            2.0 * PI,
            4.0 * PI,
        );
        let h = integrate_transfer(&pulse, 0.0, 1.0, &tol()).unwrap();
        let scale = h.h.max_abs().powi(2).max(1.0);
        assert!((h.det() - 1.0).abs() <= 1e-8 * scale);
    }
}
