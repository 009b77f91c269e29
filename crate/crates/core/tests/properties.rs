use indefinite::acceptance::reference_params;
use indefinite::export::{fmt_f64, to_json};
use indefinite::ode::{integrate_central, Direction, EventSpec, OdeSettings};
use indefinite::problem::{
    energy_of, homoclinic_branch, homoclinic_extent, lambda_threshold, potential, weight_at, PhasePoint, Well,
};
use indefinite::solver::BvpSolution;
use proptest::prelude::*;

const LAMBDA: f64 = -394.784_176_043_574_35;

fn well() -> impl Strategy<Value = Well> {
    (-2000.0..-1.0f64, 1.5..4.0f64, 10.0..1e5f64).prop_map(|(lambda, p, b)| Well::new(lambda, b, p).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn energy_splits_into_kinetic_and_potential(w in well(), u in 0.0..10.0f64, v in -1e3..1e3f64) {
        let e = energy_of(PhasePoint::new(u, v), w.b, w.lambda, w.p).unwrap();
        let phi = potential(u, w.b, w.lambda, w.p).unwrap();
        let scale = v * v + phi.abs() + (w.lambda * u * u).abs();
        prop_assert!((e - v * v - phi).abs() <= 8.0 * f64::EPSILON * scale);
    }

    #[test]
    fn potential_changes_sign_only_at_the_extent(w in well(), s in 0.0..1.0f64, k in 1.0..10.0f64) {
        let extent = w.homoclinic_extent().unwrap();
        prop_assert!(w.center_energy().unwrap() < 0.0);
        let inside = s * extent;
        if inside > 0.0 && s < 1.0 - 1e-9 {
            prop_assert!(w.potential(inside) < 0.0);
        }
        if k > 1.0 + 1e-9 {
            prop_assert!(w.potential(k * extent) > 0.0);
        }
        let scale = (w.lambda * extent * extent).abs();
        prop_assert!(w.potential(extent).abs() <= 1e-12 * scale);
        prop_assert_eq!(w.potential(0.0), 0.0);
    }

    #[test]
    fn homoclinic_branch_lies_on_the_zero_level(w in well(), s in 0.0..=1.0f64) {
        let extent = homoclinic_extent(w.b, w.lambda, w.p).unwrap();
        let u = s * extent;
        let (up, down) = homoclinic_branch(u, w.b, w.lambda, w.p).unwrap();
        prop_assert_eq!(up, -down);
        prop_assert!(up >= 0.0);
        let scale = (w.lambda * u * u).abs().max(f64::MIN_POSITIVE);
        prop_assert!((up * up + w.potential(u)).abs() <= 1e-12 * scale);
    }

    #[test]
    fn thresholds_decrease_and_invert(p in 1.1..6.0f64, alpha in 0.01..0.49f64, j in 1u32..40) {
        let lj = lambda_threshold(j, p, alpha).unwrap();
        let next = lambda_threshold(j + 1, p, alpha).unwrap();
        prop_assert!(next < lj && lj < 0.0);
        let w = 2.0 * std::f64::consts::PI * f64::from(j);
        let identity = lj * (1.0 - p) * (1.0 - 2.0 * alpha).powi(2) / (w * w);
        prop_assert!((identity - 1.0).abs() <= 8.0 * f64::EPSILON);
    }

    #[test]
    fn weight_is_piecewise_constant(t in 0.0..=1.0f64, b in 0.0..1e5f64, nu in 1.0..3.0f64) {
        let params = reference_params().with_b(b).with_nu(nu);
        let w = weight_at(t, &params).unwrap();
        let expected = if t < params.alpha {
            -params.c
        } else if t <= 1.0 - params.alpha {
            b
        } else {
            -nu * params.c
        };
        prop_assert_eq!(w, expected);
    }

    #[test]
    fn decimal_text_round_trips(x in any::<f64>().prop_filter("finite", |x| x.is_finite())) {
        let text = fmt_f64(x);
        prop_assert_eq!(text.parse::<f64>().unwrap(), x);
    }
}

fn closed_start(b: f64, s: f64) -> PhasePoint {
    // turning point between the center and the homoclinic extent
    let w = Well::new(LAMBDA, b, 2.0).unwrap();
    let (omega, extent) = (w.center().unwrap(), w.homoclinic_extent().unwrap());
    PhasePoint::new(omega + s * (extent - omega), 0.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn central_flow_is_reversible(b in 1e4..1e5f64, s in 0.05..0.9f64, t in 0.01..0.5f64) {
        let ode = OdeSettings::precise();
        let start = closed_start(b, s);
        let fwd = integrate_central(start, b, LAMBDA, 2.0, (0.0, t), &[], &ode).unwrap();
        let (_, mid) = fwd.end_point();
        let back = integrate_central(mid, b, LAMBDA, 2.0, (t, 0.0), &[], &ode).unwrap();
        let (_, end) = back.end_point();
        prop_assert!((end.u - start.u).abs() < 1e-8, "u: {} vs {}", end.u, start.u);
        prop_assert!((end.v - start.v).abs() < 1e-8, "v: {} vs {}", end.v, start.v);
    }

    #[test]
    fn event_times_do_not_depend_on_the_step_cap(b in 1e4..1e5f64, s in 0.05..0.9f64) {
        // the first return to v = 0 from below is the half period
        let start = closed_start(b, s);
        let time = |max_step: f64| {
            let ode = OdeSettings::precise().with_max_step(max_step);
            let ev = [EventSpec::crossing(|_, pt| pt.v, Direction::Up, 1)];
            integrate_central(start, b, LAMBDA, 2.0, (0.0, 10.0), &ev, &ode)
                .unwrap()
                .event_time(0, 1)
                .unwrap()
        };
        let (coarse, fine) = (time(0.01), time(0.005));
        prop_assert!((coarse - fine).abs() < 1e-10, "{coarse} vs {fine}");
    }

    #[test]
    fn dense_output_matches_a_restarted_step(b in 1e4..1e5f64, s in 0.05..0.9f64, k in 1usize..20) {
        let ode = OdeSettings::precise();
        let start = closed_start(b, s);
        let tr = integrate_central(start, b, LAMBDA, 2.0, (0.0, 0.3), &[], &ode).unwrap();
        let k = k.min(tr.samples.len() - 2);
        let (t0, y0) = tr.samples[k];
        let (t1, _) = tr.samples[k + 1];
        let tm = 0.5 * (t0 + t1);
        let dense = tr.eval_point(tm).unwrap();
        let again = integrate_central(PhasePoint::new(y0[0], y0[1]), b, LAMBDA, 2.0, (t0, tm), &[], &ode).unwrap();
        let (_, direct) = again.end_point();
        let tol = 10.0 * ode.rel_tol * direct.u.abs().max(direct.v.abs());
        prop_assert!((dense.u - direct.u).abs() < tol && (dense.v - direct.v).abs() < tol);
    }

    #[test]
    fn solutions_round_trip_through_json(
        xa in 0.0..1.0f64, xb in 0.0..1.0f64, j in 0u32..6, slope in -50.0..50.0f64,
        res in 0.0..1e-6f64, rows in prop::collection::vec((0.0..1.0f64, 0.0..2.0f64, -9.0..9.0f64), 0..8),
    ) {
        let sol = BvpSolution {
            x_alpha: xa,
            x_one_minus_alpha: xb,
            j,
            slope0: slope,
            residual: res,
            profile: rows.into_iter().map(|(t, u, v)| [t, u, v]).collect(),
            multiplicity: 1,
        };
        let back: BvpSolution = serde_json::from_str(&to_json(&sol).unwrap()).unwrap();
        prop_assert_eq!(back, sol);
    }
}
