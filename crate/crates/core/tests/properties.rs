use proptest::prelude::*;

use qsdlab::discrete::{dsbp_qsd_pmf, DiscreteBranching, DsbpFlow};
use qsdlab::flow::{Flow, FlowConfig};
use qsdlab::montecarlo::{simulate_csbp, simulate_dsbp, SimConfig, TrajectoryEnsemble};
use qsdlab::qsd::{qsd_laplace, Regime};
use qsdlab::BranchingMechanism;

fn explosive() -> impl Strategy<Value = BranchingMechanism> {
    prop_oneof![
        (0.2f64..3.0, 0.1f64..0.9).prop_map(|(k, alpha)| BranchingMechanism::StableMinus { k, alpha }),
        (0.01f64..1.0, 0.2f64..3.0, 0.1f64..0.9)
            .prop_map(|(c, k, alpha)| BranchingMechanism::LinearStableMinus { c, k, alpha }),
        (0.2f64..3.0, 0.2f64..0.95, 0.2f64..3.0)
            .prop_map(|(rho, alpha, h0)| BranchingMechanism::TruncatedPareto { rho, alpha, h0 }),
    ]
}

fn any_mechanism() -> impl Strategy<Value = BranchingMechanism> {
    prop_oneof![
        (0.2f64..3.0, 0.1f64..=1.0).prop_map(|(c, alpha)| BranchingMechanism::StablePlus { c, alpha }),
        explosive(),
    ]
}

fn sibuya() -> impl Strategy<Value = DiscreteBranching> {
    (0.5f64..2.0, 0.2f64..0.9).prop_map(|(c, alpha)| DiscreteBranching::sibuya(c, alpha))
}

fn same_paths(a: &TrajectoryEnsemble, b: &TrajectoryEnsemble) -> bool {
    a.paths.len() == b.paths.len()
        && a.paths.iter().zip(&b.paths).all(|(p, q)| {
            p.flag == q.flag
                && p.events == q.events
                && p.explosion_time.map(f64::to_bits) == q.explosion_time.map(f64::to_bits)
                && p.states.iter().map(|x| x.to_bits()).eq(q.states.iter().map(|x| x.to_bits()))
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn psi_is_convex(mech in any_mechanism(), u in 1e-3f64..20.0, v in 1e-3f64..20.0) {
        let mid = mech.psi(0.5 * (u + v)).unwrap();
        let chord = 0.5 * (mech.psi(u).unwrap() + mech.psi(v).unwrap());
        prop_assert!(mid <= chord + 1e-9 * chord.abs().max(1.0));
    }

    #[test]
    fn flow_is_increasing_and_concave_in_lambda(mech in any_mechanism(), t in 0.05f64..3.0, l in 0.05f64..5.0, h in 0.01f64..2.0) {
        let flow = Flow::new(&mech).unwrap();
        let cfg = FlowConfig::default();
        let u = |x: f64| flow.u(t, x, &cfg).unwrap().value;
        let (a, b, c) = (u(l), u(l + h), u(l + 2.0 * h));
        prop_assert!(a < b && b < c);
        prop_assert!(b >= 0.5 * (a + c) - 1e-9 * c);
    }

    #[test]
    fn flow_moves_with_the_sign_of_psi(mech in any_mechanism(), t in 0.05f64..3.0, dt in 0.05f64..3.0, l in 0.05f64..5.0) {
        let flow = Flow::new(&mech).unwrap();
        let cfg = FlowConfig::default();
        let (early, late) = (flow.u(t, l, &cfg).unwrap().value, flow.u(t + dt, l, &cfg).unwrap().value);
        if mech.psi(l).unwrap() < 0.0 {
            prop_assert!(late > early);
        } else {
            prop_assert!(late < early);
        }
    }

    #[test]
    fn flow_is_a_semigroup(mech in any_mechanism(), t in 0.05f64..2.0, s in 0.05f64..2.0, l in 0.05f64..5.0) {
        let flow = Flow::new(&mech).unwrap();
        let cfg = FlowConfig::default();
        let direct = flow.u(t + s, l, &cfg).unwrap().value;
        let composed = flow.u(t, flow.u(s, l, &cfg).unwrap().value, &cfg).unwrap().value;
        prop_assert!((direct - composed).abs() <= 1e-8 * direct);
    }

    #[test]
    fn qsd_transform_is_a_laplace_transform(mech in explosive(), beta in 0.1f64..4.0, l in 0.0f64..10.0, h in 0.01f64..5.0) {
        let a = qsd_laplace(&mech, beta, Regime::Explosive, l).unwrap();
        let b = qsd_laplace(&mech, beta, Regime::Explosive, l + h).unwrap();
        prop_assert!((0.0..=1.0).contains(&a) && (0.0..=1.0).contains(&b));
        prop_assert!(b <= a);
    }

    #[test]
    fn mechanism_json_round_trips(mech in any_mechanism()) {
        prop_assert_eq!(BranchingMechanism::from_json(&mech.to_json()).unwrap(), mech);
    }

    #[test]
    fn drift_is_multiplicative(mech in explosive(), t in 0.0f64..5.0, s in 0.0f64..5.0) {
        let flow = Flow::new(&mech).unwrap();
        let (a, b, ab) = (flow.drift(t).unwrap(), flow.drift(s).unwrap(), flow.drift(t + s).unwrap());
        // rounding of the exponent -D t costs |D t| ulp after exp
        let d = mech.finite_variation().1.unwrap();
        let ulps = 4.0 + 2.0 * (d * (t + s)).abs();
        prop_assert!((a * b - ab).abs() <= ulps * f64::EPSILON * ab);
    }

    #[test]
    fn dsbp_generating_function_is_monotone(d in sibuya(), t in 0.01f64..10.0, r in 0.01f64..0.99, h in 0.001f64..0.5) {
        let flow = DsbpFlow::new(&d).unwrap();
        let lo = flow.f(t, r).unwrap();
        let hi = flow.f(t, (r + h).min(1.0)).unwrap();
        prop_assert!(lo > 0.0 && hi <= 1.0 && lo < hi);
    }

    #[test]
    fn dsbp_time_change_is_additive(d in sibuya(), t in 0.01f64..10.0, r in 0.01f64..=1.0) {
        let flow = DsbpFlow::new(&d).unwrap();
        let lhs = flow.phi(flow.f(t, r).unwrap()).unwrap();
        let rhs = t + flow.phi(r).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-8 * rhs);
    }

    #[test]
    fn dsbp_qsd_is_a_subprobability(d in sibuya(), n in 1u32..4, order in 8usize..128) {
        let q = dsbp_qsd_pmf(&d, n, order).unwrap();
        prop_assert!(q.pmf.iter().all(|&p| p >= 0.0));
        let total: f64 = q.pmf.iter().sum();
        prop_assert!(total <= 1.0 + 1e-12);
        prop_assert!((total + q.truncation_residual - 1.0).abs() <= 1e-10);
        prop_assert_eq!(q.probability(0), 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn simulation_ignores_thread_count(seed in any::<u64>(), threads in 2usize..5) {
        let mech = BranchingMechanism::TruncatedPareto { rho: 1.0, alpha: 0.5, h0: 1.0 };
        let times = [0.5, 1.0];
        let cfg = SimConfig::new(seed, 200, 1.0);
        let one = simulate_csbp(&mech, 1.0, &times, &cfg.clone().with_threads(1)).unwrap();
        let many = simulate_csbp(&mech, 1.0, &times, &cfg.clone().with_threads(threads)).unwrap();
        prop_assert!(same_paths(&one, &many));
        prop_assert_eq!(&one.config_hash, &many.config_hash);

        let d = DiscreteBranching::sibuya(1.0, 0.5);
        let one = simulate_dsbp(&d, 1, &times, &cfg.clone().with_threads(1)).unwrap();
        let many = simulate_dsbp(&d, 1, &times, &cfg.with_threads(threads)).unwrap();
        prop_assert!(same_paths(&one, &many));
    }
}
