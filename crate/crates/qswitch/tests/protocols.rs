use num_complex::Complex64;
use proptest::prelude::*;
use qswitch::emitter::emission_coefficients;
use qswitch::network::{Component, Network, NetworkSpec};
use qswitch::ode::Options;
use qswitch::protocols::*;

fn net() -> Network {
    Network::new(NetworkSpec::default()).unwrap()
}

fn three_nodes_with(f: impl FnOnce(&mut NetworkSpec)) -> Network {
    let mut s = NetworkSpec::default();
    f(&mut s);
    Network::new(s).unwrap()
}

fn final_pop(plan: &ProtocolPlan, net: &Network, c: Component) -> f64 {
    plan.simulate(net, &Options::default(), None).unwrap().0.population(c)
}

fn qst_tau(net: &Network, kt: f64) -> f64 {
    kt / net.kappa() + net.propagation_time()
}

#[test]
fn closed_switch_transfers_the_excitation() {
    let net = net();
    let plan = plan_qst(&net, qst_tau(&net, 20.0)).unwrap();
    let (s, _) = plan.simulate(&net, &Options::default(), None).unwrap();
    assert!(s.population(Component::Qubit(0)) < 1e-3);
    assert!(s.population(Component::Qubit(1)) > 0.999, "{}", s.population(Component::Qubit(1)));
    assert!((s.norm_sqr() - 1.0).abs() < 1e-8);
}

#[test]
fn longer_windows_transfer_better() {
    let net = net();
    let miss = |kt| 1.0 - final_pop(&plan_qst(&net, qst_tau(&net, kt)).unwrap(), &net, Component::Qubit(1));
    let (short, long) = (miss(10.0), miss(20.0));
    assert!(long < short, "{long} vs {short}");
}

#[test]
fn open_switch_keeps_alpha_and_sends_beta() {
    let net = net();
    let plan = plan_bell(&net, qst_tau(&net, 20.0)).unwrap();
    let (s, _) = plan.simulate(&net, &Options::default(), None).unwrap();
    let e = emission_coefficients(net.kappa(), net.kappa());
    let q0 = s.branches[0].amps[s.layout.qubit(0)];
    let q1 = s.branches[0].amps[s.layout.qubit(1)];
    assert!((q0.norm() - e.alpha.norm()).abs() < 2e-3, "{q0}");
    assert!((q1.norm() - e.beta.norm()).abs() < 2e-3, "{q1}");
    assert!((q0.norm_sqr() - 0.5).abs() < 2e-3);
    assert!((q1.norm_sqr() - 0.5).abs() < 2e-3);
}

#[test]
fn routing_orders_mirror_each_other() {
    let net = net();
    let k = net.kappa();
    let window = 26.0 / k + net.propagation_time();
    let tau = 2.0 * window + GUARD_GAP_KAPPA / k;
    let opts = Options::default();
    let run = |order| {
        let plan = plan_route(&net, tau, order, (true, true)).unwrap();
        route_outcome(&plan.simulate(&net, &opts, None).unwrap().0)
    };
    let l = run(RouteOrder::LeftFirst);
    let r = run(RouteOrder::RightFirst);
    assert!((l.left - r.right).abs() < 1e-3 && (l.right - r.left).abs() < 1e-3);
    assert!((l.emitter - r.emitter).abs() < 1e-3);
    let p = predicted_route(RouteOrder::RightFirst, (true, true), (k, k), k);
    assert!((r.left - p.left).abs() < 2e-3 && (r.right - p.right).abs() < 2e-3);
}

#[test]
fn w_stage_and_total_durations_invert() {
    let k = 1.0;
    for n in 3..7 {
        let stage = 30.0;
        let tau = w_total_duration(n, stage, k);
        assert!((w_stage_duration(n, tau, k) - stage).abs() < 1e-12);
    }
    assert_eq!(w_total_duration(3, 30.0, k), 2.0 * 30.0 + GUARD_GAP_KAPPA);
}

#[test]
fn w_schedule_splits_evenly() {
    // Stage k's emitter holds (n−k)/n and keeps 1/n of it, forwarding the rest.
    let n = 5;
    let mut held = 1.0;
    for x in w_shift_schedule(n, 1.0) {
        let e = emission_coefficients(x, 1.0);
        assert!((held * e.alpha.norm_sqr() - 1.0 / n as f64).abs() < 1e-14);
        held *= e.beta.norm_sqr();
    }
    assert!((held - 1.0 / n as f64).abs() < 1e-14);
}

#[test]
fn preconditions_are_enforced() {
    let net = net();
    let k = net.kappa();
    let tp = net.propagation_time();
    assert!(matches!(plan_qst(&net, 1.5 * tp), Err(ProtocolError::TauTooShort { .. })));
    let half = three_nodes_with(|s| s.chi[0] = 0.5 * s.kappa);
    assert!(matches!(plan_bell(&half, 400e-9), Err(ProtocolError::BellCondition { .. })));
    assert!(matches!(plan_w(&net, 1e-6), Err(ProtocolError::WSchedule { .. })));
    let two = Network::new(NetworkSpec { nodes: 2, chi: vec![k; 2], ..NetworkSpec::default() }).unwrap();
    assert!(matches!(plan_route(&two, 1e-6, RouteOrder::LeftFirst, (true, true)), Err(ProtocolError::RouteTopology(2))));
    assert!(matches!(
        plan_route(&net, 1e-6, RouteOrder::SimultaneousSplit, (true, false)),
        Err(ProtocolError::SplitNeedsClosedSwitches)
    ));
}

#[test]
fn validate_rejects_inconsistent_plans() {
    let net = net();
    let good = plan_qst(&net, 400e-9).unwrap();
    assert!(good.validate(&net).is_ok());
    let mut p = good.clone();
    p.switch_prep.pop();
    assert!(p.validate(&net).is_err());
    let mut p = good.clone();
    p.switch_prep[0] = SwitchPrep::Superposition { zero: Complex64::new(1.0, 0.0), one: Complex64::new(1.0, 0.0) };
    assert!(p.validate(&net).is_err());
    let mut p = good.clone();
    p.schedules[0].window.0 = -1.0;
    assert!(p.validate(&net).is_err());
    let mut p = good.clone();
    p.labels = vec![QubitLabel::Node(9)];
    assert!(p.validate(&net).is_err());
    let mut p = good.clone();
    p.terminal_gates = vec![Gate::X { qubit: QubitLabel::Node(0) }];
    assert!(p.validate(&net).is_err());
}

#[test]
fn ghz_witness_threshold_matches_prediction() {
    let x = ghz_witness_threshold(1.0);
    assert!((predicted_ghz_fidelity(x, 1.0) - 0.5).abs() < 1e-12);
    assert!((predicted_ghz_fidelity(1.0, 1.0) - 0.25 * (1.0 + std::f64::consts::FRAC_1_SQRT_2).powi(2)).abs() < 1e-15);
}

fn arb_prep() -> impl Strategy<Value = SwitchPrep> {
    prop_oneof![
        any::<bool>().prop_map(|value| SwitchPrep::Bit { value }),
        (0.0f64..std::f64::consts::TAU, 0.0f64..1.0).prop_map(|(phi, p)| SwitchPrep::Superposition {
            zero: Complex64::from_polar(p.sqrt(), phi),
            one: Complex64::new((1.0 - p).sqrt(), 0.0),
        }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn plan_documents_round_trip(
        kt in 12.0f64..60.0,
        preps in proptest::collection::vec(arb_prep(), 4),
        phi in -3.0f64..3.0,
        order in prop_oneof![Just(RouteOrder::LeftFirst), Just(RouteOrder::RightFirst)],
    ) {
        let net = net();
        let tau = 2.0 * qst_tau(&net, kt) + GUARD_GAP_KAPPA / net.kappa();
        let mut plan = plan_route(&net, tau, order, (true, false)).unwrap();
        plan.switch_prep = preps;
        plan.terminal_gates = vec![Gate::Phase { qubit: QubitLabel::Node(2), phi }];
        let text = plan.to_toml().unwrap();
        let back = ProtocolPlan::from_toml(&text).unwrap();
        prop_assert_eq!(&back, &plan);
        prop_assert!(back.validate(&net).is_ok());
    }

    #[test]
    fn branches_carry_unit_weight(preps in proptest::collection::vec(arb_prep(), 4)) {
        let mut plan = plan_qst(&net(), 400e-9).unwrap();
        plan.switch_prep = preps;
        let b = plan.switch_branches();
        let total: f64 = b.iter().map(|(_, w)| w.norm_sqr()).sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        let mut bits: Vec<u32> = b.iter().map(|x| x.0).collect();
        bits.dedup();
        prop_assert_eq!(bits.len(), b.len());
    }

    #[test]
    fn predicted_route_conserves_population(
        l in 0.0f64..20.0,
        r in 0.0f64..20.0,
        open in (any::<bool>(), any::<bool>()),
        order in prop_oneof![Just(RouteOrder::LeftFirst), Just(RouteOrder::RightFirst)],
    ) {
        let o = predicted_route(order, open, (l, r), 1.0);
        prop_assert!((o.left + o.right + o.emitter - 1.0).abs() < 1e-14);
        prop_assert!(o.left >= 0.0 && o.right >= 0.0 && o.emitter >= 0.0);
    }

    #[test]
    fn ghz_prediction_increases_with_shift(x in 0.0f64..50.0, dx in 1e-3f64..5.0) {
        prop_assert!(predicted_ghz_fidelity(x + dx, 1.0) > predicted_ghz_fidelity(x, 1.0));
        prop_assert!(predicted_ghz_fidelity(x, 1.0) <= 1.0);
    }
}
