use super::*;
use proptest::prelude::*;

fn p(l10: f64, l20: f64, l21: f64, delta: f64) -> Params {
    Params::finite(l10, l20, l21, delta, 1, 10, 0).unwrap()
}

fn s(u1: f64, u2: f64) -> MFState {
    MFState { u1, u2 }
}

#[test]
fn rhs_examples() {
    assert_eq!(rhs(s(0.0, 0.0), &p(2.0, 1.0, 1.0, 0.5)).unwrap(), (0.0, 0.0));
    assert_eq!(rhs(s(0.5, 0.0), &p(2.0, 1.0, 1.0, 0.5)).unwrap(), (0.0, 0.0));
    assert_eq!(rhs(s(0.0, 0.5), &p(1.0, 2.0, 1.0, 0.0)).unwrap(), (0.0, 0.0));
    let inf = Params::new(2.0, 1.0, crate::InfectionRate::Infinite, 0.0, 1, 10, 0).unwrap();
    assert!(matches!(rhs(s(0.1, 0.1), &inf), Err(Error::Unsupported(_))));
}

#[test]
fn integrate_examples() {
    let q = p(2.0, 1.0, 1.0, 0.5);
    let t = integrate(MFState::ORIGIN, &q, 10.0, Tolerance::default()).unwrap();
    assert!(t.points.iter().all(|(_, x)| *x == MFState::ORIGIN));

    let sub = p(0.5, 0.5, 1.0, 0.3);
    let (_, end) = integrate(s(0.3, 0.4), &sub, 200.0, Tolerance::default()).unwrap().last();
    assert!(end.distance(&MFState::ORIGIN) < 1e-12);

    // logistic growth to 1 - 1/lambda10
    let log = p(2.0, 0.0, 0.0, 0.0);
    let (_, end) = integrate(s(0.1, 0.0), &log, 200.0, Tolerance::default()).unwrap().last();
    assert!((end.u1 - 0.5).abs() < 1e-9 && end.u2 == 0.0);
}

#[test]
fn conditions_examples() {
    let c = conditions(&p(2.0, 0.5, 0.1, 0.0)).unwrap();
    assert!((c.lhs_2in1.unwrap() - 0.3).abs() < 1e-12);
    assert!((c.lhs_1in2.unwrap() - 4.1).abs() < 1e-12);
    assert_eq!((c.cond_2in1, c.cond_1in2), (Some(false), Some(true)));

    for delta in [0.0, 0.5] {
        let c = conditions(&p(1.7, 1.7, 0.0, delta)).unwrap();
        assert_eq!(c.lhs_2in1, Some(1.0));
        assert_eq!(c.cond_2in1, Some(false));
    }

    let c = conditions(&p(2.0, 2.0, 4.0, 0.0)).unwrap();
    assert_eq!(c.lhs_2in1, Some(3.0));
    assert_eq!(c.cond_2in1, Some(true));

    let c = conditions(&p(0.0, 0.0, 1.0, 0.0)).unwrap();
    assert_eq!((c.lhs_2in1, c.lhs_1in2), (None, None));
}

#[test]
fn equilibria_examples() {
    let e = equilibria(&p(2.0, 0.5, 0.0, 0.0)).unwrap();
    let kinds: Vec<_> = e.iter().map(|e| e.kind).collect();
    assert_eq!(kinds, vec![EquilibriumKind::Origin, EquilibriumKind::HealthyOnly]);
    assert_eq!(e[1].point, s(0.5, 0.0));

    let e = equilibria(&p(0.5, 2.0, 0.0, 0.0)).unwrap();
    assert_eq!(e.iter().map(|e| e.kind).collect::<Vec<_>>(), vec![EquilibriumKind::Origin, EquilibriumKind::InfectedOnly]);
    assert_eq!(e[1].point, s(0.0, 0.5));

    let q = p(0.9, 2.0, 1.0, 0.5);
    let e = equilibria(&q).unwrap();
    let interior: Vec<_> = e.iter().filter(|e| e.kind == EquilibriumKind::Interior).collect();
    assert_eq!(interior.len(), 1);
    assert!(interior[0].residual < RESIDUAL_TOL);
    let (_, end) = integrate(s(0.3, 0.3), &q, 2000.0, Tolerance::default()).unwrap().last();
    assert!(end.distance(&interior[0].point) < 1e-7);

    assert_eq!(equilibria(&p(0.0, 0.0, 0.0, 0.0)).unwrap().len(), 1);
}

#[test]
fn equilibria_with_vertical_nullcline() {
    // lambda20 = 0: the infected nullcline is u1 = (1 + delta) / lambda21
    let q = p(3.0, 0.0, 4.0, 1.0);
    let e = equilibria(&q).unwrap();
    for eq in &e {
        assert!(eq.residual < RESIDUAL_TOL);
    }
    let interior: Vec<_> = e.iter().filter(|e| e.kind == EquilibriumKind::Interior).collect();
    assert_eq!(interior.len(), 1);
    assert!((interior[0].point.u1 - 0.5).abs() < 1e-12);
}

#[test]
fn classify_examples() {
    let c = classify(&p(0.8, 0.9, 1.0, 0.0));
    assert_eq!((c.outcome, c.clause), (Outcome::Extinction, Some(Clause::Extinction)));
    assert_eq!(c.equilibrium, Some(MFState::ORIGIN));

    let c = classify(&p(0.9, 2.0, 1.0, 0.5));
    assert_eq!((c.outcome, c.clause), (Outcome::Coexistence, Some(Clause::CoexistenceWeakHost)));
    assert!(c.equilibrium.is_some());

    let c = classify(&p(2.0, 0.5, 0.1, 0.0));
    assert_eq!((c.outcome, c.clause), (Outcome::OnesWin, Some(Clause::HealthyWins)));
    assert_eq!(c.equilibrium, Some(s(0.5, 0.0)));

    let c = classify(&p(0.5, 2.0, 0.0, 0.0));
    assert_eq!((c.outcome, c.clause), (Outcome::TwosWin, Some(Clause::InfectedWins)));

    let c = classify(&p(2.0, 0.5, 3.0, 0.0));
    assert_eq!(c.clause, Some(Clause::CoexistenceNoRecovery));

    let c = classify(&p(2.0, 0.5, 3.0, 0.5));
    assert_eq!(c.clause, Some(Clause::CoexistenceRecovery));
}

#[test]
fn classify_reports_gaps_and_boundaries() {
    // recovery present, strong host, infected hosts cannot invade
    assert_eq!(classify(&p(2.0, 0.5, 0.1, 0.5)).outcome, Outcome::Unclassified);
    // equality in the infected-invasion inequality: 1 + 0 = 1
    assert_eq!(classify(&p(1.7, 1.7, 0.0, 0.0)).outcome, Outcome::Unclassified);
}

#[test]
fn dulac_examples() {
    assert_eq!(dulac_divergence(s(0.5, 0.25), &p(1.0, 1.0, 0.0, 1.0)).unwrap(), -10.0);
    assert_eq!(dulac_divergence(s(0.5, 0.5), &p(1.0, 0.0, 0.0, 0.0)).unwrap(), -2.0);
    assert!(matches!(dulac_divergence(s(0.0, 0.5), &p(1.0, 1.0, 1.0, 1.0)), Err(Error::Domain(_))));
}

#[test]
fn basin_scan_examples() {
    let r = basin_scan(&p(0.8, 0.9, 1.0, 0.0), 20, 1e4).unwrap();
    assert!(r.all_converged(), "{r:?}");
    // without recovery, both axes are invariant and skipped
    assert_eq!(r.skipped_boundary.len(), 39);
    assert_eq!(r.in_simplex, 210);

    let r = basin_scan(&p(0.9, 2.0, 1.0, 0.5), 20, 1e4).unwrap();
    assert!(r.all_converged(), "{r:?}");
    assert_eq!(r.skipped_boundary.len(), 20);

    assert!(basin_scan(&p(2.0, 0.5, 0.1, 0.5), 20, 1e4).is_err());
}

#[test]
fn flow_map_derivative_matches_rhs() {
    let q = p(2.0, 1.5, 1.0, 0.5);
    for st in [s(0.2, 0.3), s(0.6, 0.1), s(0.05, 0.9)] {
        assert!(flow_derivative_error(st, &q, 1e-6).unwrap() < 1e-4);
    }
}

fn arb_params() -> impl Strategy<Value = Params> {
    (0.0f64..5.0, 0.0f64..5.0, 0.0f64..5.0, 0.0f64..2.0).prop_map(|(a, b, c, d)| p(a, b, c, d))
}

fn arb_state() -> impl Strategy<Value = MFState> {
    (0.0f64..1.0, 0.0f64..1.0).prop_map(|(a, b)| if a + b <= 1.0 { s(a, b) } else { s(1.0 - a, 1.0 - b) })
}

proptest! {
    #[test]
    fn total_density_identity(q in arb_params(), st in arb_state()) {
        let (a, b) = rhs(st, &q).unwrap();
        let want = (q.lambda10 * st.u1 + q.lambda20 * st.u2) * st.u0() - (st.u1 + st.u2);
        prop_assert!((a + b - want).abs() < 1e-12);
    }

    #[test]
    fn integration_stays_in_simplex(q in arb_params(), st in arb_state()) {
        let t = integrate(st, &q, 50.0, Tolerance::default()).unwrap();
        prop_assert!(t.points.iter().all(|(_, x)| x.in_simplex(0.0)));
    }

    #[test]
    fn equilibria_have_small_residual(q in arb_params()) {
        let e = equilibria(&q).unwrap();
        prop_assert!(e.iter().all(|e| e.residual < RESIDUAL_TOL));
        let c = classify(&q);
        if c.clause.is_some() {
            prop_assert!(e.iter().filter(|e| e.kind == EquilibriumKind::Interior).count() <= 1);
        }
    }

    #[test]
    fn dulac_negative_inside(
        l10 in 1e-3f64..10.0, l20 in 1e-3f64..10.0, l21 in 1e-3f64..10.0, d in 1e-3f64..5.0,
        a in 1e-6f64..1.0, b in 1e-6f64..1.0,
    ) {
        let st = if a + b < 1.0 { s(a, b) } else { s((1.0 - a).max(1e-6), (1.0 - b).max(1e-6)) };
        prop_assert!(dulac_divergence(st, &p(l10, l20, l21, d)).unwrap() < 0.0);
    }
}
