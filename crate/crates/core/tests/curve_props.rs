mod common;

use common::{model, point};
use proptest::prelude::*;
use weakkam::curves::{
    discrete_action, discrete_action_form, h_t_direct, minimize_endpoint, minimize_loop, DiscreteCurve,
    DEFAULT_WINDING_BOUND,
};
use weakkam::model::{ClosedForm, CohomologyClass, LagrangianModel, TorusPoint};

/// Nodes per unit time; shared by both halves so concatenations are admissible.
const RATE: f64 = 8.0;
/// Newton stops at a gradient residual well below this.
const DISCRETIZATION_TOL: f64 = 1e-6;

fn segs(t: f64) -> usize {
    (t * RATE).round() as usize
}

fn triple() -> impl Strategy<Value = (LagrangianModel, TorusPoint, TorusPoint, TorusPoint)> {
    model(0.1, 0.05).prop_flat_map(|m| {
        let n = m.dim();
        (Just(m), point(n), point(n), point(n))
    })
}

fn gradient_fd(m: &LagrangianModel, curve: &DiscreteCurve, w: &CohomologyClass) -> f64 {
    let eps = 1e-5;
    let nodes = curve.nodes().to_vec();
    let mut worst: f64 = 0.0;
    for k in 1..nodes.len() - 1 {
        for i in 0..m.dim() {
            let shifted = |s: f64| {
                let mut n2 = nodes.clone();
                n2[k][i] += s;
                discrete_action(m, &DiscreteCurve::new(n2, curve.duration()).unwrap(), w, 0.0)
            };
            worst = worst.max(((shifted(eps) - shifted(-eps)) / (2.0 * eps)).abs());
        }
    }
    worst
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn h_t_is_subadditive(
        (m, x, y, z) in triple(),
        a in 2usize..=6,
        b in 2usize..=6,
    ) {
        let (t1, t2) = (a as f64 / RATE, b as f64 / RATE);
        let w = CohomologyClass::zero(m.dim());
        let h = |p: &TorusPoint, q: &TorusPoint, t: f64| {
            h_t_direct(&m, p, q, t, &w, 0.0, segs(t), DEFAULT_WINDING_BOUND).unwrap()
        };
        let lhs = h(&x, &z, t1 + t2);
        let rhs = h(&x, &y, t1) + h(&y, &z, t2);
        prop_assert!(lhs <= rhs + 2.0 * DISCRETIZATION_TOL, "{lhs} > {rhs}");
    }

    #[test]
    fn minimizers_are_stationary((m, x, y, _) in triple(), t in 0.25..1.0f64, wx in -1.0..1.0f64) {
        let mut wv = vec![0.0; m.dim()];
        wv[0] = wx;
        let w = CohomologyClass::new(wv);
        let winding = vec![0; m.dim()];
        let e = minimize_endpoint(&m, &x, &y, &winding, t, 12, &w).unwrap();
        prop_assert!(e.residual <= 1e-8, "residual {}", e.residual);
        let g = gradient_fd(&m, &e.curve, &w);
        prop_assert!(g <= 1e-6, "finite-difference gradient {g}");
    }

    #[test]
    fn refinement_is_second_order((m, x, y, _) in triple(), t in 0.5..1.0f64) {
        let winding = vec![0; m.dim()];
        let w = CohomologyClass::zero(m.dim());
        let a: Vec<f64> = [8, 16, 32]
            .iter()
            .map(|&n| minimize_endpoint(&m, &x, &y, &winding, t, n, &w).unwrap().action)
            .collect();
        let (d1, d2) = ((a[0] - a[1]).abs(), (a[1] - a[2]).abs());
        prop_assert!(d2 <= 1e-10 || d2 <= d1 / 3.0, "differences {d1} then {d2}");
    }

    #[test]
    fn exact_forms_do_not_change_loop_actions(
        (m, x, _, _) in triple(),
        g in common::field(2, 0.5),
        t in 0.5..1.5f64,
        wx in -1.0..1.0f64,
    ) {
        let n = m.dim();
        let g = if n == 2 { g } else { weakkam::model::FourierField::zero(1) };
        let mut wv = vec![0.0; n];
        wv[0] = wx;
        let w = CohomologyClass::new(wv);
        let loops = minimize_loop(&m, &x, t, 10, &w, 1).unwrap();
        for l in &loops {
            let plain = ClosedForm { class: w.clone(), exact: weakkam::model::FourierField::zero(n) };
            let shifted = ClosedForm { class: w.clone(), exact: g.clone() };
            let a = discrete_action_form(&m, &l.curve, &plain, 0.0);
            let b = discrete_action_form(&m, &l.curve, &shifted, 0.0);
            prop_assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
            prop_assert!((a - l.action).abs() <= 1e-12 * (1.0 + a.abs()));
        }
    }
}
