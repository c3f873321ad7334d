mod common;

use nalgebra::DMatrix;
use proptest::prelude::*;
use weakkam::error::Error;
use weakkam::flow::{integrate_variational, FlowConfig};
use weakkam::green::{
    detect_conjugate, flow_direction_defect, green_bundles, inertia, push_vertical, relative_height,
};
use weakkam::model::{CotangentState, LagrangianModel};

fn with_base(potential: f64) -> impl Strategy<Value = (LagrangianModel, CotangentState)> {
    common::model(potential, 0.0).prop_flat_map(|m| {
        let n = m.dim();
        (Just(m), common::cotangent(n))
    })
}

fn random_sym(n: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-1.0..1.0f64, n * n).prop_map(move |e| {
        let e = DMatrix::from_vec(n, n, e);
        (&e + e.transpose()) * 0.5
    })
}

/// Slope of `M·graph(S)` and the sign of its `δx` determinant, or `None`
/// when the image is close to vertical.
fn image_slope(m: &DMatrix<f64>, s: &DMatrix<f64>) -> Option<(DMatrix<f64>, f64)> {
    let n = s.nrows();
    let mut g = DMatrix::zeros(2 * n, n);
    g.view_mut((0, 0), (n, n)).copy_from(&DMatrix::identity(n, n));
    g.view_mut((n, 0), (n, n)).copy_from(s);
    let img = m * g;
    let x = img.rows(0, n).into_owned();
    let p = img.rows(n, n).into_owned();
    let svd = x.clone().svd(false, false);
    let smin = svd.singular_values.iter().copied().fold(f64::INFINITY, f64::min);
    if smin < 1e-6 {
        return None;
    }
    let sign = x.determinant().signum();
    Some((p * x.try_inverse()?, sign))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn vertical_slopes_decrease_in_time((m, z) in with_base(0.02), t1 in 0.05..1.0f64, dt in 0.05..1.0f64) {
        let cfg = FlowConfig::default();
        let t2 = t1 + dt;
        let conj = detect_conjugate(&m, &z, -t2 - 0.05, t2 + 0.05, 0.01, &cfg).unwrap();
        prop_assume!(conj.is_empty());
        for sign in [1.0, -1.0] {
            let f1 = push_vertical(&m, &z, sign * t1, &cfg).unwrap();
            let f2 = push_vertical(&m, &z, sign * t2, &cfg).unwrap();
            // Q(F₂, F₁) = S_{t₁} − S_{t₂} for positive times, reversed for negative.
            let q = if sign > 0.0 { relative_height(&f2, &f1) } else { relative_height(&f1, &f2) }.unwrap();
            let lo = q.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
            prop_assert!(lo > -1e-9, "sign {sign}: eigenvalue {lo}");
        }
    }

    #[test]
    fn linear_flow_preserves_order(
        (m, z) in with_base(0.3),
        (s1, s2) in (1usize..=2).prop_flat_map(|n| (random_sym(n), random_sym(n))),
        tau in 0.1..1.5f64,
    ) {
        let n = m.dim();
        prop_assume!(s1.nrows() == n);
        // A positive gap: S₂ = S₁ + (S₂₀S₂₀ᵀ + 0.1 I).
        let s2 = &s1 + &s2 * s2.transpose() + DMatrix::identity(n, n) * 0.1;
        let cfg = FlowConfig::default();
        let mut t = 0.0;
        let steps = 40;
        let mut signs = (1.0, 1.0);
        for _ in 0..steps {
            t += tau / steps as f64;
            let (_, frame) = integrate_variational(&m, &z, t, &cfg).unwrap();
            let (Some((a, sa)), Some((b, sb))) = (image_slope(&frame.matrix, &s1), image_slope(&frame.matrix, &s2)) else {
                // A frame left the graph chart; the order claim stops here.
                return Ok(());
            };
            if (sa, sb) != signs {
                // A frame crossed the vertical between samples.
                return Ok(());
            }
            signs = (sa, sb);
            let (index, nullity, _, ev) = inertia(&(b - a), 1e-9);
            prop_assert_eq!(index, 0, "t = {}: {:?}", t, ev);
            prop_assert_eq!(nullity, 0);
        }
    }

    #[test]
    fn green_gap_is_nonnegative((m, z) in with_base(0.3)) {
        match green_bundles(&m, &z, 16.0, 1e-6, &FlowConfig::default()) {
            Ok(g) => {
                let (_, _, _, ev) = inertia(&g.gap(), 1e-6);
                prop_assert!(ev[0] >= -1e-6, "gap eigenvalues {ev:?}");
            }
            Err(Error::ConjugatePoint { .. }) => {}
            Err(e) => prop_assert!(false, "{e}"),
        }
    }
}

/// On the pendulum separatrix both Green bundles are the separatrix tangent.
/// Pushed verticals converge like `e^{−4πt}`, while integration error along
/// the separatrix grows like `e^{2πt}`, so the horizon is kept at `t = 2`.
#[test]
fn flow_direction_lies_in_both_bundles() {
    let pend = LagrangianModel::pendulum();
    let cfg = FlowConfig::default();
    for k in 1..=8 {
        let theta = 0.1 * k as f64;
        let p = 2.0 * (std::f64::consts::PI * theta).sin();
        let base = CotangentState::new(vec![theta], vec![p]);
        let g = green_bundles(&pend, &base, 2.0, 1e-9, &cfg).unwrap();
        for frame in [&g.plus, &g.minus] {
            let (defect, speed) = flow_direction_defect(&pend, frame);
            assert!(speed > 0.1);
            assert!(defect <= 1e-6, "θ = {theta}: defect {defect}");
        }
    }
}
