mod common;

use common::{cotangent, dot, model, tangent};
use proptest::prelude::*;
use weakkam::model::{CohomologyClass, CotangentState, LagrangianModel, TangentState};

fn with_state() -> impl Strategy<Value = (LagrangianModel, TangentState, Vec<f64>)> {
    model(0.5, 0.3).prop_flat_map(|m| {
        let n = m.dim();
        (Just(m), tangent(n), common::coords(n, -2.0, 2.0))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn legendre_round_trip((m, s, _) in with_state()) {
        let back = m.legendre_inverse(&m.legendre(&s));
        for (a, b) in back.v.iter().zip(&s.v) {
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
        let c = m.legendre(&s);
        let again = m.legendre(&m.legendre_inverse(&c));
        for (a, b) in again.p.iter().zip(&c.p) {
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn energy_is_hamiltonian_of_momentum((m, s, _) in with_state()) {
        let p = m.legendre(&s);
        prop_assert_eq!(m.energy(&s), m.eval_hamiltonian(&p));
        // Against the textbook form ∂L/∂v·v − L.
        let direct = dot(&p.p, &s.v) - m.lagrangian(s.base.coords(), &s.v);
        prop_assert!((m.energy(&s) - direct).abs() <= 1e-10 * (1.0 + direct.abs()));
    }

    #[test]
    fn fenchel_inequality((m, s, p) in with_state()) {
        let x = s.base.coords();
        let gap = m.lagrangian(x, &s.v) + m.hamiltonian(x, &p) - dot(&p, &s.v);
        prop_assert!(gap >= -1e-10);
        let q = m.legendre(&s).p;
        let eq = m.lagrangian(x, &s.v) + m.hamiltonian(x, &q) - dot(&q, &s.v);
        prop_assert!(eq.abs() <= 1e-10 * (1.0 + dot(&q, &s.v).abs()));
    }

    #[test]
    fn twist_shifts_by_pairing((m, s, w) in with_state()) {
        let w = CohomologyClass::new(w);
        let zero = CohomologyClass::zero(m.dim());
        prop_assert_eq!(
            m.eval_lagrangian(&s, &w),
            m.eval_lagrangian(&s, &zero) - w.pair(&s.v)
        );
    }
}

/// `sup_v (p·v − L)` over a velocity lattice misses the maximum by at most
/// `½‖A‖·|Δv|²` where `Δv` is the distance to the nearest lattice point. The
/// lattice spans `[−8, 8]ⁿ`, which contains `A⁻¹(p − b)` for these models.
#[test]
fn hamiltonian_matches_sampled_sup() {
    let mut runner = proptest::test_runner::TestRunner::new(ProptestConfig::with_cases(24));
    let strat = model(0.5, 0.3).prop_flat_map(|m| {
        let n = m.dim();
        (Just(m), cotangent(n))
    });
    runner
        .run(&strat, |(m, z): (LagrangianModel, CotangentState)| {
            let x = z.base.coords();
            let spacing = 0.04;
            let half = 200i64;
            let n = m.dim();
            let mut best = f64::NEG_INFINITY;
            let mut idx = vec![-half; n];
            loop {
                let v: Vec<f64> = idx.iter().map(|&k| k as f64 * spacing).collect();
                best = best.max(dot(&z.p, &v) - m.lagrangian(x, &v));
                let mut d = 0;
                while d < n {
                    idx[d] += 1;
                    if idx[d] <= half {
                        break;
                    }
                    idx[d] = -half;
                    d += 1;
                }
                if d == n {
                    break;
                }
            }
            let h = m.hamiltonian(x, &z.p);
            let a_norm = m.kinetic().norm();
            let slack = 0.5 * a_norm * n as f64 * (spacing / 2.0).powi(2);
            prop_assert!(best <= h + 1e-12, "sampled sup {best} above H {h}");
            prop_assert!(best >= h - slack, "sampled sup {best} below H {h} − {slack}");
            Ok(())
        })
        .unwrap();
}
