mod common;

use proptest::prelude::*;
use weakkam::barrier::{
    build_kernel, critical_value, default_v_max, mane_potential, minplus_power, peierls_barrier, ActionKernel,
    StateGrid, DEFAULT_WINDOW,
};
use weakkam::model::{CohomologyClass, LagrangianModel};

const GRID_TOL: f64 = 0.02;

fn setup(m: &LagrangianModel, wx: f64) -> (ActionKernel, f64) {
    let n = m.dim();
    let res = if n == 1 { 16 } else { 8 };
    let grid = StateGrid::new(n, res).unwrap();
    let mut wv = vec![0.0; n];
    wv[0] = wx;
    let w = CohomologyClass::new(wv);
    let kernel = build_kernel(m, &grid, 0.25, &w, default_v_max(&w)).unwrap();
    let c = critical_value(&kernel).unwrap().c;
    (kernel, c)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn barrier_order_axioms(
        m in common::model(0.3, 0.1),
        wx in -1.0..1.0f64,
        picks in prop::collection::vec((any::<prop::sample::Index>(), any::<prop::sample::Index>(), any::<prop::sample::Index>()), 50),
    ) {
        let (kernel, c) = setup(&m, wx);
        let table = peierls_barrier(&kernel, c, DEFAULT_WINDOW.0, DEFAULT_WINDOW.1, 1e-3).unwrap();
        let mane = mane_potential(&kernel, c, DEFAULT_WINDOW.1).unwrap();
        let n = kernel.grid().len();
        for (a, b, d) in picks {
            let (x, y, z) = (a.index(n), b.index(n), d.index(n));
            let h = |i, j| table.get(i, j);
            prop_assert!(h(x, z) <= h(x, y) + h(y, z) + 2.0 * GRID_TOL);
            prop_assert!(h(x, y) + h(y, x) >= -2.0 * GRID_TOL);
            prop_assert!(mane.get(x, y) <= h(x, y) + 1e-12);
            prop_assert!(mane.get(x, z) <= mane.get(x, y) + mane.get(y, z) + 1e-12);
        }
    }

    /// At `c` closed walks never gain and the optimal cycle breaks even; moving
    /// the offset by `±0.1` tilts the cycle value by `±0.1·δ` per step.
    #[test]
    fn critical_value_dichotomy(m in common::model(0.3, 0.1), wx in -1.0..1.0f64, k in 1u64..4) {
        let (kernel, c) = setup(&m, wx);
        let crit = critical_value(&kernel).unwrap();
        let node = crit.cycle[0];
        let t = k * crit.cycle.len() as u64;
        let at = |offset: f64| minplus_power(&kernel, t, offset).unwrap();
        let p = at(c);
        let min_diag = (0..kernel.grid().len()).map(|i| p.get(i, i)).fold(f64::INFINITY, f64::min);
        prop_assert!(min_diag >= -1e-9, "negative closed walk {min_diag}");
        prop_assert!(p.get(node, node).abs() <= 1e-9);
        for shift in [0.1, -0.1] {
            let q = at(c + shift);
            let expected = shift * kernel.step() * t as f64;
            prop_assert!((q.get(node, node) - expected).abs() <= 1e-9);
        }
    }
}
