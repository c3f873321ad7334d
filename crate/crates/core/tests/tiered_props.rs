use proptest::prelude::*;
use weakkam::flow::FlowConfig;
use weakkam::model::{CohomologyClass, CotangentState, LagrangianModel};
use weakkam::occupation::{AlphaSolver, GridParams};
use weakkam::tiered::{
    class_run, lift_to_cloud, section_crossings, tiered_scan, Provenance, ScanParams, TieredCloud,
    TRANSVERSAL_SPEED,
};

const BARRIER_TOL: f64 = 1e-3;

/// `G·δ = 10`, so every class on the 0.1 lattice is a lattice velocity.
fn flat_params() -> ScanParams {
    ScanParams::new(GridParams::new(8, 1.25))
}

fn cloud_key(cloud: &TieredCloud) -> Vec<(Vec<u64>, Vec<u64>, Vec<u64>)> {
    let mut keys: Vec<_> = cloud
        .points
        .iter()
        .map(|q| {
            let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            (bits(&q.w.w), bits(q.state.base.coords()), bits(&q.state.p))
        })
        .collect();
    keys.sort();
    keys
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn flat_cloud_energy_and_graph(a in -10i32..=10, b in -10i32..=10) {
        let flat = LagrangianModel::flat(2);
        let params = flat_params();
        let w = CohomologyClass::new(vec![a as f64 / 10.0, b as f64 / 10.0]);
        let solver = AlphaSolver::new(&flat, &params.grid, w.max_abs()).unwrap();
        let run = class_run(&solver, &w, &params).unwrap();
        let cloud = lift_to_cloud(&flat, &w, run.alpha, &run.lift);
        prop_assert!(!cloud.is_empty());
        for q in &cloud.points {
            // Independent energy: ½|p|² on the flat torus.
            let e = 0.5 * q.state.p.iter().map(|p| p * p).sum::<f64>();
            prop_assert!((q.energy - e).abs() <= 1e-12);
        }
        prop_assert!(cloud.alpha_defect(Provenance::AubryApprox) <= BARRIER_TOL);
        prop_assert_eq!(cloud.graph_violations(1.0 / 8.0), 0);
    }

    #[test]
    fn section_crossings_are_transversal(
        theta in 0.0..1.0f64,
        phase in 0.0..1.0f64,
        p1 in -0.05..0.05f64,
        p2 in 0.5..2.0f64,
    ) {
        let model = LagrangianModel::pendulum_product();
        let start = CotangentState::new(vec![theta, phase], vec![p1, p2]);
        let crossings = section_crossings(&model, &start, 1, 5.0, 32, &FlowConfig::default()).unwrap();
        prop_assert!(!crossings.is_empty());
        for c in &crossings {
            prop_assert!(c.speed > TRANSVERSAL_SPEED, "speed {}", c.speed);
            // A base coordinate on the section: x₂ ∈ ℤ, stored wrapped.
            let x2 = c.state.base.coords()[1];
            prop_assert!(x2.min(1.0 - x2) <= 1e-8, "x₂ = {x2}");
        }
    }
}

#[test]
fn finer_class_lattices_give_supersets() {
    for (model, params) in [
        (LagrangianModel::flat(2), flat_params()),
        (LagrangianModel::pendulum_product(), ScanParams::new(GridParams::new(8, 0.25))),
    ] {
        let coarse = tiered_scan(&model, 1.0, 3, &params).unwrap();
        let fine = tiered_scan(&model, 1.0, 5, &params).unwrap();
        let fine_keys = cloud_key(&fine.cloud);
        for k in cloud_key(&coarse.cloud) {
            assert!(fine_keys.binary_search(&k).is_ok(), "coarse point missing from the fine scan");
        }
        assert!(fine.cloud.len() >= coarse.cloud.len());
    }
}
