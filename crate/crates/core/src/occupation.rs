//! Minimizing closed measures on the kernel graph and the α function.

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;

use crate::barrier::{critical_value, default_v_max, ActionKernel, CriticalValue, KernelTemplate, StateGrid};
use crate::error::{Error, Result};
use crate::io::csv_row;
use crate::karp::near_optimal_edges;
use crate::model::{CohomologyClass, FourierField, LagrangianModel};

/// Near-optimal cycles are those within this mean action per unit time.
pub const SUPPORT_EPSILON: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridParams {
    pub resolution: usize,
    pub step: f64,
    /// `None` selects `4·(1 + max|w|)`.
    pub v_max: Option<f64>,
}

impl GridParams {
    pub fn new(resolution: usize, step: f64) -> Self {
        Self {
            resolution,
            step,
            v_max: None,
        }
    }
}

/// Probability on kernel edges. Weights are `multiplicity / total` so that
/// flow conservation can be checked in integers.
#[derive(Clone, Debug, Serialize)]
pub struct DiscreteMeasure {
    pub support: Vec<(usize, usize)>,
    pub multiplicity: Vec<u32>,
    pub weights: Vec<f64>,
    /// Mean of `L − w·v` per unit time.
    pub mean_action: f64,
    /// Mean displacement per unit time.
    pub rotation: Vec<f64>,
    /// Total time of the carrying cycle.
    pub cycle_time: f64,
    /// Edges of every cycle within `SUPPORT_EPSILON` of optimal.
    pub support_union: Vec<(usize, usize)>,
    /// More than one optimal cycle exists.
    pub degenerate: bool,
}

impl DiscreteMeasure {
    /// In-multiplicity equals out-multiplicity at every node.
    pub fn is_flow_conserving(&self) -> bool {
        let mut balance: HashMap<usize, i64> = HashMap::new();
        for (&(u, v), &m) in self.support.iter().zip(&self.multiplicity) {
            *balance.entry(u).or_default() -= m as i64;
            *balance.entry(v).or_default() += m as i64;
        }
        balance.values().all(|&b| b == 0)
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }
}

fn measure_from(kernel: &ActionKernel, crit: &CriticalValue) -> DiscreteMeasure {
    let cycle = &crit.cycle;
    let len = cycle.len();
    let support: Vec<(usize, usize)> = (0..len).map(|k| (cycle[k], cycle[(k + 1) % len])).collect();
    let eps = SUPPORT_EPSILON * kernel.step();
    let union = near_optimal_edges(kernel.matrix(), &crit.solution, eps);
    let degenerate = union.len() > support.len();
    DiscreteMeasure {
        multiplicity: vec![1; len],
        weights: vec![1.0 / len as f64; len],
        mean_action: crit.solution.mean / kernel.step(),
        rotation: crit.rotation(kernel),
        cycle_time: len as f64 * kernel.step(),
        support,
        support_union: union,
        degenerate,
    }
}

/// Uniform measure on the optimal cycle of the kernel.
pub fn mather_measure(kernel: &ActionKernel) -> Result<DiscreteMeasure> {
    let crit = critical_value(kernel)?;
    Ok(measure_from(kernel, &crit))
}

#[derive(Clone, Debug, Serialize)]
pub struct AlphaSample {
    pub w: CohomologyClass,
    pub alpha: f64,
    pub measure: DiscreteMeasure,
    pub v_max: f64,
}

impl AlphaSample {
    pub fn point(&self) -> (Vec<f64>, f64) {
        (self.w.w.clone(), self.alpha)
    }
}

/// Builds one class-independent template and evaluates α at each class,
/// rebuilding with a doubled cap for classes whose optimal cycle hits it.
pub struct AlphaSolver<'a> {
    model: &'a LagrangianModel,
    grid: StateGrid,
    params: GridParams,
    template: KernelTemplate,
}

impl<'a> AlphaSolver<'a> {
    pub fn new(model: &'a LagrangianModel, params: &GridParams, max_abs_w: f64) -> Result<Self> {
        let grid = StateGrid::new(model.dim(), params.resolution)?;
        let cap = params
            .v_max
            .unwrap_or_else(|| 4.0 * (1.0 + max_abs_w));
        let template = KernelTemplate::build(model, &grid, params.step, cap)?;
        Ok(Self {
            model,
            grid,
            params: params.clone(),
            template,
        })
    }

    pub fn grid(&self) -> &StateGrid {
        &self.grid
    }

    /// Kernel, critical value and class for `w`.
    pub fn solve(&self, w: &CohomologyClass) -> Result<(ActionKernel, CriticalValue)> {
        let kernel = self.template.kernel(w)?;
        let crit = critical_value(&kernel)?;
        if !crit.touches_cap() {
            return Ok((kernel, crit));
        }
        let base = self.params.v_max.unwrap_or(self.template.v_max());
        crate::barrier::solve_class(self.model, &self.grid, self.params.step, w, Some(2.0 * base))
    }

    pub fn sample(&self, w: &CohomologyClass) -> Result<AlphaSample> {
        let (kernel, crit) = self.solve(w)?;
        Ok(AlphaSample {
            w: w.clone(),
            alpha: crit.c,
            measure: measure_from(&kernel, &crit),
            v_max: kernel.v_max(),
        })
    }
}

/// `α(w) = c(L − w·v)` on the grid.
pub fn alpha(model: &LagrangianModel, w: &CohomologyClass, params: &GridParams) -> Result<AlphaSample> {
    let mut p = params.clone();
    p.v_max = Some(params.v_max.unwrap_or_else(|| default_v_max(w)));
    AlphaSolver::new(model, &p, w.max_abs())?.sample(w)
}

/// The `res^n` lattice of classes in `[−box, box]^n` (the single class 0
/// when `res = 1`), first coordinate fastest.
pub fn class_lattice(dim: usize, w_box: f64, res: usize) -> Vec<CohomologyClass> {
    let axis: Vec<f64> = if res <= 1 {
        vec![0.0]
    } else {
        (0..res)
            .map(|i| -w_box + 2.0 * w_box * i as f64 / (res - 1) as f64)
            .collect()
    };
    let r = axis.len();
    (0..r.pow(dim as u32))
        .map(|i| {
            let w = (0..dim).map(|k| axis[(i / r.pow(k as u32)) % r]).collect();
            CohomologyClass::new(w)
        })
        .collect()
}

pub fn alpha_grid(
    model: &LagrangianModel,
    w_box: f64,
    res: usize,
    params: &GridParams,
) -> Result<Vec<AlphaSample>> {
    let solver = AlphaSolver::new(model, params, w_box)?;
    class_lattice(model.dim(), w_box, res)
        .iter()
        .map(|w| solver.sample(w))
        .collect()
}

/// CSV with columns `w1..wn, alpha, rho1..rhon`.
pub fn alpha_table_csv(samples: &[AlphaSample]) -> String {
    let n = samples.first().map_or(0, |s| s.w.dim());
    let mut header: Vec<String> = (1..=n).map(|i| format!("w{i}")).collect();
    header.push("alpha".into());
    header.extend((1..=n).map(|i| format!("rho{i}")));
    let mut text = header.join(",");
    text.push('\n');
    for s in samples {
        let mut row = s.w.w.clone();
        row.push(s.alpha);
        row.extend_from_slice(&s.measure.rotation);
        text.push_str(&csv_row(&row));
        text.push('\n');
    }
    text
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvexityReport {
    pub midpoints_checked: usize,
    /// `max(0, 2α(mid) − α(w₁) − α(w₂))` over lattice midpoints.
    pub worst_violation: f64,
    pub worst_pair: Option<(Vec<f64>, Vec<f64>)>,
}

impl ConvexityReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.worst_violation <= tol
    }
}

fn lattice_key(w: &[f64]) -> Vec<i64> {
    w.iter().map(|x| (x * 1e9).round() as i64).collect()
}

/// Midpoint convexity over every pair whose midpoint is also sampled.
pub fn convexity_check(points: &[(Vec<f64>, f64)]) -> ConvexityReport {
    let index: BTreeMap<Vec<i64>, f64> = points.iter().map(|(w, a)| (lattice_key(w), *a)).collect();
    let mut report = ConvexityReport {
        midpoints_checked: 0,
        worst_violation: 0.0,
        worst_pair: None,
    };
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            let mid: Vec<f64> = points[i].0.iter().zip(&points[j].0).map(|(a, b)| 0.5 * (a + b)).collect();
            if let Some(&am) = index.get(&lattice_key(&mid)) {
                report.midpoints_checked += 1;
                let v = 2.0 * am - points[i].1 - points[j].1;
                if v > report.worst_violation {
                    report.worst_violation = v;
                    report.worst_pair = Some((points[i].0.clone(), points[j].0.clone()));
                }
            }
        }
    }
    report
}

#[derive(Clone, Debug, Serialize)]
pub struct ContinuityReport {
    pub c_base: f64,
    pub c_perturbed: f64,
    pub shift: f64,
    /// `max|ψ|` over a lattice four times finer than the grid.
    pub psi_sup: f64,
    /// `max|ψ|` over the half-grid, where kernel midpoints live; the discrete
    /// shift can never exceed it.
    pub psi_sup_midpoints: f64,
    pub bound: f64,
}

impl ContinuityReport {
    pub fn passes(&self, grid_tol: f64) -> bool {
        self.shift.abs() <= self.psi_sup + grid_tol
    }
}

fn lattice_sup(f: &FourierField, res: usize) -> f64 {
    let dim = f.dim();
    let total = res.pow(dim as u32);
    (0..total)
        .map(|mut i| {
            let x: Vec<f64> = (0..dim)
                .map(|_| {
                    let c = i % res;
                    i /= res;
                    c as f64 / res as f64
                })
                .collect();
            f.eval(&x).abs()
        })
        .fold(0.0, f64::max)
}

/// Compares `c(L)` with `c(L + ψ)` on one grid (class 0).
pub fn perturbation_continuity(
    model: &LagrangianModel,
    psi: &FourierField,
    params: &GridParams,
) -> Result<ContinuityReport> {
    if psi.dim() != model.dim() {
        return Err(Error::InvalidArgument("perturbation has the wrong dimension".into()));
    }
    let w = CohomologyClass::zero(model.dim());
    let base = alpha(model, &w, params)?.alpha;
    let perturbed = alpha(&model.add_to_lagrangian(psi)?, &w, params)?.alpha;
    let psi_sup = lattice_sup(psi, 4 * params.resolution);
    let mid = lattice_sup(psi, 2 * params.resolution);
    Ok(ContinuityReport {
        c_base: base,
        c_perturbed: perturbed,
        shift: perturbed - base,
        psi_sup,
        psi_sup_midpoints: mid,
        bound: psi_sup,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::FourierMode;

    #[test]
    fn flat_measures() {
        let flat = LagrangianModel::flat(2);
        let p = GridParams::new(8, 0.5);
        let s = alpha(&flat, &CohomologyClass::zero(2), &p).unwrap();
        assert!(s.alpha.abs() < 1e-9);
        assert_eq!(s.measure.support.len(), 1);
        assert_eq!(s.measure.support[0].0, s.measure.support[0].1);
        assert!(s.measure.degenerate);
        assert_eq!(s.measure.rotation, vec![0.0, 0.0]);
        assert!(s.measure.mean_action.abs() < 1e-12);

        let p = GridParams::new(16, 0.25);
        let s = alpha(&flat, &CohomologyClass::new(vec![1.0, 0.0]), &p).unwrap();
        assert!((s.alpha - 0.5).abs() < 1e-12);
        assert!((s.measure.rotation[0] - 1.0).abs() < 1e-12 && s.measure.rotation[1].abs() < 1e-12);
        assert!(s.measure.is_flow_conserving());
        assert!((s.measure.total_weight() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn pendulum_measure_rests_at_the_top() {
        let s = alpha(&LagrangianModel::pendulum(), &CohomologyClass::zero(1), &GridParams::new(64, 0.1)).unwrap();
        assert_eq!(s.measure.support, vec![(0, 0)]);
        assert!((s.measure.mean_action - 0.5).abs() < 1e-12);
        assert!((s.alpha + 0.5).abs() < 1e-12);
    }

    #[test]
    fn product_along_the_circle() {
        let product = LagrangianModel::pendulum_product();
        let p = GridParams::new(16, 0.25);
        for s in [0.0, 1.0] {
            let a = alpha(&product, &CohomologyClass::new(vec![0.0, s]), &p).unwrap();
            assert!((a.alpha - (-0.5 + 0.5 * s * s)).abs() < 2e-2, "s = {s}: {}", a.alpha);
        }
    }

    #[test]
    fn lattice_layout() {
        let l = class_lattice(2, 1.0, 3);
        assert_eq!(l.len(), 9);
        assert_eq!(l[0].w, vec![-1.0, -1.0]);
        assert_eq!(l[1].w, vec![0.0, -1.0]);
        assert_eq!(class_lattice(2, 1.0, 1)[0].w, vec![0.0, 0.0]);
    }

    #[test]
    fn convexity_reports() {
        let convex: Vec<(Vec<f64>, f64)> = (0..5).map(|i| (vec![i as f64], (i as f64).powi(2))).collect();
        let r = convexity_check(&convex);
        assert!(r.midpoints_checked > 0 && r.passes(0.0));
        assert!(convexity_check(&convex[..1]).passes(0.0));
        let bumpy = vec![(vec![0.0], 0.0), (vec![1.0], 1.0), (vec![2.0], 0.0)];
        let r = convexity_check(&bumpy);
        assert!((r.worst_violation - 2.0).abs() < 1e-15);
        assert!(!r.passes(1e-3));
    }

    #[test]
    fn constant_perturbations_shift_c_exactly() {
        let pend = LagrangianModel::pendulum();
        let p = GridParams::new(32, 0.1);
        let r = perturbation_continuity(&pend, &FourierField::constant(1, 0.3), &p).unwrap();
        assert!((r.shift + 0.3).abs() < 1e-9);
        let r = perturbation_continuity(&pend, &FourierField::zero(1), &p).unwrap();
        assert_eq!(r.shift, 0.0);
        let cosine = FourierField::new(1, vec![FourierMode { k: vec![1], cos: 0.1, sin: 0.0 }]).unwrap();
        let r = perturbation_continuity(&pend, &cosine, &p).unwrap();
        assert!(r.shift.abs() <= r.psi_sup_midpoints + 1e-12);
        // The bound is attained here: c moves by exactly −0.1 up to rounding.
        assert!(r.passes(1e-12));
    }
}
