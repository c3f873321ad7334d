//! Sweeps over cohomology classes: tiered clouds in `T*T^n`, energy slices,
//! ε-chain connectivity, the radial periodicity probe and the
//! pendulum-times-circle scenario with its separatrix traces.

use std::collections::HashMap;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use petgraph::unionfind::UnionFind;
use rayon::prelude::*;
use serde::Serialize;

use crate::barrier::{aubry_lift, peierls_barrier, AubryLift, BarrierTable, DEFAULT_WINDOW};
use crate::curves::{sample_radial, DEFAULT_WINDING_BOUND};
use crate::error::{Error, Result};
use crate::flow::{
    field, find_periodic, flow_lifted, lift, rk4_step, unlift, FlowConfig, NewtonConfig, PeriodGauge,
    PeriodicOrbit,
};
use crate::green::{classify_periodic, Classification};
use crate::io::{csv_row, fmt_f64};
use crate::model::{
    wrap_centered, CohomologyClass, CotangentState, FourierField, LagrangianModel, TangentState, TorusPoint,
};
use crate::occupation::{class_lattice, AlphaSolver, GridParams};

/// Minimum speed across the section at every recorded crossing.
pub const TRANSVERSAL_SPEED: f64 = 0.1;
/// Crossing times are bisected to this width.
pub const CROSSING_TIME_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Provenance {
    AubryApprox,
    LoopMin,
    Orbit,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::AubryApprox => "AUBRY_APPROX",
            Provenance::LoopMin => "LOOP_MIN",
            Provenance::Orbit => "ORBIT",
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CloudPoint {
    pub state: CotangentState,
    pub w: CohomologyClass,
    /// `H(state)`.
    pub energy: f64,
    /// `α(w)` of the tag.
    pub alpha: f64,
    pub provenance: Provenance,
}

impl CloudPoint {
    pub fn new(
        model: &LagrangianModel,
        state: CotangentState,
        w: CohomologyClass,
        alpha: f64,
        provenance: Provenance,
    ) -> Self {
        let energy = model.eval_hamiltonian(&state);
        Self {
            state,
            w,
            energy,
            alpha,
            provenance,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct TieredCloud {
    pub points: Vec<CloudPoint>,
}

impl TieredCloud {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn push(&mut self, point: CloudPoint) {
        self.points.push(point);
    }

    pub fn extend(&mut self, other: TieredCloud) {
        self.points.extend(other.points);
    }

    /// `max |energy − H(state)|`.
    pub fn energy_defect(&self, model: &LagrangianModel) -> f64 {
        self.points
            .iter()
            .map(|q| (q.energy - model.eval_hamiltonian(&q.state)).abs())
            .fold(0.0, f64::max)
    }

    /// `max |H(state) − α(w)|` over points of the given provenance.
    pub fn alpha_defect(&self, provenance: Provenance) -> f64 {
        self.points
            .iter()
            .filter(|q| q.provenance == provenance)
            .map(|q| (q.energy - q.alpha).abs())
            .fold(0.0, f64::max)
    }

    /// Pairs with the same class whose bases are within `resolution` while
    /// their momenta differ by more than `resolution`.
    pub fn graph_violations(&self, resolution: f64) -> usize {
        let mut groups: HashMap<Vec<u64>, Vec<&CotangentState>> = HashMap::new();
        for q in &self.points {
            let key = q.w.w.iter().map(|x| x.to_bits()).collect();
            groups.entry(key).or_default().push(&q.state);
        }
        groups
            .values()
            .map(|g| {
                let mut count = 0;
                for (i, a) in g.iter().enumerate() {
                    for b in &g[i + 1..] {
                        if a.base.distance(&b.base) <= resolution && momentum_gap(a, b) > resolution {
                            count += 1;
                        }
                    }
                }
                count
            })
            .sum()
    }

    /// Columns `x1..xn, p1..pn, w1..wn, energy, alpha, provenance`.
    pub fn to_csv(&self) -> String {
        let n = self.points.first().map_or(0, |q| q.state.dim());
        let mut head: Vec<String> = Vec::new();
        for prefix in ["x", "p", "w"] {
            head.extend((1..=n).map(|i| format!("{prefix}{i}")));
        }
        head.extend(["energy".into(), "alpha".into(), "provenance".into()]);
        let mut out = head.join(",");
        out.push('\n');
        for q in &self.points {
            let mut row = q.state.base.coords().to_vec();
            row.extend(&q.state.p);
            row.extend(&q.w.w);
            row.push(q.energy);
            row.push(q.alpha);
            let _ = writeln!(out, "{},{}", csv_row(&row), q.provenance.as_str());
        }
        out
    }
}

fn momentum_gap(a: &CotangentState, b: &CotangentState) -> f64 {
    a.p.iter()
        .zip(&b.p)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Distance on `T*T^n` without allocating.
fn phase_distance(a: &CotangentState, b: &CotangentState) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.base.coords().iter().zip(b.base.coords()) {
        let d = wrap_centered(x - y);
        s += d * d;
    }
    for (x, y) in a.p.iter().zip(&b.p) {
        s += (x - y) * (x - y);
    }
    s.sqrt()
}

/// Settings of the per-class barrier pipeline.
#[derive(Clone, Debug)]
pub struct ScanParams {
    pub grid: GridParams,
    pub window: (f64, f64),
    /// Recorded as the barrier convergence flag.
    pub barrier_tol: f64,
    /// Nodes with `h(x, x) ≤ aubry_tol` form the projected Aubry set.
    pub aubry_tol: f64,
    /// `(h, tol)`: run the barrier only for classes with `|α(w) − h| ≤ tol`.
    pub energy_filter: Option<(f64, f64)>,
}

impl ScanParams {
    pub fn new(grid: GridParams) -> Self {
        Self {
            grid,
            window: DEFAULT_WINDOW,
            barrier_tol: 1e-3,
            aubry_tol: 1e-3,
            energy_filter: None,
        }
    }
}

pub struct ClassRun {
    pub alpha: f64,
    pub table: BarrierTable,
    pub lift: AubryLift,
}

/// Critical value, barrier table and Aubry lift for one class.
pub fn class_run(solver: &AlphaSolver, w: &CohomologyClass, params: &ScanParams) -> Result<ClassRun> {
    let (kernel, crit) = solver.solve(w)?;
    let table = peierls_barrier(&kernel, crit.c, params.window.0, params.window.1, params.barrier_tol)?;
    let lift = aubry_lift(&table, &kernel, params.aubry_tol)?;
    Ok(ClassRun {
        alpha: crit.c,
        table,
        lift,
    })
}

/// The lifted Aubry states of a class moved to `T*T^n`.
pub fn lift_to_cloud(
    model: &LagrangianModel,
    w: &CohomologyClass,
    alpha: f64,
    lift: &AubryLift,
) -> TieredCloud {
    TieredCloud {
        points: lift
            .states
            .iter()
            .map(|s| CloudPoint::new(model, model.legendre(s), w.clone(), alpha, Provenance::AubryApprox))
            .collect(),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ClassOutcome {
    pub w: Vec<f64>,
    pub alpha: Option<f64>,
    pub barrier_residual: Option<f64>,
    pub barrier_converged: bool,
    pub aubry_nodes: usize,
    pub ties: usize,
    /// Filtered out by the energy window before the barrier ran.
    pub skipped: bool,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct TieredScan {
    pub cloud: TieredCloud,
    pub classes: Vec<ClassOutcome>,
}

/// Runs the barrier pipeline on the `w_res^n` lattice of `[−w_box, w_box]^n`.
/// Failures are recorded per class and the remaining classes still run.
pub fn tiered_scan(
    model: &LagrangianModel,
    w_box: f64,
    w_res: usize,
    params: &ScanParams,
) -> Result<TieredScan> {
    let solver = AlphaSolver::new(model, &params.grid, w_box)?;
    let classes = class_lattice(model.dim(), w_box, w_res);
    let runs: Vec<(ClassOutcome, TieredCloud)> = classes
        .par_iter()
        .map(|w| scan_one(model, &solver, w, params))
        .collect();
    let mut cloud = TieredCloud::new();
    let mut outcomes = Vec::with_capacity(runs.len());
    for (o, c) in runs {
        outcomes.push(o);
        cloud.extend(c);
    }
    Ok(TieredScan {
        cloud,
        classes: outcomes,
    })
}

fn scan_one(
    model: &LagrangianModel,
    solver: &AlphaSolver,
    w: &CohomologyClass,
    params: &ScanParams,
) -> (ClassOutcome, TieredCloud) {
    let mut out = ClassOutcome {
        w: w.w.clone(),
        alpha: None,
        barrier_residual: None,
        barrier_converged: false,
        aubry_nodes: 0,
        ties: 0,
        skipped: false,
        error: None,
    };
    let (kernel, crit) = match solver.solve(w) {
        Ok(r) => r,
        Err(e) => {
            out.error = Some(e.to_string());
            return (out, TieredCloud::new());
        }
    };
    out.alpha = Some(crit.c);
    if let Some((h, tol)) = params.energy_filter {
        if (crit.c - h).abs() > tol {
            out.skipped = true;
            return (out, TieredCloud::new());
        }
    }
    let run = peierls_barrier(&kernel, crit.c, params.window.0, params.window.1, params.barrier_tol)
        .and_then(|table| aubry_lift(&table, &kernel, params.aubry_tol).map(|l| (table, l)));
    match run {
        Ok((table, lift)) => {
            out.barrier_residual = Some(table.meta.residual);
            out.barrier_converged = table.meta.converged;
            out.aubry_nodes = lift.nodes.len();
            out.ties = lift.ties.len();
            let cloud = lift_to_cloud(model, w, crit.c, &lift);
            (out, cloud)
        }
        Err(e) => {
            out.error = Some(e.to_string());
            (out, TieredCloud::new())
        }
    }
}

/// Points with `|energy − h| ≤ tol`.
pub fn energy_slice(cloud: &TieredCloud, h: f64, tol: f64) -> TieredCloud {
    TieredCloud {
        points: cloud
            .points
            .iter()
            .filter(|q| (q.energy - h).abs() <= tol)
            .cloned()
            .collect(),
    }
}

/// Cloud points joined when their phase-space distance is at most `epsilon`.
#[derive(Clone, Debug)]
pub struct ChainGraph {
    pub epsilon: f64,
    pub adjacency: Vec<Vec<usize>>,
    /// Each component sorted, components ordered by their first member.
    pub components: Vec<Vec<usize>>,
}

impl ChainGraph {
    pub fn build(cloud: &TieredCloud, epsilon: f64) -> Self {
        let pts = &cloud.points;
        let n = pts.len();
        let adjacency: Vec<Vec<usize>> = (0..n)
            .into_par_iter()
            .map(|i| {
                (0..n)
                    .filter(|&j| j != i && phase_distance(&pts[i].state, &pts[j].state) <= epsilon)
                    .collect()
            })
            .collect();
        let mut uf = UnionFind::<usize>::new(n);
        for (i, nb) in adjacency.iter().enumerate() {
            for &j in nb {
                uf.union(i, j);
            }
        }
        let mut by_root: HashMap<usize, Vec<usize>> = HashMap::new();
        for i in 0..n {
            by_root.entry(uf.find(i)).or_default().push(i);
        }
        let mut components: Vec<Vec<usize>> = by_root.into_values().collect();
        components.sort_by_key(|c| c[0]);
        Self {
            epsilon,
            adjacency,
            components,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ConnectivityReport {
    pub points: usize,
    pub epsilon: f64,
    pub components: usize,
    pub largest_component: usize,
    /// Smallest ε at which the chain graph is connected.
    pub connecting_epsilon: f64,
}

impl ConnectivityReport {
    pub fn connected(&self) -> bool {
        self.components <= 1
    }
}

pub fn connectivity_check(cloud: &TieredCloud, epsilon: f64) -> ConnectivityReport {
    let graph = ChainGraph::build(cloud, epsilon);
    ConnectivityReport {
        points: cloud.len(),
        epsilon,
        components: graph.components.len(),
        largest_component: graph.components.iter().map(Vec::len).max().unwrap_or(0),
        connecting_epsilon: bottleneck_epsilon(cloud),
    }
}

/// Longest edge of a minimum spanning tree (dense Prim), which is exactly
/// the connectivity threshold of the chain graph.
fn bottleneck_epsilon(cloud: &TieredCloud) -> f64 {
    let pts = &cloud.points;
    let n = pts.len();
    if n <= 1 {
        return 0.0;
    }
    let mut best = vec![f64::INFINITY; n];
    let mut done = vec![false; n];
    let mut current = 0;
    done[0] = true;
    let mut longest = 0.0f64;
    for _ in 1..n {
        let mut next = usize::MAX;
        let mut next_d = f64::INFINITY;
        for j in 0..n {
            if done[j] {
                continue;
            }
            let d = phase_distance(&pts[current].state, &pts[j].state);
            if d < best[j] {
                best[j] = d;
            }
            if best[j] < next_d {
                next_d = best[j];
                next = j;
            }
        }
        done[next] = true;
        longest = longest.max(next_d);
        current = next;
    }
    longest
}

#[derive(Clone, Debug)]
pub struct RadialParams {
    pub scan: ScanParams,
    /// A radial tangent is tested when it lies within `tol` of the Aubry lift.
    pub tol: f64,
    pub winding_bound: i64,
    /// Base points of the loops; every grid node when `None`.
    pub bases: Option<Vec<TorusPoint>>,
}

impl RadialParams {
    pub fn new(scan: ScanParams) -> Self {
        Self {
            scan,
            tol: 1e-6,
            winding_bound: DEFAULT_WINDING_BOUND,
            bases: None,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RadialEntry {
    pub tangent: TangentState,
    pub lift_distance: f64,
    /// `‖Φ_T(z) − z‖∞`, only for tangents near the lift.
    pub residual: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RadialReport {
    pub period: f64,
    pub tol: f64,
    pub entries: Vec<RadialEntry>,
    pub in_scope: usize,
    pub exempt: usize,
    pub max_residual: f64,
    pub passes: bool,
}

/// Loop minimizers of duration `T` whose initial tangent lies on the Aubry
/// lift of `w` must start `T`-periodic orbits.
pub fn radial_periodicity_check(
    model: &LagrangianModel,
    w: &CohomologyClass,
    t: f64,
    params: &RadialParams,
    flow: &FlowConfig,
) -> Result<RadialReport> {
    let step = params.scan.grid.step;
    let segments = (t / step).round();
    if !(t > 0.0) || segments < 1.0 || (segments * step - t).abs() > 1e-9 * t.max(1.0) {
        return Err(Error::InvalidArgument(format!(
            "period {t} is not a positive multiple of the step {step}"
        )));
    }
    let solver = AlphaSolver::new(model, &params.scan.grid, w.max_abs())?;
    let run = class_run(&solver, w, &params.scan)?;
    let bases: Vec<TorusPoint> = match &params.bases {
        Some(b) => b.clone(),
        None => (0..solver.grid().len()).map(|i| solver.grid().point(i)).collect(),
    };
    let tangents = sample_radial(model, w, t, &bases, segments as usize, params.winding_bound)?;
    let entries: Vec<RadialEntry> = tangents
        .into_par_iter()
        .map(|tangent| {
            let lift_distance = run
                .lift
                .states
                .iter()
                .map(|s| s.distance(&tangent))
                .fold(f64::INFINITY, f64::min);
            let residual = if lift_distance <= params.tol {
                let z = lift(&model.legendre(&tangent));
                Some(flow_lifted(model, &z, t, flow).map(|z1| periodic_gap(&z, &z1)))
            } else {
                None
            };
            (tangent, lift_distance, residual)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .map(|(tangent, lift_distance, residual)| {
            Ok(RadialEntry {
                tangent,
                lift_distance,
                residual: residual.transpose()?,
            })
        })
        .collect::<Result<_>>()?;
    let in_scope = entries.iter().filter(|e| e.residual.is_some()).count();
    let max_residual = entries
        .iter()
        .filter_map(|e| e.residual)
        .fold(0.0, f64::max);
    Ok(RadialReport {
        period: t,
        tol: params.tol,
        in_scope,
        exempt: entries.len() - in_scope,
        max_residual,
        passes: max_residual <= 10.0 * params.tol,
        entries,
    })
}

fn periodic_gap(z0: &[f64], z1: &[f64]) -> f64 {
    let n = z0.len() / 2;
    (0..2 * n)
        .map(|i| {
            let d = z1[i] - z0[i];
            if i < n { wrap_centered(d).abs() } else { d.abs() }
        })
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug, Serialize)]
pub struct SectionCrossing {
    /// Signed flow time from the start.
    pub time: f64,
    pub state: CotangentState,
    /// Rate of change of the section coordinate.
    pub speed: f64,
}

/// Crossings of the hypersurfaces `x_axis ∈ ℤ` along the flow for time
/// `t_max` (either sign), each located by bisection in time.
pub fn section_crossings(
    model: &LagrangianModel,
    start: &CotangentState,
    axis: usize,
    t_max: f64,
    max_crossings: usize,
    cfg: &FlowConfig,
) -> Result<Vec<SectionCrossing>> {
    let (steps, h) = cfg.steps_for(t_max)?;
    let mut z = lift(start);
    let mut out = Vec::new();
    for k in 0..steps {
        let z1 = rk4_step(model, &z, h);
        let level = z[axis].floor().max(z1[axis].floor());
        let crosses = (z[axis] - level) * (z1[axis] - level) <= 0.0 && z[axis].floor() != z1[axis].floor();
        if crosses && !(k == 0 && z[axis] == level) {
            let (mut lo, mut hi) = (0.0f64, h);
            let g0 = z[axis] - level;
            while (hi - lo).abs() > CROSSING_TIME_TOLERANCE {
                let mid = 0.5 * (lo + hi);
                let g = rk4_step(model, &z, mid)[axis] - level;
                if (g > 0.0) == (g0 > 0.0) && g != 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let tau = 0.5 * (lo + hi);
            let mut zc = rk4_step(model, &z, tau);
            zc[axis] = level;
            out.push(SectionCrossing {
                time: k as f64 * h + tau,
                speed: field(model, &zc)[axis],
                state: unlift(&zc),
            });
            if out.len() >= max_crossings {
                break;
            }
        }
        z = z1;
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ManifoldKind {
    Stable,
    Unstable,
}

/// A section point `(θ, p)` of the non-section degree of freedom; `param`
/// orders points along the branch (return count plus seed phase).
#[derive(Clone, Copy, Debug, Serialize)]
pub struct TracePoint {
    pub param: f64,
    pub theta: f64,
    pub p: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ManifoldTrace {
    pub kind: ManifoldKind,
    pub branch: i8,
    pub points: Vec<TracePoint>,
}

#[derive(Clone, Debug)]
pub struct ScenarioParams {
    pub scan: ScanParams,
    /// Added to the potential of the product model.
    pub psi: FourierField,
    pub guess: CotangentState,
    pub period: f64,
    pub t_cap: f64,
    pub green_tol: f64,
    pub seeds: usize,
    pub returns: usize,
    pub offset: f64,
    pub flow: FlowConfig,
    /// Integration settings for the manifold traces.
    pub trace_flow: FlowConfig,
    /// Distance below which a trace point counts as lying on the other trace.
    pub coincidence_tol: f64,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            scan: ScanParams::new(GridParams::new(32, 0.125)),
            psi: FourierField::zero(2),
            guess: CotangentState::new(vec![0.01, 0.02], vec![0.01, 1.0]),
            period: 1.0,
            t_cap: 200.0,
            green_tol: 1e-2,
            seeds: 256,
            returns: 10,
            offset: 1e-7,
            flow: FlowConfig::default(),
            trace_flow: FlowConfig::with_step(2e-3),
            coincidence_tol: 1e-3,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct OrbitSummary {
    pub anchor: CotangentState,
    pub period: f64,
    pub residual: f64,
    pub energy: f64,
    pub floquet: Vec<(f64, f64)>,
    /// Largest relative distance to `{e^{2π}, 1, 1, e^{−2π}}`.
    pub floquet_error: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SectionSummary {
    pub energy: f64,
    pub crossings: usize,
    pub min_speed: f64,
    pub transversal: bool,
    pub orbit_crossings: Vec<SectionCrossing>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ArcSummary {
    /// Unstable trace points within the coincidence tolerance of the stable trace.
    pub on_stable: usize,
    pub off_stable: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct StageError {
    pub stage: String,
    pub message: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScenarioReport {
    pub alpha: Option<f64>,
    pub aubry_points: usize,
    /// Hausdorff distance of the Aubry cloud to `{(0, θ₂, 0, 1)}`.
    pub hausdorff: Option<f64>,
    pub orbit: Option<OrbitSummary>,
    pub classification: Option<Classification>,
    /// Largest entry of `S± ∓ diag(2π, 0)`.
    pub green_deviation: Option<f64>,
    pub section: Option<SectionSummary>,
    pub unstable: Vec<ManifoldTrace>,
    pub stable: Vec<ManifoldTrace>,
    /// Symmetric sup distance between the stable and unstable traces.
    pub splitting: Option<f64>,
    pub arcs: Option<ArcSummary>,
    pub errors: Vec<StageError>,
    #[serde(skip)]
    pub cloud: TieredCloud,
}

impl ScenarioReport {
    fn fail(&mut self, stage: &str, e: Error) {
        self.errors.push(StageError {
            stage: stage.into(),
            message: e.to_string(),
        });
    }
}

/// End-to-end run on `½|p|² + cos 2πθ₁ − 3/2 (+ psi)`.
pub fn pendulum_product_scenario(params: &ScenarioParams) -> Result<ScenarioReport> {
    let model = LagrangianModel::pendulum_product().with_psi(params.psi.clone())?;
    let w = CohomologyClass::new(vec![0.0, 1.0]);
    let mut report = ScenarioReport {
        alpha: None,
        aubry_points: 0,
        hausdorff: None,
        orbit: None,
        classification: None,
        green_deviation: None,
        section: None,
        unstable: vec![],
        stable: vec![],
        splitting: None,
        arcs: None,
        errors: vec![],
        cloud: TieredCloud::new(),
    };

    match AlphaSolver::new(&model, &params.scan.grid, 1.0).and_then(|s| class_run(&s, &w, &params.scan)) {
        Ok(run) => {
            report.alpha = Some(run.alpha);
            report.aubry_points = run.lift.states.len();
            let cloud = lift_to_cloud(&model, &w, run.alpha, &run.lift);
            report.hausdorff = Some(hausdorff_to_cylinder(&cloud));
            report.cloud.extend(cloud);
        }
        Err(e) => report.fail("aubry", e),
    }

    let orbit = match find_periodic(
        &model,
        &params.guess,
        params.period,
        PeriodGauge::FixPeriod,
        &params.flow,
        &NewtonConfig::default(),
    ) {
        Ok(o) => o,
        Err(e) => {
            report.fail("orbit", e);
            return Ok(report);
        }
    };
    let energy = model.eval_hamiltonian(&orbit.anchor);
    report.orbit = Some(OrbitSummary {
        anchor: orbit.anchor.clone(),
        period: orbit.period,
        residual: orbit.residual,
        energy,
        floquet: orbit.floquet.iter().map(|c| (c.re, c.im)).collect(),
        floquet_error: floquet_error(&orbit),
    });
    let alpha_tag = report.alpha.unwrap_or(energy);
    let stride = (orbit.trajectory.samples.len() / 64).max(1);
    for s in orbit.trajectory.samples.iter().step_by(stride) {
        report
            .cloud
            .push(CloudPoint::new(&model, s.clone(), w.clone(), alpha_tag, Provenance::Orbit));
    }

    match classify_periodic(&model, &orbit, params.t_cap, params.green_tol, &params.flow) {
        Ok(c) => {
            report.green_deviation = Some(green_deviation(&c));
            report.classification = Some(c);
        }
        Err(e) => report.fail("classify", e),
    }

    let orbit_crossings =
        match section_crossings(&model, &orbit.anchor, 1, 2.0 * params.period + 0.5, 2, &params.flow) {
            Ok(c) if !c.is_empty() => c,
            Ok(_) => {
                report.fail("section", Error::Numerical("orbit never crosses the section".into()));
                return Ok(report);
            }
            Err(e) => {
                report.fail("section", e);
                return Ok(report);
            }
        };
    let on_section = orbit_crossings[0].state.clone();
    let mut min_speed = orbit_crossings.iter().map(|c| c.speed.abs()).fold(f64::INFINITY, f64::min);
    let mut crossings = orbit_crossings.len();

    match trace_manifolds(&model, &on_section, params) {
        Ok((unstable, stable, speeds)) => {
            crossings += speeds.len();
            min_speed = speeds.iter().copied().fold(min_speed, f64::min);
            report.unstable = unstable;
            report.stable = stable;
        }
        Err(e) => report.fail("manifolds", e),
    }
    report.section = Some(SectionSummary {
        energy,
        crossings,
        min_speed,
        transversal: min_speed > TRANSVERSAL_SPEED,
        orbit_crossings,
    });
    if !report.unstable.is_empty() && !report.stable.is_empty() {
        let u_to_s = trace_distances(&report.unstable, &report.stable);
        let s_to_u = trace_distances(&report.stable, &report.unstable);
        let on = u_to_s.iter().filter(|&&d| d <= params.coincidence_tol).count();
        report.arcs = Some(ArcSummary {
            on_stable: on,
            off_stable: u_to_s.len() - on,
        });
        report.splitting = Some(u_to_s.iter().chain(&s_to_u).copied().fold(0.0, f64::max));
    }
    Ok(report)
}

/// Both one-sided distances between the cloud and `{(0, θ₂, 0, 1)}`.
pub fn hausdorff_to_cylinder(cloud: &TieredCloud) -> f64 {
    if cloud.is_empty() {
        return f64::INFINITY;
    }
    let to_set = cloud
        .points
        .iter()
        .map(|q| {
            let x = q.state.base.coords();
            (wrap_centered(x[0]).powi(2) + q.state.p[0].powi(2) + (q.state.p[1] - 1.0).powi(2)).sqrt()
        })
        .fold(0.0, f64::max);
    let samples = 256;
    let from_set = (0..samples)
        .map(|k| {
            let reference = CotangentState::new(vec![0.0, k as f64 / samples as f64], vec![0.0, 1.0]);
            cloud
                .points
                .iter()
                .map(|q| phase_distance(&q.state, &reference))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max);
    to_set.max(from_set)
}

fn floquet_error(orbit: &PeriodicOrbit) -> f64 {
    let lam = (2.0 * std::f64::consts::PI).exp();
    let expected = [lam, 1.0, 1.0, 1.0 / lam];
    let mut mu = orbit.floquet.clone();
    if mu.len() != expected.len() {
        return f64::INFINITY;
    }
    mu.sort_by(|a, b| b.norm().total_cmp(&a.norm()));
    mu.iter()
        .zip(expected)
        .map(|(m, e)| (m - e).norm() / e)
        .fold(0.0, f64::max)
}

fn green_deviation(c: &Classification) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut worst = 0.0f64;
    for (s, sign) in [(&c.green.s_plus, 1.0), (&c.green.s_minus, -1.0)] {
        for (i, row) in s.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                let target = if i == 0 && j == 0 { sign * two_pi } else { 0.0 };
                worst = worst.max((v - target).abs());
            }
        }
    }
    worst
}

/// Eigenvector of `m` for the real eigenvalue `lambda`, unit length, with a
/// non-negative first component.
fn real_eigenvector(m: &DMatrix<f64>, lambda: f64) -> Result<Vec<f64>> {
    let k = m.nrows();
    let shifted = m - DMatrix::identity(k, k) * lambda;
    let svd = shifted.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::Numerical("eigenvector decomposition failed".into()))?;
    let (idx, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty matrix");
    let mut v: Vec<f64> = v_t.row(idx).iter().copied().collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let sign = if v[0] < 0.0 { -1.0 } else { 1.0 };
    for x in &mut v {
        *x *= sign / norm;
    }
    Ok(v)
}

type Traces = (Vec<ManifoldTrace>, Vec<ManifoldTrace>, Vec<f64>);

/// Seeds `±offset·λ^s·v` for `s` over one fundamental domain along the
/// unstable and stable directions, flowed forward and backward to repeated
/// returns to the section `θ₂ ∈ ℤ`.
fn trace_manifolds(model: &LagrangianModel, on_section: &CotangentState, params: &ScenarioParams) -> Result<Traces> {
    let orbit = PeriodicOrbit::through(model, on_section, params.period, &params.flow)?;
    let lam = orbit
        .floquet
        .iter()
        .filter(|c| c.im.abs() < 1e-9 * c.norm())
        .map(|c| c.re)
        .fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
    if !(lam.abs() > 1.0 + 1e-6) {
        return Err(Error::Numerical("orbit has no real unstable multiplier".into()));
    }
    let m = &orbit.monodromy.matrix;
    let v_u = real_eigenvector(m, lam)?;
    let v_s = real_eigenvector(m, 1.0 / lam)?;
    let growth = lam.abs();

    let mut unstable = Vec::new();
    let mut stable = Vec::new();
    let mut speeds = Vec::new();
    for (kind, v, dir) in [(ManifoldKind::Unstable, &v_u, 1.0), (ManifoldKind::Stable, &v_s, -1.0)] {
        for branch in [1i8, -1] {
            let per_seed: Vec<Result<(Vec<TracePoint>, Vec<f64>)>> = (0..params.seeds)
                .into_par_iter()
                .map(|k| {
                    let s = k as f64 / params.seeds as f64;
                    let amp = f64::from(branch) * params.offset * growth.powf(s);
                    let z0: Vec<f64> = lift(on_section).iter().zip(v.iter()).map(|(a, b)| a + amp * b).collect();
                    let start = unlift(&z0);
                    let mut pts = vec![TracePoint {
                        param: s,
                        theta: wrap_centered(z0[0]),
                        p: z0[2],
                    }];
                    let horizon = dir * (params.returns as f64 + 0.5) * params.period;
                    let hits = section_crossings(model, &start, 1, horizon, params.returns + 1, &params.trace_flow)?;
                    let mut spd = Vec::new();
                    let mut r = 0;
                    for c in hits.iter().filter(|c| c.time.abs() > 0.25 * params.period) {
                        r += 1;
                        if r > params.returns {
                            break;
                        }
                        spd.push(c.speed.abs());
                        let x = c.state.base.coords();
                        pts.push(TracePoint {
                            param: r as f64 + s,
                            theta: wrap_centered(x[0]),
                            p: c.state.p[0],
                        });
                    }
                    Ok((pts, spd))
                })
                .collect();
            let mut points = Vec::new();
            for r in per_seed {
                let (p, s) = r?;
                points.extend(p);
                speeds.extend(s);
            }
            points.sort_by(|a, b| a.param.total_cmp(&b.param));
            let trace = ManifoldTrace { kind, branch, points };
            match kind {
                ManifoldKind::Unstable => unstable.push(trace),
                ManifoldKind::Stable => stable.push(trace),
            }
        }
    }
    Ok((unstable, stable, speeds))
}

/// For every point of `from`, its distance to the polylines of `to`.
fn trace_distances(from: &[ManifoldTrace], to: &[ManifoldTrace]) -> Vec<f64> {
    let points: Vec<&TracePoint> = from.iter().flat_map(|t| t.points.iter()).collect();
    points
        .par_iter()
        .map(|q| {
            to.iter()
                .map(|t| polyline_distance(q, &t.points))
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

fn polyline_distance(q: &TracePoint, line: &[TracePoint]) -> f64 {
    if line.len() == 1 {
        return (wrap_centered(q.theta - line[0].theta)).hypot(q.p - line[0].p);
    }
    line.windows(2)
        .map(|seg| {
            let (a, b) = (&seg[0], &seg[1]);
            let bx = wrap_centered(b.theta - a.theta);
            let by = b.p - a.p;
            let qx = wrap_centered(q.theta - a.theta);
            let qy = q.p - a.p;
            let len2 = bx * bx + by * by;
            let t = if len2 > 0.0 { ((qx * bx + qy * by) / len2).clamp(0.0, 1.0) } else { 0.0 };
            (qx - t * bx).hypot(qy - t * by)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Columns `kind, branch, param, theta, p` with `kind` 0 for unstable and 1
/// for stable traces.
pub fn traces_csv(unstable: &[ManifoldTrace], stable: &[ManifoldTrace]) -> String {
    let mut out = String::from("kind,branch,param,theta,p\n");
    for t in unstable.iter().chain(stable) {
        let kind = match t.kind {
            ManifoldKind::Unstable => 0,
            ManifoldKind::Stable => 1,
        };
        for q in &t.points {
            let _ = writeln!(out, "{kind},{},{}", t.branch, csv_row(&[q.param, q.theta, q.p]));
        }
    }
    out
}

/// gnuplot script drawing the `(x_axis, p_axis)` projection of a cloud CSV.
pub fn gnuplot_projection(csv_name: &str, dim: usize, axis: usize) -> String {
    format!(
        "set datafile separator ','\nset xlabel 'x{a}'\nset ylabel 'p{a}'\nset xrange [0:1]\n\
         plot '{csv_name}' every ::1 using {x}:{p} with points pt 7 ps 0.4 notitle\n",
        a = axis + 1,
        x = axis + 1,
        p = dim + axis + 1,
    )
}

/// gnuplot script for the section portrait of the manifold traces.
pub fn gnuplot_section(csv_name: &str) -> String {
    format!(
        "set datafile separator ','\nset xlabel 'theta1'\nset ylabel 'p1'\n\
         plot '{csv_name}' every ::1 using ($1==0?$4:1/0):5 with points pt 7 ps 0.3 title 'unstable', \\\n\
         '{csv_name}' every ::1 using ($1==1?$4:1/0):5 with points pt 6 ps 0.5 title 'stable'\n"
    )
}

/// `fmt_f64` of each scalar in a scenario summary line.
pub fn scenario_summary(report: &ScenarioReport) -> String {
    let f = |x: Option<f64>| x.map_or_else(|| "none".to_string(), fmt_f64);
    format!(
        "alpha={} hausdorff={} green_deviation={} splitting={} errors={}",
        f(report.alpha),
        f(report.hausdorff),
        f(report.green_deviation),
        f(report.splitting),
        report.errors.len()
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat_scan(res: usize, w_box: f64) -> TieredScan {
        let model = LagrangianModel::flat(2);
        tiered_scan(&model, w_box, res, &ScanParams::new(GridParams::new(16, 0.25))).unwrap()
    }

    #[test]
    fn flat_cloud_is_the_graph_p_equals_w() {
        let model = LagrangianModel::flat(2);
        let scan = flat_scan(3, 1.0);
        assert_eq!(scan.classes.len(), 9);
        assert!(scan.classes.iter().all(|c| c.error.is_none() && c.aubry_nodes == 256));
        assert_eq!(scan.cloud.len(), 9 * 256);
        for q in &scan.cloud.points {
            assert!(momentum_gap(&q.state, &CotangentState::new(vec![0.0; 2], q.w.w.clone())) < 1e-12);
        }
        assert!(scan.cloud.energy_defect(&model) <= 1e-9);
        assert!(scan.cloud.alpha_defect(Provenance::AubryApprox) < 1e-9);
        assert_eq!(scan.cloud.graph_violations(1.0 / 16.0), 0);
    }

    #[test]
    fn zero_class_gives_the_zero_section() {
        let scan = flat_scan(1, 1.0);
        assert_eq!(scan.cloud.len(), 256);
        assert!(scan.cloud.points.iter().all(|q| q.state.p.iter().all(|p| p.abs() < 1e-12)));
    }

    #[test]
    fn energy_slices_of_flat_cloud() {
        let scan = flat_scan(3, 1.0);
        let slice = energy_slice(&scan.cloud, 0.5, 0.05);
        assert_eq!(slice.len(), 4 * 256);
        assert!(slice.points.iter().all(|q| (momentum_gap(&q.state, &CotangentState::new(vec![0.0; 2], vec![0.0; 2])) - 1.0).abs() < 1e-9));
        assert!(energy_slice(&scan.cloud, -0.1, 0.05).is_empty());
    }

    #[test]
    fn connectivity_of_simple_clouds() {
        let model = LagrangianModel::flat(2);
        let mut single = TieredCloud::new();
        let w0 = CohomologyClass::zero(2);
        single.push(CloudPoint::new(&model, CotangentState::new(vec![0.1, 0.2], vec![0.0, 0.0]), w0, 0.0, Provenance::AubryApprox));
        let r = connectivity_check(&single, 0.01);
        assert!(r.connected());
        assert_eq!(r.connecting_epsilon, 0.0);

        let scan = flat_scan(3, 1.0);
        let two = TieredCloud {
            points: scan
                .cloud
                .points
                .into_iter()
                .filter(|q| q.w.w == vec![0.0, 0.0] || q.w.w == vec![1.0, 0.0])
                .collect(),
        };
        let r = connectivity_check(&two, 0.15);
        assert_eq!(r.components, 2);
        assert!((r.connecting_epsilon - 1.0).abs() < 1e-12);
        assert!(connectivity_check(&two, 1.0).connected());
    }

    #[test]
    fn flat_translations_are_periodic() {
        let model = LagrangianModel::flat(2);
        let w = CohomologyClass::new(vec![1.0, 0.0]);
        let params = RadialParams::new(ScanParams::new(GridParams::new(16, 0.25)));
        let r = radial_periodicity_check(&model, &w, 1.0, &params, &FlowConfig::default()).unwrap();
        assert_eq!(r.in_scope, 256);
        assert!(r.max_residual <= 1e-6, "{}", r.max_residual);
        assert!(r.passes);
    }

    #[test]
    fn pendulum_base_off_the_saddle_is_exempt() {
        let model = LagrangianModel::pendulum();
        let mut params = RadialParams::new(ScanParams::new(GridParams::new(64, 0.1)));
        params.bases = Some(vec![TorusPoint::new(vec![0.25]), TorusPoint::new(vec![0.0])]);
        let r = radial_periodicity_check(&model, &CohomologyClass::zero(1), 3.0, &params, &FlowConfig::default())
            .unwrap();
        assert_eq!(r.in_scope, 1);
        assert!(r.entries[0].residual.is_none());
        assert!(r.passes);
        assert!(radial_periodicity_check(&model, &CohomologyClass::zero(1), 0.05, &params, &FlowConfig::default())
            .is_err());
    }

    #[test]
    fn orbit_crosses_the_section_once_per_period() {
        let model = LagrangianModel::pendulum_product();
        let start = CotangentState::new(vec![0.0, 0.3], vec![0.0, 1.0]);
        let c = section_crossings(&model, &start, 1, 3.0, 10, &FlowConfig::default()).unwrap();
        assert_eq!(c.len(), 3);
        for (k, x) in c.iter().enumerate() {
            assert!((x.time - (0.7 + k as f64)).abs() < 1e-9);
            assert!((x.speed - 1.0).abs() < 1e-12);
        }
        let back = section_crossings(&model, &start, 1, -1.0, 10, &FlowConfig::default()).unwrap();
        assert_eq!(back.len(), 1);
        assert!((back[0].time + 0.3).abs() < 1e-9);
    }

    #[test]
    fn unperturbed_scenario() {
        let params = ScenarioParams {
            scan: ScanParams::new(GridParams::new(16, 0.25)),
            ..ScenarioParams::default()
        };
        let r = pendulum_product_scenario(&params).unwrap();
        assert!(r.errors.is_empty(), "{:?}", r.errors);
        assert!(r.alpha.unwrap().abs() <= 2e-2);
        assert!(r.hausdorff.unwrap() <= 0.1);
        let orbit = r.orbit.as_ref().unwrap();
        assert!(orbit.floquet_error <= 1e-4, "{}", orbit.floquet_error);
        assert!(r.classification.as_ref().unwrap().consistent);
        assert!(r.green_deviation.unwrap() <= 1e-2);
        let section = r.section.as_ref().unwrap();
        assert!(section.transversal);
        assert!(r.splitting.unwrap() <= 1e-3, "{}", r.splitting.unwrap());
        assert_eq!(r.arcs.as_ref().unwrap().off_stable, 0);
        for t in r.unstable.iter().chain(&r.stable) {
            let top = t.points.iter().map(|q| q.p.abs()).fold(0.0, f64::max);
            assert!(top > 1.9, "trace reaches only |p| = {top}");
        }
        eprintln!("{}", scenario_summary(&r));
    }
}
