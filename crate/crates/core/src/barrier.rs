//! Grid discretization of minimal action: one-step kernels, their min-plus
//! powers, the critical value, the Peierls barrier and the Mañé potential.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::io::{csv_row, ArtifactDir};
use crate::karp::{min_mean_cycle, MeanCycle};
use crate::model::{CohomologyClass, LagrangianModel, TangentState, TorusPoint};
use crate::tropical::{MinPlusMatrix, INF};

pub const DEFAULT_WINDOW: (f64, f64) = (4.0, 64.0);
const CAP_FRACTION: f64 = 0.9;
const MAX_ESCALATIONS: usize = 4;
/// Dense `V × V` tables stop fitting in memory beyond this.
pub const MAX_NODES: usize = 4096;

/// The `G^n` lattice on `T^n`; linear index `Σ c_k G^k`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct StateGrid {
    dim: usize,
    res: usize,
}

impl StateGrid {
    pub fn new(dim: usize, res: usize) -> Result<Self> {
        if dim == 0 || res == 0 {
            return Err(Error::InvalidArgument("grid needs dim ≥ 1 and resolution ≥ 1".into()));
        }
        match res.checked_pow(dim as u32) {
            Some(len) if len <= MAX_NODES => Ok(Self { dim, res }),
            _ => Err(Error::InvalidArgument(format!("grid {res}^{dim} exceeds {MAX_NODES} nodes"))),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn resolution(&self) -> usize {
        self.res
    }

    pub fn cell(&self) -> f64 {
        1.0 / self.res as f64
    }

    pub fn len(&self) -> usize {
        self.res.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn multi_index(&self, mut i: usize) -> Vec<usize> {
        let mut c = Vec::with_capacity(self.dim);
        for _ in 0..self.dim {
            c.push(i % self.res);
            i /= self.res;
        }
        c
    }

    pub fn index(&self, c: &[usize]) -> usize {
        c.iter().rev().fold(0, |acc, &ci| acc * self.res + ci)
    }

    pub fn coords(&self, i: usize) -> Vec<f64> {
        self.multi_index(i)
            .into_iter()
            .map(|c| c as f64 / self.res as f64)
            .collect()
    }

    pub fn point(&self, i: usize) -> TorusPoint {
        TorusPoint::new(self.coords(i))
    }

    pub fn nearest(&self, x: &TorusPoint) -> usize {
        let g = self.res as f64;
        let c: Vec<usize> = x
            .coords()
            .iter()
            .map(|&xi| ((xi * g).round() as usize) % self.res)
            .collect();
        self.index(&c)
    }

    /// Index of node `i` moved by `offset` cells (periodic).
    pub fn shift(&self, i: usize, offset: &[i64]) -> usize {
        let g = self.res as i64;
        let c: Vec<usize> = self
            .multi_index(i)
            .into_iter()
            .zip(offset)
            .map(|(ci, &o)| (ci as i64 + o).rem_euclid(g) as usize)
            .collect();
        self.index(&c)
    }
}

pub fn default_v_max(w: &CohomologyClass) -> f64 {
    4.0 * (1.0 + w.max_abs())
}

/// Class-independent part of a kernel: the stencil of lattice displacements
/// within the speed cap and the cost `δ·L(midpoint, Δ/δ)` of each step.
#[derive(Clone, Debug)]
pub struct KernelTemplate {
    grid: StateGrid,
    step: f64,
    v_max: f64,
    offsets: Arc<Vec<Vec<i64>>>,
    /// `targets[i * O + o]` and `costs[i * O + o]` for node `i`, offset `o`.
    targets: Vec<u32>,
    costs: Vec<f64>,
}

fn stencil(dim: usize, radius_cells: f64) -> Vec<Vec<i64>> {
    let r = radius_cells.floor() as i64;
    let mut out = Vec::new();
    let mut cur = vec![-r; dim];
    loop {
        let norm2: i64 = cur.iter().map(|c| c * c).sum();
        if (norm2 as f64) <= radius_cells * radius_cells * (1.0 + 1e-12) {
            out.push(cur.clone());
        }
        let mut k = 0;
        loop {
            if k == dim {
                return out;
            }
            cur[k] += 1;
            if cur[k] <= r {
                break;
            }
            cur[k] = -r;
            k += 1;
        }
    }
}

impl KernelTemplate {
    pub fn build(model: &LagrangianModel, grid: &StateGrid, step: f64, v_max: f64) -> Result<Self> {
        if model.dim() != grid.dim() {
            return Err(Error::InvalidArgument("grid and model dimensions differ".into()));
        }
        if !(step > 0.0) || !(v_max > 0.0) {
            return Err(Error::InvalidArgument("step and v_max must be positive".into()));
        }
        let reach = v_max * step;
        if reach < grid.cell() {
            return Err(Error::DisconnectedKernel {
                reach,
                cell: grid.cell(),
            });
        }
        let offsets = stencil(grid.dim(), reach * grid.resolution() as f64);
        let n_off = offsets.len();
        let v = grid.len();
        let g = grid.resolution() as f64;
        let mut targets = vec![0u32; v * n_off];
        let mut costs = vec![0.0; v * n_off];
        targets
            .par_chunks_mut(n_off)
            .zip(costs.par_chunks_mut(n_off))
            .enumerate()
            .for_each(|(i, (t_row, c_row))| {
                let x = grid.coords(i);
                for (o, off) in offsets.iter().enumerate() {
                    let disp: Vec<f64> = off.iter().map(|&m| m as f64 / g).collect();
                    let mid: Vec<f64> = x.iter().zip(&disp).map(|(a, d)| a + 0.5 * d).collect();
                    let vel: Vec<f64> = disp.iter().map(|d| d / step).collect();
                    t_row[o] = grid.shift(i, off) as u32;
                    c_row[o] = step * model.lagrangian(&mid, &vel);
                }
            });
        Ok(Self {
            grid: grid.clone(),
            step,
            v_max,
            offsets: Arc::new(offsets),
            targets,
            costs,
        })
    }

    pub fn grid(&self) -> &StateGrid {
        &self.grid
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn v_max(&self) -> f64 {
        self.v_max
    }

    pub fn stencil_size(&self) -> usize {
        self.offsets.len()
    }

    /// Kernel of `L − w·v`: the cached costs re-dotted with `−w·Δ`.
    pub fn kernel(&self, w: &CohomologyClass) -> Result<ActionKernel> {
        if w.dim() != self.grid.dim() {
            return Err(Error::InvalidArgument("class and grid dimensions differ".into()));
        }
        let v = self.grid.len();
        let n_off = self.offsets.len();
        let g = self.grid.resolution() as f64;
        let twist: Vec<f64> = self
            .offsets
            .iter()
            .map(|off| off.iter().zip(&w.w).map(|(&m, wi)| wi * m as f64 / g).sum())
            .collect();
        let mut data = vec![INF; v * v];
        let mut lift = vec![u32::MAX; v * v];
        data.par_chunks_mut(v)
            .zip(lift.par_chunks_mut(v))
            .enumerate()
            .for_each(|(i, (row, lrow))| {
                for o in 0..n_off {
                    let j = self.targets[i * n_off + o] as usize;
                    let val = self.costs[i * n_off + o] - twist[o];
                    if val < row[j] {
                        row[j] = val;
                        lrow[j] = o as u32;
                    }
                }
            });
        let matrix = MinPlusMatrix::from_rows(data.chunks(v).map(|r| r.to_vec()).collect());
        Ok(ActionKernel {
            grid: self.grid.clone(),
            step: self.step,
            w: w.clone(),
            v_max: self.v_max,
            matrix,
            lift,
            offsets: Arc::clone(&self.offsets),
        })
    }
}

/// One-step minimal actions of `L − w·v` between grid points.
#[derive(Clone, Debug)]
pub struct ActionKernel {
    grid: StateGrid,
    step: f64,
    w: CohomologyClass,
    v_max: f64,
    matrix: MinPlusMatrix,
    lift: Vec<u32>,
    offsets: Arc<Vec<Vec<i64>>>,
}

pub fn build_kernel(
    model: &LagrangianModel,
    grid: &StateGrid,
    step: f64,
    w: &CohomologyClass,
    v_max: f64,
) -> Result<ActionKernel> {
    KernelTemplate::build(model, grid, step, v_max)?.kernel(w)
}

impl ActionKernel {
    pub fn grid(&self) -> &StateGrid {
        &self.grid
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn class(&self) -> &CohomologyClass {
        &self.w
    }

    pub fn v_max(&self) -> f64 {
        self.v_max
    }

    pub fn matrix(&self) -> &MinPlusMatrix {
        &self.matrix
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix.get(i, j)
    }

    /// Number of finite entries.
    pub fn band_count(&self) -> usize {
        self.matrix.finite_count()
    }

    /// Displacement (in torus units) of the minimizing lift from `i` to `j`.
    pub fn displacement(&self, i: usize, j: usize) -> Option<Vec<f64>> {
        let o = self.lift[i * self.grid.len() + j];
        if o == u32::MAX {
            return None;
        }
        let g = self.grid.resolution() as f64;
        Some(self.offsets[o as usize].iter().map(|&m| m as f64 / g).collect())
    }

    pub fn velocity(&self, i: usize, j: usize) -> Option<Vec<f64>> {
        self.displacement(i, j)
            .map(|d| d.into_iter().map(|x| x / self.step).collect())
    }

    /// Kernel with the per-step offset `c·δ`.
    pub fn offset_matrix(&self, c: f64) -> MinPlusMatrix {
        self.matrix.offset(c * self.step)
    }
}

/// `(K + c·δ)^t`: discrete minimal action over `t` steps.
pub fn minplus_power(kernel: &ActionKernel, t_steps: u64, c: f64) -> Result<MinPlusMatrix> {
    if t_steps == 0 {
        return Err(Error::InvalidArgument("t_steps must be at least 1".into()));
    }
    let p = kernel.offset_matrix(c).power(t_steps);
    p.check()?;
    Ok(p)
}

#[derive(Clone, Debug)]
pub struct CriticalValue {
    pub c: f64,
    /// Grid nodes of an optimal cycle, in order.
    pub cycle: Vec<usize>,
    pub solution: MeanCycle,
    /// Largest step length on the optimal cycle relative to `v_max·δ`.
    pub cap_usage: f64,
}

impl CriticalValue {
    pub fn touches_cap(&self) -> bool {
        self.cap_usage >= CAP_FRACTION
    }

    /// Mean displacement per unit time along the optimal cycle.
    pub fn rotation(&self, kernel: &ActionKernel) -> Vec<f64> {
        let len = self.cycle.len();
        let mut total = vec![0.0; kernel.grid.dim()];
        for k in 0..len {
            let d = kernel
                .displacement(self.cycle[k], self.cycle[(k + 1) % len])
                .expect("cycle edges are finite");
            for (t, di) in total.iter_mut().zip(d) {
                *t += di;
            }
        }
        let time = len as f64 * kernel.step;
        total.into_iter().map(|t| t / time).collect()
    }
}

/// `c = −(minimum mean cycle weight)/δ`.
pub fn critical_value(kernel: &ActionKernel) -> Result<CriticalValue> {
    let sol = min_mean_cycle(&kernel.matrix)
        .ok_or_else(|| Error::Numerical("kernel graph has no cycle".into()))?;
    let len = sol.cycle.len();
    let reach = kernel.v_max * kernel.step;
    let mut usage: f64 = 0.0;
    for k in 0..len {
        let d = kernel
            .displacement(sol.cycle[k], sol.cycle[(k + 1) % len])
            .expect("cycle edges are finite");
        usage = usage.max(d.iter().map(|x| x * x).sum::<f64>().sqrt() / reach);
    }
    Ok(CriticalValue {
        c: -sol.mean / kernel.step,
        cycle: sol.cycle.clone(),
        solution: sol,
        cap_usage: usage,
    })
}

/// Kernel and critical value for class `w`, doubling `v_max` while the
/// optimal cycle runs at the speed cap.
pub fn solve_class(
    model: &LagrangianModel,
    grid: &StateGrid,
    step: f64,
    w: &CohomologyClass,
    v_max: Option<f64>,
) -> Result<(ActionKernel, CriticalValue)> {
    let mut cap = v_max.unwrap_or_else(|| default_v_max(w));
    let mut attempt = 0;
    loop {
        let kernel = build_kernel(model, grid, step, w, cap)?;
        let crit = critical_value(&kernel)?;
        if !crit.touches_cap() || attempt == MAX_ESCALATIONS {
            return Ok((kernel, crit));
        }
        cap *= 2.0;
        attempt += 1;
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BarrierMeta {
    pub grid: StateGrid,
    pub step: f64,
    pub w: Vec<f64>,
    pub c: f64,
    pub window: (f64, f64),
    pub steps: (u64, u64),
    pub residual: f64,
    pub converged: bool,
}

#[derive(Clone, Debug)]
pub struct BarrierTable {
    pub h: MinPlusMatrix,
    pub meta: BarrierMeta,
}

impl BarrierTable {
    pub fn grid(&self) -> &StateGrid {
        &self.meta.grid
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.h.get(i, j)
    }

    pub fn at(&self, x: &TorusPoint, y: &TorusPoint) -> f64 {
        let g = self.grid();
        self.h.get(g.nearest(x), g.nearest(y))
    }

    /// Row-major little-endian `f64` dump with a JSON sidecar, plus a CSV
    /// matrix for `n ≤ 2`.
    pub fn export(&self, dir: &mut ArtifactDir, name: &str) -> Result<()> {
        export_matrix(dir, name, &self.h, &self.meta)
    }
}

pub fn export_matrix<M: Serialize>(
    dir: &mut ArtifactDir,
    name: &str,
    m: &MinPlusMatrix,
    meta: &M,
) -> Result<()> {
    let bytes: Vec<u8> = m.as_slice().iter().flat_map(|x| x.to_le_bytes()).collect();
    dir.write_bytes(&format!("{name}.bin"), &bytes)?;
    dir.write_json(&format!("{name}.json"), meta)?;
    let n = m.size();
    if n <= 64 * 64 {
        let mut text = String::new();
        for i in 0..n {
            text.push_str(&csv_row(m.row(i)));
            text.push('\n');
        }
        dir.write_text(&format!("{name}.csv"), &text)?;
    }
    Ok(())
}

fn window_steps(step: f64, t0: f64, t1: f64) -> Result<(u64, u64)> {
    if !(t0 > 0.0 && t1 > t0) {
        return Err(Error::InvalidArgument("window needs 0 < T₀ < T₁".into()));
    }
    let a = ((t0 / step) - 1e-9).ceil().max(1.0) as u64;
    let b = ((t1 / step) + 1e-9).floor() as u64;
    if b < a + 2 {
        return Err(Error::InvalidArgument("window holds fewer than three steps".into()));
    }
    Ok((a, b))
}

/// `min_{a ≤ t ≤ b} (K + cδ)^t` over the window, with residual equal to the
/// sup-norm gap between the full window and its last half.
pub fn peierls_barrier(
    kernel: &ActionKernel,
    c: f64,
    t0: f64,
    t1: f64,
    tol: f64,
) -> Result<BarrierTable> {
    let (a, b) = window_steps(kernel.step, t0, t1)?;
    let half = (b - a) / 2;
    let b = a + 2 * half;
    let kc = kernel.offset_matrix(c);
    let head = kc.power(a);
    let mid = head.mul(&kc.power(half));
    let tail = kc.running_min_power(half);
    let late = mid.mul(&tail);
    let full = head.mul(&tail).min_with(&late);
    full.check()?;
    let residual = full.sup_distance(&late);
    Ok(BarrierTable {
        h: full,
        meta: BarrierMeta {
            grid: kernel.grid.clone(),
            step: kernel.step,
            w: kernel.w.w.clone(),
            c,
            window: (a as f64 * kernel.step, b as f64 * kernel.step),
            steps: (a, b),
            residual,
            converged: residual <= tol,
        },
    })
}

/// `min_{1 ≤ t ≤ T₁/δ} (K + cδ)^t`.
pub fn mane_potential(kernel: &ActionKernel, c: f64, t1: f64) -> Result<MinPlusMatrix> {
    let b = ((t1 / kernel.step) + 1e-9).floor() as u64;
    if b < 1 {
        return Err(Error::InvalidArgument("T₁ shorter than one step".into()));
    }
    let kc = kernel.offset_matrix(c);
    let m = kc.mul(&kc.running_min_power(b - 1));
    m.check()?;
    Ok(m)
}

pub fn aubry_indices(table: &BarrierTable, tol: f64) -> Vec<usize> {
    (0..table.h.size()).filter(|&i| table.get(i, i) <= tol).collect()
}

/// Grid points with `h(x, x) ≤ tol`.
pub fn projected_aubry(table: &BarrierTable, tol: f64) -> Vec<TorusPoint> {
    aubry_indices(table, tol)
        .into_iter()
        .map(|i| table.grid().point(i))
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct LiftTie {
    pub node: usize,
    pub velocities: Vec<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct AubryLift {
    pub nodes: Vec<usize>,
    pub states: Vec<TangentState>,
    pub ties: Vec<LiftTie>,
}

/// Velocity of the minimizing step `i → j` of `K_c(i, j) + h(j, i)` at each
/// projected-Aubry node.
pub fn aubry_lift(table: &BarrierTable, kernel: &ActionKernel, tol: f64) -> Result<AubryLift> {
    if table.grid() != kernel.grid() || table.meta.w != kernel.w.w {
        return Err(Error::InvalidArgument("table and kernel were built for different grids or classes".into()));
    }
    let c = table.meta.c;
    let kc = kernel.offset_matrix(c);
    let v_res = kernel.grid.cell() / kernel.step;
    let nodes = aubry_indices(table, tol);
    let results: Vec<(TangentState, Option<LiftTie>)> = nodes
        .par_iter()
        .map(|&i| {
            let n = kc.size();
            let scores: Vec<f64> = (0..n).map(|j| kc.get(i, j) + table.get(j, i)).collect();
            let best = scores.iter().copied().fold(INF, f64::min);
            let tie_tol = 1e-9 * (1.0 + best.abs());
            let mut argmin = Vec::new();
            for (j, s) in scores.iter().enumerate() {
                if *s <= best + tie_tol {
                    argmin.push(j);
                }
            }
            let vels: Vec<Vec<f64>> = argmin
                .iter()
                .map(|&j| kernel.velocity(i, j).expect("finite entry"))
                .collect();
            let spread = vels
                .iter()
                .flat_map(|a| vels.iter().map(move |b| dist(a, b)))
                .fold(0.0, f64::max);
            let tie = (spread > v_res * (1.0 + 1e-9)).then(|| LiftTie {
                node: i,
                velocities: vels.clone(),
            });
            (TangentState::new(kernel.grid.coords(i), vels[0].clone()), tie)
        })
        .collect();
    let mut states = Vec::with_capacity(results.len());
    let mut ties = Vec::new();
    for (s, t) in results {
        states.push(s);
        ties.extend(t);
    }
    Ok(AubryLift {
        nodes,
        states,
        ties,
    })
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn flat_kernel(res: usize, step: f64, w: Vec<f64>) -> ActionKernel {
        let grid = StateGrid::new(2, res).unwrap();
        let w = CohomologyClass::new(w);
        let cap = default_v_max(&w);
        build_kernel(&LagrangianModel::flat(2), &grid, step, &w, cap).unwrap()
    }

    fn pendulum_kernel(res: usize, step: f64) -> ActionKernel {
        let grid = StateGrid::new(1, res).unwrap();
        build_kernel(&LagrangianModel::pendulum(), &grid, step, &CohomologyClass::zero(1), 4.0).unwrap()
    }

    #[test]
    fn grid_indexing_round_trips() {
        let g = StateGrid::new(2, 8).unwrap();
        for i in 0..g.len() {
            assert_eq!(g.index(&g.multi_index(i)), i);
            assert_eq!(g.nearest(&g.point(i)), i);
        }
        assert_eq!(g.shift(0, &[-1, 0]), g.index(&[7, 0]));
    }

    #[test]
    fn flat_kernel_entries() {
        let k = flat_kernel(8, 0.5, vec![0.0, 0.0]);
        let g = k.grid().clone();
        let e1 = g.index(&[1, 0]);
        assert_eq!(k.get(0, 0), 0.0);
        assert!((k.get(0, e1) - 1.0 / 64.0).abs() < 1e-15);
        let kw = flat_kernel(8, 0.5, vec![1.0, 0.0]);
        assert!((kw.get(0, e1) - (1.0 / 64.0 - 1.0 / 8.0)).abs() < 1e-15);
    }

    #[test]
    fn narrow_band_is_rejected() {
        let grid = StateGrid::new(1, 8).unwrap();
        let err = build_kernel(&LagrangianModel::flat(1), &grid, 0.01, &CohomologyClass::zero(1), 1.0);
        assert!(matches!(err, Err(Error::DisconnectedKernel { .. })));
    }

    #[test]
    fn first_power_is_offset_kernel() {
        let k = pendulum_kernel(16, 0.1);
        let p = minplus_power(&k, 1, -0.5).unwrap();
        assert!(p.sup_distance(&k.matrix().offset(-0.05)) < 1e-15);
    }

    #[test]
    fn flat_rest_and_diffusion() {
        // One cell per step at δ = 1/8, so the lattice carries the straight line.
        let k = flat_kernel(16, 0.125, vec![0.0, 0.0]);
        let p = minplus_power(&k, 8, 0.0).unwrap();
        for i in 0..k.grid().len() {
            assert_eq!(p.get(i, i), 0.0);
        }
        let y = k.grid().index(&[8, 0]);
        assert!((p.get(0, y) - 0.125).abs() < 0.02);
    }

    #[test]
    fn critical_values() {
        let flat = flat_kernel(8, 0.5, vec![0.0, 0.0]);
        assert!(critical_value(&flat).unwrap().c.abs() < 1e-9);

        let pend = pendulum_kernel(64, 0.1);
        let cv = critical_value(&pend).unwrap();
        assert!((cv.c + 0.5).abs() < 1e-2, "c = {}", cv.c);

        let grid = StateGrid::new(2, 32).unwrap();
        let w = CohomologyClass::new(vec![1.0, 0.0]);
        let (k, cv) = solve_class(&LagrangianModel::flat(2), &grid, 0.1, &w, None).unwrap();
        assert!((cv.c - 0.5).abs() < 2e-2, "c = {}", cv.c);
        assert!(!cv.touches_cap());
        assert!(cv.rotation(&k)[0] > 0.5);
    }

    #[test]
    fn pendulum_barrier_values() {
        let k = pendulum_kernel(64, 0.1);
        let c = critical_value(&k).unwrap().c;
        let table = peierls_barrier(&k, c, 4.0, 64.0, 0.02).unwrap();
        let g = k.grid();
        let half = g.index(&[32]);
        assert!(table.get(0, 0).abs() < 0.02);
        assert!((table.get(0, half) - 2.0 / PI).abs() < 0.05, "h = {}", table.get(0, half));
        let m = mane_potential(&k, c, 64.0).unwrap();
        assert!((m.get(0, half) - 2.0 / PI).abs() < 0.05);
        for i in 0..g.len() {
            for j in 0..g.len() {
                assert!(m.get(i, j) <= table.get(i, j) + 1e-12);
            }
        }
        let aubry = aubry_indices(&table, 1e-3);
        assert!(!aubry.is_empty());
        for i in &aubry {
            assert!(g.point(*i).distance(&TorusPoint::origin(1)) <= g.cell() + 1e-12);
        }
        let lift = aubry_lift(&table, &k, 1e-3).unwrap();
        assert!(lift.ties.is_empty());
        let at_zero = lift.nodes.iter().position(|&i| i == 0).unwrap();
        assert_eq!(lift.states[at_zero].v, vec![0.0]);
    }

    #[test]
    fn flat_barrier_vanishes_and_lifts_translate() {
        let k = flat_kernel(16, 0.25, vec![1.0, 0.0]);
        let cv = critical_value(&k).unwrap();
        assert!((cv.c - 0.5).abs() < 1e-12);
        let table = peierls_barrier(&k, cv.c, 4.0, 16.0, 1e-6).unwrap();
        assert_eq!(aubry_indices(&table, 1e-9).len(), k.grid().len());
        let lift = aubry_lift(&table, &k, 1e-9).unwrap();
        assert!(lift.ties.is_empty());
        for s in &lift.states {
            assert!(dist(&s.v, &[1.0, 0.0]) < 1e-12);
        }
    }

    #[test]
    fn custom_window_validation() {
        let k = pendulum_kernel(8, 0.5);
        assert!(peierls_barrier(&k, -0.5, 2.0, 1.0, 0.1).is_err());
        assert!(mane_potential(&k, -0.5, 0.1).is_err());
    }
}
