//! Direct minimization of the midpoint-rule action over broken curves with a
//! uniform time step.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::io::csv_row;
use crate::model::{
    wrap_centered, ClosedForm, CohomologyClass, LagrangianModel, TangentState, TorusPoint,
};

/// Problems with `T` at or below this are rejected.
pub const MIN_DURATION: f64 = 1e-3;
pub const DEFAULT_WINDING_BOUND: i64 = 2;
/// Loop minimizers within this action of the best are all reported.
pub const TIE_TOLERANCE: f64 = 1e-6;

#[derive(Clone, Copy, Debug)]
pub struct CurveSolverConfig {
    /// Target sup-norm of the discrete Euler–Lagrange residual.
    pub tolerance: f64,
    /// Largest residual accepted when the iteration stalls.
    pub acceptable: f64,
    pub max_iterations: usize,
}

impl Default for CurveSolverConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            acceptable: 1e-8,
            max_iterations: 500,
        }
    }
}

/// Lifted nodes `x_0, …, x_N` in `ℝ^n` visited at times `k·T/N`.
#[derive(Clone, Debug, Serialize)]
pub struct DiscreteCurve {
    nodes: Vec<Vec<f64>>,
    step: f64,
}

impl DiscreteCurve {
    pub fn new(nodes: Vec<Vec<f64>>, duration: f64) -> Result<Self> {
        if nodes.len() < 3 {
            return Err(Error::InvalidArgument("a curve needs at least two segments".into()));
        }
        if !(duration > 0.0) {
            return Err(Error::InvalidArgument("curve duration must be positive".into()));
        }
        let dim = nodes[0].len();
        if nodes.iter().any(|x| x.len() != dim) {
            return Err(Error::InvalidArgument("curve nodes have mixed dimensions".into()));
        }
        let step = duration / (nodes.len() - 1) as f64;
        Ok(Self { nodes, step })
    }

    /// Constant-speed segment from `a` to `b`.
    pub fn straight(a: &[f64], b: &[f64], duration: f64, segments: usize) -> Result<Self> {
        let nodes = (0..=segments)
            .map(|k| {
                let s = k as f64 / segments as f64;
                a.iter().zip(b).map(|(x, y)| x + s * (y - x)).collect()
            })
            .collect();
        Self::new(nodes, duration)
    }

    pub fn nodes(&self) -> &[Vec<f64>] {
        &self.nodes
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn segments(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn duration(&self) -> f64 {
        self.step * self.segments() as f64
    }

    pub fn dim(&self) -> usize {
        self.nodes[0].len()
    }

    /// `x_N − x_0` when it is an integer vector.
    pub fn winding(&self) -> Option<Vec<i64>> {
        let first = &self.nodes[0];
        let last = &self.nodes[self.segments()];
        let mut k = Vec::with_capacity(first.len());
        for (a, b) in first.iter().zip(last) {
            let d = b - a;
            if (d - d.round()).abs() > 1e-9 {
                return None;
            }
            k.push(d.round() as i64);
        }
        Some(k)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.dim()).map(|i| format!("x{i}")));
        writeln!(out, "{}", header.join(","))?;
        for (k, x) in self.nodes.iter().enumerate() {
            let mut row = vec![k as f64 * self.step];
            row.extend_from_slice(x);
            writeln!(out, "{}", csv_row(&row))?;
        }
        Ok(())
    }
}

struct Segment {
    value: f64,
    grad_a: DVector<f64>,
    grad_b: DVector<f64>,
    hess: Option<[DMatrix<f64>; 3]>,
}

/// `f(a, b) = δ·[L(m, d/δ) − w·d/δ + c]` with `m = (a+b)/2`, `d = b − a`,
/// expanded as `½dAd/δ + b(m)·d − δU(m) − w·d + cδ`.
fn segment(
    model: &LagrangianModel,
    a: &[f64],
    b: &[f64],
    step: f64,
    w: &[f64],
    c: f64,
    with_hessian: bool,
) -> Segment {
    let n = a.len();
    let m: Vec<f64> = a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect();
    let d = DVector::from_iterator(n, b.iter().zip(a).map(|(y, x)| y - x));
    let kin = model.kinetic();
    let ad = kin * &d;
    let drift = DVector::from_vec(model.drift_at(&m));
    let wv = DVector::from_column_slice(w);
    let value = 0.5 * d.dot(&ad) / step + drift.dot(&d) - step * model.total_potential(&m)
        - wv.dot(&d)
        + c * step;

    let db = model.drift_jacobian(&m);
    let grad_u = DVector::from_vec(model.total_potential_gradient(&m));
    let g_m = db.transpose() * &d - step * grad_u;
    let g_d = &ad / step + drift - wv;
    let grad_a = 0.5 * &g_m - &g_d;
    let grad_b = 0.5 * &g_m + &g_d;

    let hess = with_hessian.then(|| {
        let mut g_mm = -step * model.total_potential_hessian(&m);
        if model.has_drift() {
            for (di, hb) in d.iter().zip(model.drift_hessians(&m)) {
                g_mm += *di * hb;
            }
        }
        // g_md[j][l] = ∂_j b_l
        let g_md = db.transpose();
        let g_dd = kin / step;
        let sym = &g_md + g_md.transpose();
        let skew = &g_md - g_md.transpose();
        let haa = 0.25 * &g_mm - 0.5 * &sym + &g_dd;
        let hbb = 0.25 * &g_mm + 0.5 * &sym + &g_dd;
        let hab = 0.25 * &g_mm + 0.5 * skew - &g_dd;
        [haa, hab, hbb]
    });
    Segment {
        value,
        grad_a,
        grad_b,
        hess,
    }
}

/// Midpoint-rule action `Σ δ·[L(m_k, Δx_k/δ) − w·Δx_k/δ + c]`.
pub fn discrete_action(
    model: &LagrangianModel,
    curve: &DiscreteCurve,
    w: &CohomologyClass,
    c_offset: f64,
) -> f64 {
    curve
        .nodes
        .windows(2)
        .map(|s| segment(model, &s[0], &s[1], curve.step, &w.w, c_offset, false).value)
        .sum()
}

/// Action of `L − λ + c` for a closed one-form `λ = w·dx + dg`; on loops the
/// exact part telescopes away.
pub fn discrete_action_form(
    model: &LagrangianModel,
    curve: &DiscreteCurve,
    form: &ClosedForm,
    c_offset: f64,
) -> f64 {
    let zero = CohomologyClass::zero(curve.dim());
    let base = discrete_action(model, curve, &zero, c_offset);
    let pairing: f64 = curve
        .nodes
        .windows(2)
        .map(|s| form.integrate_segment(&s[0], &s[1]))
        .sum();
    base - pairing
}

struct Problem<'a> {
    model: &'a LagrangianModel,
    step: f64,
    w: &'a [f64],
    c: f64,
    start: Vec<f64>,
    end: Vec<f64>,
}

struct Linearization {
    value: f64,
    grad: Vec<DVector<f64>>,
    diag: Vec<DMatrix<f64>>,
    off: Vec<DMatrix<f64>>,
}

impl Problem<'_> {
    fn node<'b>(&'b self, interior: &'b [Vec<f64>], k: usize) -> &'b [f64] {
        let m = interior.len();
        if k == 0 {
            &self.start
        } else if k == m + 1 {
            &self.end
        } else {
            &interior[k - 1]
        }
    }

    fn value(&self, interior: &[Vec<f64>]) -> f64 {
        (0..=interior.len())
            .map(|k| {
                segment(
                    self.model,
                    self.node(interior, k),
                    self.node(interior, k + 1),
                    self.step,
                    self.w,
                    self.c,
                    false,
                )
                .value
            })
            .sum()
    }

    fn linearize(&self, interior: &[Vec<f64>]) -> Linearization {
        let m = interior.len();
        let n = self.start.len();
        let segs: Vec<Segment> = (0..=m)
            .map(|k| {
                segment(
                    self.model,
                    self.node(interior, k),
                    self.node(interior, k + 1),
                    self.step,
                    self.w,
                    self.c,
                    true,
                )
            })
            .collect();
        let mut grad = vec![DVector::zeros(n); m];
        let mut diag = vec![DMatrix::zeros(n, n); m];
        let mut off = Vec::with_capacity(m.saturating_sub(1));
        for k in 0..m {
            // Interior node k+1 ends segment k and starts segment k+1.
            let [_, _, hbb] = segs[k].hess.as_ref().unwrap();
            let [haa, hab, _] = segs[k + 1].hess.as_ref().unwrap();
            grad[k] = &segs[k].grad_b + &segs[k + 1].grad_a;
            diag[k] = hbb + haa;
            if k + 1 < m {
                off.push(hab.clone());
            }
        }
        Linearization {
            value: segs.iter().map(|s| s.value).sum(),
            grad,
            diag,
            off,
        }
    }

    /// Discrete momentum `−∂f₀/∂a` at the start node.
    fn start_momentum(&self, interior: &[Vec<f64>]) -> Vec<f64> {
        let s = segment(
            self.model,
            &self.start,
            self.node(interior, 1),
            self.step,
            self.w,
            self.c,
            false,
        );
        s.grad_a.iter().map(|g| -g).collect()
    }
}

fn sup_norm(v: &[DVector<f64>]) -> f64 {
    v.iter().map(|x| x.amax()).fold(0.0, f64::max)
}

/// Solves `(T + μI)x = r` for block-tridiagonal symmetric `T` by block
/// Cholesky elimination. `None` when a pivot block is not positive definite.
fn block_tridiagonal_solve(
    diag: &[DMatrix<f64>],
    off: &[DMatrix<f64>],
    rhs: &[DVector<f64>],
    mu: f64,
) -> Option<Vec<DVector<f64>>> {
    let m = diag.len();
    let n = rhs[0].len();
    let eye = DMatrix::<f64>::identity(n, n);
    let mut z: Vec<DVector<f64>> = Vec::with_capacity(m);
    let mut coupling: Vec<DMatrix<f64>> = Vec::with_capacity(m);
    for k in 0..m {
        let mut s = &diag[k] + mu * &eye;
        let mut y = rhs[k].clone();
        if k > 0 {
            let u = &off[k - 1];
            s -= u.transpose() * &coupling[k - 1];
            y -= u.transpose() * &z[k - 1];
        }
        let chol = s.cholesky()?;
        z.push(chol.solve(&y));
        if k + 1 < m {
            coupling.push(chol.solve(&off[k]));
        }
    }
    let mut x = vec![DVector::zeros(n); m];
    x[m - 1] = z[m - 1].clone();
    for k in (0..m - 1).rev() {
        x[k] = &z[k] - &coupling[k] * &x[k + 1];
    }
    Some(x)
}

struct Solved {
    interior: Vec<Vec<f64>>,
    action: f64,
    residual: f64,
    positive: bool,
}

fn newton(problem: &Problem, mut interior: Vec<Vec<f64>>, cfg: &CurveSolverConfig) -> Solved {
    let mut mu = 0.0f64;
    let mut lin = problem.linearize(&interior);
    let mut residual = sup_norm(&lin.grad);
    for _ in 0..cfg.max_iterations {
        if residual <= cfg.tolerance {
            break;
        }
        let scale = lin.diag.iter().map(|d| d.amax()).fold(1.0, f64::max);
        let rhs: Vec<DVector<f64>> = lin.grad.iter().map(|g| -g).collect();
        let mut accepted = false;
        for _ in 0..40 {
            let Some(step) = block_tridiagonal_solve(&lin.diag, &lin.off, &rhs, mu) else {
                mu = if mu == 0.0 { 1e-8 * scale } else { mu * 10.0 };
                continue;
            };
            let slope: f64 = lin.grad.iter().zip(&step).map(|(g, s)| g.dot(s)).sum();
            if slope >= 0.0 {
                mu = if mu == 0.0 { 1e-8 * scale } else { mu * 10.0 };
                continue;
            }
            let mut alpha = 1.0;
            for _ in 0..30 {
                let trial: Vec<Vec<f64>> = interior
                    .iter()
                    .zip(&step)
                    .map(|(x, s)| x.iter().zip(s.iter()).map(|(a, b)| a + alpha * b).collect())
                    .collect();
                let value = problem.value(&trial);
                let slack = 1e-14 * (1.0 + lin.value.abs());
                if value <= lin.value + 1e-4 * alpha * slope + slack {
                    interior = trial;
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if accepted {
                mu = if mu < 1e-12 * scale { 0.0 } else { mu * 0.1 };
                break;
            }
            mu = if mu == 0.0 { 1e-8 * scale } else { mu * 10.0 };
        }
        if !accepted {
            break;
        }
        lin = problem.linearize(&interior);
        residual = sup_norm(&lin.grad);
    }
    let zeros: Vec<DVector<f64>> = lin.grad.iter().map(|g| g * 0.0).collect();
    let positive = block_tridiagonal_solve(&lin.diag, &lin.off, &zeros, 0.0).is_some();
    Solved {
        interior,
        action: lin.value,
        residual,
        positive,
    }
}

/// Newton from the seed; when the result is a saddle of the action, re-solve
/// from small bumps along each axis and keep the best local minimum.
fn solve(problem: &Problem, seed: Vec<Vec<f64>>, cfg: &CurveSolverConfig) -> Result<Solved> {
    let first = newton(problem, seed.clone(), cfg);
    let mut best = first;
    if !best.positive {
        let m = seed.len();
        for axis in 0..problem.start.len() {
            for sign in [1.0, -1.0] {
                let bumped: Vec<Vec<f64>> = seed
                    .iter()
                    .enumerate()
                    .map(|(k, x)| {
                        let s = (std::f64::consts::PI * (k + 1) as f64 / (m + 1) as f64).sin();
                        let mut y = x.clone();
                        y[axis] += sign * 0.05 * s;
                        y
                    })
                    .collect();
                let cand = newton(problem, bumped, cfg);
                let better = cand.residual <= cfg.acceptable
                    && (best.residual > cfg.acceptable || cand.action < best.action - 1e-12);
                if better {
                    best = cand;
                }
            }
        }
    }
    if best.residual > cfg.acceptable || !best.residual.is_finite() {
        return Err(Error::NoConvergence {
            iterations: cfg.max_iterations,
            residual: best.residual,
        });
    }
    Ok(best)
}

fn check_times(t: f64, segments: usize) -> Result<()> {
    if !(t > MIN_DURATION) {
        return Err(Error::InvalidArgument(format!(
            "duration {t} is at or below the floor {MIN_DURATION}"
        )));
    }
    if segments < 2 {
        return Err(Error::InvalidArgument("need at least two segments".into()));
    }
    Ok(())
}

/// A stationary curve with fixed lifted endpoints.
#[derive(Clone, Debug, Serialize)]
pub struct EndpointMinimizer {
    pub curve: DiscreteCurve,
    pub action: f64,
    pub residual: f64,
    /// Momentum of `L` at the start node.
    pub start_momentum: Vec<f64>,
}

fn minimize_lifted(
    model: &LagrangianModel,
    start: &[f64],
    end: &[f64],
    t: f64,
    segments: usize,
    w: &CohomologyClass,
    c: f64,
    cfg: &CurveSolverConfig,
) -> Result<EndpointMinimizer> {
    check_times(t, segments)?;
    let problem = Problem {
        model,
        step: t / segments as f64,
        w: &w.w,
        c,
        start: start.to_vec(),
        end: end.to_vec(),
    };
    let seed = DiscreteCurve::straight(start, end, t, segments)?;
    let interior = seed.nodes[1..segments].to_vec();
    let solved = solve(&problem, interior, cfg)?;
    let momentum: Vec<f64> = problem
        .start_momentum(&solved.interior)
        .into_iter()
        .zip(&w.w)
        .map(|(p, wi)| p + wi)
        .collect();
    let mut nodes = Vec::with_capacity(segments + 1);
    nodes.push(start.to_vec());
    nodes.extend(solved.interior);
    nodes.push(end.to_vec());
    Ok(EndpointMinimizer {
        curve: DiscreteCurve::new(nodes, t)?,
        action: solved.action,
        residual: solved.residual,
        start_momentum: momentum,
    })
}

fn lifted_target(x: &TorusPoint, y: &TorusPoint, winding: &[i64]) -> Vec<f64> {
    x.coords()
        .iter()
        .zip(y.coords())
        .zip(winding)
        .map(|((a, b), k)| a + wrap_centered(b - a) + *k as f64)
        .collect()
}

/// Minimizer from `x` to the lift `x + (y − x)_centered + winding` of `y`.
pub fn minimize_endpoint(
    model: &LagrangianModel,
    x: &TorusPoint,
    y: &TorusPoint,
    winding: &[i64],
    t: f64,
    segments: usize,
    w: &CohomologyClass,
) -> Result<EndpointMinimizer> {
    if winding.len() != x.dim() {
        return Err(Error::InvalidArgument("winding has the wrong dimension".into()));
    }
    let end = lifted_target(x, y, winding);
    minimize_lifted(model, x.coords(), &end, t, segments, w, 0.0, &CurveSolverConfig::default())
}

fn windings(dim: usize, bound: i64) -> Vec<Vec<i64>> {
    let mut out = vec![vec![]];
    for _ in 0..dim {
        out = out
            .into_iter()
            .flat_map(|pre| {
                (-bound..=bound).map(move |k| {
                    let mut v = pre.clone();
                    v.push(k);
                    v
                })
            })
            .collect();
    }
    out
}

/// `h_t(x, y)` for `L − w·v + c`: best endpoint minimizer over windings with
/// `|k|∞ ≤ bound`.
#[allow(clippy::too_many_arguments)]
pub fn h_t_direct(
    model: &LagrangianModel,
    x: &TorusPoint,
    y: &TorusPoint,
    t: f64,
    w: &CohomologyClass,
    c: f64,
    segments: usize,
    bound: i64,
) -> Result<f64> {
    check_times(t, segments)?;
    let cfg = CurveSolverConfig::default();
    let results: Vec<Result<f64>> = windings(x.dim(), bound)
        .par_iter()
        .map(|k| {
            let end = lifted_target(x, y, k);
            minimize_lifted(model, x.coords(), &end, t, segments, w, c, &cfg).map(|m| m.action)
        })
        .collect();
    let mut best = f64::INFINITY;
    let mut first_err = None;
    for r in results {
        match r {
            Ok(a) => best = best.min(a),
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    if best.is_finite() {
        Ok(best)
    } else {
        Err(first_err.unwrap_or_else(|| Error::Numerical("no winding class solved".into())))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LoopMinimizer {
    pub curve: DiscreteCurve,
    pub winding: Vec<i64>,
    pub action: f64,
    pub residual: f64,
    pub initial_tangent: TangentState,
}

/// All based loops at `x` of duration `t` whose `L − w·v` action is within
/// the tie tolerance of the best over windings `|k|∞ ≤ bound`.
pub fn minimize_loop(
    model: &LagrangianModel,
    x: &TorusPoint,
    t: f64,
    segments: usize,
    w: &CohomologyClass,
    bound: i64,
) -> Result<Vec<LoopMinimizer>> {
    check_times(t, segments)?;
    let cfg = CurveSolverConfig::default();
    let results: Vec<Result<(Vec<i64>, EndpointMinimizer)>> = windings(x.dim(), bound)
        .into_par_iter()
        .map(|k| {
            let end = lifted_target(x, x, &k);
            minimize_lifted(model, x.coords(), &end, t, segments, w, 0.0, &cfg).map(|m| (k, m))
        })
        .collect();
    let mut solved = Vec::new();
    let mut first_err = None;
    for r in results {
        match r {
            Ok(s) => solved.push(s),
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    let best = solved
        .iter()
        .map(|(_, m)| m.action)
        .fold(f64::INFINITY, f64::min);
    if !best.is_finite() {
        return Err(first_err.unwrap_or_else(|| Error::Numerical("no winding class solved".into())));
    }
    Ok(solved
        .into_iter()
        .filter(|(_, m)| m.action <= best + TIE_TOLERANCE)
        .map(|(k, m)| {
            let v = model.velocity(x.coords(), &m.start_momentum);
            LoopMinimizer {
                initial_tangent: TangentState::new(x.coords().to_vec(), v),
                winding: k,
                action: m.action,
                residual: m.residual,
                curve: m.curve,
            }
        })
        .collect())
}

/// Initial tangents of the loop minimizers at every base point.
pub fn sample_radial(
    model: &LagrangianModel,
    w: &CohomologyClass,
    t: f64,
    bases: &[TorusPoint],
    segments: usize,
    bound: i64,
) -> Result<Vec<TangentState>> {
    let per_base: Vec<Result<Vec<LoopMinimizer>>> = bases
        .par_iter()
        .map(|x| minimize_loop(model, x, t, segments, w, bound))
        .collect();
    let mut out = Vec::new();
    for r in per_base {
        out.extend(r?.into_iter().map(|m| m.initial_tangent));
    }
    Ok(out)
}
