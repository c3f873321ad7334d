//! Transported verticals, conjugate points, relative heights and Green
//! bundles in graph coordinates `δp = S·δx`.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::flow::{field, flow_lifted, lift, rk4_step_variational, FlowConfig, PeriodicOrbit};
use crate::model::{CotangentState, LagrangianModel};

pub const SINGULAR_CONDITION: f64 = 1e12;
pub const DEFAULT_T_CAP: f64 = 50.0;
pub const BISECTIONS: u32 = 6;
/// Default `(t', t)` samples per period for the two-time conjugacy scan.
pub const TWO_TIME_SAMPLES: usize = 16;
const RENORMALIZE_EVERY: u64 = 128;

/// An `n`-dimensional subspace of the tangent space at a point, carried by
/// the flow with columns periodically re-orthonormalized. Right
/// multiplication by `R` with `det R > 0` changes neither the subspace nor
/// the sign of `det(δx-block)`.
#[derive(Clone, Debug)]
struct Transport<'a> {
    model: &'a LagrangianModel,
    z: Vec<f64>,
    y: DMatrix<f64>,
    time: f64,
    cfg: FlowConfig,
}

impl<'a> Transport<'a> {
    fn vertical(model: &'a LagrangianModel, z: Vec<f64>, cfg: FlowConfig) -> Self {
        let n = model.dim();
        let mut y = DMatrix::zeros(2 * n, n);
        for i in 0..n {
            y[(n + i, i)] = 1.0;
        }
        Self {
            model,
            z,
            y,
            time: 0.0,
            cfg,
        }
    }

    fn advance(&mut self, dt: f64) -> Result<()> {
        if dt == 0.0 {
            return Ok(());
        }
        let (steps, h) = self.cfg.steps_for(dt)?;
        for k in 0..steps {
            let (z, y) = rk4_step_variational(self.model, &self.z, &self.y, h);
            self.z = z;
            self.y = y;
            if (k + 1) % RENORMALIZE_EVERY == 0 {
                self.renormalize();
            }
        }
        self.renormalize();
        self.time += dt;
        Ok(())
    }

    fn renormalize(&mut self) {
        self.y = orthonormalize(&self.y);
    }

    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn x_block(&self) -> DMatrix<f64> {
        let n = self.dim();
        self.y.rows(0, n).into_owned()
    }

    fn p_block(&self) -> DMatrix<f64> {
        let n = self.dim();
        self.y.rows(n, n).into_owned()
    }

    fn det_x(&self) -> f64 {
        self.x_block().determinant()
    }

    fn sigma_min_x(&self) -> f64 {
        self.x_block()
            .singular_values()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    fn graph(&self, base: &CotangentState) -> GraphFrame {
        let x = self.x_block();
        let sv = x.clone().singular_values();
        let smax = sv.iter().copied().fold(0.0, f64::max);
        let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
        let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
        let singular = !(condition <= SINGULAR_CONDITION);
        let s = if singular {
            DMatrix::from_element(self.dim(), self.dim(), f64::NAN)
        } else {
            let inv = x.try_inverse().expect("well-conditioned block");
            self.p_block() * inv
        };
        let asym = (&s - s.transpose()).amax();
        GraphFrame {
            base: base.clone(),
            s: if singular { s } else { (&s + s.transpose()) * 0.5 },
            singular,
            condition,
            symmetry_error: if singular { f64::NAN } else { asym },
        }
    }
}

/// Subspace `{(δx, S·δx)}` at `base`.
#[derive(Clone, Debug)]
pub struct GraphFrame {
    pub base: CotangentState,
    pub s: DMatrix<f64>,
    /// The subspace is not transverse to the vertical.
    pub singular: bool,
    pub condition: f64,
    pub symmetry_error: f64,
}

impl GraphFrame {
    pub fn from_matrix(base: CotangentState, s: DMatrix<f64>) -> Self {
        Self {
            base,
            s,
            singular: false,
            condition: 1.0,
            symmetry_error: 0.0,
        }
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        matrix_rows(&self.s)
    }
}

pub fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// `DΦ_t(V(Φ_{−t}(base)))` in graph coordinates.
pub fn push_vertical(
    model: &LagrangianModel,
    base: &CotangentState,
    t: f64,
    cfg: &FlowConfig,
) -> Result<GraphFrame> {
    if t == 0.0 {
        return Err(Error::InvalidArgument("push_vertical needs t ≠ 0".into()));
    }
    let start = flow_lifted(model, &lift(base), -t, cfg)?;
    let mut tr = Transport::vertical(model, start, *cfg);
    tr.advance(t)?;
    Ok(tr.graph(base))
}

/// `Q = S₂ − S₁` with its inertia.
#[derive(Clone, Debug)]
pub struct RelativeHeight {
    pub q: DMatrix<f64>,
    pub index: usize,
    pub nullity: usize,
    pub positive: usize,
    pub eigenvalues: Vec<f64>,
}

pub const INERTIA_TOLERANCE: f64 = 1e-9;

pub fn inertia(q: &DMatrix<f64>, tol: f64) -> (usize, usize, usize, Vec<f64>) {
    let sym = (q + q.transpose()) * 0.5;
    let mut ev: Vec<f64> = sym.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    let index = ev.iter().filter(|&&e| e < -tol).count();
    let positive = ev.iter().filter(|&&e| e > tol).count();
    (index, ev.len() - index - positive, positive, ev)
}

pub fn relative_height(f1: &GraphFrame, f2: &GraphFrame) -> Result<RelativeHeight> {
    if f1.singular || f2.singular {
        return Err(Error::InvalidArgument("relative height of a frame not transverse to the vertical".into()));
    }
    if f1.base.distance(&f2.base) > 1e-6 {
        return Err(Error::InvalidArgument("frames live at different points".into()));
    }
    let q = &f2.s - &f1.s;
    let (index, nullity, positive, eigenvalues) = inertia(&q, INERTIA_TOLERANCE);
    Ok(RelativeHeight {
        q,
        index,
        nullity,
        positive,
        eigenvalues,
    })
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct ConjugacyReport {
    pub times: Vec<f64>,
    pub brackets: Vec<(f64, f64)>,
}

impl ConjugacyReport {
    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Below this normalized `σ_min(δx-block)` a sample counts as conjugate even
/// without a sign change of the determinant.
const NEAR_ZERO: f64 = 1e-9;

fn scan_one_side(
    model: &LagrangianModel,
    base: &CotangentState,
    t_near: f64,
    t_far: f64,
    scan_step: f64,
    cfg: &FlowConfig,
    report: &mut ConjugacyReport,
) -> Result<()> {
    let dir = (t_far - t_near).signum();
    let mut tr = Transport::vertical(model, lift(base), *cfg);
    tr.advance(t_near)?;
    let mut prev = tr.clone();
    let mut prev_det = tr.det_x();
    let span = (t_far - t_near).abs();
    let samples = (span / scan_step).ceil().max(1.0) as usize;
    let h = span / samples as f64;
    for _ in 0..samples {
        let mut cur = prev.clone();
        cur.advance(dir * h)?;
        let det = cur.det_x();
        if prev_det != 0.0 && det.signum() != prev_det.signum() {
            let (a, b) = bisect(&prev, dir * h, prev_det)?;
            report.brackets.push(order(a, b));
            report.times.push(0.5 * (a + b));
        } else if cur.sigma_min_x() < NEAR_ZERO {
            report.brackets.push(order(cur.time, cur.time));
            report.times.push(cur.time);
        }
        prev_det = det;
        prev = cur;
    }
    Ok(())
}

fn order(a: f64, b: f64) -> (f64, f64) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

fn bisect(left: &Transport, width: f64, left_det: f64) -> Result<(f64, f64)> {
    let mut lo = left.clone();
    let mut w = width;
    for _ in 0..BISECTIONS {
        w *= 0.5;
        let mut mid = lo.clone();
        mid.advance(w)?;
        if mid.det_x().signum() == left_det.signum() {
            lo = mid;
        }
    }
    Ok((lo.time, lo.time + w))
}

/// Times `t ∈ [t_min, t_max]` at which the vertical at `base` transported
/// for time `t` meets the vertical again.
pub fn detect_conjugate(
    model: &LagrangianModel,
    base: &CotangentState,
    t_min: f64,
    t_max: f64,
    scan_step: f64,
    cfg: &FlowConfig,
) -> Result<ConjugacyReport> {
    if !(t_min < t_max) || !(scan_step > 0.0) {
        return Err(Error::InvalidArgument("need t_min < t_max and scan_step > 0".into()));
    }
    let mut report = ConjugacyReport::default();
    // Scan outward from 0 on each side, where the vertical starts.
    let eps = scan_step.min(1e-2);
    if t_max > 0.0 {
        scan_one_side(model, base, t_min.max(eps.min(t_max)), t_max, scan_step, cfg, &mut report)?;
    }
    if t_min < 0.0 {
        scan_one_side(model, base, t_max.min(-eps.min(-t_min)), t_min, scan_step, cfg, &mut report)?;
    }
    let mut pairs: Vec<(f64, (f64, f64))> = report.times.into_iter().zip(report.brackets).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(ConjugacyReport {
        times: pairs.iter().map(|p| p.0).collect(),
        brackets: pairs.iter().map(|p| p.1).collect(),
    })
}

/// Two-time scan: verticals at `samples` phases of the orbit, each followed
/// for one period with `samples` scan steps. Returns `(t', t)` pairs.
pub fn conjugate_pairs_on_orbit(
    model: &LagrangianModel,
    orbit: &PeriodicOrbit,
    samples: usize,
    cfg: &FlowConfig,
) -> Result<Vec<(f64, f64)>> {
    let period = orbit.period;
    let step = period / samples as f64;
    let z0 = lift(&orbit.anchor);
    let phases: Vec<f64> = (0..samples).map(|k| k as f64 * step).collect();
    let found: Vec<Result<Vec<(f64, f64)>>> = phases
        .par_iter()
        .map(|&phase| {
            let z = flow_lifted(model, &z0, phase, cfg)?;
            let base = crate::flow::unlift(&z);
            let r = detect_conjugate(model, &base, step.min(1e-2), period, step, cfg)?;
            Ok(r.times.into_iter().map(|t| (phase, phase + t)).collect())
        })
        .collect();
    let mut out = Vec::new();
    for f in found {
        out.extend(f?);
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct GreenPair {
    pub minus: GraphFrame,
    pub plus: GraphFrame,
    /// Change of the last refinement, the worse of the two limits.
    pub residual: f64,
    pub residual_plus: f64,
    pub residual_minus: f64,
    pub converged: bool,
    pub t_reached: f64,
}

impl GreenPair {
    /// `S₊ − S₋`.
    pub fn gap(&self) -> DMatrix<f64> {
        &self.plus.s - &self.minus.s
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GreenDump {
    pub base_x: Vec<f64>,
    pub base_p: Vec<f64>,
    pub s_minus: Vec<Vec<f64>>,
    pub s_plus: Vec<Vec<f64>>,
    pub residual_minus: f64,
    pub residual_plus: f64,
    pub converged: bool,
    pub t_reached: f64,
}

impl From<&GreenPair> for GreenDump {
    fn from(g: &GreenPair) -> Self {
        Self {
            base_x: g.plus.base.base.coords().to_vec(),
            base_p: g.plus.base.p.clone(),
            s_minus: g.minus.rows(),
            s_plus: g.plus.rows(),
            residual_minus: g.residual_minus,
            residual_plus: g.residual_plus,
            converged: g.converged,
            t_reached: g.t_reached,
        }
    }
}

fn limit(
    model: &LagrangianModel,
    base: &CotangentState,
    sign: f64,
    t_cap: f64,
    tol: f64,
    cfg: &FlowConfig,
) -> Result<(GraphFrame, f64, f64)> {
    let mut t = 1.0f64.min(t_cap);
    let mut prev = push_vertical(model, base, sign * t, cfg)?;
    let mut residual = f64::INFINITY;
    while t < t_cap {
        t = (2.0 * t).min(t_cap);
        let cur = push_vertical(model, base, sign * t, cfg)?;
        if cur.singular {
            return Err(Error::ConjugatePoint { time: sign * t });
        }
        residual = (&cur.s - &prev.s).amax();
        prev = cur;
        if residual <= tol {
            break;
        }
    }
    Ok((prev, residual, t))
}

/// Limits of `push_vertical(base, ±t)` along `t = 1, 2, 4, …, t_cap`,
/// stopping once consecutive slopes differ by at most `tol`.
pub fn green_bundles(
    model: &LagrangianModel,
    base: &CotangentState,
    t_cap: f64,
    tol: f64,
    cfg: &FlowConfig,
) -> Result<GreenPair> {
    if !(t_cap > 0.0) || !(tol > 0.0) {
        return Err(Error::InvalidArgument("t_cap and tol must be positive".into()));
    }
    let conj = detect_conjugate(model, base, -t_cap, t_cap, 0.05, cfg)?;
    if let Some(&time) = conj.times.first() {
        return Err(Error::ConjugatePoint { time });
    }
    let (plus, rp, tp) = limit(model, base, 1.0, t_cap, tol, cfg)?;
    let (minus, rm, tm) = limit(model, base, -1.0, t_cap, tol, cfg)?;
    let residual = rp.max(rm);
    Ok(GreenPair {
        minus,
        plus,
        residual,
        residual_plus: rp,
        residual_minus: rm,
        converged: residual <= tol,
        t_reached: tp.max(tm),
    })
}

fn orthonormalize(y: &DMatrix<f64>) -> DMatrix<f64> {
    let qr = y.clone().qr();
    let mut q = qr.q();
    let r = qr.r();
    for i in 0..r.nrows() {
        if r[(i, i)] < 0.0 {
            q.column_mut(i).neg_mut();
        }
    }
    q
}

fn slope(y: &DMatrix<f64>, n: usize) -> Option<DMatrix<f64>> {
    let x = y.rows(0, n).into_owned();
    let sv = x.clone().singular_values();
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if !(smin > 0.0 && smax / smin <= SINGULAR_CONDITION) {
        return None;
    }
    let s = y.rows(n, n).into_owned() * x.try_inverse()?;
    Some((&s + s.transpose()) * 0.5)
}

/// Symplectic inverse `−J Mᵀ J`.
fn symplectic_inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    let j = crate::flow::symplectic_form(m.nrows() / 2);
    -(&j * m.transpose() * &j)
}

/// Green bundles at the anchor of a periodic orbit. Verticals are pushed by
/// whole periods, `V_{kT} = M^{±k} V`, so the computation never leaves the
/// orbit even when it is strongly unstable. Conjugate points on
/// `[−t_cap, t_cap]` are scanned with `samples` frames per period.
pub fn periodic_green_bundles(
    model: &LagrangianModel,
    orbit: &PeriodicOrbit,
    t_cap: f64,
    tol: f64,
    samples: usize,
    cfg: &FlowConfig,
) -> Result<GreenPair> {
    if !(t_cap > 0.0) || !(tol > 0.0) || samples == 0 {
        return Err(Error::InvalidArgument("t_cap, tol and samples must be positive".into()));
    }
    let n = model.dim();
    let period = orbit.period;
    let periods = ((t_cap / period).floor() as u64).max(1);
    let z0 = lift(&orbit.anchor);
    // frames[j] = DΦ_{(j+1)T/samples}(anchor)
    let mut frames = Vec::with_capacity(samples);
    let mut z = z0.clone();
    let mut y = DMatrix::<f64>::identity(2 * n, 2 * n);
    let h = period / samples as f64;
    for _ in 0..samples {
        let (steps, dt) = cfg.steps_for(h)?;
        for _ in 0..steps {
            let (zn, yn) = rk4_step_variational(model, &z, &y, dt);
            z = zn;
            y = yn;
        }
        frames.push(y.clone());
    }
    let mono = frames[samples - 1].clone();
    let mono_inv = symplectic_inverse(&mono);
    let mut vertical = DMatrix::zeros(2 * n, n);
    for i in 0..n {
        vertical[(n + i, i)] = 1.0;
    }

    let mut result = Vec::with_capacity(2);
    for sign in [1.0, -1.0] {
        // Transported vertical at times sign·(kT + s).
        let mut yk = vertical.clone();
        let mut prev_det: Option<f64> = None;
        let mut prev_s: Option<DMatrix<f64>> = None;
        let mut residual = f64::INFINITY;
        let mut reached = 0.0;
        let mut next_check = 1u64;
        for k in 0..periods {
            for j in 0..samples {
                let f = if sign > 0.0 {
                    &frames[j] * &yk
                } else if j + 1 < samples {
                    &frames[samples - 2 - j] * (&mono_inv * &yk)
                } else {
                    &mono_inv * &yk
                };
                let det = f.rows(0, n).determinant();
                if let Some(pd) = prev_det {
                    if det.signum() != pd.signum() {
                        let time = sign * ((k as f64) * period + (j + 1) as f64 * h);
                        return Err(Error::ConjugatePoint { time });
                    }
                }
                prev_det = Some(det);
            }
            yk = orthonormalize(&if sign > 0.0 { &mono * &yk } else { &mono_inv * &yk });
            // Doubling checkpoints only: the rank threshold assumes a t, 2t refinement.
            if k + 1 == next_check {
                next_check *= 2;
                let s = slope(&yk, n).ok_or(Error::ConjugatePoint {
                    time: sign * (k + 1) as f64 * period,
                })?;
                if let Some(p) = &prev_s {
                    residual = (&s - p).amax();
                }
                reached = (k + 1) as f64 * period;
                prev_s = Some(s);
                if residual <= tol {
                    break;
                }
            }
        }
        let s = prev_s.expect("at least one period");
        result.push((GraphFrame::from_matrix(orbit.anchor.clone(), s), residual, reached));
    }
    let (minus, rm, tm) = result.pop().unwrap();
    let (plus, rp, tp) = result.pop().unwrap();
    let residual = rp.max(rm);
    Ok(GreenPair {
        minus,
        plus,
        residual,
        residual_plus: rp,
        residual_minus: rm,
        converged: residual <= tol,
        t_reached: tp.max(tm),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum OrbitKind {
    Hyperbolic,
    Degenerate,
}

#[derive(Clone, Debug, Serialize)]
pub struct Classification {
    pub kind: OrbitKind,
    pub rank: usize,
    pub fixed_point: bool,
    pub gap_eigenvalues: Vec<f64>,
    pub rank_threshold: f64,
    /// Floquet multipliers as `(re, im)`.
    pub floquet: Vec<(f64, f64)>,
    pub unit_multipliers: usize,
    pub floquet_hyperbolic: bool,
    /// The Green-bundle and Floquet verdicts agree.
    pub consistent: bool,
    pub green: GreenDump,
}

pub const UNIT_MULTIPLIER_TOLERANCE: f64 = 1e-4;

/// Rank of `S₊ − S₋` at the anchor, cross-checked with the monodromy
/// spectrum. Orbits need `rank = n − 1`; fixed points need full rank.
pub fn classify_periodic(
    model: &LagrangianModel,
    orbit: &PeriodicOrbit,
    t_cap: f64,
    tol: f64,
    cfg: &FlowConfig,
) -> Result<Classification> {
    let n = model.dim();
    let fixed = orbit.is_fixed_point(model);
    if !fixed {
        let pairs = conjugate_pairs_on_orbit(model, orbit, TWO_TIME_SAMPLES, cfg)?;
        if let Some(&(_, t)) = pairs.first() {
            return Err(Error::ConjugatePoint { time: t });
        }
    }
    let green = periodic_green_bundles(model, orbit, t_cap, tol, 64, cfg)?;
    let threshold = tol.max(2.0 * (green.residual_plus + green.residual_minus));
    let (_, _, rank, ev) = inertia(&green.gap(), threshold);
    let required = if fixed { n } else { n - 1 };
    let kind = if rank >= required {
        OrbitKind::Hyperbolic
    } else {
        OrbitKind::Degenerate
    };
    let unit: Vec<_> = orbit
        .floquet
        .iter()
        .filter(|m| (m.norm() - 1.0).abs() <= UNIT_MULTIPLIER_TOLERANCE)
        .collect();
    let all_one = unit
        .iter()
        .all(|m| (*m - nalgebra::Complex::new(1.0, 0.0)).norm() <= UNIT_MULTIPLIER_TOLERANCE.sqrt());
    let floquet_hyperbolic = if fixed {
        unit.is_empty()
    } else {
        unit.len() == 2 && all_one
    };
    Ok(Classification {
        kind,
        rank,
        fixed_point: fixed,
        gap_eigenvalues: ev,
        rank_threshold: threshold,
        floquet: orbit.floquet.iter().map(|m| (m.re, m.im)).collect(),
        unit_multipliers: unit.len(),
        floquet_hyperbolic,
        consistent: floquet_hyperbolic == (kind == OrbitKind::Hyperbolic),
        green: GreenDump::from(&green),
    })
}

/// `max |ṗ − S·ẋ|` for the Hamiltonian vector field at the frame's base.
pub fn flow_direction_defect(model: &LagrangianModel, frame: &GraphFrame) -> (f64, f64) {
    let n = model.dim();
    let f = field(model, &lift(&frame.base));
    let dx = nalgebra::DVector::from_column_slice(&f[..n]);
    let dp = nalgebra::DVector::from_column_slice(&f[n..]);
    ((dp - &frame.s * &dx).amax(), dx.amax())
}
