//! Hamiltonian flow, its linearization and periodic orbits.
//!
//! States are integrated in lifted coordinates `(x, p) ∈ ℝ^n × ℝ^n` with a
//! classical fixed-step RK4 scheme; the variational system uses the exact
//! Hessian of `H` along the orbit and the same stepper.

use std::io::Write;

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::model::{wrap_centered, CotangentState, LagrangianModel};

pub const DEFAULT_STEP: f64 = 1e-3;
pub const DEFAULT_MAX_STEPS: u64 = 10_000_000;

#[derive(Clone, Copy, Debug)]
pub struct FlowConfig {
    pub step: f64,
    pub max_steps: u64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            step: DEFAULT_STEP,
            max_steps: DEFAULT_MAX_STEPS,
        }
    }
}

impl FlowConfig {
    pub fn with_step(step: f64) -> Self {
        Self {
            step,
            ..Self::default()
        }
    }

    /// Number of equal steps covering `|t|`, and the signed step length.
    pub fn steps_for(&self, t: f64) -> Result<(u64, f64)> {
        if !(self.step > 0.0) {
            return Err(Error::InvalidArgument("integration step must be positive".into()));
        }
        if t == 0.0 {
            return Ok((0, 0.0));
        }
        let ratio = t.abs() / self.step;
        if !ratio.is_finite() || ratio > self.max_steps as f64 {
            return Err(Error::StepCap {
                steps: if ratio.is_finite() { ratio as u64 } else { u64::MAX },
                cap: self.max_steps,
            });
        }
        let steps = ((ratio - 1e-9).ceil() as u64).max(1);
        Ok((steps, t / steps as f64))
    }
}

/// Orbit samples `h` apart in flow time.
#[derive(Clone, Debug)]
pub struct Trajectory {
    /// Signed time between consecutive samples.
    pub step: f64,
    pub samples: Vec<CotangentState>,
    /// End point in lifted coordinates `(x, p)`.
    pub lifted_end: Vec<f64>,
    /// `max |H(sample) − H(start)|`.
    pub energy_drift: f64,
}

impl Trajectory {
    pub fn end(&self) -> &CotangentState {
        self.samples.last().expect("trajectory has at least one sample")
    }

    pub fn duration(&self) -> f64 {
        self.step * (self.samples.len().saturating_sub(1)) as f64
    }

    /// CSV with columns `t, x1..xn, p1..pn, H`.
    pub fn write_csv<W: Write>(&self, model: &LagrangianModel, mut out: W) -> Result<()> {
        let n = model.dim();
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("x{i}")));
        header.extend((1..=n).map(|i| format!("p{i}")));
        header.push("H".into());
        writeln!(out, "{}", header.join(","))?;
        for (k, s) in self.samples.iter().enumerate() {
            let mut row = vec![fmt_f64(self.step * k as f64)];
            row.extend(s.base.coords().iter().map(|&x| fmt_f64(x)));
            row.extend(s.p.iter().map(|&p| fmt_f64(p)));
            row.push(fmt_f64(model.eval_hamiltonian(s)));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// A `2n × 2n` matrix transporting tangent vectors in `(δx, δp)` coordinates.
#[derive(Clone, Debug)]
pub struct TangentFrame {
    pub matrix: DMatrix<f64>,
}

impl TangentFrame {
    pub fn identity(dim: usize) -> Self {
        Self {
            matrix: DMatrix::identity(2 * dim, 2 * dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows() / 2
    }

    /// `‖Mᵀ J M − J‖∞` (entrywise maximum).
    pub fn symplectic_error(&self) -> f64 {
        let j = symplectic_form(self.dim());
        let m = &self.matrix;
        (m.transpose() * &j * m - j).abs().max()
    }

    pub fn eigenvalues(&self) -> Vec<Complex<f64>> {
        self.matrix.clone().complex_eigenvalues().iter().copied().collect()
    }

    pub fn xx(&self) -> DMatrix<f64> {
        let n = self.dim();
        self.matrix.view((0, 0), (n, n)).into_owned()
    }

    pub fn xp(&self) -> DMatrix<f64> {
        let n = self.dim();
        self.matrix.view((0, n), (n, n)).into_owned()
    }

    pub fn px(&self) -> DMatrix<f64> {
        let n = self.dim();
        self.matrix.view((n, 0), (n, n)).into_owned()
    }

    pub fn pp(&self) -> DMatrix<f64> {
        let n = self.dim();
        self.matrix.view((n, n), (n, n)).into_owned()
    }
}

/// `J = [[0, I], [−I, 0]]`.
pub fn symplectic_form(dim: usize) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(2 * dim, 2 * dim);
    for i in 0..dim {
        j[(i, dim + i)] = 1.0;
        j[(dim + i, i)] = -1.0;
    }
    j
}

pub(crate) fn lift(state: &CotangentState) -> Vec<f64> {
    let mut z = state.base.coords().to_vec();
    z.extend_from_slice(&state.p);
    z
}

pub(crate) fn unlift(z: &[f64]) -> CotangentState {
    let n = z.len() / 2;
    CotangentState::new(z[..n].to_vec(), z[n..].to_vec())
}

pub(crate) fn field(model: &LagrangianModel, z: &[f64]) -> Vec<f64> {
    let n = model.dim();
    let (dx, dp) = model.vector_field(&z[..n], &z[n..]);
    let mut f = dx;
    f.extend(dp);
    f
}

/// Jacobian of Hamilton's vector field, `[[H_px, H_pp], [−H_xx, −H_xp]]`.
pub(crate) fn field_jacobian(model: &LagrangianModel, z: &[f64]) -> DMatrix<f64> {
    let n = model.dim();
    let h = model.hessian_blocks(&z[..n], &z[n..]);
    let mut j = DMatrix::zeros(2 * n, 2 * n);
    j.view_mut((0, 0), (n, n)).copy_from(&h.hxp.transpose());
    j.view_mut((0, n), (n, n)).copy_from(&h.hpp);
    j.view_mut((n, 0), (n, n)).copy_from(&(-&h.hxx));
    j.view_mut((n, n), (n, n)).copy_from(&(-&h.hxp));
    j
}

fn axpy(z: &[f64], a: f64, k: &[f64]) -> Vec<f64> {
    z.iter().zip(k).map(|(z, k)| z + a * k).collect()
}

pub(crate) fn rk4_step(model: &LagrangianModel, z: &[f64], h: f64) -> Vec<f64> {
    let k1 = field(model, z);
    let k2 = field(model, &axpy(z, 0.5 * h, &k1));
    let k3 = field(model, &axpy(z, 0.5 * h, &k2));
    let k4 = field(model, &axpy(z, h, &k3));
    (0..z.len())
        .map(|i| z[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

/// One RK4 step of the state together with a block of tangent vectors.
pub(crate) fn rk4_step_variational(
    model: &LagrangianModel,
    z: &[f64],
    y: &DMatrix<f64>,
    h: f64,
) -> (Vec<f64>, DMatrix<f64>) {
    let k1 = field(model, z);
    let a1 = field_jacobian(model, z);
    let l1 = &a1 * y;
    let z2 = axpy(z, 0.5 * h, &k1);
    let k2 = field(model, &z2);
    let l2 = field_jacobian(model, &z2) * (y + &l1 * (0.5 * h));
    let z3 = axpy(z, 0.5 * h, &k2);
    let k3 = field(model, &z3);
    let l3 = field_jacobian(model, &z3) * (y + &l2 * (0.5 * h));
    let z4 = axpy(z, h, &k3);
    let k4 = field(model, &z4);
    let l4 = field_jacobian(model, &z4) * (y + &l3 * h);
    let zn = (0..z.len())
        .map(|i| z[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect();
    let yn = y + (l1 + l2 * 2.0 + l3 * 2.0 + l4) * (h / 6.0);
    (zn, yn)
}

/// Flow a lifted state for time `t` without storing samples.
pub fn flow_lifted(model: &LagrangianModel, z: &[f64], t: f64, cfg: &FlowConfig) -> Result<Vec<f64>> {
    let (steps, h) = cfg.steps_for(t)?;
    let mut z = z.to_vec();
    for _ in 0..steps {
        z = rk4_step(model, &z, h);
    }
    Ok(z)
}

/// Flow a lifted state and a block of tangent vectors for time `t`.
pub fn transport_lifted(
    model: &LagrangianModel,
    z: &[f64],
    y: &DMatrix<f64>,
    t: f64,
    cfg: &FlowConfig,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let (steps, h) = cfg.steps_for(t)?;
    let mut z = z.to_vec();
    let mut y = y.clone();
    for _ in 0..steps {
        let (zn, yn) = rk4_step_variational(model, &z, &y, h);
        z = zn;
        y = yn;
    }
    Ok((z, y))
}

/// `Φ_t(start)`, keeping every sample.
pub fn integrate(
    model: &LagrangianModel,
    start: &CotangentState,
    t: f64,
    cfg: &FlowConfig,
) -> Result<Trajectory> {
    let (steps, h) = cfg.steps_for(t)?;
    let h0 = model.eval_hamiltonian(start);
    let mut z = lift(start);
    let mut samples = Vec::with_capacity(steps as usize + 1);
    samples.push(start.clone());
    let mut drift: f64 = 0.0;
    for _ in 0..steps {
        z = rk4_step(model, &z, h);
        let s = unlift(&z);
        drift = drift.max((model.eval_hamiltonian(&s) - h0).abs());
        samples.push(s);
    }
    Ok(Trajectory {
        step: h,
        samples,
        lifted_end: z,
        energy_drift: drift,
    })
}

/// `Φ_t(start)` together with `DΦ_t(start)`.
pub fn integrate_variational(
    model: &LagrangianModel,
    start: &CotangentState,
    t: f64,
    cfg: &FlowConfig,
) -> Result<(Trajectory, TangentFrame)> {
    let (steps, h) = cfg.steps_for(t)?;
    let n = model.dim();
    let h0 = model.eval_hamiltonian(start);
    let mut z = lift(start);
    let mut y = DMatrix::identity(2 * n, 2 * n);
    let mut samples = Vec::with_capacity(steps as usize + 1);
    samples.push(start.clone());
    let mut drift: f64 = 0.0;
    for _ in 0..steps {
        let (zn, yn) = rk4_step_variational(model, &z, &y, h);
        z = zn;
        y = yn;
        let s = unlift(&z);
        drift = drift.max((model.eval_hamiltonian(&s) - h0).abs());
        samples.push(s);
    }
    Ok((
        Trajectory {
            step: h,
            samples,
            lifted_end: z,
            energy_drift: drift,
        },
        TangentFrame { matrix: y },
    ))
}

/// Second gauge condition for the periodic-orbit Newton solve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PeriodGauge {
    /// Keep `T` fixed and solve for the state.
    FixPeriod,
    /// Keep `H` at its value on the guess and solve for state and `T`.
    FixEnergy,
}

#[derive(Clone, Copy, Debug)]
pub struct NewtonConfig {
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Shooting segments per unit of flow time.
    pub segments_per_unit_time: f64,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-12,
            max_iterations: 40,
            segments_per_unit_time: 8.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PeriodicOrbit {
    pub anchor: CotangentState,
    pub period: f64,
    pub monodromy: TangentFrame,
    pub floquet: Vec<Complex<f64>>,
    /// Integer displacement of the base point over one period.
    pub winding: Vec<i64>,
    /// `‖Φ_T(anchor) − anchor‖∞` with base coordinates compared mod `ℤ^n`.
    pub residual: f64,
    pub trajectory: Trajectory,
}

impl PeriodicOrbit {
    /// Treat a fixed point of the flow as an orbit of period `period`.
    pub fn from_fixed_point(
        model: &LagrangianModel,
        point: &CotangentState,
        period: f64,
        cfg: &FlowConfig,
    ) -> Result<Self> {
        Self::assemble(model, point.clone(), period, cfg)
    }

    /// Monodromy and Floquet data of the orbit through `point`, for a point already known to
    /// close up after `period`.
    pub fn through(
        model: &LagrangianModel,
        point: &CotangentState,
        period: f64,
        cfg: &FlowConfig,
    ) -> Result<Self> {
        Self::assemble(model, point.clone(), period, cfg)
    }

    fn assemble(
        model: &LagrangianModel,
        anchor: CotangentState,
        period: f64,
        cfg: &FlowConfig,
    ) -> Result<Self> {
        let n = model.dim();
        let (trajectory, frame) = integrate_variational(model, &anchor, period, cfg)?;
        let z0 = lift(&anchor);
        let residual = max_abs(&periodic_residual(&z0, &trajectory.lifted_end));
        let winding = (0..n)
            .map(|i| (trajectory.lifted_end[i] - z0[i]).round() as i64)
            .collect();
        let floquet = frame.eigenvalues();
        Ok(Self {
            anchor,
            period,
            monodromy: frame,
            floquet,
            winding,
            residual,
            trajectory,
        })
    }

    pub fn is_fixed_point(&self, model: &LagrangianModel) -> bool {
        let z = lift(&self.anchor);
        field(model, &z).iter().all(|f| f.abs() < 1e-9)
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// `Φ_T(z) − z` with base coordinates compared modulo `ℤ^n`.
fn periodic_residual(z0: &[f64], z1: &[f64]) -> Vec<f64> {
    let n = z0.len() / 2;
    (0..2 * n)
        .map(|i| {
            let d = z1[i] - z0[i];
            if i < n {
                wrap_centered(d)
            } else {
                d
            }
        })
        .collect()
}

fn pseudo_solve(j: &DMatrix<f64>, r: &DVector<f64>) -> Result<DVector<f64>> {
    let svd = j.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if !(smax > 0.0) {
        return Err(Error::SingularJacobian("zero jacobian".into()));
    }
    svd.solve(r, 1e-11 * smax)
        .map_err(|e| Error::SingularJacobian(e.to_string()))
}

/// Unknowns of the multiple-shooting system: every node state except the
/// frozen coordinate of the first one, plus the period under `FixEnergy`.
struct Shooting<'a> {
    model: &'a LagrangianModel,
    flow: &'a FlowConfig,
    gauge: PeriodGauge,
    segments: usize,
    frozen: usize,
    energy: f64,
}

struct ShootingEval {
    residual: DVector<f64>,
    ends: Vec<Vec<f64>>,
    jacobians: Vec<DMatrix<f64>>,
}

impl Shooting<'_> {
    fn dim(&self) -> usize {
        2 * self.model.dim()
    }

    fn unknowns(&self) -> usize {
        self.segments * self.dim() - 1 + usize::from(self.gauge == PeriodGauge::FixEnergy)
    }

    fn evaluate(&self, nodes: &[Vec<f64>], period: f64) -> Result<ShootingEval> {
        let d = self.dim();
        let n = d / 2;
        let tau = period / self.segments as f64;
        let mut residual = Vec::with_capacity(self.segments * d + 1);
        let mut ends = Vec::with_capacity(self.segments);
        let mut jacobians = Vec::with_capacity(self.segments);
        for (k, z) in nodes.iter().enumerate() {
            let (zt, m) = transport_lifted(self.model, z, &DMatrix::identity(d, d), tau, self.flow)?;
            if k + 1 < self.segments {
                residual.extend(zt.iter().zip(&nodes[k + 1]).map(|(a, b)| a - b));
            } else {
                residual.extend(periodic_residual(&nodes[0], &zt));
            }
            ends.push(zt);
            jacobians.push(m);
        }
        if self.gauge == PeriodGauge::FixEnergy {
            residual.push(self.model.hamiltonian(&nodes[0][..n], &nodes[0][n..]) - self.energy);
        }
        Ok(ShootingEval {
            residual: DVector::from_vec(residual),
            ends,
            jacobians,
        })
    }

    /// Column of the unknown vector holding node `k`, component `i`.
    fn column(&self, k: usize, i: usize) -> Option<usize> {
        let d = self.dim();
        if k == 0 {
            match i.cmp(&self.frozen) {
                std::cmp::Ordering::Less => Some(i),
                std::cmp::Ordering::Equal => None,
                std::cmp::Ordering::Greater => Some(i - 1),
            }
        } else {
            Some(k * d - 1 + i)
        }
    }

    fn jacobian(&self, nodes: &[Vec<f64>], eval: &ShootingEval) -> DMatrix<f64> {
        let d = self.dim();
        let n = d / 2;
        let rows = eval.residual.len();
        let cols = self.unknowns();
        let mut jac = DMatrix::zeros(rows, cols);
        for k in 0..self.segments {
            let next = (k + 1) % self.segments;
            for row in 0..d {
                for i in 0..d {
                    if let Some(c) = self.column(k, i) {
                        jac[(k * d + row, c)] += eval.jacobians[k][(row, i)];
                    }
                }
                if let Some(c) = self.column(next, row) {
                    jac[(k * d + row, c)] -= 1.0;
                }
            }
        }
        if self.gauge == PeriodGauge::FixEnergy {
            let (hx, hp) = self.model.hamiltonian_gradient(&nodes[0][..n], &nodes[0][n..]);
            for i in 0..d {
                if let Some(c) = self.column(0, i) {
                    jac[(rows - 1, c)] = if i < n { hx[i] } else { hp[i - n] };
                }
            }
            for k in 0..self.segments {
                let f = field(self.model, &eval.ends[k]);
                for row in 0..d {
                    jac[(k * d + row, cols - 1)] = f[row] / self.segments as f64;
                }
            }
        }
        jac
    }

    fn apply(&self, nodes: &[Vec<f64>], period: f64, step: &DVector<f64>, lambda: f64) -> (Vec<Vec<f64>>, f64) {
        let d = self.dim();
        let mut out = nodes.to_vec();
        for (k, node) in out.iter_mut().enumerate() {
            for (i, zi) in node.iter_mut().enumerate() {
                if let Some(c) = self.column(k, i) {
                    *zi += lambda * step[c];
                }
            }
        }
        let period = if self.gauge == PeriodGauge::FixEnergy {
            period + lambda * step[self.unknowns() - 1]
        } else {
            period
        };
        debug_assert_eq!(out[0].len(), d);
        (out, period)
    }
}

/// Newton search for a periodic orbit near `guess` by multiple shooting.
///
/// The phase along the orbit is fixed by freezing the base coordinate with
/// the largest velocity; the second condition is chosen by `gauge`. Nodes
/// start on the flow of the guess when it nearly closes up after `t_guess`,
/// otherwise on the constant-momentum line through the guess.
pub fn find_periodic(
    model: &LagrangianModel,
    guess: &CotangentState,
    t_guess: f64,
    gauge: PeriodGauge,
    flow: &FlowConfig,
    newton: &NewtonConfig,
) -> Result<PeriodicOrbit> {
    if !(t_guess > 0.0) {
        return Err(Error::InvalidArgument("period guess must be positive".into()));
    }
    let n = model.dim();
    let d = 2 * n;
    let z = lift(guess);
    let f0 = field(model, &z);
    let frozen = (0..n)
        .max_by(|&a, &b| f0[a].abs().total_cmp(&f0[b].abs()))
        .unwrap_or(0);
    let segments = ((t_guess * newton.segments_per_unit_time).ceil() as usize).max(1);
    let shooting = Shooting {
        model,
        flow,
        gauge,
        segments,
        frozen,
        energy: model.hamiltonian(&z[..n], &z[n..]),
    };

    let tau = t_guess / segments as f64;
    let closes = max_abs(&periodic_residual(&z, &flow_lifted(model, &z, t_guess, flow)?)) <= 0.1;
    let mut nodes = Vec::with_capacity(segments);
    let mut cur = z.clone();
    for k in 0..segments {
        if closes {
            nodes.push(cur.clone());
            cur = flow_lifted(model, &cur, tau, flow)?;
        } else {
            let t = k as f64 * tau;
            let mut node = z.clone();
            for i in 0..n {
                node[i] += t * f0[i];
            }
            nodes.push(node);
        }
    }
    let mut period = t_guess;

    let mut eval = shooting.evaluate(&nodes, period)?;
    let mut iterations = 0;
    loop {
        let current = max_abs(eval.residual.as_slice());
        if current <= newton.tolerance {
            break;
        }
        if iterations >= newton.max_iterations {
            return Err(Error::NoConvergence {
                iterations,
                residual: current,
            });
        }
        iterations += 1;
        let jac = shooting.jacobian(&nodes, &eval);
        let step = pseudo_solve(&jac, &(-&eval.residual))?;
        let mut lambda = 1.0;
        let accepted = loop {
            let (trial, trial_period) = shooting.apply(&nodes, period, &step, lambda);
            if trial_period > 0.0 {
                let te = shooting.evaluate(&trial, trial_period)?;
                if max_abs(te.residual.as_slice()) < current {
                    nodes = trial;
                    period = trial_period;
                    eval = te;
                    break true;
                }
            }
            lambda *= 0.5;
            if lambda < 1e-4 {
                break false;
            }
        };
        if !accepted {
            // stalled at round-off level
            if current <= 10.0 * newton.tolerance {
                break;
            }
            return Err(Error::NoConvergence {
                iterations,
                residual: current,
            });
        }
    }
    debug_assert_eq!(nodes[0].len(), d);
    PeriodicOrbit::assemble(model, unlift(&nodes[0]), period, flow)
}

/// True when no two samples share a base point (within `resolution`) while
/// having momenta further apart than `resolution`.
pub fn samples_are_graph(samples: &[CotangentState], resolution: f64) -> bool {
    for (i, a) in samples.iter().enumerate() {
        for b in &samples[i + 1..] {
            if a.base.distance(&b.base) <= resolution {
                let dp = a
                    .p
                    .iter()
                    .zip(&b.p)
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
                    .sqrt();
                if dp > resolution {
                    return false;
                }
            }
        }
    }
    true
}

pub fn orbit_is_graph(orbit: &PeriodicOrbit, resolution: f64) -> bool {
    // thin the samples so that the pairwise scan stays cheap
    let stride = (orbit.trajectory.samples.len() / 2000).max(1);
    let thinned: Vec<CotangentState> = orbit
        .trajectory
        .samples
        .iter()
        .step_by(stride)
        .cloned()
        .collect();
    samples_are_graph(&thinned, resolution)
}
