//! Tonelli Lagrangians of mechanical type on the flat torus `T^n`.
//!
//! Every model has the form
//!
//! ```text
//! L(x, v) = ½ v·Av + b(x)·v − V(x) − psi(x)
//! H(x, p) = ½ (p − b)·A⁻¹(p − b) + V(x) + psi(x)
//! ```
//!
//! with a constant positive definite kinetic matrix `A` and Fourier sums for
//! the drift one-form `b`, the potential `V` and the perturbation `psi`.
//! All derivatives are taken term by term, so they are exact.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const TAU: f64 = 2.0 * PI;

/// Reduce a real number to `[0, 1)`.
pub fn wrap_unit(x: f64) -> f64 {
    let r = x - x.floor();
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Reduce a displacement to the symmetric interval `[-½, ½)`.
pub fn wrap_centered(d: f64) -> f64 {
    d - (d + 0.5).floor()
}

/// A point of `T^n`, coordinates reduced to `[0, 1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorusPoint {
    coords: Vec<f64>,
}

impl TorusPoint {
    pub fn new(coords: Vec<f64>) -> Self {
        Self {
            coords: coords.into_iter().map(wrap_unit).collect(),
        }
    }

    pub fn origin(dim: usize) -> Self {
        Self {
            coords: vec![0.0; dim],
        }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    /// Shortest displacement from `self` to `other` over all integer lifts.
    pub fn delta_to(&self, other: &TorusPoint) -> Vec<f64> {
        self.coords
            .iter()
            .zip(&other.coords)
            .map(|(a, b)| wrap_centered(b - a))
            .collect()
    }

    /// Flat distance on the torus.
    pub fn distance(&self, other: &TorusPoint) -> f64 {
        self.delta_to(other).iter().map(|d| d * d).sum::<f64>().sqrt()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TangentState {
    pub base: TorusPoint,
    pub v: Vec<f64>,
}

impl TangentState {
    pub fn new(x: Vec<f64>, v: Vec<f64>) -> Self {
        Self {
            base: TorusPoint::new(x),
            v,
        }
    }

    /// Distance in `TM`: flat distance on the base combined with the
    /// Euclidean distance of the fibre vectors.
    pub fn distance(&self, other: &TangentState) -> f64 {
        let dx = self.base.distance(&other.base);
        let dv: f64 = self
            .v
            .iter()
            .zip(&other.v)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        (dx * dx + dv).sqrt()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CotangentState {
    pub base: TorusPoint,
    pub p: Vec<f64>,
}

impl CotangentState {
    pub fn new(x: Vec<f64>, p: Vec<f64>) -> Self {
        Self {
            base: TorusPoint::new(x),
            p,
        }
    }

    pub fn dim(&self) -> usize {
        self.p.len()
    }

    pub fn distance(&self, other: &CotangentState) -> f64 {
        let dx = self.base.distance(&other.base);
        let dp: f64 = self
            .p
            .iter()
            .zip(&other.p)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        (dx * dx + dp).sqrt()
    }
}

/// The constant one-form `w·dx` representing a class of `H¹(T^n)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CohomologyClass {
    pub w: Vec<f64>,
}

impl CohomologyClass {
    pub fn new(w: Vec<f64>) -> Self {
        Self { w }
    }

    pub fn zero(dim: usize) -> Self {
        Self { w: vec![0.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }

    pub fn pair(&self, v: &[f64]) -> f64 {
        self.w.iter().zip(v).map(|(a, b)| a * b).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.w.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

/// A closed one-form `w·dx + dg`. Only the class `w` matters for
/// minimizers; the exact part integrates to `g(end) − g(start)`.
#[derive(Clone, Debug)]
pub struct ClosedForm {
    pub class: CohomologyClass,
    pub exact: FourierField,
}

impl ClosedForm {
    /// Line integral along the straight segment `a → b` (lifted coordinates).
    pub fn integrate_segment(&self, a: &[f64], b: &[f64]) -> f64 {
        let d: Vec<f64> = b.iter().zip(a).map(|(x, y)| x - y).collect();
        self.class.pair(&d) + self.exact.eval(b) - self.exact.eval(a)
    }
}

/// One term `cos·cos(2π k·x) + sin·sin(2π k·x)` of a Fourier sum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FourierMode {
    pub k: Vec<i32>,
    #[serde(default)]
    pub cos: f64,
    #[serde(default)]
    pub sin: f64,
}

/// A finite real Fourier sum on `T^n`.
#[derive(Clone, Debug, PartialEq)]
pub struct FourierField {
    dim: usize,
    modes: Vec<FourierMode>,
}

impl FourierField {
    pub fn zero(dim: usize) -> Self {
        Self { dim, modes: vec![] }
    }

    pub fn constant(dim: usize, value: f64) -> Self {
        Self::new(
            dim,
            vec![FourierMode {
                k: vec![0; dim],
                cos: value,
                sin: 0.0,
            }],
        )
        .expect("constant mode has the right dimension")
    }

    pub fn new(dim: usize, modes: Vec<FourierMode>) -> Result<Self> {
        for m in &modes {
            if m.k.len() != dim {
                return Err(Error::InvalidModel(format!(
                    "Fourier mode {:?} has {} components, expected {dim}",
                    m.k,
                    m.k.len()
                )));
            }
            if !m.cos.is_finite() || !m.sin.is_finite() {
                return Err(Error::InvalidModel("non-finite Fourier coefficient".into()));
            }
        }
        Ok(Self { dim, modes })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn modes(&self) -> &[FourierMode] {
        &self.modes
    }

    pub fn is_zero(&self) -> bool {
        self.modes.iter().all(|m| m.cos == 0.0 && m.sin == 0.0)
    }

    /// Largest `|k|∞` among the modes.
    pub fn max_frequency(&self) -> i32 {
        self.modes
            .iter()
            .flat_map(|m| m.k.iter().map(|k| k.abs()))
            .max()
            .unwrap_or(0)
    }

    /// Sum of the absolute coefficients, an upper bound of `sup |f|`.
    pub fn coefficient_bound(&self) -> f64 {
        self.modes.iter().map(|m| m.cos.abs() + m.sin.abs()).sum()
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            dim: self.dim,
            modes: self
                .modes
                .iter()
                .map(|m| FourierMode {
                    k: m.k.clone(),
                    cos: m.cos * s,
                    sin: m.sin * s,
                })
                .collect(),
        }
    }

    pub fn sum(&self, other: &FourierField) -> Self {
        let mut modes = self.modes.clone();
        modes.extend(other.modes.iter().cloned());
        Self {
            dim: self.dim,
            modes,
        }
    }

    #[inline]
    fn phase(k: &[i32], x: &[f64]) -> f64 {
        TAU * k.iter().zip(x).map(|(&k, &x)| k as f64 * x).sum::<f64>()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.modes
            .iter()
            .map(|m| {
                let th = Self::phase(&m.k, x);
                m.cos * th.cos() + m.sin * th.sin()
            })
            .sum()
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim];
        for m in &self.modes {
            let th = Self::phase(&m.k, x);
            let d = TAU * (m.sin * th.cos() - m.cos * th.sin());
            for (gi, &ki) in g.iter_mut().zip(&m.k) {
                *gi += d * ki as f64;
            }
        }
        g
    }

    pub fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let n = self.dim;
        let mut h = DMatrix::zeros(n, n);
        for m in &self.modes {
            let th = Self::phase(&m.k, x);
            let d = -TAU * TAU * (m.cos * th.cos() + m.sin * th.sin());
            for i in 0..n {
                for j in 0..n {
                    h[(i, j)] += d * (m.k[i] as f64) * (m.k[j] as f64);
                }
            }
        }
        h
    }
}

/// Kinetic matrix, drift, potential and perturbation of a Tonelli model.
#[derive(Clone, Debug)]
pub struct LagrangianModel {
    dim: usize,
    a: DMatrix<f64>,
    a_inv: DMatrix<f64>,
    drift: Vec<FourierField>,
    potential: FourierField,
    psi: FourierField,
}

/// Hessian blocks of `H` at a point of `T*M`.
#[derive(Clone, Debug)]
pub struct HamiltonianHessian {
    pub hxx: DMatrix<f64>,
    pub hxp: DMatrix<f64>,
    pub hpp: DMatrix<f64>,
}

impl LagrangianModel {
    pub fn new(
        a: DMatrix<f64>,
        drift: Vec<FourierField>,
        potential: FourierField,
        psi: FourierField,
    ) -> Result<Self> {
        let dim = a.nrows();
        if dim == 0 || a.ncols() != dim {
            return Err(Error::InvalidModel("kinetic matrix must be square".into()));
        }
        if (&a - a.transpose()).abs().max() > 1e-12 * (1.0 + a.abs().max()) {
            return Err(Error::InvalidModel("kinetic matrix is not symmetric".into()));
        }
        let chol = a
            .clone()
            .cholesky()
            .ok_or_else(|| Error::InvalidModel("kinetic matrix is not positive definite".into()))?;
        let a_inv = chol.inverse();
        let drift = if drift.is_empty() {
            vec![FourierField::zero(dim); dim]
        } else {
            drift
        };
        if drift.len() != dim {
            return Err(Error::InvalidModel(format!(
                "drift has {} components, expected {dim}",
                drift.len()
            )));
        }
        for f in drift.iter().chain([&potential, &psi]) {
            if f.dim() != dim {
                return Err(Error::InvalidModel(format!(
                    "Fourier field of dimension {} in a model of dimension {dim}",
                    f.dim()
                )));
            }
        }
        Ok(Self {
            dim,
            a,
            a_inv,
            drift,
            potential,
            psi,
        })
    }

    /// `L = ½|v|²` on `T^n`.
    pub fn flat(dim: usize) -> Self {
        Self::new(
            DMatrix::identity(dim, dim),
            vec![],
            FourierField::zero(dim),
            FourierField::zero(dim),
        )
        .expect("flat model is valid")
    }

    /// One-degree-of-freedom pendulum `H = ½p² + cos(2πθ) − 3/2`.
    pub fn pendulum() -> Self {
        let v = FourierField::new(
            1,
            vec![
                FourierMode {
                    k: vec![1],
                    cos: 1.0,
                    sin: 0.0,
                },
                FourierMode {
                    k: vec![0],
                    cos: -1.5,
                    sin: 0.0,
                },
            ],
        )
        .expect("valid modes");
        Self::new(DMatrix::identity(1, 1), vec![], v, FourierField::zero(1))
            .expect("pendulum is valid")
    }

    /// Pendulum times circle: `H₀ = ½(p₁² + p₂²) + cos(2πθ₁) − 3/2`.
    pub fn pendulum_product() -> Self {
        let v = FourierField::new(
            2,
            vec![
                FourierMode {
                    k: vec![1, 0],
                    cos: 1.0,
                    sin: 0.0,
                },
                FourierMode {
                    k: vec![0, 0],
                    cos: -1.5,
                    sin: 0.0,
                },
            ],
        )
        .expect("valid modes");
        Self::new(DMatrix::identity(2, 2), vec![], v, FourierField::zero(2))
            .expect("pendulum product is valid")
    }

    /// Look up a built-in model by name.
    pub fn builtin(name: &str) -> Result<Self> {
        match name {
            "flat" => Ok(Self::flat(2)),
            "flat1" => Ok(Self::flat(1)),
            "pendulum" => Ok(Self::pendulum()),
            "pendulum-product" => Ok(Self::pendulum_product()),
            other => Err(Error::InvalidModel(format!("unknown built-in model `{other}`"))),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kinetic(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn kinetic_inverse(&self) -> &DMatrix<f64> {
        &self.a_inv
    }

    pub fn drift(&self) -> &[FourierField] {
        &self.drift
    }

    pub fn potential(&self) -> &FourierField {
        &self.potential
    }

    pub fn psi(&self) -> &FourierField {
        &self.psi
    }

    pub fn has_drift(&self) -> bool {
        self.drift.iter().any(|f| !f.is_zero())
    }

    /// Same model with `psi` replaced.
    pub fn with_psi(&self, psi: FourierField) -> Result<Self> {
        Self::new(self.a.clone(), self.drift.clone(), self.potential.clone(), psi)
    }

    /// The model whose Lagrangian is `L + f`.
    pub fn add_to_lagrangian(&self, f: &FourierField) -> Result<Self> {
        self.with_psi(self.psi.sum(&f.scaled(-1.0)))
    }

    /// `V + psi` at `x`.
    pub fn total_potential(&self, x: &[f64]) -> f64 {
        self.potential.eval(x) + self.psi.eval(x)
    }

    pub(crate) fn total_potential_gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = self.potential.gradient(x);
        for (gi, pi) in g.iter_mut().zip(self.psi.gradient(x)) {
            *gi += pi;
        }
        g
    }

    pub(crate) fn total_potential_hessian(&self, x: &[f64]) -> DMatrix<f64> {
        self.potential.hessian(x) + self.psi.hessian(x)
    }

    pub fn drift_at(&self, x: &[f64]) -> Vec<f64> {
        self.drift.iter().map(|f| f.eval(x)).collect()
    }

    /// `Db[i][j] = ∂_j b_i`.
    pub(crate) fn drift_jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let n = self.dim;
        let mut m = DMatrix::zeros(n, n);
        for (i, f) in self.drift.iter().enumerate() {
            for (j, g) in f.gradient(x).into_iter().enumerate() {
                m[(i, j)] = g;
            }
        }
        m
    }

    pub(crate) fn drift_hessians(&self, x: &[f64]) -> Vec<DMatrix<f64>> {
        self.drift.iter().map(|f| f.hessian(x)).collect()
    }

    fn quad(m: &DMatrix<f64>, u: &[f64]) -> f64 {
        let n = u.len();
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                s += u[i] * m[(i, j)] * u[j];
            }
        }
        s
    }

    fn mat_vec(m: &DMatrix<f64>, u: &[f64]) -> Vec<f64> {
        (0..m.nrows())
            .map(|i| (0..u.len()).map(|j| m[(i, j)] * u[j]).sum())
            .collect()
    }

    /// `L(x, v)` at lifted coordinates.
    pub fn lagrangian(&self, x: &[f64], v: &[f64]) -> f64 {
        let mut l = 0.5 * Self::quad(&self.a, v) - self.total_potential(x);
        if self.has_drift() {
            l += self.drift_at(x).iter().zip(v).map(|(b, v)| b * v).sum::<f64>();
        }
        l
    }

    /// `L(x, v) − w·v`.
    pub fn eval_lagrangian(&self, state: &TangentState, w: &CohomologyClass) -> f64 {
        self.lagrangian(state.base.coords(), &state.v) - w.pair(&state.v)
    }

    /// `H(x, p)` at lifted coordinates.
    pub fn hamiltonian(&self, x: &[f64], p: &[f64]) -> f64 {
        let b = self.drift_at(x);
        let u: Vec<f64> = p.iter().zip(&b).map(|(p, b)| p - b).collect();
        0.5 * Self::quad(&self.a_inv, &u) + self.total_potential(x)
    }

    pub fn eval_hamiltonian(&self, state: &CotangentState) -> f64 {
        self.hamiltonian(state.base.coords(), &state.p)
    }

    pub fn momentum(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        let av = Self::mat_vec(&self.a, v);
        av.iter().zip(self.drift_at(x)).map(|(a, b)| a + b).collect()
    }

    pub fn velocity(&self, x: &[f64], p: &[f64]) -> Vec<f64> {
        let u: Vec<f64> = p.iter().zip(self.drift_at(x)).map(|(p, b)| p - b).collect();
        Self::mat_vec(&self.a_inv, &u)
    }

    /// `p = ∂L/∂v = Av + b(x)`.
    pub fn legendre(&self, state: &TangentState) -> CotangentState {
        CotangentState {
            base: state.base.clone(),
            p: self.momentum(state.base.coords(), &state.v),
        }
    }

    /// `v = A⁻¹(p − b(x))`.
    pub fn legendre_inverse(&self, state: &CotangentState) -> TangentState {
        TangentState {
            base: state.base.clone(),
            v: self.velocity(state.base.coords(), &state.p),
        }
    }

    /// Energy `∂L/∂v·v − L`, evaluated as `H ∘ 𝓛`.
    pub fn energy(&self, state: &TangentState) -> f64 {
        self.eval_hamiltonian(&self.legendre(state))
    }

    /// `(∂H/∂x, ∂H/∂p)` at lifted coordinates.
    pub fn hamiltonian_gradient(&self, x: &[f64], p: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut dx = self.total_potential_gradient(x);
        if !self.has_drift() {
            return (dx, Self::mat_vec(&self.a_inv, p));
        }
        let b = self.drift_at(x);
        let u: Vec<f64> = p.iter().zip(&b).map(|(p, b)| p - b).collect();
        let q = Self::mat_vec(&self.a_inv, &u);
        let db = self.drift_jacobian(x);
        for (j, dxj) in dx.iter_mut().enumerate() {
            for (i, qi) in q.iter().enumerate() {
                *dxj -= db[(i, j)] * qi;
            }
        }
        (dx, q)
    }

    /// Exact Hessian blocks of `H` at lifted coordinates.
    pub fn hessian_blocks(&self, x: &[f64], p: &[f64]) -> HamiltonianHessian {
        let hpp = self.a_inv.clone();
        let mut hxx = self.total_potential_hessian(x);
        if !self.has_drift() {
            return HamiltonianHessian {
                hxx,
                hxp: DMatrix::zeros(self.dim, self.dim),
                hpp,
            };
        }
        let b = self.drift_at(x);
        let u: Vec<f64> = p.iter().zip(&b).map(|(p, b)| p - b).collect();
        let q = Self::mat_vec(&self.a_inv, &u);
        let db = self.drift_jacobian(x);
        for (qi, hb) in q.iter().zip(self.drift_hessians(x)) {
            hxx -= hb * *qi;
        }
        hxx += db.transpose() * &self.a_inv * &db;
        let hxp = -(db.transpose() * &self.a_inv);
        HamiltonianHessian { hxx, hxp, hpp }
    }

    pub fn second_derivatives(&self, state: &CotangentState) -> HamiltonianHessian {
        self.hessian_blocks(state.base.coords(), &state.p)
    }

    /// Hamilton's vector field `(∂H/∂p, −∂H/∂x)`.
    pub fn vector_field(&self, x: &[f64], p: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (hx, hp) = self.hamiltonian_gradient(x, p);
        (hp, hx.into_iter().map(|g| -g).collect())
    }

    pub fn to_spec(&self) -> ModelSpec {
        ModelSpec {
            dim: self.dim,
            a: self.a.transpose().iter().copied().collect(),
            b: self.drift.iter().map(|f| f.modes.clone()).collect(),
            v: self.potential.modes.clone(),
            psi: self.psi.modes.clone(),
        }
    }

    pub fn from_spec(spec: &ModelSpec) -> Result<Self> {
        let n = spec.dim;
        if spec.a.len() != n * n {
            return Err(Error::InvalidModel(format!(
                "`A` has {} entries, expected {}",
                spec.a.len(),
                n * n
            )));
        }
        let a = DMatrix::from_row_slice(n, n, &spec.a);
        let drift = spec
            .b
            .iter()
            .map(|m| FourierField::new(n, m.clone()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(
            a,
            drift,
            FourierField::new(n, spec.v.clone())?,
            FourierField::new(n, spec.psi.clone())?,
        )
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ModelSpec = serde_json::from_str(text)?;
        Self::from_spec(&spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// On-disk model description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub dim: usize,
    /// Row-major kinetic matrix.
    #[serde(rename = "A")]
    pub a: Vec<f64>,
    #[serde(default)]
    pub b: Vec<Vec<FourierMode>>,
    #[serde(rename = "V", default)]
    pub v: Vec<FourierMode>,
    #[serde(default)]
    pub psi: Vec<FourierMode>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cos_drift() -> LagrangianModel {
        let b1 = FourierField::new(
            2,
            vec![FourierMode {
                k: vec![1, 0],
                cos: 1.0,
                sin: 0.0,
            }],
        )
        .unwrap();
        LagrangianModel::new(
            DMatrix::identity(2, 2),
            vec![b1, FourierField::zero(2)],
            FourierField::zero(2),
            FourierField::zero(2),
        )
        .unwrap()
    }

    #[test]
    fn lagrangian_values() {
        let flat = LagrangianModel::flat(2);
        let s = TangentState::new(vec![0.0, 0.0], vec![1.0, 0.0]);
        assert!((flat.eval_lagrangian(&s, &CohomologyClass::zero(2)) - 0.5).abs() < 1e-15);
        let w = CohomologyClass::new(vec![1.0, 0.0]);
        assert!((flat.eval_lagrangian(&s, &w) + 0.5).abs() < 1e-15);

        let pend = LagrangianModel::pendulum();
        let s = TangentState::new(vec![0.0], vec![0.0]);
        assert!((pend.eval_lagrangian(&s, &CohomologyClass::zero(1)) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn legendre_values() {
        let flat = LagrangianModel::flat(2);
        let s = TangentState::new(vec![0.3, 0.1], vec![1.0, 2.0]);
        assert_eq!(flat.legendre(&s).p, vec![1.0, 2.0]);

        let aniso = LagrangianModel::new(
            DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]),
            vec![],
            FourierField::zero(2),
            FourierField::zero(2),
        )
        .unwrap();
        let s = TangentState::new(vec![0.0, 0.0], vec![1.0, 1.0]);
        let p = aniso.legendre(&s);
        assert_eq!(p.p, vec![2.0, 1.0]);
        let back = aniso.legendre_inverse(&p);
        assert!((back.v[0] - 1.0).abs() < 1e-15 && (back.v[1] - 1.0).abs() < 1e-15);

        let drift = cos_drift();
        let s = TangentState::new(vec![0.0, 0.0], vec![0.0, 0.0]);
        let p = drift.legendre(&s);
        assert!((p.p[0] - 1.0).abs() < 1e-15 && p.p[1].abs() < 1e-15);
        let back = drift.legendre_inverse(&p);
        assert!(back.v.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn hamiltonian_values() {
        let flat = LagrangianModel::flat(2);
        let z = CotangentState::new(vec![0.2, 0.7], vec![1.0, 0.0]);
        assert!((flat.eval_hamiltonian(&z) - 0.5).abs() < 1e-15);

        let prod = LagrangianModel::pendulum_product();
        for t in [0.0, 0.25, 0.6] {
            let z = CotangentState::new(vec![0.0, t], vec![0.0, 1.0]);
            assert!(prod.eval_hamiltonian(&z).abs() < 1e-15);
            let v = prod.legendre_inverse(&z);
            assert!(prod.energy(&v).abs() < 1e-15);
        }

        let pend = LagrangianModel::pendulum();
        let z = CotangentState::new(vec![0.0], vec![0.0]);
        assert!((pend.eval_hamiltonian(&z) + 0.5).abs() < 1e-15);
        assert!((pend.energy(&pend.legendre_inverse(&z)) + 0.5).abs() < 1e-15);
    }

    #[test]
    fn hessian_values() {
        let flat = LagrangianModel::flat(2);
        let h = flat.second_derivatives(&CotangentState::new(vec![0.1, 0.2], vec![0.3, 0.4]));
        assert_eq!(h.hpp, DMatrix::identity(2, 2));
        assert_eq!(h.hxx, DMatrix::zeros(2, 2));
        assert_eq!(h.hxp, DMatrix::zeros(2, 2));

        let pend = LagrangianModel::pendulum();
        let h = pend.second_derivatives(&CotangentState::new(vec![0.0], vec![0.0]));
        assert!((h.hxx[(0, 0)] + 4.0 * PI * PI).abs() < 1e-12);
        assert_eq!(h.hpp[(0, 0)], 1.0);
        assert_eq!(h.hxp[(0, 0)], 0.0);

        let aniso = LagrangianModel::new(
            DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]),
            vec![],
            FourierField::zero(2),
            FourierField::zero(2),
        )
        .unwrap();
        let h = aniso.second_derivatives(&CotangentState::new(vec![0.0, 0.0], vec![0.0, 0.0]));
        assert!((h.hpp[(0, 0)] - 0.5).abs() < 1e-15 && (h.hpp[(1, 1)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn hessian_matches_finite_differences_with_drift() {
        let mut b2 = FourierField::new(
            2,
            vec![FourierMode {
                k: vec![1, 1],
                cos: 0.2,
                sin: -0.3,
            }],
        )
        .unwrap();
        b2 = b2.sum(&FourierField::constant(2, 0.1));
        let model = LagrangianModel::new(
            DMatrix::from_row_slice(2, 2, &[1.5, 0.2, 0.2, 0.8]),
            vec![cos_drift().drift()[0].clone(), b2],
            FourierField::new(
                2,
                vec![FourierMode {
                    k: vec![0, 1],
                    cos: 0.4,
                    sin: 0.1,
                }],
            )
            .unwrap(),
            FourierField::zero(2),
        )
        .unwrap();
        let x = [0.13, 0.41];
        let p = [0.7, -0.2];
        let h = model.hessian_blocks(&x, &p);
        let eps = 1e-5;
        // second differences of H
        let z = [x[0], x[1], p[0], p[1]];
        let f = |z: [f64; 4]| model.hamiltonian(&z[..2], &z[2..]);
        for i in 0..4 {
            for j in 0..4 {
                let mut pp = z;
                pp[i] += eps;
                pp[j] += eps;
                let mut pm = z;
                pm[i] += eps;
                pm[j] -= eps;
                let mut mp = z;
                mp[i] -= eps;
                mp[j] += eps;
                let mut mm = z;
                mm[i] -= eps;
                mm[j] -= eps;
                let fd = (f(pp) - f(pm) - f(mp) + f(mm)) / (4.0 * eps * eps);
                let exact = match (i < 2, j < 2) {
                    (true, true) => h.hxx[(i, j)],
                    (true, false) => h.hxp[(i, j - 2)],
                    (false, true) => h.hxp[(j, i - 2)],
                    (false, false) => h.hpp[(i - 2, j - 2)],
                };
                assert!((fd - exact).abs() < 1e-4, "({i},{j}) fd={fd} exact={exact}");
            }
        }
        // first derivatives
        let (hx, hp) = model.hamiltonian_gradient(&x, &p);
        for i in 0..4 {
            let mut a = z;
            a[i] += eps;
            let mut b = z;
            b[i] -= eps;
            let fd = (f(a) - f(b)) / (2.0 * eps);
            let exact = if i < 2 { hx[i] } else { hp[i - 2] };
            assert!((fd - exact).abs() < 1e-7);
        }
    }

    #[test]
    fn rejects_indefinite_kinetic_matrix() {
        let r = LagrangianModel::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]),
            vec![],
            FourierField::zero(2),
            FourierField::zero(2),
        );
        assert!(matches!(r, Err(Error::InvalidModel(_))));
    }

    #[test]
    fn json_round_trip_of_builtins() {
        for name in ["flat", "pendulum", "pendulum-product"] {
            let m = LagrangianModel::builtin(name).unwrap();
            let text = serde_json::to_string(&m.to_spec()).unwrap();
            let back = LagrangianModel::from_json(&text).unwrap();
            assert_eq!(back.to_spec(), m.to_spec());
        }
        let m = LagrangianModel::from_json(
            r#"{"dim":1,"A":[1.0],"V":[{"k":[1],"cos":1.0},{"k":[0],"cos":-1.5}]}"#,
        )
        .unwrap();
        assert!((m.hamiltonian(&[0.0], &[0.0]) + 0.5).abs() < 1e-15);
    }

    #[test]
    fn torus_distance_uses_shortest_lift() {
        let a = TorusPoint::new(vec![0.95, 0.0]);
        let b = TorusPoint::new(vec![0.05, 1.0]);
        assert!((a.distance(&b) - 0.1).abs() < 1e-12);
        assert_eq!(TorusPoint::new(vec![-0.25]).coords(), &[0.75]);
    }
}
