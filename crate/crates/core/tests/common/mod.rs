#![allow(dead_code)]

use nalgebra::DMatrix;
use proptest::prelude::*;
use weakkam::model::{CotangentState, FourierField, FourierMode, LagrangianModel, TangentState, TorusPoint};

/// Random modes with `|k|∞ ≤ 2` and coefficients in `[−amp, amp]`.
pub fn field(dim: usize, amp: f64) -> BoxedStrategy<FourierField> {
    if amp == 0.0 {
        return Just(FourierField::zero(dim)).boxed();
    }
    let mode = (
        prop::collection::vec(-2i32..=2, dim),
        -amp..=amp,
        -amp..=amp,
    )
        .prop_map(|(k, cos, sin)| FourierMode { k, cos, sin });
    prop::collection::vec(mode, 0..4)
        .prop_map(move |modes| FourierField::new(dim, modes).unwrap())
        .boxed()
}

/// Symmetric `A = I + E` with `|E_ij| ≤ 0.3 / dim`, so `A` stays positive.
pub fn kinetic(dim: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-0.3..0.3f64, dim * dim).prop_map(move |e| {
        let e = DMatrix::from_vec(dim, dim, e) / dim as f64;
        DMatrix::identity(dim, dim) + (&e + e.transpose()) * 0.5
    })
}

pub fn model_of_dim(dim: usize, potential: f64, drift: f64) -> impl Strategy<Value = LagrangianModel> {
    (
        kinetic(dim),
        prop::collection::vec(field(dim, drift), dim),
        field(dim, potential),
    )
        .prop_map(move |(a, b, v)| {
            let b = if drift == 0.0 { vec![] } else { b };
            LagrangianModel::new(a, b, v, FourierField::zero(dim)).unwrap()
        })
}

pub fn model(potential: f64, drift: f64) -> impl Strategy<Value = LagrangianModel> {
    (1usize..=2).prop_flat_map(move |d| model_of_dim(d, potential, drift))
}

pub fn coords(dim: usize, lo: f64, hi: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(lo..hi, dim)
}

pub fn tangent(dim: usize) -> impl Strategy<Value = TangentState> {
    (coords(dim, 0.0, 1.0), coords(dim, -2.0, 2.0)).prop_map(|(x, v)| TangentState::new(x, v))
}

pub fn cotangent(dim: usize) -> impl Strategy<Value = CotangentState> {
    (coords(dim, 0.0, 1.0), coords(dim, -2.0, 2.0)).prop_map(|(x, p)| CotangentState::new(x, p))
}

pub fn point(dim: usize) -> impl Strategy<Value = TorusPoint> {
    coords(dim, 0.0, 1.0).prop_map(TorusPoint::new)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
