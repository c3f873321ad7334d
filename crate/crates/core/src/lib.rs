//! Numerical weak-KAM toolkit for Tonelli Lagrangians on flat tori.
//!
//! The crate computes action minimizers, the Peierls barrier and Mañé
//! potential on a grid, critical values and Mather's α function through
//! minimum mean cycles of a min-plus action kernel, Green bundles and
//! conjugate points along orbits, and tiered Aubry/Mañé clouds swept over
//! cohomology classes.

pub mod barrier;
pub mod commands;
pub mod config;
pub mod curves;
pub mod error;
pub mod flow;
pub mod green;
pub mod io;
pub mod karp;
pub mod model;
pub mod occupation;
pub mod selftest;
pub mod tiered;
pub mod tropical;

pub use error::{Error, Result};
pub use model::{
    ClosedForm, CohomologyClass, CotangentState, FourierField, FourierMode, LagrangianModel,
    TangentState, TorusPoint,
};
