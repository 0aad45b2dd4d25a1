//! Cramér distances between iterated grid discretizations of circle expanding
//! maps and the true pushforward of Lebesgue measure.
//!
//! The numerical core is generic over [`Real`] (`f32` or `f64`). The aliases
//! at the crate root fix the scalar to `f64`, which is what the tolerances in
//! the test suite assume.

// `!(x > 0)` style guards are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod circle_dynamics;
pub mod error;
pub mod linear_chain;
pub mod measures;
mod scalar;
pub mod sum;
pub mod theorem_harness;
pub mod tree_chain;

pub use error::{Error, Result};
pub use scalar::Real;

pub type AtomicMeasure = measures::AtomicMeasure<f64>;
pub type MeshDensity = measures::MeshDensity<f64>;
pub type SignedCdfDiff = measures::SignedCdfDiff<f64>;
pub type HomothetyChain = linear_chain::HomothetyChain<f64>;
pub type RoundoffTrace = linear_chain::RoundoffTrace<f64>;
pub type ChainLattice = linear_chain::ChainLattice<f64>;
pub type DecoratedTree = tree_chain::DecoratedTree<f64>;
pub type ExpandingMap = circle_dynamics::ExpandingMap<f64>;
pub type PreimageTree = circle_dynamics::PreimageTree<f64>;
pub type TransferOperator = circle_dynamics::TransferOperator<f64>;
pub type ConvergenceRow = theorem_harness::ConvergenceRow;
