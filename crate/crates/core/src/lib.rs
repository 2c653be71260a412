//! Weighted embedding constants on finite dyadic bi-trees.
//!
//! For a measure `μ` and a weight `w` on the product of two dyadic trees this
//! crate computes the box, Carleson, hereditary Carleson and Carleson
//! embedding constants with re-checkable witnesses, the constructive
//! majorization lemmas behind their comparison, the counterexample families
//! separating them for non-product weights, and the maximal-function view of
//! the embedding.

pub mod constants;
pub mod error;
pub mod extremal;
pub mod flow;
pub mod hardy;
pub mod harness;
pub mod majorize;
pub mod maximal;
pub mod poset;
pub mod random;
pub mod scalar;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
pub use hardy::{MassFunction, PotentialField, WeightFunction, WeightStructure};
pub use poset::{BiNode, BiTreeTopology, DownSet, RectAddress, TreeTopology, UpSet};
pub use scalar::{Rational, Scalar};
