//! Random walks in random environments on marked Galton–Watson trees.
//!
//! The environment is a tree whose vertices carry positive marks `A(x)`.
//! From a vertex `x` with children `x_1..x_N` the walk steps to `x_i` with
//! probability `A(x_i)/(1+ΣA(x_j))` and to the parent with `1/(1+ΣA(x_j))`.

pub mod cascade;
pub mod coupling;
pub mod error;
pub mod experiments;
pub mod mark_law;
pub mod network;
pub mod regime;
pub mod rng;
pub mod stats;
pub mod tree;
pub mod walk;

pub use error::{Error, Result};
