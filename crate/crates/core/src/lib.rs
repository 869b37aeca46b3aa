//! Capacity-based box-dimension profiles of finite point clouds.
//!
//! The crate computes capacities of point samples with respect to the
//! truncated power kernels `min{1, (r/|x|)^s}`, turns them into dimension
//! profiles by log-log regression over a range of scales, counts mesh cubes
//! for ordinary box dimensions, and samples random subspaces to compare the
//! box dimensions of projections against the profiles.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod boxcount;
pub mod capacity;
pub mod error;
pub mod experiments;
pub mod grassmann;
pub mod kernels;
pub mod pointset;
pub mod profiles;
pub mod quadrature;

pub use error::{Error, Result};
