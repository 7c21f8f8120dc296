// `!(x > 0.0)` rejects NaN along with nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod corpus;
pub mod energy1d;
pub mod energynd;
pub mod error;
pub mod geometry;
pub mod kernels;
pub mod quad;
pub mod reflection;
pub mod rng;
pub mod search;

pub use error::{Error, Result};
