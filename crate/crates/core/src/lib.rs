#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]
pub mod assembly;
pub mod bounds;
pub mod cell;
pub mod dense;
pub mod eigen;
pub mod error;
pub mod extrapolate;
pub mod factor;
pub mod graph;
pub mod sparse;
pub mod tube;

pub use error::{Error, Result};
