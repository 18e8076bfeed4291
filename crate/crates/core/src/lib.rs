// `!(x > 0.0)` is used on purpose so NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod beamform;
pub mod channel;
pub mod error;
pub mod experiment;
pub mod frame;
pub mod linalg;
pub mod sensing;
pub mod sparse;
pub mod special;
