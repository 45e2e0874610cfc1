// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod cli;
pub mod error;
pub mod filters;
pub mod linalg;
pub mod model;
pub mod sim;
pub mod verify;

pub use error::{Error, Result};
pub use linalg::Mat;
