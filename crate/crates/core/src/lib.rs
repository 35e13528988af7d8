//! Certification, quantized self-triggered control, and verification for
//! Lur'e-type plants under diagonally-weighted ∞-norms.

// `!(x > 0.0)` is used on purpose so NaN fails every parameter check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod certify;
pub mod config;
pub mod error;
pub mod integrate;
pub mod lp;
pub mod norms;
pub mod plant;
pub mod quantize;
pub mod report;
pub mod simulate;
pub mod stm;

pub use error::{Error, Result};
