//! Symbolic and numerical kernel for rank-2 distributions of maximal class.
//!
//! The crate is `no_std` with `alloc`; file formats and the command line live
//! in the companion `maxclass` crate.

#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod distribution;
pub mod error;
pub mod expr;
pub mod field;
pub mod flow;
pub mod frames;
pub mod jacobi;
pub mod jet;
pub mod linalg;
pub mod projective;
pub mod scalar;
pub mod series;
pub mod symplectic;

pub use error::{Error, Result};
pub use expr::{Chart, Expr};
