//! Parameter-continuation (homotopy) control of irregular nonlinear plants
//! and online parameter identification.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod catalog;
pub mod control;
pub mod error;
pub mod ident;
pub mod integrate;
pub mod log;
pub mod models;
pub mod smallmat;
pub mod sweep;

pub use error::{Error, Result};
pub use smallmat::{Mat, Vector};
