//! Streaming blind identification of complex vibration modes.
//!
//! The crate is organised around the processing chain:
//!
//! * [`dynamics`] and [`fixtures`] build linear structural models, simulate
//!   their response and compute reference modes.
//! * [`analytic`] turns real channels into analytic (complex) signals, both
//!   for whole records and as a fixed-latency stream.
//! * [`foep`] keeps a recursively perturbed eigenspace of the complex
//!   covariance and whitens each incoming sample.
//! * [`jad`] jointly diagonalizes stacks of lagged covariance matrices.
//! * [`sobi`] is the batch separation used to seed the recursion and as an
//!   independent check of it.
//! * [`recursive`] ties everything together into a per-sample [`Pipeline`].
//! * [`metrics`] compares identified modes against references.
//! * [`cases`] reproduces the bundled case studies end to end.

// `!(x > y)` is used on purpose so NaN takes the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod cases;
pub mod config;
pub mod dynamics;
mod error;
pub mod fixtures;
pub mod foep;
pub mod io;
pub mod jad;
pub mod linalg;
pub mod metrics;
pub mod recursive;
pub mod sobi;

pub use error::{Error, Result};
pub use linalg::{CMatrix, CVector, C64};
pub use recursive::{ModalOutput, Pipeline, PipelineConfig};
