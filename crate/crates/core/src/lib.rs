//! Two-dimensional electrophoresis of a charged rigid particle in an ionic,
//! incompressible solvent: Poisson, Nernst-Planck and Navier-Stokes coupled
//! through a per-step fixed-point loop, with a rigid-body constraint on the
//! particle and energy/conservation diagnostics.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod diagnostics;
pub mod error;
pub mod fluid;
pub mod geometry;
pub mod grid;
pub mod linalg;
pub mod nernst_planck;
#[cfg(feature = "oracle")]
pub mod oracle;
pub mod output;
pub mod poisson;
pub mod snapshot;
pub mod stepper;

pub use error::{ConfigIssue, Error, Result};
pub use grid::{Grid, MacField, ScalarField, Vec2, VectorField};
