//! Reduced-order modelling of parametrized nonlinear heat-transfer problems.
//!
//! The crate covers the full offline/online pipeline:
//!
//! * [`mesh`]: structured P1 triangulation of the perforated plate.
//! * [`fem`]: high-fidelity model and semi-implicit Euler time march.
//! * [`pod`]: proper orthogonal decomposition and progressive basis updates.
//! * [`eim`]: empirical interpolation of the nonlinear conductivity.
//! * [`rom`]: reduced operators and the online solver.
//! * [`progressive`]: progressive RB-EIM construction (PREIM and its variants).
//! * [`bench`]: the two heat-transfer test cases and the comparison harness.
//! * [`archive`]: on-disk persistence of reduced models.

// `!(x > 0.0)` also rejects NaN, which is the intent everywhere it appears
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod archive;
pub mod bench;
pub mod eim;
mod error;
pub mod fem;
pub mod mesh;
pub mod numerics;
pub mod pod;
pub mod progressive;
pub mod rom;
pub mod standard;

pub use error::{PreimError, Result};
