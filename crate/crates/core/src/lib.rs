//! Numerical laboratory for Kähler reduction of circle-invariant metrics on
//! `P = M × A` and for the associated static and dynamic equations.

pub mod battery;
pub mod curvature;
pub mod error;
pub mod field;
pub mod fixtures;
pub mod flow;
pub mod golden;
pub mod grid;
pub mod io;
pub mod lift;
pub mod reduction;
pub mod report;
pub mod spectral;
pub mod statics;
pub mod stencil;
pub mod structure;

pub use error::{KreduxError, Result};
pub use field::{Axis, Form11M, Form11P, OneFormP, ScalarFieldM, ScalarFieldP, TopFormP, TwoFormP};
pub use grid::{GridKind, TestbedGrid};
