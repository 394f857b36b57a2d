//! Null congruences, transport entropy and null energy checks on Lorentzian
//! manifolds given by symbolic metrics.

// `!(x > 0.0)` also rejects NaN; tensor code reads better with index loops.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod congruence;
pub mod dsl;
pub mod energy;
pub mod error;
pub mod geometry;
pub mod ode;
mod par;
pub mod quadrature;
pub mod scenario;
pub mod transport;

pub use error::{Error, Result};
