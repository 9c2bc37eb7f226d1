//! Time-parallel Luenberger observer.
//!
//! The observer runs over a sequence of windows; inside each window its
//! trajectory is computed with Parareal, stopped as soon as the iteration
//! error is below what the observer's own decay will absorb by the end of
//! the window. A variant fixes the iteration count per window and sizes the
//! windows a priori instead.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diamond;
pub mod error;
pub mod experiments;
mod kv;
pub mod lti;
pub mod parareal;
pub mod problem;
pub mod propagators;
pub mod timing;
pub mod variable_window;

pub use error::{Error, Result};
