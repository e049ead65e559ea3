//! Distribution-free residual processes for regression model checking.
//!
//! Residuals of a fitted regression are rotated, through a composition of
//! reflections, so that their empirical process has a limit free of the
//! model, the design and the estimator. The pieces are:
//!
//! * [`rotations`]: reflections and their compositions,
//! * [`model`]: regression models, fitting and score bases,
//! * [`basis`]: reference functions and their integrals,
//! * [`transform`]: the residual rotation,
//! * [`transport`]: optimal assignment of covariates to anchor points,
//! * [`process`]: empirical processes and their statistics,
//! * [`pipeline`]: end-to-end transformed processes for a sample,
//! * [`harness`]: Monte Carlo experiments,
//! * [`io`]: text formats for samples and results.

pub mod basis;
pub mod error;
pub mod harness;
pub mod io;
pub mod model;
pub mod pipeline;
pub mod process;
pub mod rotations;
pub mod transform;
pub mod transport;

pub use error::{Error, Result};
