//! Reduced order models for two-parameter linear systems
//! `A(mu1, mu2) x = b` in split form.
//!
//! The offline stage sweeps snapshot solutions along parameter lines with a
//! Chebyshev companion linearization and a shift-invert preconditioned
//! two-sided Lanczos recurrence, then compresses them with a greedy
//! separated decomposition. The online stage evaluates spline-interpolated
//! mode functions and supports parameter estimation.

pub mod cheb;
pub mod config;
pub mod error;
pub mod estimate;
pub mod hopgd;
pub mod krylov;
pub mod linalg;
pub mod params;
pub mod pencil;
pub mod problems;
pub mod rom;

pub use error::{Error, Result};
pub use params::{Axis, Interval, ParamBox};
