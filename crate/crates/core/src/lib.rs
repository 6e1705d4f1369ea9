//! Conserved-quantity operators `W_n^j` of the one-dimensional cubic
//! Gross-Pitaevskii hierarchy, together with the machinery to check them
//! numerically: a spectral grid, a split-step NLS integrator, the
//! Zakharov-Shabat ladder `w_n`/`I_n`, a separable density-matrix evaluator and
//! a dense brute-force oracle.

pub mod dense;
pub mod error;
pub mod experiments;
pub mod ladder;
pub mod nls;
pub mod operator;
pub mod separable;
pub mod spectral;

pub use error::{Error, Result};
