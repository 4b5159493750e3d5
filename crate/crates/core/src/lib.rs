//! Dictionary LASSO: estimation of signals that are sparse under a linear
//! analysis operator,
//!
//! ```text
//! min_theta 1/2 |Phi theta - c|^2 + lambda |D theta|_1,
//! ```
//!
//! together with the SVD-based reduction to the penalized coordinates, the
//! deterministic error bound and its supporting lemmas, dictionary
//! generators and seeded experiment sweeps.

// `!(x > 0.0)` style tests are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bundle;
pub mod dictionaries;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod matrix_io;
pub mod plot;
pub mod problem;
pub mod rng;
pub mod simplify;
pub mod solver;
pub mod theory;

pub use error::{Error, Result};
pub use linalg::{Matrix, Vector};
pub use problem::DictionaryProblem;
pub use simplify::{simplify, SimplifiedForm};
pub use solver::{solve_full, solve_simplified, SolveOptions, SolveResult};
