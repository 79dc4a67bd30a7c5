//! Row- and rank-constrained total least squares for errors-in-variables
//! regression, with a synthetic model and a Monte Carlo harness that checks
//! the estimator's large-sample behavior.
//!
//! ```
//! use eiv_tls::model::{add_noise, synthesize_ground_truth, ModelSpec};
//! use eiv_tls::solvers::{solve_ctls, CtlsProblem, RankMode};
//!
//! let spec = ModelSpec::new(4, 1, 1, 3, 0.0).with_seed(7);
//! let truth = synthesize_ground_truth(&spec, 100).unwrap();
//! let instance = add_noise(&truth, 1).unwrap();
//! let sol = solve_ctls(&CtlsProblem::new(instance, RankMode::Explicit(3))).unwrap();
//! assert!((&sol.x_star - &truth.x_min).norm() < 1e-8);
//! ```

pub mod error;
pub mod harness;
pub mod io;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod rng;
pub mod solvers;

pub use error::{Error, Result};
pub use numerics::Matrix;
