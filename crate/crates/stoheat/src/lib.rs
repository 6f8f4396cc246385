//! Spectral Galerkin discretisation of the semilinear stochastic heat
//! equation on an interval with Dirichlet boundary conditions,
//!
//! ```text
//!     du = (u_xx + f(u)) dt + sigma(u) dW,      u(a) = u(b) = 0,
//! ```
//!
//! driven by space-time white noise, together with a Monte Carlo harness
//! that measures weak and strong convergence rates of the fully implicit
//! Euler time discretisation.
//!
//! The state lives in the span of the first `m` Dirichlet eigenfunctions
//! and is stored as a coefficient vector ([`SpectralField`]). Each time
//! step solves the linear part exactly through the resolvent
//! `(I - dt A)^-1`, which is diagonal in this basis, so a step costs two
//! sine transforms (for the nonlinearities) plus `O(m)` arithmetic.
//!
//! Randomness is a pure function of `(experiment seed, path index, mode,
//! step)` via a counter-based generator, so path `p` is the same object
//! no matter how work is scheduled, and refining the grid extends a
//! noise matrix without rewriting the entries already drawn.

/// Library version, recorded in experiment manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub mod error;
pub mod estimator;
pub mod integrator;
pub mod models;
pub mod noise;
pub mod oracle;
pub mod parallel;
pub mod spectral;
pub mod transform;

pub use error::StoheatError;
pub use estimator::{
    fit_loglog, moment_probe, strong_error_ladder, weak_error_ladder, LadderSpec, LogLogFit,
    MomentReport, RateReport, TestFunctional,
};
pub use integrator::{
    euler_step, exact_ou_final, interpolate, run_coupled, run_path, run_path_dense, SchemeParams,
    Trajectory,
};
pub use models::{Diffusion, ModelSpec, Nonlinearity, SigmaKind};
pub use noise::{NoisePath, SeedSpec};
pub use parallel::{
    map_paths, map_paths_seq, mean_and_stderr, pairwise_sum, pairwise_sum_iter, with_worker_pool,
};
pub use spectral::{EigenBasis, SpectralField};
pub use transform::{apply_drift, diffusion_increment, to_grid, to_spectral, GridField};
