//! Mean-field model of interacting risk-taking agents.
//!
//! The model couples N agents through their empirical mean:
//!
//! ```text
//! dx_j = -h U(x_j) dt + theta (xbar - x_j) dt + sigma dw_j,
//! U(y) = y^3 - y,    V(y) = y^4/4 - y^2/2
//! ```
//!
//! Each agent sits in a double-well potential (normal state near -1, failed
//! state near +1) and is pulled toward the population mean. For noise below a
//! critical level the population itself is bistable: the mean-field limit has
//! a pair of collective equilibria at +-xi_b, and a systemic transition is the
//! rare event that the empirical mean migrates from one to the other.
//!
//! The crate provides:
//!
//! - [`model`]: parameter types, the potential and force, validation.
//! - [`equilibrium`]: the self-consistency map m(xi), bistable equilibria,
//!   critical noise levels, and their small-h closed forms, for homogeneous
//!   and multi-group populations.
//! - [`simulate`]: Euler-Maruyama simulation of the full particle system,
//!   heterogeneous variants, a reduced one-dimensional SDE for the mean, and
//!   deterministic parallel ensembles with transition counting.
//! - [`fokker_planck`]: a conservative finite-volume solver for the
//!   McKean-Vlasov Fokker-Planck equation of the mean-field limit.
//! - [`largedev`]: large-deviation rate functions for systemic transitions:
//!   closed forms, a variational minimizer for the reduced action, the
//!   optimal-path boundary-value problem, and Gaussian-path evaluation.
//! - [`diversity`]: effect of heterogeneous mean-reversion rates on the
//!   transition probability (matrix-exponential covariance, small-spread
//!   expansions).
//! - [`fluctuation`]: linearized fluctuation variances and the individual
//!   versus systemic risk comparison.
//!
//! Everything is deterministic given a seed; ensemble results do not depend
//! on thread count.

pub mod diversity;
pub mod equilibrium;
pub mod fluctuation;
pub mod fokker_planck;
pub mod largedev;
pub mod model;
pub mod quad;
pub mod simulate;

mod linalg;

pub use model::{GroupSpec, HetModelParams, ModelParams, SystemState};

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Parameter validation failed; every violated invariant is listed.
    #[error("invalid parameters: {}", .0.join("; "))]
    InvalidParams(Vec<String>),

    /// The equilibrium fixed point is degenerate at h = 0 (m(xi) = xi
    /// identically); callers must use the small-h expansion instead.
    #[error("degenerate at h=0; use expansion")]
    DegenerateAtHZero,

    /// No bistable equilibria exist in this parameter regime.
    #[error("no bistable equilibria: {0}")]
    NoBistableEquilibria(String),

    /// Quadrature failed to stabilize under node doubling.
    #[error("quadrature non-convergence: {0}")]
    QuadratureNonConvergence(String),

    /// The requested density grid does not contain the distribution's mass.
    #[error("grid too narrow: {0}")]
    GridTooNarrow(String),

    /// A root or fixed-point bracket could not be established.
    #[error("bracket not found: {0}")]
    BracketNotFound(String),

    /// An iterative solver ran out of iterations.
    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    /// A simulated state became NaN or infinite at the given step.
    #[error("non-finite state at step {step}")]
    NonFiniteState { step: usize },

    /// A replica of an ensemble failed.
    #[error("replica {replica} failed: {source}")]
    ReplicaFailed {
        replica: usize,
        #[source]
        source: Box<Error>,
    },

    /// Group fractions cannot be realized at the requested agent count.
    #[error("group {group} is empty at N = {n_agents} under largest-remainder apportionment")]
    EmptyGroup { group: usize, n_agents: usize },

    /// The CFL-limited substep collapsed below the solver's floor.
    #[error("CFL substep {dt:.3e} below floor 1e-9")]
    CflSubstepTooSmall { dt: f64 },

    /// Probability mass is escaping through the domain boundary.
    #[error("boundary leakage {leak:.3e} exceeds tolerance {tol:.3e}")]
    BoundaryLeakage { leak: f64, tol: f64 },

    /// A density value fell below the negativity floor of the scheme.
    #[error("density went negative (min {min:.3e} at t = {time:.6})")]
    NegativeDensity { min: f64, time: f64 },

    /// Total probability mass drifted beyond tolerance.
    #[error("mass not conserved (drift {drift:.3e} at t = {time:.6})")]
    MassNotConserved { drift: f64, time: f64 },
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
