//! Simulation and verification harness for the local and non-local discrete
//! complex Ginzburg-Landau lattices.
//!
//! - [`lattice`]: truncated states, the combined vector field, norms and the
//!   energy-balance decomposition.
//! - [`integrator`]: adaptive Dormand–Prince integration with blow-up
//!   detection, the scalar comparison equation and a fixed-step reference.
//! - [`regimes`]: closed-form constants, roots, radii and entry times.
//! - [`experiments`]: closeness, tail, attractor and regime studies.
//!
//! Loops over lattice sites and over experiment grids run on rayon when the
//! `parallel` feature is enabled (the default); see [`exec::Execution`].

// `!(x > y)` is the NaN-rejecting form used for input checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod exec;
pub mod experiments;
pub mod integrator;
pub mod lattice;
pub mod regimes;

pub use exec::Execution;
pub use integrator::{
    integrate_adaptive, integrate_fixed_rk4, integrate_observed, integrate_riccati,
    IntegrationError, IntegrationOptions, ScalarTrajectory, Snapshot, Trajectory,
};
pub use lattice::{
    balance_residual, discrete_laplacian, norms, rhs_combined, BalanceTerms, Forcing, LatticeError,
    LatticeState, ModelParams, Norms, RhsKernel, C64,
};
pub use regimes::{
    classify_regime, closeness_constants, riccati_constants, ClosenessConstants, RegimeError,
    RegimeLabel, RegimeReport, RiccatiConstants,
};
