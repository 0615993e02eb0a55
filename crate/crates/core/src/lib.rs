//! Numerical toolkit for reflected forward-backward SDEs with Levy jumps.
//!
//! The crate is organized around the pieces needed to study coupled
//! FB-SDE systems under skew boundary reflection at desk scale:
//!
//! - [`reflection`]: domain geometry, completely-S condition checking,
//!   per-step LCP and fixed-point Skorohod solvers, oscillation diagnostics.
//! - [`levy`]: Brownian/compound-Poisson driving noise with analytic
//!   compensators and reproducible per-path substreams.
//! - [`fbsde`]: reflected Euler forward simulation, least-squares Monte
//!   Carlo backward recursion, and the Picard iteration coupling them.
//! - [`queueing`]: state-dependent queueing networks, diffusion scaling,
//!   and reflecting-Brownian-motion comparisons.
//! - [`pde`]: grid fields, the generalized HJB generator, Feynman-Kac
//!   Monte Carlo, the RBM backward transition equation, and the
//!   field-to-process bridge.
//! - [`games`]: finite policy grids, value evaluation through the FB-SDE
//!   solver, and Pareto-optimal Nash equilibrium search.
//!
//! All stateful computations take explicit seeds and are deterministic:
//! ensembles are simulated on independent counter-based substreams so
//! results do not depend on scheduling or path order.

pub mod fbsde;
pub mod games;
pub mod levy;
pub mod linalg;
pub mod pde;
pub mod quadrature;
pub mod queueing;
pub mod reflection;
pub mod seeding;
