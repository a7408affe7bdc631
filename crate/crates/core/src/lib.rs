//! Kinetic Wasserstein toolbox: phase-space transport distances, particle
//! dynamics on the torus, and the stability bounds that control how those
//! distances grow along mean-field flows.
//!
//! The crate is organized bottom-up:
//!
//! * [`measures`] - torus geometry, weighted ensembles, couplings, ground costs;
//! * [`transport`] - exact and entropic optimal transport, implicit weight
//!   solves, the nonlinear weight-implicit distance;
//! * [`fields`] - grid densities, interaction kernels, the spectral Poisson
//!   solver;
//! * [`dynamics`] - symplectic particle integrators and coupled-pair
//!   trajectory diagnostics;
//! * [`bounds`] - growth estimates (linearized and free-flow Gronwall forms,
//!   log-scale stability for the singular-limit regime) and the machinery
//!   that checks them against measured distances.

pub mod bounds;
pub mod dynamics;
pub mod fields;
pub mod measures;
pub mod transport;
