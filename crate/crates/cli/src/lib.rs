//! Command-line front end for the tetherkit estimation stack.
//!
//! Three commands: `simulate` runs a closed-loop scenario and writes the
//! trace/metrics/manifest artifact set, `observability-table` reproduces the
//! disturbance-combination rank table, and `check` runs the self-check
//! suites (manifold axioms, Jacobian finite differences, energy
//! conservation).

pub mod checks;
pub mod commands;
pub mod config;
pub mod trace;
