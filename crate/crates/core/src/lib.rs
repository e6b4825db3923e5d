//! Core library for the two-drone-bar suspended payload system.
//!
//! Implements on-manifold calculus for S2 and its tangent bundle, the full
//! nonlinear multibody dynamics of a bar tethered to two UAVs, linearized
//! observability analysis over disturbance combinations, and a
//! disturbance-observer-based error-state extended Kalman filter, together
//! with a scenario simulation harness.
//!
//! The crate is `no_std` (with `alloc`); all IO, configuration, and the CLI
//! live in the companion `tetherkit` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod dynamics;
pub mod error;
pub mod filter;
pub mod manifold;
pub mod observability;
pub mod sim;

use nalgebra::{Matrix3, Vector3};

/// 3D vector of f64.
pub type Vec3 = Vector3<f64>;
/// 3x3 matrix of f64.
pub type Mat3 = Matrix3<f64>;

/// Skew-symmetric cross-product matrix: `skew(a) * b == a.cross(&b)`.
pub fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Gravity constant [m/s^2], NED convention (+e3 points down).
pub const GRAVITY: f64 = 9.81;
