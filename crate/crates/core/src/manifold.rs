//! Retraction operators and analytic derivatives on R^n, S2, and TS2.
//!
//! The unit sphere uses a fixed tangent basis B(x) built from the rotation
//! that carries e1 onto x; perturbations are expressed in the two basis
//! coordinates. The tangent bundle TS2 pairs a direction with an angular
//! velocity orthogonal to it. All closed-form derivative matrices here are
//! cross-checked against finite differences in the test suite.

use crate::error::ManifoldError;
use crate::{skew, Mat3, Vec3};
use libm::{atan2, cos, sin, sqrt};
use nalgebra::{Matrix2x3, Matrix3x2, Matrix4x6, Matrix6, Matrix6x4, Vector2, Vector4, Vector6};

/// Angle threshold below which trigonometric ratios switch to series.
const SMALL_ANGLE: f64 = 1e-6;
/// boxminus is rejected within this angle of the cut locus.
pub const ANTIPODAL_TOL: f64 = 1e-3;

/// Axis-angle rotation vector (radians).
pub type RotationVector = Vec3;
/// Coordinates of a tangent perturbation in the basis B(x).
pub type SphereTangent = Vector2<f64>;
/// Stacked (direction, velocity) perturbation coordinates on TS2.
pub type BundleTangent = Vector4<f64>;

/// A point on the unit sphere. Callers maintain unit norm; constructors here
/// normalize defensively only in `from_unnormalized`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpherePoint(pub Vec3);

impl SpherePoint {
    pub fn new(x: Vec3) -> Self {
        debug_assert!((x.norm() - 1.0).abs() < 1e-9, "sphere point must be unit norm");
        SpherePoint(x)
    }

    pub fn from_unnormalized(x: Vec3) -> Self {
        SpherePoint(x / x.norm())
    }

    #[inline]
    pub fn vector(&self) -> Vec3 {
        self.0
    }
}

/// A point on TS2: unit direction `q` with tangent angular velocity `w`,
/// `q . w == 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BundlePoint {
    pub q: Vec3,
    pub w: Vec3,
}

impl BundlePoint {
    pub fn new(q: Vec3, w: Vec3) -> Self {
        debug_assert!((q.norm() - 1.0).abs() < 1e-9);
        debug_assert!(q.dot(&w).abs() < 1e-8, "tangency violated");
        BundlePoint { q, w }
    }

    /// Renormalizes `q` and projects `w` onto the tangent plane.
    pub fn reproject(q: Vec3, w: Vec3) -> Self {
        let q = q / q.norm();
        let w = w - q * q.dot(&w);
        BundlePoint { q, w }
    }
}

fn sinc(t: f64) -> f64 {
    if t < SMALL_ANGLE {
        let t2 = t * t;
        1.0 - t2 / 6.0 + t2 * t2 / 120.0
    } else {
        sin(t) / t
    }
}

fn one_minus_cos_over_t2(t: f64) -> f64 {
    if t < SMALL_ANGLE {
        let t2 = t * t;
        0.5 - t2 / 24.0 + t2 * t2 / 720.0
    } else {
        (1.0 - cos(t)) / (t * t)
    }
}

fn t_minus_sin_over_t3(t: f64) -> f64 {
    if t < SMALL_ANGLE {
        let t2 = t * t;
        1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0
    } else {
        (t - sin(t)) / (t * t * t)
    }
}

/// Rodrigues rotation matrix for the axis-angle vector `v`.
pub fn rot_exp(v: &RotationVector) -> Mat3 {
    let t = v.norm();
    let vx = skew(v);
    Mat3::identity() + vx * sinc(t) + vx * vx * one_minus_cos_over_t2(t)
}

/// Left Jacobian of the rotation exponential,
/// A(v) = I + (1-cos|v|)/|v|^2 v^x + (|v|-sin|v|)/|v|^3 (v^x)^2.
pub fn rot_jac_a(v: &RotationVector) -> Mat3 {
    let t = v.norm();
    let vx = skew(v);
    Mat3::identity() + vx * one_minus_cos_over_t2(t) + vx * vx * t_minus_sin_over_t3(t)
}

/// Orthonormal tangent basis B(x) = R1(x) [e2, e3], where R1(x) rotates e1
/// onto x about the axis e1 x x.
///
/// The section is singular on the e1 axis: within angle 1e-6 of +e1 the
/// basis [e2, e3] is returned exactly, within 1e-6 of -e1 the fixed fallback
/// R(pi e3)[e2, e3] = [-e2, e3] is used so the filter stays deterministic.
pub fn tangent_basis(x: &SpherePoint) -> Matrix3x2<f64> {
    let x = x.0;
    // e1 x x
    let c = Vec3::new(0.0, -x.z, x.y);
    let s = sqrt(x.y * x.y + x.z * x.z);
    if s < SMALL_ANGLE {
        return if x.x >= 0.0 {
            Matrix3x2::new(0.0, 0.0, 1.0, 0.0, 0.0, 1.0)
        } else {
            Matrix3x2::new(0.0, 0.0, -1.0, 0.0, 0.0, 1.0)
        };
    }
    let angle = atan2(s, x.x);
    let r = rot_exp(&(c * (angle / s)));
    let mut b = Matrix3x2::zeros();
    b.column_mut(0).copy_from(&r.column(1));
    b.column_mut(1).copy_from(&r.column(2));
    b
}

/// theta/sin(theta), series-safe near zero.
fn theta_over_sin(theta: f64, s: f64) -> f64 {
    if theta < SMALL_ANGLE {
        1.0 + theta * theta / 6.0
    } else {
        theta / s
    }
}

/// Rotation vector carrying y onto x: theta * (y^x x)/|y^x x|.
/// Returns the vector together with theta.
fn relative_rotvec(x: &Vec3, y: &Vec3) -> Result<(Vec3, f64), ManifoldError> {
    let c = y.cross(x);
    let s = c.norm();
    let theta = atan2(s, y.dot(x));
    if theta > core::f64::consts::PI - ANTIPODAL_TOL {
        return Err(ManifoldError::AntipodalPoints);
    }
    Ok((c * theta_over_sin(theta, s), theta))
}

/// x boxplus u = R(B(x) u) x.
pub fn s2_boxplus(x: &SpherePoint, u: &SphereTangent) -> SpherePoint {
    let v = tangent_basis(x) * u;
    SpherePoint::from_unnormalized(rot_exp(&v) * x.0)
}

/// x boxminus y = B(y)^T (theta (y^x x)/|y^x x|).
pub fn s2_boxminus(x: &SpherePoint, y: &SpherePoint) -> Result<SphereTangent, ManifoldError> {
    let (rv, _) = relative_rotvec(&x.0, &y.0)?;
    Ok(tangent_basis(y).transpose() * rv)
}

/// x oplus v = R(v) x.
pub fn s2_oplus(x: &SpherePoint, v: &RotationVector) -> SpherePoint {
    SpherePoint::from_unnormalized(rot_exp(v) * x.0)
}

/// d(x boxminus y)/dx, the 2x3 matrix N(x, y).
pub fn s2_dboxminus_dx(x: &SpherePoint, y: &SpherePoint) -> Result<Matrix2x3<f64>, ManifoldError> {
    let (xv, yv) = (x.0, y.0);
    let c = yv.cross(&xv);
    let s = c.norm();
    let theta = atan2(s, yv.dot(&xv));
    if theta > core::f64::consts::PI - ANTIPODAL_TOL {
        return Err(ManifoldError::AntipodalPoints);
    }
    let yx = skew(&yv);
    // P(x, y) = ((-y'x |y^x x| + theta)/|y^x x|^3) x' (y^x)^2 - y'
    let p_factor = if theta < 1e-4 {
        2.0 / 3.0 + theta * theta / 5.0
    } else {
        (theta - yv.dot(&xv) * s) / (s * s * s)
    };
    let p_row = (yx * yx).transpose() * xv * p_factor - yv;
    let inner = yx * theta_over_sin(theta, s) + c * p_row.transpose();
    Ok(tangent_basis(y).transpose() * inner)
}

/// d(x boxplus u)/du, the 3x2 matrix O(x, u).
pub fn s2_dboxplus_du(x: &SpherePoint, u: &SphereTangent) -> Matrix3x2<f64> {
    let b = tangent_basis(x);
    let v = b * u;
    -rot_exp(&v) * skew(&x.0) * rot_jac_a(&v).transpose() * b
}

/// TS2 boxplus without the final tangent projection; this is the map the
/// analytic derivative `ts2_dboxplus_du` differentiates.
pub fn ts2_boxplus_raw(x: &BundlePoint, u: &BundleTangent) -> (Vec3, Vec3) {
    let b = tangent_basis(&SpherePoint(x.q));
    let u1 = Vector2::new(u[0], u[1]);
    let u2 = Vector2::new(u[2], u[3]);
    let r = rot_exp(&(b * u1));
    (r * x.q, x.w + r * (b * u2))
}

/// TS2 boxplus: rotate the direction and carry the velocity increment in the
/// rotated tangent frame. The output is reprojected onto the bundle; the
/// correction is purely radial and vanishes on round trips.
pub fn ts2_boxplus(x: &BundlePoint, u: &BundleTangent) -> BundlePoint {
    let (q, w) = ts2_boxplus_raw(x, u);
    BundlePoint::reproject(q, w)
}

/// TS2 boxminus, the exact inverse of `ts2_boxplus`: the velocity difference
/// is parallel-transported into the tangent plane of `y` before projection.
pub fn ts2_boxminus(x: &BundlePoint, y: &BundlePoint) -> Result<BundleTangent, ManifoldError> {
    let (rv, _) = relative_rotvec(&x.q, &y.q)?;
    let bt = tangent_basis(&SpherePoint(y.q)).transpose();
    let u1 = bt * rv;
    let u2 = bt * (rot_exp(&(-rv)) * (x.w - y.w));
    Ok(Vector4::new(u1.x, u1.y, u2.x, u2.y))
}

/// TS2 oplus without the tangent projection (for differential analysis).
pub fn ts2_oplus_raw(x: &BundlePoint, v1: &RotationVector, v2: &Vec3) -> (Vec3, Vec3) {
    let r = rot_exp(v1);
    (r * x.q, x.w + r * v2)
}

/// TS2 oplus with an ambient perturbation (v1: rotation vector, v2: velocity).
pub fn ts2_oplus(x: &BundlePoint, v1: &RotationVector, v2: &Vec3) -> BundlePoint {
    let (q, w) = ts2_oplus_raw(x, v1, v2);
    BundlePoint::reproject(q, w)
}

/// d(x boxplus u)/du, the 6x4 matrix T(x, u).
pub fn ts2_dboxplus_du(x: &BundlePoint, u: &BundleTangent) -> Matrix6x4<f64> {
    let b = tangent_basis(&SpherePoint(x.q));
    let u1 = Vector2::new(u[0], u[1]);
    let u2 = Vector2::new(u[2], u[3]);
    let v = b * u1;
    let r = rot_exp(&v);
    let at = rot_jac_a(&v).transpose();
    let top_left = -r * skew(&x.q) * at * b;
    let bot_left = -r * skew(&(b * u2)) * at * b;
    let bot_right = r * b;
    let mut t = Matrix6x4::zeros();
    t.fixed_view_mut::<3, 2>(0, 0).copy_from(&top_left);
    t.fixed_view_mut::<3, 2>(3, 0).copy_from(&bot_left);
    t.fixed_view_mut::<3, 2>(3, 2).copy_from(&bot_right);
    t
}

/// d(x oplus v)/dv, the 6x6 matrix U(x, v).
pub fn ts2_doplus_dv(x: &BundlePoint, v1: &RotationVector, v2: &Vec3) -> Matrix6<f64> {
    let r = rot_exp(v1);
    let at = rot_jac_a(v1).transpose();
    let mut u = Matrix6::zeros();
    u.fixed_view_mut::<3, 3>(0, 0).copy_from(&(-r * skew(&x.q) * at));
    u.fixed_view_mut::<3, 3>(3, 0).copy_from(&(-r * skew(v2) * at));
    u.fixed_view_mut::<3, 3>(3, 3).copy_from(&r);
    u
}

/// d(x oplus v)/dx, the 6x6 matrix S(v) = blkdiag(R(v1), I3).
pub fn ts2_doplus_dx(v1: &RotationVector) -> Matrix6<f64> {
    let mut s = Matrix6::identity();
    s.fixed_view_mut::<3, 3>(0, 0).copy_from(&rot_exp(v1));
    s
}

/// d(x boxminus y)/dx evaluated at y = x, the 4x6 matrix Q(x, x).
///
/// With the transported boxminus the velocity rows depend on the direction
/// only through the vanishing difference x2 - y2, so the lower-left block is
/// zero at self.
pub fn ts2_dboxminus_dx_self(x: &BundlePoint) -> Matrix4x6<f64> {
    let bt = tangent_basis(&SpherePoint(x.q)).transpose();
    let qx = skew(&x.q);
    let mut m = Matrix4x6::zeros();
    m.fixed_view_mut::<2, 3>(0, 0).copy_from(&(bt * qx));
    m.fixed_view_mut::<2, 3>(2, 3).copy_from(&bt);
    m
}

/// Stacks a TS2 point as an ambient 6-vector (for finite differencing).
pub fn bundle_to_vec6(x: &BundlePoint) -> Vector6<f64> {
    Vector6::new(x.q.x, x.q.y, x.q.z, x.w.x, x.w.y, x.w.z)
}
