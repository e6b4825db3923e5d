//! Property and finite-difference tests for the manifold operators.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2, Vector3, Vector4};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use tetherkit_core::manifold::*;
use tetherkit_core::{skew, Vec3};

fn rand_unit(rng: &mut StdRng) -> Vec3 {
    loop {
        let v = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

fn rand_bundle(rng: &mut StdRng) -> BundlePoint {
    let q = rand_unit(rng);
    let w = Vec3::new(
        rng.random_range(-2.0..2.0),
        rng.random_range(-2.0..2.0),
        rng.random_range(-2.0..2.0),
    );
    BundlePoint::reproject(q, w)
}

/// 5-point central finite difference of f at 0 along coordinate i.
fn fd5(f: impl Fn(f64) -> DVector<f64>, h: f64) -> DVector<f64> {
    (-f(2.0 * h) + f(h) * 8.0 - f(-h) * 8.0 + f(-2.0 * h)) / (12.0 * h)
}

fn fd_jacobian(f: impl Fn(&DVector<f64>) -> DVector<f64>, x0: &DVector<f64>, h: f64) -> DMatrix<f64> {
    let n = x0.len();
    let m = f(x0).len();
    let mut j = DMatrix::zeros(m, n);
    for i in 0..n {
        let col = fd5(
            |t| {
                let mut x = x0.clone();
                x[i] += t;
                f(&x)
            },
            h,
        );
        j.set_column(i, &col);
    }
    j
}

fn rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / (1.0 + b.norm())
}

#[test]
fn s2_round_trip_and_norms() {
    let mut rng = StdRng::seed_from_u64(1);
    for _ in 0..2500 {
        let x = SpherePoint::new(rand_unit(&mut rng));
        let y = SpherePoint::new(rand_unit(&mut rng));
        if x.vector().dot(&y.vector()) < -0.995 {
            continue; // near cut locus
        }
        let u = s2_boxminus(&x, &y).unwrap();
        let back = s2_boxplus(&y, &u);
        assert!((back.vector() - x.vector()).norm() < 1e-9);
        assert!((back.vector().norm() - 1.0).abs() < 1e-10);
        // zero element
        let z = s2_boxminus(&x, &x).unwrap();
        assert!(z.norm() < 1e-12);
        assert!((s2_boxplus(&x, &Vector2::zeros()).vector() - x.vector()).norm() < 1e-12);
        // norm of the difference equals the angle
        let angle = libm::acos(x.vector().dot(&y.vector()).clamp(-1.0, 1.0));
        assert!((u.norm() - angle).abs() < 1e-9);
    }
}

#[test]
fn ts2_round_trip_tangency_and_zero() {
    let mut rng = StdRng::seed_from_u64(2);
    for _ in 0..2500 {
        let x = rand_bundle(&mut rng);
        let y = rand_bundle(&mut rng);
        if x.q.dot(&y.q) < -0.995 {
            continue;
        }
        let u = ts2_boxminus(&x, &y).unwrap();
        let back = ts2_boxplus(&y, &u);
        assert!((back.q - x.q).norm() < 1e-9);
        assert!((back.w - x.w).norm() < 1e-9);
        // tangency under random perturbations
        let up = Vector4::new(
            rng.random_range(-0.5..0.5),
            rng.random_range(-0.5..0.5),
            rng.random_range(-0.5..0.5),
            rng.random_range(-0.5..0.5),
        );
        let p = ts2_boxplus(&x, &up);
        assert!((p.q.norm() - 1.0).abs() < 1e-10);
        assert!(p.q.dot(&p.w).abs() < 1e-10);
        // zero element
        let z = ts2_boxminus(&x, &x).unwrap();
        assert!(z.norm() < 1e-12);
    }
}

#[test]
fn s2_oplus_round_trip() {
    let mut rng = StdRng::seed_from_u64(3);
    for _ in 0..500 {
        let x = SpherePoint::new(rand_unit(&mut rng));
        let v = rand_unit(&mut rng) * rng.random_range(0.0..2.0);
        let y = s2_oplus(&x, &v);
        assert!((y.vector().norm() - 1.0).abs() < 1e-12);
        let back = s2_oplus(&y, &-v);
        assert!((back.vector() - x.vector()).norm() < 1e-12);
    }
}

#[test]
fn rotation_derivative_via_jac_a() {
    // d(R(v)c)/dv = -R(v) c^x A(v)^T, checked at random points
    let mut rng = StdRng::seed_from_u64(4);
    for _ in 0..200 {
        let v = rand_unit(&mut rng) * rng.random_range(0.0..2.5);
        let c = rand_unit(&mut rng) * rng.random_range(0.5..2.0);
        let analytic = -rot_exp(&v) * skew(&c) * rot_jac_a(&v).transpose();
        let f = |p: &DVector<f64>| {
            let vv = Vec3::new(p[0], p[1], p[2]);
            let r = rot_exp(&vv) * c;
            DVector::from_column_slice(&[r.x, r.y, r.z])
        };
        let x0 = DVector::from_column_slice(&[v.x, v.y, v.z]);
        let fd = fd_jacobian(f, &x0, 1e-4);
        let an = DMatrix::from_fn(3, 3, |i, j| analytic[(i, j)]);
        assert!(rel_err(&an, &fd) < 1e-5, "rel err {}", rel_err(&an, &fd));
    }
}

#[test]
fn s2_derivative_matrices_match_fd() {
    let mut rng = StdRng::seed_from_u64(5);
    for _ in 0..300 {
        let x = SpherePoint::new(rand_unit(&mut rng));
        let y = SpherePoint::new(rand_unit(&mut rng));
        if x.vector().dot(&y.vector()) < -0.9 {
            continue;
        }
        // N(x, y) = d(x boxminus y)/dx (ambient x)
        let n = s2_dboxminus_dx(&x, &y).unwrap();
        let f = |p: &DVector<f64>| {
            let xv = Vec3::new(p[0], p[1], p[2]);
            // boxminus formula extends smoothly off the sphere; differentiate the raw map
            let c = y.vector().cross(&xv);
            let s = c.norm();
            let theta = libm::atan2(s, y.vector().dot(&xv));
            let rv = c * (theta / s);
            let u = tangent_basis(&y).transpose() * rv;
            DVector::from_column_slice(&[u.x, u.y])
        };
        let x0 = DVector::from_column_slice(x.vector().as_slice());
        let fd = fd_jacobian(f, &x0, 1e-5);
        let an = DMatrix::from_fn(2, 3, |i, j| n[(i, j)]);
        assert!(rel_err(&an, &fd) < 1e-5, "N rel err {}", rel_err(&an, &fd));

        // O(x, u) = d(x boxplus u)/du
        let u0 = Vector2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let o = s2_dboxplus_du(&x, &u0);
        let g = |p: &DVector<f64>| {
            let u = Vector2::new(p[0], p[1]);
            let r = s2_boxplus(&x, &u).vector();
            DVector::from_column_slice(&[r.x, r.y, r.z])
        };
        let u0d = DVector::from_column_slice(&[u0.x, u0.y]);
        let fd = fd_jacobian(g, &u0d, 1e-5);
        let an = DMatrix::from_fn(3, 2, |i, j| o[(i, j)]);
        assert!(rel_err(&an, &fd) < 1e-5, "O rel err {}", rel_err(&an, &fd));
    }
}

#[test]
fn ts2_derivative_matrices_match_fd() {
    let mut rng = StdRng::seed_from_u64(6);
    for _ in 0..300 {
        let x = rand_bundle(&mut rng);

        // T(x, u) = d(x boxplus u)/du against the raw (unprojected) operator
        let u0 = Vector4::new(
            rng.random_range(-0.8..0.8),
            rng.random_range(-0.8..0.8),
            rng.random_range(-0.8..0.8),
            rng.random_range(-0.8..0.8),
        );
        let t = ts2_dboxplus_du(&x, &u0);
        let f = |p: &DVector<f64>| {
            let u = Vector4::new(p[0], p[1], p[2], p[3]);
            let (q, w) = ts2_boxplus_raw(&x, &u);
            DVector::from_column_slice(&[q.x, q.y, q.z, w.x, w.y, w.z])
        };
        let u0d = DVector::from_column_slice(u0.as_slice());
        let fd = fd_jacobian(f, &u0d, 1e-5);
        let an = DMatrix::from_fn(6, 4, |i, j| t[(i, j)]);
        assert!(rel_err(&an, &fd) < 1e-5, "T rel err {}", rel_err(&an, &fd));

        // U(x, v) = d(x oplus v)/dv
        let v1 = rand_unit(&mut rng) * rng.random_range(0.0..1.5);
        let v2 = rand_unit(&mut rng) * rng.random_range(0.0..1.5);
        let u_mat = ts2_doplus_dv(&x, &v1, &v2);
        let g = |p: &DVector<f64>| {
            let a = Vec3::new(p[0], p[1], p[2]);
            let b = Vec3::new(p[3], p[4], p[5]);
            let (q, w) = ts2_oplus_raw(&x, &a, &b);
            DVector::from_column_slice(&[q.x, q.y, q.z, w.x, w.y, w.z])
        };
        let v0 = DVector::from_column_slice(&[v1.x, v1.y, v1.z, v2.x, v2.y, v2.z]);
        let fd = fd_jacobian(g, &v0, 1e-5);
        let an = DMatrix::from_fn(6, 6, |i, j| u_mat[(i, j)]);
        assert!(rel_err(&an, &fd) < 1e-5, "U rel err {}", rel_err(&an, &fd));

        // S(v) = d(x oplus v)/dx
        let s = ts2_doplus_dx(&v1);
        let x0 = DVector::from_column_slice(&[x.q.x, x.q.y, x.q.z, x.w.x, x.w.y, x.w.z]);
        let hmap = |p: &DVector<f64>| {
            let xx = BundlePoint {
                q: Vec3::new(p[0], p[1], p[2]),
                w: Vec3::new(p[3], p[4], p[5]),
            };
            let (q, w) = ts2_oplus_raw(&xx, &v1, &v2);
            DVector::from_column_slice(&[q.x, q.y, q.z, w.x, w.y, w.z])
        };
        let fd = fd_jacobian(hmap, &x0, 1e-5);
        let an = DMatrix::from_fn(6, 6, |i, j| s[(i, j)]);
        assert!(rel_err(&an, &fd) < 1e-5, "S rel err {}", rel_err(&an, &fd));

        // Q(x, x) = d(x boxminus y)/dx at y = x, restricted to tangent moves.
        // Ambient FD needs the raw boxminus extended off the bundle.
        let y = x;
        let q_self = ts2_dboxminus_dx_self(&x);
        let qmap = |p: &DVector<f64>| {
            let xq = Vec3::new(p[0], p[1], p[2]);
            let xw = Vec3::new(p[3], p[4], p[5]);
            let c = y.q.cross(&xq);
            let s = c.norm();
            let theta = libm::atan2(s, y.q.dot(&xq));
            let factor = if theta < 1e-6 { 1.0 + theta * theta / 6.0 } else { theta / s };
            let rv = c * factor;
            let bt = tangent_basis(&SpherePoint::new(y.q)).transpose();
            let u1 = bt * rv;
            let u2 = bt * (rot_exp(&-rv) * (xw - y.w));
            DVector::from_column_slice(&[u1.x, u1.y, u2.x, u2.y])
        };
        let fd = fd_jacobian(qmap, &x0, 1e-5);
        let an = DMatrix::from_fn(4, 6, |i, j| q_self[(i, j)]);
        assert!(rel_err(&an, &fd) < 1e-5, "Q rel err {}", rel_err(&an, &fd));
    }
}

#[test]
fn basis_properties_random() {
    let mut rng = StdRng::seed_from_u64(7);
    for _ in 0..1000 {
        let x = SpherePoint::new(rand_unit(&mut rng));
        let b = tangent_basis(&x);
        assert!((b.transpose() * b - Matrix2::identity()).norm() < 1e-12);
        assert!((b.transpose() * x.vector()).norm() < 1e-12);
    }
}

#[test]
fn boxminus_norm_is_angle_near_zero() {
    // small-angle series branch continuity
    let x = SpherePoint::new(Vector3::new(0.0, 0.0, 1.0));
    for &eps in &[1e-10, 1e-8, 1e-7, 1e-5] {
        let y = SpherePoint::from_unnormalized(Vector3::new(eps, 0.0, 1.0));
        let u = s2_boxminus(&x, &y).unwrap();
        assert!((u.norm() - eps).abs() < 1e-12 + eps * 1e-6);
    }
}
