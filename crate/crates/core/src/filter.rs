//! Disturbance-observer-based error-state EKF on the product manifold
//! (R^3)^2 x (TS^2)^3 x (R^3)^2.
//!
//! The full estimation state carries the payload pose, the three unit-sphere
//! bundle states, and the two drone disturbance biases modelled as random
//! walks. The minimal error state has 24 dimensions (each TS^2 contributes
//! 4); the baseline filter drops the disturbance states and runs on the
//! first 18.
//!
//! Layouts used throughout:
//! - error state delta-x (24): [dp0 dv0 | (dq0 dw0) (dq1 dw1) (dq2 dw2) | dd1 dd2]
//! - rate stack f_d (30):      [v0 v0dot | (w0 w0dot) (w1 w1dot) (w2 w2dot) | wd1 wd2]
//! - process noise w (12):     [w_p0 w_q0 w_d1 w_d2]
//! - measurement z (12):       [p1 p2 v1 v2]

use crate::dynamics::{
    accelerations, drone_kinematics, ControlInput, DisturbanceSet, PlantState, ProcessNoise,
    SystemParams,
};
use crate::error::FilterError;
use crate::manifold::{
    rot_exp, rot_jac_a, tangent_basis, ts2_boxminus, ts2_boxplus, ts2_oplus, BundlePoint,
    BundleTangent, SpherePoint,
};
use crate::{skew, Vec3};
use nalgebra::{DMatrix, DVector, Matrix3, SMatrix, SVector, Vector2};

/// Full estimation state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemState {
    pub p0: Vec3,
    pub v0: Vec3,
    pub b0: BundlePoint,
    pub b1: BundlePoint,
    pub b2: BundlePoint,
    pub d_p1: Vec3,
    pub d_p2: Vec3,
}

impl SystemState {
    pub fn from_plant(s: &PlantState, d_p1: Vec3, d_p2: Vec3) -> Self {
        SystemState {
            p0: s.p0,
            v0: s.v0,
            b0: BundlePoint::reproject(s.q0.vector(), s.w0),
            b1: BundlePoint::reproject(s.q1.vector(), s.w1),
            b2: BundlePoint::reproject(s.q2.vector(), s.w2),
            d_p1,
            d_p2,
        }
    }

    pub fn to_plant(&self) -> PlantState {
        PlantState {
            p0: self.p0,
            v0: self.v0,
            q0: SpherePoint::new(self.b0.q),
            w0: self.b0.w,
            q1: SpherePoint::new(self.b1.q),
            w1: self.b1.w,
            q2: SpherePoint::new(self.b2.q),
            w2: self.b2.w,
        }
    }

    /// `x (+) v` with a 30-dim perturbation in rate-stack layout.
    pub fn oplus(&self, v: &SVector<f64, 30>) -> SystemState {
        let seg = |i: usize| v.fixed_rows::<3>(i).into_owned();
        SystemState {
            p0: self.p0 + seg(0),
            v0: self.v0 + seg(3),
            b0: ts2_oplus(&self.b0, &seg(6), &seg(9)),
            b1: ts2_oplus(&self.b1, &seg(12), &seg(15)),
            b2: ts2_oplus(&self.b2, &seg(18), &seg(21)),
            d_p1: self.d_p1 + seg(24),
            d_p2: self.d_p2 + seg(27),
        }
    }

    /// `x [+] dx` with a 24-dim minimal error vector.
    pub fn boxplus(&self, dx: &SVector<f64, 24>) -> SystemState {
        let bt = |i: usize| BundleTangent::new(dx[i], dx[i + 1], dx[i + 2], dx[i + 3]);
        SystemState {
            p0: self.p0 + dx.fixed_rows::<3>(0).into_owned(),
            v0: self.v0 + dx.fixed_rows::<3>(3).into_owned(),
            b0: ts2_boxplus(&self.b0, &bt(6)),
            b1: ts2_boxplus(&self.b1, &bt(10)),
            b2: ts2_boxplus(&self.b2, &bt(14)),
            d_p1: self.d_p1 + dx.fixed_rows::<3>(18).into_owned(),
            d_p2: self.d_p2 + dx.fixed_rows::<3>(21).into_owned(),
        }
    }

    /// `self [-] other` as a 24-dim minimal error vector.
    pub fn boxminus(&self, other: &SystemState) -> SVector<f64, 24> {
        let mut dx = SVector::<f64, 24>::zeros();
        dx.fixed_rows_mut::<3>(0).copy_from(&(self.p0 - other.p0));
        dx.fixed_rows_mut::<3>(3).copy_from(&(self.v0 - other.v0));
        let b0 = ts2_boxminus(&self.b0, &other.b0).expect("boxminus b0");
        let b1 = ts2_boxminus(&self.b1, &other.b1).expect("boxminus b1");
        let b2 = ts2_boxminus(&self.b2, &other.b2).expect("boxminus b2");
        dx.fixed_rows_mut::<4>(6).copy_from(&b0);
        dx.fixed_rows_mut::<4>(10).copy_from(&b1);
        dx.fixed_rows_mut::<4>(14).copy_from(&b2);
        dx.fixed_rows_mut::<3>(18)
            .copy_from(&(self.d_p1 - other.d_p1));
        dx.fixed_rows_mut::<3>(21)
            .copy_from(&(self.d_p2 - other.d_p2));
        dx
    }
}

/// Process / measurement covariances.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseConfig {
    /// 12x12 discrete process covariance for [w_p0, w_q0, w_d1, w_d2].
    pub q: SMatrix<f64, 12, 12>,
    /// 12x12 measurement covariance for [p1, p2, v1, v2].
    pub r: SMatrix<f64, 12, 12>,
}

impl NoiseConfig {
    pub fn benchmark() -> Self {
        NoiseConfig {
            q: SMatrix::identity() * 0.1,
            r: SMatrix::identity() * 0.01,
        }
    }
}

/// Filter configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterConfig {
    /// Estimate d_p1/d_p2 (24-dim error) or run the plain baseline (18-dim).
    pub estimate_disturbances: bool,
    /// Optional Mahalanobis innovation gate on the squared distance.
    pub gate: Option<f64>,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            estimate_disturbances: true,
            gate: None,
        }
    }
}

impl FilterConfig {
    pub fn error_dim(&self) -> usize {
        if self.estimate_disturbances {
            24
        } else {
            18
        }
    }
}

/// State estimate with covariance.
#[derive(Debug, Clone)]
pub struct FilterState {
    pub x: SystemState,
    /// error_dim x error_dim covariance of the minimal error state.
    pub p: DMatrix<f64>,
}

impl FilterState {
    /// Default initial covariance: moderately confident pose, loose
    /// disturbances.
    pub fn initial(x: SystemState, cfg: &FilterConfig) -> Self {
        let n = cfg.error_dim();
        let mut p = DMatrix::<f64>::identity(n, n) * 1e-2;
        if cfg.estimate_disturbances {
            for i in 18..24 {
                p[(i, i)] = 1.0;
            }
        }
        FilterState { x, p }
    }
}

/// A measurement sample: stacked drone positions and velocities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub z: SVector<f64, 12>,
    pub t: f64,
}

/// Canonical discrete rate stack f_d(x, u, w).
pub fn f_d(
    params: &SystemParams,
    x: &SystemState,
    u: &ControlInput,
    w: &SVector<f64, 12>,
) -> Result<SVector<f64, 30>, FilterError> {
    let plant = x.to_plant();
    let d = DisturbanceSet {
        d_p1: x.d_p1,
        d_p2: x.d_p2,
        ..Default::default()
    };
    let noise = ProcessNoise {
        w_p0: w.fixed_rows::<3>(0).into_owned(),
        w_q0: w.fixed_rows::<3>(3).into_owned(),
    };
    let a = accelerations(params, &plant, u, &d, &noise)?;
    let mut f = SVector::<f64, 30>::zeros();
    f.fixed_rows_mut::<3>(0).copy_from(&x.v0);
    f.fixed_rows_mut::<3>(3).copy_from(&a.v0_dot);
    f.fixed_rows_mut::<3>(6).copy_from(&x.b0.w);
    f.fixed_rows_mut::<3>(9).copy_from(&a.w0_dot);
    f.fixed_rows_mut::<3>(12).copy_from(&x.b1.w);
    f.fixed_rows_mut::<3>(15).copy_from(&a.w1_dot);
    f.fixed_rows_mut::<3>(18).copy_from(&x.b2.w);
    f.fixed_rows_mut::<3>(21).copy_from(&a.w2_dot);
    f.fixed_rows_mut::<3>(24)
        .copy_from(&w.fixed_rows::<3>(6).into_owned());
    f.fixed_rows_mut::<3>(27)
        .copy_from(&w.fixed_rows::<3>(9).into_owned());
    Ok(f)
}

/// The 30x24 Jacobian of `x [+] dx` in ambient coordinates at dx = 0:
/// blkdiag(I6, [-q^x B, 0; 0, B] per bundle, I6).
pub fn boxplus_jacobian(x: &SystemState) -> SMatrix<f64, 30, 24> {
    let mut j = SMatrix::<f64, 30, 24>::zeros();
    j.fixed_view_mut::<6, 6>(0, 0).fill_with_identity();
    for (k, b) in [&x.b0, &x.b1, &x.b2].into_iter().enumerate() {
        let row = 6 + 6 * k;
        let col = 6 + 4 * k;
        let basis = tangent_basis(&SpherePoint::new(b.q));
        j.fixed_view_mut::<3, 2>(row, col)
            .copy_from(&(-skew(&b.q) * basis));
        j.fixed_view_mut::<3, 2>(row + 3, col + 2).copy_from(&basis);
    }
    j.fixed_view_mut::<6, 6>(24, 18).fill_with_identity();
    j
}

/// Manifold-specific partials of one TS^2 block for the propagation step:
/// G_x (4x4) and G_f (4x6), using the one-step relations between the
/// posterior state at tau and the prior at tau+1.
fn ts2_propagation_partials(
    prev: &BundlePoint,
    next: &BundlePoint,
    dt: f64,
    w_dot: &Vec3,
) -> (SMatrix<f64, 4, 4>, SMatrix<f64, 4, 6>) {
    let b_prev = tangent_basis(&SpherePoint::new(prev.q));
    let b_next_t = tangent_basis(&SpherePoint::new(next.q)).transpose();
    let r = rot_exp(&(dt * prev.w));
    let a_t = rot_jac_a(&(dt * prev.w)).transpose();
    let qx2 = skew(&prev.q) * skew(&prev.q);

    let mut g_x = SMatrix::<f64, 4, 4>::zeros();
    g_x.fixed_view_mut::<2, 2>(0, 0)
        .copy_from(&(-b_next_t * r * qx2 * b_prev));
    g_x.fixed_view_mut::<2, 2>(2, 2)
        .copy_from(&(b_next_t * b_prev));

    let mut g_f = SMatrix::<f64, 4, 6>::zeros();
    g_f.fixed_view_mut::<2, 3>(0, 0)
        .copy_from(&(-b_next_t * r * qx2 * a_t));
    g_f.fixed_view_mut::<2, 3>(2, 0)
        .copy_from(&(-b_next_t * r * skew(&(dt * w_dot)) * a_t));
    g_f.fixed_view_mut::<2, 3>(2, 3).copy_from(&(b_next_t * r));
    (g_x, g_f)
}

/// Manifold-specific projection block J (4x4) of one TS^2 state after an
/// update by the error components (dq, dw).
fn ts2_projection_partial(
    prior: &BundlePoint,
    post: &BundlePoint,
    dq: &Vector2<f64>,
    dw: &Vector2<f64>,
) -> SMatrix<f64, 4, 4> {
    let b_prior = tangent_basis(&SpherePoint::new(prior.q));
    let b_post_t = tangent_basis(&SpherePoint::new(post.q)).transpose();
    let rv = b_prior * dq;
    let r = rot_exp(&rv);
    let a_t = rot_jac_a(&rv).transpose();
    let qx2 = skew(&prior.q) * skew(&prior.q);

    let mut j = SMatrix::<f64, 4, 4>::zeros();
    j.fixed_view_mut::<2, 2>(0, 0)
        .copy_from(&(-b_post_t * r * qx2 * a_t * b_prior));
    j.fixed_view_mut::<2, 2>(2, 0)
        .copy_from(&(-b_post_t * r * skew(&(b_prior * dw)) * a_t * b_prior));
    j.fixed_view_mut::<2, 2>(2, 2)
        .copy_from(&(b_post_t * r * b_prior));
    j
}

/// Assembled manifold partials G_x (24x24) and G_f (24x30) for a predict
/// step from `prev` (posterior) to `next` (prior).
pub fn manifold_partials(
    prev: &SystemState,
    next: &SystemState,
    dt: f64,
    f: &SVector<f64, 30>,
) -> (SMatrix<f64, 24, 24>, SMatrix<f64, 24, 30>) {
    let mut g_x = SMatrix::<f64, 24, 24>::identity();
    let mut g_f = SMatrix::<f64, 24, 30>::zeros();
    g_f.fixed_view_mut::<6, 6>(0, 0).fill_with_identity();
    g_f.fixed_view_mut::<6, 6>(18, 24).fill_with_identity();
    let pairs = [(&prev.b0, &next.b0), (&prev.b1, &next.b1), (&prev.b2, &next.b2)];
    for (k, (pb, nb)) in pairs.into_iter().enumerate() {
        let w_dot = f.fixed_rows::<3>(9 + 6 * k).into_owned();
        let (bx, bf) = ts2_propagation_partials(pb, nb, dt, &w_dot);
        g_x.fixed_view_mut::<4, 4>(6 + 4 * k, 6 + 4 * k).copy_from(&bx);
        g_f.fixed_view_mut::<4, 6>(6 + 4 * k, 6 + 6 * k).copy_from(&bf);
    }
    (g_x, g_f)
}

/// Assembled projection matrix J (24x24) for an update by `dx` from the
/// prior `prior` to the posterior `post`.
pub fn projection_matrix(
    prior: &SystemState,
    post: &SystemState,
    dx: &SVector<f64, 24>,
) -> SMatrix<f64, 24, 24> {
    let mut j = SMatrix::<f64, 24, 24>::identity();
    let pairs = [(&prior.b0, &post.b0), (&prior.b1, &post.b1), (&prior.b2, &post.b2)];
    for (k, (pb, qb)) in pairs.into_iter().enumerate() {
        let i = 6 + 4 * k;
        let dq = Vector2::new(dx[i], dx[i + 1]);
        let dw = Vector2::new(dx[i + 2], dx[i + 3]);
        let blk = ts2_projection_partial(pb, qb, &dq, &dw);
        j.fixed_view_mut::<4, 4>(i, i).copy_from(&blk);
    }
    j
}

/// System-specific partials: df_d/d(delta x) (30x24) and df_d/dw (30x12).
pub fn system_partials(
    params: &SystemParams,
    x: &SystemState,
    u: &ControlInput,
) -> Result<(SMatrix<f64, 30, 24>, SMatrix<f64, 30, 12>), FilterError> {
    let p = params;
    let plant = x.to_plant();
    let q0 = x.b0.q;
    let q1 = x.b1.q;
    let q2 = x.b2.q;
    let w0 = x.b0.w;
    let w1 = x.b1.w;
    let w2 = x.b2.w;
    let q0x = skew(&q0);
    let q1x = skew(&q1);
    let q2x = skew(&q2);
    let e3 = Vec3::new(0.0, 0.0, 1.0);
    let chi1 = p.m1 * p.g * e3 + u.u1 + x.d_p1;
    let chi2 = p.m2 * p.g * e3 + u.u2 + x.d_p2;

    let m = crate::dynamics::mass_matrix(p, &plant.q0, &plant.q1, &plant.q2);
    let d = DisturbanceSet {
        d_p1: x.d_p1,
        d_p2: x.d_p2,
        ..Default::default()
    };
    let fvec = crate::dynamics::forcing_vector(p, &plant, u, &d, &ProcessNoise::default());
    let m_lu = m.lu();
    let iota = m_lu
        .solve(&fvec)
        .ok_or(FilterError::SingularMass { cond: f64::INFINITY })?;
    let i13 = iota.fixed_rows::<3>(0).into_owned();
    let i46 = iota.fixed_rows::<3>(3).into_owned();
    let i79 = iota.fixed_rows::<3>(6).into_owned();
    let i1012 = iota.fixed_rows::<3>(9).into_owned();

    // Ambient z layout (30): [p0 v0 q0 w0 q1 w1 q2 w2 d1 d2].
    // d(M iota)/dz at fixed iota.
    let mut dmi = SMatrix::<f64, 12, 30>::zeros();
    let set = |mtx: &mut SMatrix<f64, 12, 30>, r: usize, c: usize, b: Matrix3<f64>| {
        mtx.fixed_view_mut::<3, 3>(3 * r, c).copy_from(&b);
    };
    let xi = skew(&i13) * (p.m2 * p.rho2 - p.m1 * p.rho1)
        - (q1x * i79).cross_matrix() * (p.m1 * p.rho1 * p.l1)
        + (q2x * i1012).cross_matrix() * (p.m2 * p.rho2 * p.l2);
    set(&mut dmi, 0, 6, skew(&i46) * (p.m1 * p.rho1 - p.m2 * p.rho2));
    set(&mut dmi, 0, 12, skew(&i79) * (-p.m1 * p.l1));
    set(&mut dmi, 0, 18, skew(&i1012) * (-p.m2 * p.l2));
    set(&mut dmi, 1, 6, xi);
    set(&mut dmi, 1, 12, q0x * skew(&i79) * (-p.m1 * p.rho1 * p.l1));
    set(&mut dmi, 1, 18, q0x * skew(&i1012) * (p.m2 * p.rho2 * p.l2));
    set(&mut dmi, 2, 6, q1x * skew(&i46) * (-p.m1 * p.rho1));
    set(
        &mut dmi,
        2,
        12,
        skew(&i13) * p.m1 - (q0x * i46).cross_matrix() * (p.m1 * p.rho1),
    );
    set(&mut dmi, 3, 6, q2x * skew(&i46) * (p.m2 * p.rho2));
    set(
        &mut dmi,
        3,
        18,
        skew(&i13) * p.m2 + (q0x * i46).cross_matrix() * (p.m2 * p.rho2),
    );

    // dF/dz.
    let w0n2 = w0.norm_squared();
    let w1n2 = w1.norm_squared();
    let w2n2 = w2.norm_squared();
    let i3 = Matrix3::identity();
    let mut dfz = SMatrix::<f64, 12, 30>::zeros();
    set(
        &mut dfz,
        0,
        6,
        i3 * ((p.m1 * p.rho1 - p.m2 * p.rho2) * w0n2),
    );
    set(
        &mut dfz,
        0,
        9,
        (q0 * w0.transpose()) * (2.0 * (p.m1 * p.rho1 - p.m2 * p.rho2)),
    );
    set(&mut dfz, 0, 12, i3 * (-p.m1 * p.l1 * w1n2));
    set(&mut dfz, 0, 15, (q1 * w1.transpose()) * (-2.0 * p.m1 * p.l1));
    set(&mut dfz, 0, 18, i3 * (-p.m2 * p.l2 * w2n2));
    set(&mut dfz, 0, 21, (q2 * w2.transpose()) * (-2.0 * p.m2 * p.l2));
    set(&mut dfz, 0, 24, i3);
    set(&mut dfz, 0, 27, i3);

    set(
        &mut dfz,
        1,
        6,
        (chi2 - p.m2 * p.l2 * w2n2 * q2).cross_matrix() * p.rho2
            - (chi1 - p.m1 * p.l1 * w1n2 * q1).cross_matrix() * p.rho1,
    );
    set(&mut dfz, 1, 12, q0x * (-p.m1 * p.l1 * p.rho1 * w1n2));
    set(
        &mut dfz,
        1,
        15,
        q0x * q1 * w1.transpose() * (-2.0 * p.m1 * p.l1 * p.rho1),
    );
    set(&mut dfz, 1, 18, q0x * (p.m2 * p.l2 * p.rho2 * w2n2));
    set(
        &mut dfz,
        1,
        21,
        q0x * q2 * w2.transpose() * (2.0 * p.m2 * p.l2 * p.rho2),
    );
    set(&mut dfz, 1, 24, q0x * p.rho1);
    set(&mut dfz, 1, 27, q0x * (-p.rho2));

    set(&mut dfz, 2, 6, q1x * (-p.m1 * p.rho1 * w0n2));
    set(
        &mut dfz,
        2,
        9,
        q1x * q0 * w0.transpose() * (-2.0 * p.m1 * p.rho1),
    );
    set(
        &mut dfz,
        2,
        12,
        (chi1 + p.m1 * p.rho1 * w0n2 * q0).cross_matrix(),
    );
    set(&mut dfz, 2, 24, -q1x);

    set(&mut dfz, 3, 6, q2x * (p.m2 * p.rho2 * w0n2));
    set(
        &mut dfz,
        3,
        9,
        q2x * q0 * w0.transpose() * (2.0 * p.m2 * p.rho2),
    );
    set(
        &mut dfz,
        3,
        18,
        (chi2 - p.m2 * p.rho2 * w0n2 * q0).cross_matrix(),
    );
    set(&mut dfz, 3, 27, -q2x);

    // d(M^-1 F)/dz = M^-1 (dF/dz - d(M iota)/dz)
    let rhs = dfz - dmi;
    let mut dacc = SMatrix::<f64, 12, 30>::zeros();
    for c in 0..30 {
        let col = rhs.column(c).into_owned();
        let sol = m_lu.solve(&col).unwrap();
        dacc.set_column(c, &sol);
    }

    // Full df/dz (30x30): kinematic rows pick the angular velocities,
    // acceleration rows take dacc, disturbance rows are zero at w = 0.
    let mut dfdz = SMatrix::<f64, 30, 30>::zeros();
    dfdz.fixed_view_mut::<3, 3>(0, 3).fill_with_identity();
    dfdz.fixed_view_mut::<3, 30>(3, 0)
        .copy_from(&dacc.fixed_view::<3, 30>(0, 0));
    dfdz.fixed_view_mut::<3, 3>(6, 9).fill_with_identity();
    dfdz.fixed_view_mut::<3, 30>(9, 0)
        .copy_from(&dacc.fixed_view::<3, 30>(3, 0));
    dfdz.fixed_view_mut::<3, 3>(12, 15).fill_with_identity();
    dfdz.fixed_view_mut::<3, 30>(15, 0)
        .copy_from(&dacc.fixed_view::<3, 30>(6, 0));
    dfdz.fixed_view_mut::<3, 3>(18, 21).fill_with_identity();
    dfdz.fixed_view_mut::<3, 30>(21, 0)
        .copy_from(&dacc.fixed_view::<3, 30>(9, 0));

    let df_ddx = dfdz * boxplus_jacobian(x);

    // df/dw: acceleration rows get M^-1 blkdiag(I3, q0^x, 0), disturbance
    // rows pass w_d through directly.
    let mut dfw_rhs = SMatrix::<f64, 12, 12>::zeros();
    dfw_rhs.fixed_view_mut::<3, 3>(0, 0).fill_with_identity();
    dfw_rhs.fixed_view_mut::<3, 3>(3, 3).copy_from(&q0x);
    let mut daccw = SMatrix::<f64, 12, 12>::zeros();
    for c in 0..12 {
        let col = dfw_rhs.column(c).into_owned();
        let sol = m_lu.solve(&col).unwrap();
        daccw.set_column(c, &sol);
    }
    let mut df_dw = SMatrix::<f64, 30, 12>::zeros();
    df_dw
        .fixed_view_mut::<3, 12>(3, 0)
        .copy_from(&daccw.fixed_view::<3, 12>(0, 0));
    df_dw
        .fixed_view_mut::<3, 12>(9, 0)
        .copy_from(&daccw.fixed_view::<3, 12>(3, 0));
    df_dw
        .fixed_view_mut::<3, 12>(15, 0)
        .copy_from(&daccw.fixed_view::<3, 12>(6, 0));
    df_dw
        .fixed_view_mut::<3, 12>(21, 0)
        .copy_from(&daccw.fixed_view::<3, 12>(9, 0));
    df_dw.fixed_view_mut::<3, 3>(24, 6).fill_with_identity();
    df_dw.fixed_view_mut::<3, 3>(27, 9).fill_with_identity();

    Ok((df_ddx, df_dw))
}

/// Predicted measurement h(x) = [p1; p2; v1; v2].
pub fn predict_measurement(params: &SystemParams, x: &SystemState) -> SVector<f64, 12> {
    let (p1, v1, p2, v2) = drone_kinematics(params, &x.to_plant());
    let mut z = SVector::<f64, 12>::zeros();
    z.fixed_rows_mut::<3>(0).copy_from(&p1);
    z.fixed_rows_mut::<3>(3).copy_from(&p2);
    z.fixed_rows_mut::<3>(6).copy_from(&v1);
    z.fixed_rows_mut::<3>(9).copy_from(&v2);
    z
}

/// Measurement Jacobian H = dh/dz * d(x [+] dx)/d dx, 12x24.
pub fn measurement_jacobian(params: &SystemParams, x: &SystemState) -> SMatrix<f64, 12, 24> {
    let p = params;
    let i3 = Matrix3::identity();
    let mut dhz = SMatrix::<f64, 12, 30>::zeros();
    let set = |mtx: &mut SMatrix<f64, 12, 30>, r: usize, c: usize, b: Matrix3<f64>| {
        mtx.fixed_view_mut::<3, 3>(3 * r, c).copy_from(&b);
    };
    // p1 row
    set(&mut dhz, 0, 0, i3);
    set(&mut dhz, 0, 6, i3 * p.rho1);
    set(&mut dhz, 0, 12, i3 * (-p.l1));
    // p2 row
    set(&mut dhz, 1, 0, i3);
    set(&mut dhz, 1, 6, i3 * (-p.rho2));
    set(&mut dhz, 1, 18, i3 * (-p.l2));
    // v1 row
    set(&mut dhz, 2, 3, i3);
    set(&mut dhz, 2, 6, skew(&x.b0.w) * p.rho1);
    set(&mut dhz, 2, 9, skew(&x.b0.q) * (-p.rho1));
    set(&mut dhz, 2, 12, skew(&x.b1.w) * (-p.l1));
    set(&mut dhz, 2, 15, skew(&x.b1.q) * p.l1);
    // v2 row
    set(&mut dhz, 3, 3, i3);
    set(&mut dhz, 3, 6, skew(&x.b0.w) * (-p.rho2));
    set(&mut dhz, 3, 9, skew(&x.b0.q) * p.rho2);
    set(&mut dhz, 3, 18, skew(&x.b2.w) * (-p.l2));
    set(&mut dhz, 3, 21, skew(&x.b2.q) * p.l2);

    dhz * boxplus_jacobian(x)
}

fn symmetrize(p: &mut DMatrix<f64>) {
    let pt = p.transpose();
    *p += pt;
    *p *= 0.5;
}

/// Clamp tiny negative eigenvalues introduced by round-off.
fn clamp_psd(p: &mut DMatrix<f64>) {
    let tr = p.trace();
    let eig = nalgebra::SymmetricEigen::new(p.clone());
    let min = eig.eigenvalues.min();
    if min < 0.0 && min > -1e-10 * tr.abs().max(1.0) {
        let mut vals = eig.eigenvalues;
        for v in vals.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        let v = &eig.eigenvectors;
        *p = v * DMatrix::from_diagonal(&vals) * v.transpose();
    }
}

/// Propagate the state estimate and covariance by dt.
pub fn predict(
    params: &SystemParams,
    fs: &FilterState,
    u: &ControlInput,
    dt: f64,
    noise: &NoiseConfig,
    cfg: &FilterConfig,
) -> Result<FilterState, FilterError> {
    let f = f_d(params, &fs.x, u, &SVector::zeros())?;
    let mut x_next = fs.x.oplus(&(dt * f));
    if !cfg.estimate_disturbances {
        // the baseline never moves its (fixed) disturbance states
        x_next.d_p1 = fs.x.d_p1;
        x_next.d_p2 = fs.x.d_p2;
    }
    let (g_x, g_f) = manifold_partials(&fs.x, &x_next, dt, &f);
    let (df_ddx, df_dw) = system_partials(params, &fs.x, u)?;
    let f_x_full = g_x + dt * g_f * df_ddx;
    let f_w_full = dt * g_f * df_dw;

    let n = cfg.error_dim();
    let f_x = DMatrix::from_fn(n, n, |i, j| f_x_full[(i, j)]);
    let f_w = DMatrix::from_fn(n, 12, |i, j| f_w_full[(i, j)]);
    let q = DMatrix::from_fn(12, 12, |i, j| noise.q[(i, j)]);
    let mut p = &f_x * &fs.p * f_x.transpose() + &f_w * q * f_w.transpose();
    symmetrize(&mut p);
    Ok(FilterState { x: x_next, p })
}

/// Measurement update with covariance projection.
pub fn update(
    params: &SystemParams,
    fs: &FilterState,
    z: &Measurement,
    noise: &NoiseConfig,
    cfg: &FilterConfig,
) -> Result<FilterState, FilterError> {
    let n = cfg.error_dim();
    let h_full = measurement_jacobian(params, &fs.x);
    let h = DMatrix::from_fn(12, n, |i, j| h_full[(i, j)]);
    let r = DMatrix::from_fn(12, 12, |i, j| noise.r[(i, j)]);
    let resid_s = z.z - predict_measurement(params, &fs.x);
    let resid = DVector::from_fn(12, |i, _| resid_s[i]);

    let s = &h * &fs.p * h.transpose() + r;
    let s_chol = s
        .clone()
        .cholesky()
        .expect("innovation covariance not positive definite");
    if let Some(gate) = cfg.gate {
        let d2 = resid.dot(&s_chol.solve(&resid));
        if d2 > gate {
            return Err(FilterError::InnovationGateExceeded {
                distance: d2,
                gate,
            });
        }
    }
    let k = &fs.p * h.transpose() * s_chol.inverse();
    let dx = &k * &resid;

    let mut dx_full = SVector::<f64, 24>::zeros();
    for i in 0..n {
        dx_full[i] = dx[i];
    }
    let x_post = fs.x.boxplus(&dx_full);

    let mut p = (DMatrix::identity(n, n) - &k * &h) * &fs.p;
    let j_full = projection_matrix(&fs.x, &x_post, &dx_full);
    let j = DMatrix::from_fn(n, n, |i, jx| j_full[(i, jx)]);
    p = &j * p * j.transpose();
    symmetrize(&mut p);
    clamp_psd(&mut p);
    Ok(FilterState { x: x_post, p })
}

/// One full predict + update cycle.
pub fn filter_step(
    params: &SystemParams,
    fs: &FilterState,
    u: &ControlInput,
    z: &Measurement,
    dt: f64,
    noise: &NoiseConfig,
    cfg: &FilterConfig,
) -> Result<FilterState, FilterError> {
    let prior = predict(params, fs, u, dt, noise, cfg)?;
    update(params, &prior, z, noise, cfg)
}
