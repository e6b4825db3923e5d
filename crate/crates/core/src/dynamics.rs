//! Full nonlinear multibody dynamics of the two-drone-bar system.
//!
//! The system stacks the payload translation, the bar attitude, and the two
//! cable directions into the compact form `M * [v0dot; w0dot; w1dot; w2dot] = F`,
//! where `M` is a configuration-dependent 12x12 matrix. The bar has mass `m0`
//! and isotropic inertia `J0`; drone `i` of mass `m_i` hangs a taut massless
//! cable of length `l_i` from the bar tip at signed offset `rho_i` along the
//! bar axis `q0`.

use crate::error::DynamicsError;
use crate::manifold::{rot_exp, SpherePoint};
use crate::{skew, Mat3, Vec3};
use nalgebra::{SMatrix, SVector};

/// Physical parameters of the two-drone-bar system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    /// Bar (payload) mass [kg].
    pub m0: f64,
    /// Drone 1 mass [kg].
    pub m1: f64,
    /// Drone 2 mass [kg].
    pub m2: f64,
    /// Bar rotational inertia about its center, isotropic [kg m^2].
    pub j0: f64,
    /// Attachment offset of cable 1 along +q0 [m].
    pub rho1: f64,
    /// Attachment offset of cable 2 along -q0 [m].
    pub rho2: f64,
    /// Cable 1 length [m].
    pub l1: f64,
    /// Cable 2 length [m].
    pub l2: f64,
    /// Gravity [m/s^2], NED (+e3 down).
    pub g: f64,
}

impl SystemParams {
    /// Benchmark parameter set used throughout the simulations.
    pub fn benchmark() -> Self {
        SystemParams {
            m0: 0.445,
            m1: 0.900,
            m2: 0.900,
            j0: 0.148,
            rho1: 1.0,
            rho2: 1.0,
            l1: 1.0,
            l2: 1.0,
            g: crate::GRAVITY,
        }
    }

    /// Total mass m0 + m1 + m2.
    pub fn m_total(&self) -> f64 {
        self.m0 + self.m1 + self.m2
    }

    /// Effective inertia J0 + m1 rho1^2 + m2 rho2^2.
    pub fn j_bar(&self) -> f64 {
        self.j0 + self.m1 * self.rho1 * self.rho1 + self.m2 * self.rho2 * self.rho2
    }
}

/// Full plant state on (R^3)^2 x (TS^2)^3.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantState {
    /// Payload center position [m].
    pub p0: Vec3,
    /// Payload center velocity [m/s].
    pub v0: Vec3,
    /// Bar axis direction (unit).
    pub q0: SpherePoint,
    /// Bar angular velocity, perpendicular to q0 [rad/s].
    pub w0: Vec3,
    /// Cable 1 direction (unit, from drone to attachment in NED sense).
    pub q1: SpherePoint,
    /// Cable 1 angular velocity [rad/s].
    pub w1: Vec3,
    /// Cable 2 direction (unit).
    pub q2: SpherePoint,
    /// Cable 2 angular velocity [rad/s].
    pub w2: Vec3,
}

impl PlantState {
    /// Re-establish the manifold invariants: unit directions and tangent
    /// angular velocities.
    pub fn normalized(&self) -> Self {
        let fix = |q: &SpherePoint, w: &Vec3| {
            let qn = SpherePoint::from_unnormalized(q.vector());
            let wn = w - qn.vector() * qn.vector().dot(w);
            (qn, wn)
        };
        let (q0, w0) = fix(&self.q0, &self.w0);
        let (q1, w1) = fix(&self.q1, &self.w1);
        let (q2, w2) = fix(&self.q2, &self.w2);
        PlantState {
            p0: self.p0,
            v0: self.v0,
            q0,
            w0,
            q1,
            w1,
            q2,
            w2,
        }
    }
}

/// Lumped disturbances on the system.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DisturbanceSet {
    /// Force disturbance on the payload translation [N].
    pub d_p0: Vec3,
    /// Torque-generating disturbance on the payload rotation, perpendicular
    /// to q0 [N m / m].
    pub d_q0: Vec3,
    /// Force disturbance on drone 1 [N].
    pub d_p1: Vec3,
    /// Force disturbance on drone 2 [N].
    pub d_p2: Vec3,
}

impl DisturbanceSet {
    /// Project d_q0 onto the plane perpendicular to q0, which the model
    /// requires structurally.
    pub fn projected(&self, q0: &SpherePoint) -> Self {
        let q = q0.vector();
        DisturbanceSet {
            d_q0: self.d_q0 - q * q.dot(&self.d_q0),
            ..*self
        }
    }
}

/// Desired thrusts of the drones, expressed in the inertial frame [N].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControlInput {
    pub u1: Vec3,
    pub u2: Vec3,
}

/// Process noise channels on the payload translational and rotational
/// dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ProcessNoise {
    pub w_p0: Vec3,
    pub w_q0: Vec3,
}

/// Solved generalized accelerations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Accelerations {
    pub v0_dot: Vec3,
    pub w0_dot: Vec3,
    pub w1_dot: Vec3,
    pub w2_dot: Vec3,
}

fn set_block(m: &mut SMatrix<f64, 12, 12>, i: usize, j: usize, b: &Mat3) {
    m.fixed_view_mut::<3, 3>(3 * i, 3 * j).copy_from(b);
}

/// The 12x12 generalized mass matrix of the compact form.
pub fn mass_matrix(
    params: &SystemParams,
    q0: &SpherePoint,
    q1: &SpherePoint,
    q2: &SpherePoint,
) -> SMatrix<f64, 12, 12> {
    let p = params;
    let q0x = skew(&q0.vector());
    let q1x = skew(&q1.vector());
    let q2x = skew(&q2.vector());
    let i3 = Mat3::identity();

    let mut m = SMatrix::<f64, 12, 12>::zeros();
    set_block(&mut m, 0, 0, &(i3 * p.m_total()));
    set_block(&mut m, 0, 1, &(q0x * (p.m2 * p.rho2 - p.m1 * p.rho1)));
    set_block(&mut m, 0, 2, &(q1x * (p.m1 * p.l1)));
    set_block(&mut m, 0, 3, &(q2x * (p.m2 * p.l2)));

    set_block(&mut m, 1, 0, &(q0x * (p.m1 * p.rho1 - p.m2 * p.rho2)));
    set_block(&mut m, 1, 1, &(i3 * p.j_bar()));
    set_block(&mut m, 1, 2, &(q0x * q1x * (p.m1 * p.rho1 * p.l1)));
    set_block(&mut m, 1, 3, &(q0x * q2x * (-p.m2 * p.rho2 * p.l2)));

    set_block(&mut m, 2, 0, &(q1x * (-p.m1)));
    set_block(&mut m, 2, 1, &(q1x * q0x * (p.m1 * p.rho1)));
    set_block(&mut m, 2, 2, &(i3 * (p.m1 * p.l1)));

    set_block(&mut m, 3, 0, &(q2x * (-p.m2)));
    set_block(&mut m, 3, 1, &(q2x * q0x * (-p.m2 * p.rho2)));
    set_block(&mut m, 3, 3, &(i3 * (p.m2 * p.l2)));
    m
}

/// The 12-vector right-hand side of the compact form, including control,
/// disturbances, and process noise. With `d` and `w` zero this is the nominal
/// forcing.
pub fn forcing_vector(
    params: &SystemParams,
    state: &PlantState,
    u: &ControlInput,
    d: &DisturbanceSet,
    w: &ProcessNoise,
) -> SVector<f64, 12> {
    let p = params;
    let d = d.projected(&state.q0);
    let e3 = Vec3::new(0.0, 0.0, 1.0);
    let q0 = state.q0.vector();
    let q1 = state.q1.vector();
    let q2 = state.q2.vector();
    let w0n2 = state.w0.norm_squared();
    let w1n2 = state.w1.norm_squared();
    let w2n2 = state.w2.norm_squared();
    let f1 = u.u1 + d.d_p1;
    let f2 = u.u2 + d.d_p2;

    let row0 = -(p.m1 * (p.l1 * w1n2 * q1 - p.rho1 * w0n2 * q0)
        + p.m2 * (p.l2 * w2n2 * q2 + p.rho2 * w0n2 * q0))
        + p.m_total() * p.g * e3
        + f1
        + f2
        + d.d_p0
        + w.w_p0;
    let row1 = q0.cross(
        &((p.m1 * p.g * e3 - p.m1 * p.l1 * w1n2 * q1 + f1) * p.rho1
            - (p.m2 * p.g * e3 - p.m2 * p.l2 * w2n2 * q2 + f2) * p.rho2),
    ) + q0.cross(&(d.d_q0 + w.w_q0));
    let row2 = -q1.cross(&(p.m1 * p.g * e3 + p.m1 * p.rho1 * w0n2 * q0 + f1));
    let row3 = -q2.cross(&(p.m2 * p.g * e3 - p.m2 * p.rho2 * w0n2 * q0 + f2));

    let mut f = SVector::<f64, 12>::zeros();
    f.fixed_rows_mut::<3>(0).copy_from(&row0);
    f.fixed_rows_mut::<3>(3).copy_from(&row1);
    f.fixed_rows_mut::<3>(6).copy_from(&row2);
    f.fixed_rows_mut::<3>(9).copy_from(&row3);
    f
}

/// Solve `M a = F` for the generalized accelerations, with a condition-number
/// guard on `M` and tangency projection of the angular accelerations.
pub fn accelerations(
    params: &SystemParams,
    state: &PlantState,
    u: &ControlInput,
    d: &DisturbanceSet,
    w: &ProcessNoise,
) -> Result<Accelerations, DynamicsError> {
    let m = mass_matrix(params, &state.q0, &state.q1, &state.q2);
    let f = forcing_vector(params, state, u, d, w);

    let svd = m.svd(true, true);
    let smax = svd.singular_values[0];
    let smin = svd.singular_values[11];
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if cond > 1e12 {
        return Err(DynamicsError::SingularMass { cond });
    }
    let a = svd.solve(&f, 0.0).expect("svd solve");

    let proj = |wd: Vec3, q: &SpherePoint| wd - q.vector() * q.vector().dot(&wd);
    Ok(Accelerations {
        v0_dot: a.fixed_rows::<3>(0).into_owned(),
        w0_dot: proj(a.fixed_rows::<3>(3).into_owned(), &state.q0),
        w1_dot: proj(a.fixed_rows::<3>(6).into_owned(), &state.q1),
        w2_dot: proj(a.fixed_rows::<3>(9).into_owned(), &state.q2),
    })
}

/// Ambient time derivative of the full state (used by the RK4 stages).
#[derive(Debug, Clone, Copy)]
pub struct StateDerivative {
    pub p0_dot: Vec3,
    pub v0_dot: Vec3,
    pub q0_dot: Vec3,
    pub w0_dot: Vec3,
    pub q1_dot: Vec3,
    pub w1_dot: Vec3,
    pub q2_dot: Vec3,
    pub w2_dot: Vec3,
}

/// Evaluate the full kinematics + dynamics vector field in ambient
/// coordinates.
pub fn state_derivative(
    params: &SystemParams,
    state: &PlantState,
    u: &ControlInput,
    d: &DisturbanceSet,
    w: &ProcessNoise,
) -> Result<StateDerivative, DynamicsError> {
    let a = accelerations(params, state, u, d, w)?;
    Ok(StateDerivative {
        p0_dot: state.v0,
        v0_dot: a.v0_dot,
        q0_dot: state.w0.cross(&state.q0.vector()),
        w0_dot: a.w0_dot,
        q1_dot: state.w1.cross(&state.q1.vector()),
        w1_dot: a.w1_dot,
        q2_dot: state.w2.cross(&state.q2.vector()),
        w2_dot: a.w2_dot,
    })
}

/// Integration scheme for [`step`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntegrationMethod {
    /// One-step manifold Euler: retraction along the rotation generated by
    /// the angular velocity (the discretization the filter assumes).
    Euler,
    /// Classical RK4 in ambient coordinates with renormalization and tangent
    /// projection after the full step (ground-truth integrator).
    Rk4,
}

fn add_scaled(s: &PlantState, k: &StateDerivative, h: f64) -> PlantState {
    PlantState {
        p0: s.p0 + h * k.p0_dot,
        v0: s.v0 + h * k.v0_dot,
        q0: SpherePoint::from_unnormalized(s.q0.vector() + h * k.q0_dot),
        w0: s.w0 + h * k.w0_dot,
        q1: SpherePoint::from_unnormalized(s.q1.vector() + h * k.q1_dot),
        w1: s.w1 + h * k.w1_dot,
        q2: SpherePoint::from_unnormalized(s.q2.vector() + h * k.q2_dot),
        w2: s.w2 + h * k.w2_dot,
    }
}

/// Advance the plant by `dt`.
pub fn step(
    params: &SystemParams,
    state: &PlantState,
    u: &ControlInput,
    d: &DisturbanceSet,
    dt: f64,
    method: IntegrationMethod,
) -> Result<PlantState, DynamicsError> {
    let w = ProcessNoise::default();
    match method {
        IntegrationMethod::Euler => {
            let a = accelerations(params, state, u, d, &w)?;
            let roll = |q: &SpherePoint, wv: &Vec3, wd: &Vec3| {
                let r = rot_exp(&(dt * wv));
                let qn = SpherePoint::from_unnormalized(r * q.vector());
                let wn = wv + r * (dt * wd);
                let wn = wn - qn.vector() * qn.vector().dot(&wn);
                (qn, wn)
            };
            let (q0, w0) = roll(&state.q0, &state.w0, &a.w0_dot);
            let (q1, w1) = roll(&state.q1, &state.w1, &a.w1_dot);
            let (q2, w2) = roll(&state.q2, &state.w2, &a.w2_dot);
            Ok(PlantState {
                p0: state.p0 + dt * state.v0,
                v0: state.v0 + dt * a.v0_dot,
                q0,
                w0,
                q1,
                w1,
                q2,
                w2,
            })
        }
        IntegrationMethod::Rk4 => {
            let k1 = state_derivative(params, state, u, d, &w)?;
            let s2 = add_scaled(state, &k1, dt / 2.0);
            let k2 = state_derivative(params, &s2, u, d, &w)?;
            let s3 = add_scaled(state, &k2, dt / 2.0);
            let k3 = state_derivative(params, &s3, u, d, &w)?;
            let s4 = add_scaled(state, &k3, dt);
            let k4 = state_derivative(params, &s4, u, d, &w)?;
            let h = dt / 6.0;
            let combo = StateDerivative {
                p0_dot: k1.p0_dot + 2.0 * k2.p0_dot + 2.0 * k3.p0_dot + k4.p0_dot,
                v0_dot: k1.v0_dot + 2.0 * k2.v0_dot + 2.0 * k3.v0_dot + k4.v0_dot,
                q0_dot: k1.q0_dot + 2.0 * k2.q0_dot + 2.0 * k3.q0_dot + k4.q0_dot,
                w0_dot: k1.w0_dot + 2.0 * k2.w0_dot + 2.0 * k3.w0_dot + k4.w0_dot,
                q1_dot: k1.q1_dot + 2.0 * k2.q1_dot + 2.0 * k3.q1_dot + k4.q1_dot,
                w1_dot: k1.w1_dot + 2.0 * k2.w1_dot + 2.0 * k3.w1_dot + k4.w1_dot,
                q2_dot: k1.q2_dot + 2.0 * k2.q2_dot + 2.0 * k3.q2_dot + k4.q2_dot,
                w2_dot: k1.w2_dot + 2.0 * k2.w2_dot + 2.0 * k3.w2_dot + k4.w2_dot,
            };
            Ok(add_scaled(state, &combo, h).normalized())
        }
    }
}

/// Positions and velocities of the two drones from the payload-side state.
pub fn drone_kinematics(params: &SystemParams, state: &PlantState) -> (Vec3, Vec3, Vec3, Vec3) {
    let q0 = state.q0.vector();
    let q1 = state.q1.vector();
    let q2 = state.q2.vector();
    let p1 = state.p0 + params.rho1 * q0 - params.l1 * q1;
    let p2 = state.p0 - params.rho2 * q0 - params.l2 * q2;
    let v1 = state.v0 + params.rho1 * state.w0.cross(&q0) - params.l1 * state.w1.cross(&q1);
    let v2 = state.v0 - params.rho2 * state.w0.cross(&q0) - params.l2 * state.w2.cross(&q2);
    (p1, v1, p2, v2)
}

/// Equilibrium cable forces under steady disturbances, parameterized by the
/// internal-force magnitude `n0` along the bar axis.
pub fn equilibrium_cable_forces(
    params: &SystemParams,
    q0e: &SpherePoint,
    d_p0e: &Vec3,
    d_q0e: &Vec3,
    n0: f64,
) -> (Vec3, Vec3) {
    let e3 = Vec3::new(0.0, 0.0, 1.0);
    let q = q0e.vector();
    let d_q = d_q0e - q * q.dot(d_q0e);
    let denom = params.rho1 + params.rho2;
    let weight = params.m0 * params.g * e3 + d_p0e;
    let mu1 = (params.rho2 * weight + d_q - n0 * q) / denom;
    let mu2 = (params.rho1 * weight - d_q + n0 * q) / denom;
    (mu1, mu2)
}

/// Total mechanical energy: point-mass kinetic terms plus the bar's
/// rotational term, and NED gravitational potential (z down).
pub fn total_energy(params: &SystemParams, state: &PlantState) -> f64 {
    let (p1, v1, p2, v2) = drone_kinematics(params, state);
    let kinetic = 0.5 * params.m0 * state.v0.norm_squared()
        + 0.5 * params.j0 * state.w0.norm_squared()
        + 0.5 * params.m1 * v1.norm_squared()
        + 0.5 * params.m2 * v2.norm_squared();
    let potential =
        -params.g * (params.m0 * state.p0.z + params.m1 * p1.z + params.m2 * p2.z);
    kinetic + potential
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    fn e(x: f64, y: f64, z: f64) -> Vec3 {
        Vector3::new(x, y, z)
    }

    fn rest_state(q0: Vec3, q1: Vec3, q2: Vec3) -> PlantState {
        PlantState {
            p0: Vec3::zeros(),
            v0: Vec3::zeros(),
            q0: SpherePoint::from_unnormalized(q0),
            w0: Vec3::zeros(),
            q1: SpherePoint::from_unnormalized(q1),
            w1: Vec3::zeros(),
            q2: SpherePoint::from_unnormalized(q2),
            w2: Vec3::zeros(),
        }
    }

    #[test]
    fn mass_matrix_top_left_block_is_total_mass() {
        let p = SystemParams::benchmark();
        let m = mass_matrix(
            &p,
            &SpherePoint::from_unnormalized(e(1.0, 0.0, 0.0)),
            &SpherePoint::from_unnormalized(e(0.0, 0.0, 1.0)),
            &SpherePoint::from_unnormalized(e(0.0, 0.0, 1.0)),
        );
        let tl = m.fixed_view::<3, 3>(0, 0);
        assert!((tl - Mat3::identity() * 2.245).norm() < 1e-12);
    }

    #[test]
    fn mass_matrix_skew_coupling_blocks() {
        let p = SystemParams::benchmark();
        let q0 = SpherePoint::from_unnormalized(e(0.3, -0.2, 0.9));
        let q1 = SpherePoint::from_unnormalized(e(0.1, 0.2, 1.0));
        let q2 = SpherePoint::from_unnormalized(e(-0.1, 0.3, 0.95));
        let m = mass_matrix(&p, &q0, &q1, &q2);
        let b01 = m.fixed_view::<3, 3>(0, 3).into_owned();
        let b10 = m.fixed_view::<3, 3>(3, 0).into_owned();
        assert!((b01 + b10).norm() < 1e-14);
    }

    #[test]
    fn gravity_drop_accelerates_downward() {
        let p = SystemParams::benchmark();
        let s = rest_state(e(1.0, 0.0, 0.0), e(0.0, 0.0, 1.0), e(0.0, 0.0, 1.0));
        let a = accelerations(
            &p,
            &s,
            &ControlInput::default(),
            &DisturbanceSet::default(),
            &ProcessNoise::default(),
        )
        .unwrap();
        // free fall in NED: +g along e3
        assert!((a.v0_dot - e(0.0, 0.0, p.g)).norm() < 1e-9);
        assert!(a.w0_dot.norm() < 1e-9);
    }

    #[test]
    fn hover_equilibrium_has_zero_accelerations() {
        let p = SystemParams::benchmark();
        let q0 = SpherePoint::from_unnormalized(e(1.0, 0.0, 0.0));
        let (mu1, mu2) = equilibrium_cable_forces(&p, &q0, &Vec3::zeros(), &Vec3::zeros(), 0.0);
        // cables align with the equilibrium forces
        let s = rest_state(q0.vector(), mu1.normalize(), mu2.normalize());
        let e3 = e(0.0, 0.0, 1.0);
        let u = ControlInput {
            u1: -mu1 - p.m1 * p.g * e3,
            u2: -mu2 - p.m2 * p.g * e3,
        };
        let a = accelerations(&p, &s, &u, &DisturbanceSet::default(), &ProcessNoise::default())
            .unwrap();
        assert!(a.v0_dot.norm() < 1e-9, "v0dot {}", a.v0_dot.norm());
        assert!(a.w0_dot.norm() < 1e-9);
        assert!(a.w1_dot.norm() < 1e-9);
        assert!(a.w2_dot.norm() < 1e-9);
    }

    #[test]
    fn equilibrium_forces_reference_values() {
        let p = SystemParams::benchmark();
        let q0 = SpherePoint::from_unnormalized(e(1.0, 0.0, 0.0));
        let (mu1, mu2) = equilibrium_cable_forces(&p, &q0, &Vec3::zeros(), &Vec3::zeros(), 0.0);
        // 0.445 * 9.81 / 2 = 2.182725
        assert!((mu1 - e(0.0, 0.0, 2.182725)).norm() < 1e-9);
        assert!((mu2 - mu1).norm() < 1e-12);
        // moment balance
        let d_q = Vec3::zeros();
        let q = q0.vector();
        let res = q.cross(&(p.rho1 * mu1 - p.rho2 * mu2 - d_q));
        assert!(res.norm() < 1e-12);
    }

    #[test]
    fn equilibrium_n0_changes_only_axial_components() {
        let p = SystemParams::benchmark();
        let q0 = SpherePoint::from_unnormalized(e(0.3, 0.4, -0.1));
        let dp = e(0.2, -0.1, 0.3);
        let dq = {
            let raw = e(0.5, 0.1, -0.2);
            raw - q0.vector() * q0.vector().dot(&raw)
        };
        let (a1, a2) = equilibrium_cable_forces(&p, &q0, &dp, &dq, 0.0);
        let (b1, b2) = equilibrium_cable_forces(&p, &q0, &dp, &dq, 1.7);
        let q = q0.vector();
        let perp = |v: Vec3| v - q * q.dot(&v);
        assert!((perp(a1) - perp(b1)).norm() < 1e-12);
        assert!((perp(a2) - perp(b2)).norm() < 1e-12);
        // balance: mu1 + mu2 = m0 g e3 + dp
        assert!((b1 + b2 - p.m0 * p.g * e(0.0, 0.0, 1.0) - dp).norm() < 1e-12);
    }

    #[test]
    fn disturbance_equivalence_on_drone_channel() {
        let p = SystemParams::benchmark();
        let mut s = rest_state(e(0.9, 0.1, -0.2), e(0.05, -0.1, 1.0), e(-0.02, 0.2, 0.9));
        s.v0 = e(0.1, -0.3, 0.2);
        s.w0 = s.q0.vector().cross(&e(0.4, 0.1, -0.2));
        s.w1 = s.q1.vector().cross(&e(-0.1, 0.2, 0.3));
        s.w2 = s.q2.vector().cross(&e(0.2, -0.2, 0.1));
        let d_p1 = e(1.0, -1.0, 4.0);
        let base_u = ControlInput {
            u1: e(2.0, 0.5, -12.0),
            u2: e(-1.0, 0.2, -11.0),
        };
        let a = accelerations(
            &p,
            &s,
            &base_u,
            &DisturbanceSet {
                d_p1,
                ..Default::default()
            },
            &ProcessNoise::default(),
        )
        .unwrap();
        let folded = ControlInput {
            u1: base_u.u1 + d_p1,
            u2: base_u.u2,
        };
        let b = accelerations(
            &p,
            &s,
            &folded,
            &DisturbanceSet::default(),
            &ProcessNoise::default(),
        )
        .unwrap();
        assert_eq!(a.v0_dot, b.v0_dot);
        assert_eq!(a.w0_dot, b.w0_dot);
        assert_eq!(a.w1_dot, b.w1_dot);
        assert_eq!(a.w2_dot, b.w2_dot);
    }

    #[test]
    fn solve_residual_is_tiny() {
        let p = SystemParams::benchmark();
        let mut s = rest_state(e(0.5, 0.5, 0.1), e(0.2, 0.0, 1.0), e(0.0, -0.3, 1.0));
        s.w0 = s.q0.vector().cross(&e(1.0, 2.0, 3.0));
        s.w1 = s.q1.vector().cross(&e(-1.0, 0.5, 0.2));
        let u = ControlInput {
            u1: e(1.0, 2.0, -10.0),
            u2: e(-2.0, 1.0, -9.0),
        };
        let d = DisturbanceSet {
            d_p0: e(0.1, 0.2, 0.3),
            d_q0: e(0.0, 0.1, -0.1),
            d_p1: e(1.0, -1.0, 4.0),
            d_p2: e(1.0, 1.0, 2.0),
        };
        let w = ProcessNoise::default();
        let m = mass_matrix(&p, &s.q0, &s.q1, &s.q2);
        let f = forcing_vector(&p, &s, &u, &d, &w);
        // compare against the unprojected solve
        let a = m.svd(true, true).solve(&f, 0.0).unwrap();
        assert!((m * a - f).norm() <= 1e-10 * (1.0 + f.norm()));
    }

    #[test]
    fn energy_at_rest_is_potential_only() {
        let p = SystemParams::benchmark();
        let s = rest_state(e(1.0, 0.0, 0.0), e(0.0, 0.0, 1.0), e(0.0, 0.0, 1.0));
        let ev = total_energy(&p, &s);
        // drones at z = -l: potential -g*(m1+m2)*(-1) = +g*1.8
        let expect = p.g * (p.m1 + p.m2);
        assert!((ev - expect).abs() < 1e-12);
    }

    #[test]
    fn drone_positions_benchmark_initial_state() {
        let p = SystemParams::benchmark();
        let ang = core::f64::consts::PI / 18.0;
        let tilt = e(0.0, -libm::sin(ang), libm::cos(ang));
        let s = PlantState {
            p0: e(0.03, -0.05, -0.03),
            v0: Vec3::zeros(),
            q0: SpherePoint::from_unnormalized(e(1.0, 0.0, 0.0)),
            w0: Vec3::zeros(),
            q1: SpherePoint::from_unnormalized(tilt),
            w1: Vec3::zeros(),
            q2: SpherePoint::from_unnormalized(tilt),
            w2: Vec3::zeros(),
        };
        let (p1, v1, p2, v2) = drone_kinematics(&p, &s);
        assert!((p1 - e(1.03, -0.05 + libm::sin(ang), -0.03 - libm::cos(ang))).norm() < 1e-12);
        assert!((p1.x - 1.03).abs() < 1e-12);
        assert!((p1.y - 0.1236).abs() < 1e-4);
        assert!((p1.z - (-1.0148)).abs() < 1e-3);
        assert!((p2.x - (-0.97)).abs() < 1e-12);
        assert!(v1.norm() < 1e-15 && v2.norm() < 1e-15);
    }
}
