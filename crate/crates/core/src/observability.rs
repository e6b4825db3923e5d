//! Linearized observability analysis of the reduced payload model.
//!
//! The reduced model keeps the payload pose states and the four lumped
//! disturbance channels, with the drone-side quantities folded into known
//! inputs. Each disturbance subset yields a linear time-invariant pair
//! (A, C) at an equilibrium; the observability rank criterion decides which
//! subsets leave the payload pose observable.

use crate::dynamics::{equilibrium_cable_forces, SystemParams};
use crate::error::RankError;
use crate::manifold::SpherePoint;
use crate::{skew, Vec3};
use alloc::vec::Vec;
use nalgebra::{DMatrix, SMatrix, SVector};

/// An equilibrium of the reduced model, with derived cable forces and
/// directions.
#[derive(Debug, Clone, Copy)]
pub struct Equilibrium {
    pub q0e: SpherePoint,
    pub d_p0e: Vec3,
    pub d_q0e: Vec3,
    /// Internal force magnitude along the bar axis [N].
    pub n0: f64,
    pub mu1e: Vec3,
    pub mu2e: Vec3,
    pub q1e: SpherePoint,
    pub q2e: SpherePoint,
}

impl Equilibrium {
    /// Build the equilibrium from the free parameters; d_q0e is projected
    /// perpendicular to q0e.
    pub fn new(params: &SystemParams, q0e: SpherePoint, d_p0e: Vec3, d_q0e: Vec3, n0: f64) -> Self {
        let q = q0e.vector();
        let d_q0e = d_q0e - q * q.dot(&d_q0e);
        let (mu1e, mu2e) = equilibrium_cable_forces(params, &q0e, &d_p0e, &d_q0e, n0);
        Equilibrium {
            q0e,
            d_p0e,
            d_q0e,
            n0,
            mu1e,
            mu2e,
            q1e: SpherePoint::from_unnormalized(mu1e),
            q2e: SpherePoint::from_unnormalized(mu2e),
        }
    }
}

/// A subset of the four lumped disturbance channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DisturbanceCombo {
    pub d_p0: bool,
    pub d_q0: bool,
    pub d_p1: bool,
    pub d_p2: bool,
}

impl DisturbanceCombo {
    pub fn count(&self) -> usize {
        self.d_p0 as usize + self.d_q0 as usize + self.d_p1 as usize + self.d_p2 as usize
    }

    /// State dimension of the assembled case: 12 nominal + 3 per channel.
    pub fn state_dim(&self) -> usize {
        12 + 3 * self.count()
    }

    /// Short text label, e.g. "d_p0+d_q0".
    pub fn label(&self) -> alloc::string::String {
        use alloc::string::ToString;
        let mut parts: Vec<&str> = Vec::new();
        if self.d_p0 {
            parts.push("d_p0");
        }
        if self.d_q0 {
            parts.push("d_q0");
        }
        if self.d_p1 {
            parts.push("d_p1");
        }
        if self.d_p2 {
            parts.push("d_p2");
        }
        if parts.is_empty() {
            "null".to_string()
        } else {
            parts.join("+")
        }
    }

    /// All 16 subsets in canonical (bitmask) order.
    pub fn all() -> Vec<DisturbanceCombo> {
        (0..16u8)
            .map(|m| DisturbanceCombo {
                d_p0: m & 1 != 0,
                d_q0: m & 2 != 0,
                d_p1: m & 4 != 0,
                d_p2: m & 8 != 0,
            })
            .collect()
    }

    /// The eleven rows of the benchmark observability table, in order.
    pub fn table_rows() -> [DisturbanceCombo; 11] {
        let c = |d_p0, d_q0, d_p1, d_p2| DisturbanceCombo {
            d_p0,
            d_q0,
            d_p1,
            d_p2,
        };
        [
            c(false, false, false, false),
            c(true, false, false, false),
            c(false, true, false, false),
            c(false, false, true, false),
            c(true, true, false, false),
            c(true, false, true, false),
            c(false, true, true, false),
            c(false, false, true, true),
            c(true, true, true, false),
            c(true, false, true, true),
            c(false, true, true, true),
        ]
    }
}

/// Assembled linear pair for one disturbance combination.
#[derive(Debug, Clone)]
pub struct LinearizedCase {
    pub a: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub state_dim: usize,
}

/// Nominal 12-state system and output matrices.
pub fn nominal_blocks(
    params: &SystemParams,
    eq: &Equilibrium,
) -> (SMatrix<f64, 12, 12>, SMatrix<f64, 8, 12>) {
    let q0x = skew(&eq.q0e.vector());
    let mut a = SMatrix::<f64, 12, 12>::zeros();
    a.fixed_view_mut::<3, 3>(0, 3).fill_with_identity();
    a.fixed_view_mut::<3, 3>(6, 9).copy_from(&(-q0x));
    a.fixed_view_mut::<3, 3>(9, 6)
        .copy_from(&(q0x * (-eq.n0 / params.j0)));

    let mut c = SMatrix::<f64, 8, 12>::zeros();
    c.fixed_view_mut::<3, 3>(0, 0).fill_with_identity();
    c.fixed_view_mut::<3, 3>(0, 6)
        .copy_from(&(nalgebra::Matrix3::identity() * params.rho1));
    c.fixed_view_mut::<3, 3>(3, 0).fill_with_identity();
    c.fixed_view_mut::<3, 3>(3, 6)
        .copy_from(&(nalgebra::Matrix3::identity() * (-params.rho2)));
    c.fixed_view_mut::<1, 3>(6, 6)
        .copy_from(&eq.q0e.vector().transpose());
    c.fixed_view_mut::<1, 3>(7, 9)
        .copy_from(&eq.q0e.vector().transpose());
    (a, c)
}

/// Input/output blocks of the four disturbance channels plus the h3 row.
#[derive(Debug, Clone)]
pub struct DisturbanceBlocks {
    pub a_dp0: SMatrix<f64, 12, 3>,
    pub a_dq0: SMatrix<f64, 12, 3>,
    pub a_dp1: SMatrix<f64, 12, 3>,
    pub a_dp2: SMatrix<f64, 12, 3>,
    pub c_dp0: SMatrix<f64, 8, 3>,
    pub c_dq0: SMatrix<f64, 8, 3>,
    pub c_dp1: SMatrix<f64, 8, 3>,
    pub c_dp2: SMatrix<f64, 8, 3>,
    pub c1_h3: SMatrix<f64, 1, 12>,
    pub c2_h3: SMatrix<f64, 1, 3>,
}

pub fn disturbance_blocks(params: &SystemParams, eq: &Equilibrium) -> DisturbanceBlocks {
    let q0x = skew(&eq.q0e.vector());
    let q1x = skew(&eq.q1e.vector());
    let q2x = skew(&eq.q2e.vector());
    let i3 = nalgebra::Matrix3::identity();

    let mut a_dp0 = SMatrix::<f64, 12, 3>::zeros();
    a_dp0
        .fixed_view_mut::<3, 3>(3, 0)
        .copy_from(&(i3 / params.m0));

    // The transposed block rows in the reference layout flip the sign of
    // every skew block; the signs below are the true Jacobians of the
    // reduced model (e.g. dw0dot/dd_q0 = +q0e^x / J0).
    let mut a_dq0 = SMatrix::<f64, 12, 3>::zeros();
    a_dq0
        .fixed_view_mut::<3, 3>(9, 0)
        .copy_from(&(q0x * (1.0 / params.j0)));

    let mut a_dp1 = SMatrix::<f64, 12, 3>::zeros();
    a_dp1
        .fixed_view_mut::<3, 3>(3, 0)
        .copy_from(&(i3 / params.m0));
    a_dp1
        .fixed_view_mut::<3, 3>(9, 0)
        .copy_from(&(q0x * (params.rho1 / params.j0)));

    let mut a_dp2 = SMatrix::<f64, 12, 3>::zeros();
    a_dp2
        .fixed_view_mut::<3, 3>(3, 0)
        .copy_from(&(i3 / params.m0));
    a_dp2
        .fixed_view_mut::<3, 3>(9, 0)
        .copy_from(&(q0x * (-params.rho2 / params.j0)));

    let mut c_dp1 = SMatrix::<f64, 8, 3>::zeros();
    c_dp1
        .fixed_view_mut::<3, 3>(0, 0)
        .copy_from(&(q1x * q1x * (-params.l1 / eq.mu1e.norm())));

    let mut c_dp2 = SMatrix::<f64, 8, 3>::zeros();
    c_dp2
        .fixed_view_mut::<3, 3>(3, 0)
        .copy_from(&(q2x * q2x * (-params.l2 / eq.mu2e.norm())));

    let mut c1_h3 = SMatrix::<f64, 1, 12>::zeros();
    c1_h3
        .fixed_view_mut::<1, 3>(0, 6)
        .copy_from(&eq.d_q0e.transpose());
    let c2_h3 = eq.q0e.vector().transpose();

    DisturbanceBlocks {
        a_dp0,
        a_dq0,
        a_dp1,
        a_dp2,
        c_dp0: SMatrix::zeros(),
        c_dq0: SMatrix::zeros(),
        c_dp1,
        c_dp2,
        c1_h3,
        c2_h3,
    }
}

/// Assemble the (A, C) pair for one disturbance combination. The h3 output
/// row (the tangency constraint on d_q0) is appended iff d_q0 is active.
pub fn assemble_case(
    params: &SystemParams,
    eq: &Equilibrium,
    combo: &DisturbanceCombo,
) -> LinearizedCase {
    let (a_nom, c_nom) = nominal_blocks(params, eq);
    let blocks = disturbance_blocks(params, eq);
    let n = combo.state_dim();
    let rows = if combo.d_q0 { 9 } else { 8 };

    let mut a = DMatrix::<f64>::zeros(n, n);
    let mut c = DMatrix::<f64>::zeros(rows, n);
    a.view_mut((0, 0), (12, 12)).copy_from(&a_nom);
    c.view_mut((0, 0), (8, 12)).copy_from(&c_nom);

    let mut col = 12usize;
    let mut h3_col_dq0 = None;
    let active: [(bool, &SMatrix<f64, 12, 3>, &SMatrix<f64, 8, 3>, bool); 4] = [
        (combo.d_p0, &blocks.a_dp0, &blocks.c_dp0, false),
        (combo.d_q0, &blocks.a_dq0, &blocks.c_dq0, true),
        (combo.d_p1, &blocks.a_dp1, &blocks.c_dp1, false),
        (combo.d_p2, &blocks.a_dp2, &blocks.c_dp2, false),
    ];
    for (on, a_blk, c_blk, is_dq0) in active {
        if !on {
            continue;
        }
        a.view_mut((0, col), (12, 3)).copy_from(a_blk);
        c.view_mut((0, col), (8, 3)).copy_from(c_blk);
        if is_dq0 {
            h3_col_dq0 = Some(col);
        }
        col += 3;
    }
    if let Some(cq) = h3_col_dq0 {
        c.view_mut((8, 0), (1, 12)).copy_from(&blocks.c1_h3);
        c.view_mut((8, cq), (1, 3)).copy_from(&blocks.c2_h3);
    }
    LinearizedCase { a, c, state_dim: n }
}

/// Numeric rank of the stacked observability matrix [C; CA; ...; CA^(n-1)],
/// with per-block row balancing before the SVD.
pub fn numeric_rank(a: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<usize, RankError> {
    let n = a.nrows();
    let m = c.nrows();
    let mut stacked = DMatrix::<f64>::zeros(m * n, n);
    let mut block = c.clone();
    for k in 0..n {
        let f = block.norm();
        let scaled = if f > 0.0 { &block / f } else { block.clone() };
        stacked.view_mut((k * m, 0), (m, n)).copy_from(&scaled);
        block *= a;
    }
    let total_rows = stacked.nrows();
    let svd = stacked.svd(false, false);
    let sv = &svd.singular_values;
    let smax = sv[0];
    let eps = f64::EPSILON;
    let tol = (total_rows.max(n) as f64) * smax * eps * 1e3;
    let rank = sv.iter().filter(|&&s| s > tol).count();
    if rank < sv.len() && rank > 0 {
        let gap = sv[rank - 1] - sv[rank];
        if sv[rank - 1] < 10.0 * tol {
            return Err(RankError::IllConditioned { gap, tol });
        }
    }
    Ok(rank)
}

/// One row of the observability sweep.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub combo: DisturbanceCombo,
    pub state_dim: usize,
    pub rank: usize,
    pub observable: bool,
    /// false if the rank differed across the equilibrium samples.
    pub samples_agree: bool,
}

/// Compute the generic observability rank of every table combination over a
/// set of equilibrium samples; the generic rank is the max across samples.
pub fn sweep_table(params: &SystemParams, eqs: &[Equilibrium]) -> Result<Vec<SweepRow>, RankError> {
    let mut rows = Vec::new();
    for combo in DisturbanceCombo::table_rows() {
        let mut best = 0usize;
        let mut agree = true;
        let mut first = None;
        for eq in eqs {
            let case = assemble_case(params, eq, &combo);
            let r = numeric_rank(&case.a, &case.c)?;
            match first {
                None => first = Some(r),
                Some(f) if f != r => agree = false,
                _ => {}
            }
            best = best.max(r);
        }
        rows.push(SweepRow {
            combo,
            state_dim: combo.state_dim(),
            rank: best,
            observable: best == combo.state_dim(),
            samples_agree: agree,
        });
    }
    Ok(rows)
}

/// Draw `n` random equilibria away from the axis-aligned degeneracies
/// (5 degree cones around ±e1 and ±e3), reproducibly from `seed`.
pub fn generic_equilibria(params: &SystemParams, n: usize, seed: u64) -> Vec<Equilibrium> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
    let rand_unit = |rng: &mut rand_chacha::ChaCha12Rng| loop {
        let v = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let norm = v.norm();
        if norm > 1e-3 && norm <= 1.0 {
            return v / norm;
        }
    };
    let cone = libm::cos(5.0f64.to_radians());
    (0..n)
        .map(|_| {
            let q0 = loop {
                let q = rand_unit(&mut rng);
                if q.x.abs() < cone && q.z.abs() < cone {
                    break q;
                }
            };
            let d_p0 = rand_unit(&mut rng) * rng.random_range(0.0..1.0);
            let d_q0 = rand_unit(&mut rng) * rng.random_range(0.0..1.0);
            let n0 = rng.random_range(-2.0..2.0);
            Equilibrium::new(params, SpherePoint::new(q0), d_p0, d_q0, n0)
        })
        .collect()
}

/// Reduced-model state layout: [p0, v0, q0, w0, d_p0, d_q0, d_p1, d_p2].
pub type ReducedState = SVector<f64, 24>;

/// Right-hand side of the reduced nonlinear model; `u1t`, `u2t` are the
/// drone-side total inputs. Used by the linearization oracle and checks.
pub fn reduced_dynamics(
    params: &SystemParams,
    x: &ReducedState,
    u1t: &Vec3,
    u2t: &Vec3,
) -> ReducedState {
    let g = |i: usize| x.fixed_rows::<3>(i).into_owned();
    let v0 = g(3);
    let q0 = g(6);
    let d_p0 = g(12);
    let d_q0 = g(15);
    let d_p1 = g(18);
    let d_p2 = g(21);
    let e3 = Vec3::new(0.0, 0.0, 1.0);

    let v0_dot = -(u1t + u2t) / params.m0 + (d_p0 + d_p1 + d_p2) / params.m0 + params.g * e3;
    let q0_dot = g(9).cross(&q0);
    let w0_dot = q0.cross(
        &((-params.rho1 * (u1t - d_p1) + params.rho2 * (u2t - d_p2) + d_q0) / params.j0),
    );

    let mut dx = ReducedState::zeros();
    dx.fixed_rows_mut::<3>(0).copy_from(&v0);
    dx.fixed_rows_mut::<3>(3).copy_from(&v0_dot);
    dx.fixed_rows_mut::<3>(6).copy_from(&q0_dot);
    dx.fixed_rows_mut::<3>(9).copy_from(&w0_dot);
    dx
}

/// Outputs of the reduced model: drone positions, the two manifold constraint
/// scalars, and the d_q0 tangency scalar. The quadratic constraint is halved
/// so that its gradient equals the printed linearization row.
pub fn reduced_outputs(
    params: &SystemParams,
    x: &ReducedState,
    u1t: &Vec3,
    u2t: &Vec3,
) -> SVector<f64, 9> {
    let g = |i: usize| x.fixed_rows::<3>(i).into_owned();
    let p0 = g(0);
    let q0 = g(6);
    let w0 = g(9);
    let d_q0 = g(15);
    let d_p1 = g(18);
    let d_p2 = g(21);

    let mu1 = u1t - d_p1;
    let mu2 = u2t - d_p2;
    let p1 = p0 + params.rho1 * q0 - params.l1 * mu1 / mu1.norm();
    let p2 = p0 - params.rho2 * q0 - params.l2 * mu2 / mu2.norm();

    let mut h = SVector::<f64, 9>::zeros();
    h.fixed_rows_mut::<3>(0).copy_from(&p1);
    h.fixed_rows_mut::<3>(3).copy_from(&p2);
    h[6] = 0.5 * q0.dot(&q0);
    h[7] = q0.dot(&w0);
    h[8] = q0.dot(&d_q0);
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    fn benchmark_eq() -> (SystemParams, Equilibrium) {
        let p = SystemParams::benchmark();
        let eq = Equilibrium::new(
            &p,
            SpherePoint::from_unnormalized(Vector3::new(0.4, 0.5, -0.2)),
            Vector3::new(0.1, -0.2, 0.15),
            Vector3::new(0.05, 0.1, -0.1),
            0.8,
        );
        (p, eq)
    }

    #[test]
    fn equilibrium_satisfies_force_balance() {
        let (p, eq) = benchmark_eq();
        let e3 = Vector3::new(0.0, 0.0, 1.0);
        let trans = -(eq.mu1e + eq.mu2e) / p.m0 + eq.d_p0e / p.m0 + p.g * e3;
        assert!(trans.norm() < 1e-10);
        let q = eq.q0e.vector();
        let rot = q.cross(&(-p.rho1 * eq.mu1e + p.rho2 * eq.mu2e + eq.d_q0e)) / p.j0;
        assert!(rot.norm() < 1e-10);
    }

    #[test]
    fn nominal_blocks_zero_n0_structure() {
        let p = SystemParams::benchmark();
        let eq = Equilibrium::new(
            &p,
            SpherePoint::from_unnormalized(Vector3::new(1.0, 0.0, 0.0)),
            Vector3::zeros(),
            Vector3::zeros(),
            0.0,
        );
        let (a, c) = nominal_blocks(&p, &eq);
        // only the position-velocity identity and the -q0e^x block survive
        let mut expected = SMatrix::<f64, 12, 12>::zeros();
        expected.fixed_view_mut::<3, 3>(0, 3).fill_with_identity();
        expected
            .fixed_view_mut::<3, 3>(6, 9)
            .copy_from(&(-skew(&eq.q0e.vector())));
        assert!((a - expected).norm() < 1e-14);
        // C rows 1-3 = [I, 0, rho1 I, 0]
        assert!((c.fixed_view::<3, 3>(0, 0) - nalgebra::Matrix3::identity()).norm() < 1e-14);
        assert!(
            (c.fixed_view::<3, 3>(0, 6) - nalgebra::Matrix3::identity() * p.rho1).norm() < 1e-14
        );
        assert!(c.fixed_view::<3, 3>(0, 3).norm() < 1e-14);
    }

    #[test]
    fn disturbance_block_structure() {
        let (p, eq) = benchmark_eq();
        let b = disturbance_blocks(&p, &eq);
        assert!(b.c_dp0.norm() == 0.0);
        assert!(b.c_dq0.norm() == 0.0);
        let bottom = b.a_dp1.fixed_view::<3, 3>(9, 0);
        assert!((bottom - skew(&eq.q0e.vector()) * (p.rho1 / p.j0)).norm() < 1e-14);
    }

    #[test]
    fn assemble_case_dimensions() {
        let (p, eq) = benchmark_eq();
        let empty = assemble_case(&p, &eq, &DisturbanceCombo::default());
        assert_eq!(empty.state_dim, 12);
        assert_eq!(empty.c.nrows(), 8);
        let dq = assemble_case(
            &p,
            &eq,
            &DisturbanceCombo {
                d_q0: true,
                ..Default::default()
            },
        );
        assert_eq!(dq.state_dim, 15);
        assert_eq!(dq.c.nrows(), 9);
        let three = assemble_case(
            &p,
            &eq,
            &DisturbanceCombo {
                d_p0: true,
                d_p1: true,
                d_p2: true,
                ..Default::default()
            },
        );
        assert_eq!(three.state_dim, 21);
        assert_eq!(three.c.nrows(), 8);
    }

    #[test]
    fn nominal_rank_is_twelve() {
        let (p, eq) = benchmark_eq();
        let case = assemble_case(&p, &eq, &DisturbanceCombo::default());
        assert_eq!(numeric_rank(&case.a, &case.c).unwrap(), 12);
    }

    #[test]
    fn full_disturbance_rank_is_nineteen() {
        let (p, eq) = benchmark_eq();
        let case = assemble_case(
            &p,
            &eq,
            &DisturbanceCombo {
                d_p0: true,
                d_q0: true,
                d_p1: true,
                d_p2: true,
            },
        );
        assert_eq!(case.state_dim, 24);
        assert_eq!(numeric_rank(&case.a, &case.c).unwrap(), 19);
    }
}
