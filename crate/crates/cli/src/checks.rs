//! Self-check suites behind `tetherkit check`, plus the finite-difference
//! scaffolding they share with the acceptance tests.
//!
//! The analytic state-transition Jacobians differentiate the raw (not
//! reprojected) manifold composites, so the finite differences here go
//! through `ts2_boxplus_raw`/`ts2_oplus_raw`; the filter's stored state
//! reprojects, a radial correction of order dt·|w|² that the error
//! coordinates do not see.

use nalgebra::{SMatrix, SVector, Vector2, Vector3};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use tetherkit_core::dynamics::{
    equilibrium_cable_forces, step, total_energy, ControlInput, DisturbanceSet, IntegrationMethod,
    PlantState, ProcessNoise, SystemParams,
};
use tetherkit_core::filter::{
    f_d, manifold_partials, measurement_jacobian, predict_measurement, system_partials,
    SystemState,
};
use tetherkit_core::manifold::{
    s2_boxminus, s2_boxplus, ts2_boxminus, ts2_boxplus, ts2_boxplus_raw, ts2_oplus_raw,
    BundlePoint, BundleTangent, SpherePoint, SphereTangent,
};
use tetherkit_core::sim::default_initial_state;
use tetherkit_core::Vec3;

pub fn rand_unit(rng: &mut StdRng) -> Vec3 {
    loop {
        let v = Vector3::new(
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

pub fn rand_bundle(rng: &mut StdRng) -> BundlePoint {
    let q = rand_unit(rng);
    let w = rand_unit(rng) * rng.random_range(0.0..1.0);
    BundlePoint::reproject(q, w)
}

pub fn rand_state(rng: &mut StdRng) -> SystemState {
    SystemState {
        p0: rand_unit(rng) * 2.0,
        v0: rand_unit(rng) * 0.5,
        b0: rand_bundle(rng),
        b1: rand_bundle(rng),
        b2: rand_bundle(rng),
        d_p1: rand_unit(rng) * rng.random_range(0.0..2.0),
        d_p2: rand_unit(rng) * rng.random_range(0.0..2.0),
    }
}

pub fn rand_control(rng: &mut StdRng) -> ControlInput {
    ControlInput {
        u1: rand_unit(rng) * 5.0,
        u2: rand_unit(rng) * 5.0,
    }
}

/// Raw boxplus over the full state (no tangent reprojection).
pub fn raw_boxplus(x: &SystemState, dx: &SVector<f64, 24>) -> SystemState {
    let bt = |i: usize| BundleTangent::new(dx[i], dx[i + 1], dx[i + 2], dx[i + 3]);
    let raw = |b: &BundlePoint, u: &BundleTangent| {
        let (q, w) = ts2_boxplus_raw(b, u);
        BundlePoint { q, w }
    };
    SystemState {
        p0: x.p0 + dx.fixed_rows::<3>(0).into_owned(),
        v0: x.v0 + dx.fixed_rows::<3>(3).into_owned(),
        b0: raw(&x.b0, &bt(6)),
        b1: raw(&x.b1, &bt(10)),
        b2: raw(&x.b2, &bt(14)),
        d_p1: x.d_p1 + dx.fixed_rows::<3>(18).into_owned(),
        d_p2: x.d_p2 + dx.fixed_rows::<3>(21).into_owned(),
    }
}

/// Raw oplus over the full state (no tangent reprojection).
pub fn raw_oplus(x: &SystemState, v: &SVector<f64, 30>) -> SystemState {
    let seg = |i: usize| v.fixed_rows::<3>(i).into_owned();
    let raw = |b: &BundlePoint, v1: &Vec3, v2: &Vec3| {
        let (q, w) = ts2_oplus_raw(b, v1, v2);
        BundlePoint { q, w }
    };
    SystemState {
        p0: x.p0 + seg(0),
        v0: x.v0 + seg(3),
        b0: raw(&x.b0, &seg(6), &seg(9)),
        b1: raw(&x.b1, &seg(12), &seg(15)),
        b2: raw(&x.b2, &seg(18), &seg(21)),
        d_p1: x.d_p1 + seg(24),
        d_p2: x.d_p2 + seg(27),
    }
}

/// One predict through the raw manifold operators: x -> x ⊕ dt f(x, u, w).
pub fn predict_map(
    params: &SystemParams,
    x: &SystemState,
    u: &ControlInput,
    w: &SVector<f64, 12>,
    dt: f64,
) -> Result<SystemState, String> {
    let f = f_d(params, x, u, w).map_err(|e| e.to_string())?;
    Ok(raw_oplus(x, &(dt * f)))
}

/// Largest relative Frobenius error of (F_x, F_w) against central finite
/// differences over `samples` random states.
pub fn transition_jacobian_fd_error(samples: usize, seed: u64) -> Result<f64, String> {
    let params = SystemParams::benchmark();
    let mut rng = StdRng::seed_from_u64(seed);
    let dt = 0.01;
    let eps = 1e-6;
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let x = rand_state(&mut rng);
        let u = rand_control(&mut rng);
        let f = f_d(&params, &x, &u, &SVector::zeros()).map_err(|e| e.to_string())?;
        let x_next = x.oplus(&(dt * f));
        let (g_x, g_f) = manifold_partials(&x, &x_next, dt, &f);
        let (df_ddx, df_dw) = system_partials(&params, &x, &u).map_err(|e| e.to_string())?;
        let f_x = g_x + dt * g_f * df_ddx;
        let f_w = dt * g_f * df_dw;

        let mut f_x_fd = SMatrix::<f64, 24, 24>::zeros();
        for j in 0..24 {
            let mut e = SVector::<f64, 24>::zeros();
            e[j] = eps;
            let xp = predict_map(&params, &raw_boxplus(&x, &e), &u, &SVector::zeros(), dt)?;
            e[j] = -eps;
            let xm = predict_map(&params, &raw_boxplus(&x, &e), &u, &SVector::zeros(), dt)?;
            f_x_fd.set_column(j, &(xp.boxminus(&xm) / (2.0 * eps)));
        }
        worst = worst.max((f_x_fd - f_x).norm() / f_x.norm());

        let mut f_w_fd = SMatrix::<f64, 24, 12>::zeros();
        for j in 0..12 {
            let mut w = SVector::<f64, 12>::zeros();
            w[j] = eps;
            let xp = predict_map(&params, &x, &u, &w, dt)?;
            w[j] = -eps;
            let xm = predict_map(&params, &x, &u, &w, dt)?;
            f_w_fd.set_column(j, &(xp.boxminus(&xm) / (2.0 * eps)));
        }
        worst = worst.max((f_w_fd - f_w).norm() / f_w.norm().max(1e-12));
    }
    Ok(worst)
}

/// Largest relative Frobenius error of H against central finite differences.
pub fn measurement_jacobian_fd_error(samples: usize, seed: u64) -> f64 {
    let params = SystemParams::benchmark();
    let mut rng = StdRng::seed_from_u64(seed);
    let eps = 1e-6;
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let x = rand_state(&mut rng);
        let h = measurement_jacobian(&params, &x);
        let mut h_fd = SMatrix::<f64, 12, 24>::zeros();
        for j in 0..24 {
            let mut e = SVector::<f64, 24>::zeros();
            e[j] = eps;
            let zp = predict_measurement(&params, &x.boxplus(&e));
            e[j] = -eps;
            let zm = predict_measurement(&params, &x.boxplus(&e));
            h_fd.set_column(j, &((zp - zm) / (2.0 * eps)));
        }
        worst = worst.max((h_fd - h).norm() / h.norm());
    }
    worst
}

/// Manifold axiom sweep: round trips, zero elements, norms, tangency.
/// Returns the worst residual seen for (round-trip, norm/tangency).
pub fn manifold_axiom_errors(samples: usize, seed: u64) -> Result<(f64, f64), String> {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut worst_rt: f64 = 0.0;
    let mut worst_norm: f64 = 0.0;
    for _ in 0..samples {
        // S²: boxminus(boxplus(x, u), x) == u for |u| < π
        let x = SpherePoint::new(rand_unit(&mut rng));
        let u: SphereTangent = Vector2::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let y = s2_boxplus(&x, &u);
        worst_norm = worst_norm.max((y.vector().norm() - 1.0).abs());
        let back = s2_boxminus(&y, &x).map_err(|e| e.to_string())?;
        worst_rt = worst_rt.max((back - u).norm());
        // zero element
        let z = s2_boxplus(&x, &SphereTangent::zeros());
        worst_rt = worst_rt.max((z.vector() - x.vector()).norm());

        // TS²: round trip, norm, tangency
        let b = rand_bundle(&mut rng);
        let ut = BundleTangent::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let yb = ts2_boxplus(&b, &ut);
        worst_norm = worst_norm.max((yb.q.norm() - 1.0).abs());
        worst_norm = worst_norm.max(yb.q.dot(&yb.w).abs());
        let back = ts2_boxminus(&yb, &b).map_err(|e| e.to_string())?;
        worst_rt = worst_rt.max((back - ut).norm());
        let zb = ts2_boxplus(&b, &BundleTangent::zeros());
        worst_rt = worst_rt.max((zb.q - b.q).norm() + (zb.w - b.w).norm());
    }
    Ok((worst_rt, worst_norm))
}

/// Conservative-run relative energy drift over `seconds` of RK4 at 1 ms.
pub fn energy_drift(seconds: f64) -> Result<f64, String> {
    let params = SystemParams::benchmark();
    let mut state = default_initial_state();
    let u = ControlInput::default();
    let d = DisturbanceSet::default();
    let dt = 1e-3;
    let e0 = total_energy(&params, &state);
    let scale = e0.abs().max(1.0);
    let mut worst: f64 = 0.0;
    let steps = (seconds / dt).round() as usize;
    for _ in 0..steps {
        state = step(&params, &state, &u, &d, dt, IntegrationMethod::Rk4)
            .map_err(|e| e.to_string())?;
        worst = worst.max((total_energy(&params, &state) - e0).abs() / scale);
    }
    Ok(worst)
}

/// Hover accelerations from the analytic equilibrium cable forces.
pub fn hover_residual() -> Result<f64, String> {
    let params = SystemParams::benchmark();
    let q0 = SpherePoint::new(Vector3::new(1.0, 0.0, 0.0));
    let (mu1, mu2) = equilibrium_cable_forces(&params, &q0, &Vec3::zeros(), &Vec3::zeros(), 0.0);
    let e3 = Vector3::new(0.0, 0.0, 1.0);
    let state = PlantState {
        p0: Vec3::zeros(),
        v0: Vec3::zeros(),
        q0,
        w0: Vec3::zeros(),
        q1: SpherePoint::from_unnormalized(mu1),
        w1: Vec3::zeros(),
        q2: SpherePoint::from_unnormalized(mu2),
        w2: Vec3::zeros(),
    };
    let u = ControlInput {
        u1: -mu1 - params.m1 * params.g * e3,
        u2: -mu2 - params.m2 * params.g * e3,
    };
    let a = tetherkit_core::dynamics::accelerations(
        &params,
        &state,
        &u,
        &DisturbanceSet::default(),
        &ProcessNoise::default(),
    )
    .map_err(|e| e.to_string())?;
    Ok(a.v0_dot.norm() + a.w0_dot.norm() + a.w1_dot.norm() + a.w2_dot.norm())
}

fn report(name: &str, value: f64, tol: f64) -> Result<(), String> {
    let ok = value < tol;
    println!(
        "check {name}: {} (worst {value:.3e}, tol {tol:.1e})",
        if ok { "ok" } else { "FAILED" }
    );
    if ok {
        Ok(())
    } else {
        Err(format!("{name} exceeded tolerance: {value:.3e} >= {tol:.1e}"))
    }
}

/// `check manifold`: 10⁴ randomized axiom checks.
pub fn check_manifold() -> Result<(), String> {
    let (rt, norm) = manifold_axiom_errors(10_000, 41)?;
    report("manifold round-trips", rt, 1e-9)?;
    report("manifold norms/tangency", norm, 1e-10)
}

/// `check jacobians`: F_x/F_w/H against finite differences.
pub fn check_jacobians() -> Result<(), String> {
    let fx = transition_jacobian_fd_error(25, 42)?;
    report("transition Jacobians (F_x, F_w)", fx, 1e-4)?;
    let h = measurement_jacobian_fd_error(25, 43);
    report("measurement Jacobian (H)", h, 1e-4)
}

/// `check energy`: conservative drift and hover equilibrium.
pub fn check_energy() -> Result<(), String> {
    report("energy drift (5 s conservative)", energy_drift(5.0)?, 1e-6)?;
    report("hover equilibrium residual", hover_residual()?, 1e-9)
}
