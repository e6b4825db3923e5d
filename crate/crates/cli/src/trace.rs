//! Trace, metrics, and manifest output files.
//!
//! The trace CSV schema is pinned: truth columns, truth disturbances,
//! estimate columns, raw measurements, then the attitude error metric, all
//! floats at 17 significant digits so external tools can round-trip them
//! losslessly.

use serde::Serialize;
use std::io::{BufWriter, Write};
use std::path::Path;
use tetherkit_core::sim::{Metrics, TraceRecord};

/// The pinned CSV header.
pub fn trace_header() -> String {
    let mut cols: Vec<String> = vec!["t".into()];
    let fields = ["p0", "v0", "q0", "w0", "q1", "w1", "q2", "w2"];
    for f in fields {
        for a in ["x", "y", "z"] {
            cols.push(format!("{f}{a}"));
        }
    }
    for f in ["dp1", "dp2"] {
        for a in ["x", "y", "z"] {
            cols.push(format!("{f}{a}"));
        }
    }
    for f in fields.iter().copied().chain(["dp1", "dp2"]) {
        for a in ["x", "y", "z"] {
            cols.push(format!("est_{f}{a}"));
        }
    }
    for i in 1..=12 {
        cols.push(format!("z{i}"));
    }
    cols.push("e_q0".into());
    cols.join(",")
}

fn fmt(v: f64) -> String {
    // 17 significant digits: 1 before the point, 16 after
    format!("{v:.16e}")
}

fn push_vec3(row: &mut Vec<String>, v: &tetherkit_core::Vec3) {
    for i in 0..3 {
        row.push(fmt(v[i]));
    }
}

/// One CSV row in schema order.
pub fn trace_row(r: &TraceRecord) -> String {
    let mut row = Vec::with_capacity(74);
    row.push(fmt(r.t));
    let t = &r.truth;
    push_vec3(&mut row, &t.p0);
    push_vec3(&mut row, &t.v0);
    push_vec3(&mut row, &t.q0.vector());
    push_vec3(&mut row, &t.w0);
    push_vec3(&mut row, &t.q1.vector());
    push_vec3(&mut row, &t.w1);
    push_vec3(&mut row, &t.q2.vector());
    push_vec3(&mut row, &t.w2);
    push_vec3(&mut row, &r.truth_disturbance.d_p1);
    push_vec3(&mut row, &r.truth_disturbance.d_p2);
    let e = &r.estimate;
    push_vec3(&mut row, &e.p0);
    push_vec3(&mut row, &e.v0);
    push_vec3(&mut row, &e.b0.q);
    push_vec3(&mut row, &e.b0.w);
    push_vec3(&mut row, &e.b1.q);
    push_vec3(&mut row, &e.b1.w);
    push_vec3(&mut row, &e.b2.q);
    push_vec3(&mut row, &e.b2.w);
    push_vec3(&mut row, &e.d_p1);
    push_vec3(&mut row, &e.d_p2);
    for i in 0..12 {
        row.push(fmt(r.measurement[i]));
    }
    row.push(fmt(r.e_q0));
    row.join(",")
}

/// Write the full trace CSV.
pub fn write_trace(path: &Path, trace: &[TraceRecord]) -> Result<(), String> {
    let file = std::fs::File::create(path)
        .map_err(|e| format!("cannot create {}: {e}", path.display()))?;
    let mut w = BufWriter::new(file);
    let fail = |e: std::io::Error| format!("cannot write {}: {e}", path.display());
    writeln!(w, "{}", trace_header()).map_err(fail)?;
    for r in trace {
        writeln!(w, "{}", trace_row(r)).map_err(fail)?;
    }
    w.flush().map_err(fail)
}

#[derive(Serialize)]
struct MetricsOut {
    position_rmse: f64,
    attitude_err_mean: f64,
    attitude_err_max: f64,
    disturbance_mae_d1: [f64; 3],
    disturbance_mae_d2: [f64; 3],
    convergence_time: Option<f64>,
}

/// Write the scalar metrics summary as JSON.
pub fn write_metrics(path: &Path, m: &Metrics) -> Result<(), String> {
    let out = MetricsOut {
        position_rmse: m.position_rmse,
        attitude_err_mean: m.attitude_err_mean,
        attitude_err_max: m.attitude_err_max,
        disturbance_mae_d1: m.disturbance_mae_d1.into(),
        disturbance_mae_d2: m.disturbance_mae_d2.into(),
        convergence_time: m.convergence_time,
    };
    let text = serde_json::to_string_pretty(&out).map_err(|e| e.to_string())?;
    std::fs::write(path, text).map_err(|e| format!("cannot write {}: {e}", path.display()))
}

/// Written alongside every output so runs can be reproduced bit-exactly.
#[derive(Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: Option<String>,
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
    pub outputs: Vec<String>,
    pub wall_time_s: f64,
}

pub fn write_manifest(path: &Path, manifest: &RunManifest) -> Result<(), String> {
    let text = serde_json::to_string_pretty(manifest).map_err(|e| e.to_string())?;
    std::fs::write(path, text).map_err(|e| format!("cannot write {}: {e}", path.display()))
}

/// Version string for manifests.
pub fn version_string() -> String {
    format!("tetherkit-v{}", env!("CARGO_PKG_VERSION"))
}
