//! Command implementations behind the CLI surface.

use crate::config::RunOverrides;
use crate::trace::{
    trace_header, trace_row, version_string, write_manifest, write_metrics, write_trace,
    RunManifest,
};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;
use tetherkit_core::observability::{generic_equilibria, sweep_table};
use tetherkit_core::sim::{run_scenario, FilterMode, ScenarioConfig, ScenarioId};

/// Errors mapped onto the pinned process exit codes.
#[derive(Debug)]
pub enum CmdError {
    /// Exit 2: bad scenario name, unreadable or invalid configuration.
    InvalidConfig(String),
    /// Exit 3: numerical failure inside the solver or filter.
    Numerical(String),
    /// Exit 1: I/O failure writing outputs.
    Io(String),
}

impl CmdError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CmdError::InvalidConfig(_) => 2,
            CmdError::Numerical(_) => 3,
            CmdError::Io(_) => 1,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CmdError::InvalidConfig(m) | CmdError::Numerical(m) | CmdError::Io(m) => m,
        }
    }
}

/// Thread cap for seed batches: `TETHERKIT_THREADS`, else the hardware count.
pub fn thread_cap() -> usize {
    std::env::var("TETHERKIT_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
}

fn load_overrides(config: Option<&Path>) -> Result<(RunOverrides, Option<String>), CmdError> {
    match config {
        None => Ok((RunOverrides::default(), None)),
        Some(path) => {
            let ov = RunOverrides::from_file(path).map_err(CmdError::InvalidConfig)?;
            Ok((ov, Some(path.display().to_string())))
        }
    }
}

fn build_config(
    scenario: &str,
    seed: u64,
    overrides: &RunOverrides,
) -> Result<ScenarioConfig, CmdError> {
    let id = ScenarioId::parse(scenario)
        .ok_or_else(|| CmdError::InvalidConfig(format!("unknown scenario `{scenario}`")))?;
    let mut cfg = ScenarioConfig::new(id, seed);
    overrides.apply(&mut cfg).map_err(CmdError::InvalidConfig)?;
    Ok(cfg)
}

fn parse_filter_mode(mode: &str) -> Result<FilterMode, CmdError> {
    match mode {
        "do" => Ok(FilterMode::DoEsekf),
        "baseline" => Ok(FilterMode::Baseline),
        other => Err(CmdError::InvalidConfig(format!(
            "unknown filter mode `{other}` (expected `do` or `baseline`)"
        ))),
    }
}

fn run_one(
    cfg: &ScenarioConfig,
    mode: FilterMode,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, CmdError> {
    std::fs::create_dir_all(out_dir)
        .map_err(|e| CmdError::Io(format!("cannot create {}: {e}", out_dir.display())))?;
    let (trace, metrics) = run_scenario(cfg, mode).map_err(|e| {
        // flush a partial marker so an aborted run is visible
        let _ = std::fs::write(out_dir.join("ABORTED"), e.to_string());
        CmdError::Numerical(e.to_string())
    })?;
    let trace_path = out_dir.join("trace.csv");
    let metrics_path = out_dir.join("metrics.json");
    write_trace(&trace_path, &trace).map_err(CmdError::Io)?;
    write_metrics(&metrics_path, &metrics).map_err(CmdError::Io)?;
    Ok(vec![trace_path, metrics_path])
}

/// `simulate`: run one scenario (or a seed batch) and write trace, metrics,
/// and manifest files into the output directory.
pub fn cmd_simulate(
    scenario: &str,
    config: Option<&Path>,
    seed: u64,
    seeds: u64,
    out_dir: &Path,
    filter_mode: &str,
) -> Result<(), CmdError> {
    let started = Instant::now();
    let mode = parse_filter_mode(filter_mode)?;
    let (overrides, config_path) = load_overrides(config)?;
    let mut outputs = Vec::new();

    if seeds <= 1 {
        let cfg = build_config(scenario, seed, &overrides)?;
        outputs.extend(run_one(&cfg, mode, out_dir)?);
    } else {
        // one subdirectory per seed, run concurrently under the thread cap
        let cap = thread_cap();
        let all: Vec<u64> = (seed..seed + seeds).collect();
        for chunk in all.chunks(cap) {
            let results: Vec<Result<Vec<PathBuf>, CmdError>> = std::thread::scope(|scope| {
                let handles: Vec<_> = chunk
                    .iter()
                    .map(|&s| {
                        let overrides = &overrides;
                        let dir = out_dir.join(format!("seed_{s}"));
                        scope.spawn(move || {
                            let cfg = build_config(scenario, s, overrides)?;
                            run_one(&cfg, mode, &dir)
                        })
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("seed worker panicked"))
                    .collect()
            });
            for r in results {
                outputs.extend(r?);
            }
        }
    }

    let manifest = RunManifest {
        command: format!("simulate {scenario} --filter {filter_mode}"),
        config_path,
        config_hash: overrides.hash(),
        seed,
        version: version_string(),
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
        wall_time_s: started.elapsed().as_secs_f64(),
    };
    write_manifest(&out_dir.join("manifest.json"), &manifest).map_err(CmdError::Io)
}

/// `observability-table`: the 11-row rank table over sampled equilibria.
pub fn cmd_observability_table(
    config: Option<&Path>,
    out: Option<&Path>,
    samples: usize,
) -> Result<(), CmdError> {
    let started = Instant::now();
    let (overrides, config_path) = load_overrides(config)?;
    // parameters only; the scenario scaffolding is irrelevant here
    let cfg = build_config("point_stab", 0, &overrides)?;
    let eqs = generic_equilibria(&cfg.params, samples.max(1), 7);
    let rows = sweep_table(&cfg.params, &eqs).map_err(|e| CmdError::Numerical(e.to_string()))?;

    let mut text = String::from("combo,state_dim,rank,observable\n");
    for row in &rows {
        text.push_str(&format!(
            "{},{},{},{}\n",
            row.combo.label(),
            row.state_dim,
            row.rank,
            if row.observable { "Yes" } else { "No" }
        ));
    }
    for row in &rows {
        if !row.samples_agree {
            text.push_str(&format!(
                "# disagreement across equilibrium samples: {}\n",
                row.combo.label()
            ));
        }
    }

    match out {
        None => print!("{text}"),
        Some(path) => {
            std::fs::write(path, &text)
                .map_err(|e| CmdError::Io(format!("cannot write {}: {e}", path.display())))?;
            let manifest = RunManifest {
                command: format!("observability-table --samples {samples}"),
                config_path,
                config_hash: overrides.hash(),
                seed: 7,
                version: version_string(),
                outputs: vec![path.display().to_string()],
                wall_time_s: started.elapsed().as_secs_f64(),
            };
            let manifest_path = path.with_extension("manifest.json");
            write_manifest(&manifest_path, &manifest).map_err(CmdError::Io)?;
        }
    }
    Ok(())
}

/// `check`: run a named self-check suite.
pub fn cmd_check(suite: &str) -> Result<(), CmdError> {
    let run = |name: &str| -> Result<(), CmdError> {
        let result = match name {
            "manifold" => crate::checks::check_manifold(),
            "jacobians" => crate::checks::check_jacobians(),
            "energy" => crate::checks::check_energy(),
            other => {
                return Err(CmdError::InvalidConfig(format!(
                    "unknown check suite `{other}`"
                )))
            }
        };
        result.map_err(CmdError::Numerical)
    };
    match suite {
        "all" => {
            run("manifold")?;
            run("jacobians")?;
            run("energy")
        }
        name => run(name),
    }
}

/// Stream a trace to an arbitrary writer (used by tests to avoid temp files).
pub fn write_trace_to<W: Write>(
    w: &mut BufWriter<W>,
    trace: &[tetherkit_core::sim::TraceRecord],
) -> std::io::Result<()> {
    writeln!(w, "{}", trace_header())?;
    for r in trace {
        writeln!(w, "{}", trace_row(r))?;
    }
    w.flush()
}
