//! Flat key-value run configuration.
//!
//! One file fully determines a run: physical parameters mirror the benchmark
//! names (`m0`, `j0`, `rho1`, ...), `qk_scale`/`rk_scale` scale the scenario's
//! noise matrices, and the loop keys pick the rates and duration. Lines are
//! `key = value`; `#` starts a comment.

use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use tetherkit_core::sim::ScenarioConfig;

/// Parsed overrides, kept sorted for canonical hashing.
#[derive(Debug, Clone, Default)]
pub struct RunOverrides {
    entries: BTreeMap<String, f64>,
}

const KEYS: &[&str] = &[
    "m0", "m1", "m2", "j0", "rho1", "rho2", "l1", "l2", "g", "qk_scale", "rk_scale", "dt_truth",
    "dt_filter", "duration",
];

impl RunOverrides {
    /// Parse a config file. Unknown keys and malformed lines are errors.
    pub fn from_file(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected `key = value`", lineno + 1))?;
            let key = key.trim();
            if !KEYS.contains(&key) {
                return Err(format!("line {}: unknown key `{key}`", lineno + 1));
            }
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|_| format!("line {}: invalid number for `{key}`", lineno + 1))?;
            if entries.insert(key.to_string(), value).is_some() {
                return Err(format!("line {}: duplicate key `{key}`", lineno + 1));
            }
        }
        Ok(RunOverrides { entries })
    }

    /// Apply the overrides on top of a scenario's defaults.
    pub fn apply(&self, cfg: &mut ScenarioConfig) -> Result<(), String> {
        for (key, &value) in &self.entries {
            match key.as_str() {
                "m0" => cfg.params.m0 = value,
                "m1" => cfg.params.m1 = value,
                "m2" => cfg.params.m2 = value,
                "j0" => cfg.params.j0 = value,
                "rho1" => cfg.params.rho1 = value,
                "rho2" => cfg.params.rho2 = value,
                "l1" => cfg.params.l1 = value,
                "l2" => cfg.params.l2 = value,
                "g" => cfg.params.g = value,
                "qk_scale" => cfg.noise.q *= value,
                "rk_scale" => cfg.noise.r *= value,
                "dt_truth" => cfg.dt_truth = value,
                "dt_filter" => cfg.dt_filter = value,
                "duration" => cfg.duration = value,
                _ => unreachable!("key list checked at parse time"),
            }
            let positive = matches!(
                key.as_str(),
                "m0" | "m1" | "m2" | "j0" | "rho1" | "rho2" | "l1" | "l2" | "dt_truth"
                    | "dt_filter"
                    | "duration"
            );
            if positive && !(value > 0.0 && value.is_finite()) {
                return Err(format!("`{key}` must be positive and finite, got {value}"));
            }
        }
        if cfg.dt_filter < cfg.dt_truth {
            return Err(format!(
                "dt_filter ({}) must be >= dt_truth ({})",
                cfg.dt_filter, cfg.dt_truth
            ));
        }
        Ok(())
    }

    /// Canonical text form: sorted `key = value` lines at full precision.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        for (key, value) in &self.entries {
            let _ = writeln!(out, "{key} = {value:e}");
        }
        out
    }

    /// SHA-256 of the canonical form, hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        let mut out = String::with_capacity(64);
        for byte in digest {
            let _ = write!(out, "{byte:02x}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tetherkit_core::sim::ScenarioId;

    #[test]
    fn parses_and_applies() {
        let ov = RunOverrides::parse("m0 = 0.5\nduration = 10 # short\n\n# c\n").unwrap();
        let mut cfg = ScenarioConfig::new(ScenarioId::PointStab, 0);
        ov.apply(&mut cfg).unwrap();
        assert_eq!(cfg.params.m0, 0.5);
        assert_eq!(cfg.duration, 10.0);
    }

    #[test]
    fn rejects_unknown_key() {
        assert!(RunOverrides::parse("bogus = 1\n").is_err());
    }

    #[test]
    fn rejects_nonpositive_mass() {
        let ov = RunOverrides::parse("m0 = -1\n").unwrap();
        let mut cfg = ScenarioConfig::new(ScenarioId::PointStab, 0);
        assert!(ov.apply(&mut cfg).is_err());
    }

    #[test]
    fn hash_is_order_independent() {
        let a = RunOverrides::parse("m0 = 0.5\nl1 = 2\n").unwrap();
        let b = RunOverrides::parse("l1 = 2\nm0 = 0.5\n").unwrap();
        assert_eq!(a.hash(), b.hash());
    }

    #[test]
    fn noise_scales_multiply() {
        let ov = RunOverrides::parse("qk_scale = 2\nrk_scale = 0.5\n").unwrap();
        let mut cfg = ScenarioConfig::new(ScenarioId::PointStab, 0);
        let q0 = cfg.noise.q[(0, 0)];
        let r0 = cfg.noise.r[(0, 0)];
        ov.apply(&mut cfg).unwrap();
        assert_eq!(cfg.noise.q[(0, 0)], 2.0 * q0);
        assert_eq!(cfg.noise.r[(0, 0)], 0.5 * r0);
    }
}
