//! Scenario files: a system, run defaults and optional expected results.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use eigenset::{BilinearSystem, SquareMatrix};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub system: SystemSpec,
    #[serde(default)]
    pub defaults: Defaults,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected: Option<Expected>,
}

/// Matrices are row-major lists of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<Vec<f64>>>,
    pub u_lo: Vec<f64>,
    pub u_hi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Defaults {
    /// Angular samples of star sets.
    pub grid: usize,
    pub tau: f64,
    pub tol: f64,
    pub verify_tol: f64,
    pub verify_times: Vec<f64>,
    pub seed: u64,
    pub budget: usize,
    pub control_samples: usize,
    pub graph_bins: usize,
    pub graph_tau: f64,
    pub horizon: f64,
    pub max_iter: usize,
}

impl Default for Defaults {
    fn default() -> Self {
        Self {
            grid: 1024,
            tau: 0.05,
            tol: 1e-3,
            verify_tol: 0.03,
            verify_times: vec![0.25, 0.5, 1.0],
            seed: 7,
            budget: 200_000,
            control_samples: 32,
            graph_bins: 720,
            graph_tau: 0.05,
            horizon: 40.0,
            max_iter: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expected {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
    /// Invariant arcs as `[start, end]` in degrees.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arcs_deg: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub full_circle: Option<bool>,
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self> {
        let sc: Scenario = toml::from_str(text).map_err(|e| anyhow::anyhow!("scenario parse error: {e}"))?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn system(&self) -> Result<BilinearSystem> {
        let a = SquareMatrix::from_rows(&self.system.a).context("system.a")?;
        let bs = self
            .system
            .b
            .iter()
            .enumerate()
            .map(|(i, b)| SquareMatrix::from_rows(b).with_context(|| format!("system.b[{i}]")))
            .collect::<Result<Vec<_>>>()?;
        Ok(BilinearSystem::new(a, bs, self.system.u_lo.clone(), self.system.u_hi.clone())?)
    }

    /// Collects every problem instead of stopping at the first.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        let d = self.system.a.len();
        if d == 0 {
            problems.push("system.a is empty".to_string());
        }
        for (i, row) in self.system.a.iter().enumerate() {
            if row.len() != d {
                problems.push(format!("system.a row {i} has {} entries, expected {d}", row.len()));
            }
        }
        for (k, b) in self.system.b.iter().enumerate() {
            if b.len() != d || b.iter().any(|r| r.len() != d) {
                problems.push(format!("system.b[{k}] is not {d}x{d}"));
            }
        }
        let m = self.system.b.len();
        if self.system.u_lo.len() != m {
            problems.push(format!("system.u_lo has {} entries, expected {m}", self.system.u_lo.len()));
        }
        if self.system.u_hi.len() != m {
            problems.push(format!("system.u_hi has {} entries, expected {m}", self.system.u_hi.len()));
        }
        if self.system.u_lo.iter().zip(&self.system.u_hi).any(|(l, h)| !(l <= h)) {
            problems.push("system.u_lo must not exceed system.u_hi".to_string());
        }
        let df = &self.defaults;
        if df.grid < 16 {
            problems.push(format!("defaults.grid = {} is below 16", df.grid));
        }
        if !(df.tau > 0.0) {
            problems.push("defaults.tau must be positive".to_string());
        }
        if !(df.tol > 0.0) || !(df.verify_tol > 0.0) {
            problems.push("defaults.tol and defaults.verify_tol must be positive".to_string());
        }
        if df.control_samples == 0 || df.max_iter == 0 || df.budget == 0 {
            problems.push("defaults.control_samples, max_iter and budget must be positive".to_string());
        }
        if df.graph_bins < 90 {
            problems.push(format!("defaults.graph_bins = {} is below 90", df.graph_bins));
        }
        if !(df.graph_tau > 0.0) || !(df.horizon > 0.0) {
            problems.push("defaults.graph_tau and defaults.horizon must be positive".to_string());
        }
        if df.verify_times.is_empty() || df.verify_times.iter().any(|t| !(*t > 0.0)) {
            problems.push("defaults.verify_times must be nonempty and positive".to_string());
        }
        if !problems.is_empty() {
            bail!("invalid scenario '{}':\n  {}", self.name, problems.join("\n  "));
        }
        self.system().map(|_| ())
    }
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Scenario::parse(&text).with_context(|| format!("loading {}", path.display()))
}

/// Scenarios shipped with the crate.
pub fn bundled(name: &str) -> Option<&'static str> {
    match name {
        "example1" => Some(include_str!("../scenarios/example1.toml")),
        "example2" => Some(include_str!("../scenarios/example2.toml")),
        "trivial" => Some(include_str!("../scenarios/trivial.toml")),
        _ => None,
    }
}

/// A path, or `bundled:NAME` for a shipped scenario.
pub fn resolve(spec: &str) -> Result<Scenario> {
    if let Some(name) = spec.strip_prefix("bundled:") {
        let text = bundled(name).with_context(|| format!("no bundled scenario named '{name}'"))?;
        return Scenario::parse(text);
    }
    load_scenario(Path::new(spec))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_examples_load() {
        let s = resolve("bundled:example1").unwrap();
        assert_eq!(s.system.a, vec![vec![-1.0, 1.0], vec![1.0, 1.0]]);
        assert_eq!(s.system.b, vec![vec![vec![1.0, 1.0], vec![1.0, -1.0]]]);
        assert_eq!((s.system.u_lo.clone(), s.system.u_hi.clone()), (vec![-1.0], vec![1.0]));
        let s = resolve("bundled:example2").unwrap();
        assert_eq!(s.system.a, vec![vec![1.0, -2.0], vec![2.0, 1.0]]);
        assert_eq!(s.system.b, vec![vec![vec![-1.0, -2.0], vec![2.0, -1.0]]]);
        assert!(resolve("bundled:trivial").is_ok());
        assert!(resolve("bundled:nope").is_err());
    }

    #[test]
    fn round_trip_is_stable() {
        for name in ["example1", "example2", "trivial"] {
            let s = Scenario::parse(bundled(name).unwrap()).unwrap();
            let again = Scenario::parse(&s.to_toml().unwrap()).unwrap();
            assert_eq!(s, again);
        }
    }

    #[test]
    fn unknown_key_is_named() {
        let text = bundled("example1").unwrap().replace("u_hi", "u_top");
        let err = format!("{:#}", Scenario::parse(&text).unwrap_err());
        assert!(err.contains("u_top"), "{err}");
        assert!(err.contains("line"), "{err}");
    }

    #[test]
    fn inconsistent_dimensions_are_listed() {
        let text = "name = \"bad\"\n[system]\na = [[1.0, 0.0], [0.0]]\nb = [[[1.0]]]\nu_lo = [0.0, 1.0]\nu_hi = [1.0]\n";
        let err = format!("{:#}", Scenario::parse(text).unwrap_err());
        assert!(err.contains("row 1") && err.contains("b[0]") && err.contains("u_lo"), "{err}");
    }

    #[test]
    fn missing_defaults_fall_back() {
        let text = "name = \"m\"\n[system]\na = [[0.0, 0.0], [0.0, 0.0]]\nb = [[[0.0, 0.0], [0.0, 0.0]]]\nu_lo = [-1.0]\nu_hi = [1.0]\n";
        let s = Scenario::parse(text).unwrap();
        assert_eq!(s.defaults, Defaults::default());
    }
}
