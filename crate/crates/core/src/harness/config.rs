//! Scenario configuration: TOML with nested sections, or the same document
//! as JSON.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::basis::multi_index::MultiIndex;
use crate::error::{Error, Result};
use crate::model::{GaussianModel, OrnsteinUhlenbeck, SdeModel, TrigModel};
use crate::solutions::InitialCondition;
use crate::testfn::{Bump, Coordinate, HermiteFunction, TestFunction};

/// The closed registry of built-in scenarios.
pub const SCENARIOS: [&str; 3] = ["gaussian", "ou", "trig"];

/// Identity checks understood by `run_scenario`.
pub const CHECKS: [&str; 8] = [
    "strong",
    "mild",
    "martingale",
    "generator",
    "monotonicity",
    "support",
    "norms",
    "tv",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// One of [`SCENARIOS`].
    pub scenario: String,
    /// Mandatory; there is no clock-derived default.
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Checks run by `run_scenario`; empty means all of [`CHECKS`].
    #[serde(default)]
    pub checks: Vec<String>,
    #[serde(default)]
    pub model: ModelParams,
    #[serde(default)]
    pub psi: PsiSpec,
    #[serde(default)]
    pub test_function: TestFunctionSpec,
    #[serde(default)]
    pub grid: GridParams,
    #[serde(default)]
    pub budget: Budget,
    #[serde(default)]
    pub tolerance: Tolerances,
    #[serde(default)]
    pub support: SupportParams,
    #[serde(default)]
    pub norms: NormParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelParams {
    pub dim: usize,
    /// OU mean reversion.
    pub lambda: f64,
    /// OU noise scale.
    pub s: f64,
    /// Trig diffusion amplitude: `sigma = 1 + amplitude sin x`.
    pub amplitude: f64,
    /// Trig drift amplitude: `b = drift_amplitude sin x`.
    pub drift_amplitude: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            dim: 1,
            lambda: 1.0,
            s: 1.0,
            amplitude: 0.5,
            drift_amplitude: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PsiSpec {
    Bump {
        amplitude: f64,
        center: Vec<f64>,
        scale: f64,
    },
    Delta {
        point: Vec<f64>,
    },
    DerivativeDelta {
        point: Vec<f64>,
        axis: usize,
    },
}

impl Default for PsiSpec {
    fn default() -> Self {
        PsiSpec::Delta { point: vec![0.0] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TestFunctionSpec {
    Hermite {
        index: Vec<usize>,
    },
    Bump {
        amplitude: f64,
        center: Vec<f64>,
        scale: f64,
    },
    Coordinate {
        axis: usize,
    },
}

impl Default for TestFunctionSpec {
    fn default() -> Self {
        TestFunctionSpec::Hermite { index: vec![0] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridParams {
    pub t_end: f64,
    pub dt: f64,
    /// Hermite truncation `N`.
    pub truncation: usize,
    /// Gauss–Legendre nodes per axis over a smooth `psi`.
    pub psi_nodes: usize,
}

impl Default for GridParams {
    fn default() -> Self {
        Self {
            t_end: 0.5,
            dt: 1e-3,
            truncation: 60,
            psi_nodes: 64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Budget {
    /// Outer paths for pathwise checks.
    pub paths: usize,
    /// Paths for expectation-level Monte Carlo checks.
    pub mc_paths: usize,
    /// Inner paths per nested semigroup estimate.
    pub inner_paths: usize,
    /// Random bumps for the monotonicity sweep.
    pub trials: usize,
}

impl Default for Budget {
    fn default() -> Self {
        Self {
            paths: 50,
            mc_paths: 10_000,
            inner_paths: 256,
            trials: 50,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// `c` in the allowance `c sqrt(dt)`.
    pub c: f64,
    pub monotonicity: f64,
    pub leakage: f64,
    /// Relative change allowed between the last two variation levels.
    pub tv_change: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            c: 1.0,
            monotonicity: 1e-5,
            leakage: 1e-4,
            tv_change: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SupportParams {
    pub radius: f64,
    pub outside_center: Vec<f64>,
    pub outside_scale: f64,
}

impl Default for SupportParams {
    fn default() -> Self {
        Self {
            radius: 2.0,
            outside_center: vec![3.0],
            outside_scale: 0.9,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NormParams {
    pub p: Vec<f64>,
    pub n_max: usize,
    pub point: Vec<f64>,
    pub gamma: Vec<usize>,
    /// Sobolev index of the variation and moment diagnostics.
    pub q: f64,
    pub tv_levels: usize,
}

impl Default for NormParams {
    fn default() -> Self {
        Self {
            p: vec![0.25, 0.5, 2.0],
            n_max: 4000,
            point: vec![0.0],
            gamma: vec![0],
            q: 1.0,
            tv_levels: 4,
        }
    }
}

/// Command-line style overrides of individual fields.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub dt: Option<f64>,
    /// Sets `grid.t_end = steps * dt`.
    pub steps: Option<usize>,
    pub paths: Option<usize>,
    pub inner_paths: Option<usize>,
    pub truncation: Option<usize>,
}

fn section<'a>(table: &'a mut toml::Table, name: &str) -> Result<&'a mut toml::Table> {
    table
        .entry(name)
        .or_insert_with(|| toml::Value::Table(toml::Table::new()))
        .as_table_mut()
        .ok_or_else(|| Error::Parse(format!("`{name}` must be a section")))
}

fn int(v: usize) -> Result<toml::Value> {
    i64::try_from(v)
        .map(toml::Value::Integer)
        .map_err(|_| Error::Parse(format!("{v} does not fit a config integer")))
}

impl Overrides {
    fn apply(&self, table: &mut toml::Table) -> Result<()> {
        if let Some(seed) = self.seed {
            let v = i64::try_from(seed).map_err(|_| Error::Parse(format!("`seed` {seed} exceeds i64::MAX")))?;
            table.insert("seed".into(), toml::Value::Integer(v));
        }
        if let Some(out) = &self.out {
            table.insert("out".into(), toml::Value::String(out.display().to_string()));
        }
        if let Some(dt) = self.dt {
            section(table, "grid")?.insert("dt".into(), toml::Value::Float(dt));
        }
        if let Some(steps) = self.steps {
            let grid = section(table, "grid")?;
            let dt = match grid.get("dt") {
                Some(toml::Value::Float(v)) => *v,
                Some(toml::Value::Integer(v)) => *v as f64,
                Some(_) => return Err(Error::Parse("`grid.dt` must be a number".into())),
                None => GridParams::default().dt,
            };
            grid.insert("t_end".into(), toml::Value::Float(steps as f64 * dt));
        }
        if let Some(n) = self.truncation {
            section(table, "grid")?.insert("truncation".into(), int(n)?);
        }
        if let Some(n) = self.paths {
            section(table, "budget")?.insert("paths".into(), int(n)?);
        }
        if let Some(n) = self.inner_paths {
            section(table, "budget")?.insert("inner_paths".into(), int(n)?);
        }
        Ok(())
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Parse(format!("`{name}` must be positive, got {v}")))
    }
}

fn at_least(name: &str, v: usize, min: usize) -> Result<()> {
    if v >= min {
        Ok(())
    } else {
        Err(Error::Parse(format!("`{name}` must be at least {min}, got {v}")))
    }
}

impl ScenarioConfig {
    /// Defaults for a registry scenario; the seed is still required.
    pub fn new(scenario: &str, seed: u64) -> Result<Self> {
        let cfg = Self {
            scenario: scenario.to_owned(),
            seed,
            out: None,
            checks: Vec::new(),
            model: ModelParams::default(),
            psi: PsiSpec::default(),
            test_function: TestFunctionSpec::default(),
            grid: GridParams::default(),
            budget: Budget::default(),
            tolerance: Tolerances::default(),
            support: SupportParams::default(),
            norms: NormParams::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses TOML, or JSON when the text starts with `{`.
    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_with(text, &Overrides::default())
    }

    /// Parses and applies `overrides` before validation, so an override can
    /// supply a field the document lacks.
    pub fn parse_with(text: &str, overrides: &Overrides) -> Result<Self> {
        let mut table: toml::Table = if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?
        } else {
            toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?
        };
        overrides.apply(&mut table)?;
        let cfg: Self = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse_with(&text, overrides)
    }

    /// Registry defaults for `scenario` plus overrides; the seed must come
    /// from the overrides.
    pub fn from_overrides(scenario: &str, overrides: &Overrides) -> Result<Self> {
        let text = format!("scenario = {}", toml::Value::String(scenario.to_owned()));
        Self::parse_with(&text, overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if !SCENARIOS.contains(&self.scenario.as_str()) {
            return Err(Error::Parse(format!(
                "`scenario` must be one of {SCENARIOS:?}, got {:?}",
                self.scenario
            )));
        }
        for c in &self.checks {
            if !CHECKS.contains(&c.as_str()) {
                return Err(Error::Parse(format!("`checks` entry {c:?} is not one of {CHECKS:?}")));
            }
        }
        let d = self.model.dim;
        if !(1..=3).contains(&d) {
            return Err(Error::Parse(format!("`model.dim` must be 1, 2 or 3, got {d}")));
        }
        if self.scenario == "trig" && d != 1 {
            return Err(Error::Parse("`model.dim` must be 1 for the trig scenario".into()));
        }
        positive("model.lambda", self.model.lambda)?;
        positive("model.s", self.model.s)?;
        if !(self.model.amplitude.abs() < 1.0) {
            return Err(Error::Parse(format!(
                "`model.amplitude` must lie in (-1, 1) to keep sigma nondegenerate, got {}",
                self.model.amplitude
            )));
        }
        positive("grid.t_end", self.grid.t_end)?;
        positive("grid.dt", self.grid.dt)?;
        at_least("grid.truncation", self.grid.truncation, 1)?;
        at_least("grid.psi_nodes", self.grid.psi_nodes, 2)?;
        at_least("budget.paths", self.budget.paths, 2)?;
        at_least("budget.mc_paths", self.budget.mc_paths, 2)?;
        at_least("budget.inner_paths", self.budget.inner_paths, 2)?;
        at_least("budget.trials", self.budget.trials, 1)?;
        if !(self.tolerance.c >= 0.0) {
            return Err(Error::Parse(format!(
                "`tolerance.c` must be nonnegative, got {}",
                self.tolerance.c
            )));
        }
        positive("tolerance.monotonicity", self.tolerance.monotonicity)?;
        positive("tolerance.leakage", self.tolerance.leakage)?;
        positive("tolerance.tv_change", self.tolerance.tv_change)?;
        positive("support.radius", self.support.radius)?;
        positive("support.outside_scale", self.support.outside_scale)?;
        at_least("norms.n_max", self.norms.n_max, 4)?;
        at_least("norms.tv_levels", self.norms.tv_levels, 2)?;
        for &p in &self.norms.p {
            if !p.is_finite() {
                return Err(Error::Parse(format!("`norms.p` entry {p} is not finite")));
            }
        }
        let dims = [
            ("psi", self.psi_dim()),
            ("test_function", self.test_function_dim()),
            ("support.outside_center", Some(self.support.outside_center.len())),
            ("norms.point", Some(self.norms.point.len())),
            ("norms.gamma", Some(self.norms.gamma.len())),
        ];
        for (name, dim) in dims {
            if let Some(k) = dim {
                if k != d {
                    return Err(Error::Parse(format!("`{name}` has dimension {k}, the model has {d}")));
                }
            }
        }
        if let PsiSpec::Bump { scale, .. } = &self.psi {
            positive("psi.scale", *scale)?;
        }
        if let TestFunctionSpec::Bump { scale, .. } = &self.test_function {
            positive("test_function.scale", *scale)?;
        }
        Ok(())
    }

    fn psi_dim(&self) -> Option<usize> {
        Some(match &self.psi {
            PsiSpec::Bump { center, .. } => center.len(),
            PsiSpec::Delta { point } | PsiSpec::DerivativeDelta { point, .. } => point.len(),
        })
    }

    fn test_function_dim(&self) -> Option<usize> {
        match &self.test_function {
            TestFunctionSpec::Hermite { index } => Some(index.len()),
            TestFunctionSpec::Bump { center, .. } => Some(center.len()),
            TestFunctionSpec::Coordinate { .. } => None,
        }
    }

    /// Checks to run, in registry order.
    pub fn selected_checks(&self) -> Vec<&'static str> {
        CHECKS
            .iter()
            .copied()
            .filter(|c| self.checks.is_empty() || self.checks.iter().any(|s| s == c))
            .collect()
    }

    pub fn build_model(&self) -> Arc<dyn SdeModel<f64>> {
        let m = &self.model;
        match self.scenario.as_str() {
            "gaussian" => Arc::new(GaussianModel::new(m.dim)),
            "ou" => Arc::new(self.ou_model()),
            "trig" => Arc::new(TrigModel::new(m.amplitude, m.drift_amplitude)),
            other => unreachable!("scenario {other} passed validation"),
        }
    }

    pub fn ou_model(&self) -> OrnsteinUhlenbeck<f64> {
        OrnsteinUhlenbeck::new(self.model.dim, self.model.lambda, self.model.s)
    }

    pub fn initial_condition(&self) -> Result<InitialCondition<f64>> {
        match &self.psi {
            PsiSpec::Bump {
                amplitude,
                center,
                scale,
            } => InitialCondition::bump(*amplitude, center.clone(), *scale),
            PsiSpec::Delta { point } => Ok(InitialCondition::delta(point.clone())),
            PsiSpec::DerivativeDelta { point, axis } => {
                if *axis >= point.len() {
                    return Err(Error::Parse(format!(
                        "`psi.axis` {axis} out of range for dimension {}",
                        point.len()
                    )));
                }
                InitialCondition::derivative_delta(point.clone(), &MultiIndex::unit(point.len(), *axis))
            }
        }
    }

    pub fn test_function(&self) -> Result<Arc<dyn TestFunction<f64>>> {
        Ok(match &self.test_function {
            TestFunctionSpec::Hermite { index } => Arc::new(HermiteFunction::new(MultiIndex::new(index.clone()))),
            TestFunctionSpec::Bump {
                amplitude,
                center,
                scale,
            } => Arc::new(Bump::new(*amplitude, center.clone(), *scale)?),
            TestFunctionSpec::Coordinate { axis } => {
                if *axis >= self.model.dim {
                    return Err(Error::Parse(format!(
                        "`test_function.axis` {axis} out of range for dimension {}",
                        self.model.dim
                    )));
                }
                Arc::new(Coordinate {
                    dim: self.model.dim,
                    axis: *axis,
                })
            }
        })
    }

    pub fn outside_bump(&self) -> Result<Bump<f64>> {
        Bump::new(1.0, self.support.outside_center.clone(), self.support.outside_scale)
    }

    /// Output directory, defaulting to `hermflow-out/<scenario>`.
    pub fn out_dir(&self) -> PathBuf {
        self.out
            .clone()
            .unwrap_or_else(|| PathBuf::from("hermflow-out").join(&self.scenario))
    }
}
