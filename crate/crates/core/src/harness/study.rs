//! Step-size convergence studies of the strong residual.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sobolev::least_squares_slope;
use crate::solutions::strong_residual_rms;

use super::config::ScenarioConfig;

/// Expected strong-residual order with additive noise.
pub const ADDITIVE_ORDER: f64 = 0.8;
/// Expected strong-residual order with multiplicative noise.
pub const MULTIPLICATIVE_ORDER: f64 = 0.4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyLevel {
    pub dt: f64,
    pub rms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub scenario: String,
    pub seed: u64,
    pub paths: usize,
    pub levels: Vec<StudyLevel>,
    /// Least-squares slope of `log rms` against `log dt`.
    pub slope: Option<f64>,
    pub expected_order: f64,
    pub pass: bool,
}

impl StudyResult {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "dt,rms")?;
        for l in &self.levels {
            writeln!(w, "{:e},{:e}", l.dt, l.rms)?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("study serializes")
    }
}

/// Default ladder: `4 dt, 2 dt, dt` from the configured step.
pub fn default_levels(cfg: &ScenarioConfig) -> Vec<f64> {
    vec![4.0 * cfg.grid.dt, 2.0 * cfg.grid.dt, cfg.grid.dt]
}

/// RMS over `budget.paths` paths of the strong residual at `grid.t_end` for
/// each step of a geometric ladder, replaying the same Brownian paths. Passes
/// when the fitted slope reaches 0.8 (additive noise) or 0.4 (multiplicative).
pub fn convergence_study(cfg: &ScenarioConfig, dts: &[f64]) -> Result<StudyResult> {
    cfg.validate()?;
    if dts.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "a convergence study needs at least 3 step sizes, got {}",
            dts.len()
        )));
    }
    let ratio = dts[1] / dts[0];
    let geometric = dts.windows(2).all(|w| ((w[1] / w[0]) / ratio - 1.0).abs() < 1e-9);
    if !geometric || !(ratio > 0.0) || (ratio - 1.0).abs() < 1e-12 {
        return Err(Error::InvalidArgument(format!(
            "step sizes {dts:?} do not form a geometric ladder"
        )));
    }
    let model = cfg.build_model();
    let discrete = cfg.initial_condition()?.discretize(cfg.grid.psi_nodes)?;
    let phi = cfg.test_function()?;
    let rms = strong_residual_rms(
        model.clone(),
        &discrete,
        phi.as_ref(),
        cfg.grid.t_end,
        dts,
        cfg.budget.paths,
        cfg.seed,
    )?;
    let levels: Vec<StudyLevel> = dts.iter().zip(&rms).map(|(&dt, &rms)| StudyLevel { dt, rms }).collect();
    let points: Vec<(f64, f64)> = levels
        .iter()
        .filter(|l| l.rms > 0.0)
        .map(|l| (l.dt.ln(), l.rms.ln()))
        .collect();
    let slope = least_squares_slope(&points);
    let expected_order = if model.additive_noise() {
        ADDITIVE_ORDER
    } else {
        MULTIPLICATIVE_ORDER
    };
    Ok(StudyResult {
        scenario: cfg.scenario.clone(),
        seed: cfg.seed,
        paths: cfg.budget.paths,
        pass: slope.is_some_and(|s| s >= expected_order),
        levels,
        slope,
        expected_order,
    })
}
