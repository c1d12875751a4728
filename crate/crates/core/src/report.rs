//! Verification reports: residual series, error bars and a pass flag.
//!
//! Every series point carries the bound it must respect, typically
//! `3 sigma + c sqrt(dt)` or a fixed tolerance, and a report passes exactly
//! when `max |residual| / bound <= 1`.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub t: f64,
    pub residual: f64,
    pub sigma: f64,
    pub bound: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub rms: f64,
    pub max: f64,
    /// `max |residual| / bound` over the series.
    pub worst_ratio: f64,
    pub tolerance: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub identity: String,
    pub scenario: String,
    pub seed: u64,
    pub params: BTreeMap<String, serde_json::Value>,
    pub series: Vec<SeriesPoint>,
    pub summary: Summary,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    /// Wall-clock seconds; left out of the payload so reruns compare equal.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runtime_seconds: Option<f64>,
}

impl VerificationReport {
    /// Pretty JSON without the runtime field. Identical inputs give
    /// byte-identical payloads.
    pub fn payload_json(&self) -> String {
        let mut copy = self.clone();
        copy.runtime_seconds = None;
        serde_json::to_string_pretty(&copy).expect("report serializes")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| crate::error::Error::Parse(e.to_string()))
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,residual,sigma,bound,label")?;
        for p in &self.series {
            writeln!(
                w,
                "{:e},{:e},{:e},{:e},{}",
                p.t,
                p.residual,
                p.sigma,
                p.bound,
                p.label.as_deref().unwrap_or("")
            )?;
        }
        Ok(())
    }

    /// One line for terminal output.
    pub fn headline(&self) -> String {
        format!(
            "{} {} [{}]: rms {:.3e}, max {:.3e}, worst ratio {:.3}",
            if self.pass { "PASS" } else { "FAIL" },
            self.identity,
            self.scenario,
            self.summary.rms,
            self.summary.max,
            self.summary.worst_ratio
        )
    }
}

pub struct ReportBuilder {
    identity: String,
    scenario: String,
    seed: u64,
    params: BTreeMap<String, serde_json::Value>,
    series: Vec<SeriesPoint>,
    tolerance: String,
    notes: Vec<String>,
    forced_failure: bool,
}

impl ReportBuilder {
    pub fn new(identity: impl Into<String>, scenario: impl Into<String>, seed: u64) -> Self {
        Self {
            identity: identity.into(),
            scenario: scenario.into(),
            seed,
            params: BTreeMap::new(),
            series: Vec::new(),
            tolerance: String::new(),
            notes: Vec::new(),
            forced_failure: false,
        }
    }

    pub fn param(mut self, key: &str, value: impl Serialize) -> Self {
        self.set_param(key, value);
        self
    }

    pub fn set_param(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).unwrap_or(serde_json::Value::Null);
        self.params.insert(key.to_owned(), v);
    }

    pub fn tolerance(mut self, rule: impl Into<String>) -> Self {
        self.tolerance = rule.into();
        self
    }

    pub fn point(&mut self, t: f64, residual: f64, sigma: f64, bound: f64) {
        self.series.push(SeriesPoint {
            t,
            residual,
            sigma,
            bound,
            label: None,
        });
    }

    pub fn labeled_point(&mut self, label: impl Into<String>, t: f64, residual: f64, sigma: f64, bound: f64) {
        self.series.push(SeriesPoint {
            t,
            residual,
            sigma,
            bound,
            label: Some(label.into()),
        });
    }

    pub fn note(&mut self, note: impl Into<String>) {
        self.notes.push(note.into());
    }

    /// Marks the report failed regardless of the series, with a reason.
    pub fn fail(&mut self, reason: impl Into<String>) {
        self.forced_failure = true;
        self.notes.push(reason.into());
    }

    pub fn build(self) -> VerificationReport {
        let n = self.series.len().max(1) as f64;
        let rms = (self.series.iter().map(|p| p.residual * p.residual).sum::<f64>() / n).sqrt();
        let max = self.series.iter().map(|p| p.residual.abs()).fold(0.0, f64::max);
        let mut worst_ratio = 0.0f64;
        let mut finite = true;
        for p in &self.series {
            let r = p.residual.abs();
            if !r.is_finite() || !p.bound.is_finite() {
                finite = false;
                continue;
            }
            let ratio = if r == 0.0 {
                0.0
            } else if p.bound > 0.0 {
                r / p.bound
            } else {
                f64::INFINITY
            };
            worst_ratio = worst_ratio.max(ratio);
        }
        let pass = finite && !self.forced_failure && worst_ratio <= 1.0;
        VerificationReport {
            identity: self.identity,
            scenario: self.scenario,
            seed: self.seed,
            params: self.params,
            series: self.series,
            summary: Summary {
                rms,
                max,
                worst_ratio: if worst_ratio.is_finite() { worst_ratio } else { f64::MAX },
                tolerance: self.tolerance,
            },
            pass,
            notes: self.notes,
            runtime_seconds: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pass_iff_every_point_within_its_bound() {
        let mut b = ReportBuilder::new("strong", "gaussian", 7).tolerance("3 sigma");
        b.point(0.0, 0.0, 0.0, 0.0);
        b.point(0.1, 0.2, 0.1, 0.3);
        let r = b.build();
        assert!(r.pass);
        assert!((r.summary.worst_ratio - 2.0 / 3.0).abs() < 1e-15);

        let mut b = ReportBuilder::new("strong", "gaussian", 7);
        b.point(0.1, -0.4, 0.1, 0.3);
        assert!(!b.build().pass);

        let mut b = ReportBuilder::new("strong", "gaussian", 7);
        b.point(0.1, f64::NAN, 0.1, 0.3);
        assert!(!b.build().pass);
    }

    #[test]
    fn payload_drops_runtime_and_round_trips() {
        let mut b = ReportBuilder::new("mild", "ou", 3).param("dt", 1e-3);
        b.labeled_point("trial-0", 0.5, 1e-4, 2e-5, 1e-3);
        let mut r = b.build();
        let payload = r.payload_json();
        r.runtime_seconds = Some(1.25);
        assert_eq!(r.payload_json(), payload);
        assert!(r.to_json().contains("runtime_seconds"));
        let back = VerificationReport::from_json(&payload).unwrap();
        assert_eq!(back.series, r.series);
        assert_eq!(back.params["dt"], serde_json::json!(1e-3));
    }

    #[test]
    fn forced_failure() {
        let mut b = ReportBuilder::new("support", "gaussian", 1);
        b.point(0.0, 0.0, 0.0, 1.0);
        b.fail("precondition violated");
        let r = b.build();
        assert!(!r.pass);
        assert_eq!(r.notes, vec!["precondition violated".to_string()]);
    }
}
