//! Monte Carlo reports and their text/JSON renderings.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::config::ExperimentConfig;
use crate::selection::Penalty;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    Text,
    Json,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "text" => Ok(ReportFormat::Text),
            "json" => Ok(ReportFormat::Json),
            _ => Err(Error::InvalidArgument(format!(
                "unknown format {s:?} (expected text or json)"
            ))),
        }
    }
}

impl fmt::Display for ReportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReportFormat::Text => "text",
            ReportFormat::Json => "json",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionRates {
    pub penalty: Penalty,
    pub n: usize,
    pub completed: usize,
    pub failed: usize,
    /// Percentages of completed replications.
    pub wrong: f64,
    #[serde(rename = "true")]
    pub true_model: f64,
    pub overfitted: f64,
    /// How often each model was selected.
    pub selected: BTreeMap<String, usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RejectionRate {
    pub completed: usize,
    pub failed: usize,
    /// Percentage of completed replications rejecting at the configured level.
    pub rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestRates {
    pub k: usize,
    pub n: usize,
    pub size: RejectionRate,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power: Option<RejectionRate>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailureNote {
    pub replication: usize,
    pub n: usize,
    pub stage: String,
    pub message: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Selection,
    SizePower,
}

/// Outcome of a Monte Carlo experiment. Holds no timing information, so
/// identical configurations produce identical documents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub kind: ExperimentKind,
    pub version: String,
    pub config: ExperimentConfig,
    pub selection: Vec<SelectionRates>,
    #[serde(default)]
    pub tests: Vec<TestRates>,
    #[serde(default)]
    pub failures: Vec<FailureNote>,
}

pub(crate) fn percent(count: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        100.0 * count as f64 / total as f64
    }
}

impl McReport {
    pub fn selection_for(&self, penalty: &Penalty, n: usize) -> Option<&SelectionRates> {
        self.selection
            .iter()
            .find(|r| &r.penalty == penalty && r.n == n)
    }

    pub fn test_for(&self, k: usize, n: usize) -> Option<&TestRates> {
        self.tests.iter().find(|r| r.k == k && r.n == n)
    }

    /// No replication completed anywhere.
    pub fn is_empty(&self) -> bool {
        self.selection.iter().all(|r| r.completed == 0)
            && self
                .tests
                .iter()
                .all(|t| t.size.completed == 0 && t.power.as_ref().is_none_or(|p| p.completed == 0))
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_text(&self) -> String {
        let cfg = &self.config;
        let mut out = format!(
            "{}: {} replications, base seed {}\n",
            cfg.name, cfg.replications, cfg.base_seed
        );
        if !self.selection.is_empty() {
            out.push_str("\nPercentage of selected models\n");
            let cols: Vec<&SelectionRates> = self.selection.iter().collect();
            out.push_str(&format!("{:<12}", "n"));
            for c in &cols {
                out.push_str(&format!("{:>12}", c.n));
            }
            out.push_str(&format!("\n{:<12}", "penalty"));
            for c in &cols {
                out.push_str(&format!("{:>12}", c.penalty.short_label()));
            }
            out.push('\n');
            type Pick = fn(&SelectionRates) -> f64;
            let rows: [(&str, Pick); 3] = [
                ("wrong", |r| r.wrong),
                ("true", |r| r.true_model),
                ("overfitted", |r| r.overfitted),
            ];
            for (name, pick) in rows {
                out.push_str(&format!("{name:<12}"));
                for c in &cols {
                    out.push_str(&format!("{:>12.1}", pick(c)));
                }
                out.push('\n');
            }
            out.push_str(&format!("{:<12}", "failed"));
            for c in &cols {
                out.push_str(&format!("{:>12}", c.failed));
            }
            out.push('\n');
        }
        if !self.tests.is_empty() {
            out.push_str(&format!(
                "\nPortmanteau rejections at level {} (%)\n{:<6}{:>8}{:>10}{:>10}\n",
                cfg.level, "K", "n", "size", "power"
            ));
            for t in &self.tests {
                let power = t
                    .power
                    .as_ref()
                    .map_or("-".to_string(), |p| format!("{:.1}", p.rate));
                out.push_str(&format!(
                    "{:<6}{:>8}{:>10.1}{:>10}\n",
                    t.k, t.n, t.size.rate, power
                ));
            }
        }
        if !self.failures.is_empty() {
            out.push_str(&format!("\n{} failures\n", self.failures.len()));
            for f in &self.failures {
                out.push_str(&format!(
                    "  replication {} n = {} [{}]: {}\n",
                    f.replication, f.n, f.stage, f.message
                ));
            }
        }
        out
    }
}

/// Anything the CLI writes as a report.
pub trait Report: Serialize {
    fn to_text(&self) -> String;

    fn is_empty(&self) -> bool {
        false
    }
}

impl Report for McReport {
    fn to_text(&self) -> String {
        McReport::to_text(self)
    }

    fn is_empty(&self) -> bool {
        McReport::is_empty(self)
    }
}

/// Renders `report`; empty reports are refused.
pub fn render_report<R: Report>(report: &R, format: ReportFormat) -> Result<String> {
    if report.is_empty() {
        return Err(Error::AllReplicationsFailed);
    }
    Ok(match format {
        ReportFormat::Text => report.to_text(),
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(report)?;
            s.push('\n');
            s
        }
    })
}

pub fn emit_report<R: Report>(report: &R, format: ReportFormat, path: &Path) -> Result<()> {
    let s = render_report(report, format)?;
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}
