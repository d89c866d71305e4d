//! Select under each penalty, then test each winner.

use serde::{Deserialize, Serialize};

use crate::diagnostics::{portmanteau_in, PortmanteauReport, VForm};
use crate::error::{Error, Result};
use crate::estimation::{attach_covariance, OptimizerOptions};
use crate::harness::report::Report;
use crate::models::{ModelSpec, TimeSeries};
use crate::selection::{fit_candidates, penalty_value, rank, Penalty, SelectionReport};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub k: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<PortmanteauReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineEntry {
    pub penalty: Penalty,
    pub selection: SelectionReport,
    pub tests: Vec<TestOutcome>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub entries: Vec<PipelineEntry>,
}

impl PipelineReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        if let Some(l) = &self.label {
            s.push_str(&format!("series {l}\n"));
        }
        for e in &self.entries {
            s.push_str(&format!(
                "\n== penalty {}: selected {} ==\n",
                e.penalty,
                e.selection.chosen_spec()
            ));
            let fit = e.selection.chosen_fit();
            s.push_str(&format!(
                "loglik = {:.4}, theta = {}\n",
                fit.loglik, fit.theta
            ));
            if let Some(c) = &fit.covariance {
                let se: Vec<String> = fit
                    .active_names()
                    .iter()
                    .zip(&c.std_errors)
                    .map(|(n, v)| format!("{n}={v:.4}"))
                    .collect();
                s.push_str(&format!("std errors: [{}]\n", se.join(", ")));
            }
            for t in &e.tests {
                match (&t.report, &t.error) {
                    (Some(r), _) => s.push_str(&r.to_text()),
                    (None, Some(err)) => {
                        s.push_str(&format!("portmanteau K = {}: failed: {err}\n", t.k))
                    }
                    _ => {}
                }
            }
            s.push('\n');
            s.push_str(&e.selection.to_text());
        }
        s
    }
}

impl Report for PipelineReport {
    fn to_text(&self) -> String {
        PipelineReport::to_text(self)
    }

    fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Fits the candidates once, selects under every penalty, and runs the
/// portmanteau test with each K on each selected model.
pub fn run_pipeline(
    x: &TimeSeries,
    candidates: &[ModelSpec],
    penalties: &[Penalty],
    ks: &[usize],
    form: VForm,
    opts: &OptimizerOptions,
) -> Result<PipelineReport> {
    if penalties.is_empty() {
        return Err(Error::InvalidArgument("no penalties given".into()));
    }
    if candidates.is_empty() {
        return Err(Error::InvalidArgument(
            "no candidates to select from".into(),
        ));
    }
    for p in penalties {
        penalty_value(p, x.len())?;
    }
    let fit_opts = OptimizerOptions {
        covariance: false,
        ..opts.clone()
    };
    let mut fits = fit_candidates(x, candidates, &fit_opts);
    let mut entries = Vec::with_capacity(penalties.len());
    for p in penalties {
        let probe = rank(x.len(), candidates, &fits, p)?;
        let chosen = probe.chosen;
        if let Ok(fit) = &mut fits[chosen] {
            if fit.covariance.is_none() && fit.covariance_error.is_none() {
                attach_covariance(fit, x, opts.fd_scale);
            }
        }
        let selection = rank(x.len(), candidates, &fits, p)?;
        let fit = selection.chosen_fit();
        let tests = ks
            .iter()
            .map(|&k| match portmanteau_in(&fit.spec, fit, x, k, form) {
                Ok(r) => TestOutcome {
                    k,
                    report: Some(r),
                    error: None,
                },
                Err(e) => TestOutcome {
                    k,
                    report: None,
                    error: Some(e.to_string()),
                },
            })
            .collect();
        entries.push(PipelineEntry {
            penalty: p.clone(),
            selection,
            tests,
        });
    }
    Ok(PipelineReport {
        n: x.len(),
        label: x.label.clone(),
        entries,
    })
}
