//! Monte Carlo selection and size/power experiments.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::diagnostics::portmanteau_in;
use crate::error::{Error, Result};
use crate::estimation::{attach_covariance, fit_qmle, FitResult, OptimizerOptions};
use crate::harness::config::ExperimentConfig;
use crate::harness::report::{
    percent, ExperimentKind, FailureNote, McReport, RejectionRate, SelectionRates, TestRates,
};
use crate::models::{simulate, ModelSpec, TimeSeries};
use crate::selection::{classify, enumerate_candidates, fit_candidates, rank, Classification};

/// Offset between the truth and alternative seed streams.
pub const ALTERNATIVE_SEED_OFFSET: u64 = 1 << 32;

/// Seed of replication `r`.
pub fn replication_seed(base: u64, r: usize) -> u64 {
    base.wrapping_add(r as u64)
}

#[derive(Default)]
struct Outcome {
    /// Per penalty: selected label and its class.
    picks: Vec<(String, Classification)>,
    /// Per K: size rejection, if the test ran.
    size: Vec<Option<bool>>,
    /// Per K: power rejection, if the test ran.
    power: Vec<Option<bool>>,
    failures: Vec<FailureNote>,
    selection_failed: bool,
}

fn note(r: usize, n: usize, stage: &str, e: &Error) -> FailureNote {
    FailureNote {
        replication: r,
        n,
        stage: stage.into(),
        message: e.to_string(),
    }
}

fn fit_opts(cfg: &ExperimentConfig) -> OptimizerOptions {
    OptimizerOptions {
        covariance: false,
        ..cfg.optimizer.clone()
    }
}

/// Test decisions for each K on a fitted model.
fn test_fit(
    cfg: &ExperimentConfig,
    mut fit: FitResult,
    x: &TimeSeries,
    r: usize,
    stage: &str,
    failures: &mut Vec<FailureNote>,
) -> Vec<Option<bool>> {
    if fit.covariance.is_none() {
        attach_covariance(&mut fit, x, cfg.optimizer.fd_scale);
    }
    if let Some(msg) = &fit.covariance_error {
        failures.push(FailureNote {
            replication: r,
            n: x.len(),
            stage: stage.into(),
            message: msg.clone(),
        });
        return vec![None; cfg.k_values.len()];
    }
    let spec = fit.spec.clone();
    cfg.k_values
        .iter()
        .map(|&k| match portmanteau_in(&spec, &fit, x, k, cfg.v_form) {
            Ok(rep) => Some(rep.rejects(cfg.level)),
            Err(e) => {
                failures.push(note(r, x.len(), stage, &e));
                None
            }
        })
        .collect()
}

struct Plan {
    truth: (ModelSpec, crate::models::ParamVector),
    alternative: Option<(ModelSpec, crate::models::ParamVector)>,
    reference: ModelSpec,
    candidates: Vec<ModelSpec>,
}

fn plan(cfg: &ExperimentConfig) -> Result<Plan> {
    cfg.validate()?;
    let reference = cfg.reference_spec()?;
    let candidates = if cfg.candidates.parts.is_empty() {
        vec![reference.clone()]
    } else {
        enumerate_candidates(&cfg.candidates)?
    };
    Ok(Plan {
        truth: cfg.truth.resolve()?,
        alternative: cfg.alternative.as_ref().map(|a| a.resolve()).transpose()?,
        reference,
        candidates,
    })
}

fn run_one(
    cfg: &ExperimentConfig,
    plan: &Plan,
    kind: ExperimentKind,
    r: usize,
    n: usize,
) -> Outcome {
    let mut out = Outcome::default();
    let seed = replication_seed(cfg.base_seed, r);
    let opts = fit_opts(cfg);
    let tests = kind == ExperimentKind::SizePower;
    match simulate(&plan.truth.0, &plan.truth.1, n, cfg.burn_in, seed) {
        Err(e) => {
            out.failures.push(note(r, n, "simulate", &e));
            out.selection_failed = true;
            out.size = vec![None; cfg.k_values.len()];
        }
        Ok(x) => {
            let fits = fit_candidates(&x, &plan.candidates, &opts);
            let mut tested = None;
            for p in &cfg.penalties {
                match rank(n, &plan.candidates, &fits, p) {
                    Ok(rep) => {
                        let spec = rep.chosen_spec();
                        out.picks
                            .push((spec.label(), classify(spec, &plan.reference)));
                        if tests && cfg.test_selected && *p == cfg.size_penalty {
                            tested = Some(rep.chosen_fit().clone());
                        }
                    }
                    Err(e) => {
                        out.failures.push(note(r, n, "select", &e));
                        out.selection_failed = true;
                        out.picks.clear();
                        break;
                    }
                }
            }
            if tests {
                if tested.is_none() && cfg.test_selected && !out.selection_failed {
                    match rank(n, &plan.candidates, &fits, &cfg.size_penalty) {
                        Ok(rep) => tested = Some(rep.chosen_fit().clone()),
                        Err(e) => out.failures.push(note(r, n, "select", &e)),
                    }
                }
                if !cfg.test_selected {
                    match fit_qmle(&plan.reference, &x, &opts) {
                        Ok(f) => tested = Some(f),
                        Err(e) => out.failures.push(note(r, n, "fit", &e)),
                    }
                }
                out.size = match tested {
                    Some(fit) => test_fit(cfg, fit, &x, r, "size", &mut out.failures),
                    None => vec![None; cfg.k_values.len()],
                };
            }
        }
    }
    if tests {
        if let Some((spec, theta)) = &plan.alternative {
            let alt_seed = seed.wrapping_add(ALTERNATIVE_SEED_OFFSET);
            out.power = match simulate(spec, theta, n, cfg.burn_in, alt_seed)
                .and_then(|x| fit_qmle(&plan.reference, &x, &opts).map(|f| (x, f)))
            {
                Ok((x, fit)) => test_fit(cfg, fit, &x, r, "power", &mut out.failures),
                Err(e) => {
                    out.failures.push(note(r, n, "power", &e));
                    vec![None; cfg.k_values.len()]
                }
            };
        }
    }
    out
}

fn rejection(decisions: &[Option<bool>]) -> RejectionRate {
    let completed = decisions.iter().filter(|d| d.is_some()).count();
    let rejected = decisions.iter().filter(|d| **d == Some(true)).count();
    RejectionRate {
        completed,
        failed: decisions.len() - completed,
        rate: percent(rejected, completed),
    }
}

fn run(cfg: &ExperimentConfig, kind: ExperimentKind) -> Result<McReport> {
    let plan = plan(cfg)?;
    if kind == ExperimentKind::SizePower && cfg.k_values.is_empty() {
        return Err(Error::Config("size/power experiments need k_values".into()));
    }
    let mut selection = Vec::new();
    let mut tests = Vec::new();
    let mut failures = Vec::new();
    for &n in &cfg.sample_sizes {
        let outcomes: Vec<Outcome> = (0..cfg.replications)
            .into_par_iter()
            .map(|r| run_one(cfg, &plan, kind, r, n))
            .collect();
        for (pi, p) in cfg.penalties.iter().enumerate() {
            let done: Vec<&(String, Classification)> = outcomes
                .iter()
                .filter(|o| !o.selection_failed)
                .map(|o| &o.picks[pi])
                .collect();
            let count = |c: Classification| done.iter().filter(|d| d.1 == c).count();
            let mut selected = BTreeMap::new();
            for d in &done {
                *selected.entry(d.0.clone()).or_insert(0) += 1;
            }
            selection.push(SelectionRates {
                penalty: p.clone(),
                n,
                completed: done.len(),
                failed: outcomes.len() - done.len(),
                wrong: percent(count(Classification::Wrong), done.len()),
                true_model: percent(count(Classification::True), done.len()),
                overfitted: percent(count(Classification::Overfitted), done.len()),
                selected,
            });
        }
        if kind == ExperimentKind::SizePower {
            for (ki, &k) in cfg.k_values.iter().enumerate() {
                let size: Vec<Option<bool>> = outcomes.iter().map(|o| o.size[ki]).collect();
                let power = plan.alternative.as_ref().map(|_| {
                    let d: Vec<Option<bool>> = outcomes.iter().map(|o| o.power[ki]).collect();
                    rejection(&d)
                });
                tests.push(TestRates {
                    k,
                    n,
                    size: rejection(&size),
                    power,
                });
            }
        }
        failures.extend(outcomes.into_iter().flat_map(|o| o.failures));
    }
    let report = McReport {
        kind,
        version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        selection,
        tests,
        failures,
    };
    if report.is_empty() {
        return Err(Error::AllReplicationsFailed);
    }
    Ok(report)
}

/// For each sample size and replication: simulate the truth, fit every
/// candidate once, select under each penalty and classify against the
/// reference.
pub fn run_selection_experiment(cfg: &ExperimentConfig) -> Result<McReport> {
    run(cfg, ExperimentKind::Selection)
}

/// Selection as above, plus the portmanteau test of the model chosen by
/// `size_penalty` (size) and of the reference fitted to data from the
/// alternative (power).
pub fn run_size_power_experiment(cfg: &ExperimentConfig) -> Result<McReport> {
    run(cfg, ExperimentKind::SizePower)
}
