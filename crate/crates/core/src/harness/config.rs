//! Experiment configuration, read from TOML.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diagnostics::VForm;
use crate::error::{Error, Result};
use crate::estimation::OptimizerOptions;
use crate::models::{check_admissible, ModelFamily, ModelSpec, ParamVector, DEFAULT_BURN_IN};
use crate::selection::{enumerate_candidates, CandidateGrid, Penalty};

/// A family with named parameter values. Unnamed slots are zero; the active
/// mask defaults to the scale plus every non-zero slot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub family: ModelFamily,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub active: Option<Vec<bool>>,
}

impl GeneratorConfig {
    pub fn params(&self) -> Result<ParamVector> {
        ParamVector::from_named(
            &self.family,
            self.params.iter().map(|(k, v)| (k.as_str(), *v)),
        )
    }

    pub fn spec(&self) -> Result<ModelSpec> {
        match &self.active {
            Some(mask) => ModelSpec::with_active(self.family.clone(), mask.clone()),
            None if self.params.is_empty() => ModelSpec::full(self.family.clone()),
            None => ModelSpec::with_active(self.family.clone(), self.params()?.support_mask()),
        }
    }

    /// Spec and parameters, checked for simulation.
    pub fn resolve(&self) -> Result<(ModelSpec, ParamVector)> {
        let spec = self.spec()?;
        let theta = self.params()?;
        check_admissible(&spec, &theta)?;
        Ok((spec, theta))
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&s)
    }
}

fn default_name() -> String {
    "experiment".into()
}
fn default_penalties() -> Vec<Penalty> {
    vec![Penalty::LogN, Penalty::SqrtN]
}
fn default_replications() -> usize {
    200
}
fn default_seed() -> u64 {
    1
}
fn default_burn_in() -> usize {
    DEFAULT_BURN_IN
}
fn default_k() -> Vec<usize> {
    vec![3]
}
fn default_level() -> f64 {
    0.05
}
fn default_size_penalty() -> Penalty {
    Penalty::SqrtN
}
fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub truth: GeneratorConfig,
    /// Classification target and null model for power; defaults to the
    /// truth's spec.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<GeneratorConfig>,
    /// Generator for power experiments.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alternative: Option<GeneratorConfig>,
    #[serde(default)]
    pub candidates: CandidateGrid,
    #[serde(default = "default_penalties")]
    pub penalties: Vec<Penalty>,
    pub sample_sizes: Vec<usize>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default = "default_seed")]
    pub base_seed: u64,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default = "default_k")]
    pub k_values: Vec<usize>,
    #[serde(default = "default_level")]
    pub level: f64,
    /// Penalty whose selected model is tested in size experiments.
    #[serde(default = "default_size_penalty")]
    pub size_penalty: Penalty,
    /// Test the selected model for size; when false the reference is fitted
    /// and tested directly.
    #[serde(default = "yes")]
    pub test_selected: bool,
    /// Covariance form used by the portmanteau statistic.
    #[serde(default)]
    pub v_form: VForm,
    #[serde(default)]
    pub optimizer: OptimizerOptions,
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&s).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn reference_spec(&self) -> Result<ModelSpec> {
        match &self.reference {
            Some(r) => r.spec(),
            None => self.truth.spec(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.replications == 0 {
            return bad("replications must be >= 1".into());
        }
        if self.sample_sizes.is_empty() {
            return bad("sample_sizes is empty".into());
        }
        if let Some(n) = self.sample_sizes.iter().find(|&&n| n < 20) {
            return bad(format!("sample size {n} is below the minimum of 20"));
        }
        if self.penalties.is_empty() {
            return bad("penalties is empty".into());
        }
        for p in self.penalties.iter().chain([&self.size_penalty]) {
            p.check()?;
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return bad(format!("level must lie in (0, 1), got {}", self.level));
        }
        let n_min = *self.sample_sizes.iter().min().unwrap_or(&0);
        if let Some(k) = self.k_values.iter().find(|&&k| k == 0 || k >= n_min) {
            return bad(format!("K = {k} must satisfy 1 <= K < {n_min}"));
        }
        self.truth.resolve()?;
        self.reference_spec()?;
        if let Some(a) = &self.alternative {
            a.resolve()?;
        }
        if !self.candidates.parts.is_empty() {
            enumerate_candidates(&self.candidates)?;
        }
        self.optimizer.validate()
    }
}
