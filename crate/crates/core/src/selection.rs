//! Penalized criterion `C(m) = -2 L_n(theta_hat(m)) + |m| kappa_n` and the
//! candidate grids it is minimized over.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{fit_qmle, FitResult, OptimizerOptions};
use crate::models::{ModelFamily, ModelSpec, TimeSeries, DEFAULT_MAX_LAG};

/// Relative criterion gap under which two candidates count as tied.
pub const TIE_TOL: f64 = 1e-9;

/// User-supplied `kappa_n`.
#[derive(Clone)]
pub struct CustomPenalty {
    pub label: String,
    f: Arc<dyn Fn(usize) -> f64 + Send + Sync>,
}

impl CustomPenalty {
    pub fn new(label: impl Into<String>, f: impl Fn(usize) -> f64 + Send + Sync + 'static) -> Self {
        CustomPenalty {
            label: label.into(),
            f: Arc::new(f),
        }
    }
}

impl fmt::Debug for CustomPenalty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CustomPenalty({})", self.label)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Penalty {
    LogN,
    SqrtN,
    /// `n^delta`, `0 < delta < 1`.
    PowerN(f64),
    Custom(CustomPenalty),
}

impl PartialEq for Penalty {
    fn eq(&self, other: &Self) -> bool {
        self.to_string() == other.to_string()
    }
}

impl fmt::Display for Penalty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Penalty::LogN => write!(f, "log_n"),
            Penalty::SqrtN => write!(f, "sqrt_n"),
            Penalty::PowerN(d) => write!(f, "power:{d}"),
            Penalty::Custom(c) => write!(f, "custom:{}", c.label),
        }
    }
}

fn parse_fraction(s: &str) -> Option<f64> {
    match s.split_once('/') {
        Some((a, b)) => Some(a.trim().parse::<f64>().ok()? / b.trim().parse::<f64>().ok()?),
        None => s.trim().parse().ok(),
    }
}

impl FromStr for Penalty {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        let p = match t.as_str() {
            "log_n" | "logn" | "log" | "bic" => Penalty::LogN,
            "sqrt_n" | "sqrtn" | "sqrt" => Penalty::SqrtN,
            _ => {
                let rest = t
                    .strip_prefix("power:")
                    .or_else(|| t.strip_prefix("n^"))
                    .ok_or_else(|| Error::InvalidArgument(format!("unknown penalty {s:?}")))?;
                let d = parse_fraction(rest)
                    .ok_or_else(|| Error::InvalidArgument(format!("bad exponent in {s:?}")))?;
                Penalty::PowerN(d)
            }
        };
        p.check()?;
        Ok(p)
    }
}

impl TryFrom<String> for Penalty {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Penalty> for String {
    fn from(p: Penalty) -> String {
        p.to_string()
    }
}

impl Penalty {
    pub fn custom(
        label: impl Into<String>,
        f: impl Fn(usize) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Penalty::Custom(CustomPenalty::new(label, f))
    }

    pub fn check(&self) -> Result<()> {
        match *self {
            Penalty::PowerN(d) if !(d > 0.0 && d < 1.0) => Err(Error::InvalidArgument(format!(
                "power penalty exponent must lie in (0, 1), got {d}"
            ))),
            _ => Ok(()),
        }
    }

    /// Compact column heading for tables.
    pub fn short_label(&self) -> String {
        match self {
            Penalty::PowerN(d) => format!("n^{d:.3}"),
            Penalty::Custom(c) => c.label.chars().take(11).collect(),
            p => p.to_string(),
        }
    }
}

/// `kappa_n`.
pub fn penalty_value(p: &Penalty, n: usize) -> Result<f64> {
    p.check()?;
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "penalties need n >= 2, got {n}"
        )));
    }
    let nf = n as f64;
    let k = match p {
        Penalty::LogN => nf.ln(),
        Penalty::SqrtN => nf.sqrt(),
        Penalty::PowerN(d) => nf.powf(*d),
        Penalty::Custom(c) => (c.f)(n),
    };
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "penalty {p} evaluates to {k} at n = {n}"
        )));
    }
    Ok(k)
}

/// `-2 loglik + m_size * kappa`.
pub fn criterion(loglik: f64, m_size: usize, kappa: f64) -> f64 {
    -2.0 * loglik + m_size as f64 * kappa
}

/// Inclusive order range.
pub type Range = [usize; 2];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GridPart {
    /// ARMA(p, q); `(0, 0)` is white noise and `(p, 0)` is AR(p).
    Arma {
        p: Range,
        q: Range,
    },
    /// GARCH(arch, garch); `garch = 0` is ARCH(arch).
    Garch {
        arch: Range,
        garch: Range,
    },
    Aparch {
        delta: f64,
        p: Range,
        q: Range,
    },
    ArmaGarch {
        p: Range,
        q: Range,
        arch: Range,
        garch: Range,
    },
    /// AR(p) over the given orders.
    ArOrders {
        p: Range,
    },
    /// Every subset of the lags `1..=max_p`, scale always active.
    ArSubsets {
        max_p: usize,
    },
    ArArchInf {
        p: Range,
        decay: f64,
        #[serde(default = "default_max_lag")]
        max_lag: usize,
    },
    Explicit {
        specs: Vec<ModelSpec>,
    },
}

fn default_max_lag() -> usize {
    DEFAULT_MAX_LAG
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CandidateGrid {
    pub parts: Vec<GridPart>,
}

impl CandidateGrid {
    pub fn new(parts: Vec<GridPart>) -> Self {
        CandidateGrid { parts }
    }

    /// ARMA(p, q) for `p, q <= max` plus GARCH(arch, garch) with
    /// `1 <= arch <= max`, `garch <= max`. `max = 5` gives 66 models.
    pub fn arma_garch_orders(max: usize) -> Self {
        CandidateGrid::new(vec![
            GridPart::Arma {
                p: [0, max],
                q: [0, max],
            },
            GridPart::Garch {
                arch: [1, max],
                garch: [0, max],
            },
        ])
    }

    /// GARCH(arch, garch) with `1 <= arch <= max`, `garch <= max`.
    pub fn garch_orders(max: usize) -> Self {
        CandidateGrid::new(vec![GridPart::Garch {
            arch: [1, max],
            garch: [0, max],
        }])
    }

    pub fn ar_subsets(max_p: usize) -> Self {
        CandidateGrid::new(vec![GridPart::ArSubsets { max_p }])
    }

    pub fn ar_arch_inf(p: Range, decay: f64) -> Self {
        CandidateGrid::new(vec![GridPart::ArArchInf {
            p,
            decay,
            max_lag: DEFAULT_MAX_LAG,
        }])
    }

    /// Named grids used by the CLI.
    pub fn preset(name: &str) -> Result<Self> {
        Ok(match name {
            "arma-garch" => CandidateGrid::arma_garch_orders(5),
            "arma-garch-reduced" => CandidateGrid::arma_garch_orders(2),
            "ftse" => CandidateGrid::garch_orders(10),
            "ftse-reduced" => CandidateGrid::garch_orders(2),
            "subsets4" => CandidateGrid::ar_subsets(4),
            "model5" => CandidateGrid::ar_arch_inf([1, 8], 3.0),
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "unknown grid preset {name:?} (expected arma-garch, arma-garch-reduced, ftse, \
                     ftse-reduced, subsets4 or model5)"
                )))
            }
        })
    }
}

fn range(r: Range, what: &str) -> Result<std::ops::RangeInclusive<usize>> {
    if r[0] > r[1] {
        return Err(Error::InvalidArgument(format!(
            "{what} range [{}, {}] is empty",
            r[0], r[1]
        )));
    }
    Ok(r[0]..=r[1])
}

fn arma_family(p: usize, q: usize) -> ModelFamily {
    match (p, q) {
        (0, 0) => ModelFamily::WhiteNoise,
        (p, 0) => ModelFamily::Ar { p },
        (p, q) => ModelFamily::Arma { p, q },
    }
}

/// Expands a grid in a fixed order: parts in sequence, outer loops over the
/// first order listed.
pub fn enumerate_candidates(grid: &CandidateGrid) -> Result<Vec<ModelSpec>> {
    let mut out = Vec::new();
    for part in &grid.parts {
        match part {
            GridPart::Arma { p, q } => {
                for pp in range(*p, "p")? {
                    for qq in range(*q, "q")? {
                        out.push(ModelSpec::full(arma_family(pp, qq))?);
                    }
                }
            }
            GridPart::Garch { arch, garch } => {
                for a in range(*arch, "arch")? {
                    for g in range(*garch, "garch")? {
                        let f = if g == 0 {
                            ModelFamily::Arch { p: a }
                        } else {
                            ModelFamily::Garch { p: a, q: g }
                        };
                        out.push(ModelSpec::full(f)?);
                    }
                }
            }
            GridPart::Aparch { delta, p, q } => {
                for pp in range(*p, "p")? {
                    for qq in range(*q, "q")? {
                        out.push(ModelSpec::full(ModelFamily::Aparch {
                            delta: *delta,
                            p: pp,
                            q: qq,
                        })?);
                    }
                }
            }
            GridPart::ArmaGarch { p, q, arch, garch } => {
                for pp in range(*p, "p")? {
                    for qq in range(*q, "q")? {
                        for a in range(*arch, "arch")? {
                            for g in range(*garch, "garch")? {
                                out.push(ModelSpec::full(ModelFamily::ArmaGarch {
                                    p: pp,
                                    q: qq,
                                    arch: a,
                                    garch: g,
                                })?);
                            }
                        }
                    }
                }
            }
            GridPart::ArOrders { p } => {
                for pp in range(*p, "p")? {
                    out.push(ModelSpec::full(arma_family(pp, 0))?);
                }
            }
            GridPart::ArSubsets { max_p } => {
                if *max_p > 20 {
                    return Err(Error::InvalidArgument(format!(
                        "refusing to enumerate 2^{max_p} subsets"
                    )));
                }
                for mask in 0u32..(1 << max_p) {
                    let lags: Vec<usize> =
                        (1..=*max_p).filter(|k| mask >> (k - 1) & 1 == 1).collect();
                    out.push(ModelSpec::ar_subset(*max_p, &lags)?);
                }
            }
            GridPart::ArArchInf { p, decay, max_lag } => {
                for pp in range(*p, "p")? {
                    out.push(ModelSpec::full(ModelFamily::ArArchInf {
                        p: pp,
                        decay: *decay,
                        max_lag: *max_lag,
                    })?);
                }
            }
            GridPart::Explicit { specs } => out.extend(specs.iter().cloned()),
        }
    }
    if out.is_empty() {
        return Err(Error::InvalidArgument("candidate grid is empty".into()));
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Wrong,
    True,
    Overfitted,
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Classification::Wrong => "wrong",
            Classification::True => "true",
            Classification::Overfitted => "overfitted",
        })
    }
}

/// True when the supports coincide, overfitted when `selected` strictly
/// contains the reference within the same family class, wrong otherwise.
pub fn classify(selected: &ModelSpec, reference: &ModelSpec) -> Classification {
    let (cs, ss) = selected.support();
    let (cr, sr) = reference.support();
    if cs != cr {
        Classification::Wrong
    } else if ss == sr {
        Classification::True
    } else if ss.is_superset(&sr) {
        Classification::Overfitted
    } else {
        Classification::Wrong
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub index: usize,
    pub label: String,
    pub spec: ModelSpec,
    /// `|m|`.
    pub dim: usize,
    pub loglik: Option<f64>,
    pub criterion: Option<f64>,
    pub fit: Option<FitResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub n: usize,
    pub penalty: Penalty,
    pub kappa: f64,
    pub records: Vec<CandidateRecord>,
    /// Index into `records` of the selected model.
    pub chosen: usize,
    /// Candidates whose criterion is within [`TIE_TOL`] of the minimum.
    pub ties: Vec<usize>,
    /// Candidates whose fit failed.
    pub excluded: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classification: Option<Classification>,
}

impl SelectionReport {
    pub fn chosen_record(&self) -> &CandidateRecord {
        &self.records[self.chosen]
    }

    pub fn chosen_spec(&self) -> &ModelSpec {
        &self.records[self.chosen].spec
    }

    pub fn chosen_fit(&self) -> &FitResult {
        self.records[self.chosen]
            .fit
            .as_ref()
            .expect("chosen candidate always has a fit")
    }

    pub fn classify_against(&mut self, reference: &ModelSpec) -> Classification {
        let c = classify(self.chosen_spec(), reference);
        self.classification = Some(c);
        c
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "n = {}, penalty {} (kappa = {:.6})\n{:<5} {:<28} {:>4} {:>16} {:>16}  flags\n",
            self.n, self.penalty, self.kappa, "#", "model", "|m|", "loglik", "criterion"
        );
        for r in &self.records {
            let mut flags = Vec::new();
            if r.index == self.chosen {
                flags.push("selected".to_string());
            } else if self.ties.contains(&r.index) {
                flags.push("tie".to_string());
            }
            if let Some(fit) = &r.fit {
                if !fit.converged {
                    flags.push("not-converged".into());
                }
                if fit.boundary {
                    flags.push("boundary".into());
                }
            }
            if let Some(e) = &r.error {
                flags.push(format!("failed: {e}"));
            }
            let num = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
            s.push_str(&format!(
                "{:<5} {:<28} {:>4} {:>16} {:>16}  {}\n",
                r.index,
                r.label,
                r.dim,
                num(r.loglik),
                num(r.criterion),
                flags.join(",")
            ));
        }
        if let Some(c) = self.classification {
            s.push_str(&format!("classification: {c}\n"));
        }
        s
    }
}

/// Fits every candidate; failures are kept as errors in enumeration order.
pub fn fit_candidates(
    x: &TimeSeries,
    candidates: &[ModelSpec],
    opts: &OptimizerOptions,
) -> Vec<Result<FitResult>> {
    candidates
        .par_iter()
        .map(|spec| fit_qmle(spec, x, opts))
        .collect()
}

/// Computes the criterion for already-fitted candidates and picks the
/// minimizer: smallest `|m|` among ties, then lowest index.
pub fn rank(
    n: usize,
    candidates: &[ModelSpec],
    fits: &[Result<FitResult>],
    penalty: &Penalty,
) -> Result<SelectionReport> {
    if candidates.is_empty() {
        return Err(Error::InvalidArgument(
            "no candidates to select from".into(),
        ));
    }
    assert_eq!(candidates.len(), fits.len());
    let kappa = penalty_value(penalty, n)?;
    let mut records = Vec::with_capacity(candidates.len());
    let mut excluded = Vec::new();
    for (index, (spec, fit)) in candidates.iter().zip(fits).enumerate() {
        let dim = spec.dim();
        let rec = match fit {
            Ok(f) => CandidateRecord {
                index,
                label: spec.label(),
                spec: spec.clone(),
                dim,
                loglik: Some(f.loglik),
                criterion: Some(criterion(f.loglik, dim, kappa)),
                fit: Some(f.clone()),
                error: None,
            },
            Err(e) => {
                excluded.push(index);
                CandidateRecord {
                    index,
                    label: spec.label(),
                    spec: spec.clone(),
                    dim,
                    loglik: None,
                    criterion: None,
                    fit: None,
                    error: Some(e.to_string()),
                }
            }
        };
        records.push(rec);
    }
    let min = records
        .iter()
        .filter_map(|r| r.criterion)
        .fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return Err(Error::AllCandidatesFailed);
    }
    let tol = TIE_TOL * min.abs().max(1.0);
    let ties: Vec<usize> = records
        .iter()
        .filter(|r| r.criterion.is_some_and(|c| c <= min + tol))
        .map(|r| r.index)
        .collect();
    let chosen = *ties
        .iter()
        .min_by_key(|&&i| (records[i].dim, i))
        .expect("the minimum is attained");
    Ok(SelectionReport {
        n,
        penalty: penalty.clone(),
        kappa,
        records,
        chosen,
        ties,
        excluded,
        classification: None,
    })
}

pub fn select(
    x: &TimeSeries,
    candidates: &[ModelSpec],
    penalty: &Penalty,
    opts: &OptimizerOptions,
) -> Result<SelectionReport> {
    if candidates.is_empty() {
        return Err(Error::InvalidArgument(
            "no candidates to select from".into(),
        ));
    }
    penalty_value(penalty, x.len())?;
    let fits = fit_candidates(x, candidates, opts);
    rank(x.len(), candidates, &fits, penalty)
}
