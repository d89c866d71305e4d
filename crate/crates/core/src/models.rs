//! Process families, parameter layouts, admissibility and simulation.
//!
//! Every family is an affine causal recursion
//! `X_t = M_theta(past) * xi_t + f_theta(past)` with a fixed parameter
//! layout. Slot 0 is always the scale (`sigma`, `a0`, `c0` or `omega`), which
//! the model mask keeps active.

use std::cell::RefCell;
use std::collections::{BTreeSet, HashMap};
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly;
use crate::special::{gaussian_abs_moment, gaussian_lr_norm};

/// Default truncation of the ARCH(inf) sum in [`ModelFamily::ArArchInf`].
pub const DEFAULT_MAX_LAG: usize = 10_000;
/// Default number of discarded simulation steps.
pub const DEFAULT_BURN_IN: usize = 1_000;
/// Lags used when a closed-form sum of expansion weights is unavailable.
const EXPANSION_LAGS: usize = 10_000;
/// Margin kept from the stationarity boundary inside the estimation region.
pub(crate) const STATIONARITY_MARGIN: f64 = 1e-6;
/// Smallest admissible value of a strictly positive slot.
pub(crate) const POSITIVE_FLOOR: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelFamily {
    WhiteNoise,
    Ar {
        p: usize,
    },
    Arma {
        p: usize,
        q: usize,
    },
    Arch {
        p: usize,
    },
    /// `p` ARCH lags (`c_1..c_p`) and `q` GARCH lags (`d_1..d_q`).
    Garch {
        p: usize,
        q: usize,
    },
    Aparch {
        delta: f64,
        p: usize,
        q: usize,
    },
    /// ARMA(`p`,`q`) mean with GARCH(`arch`,`garch`) innovations.
    ArmaGarch {
        p: usize,
        q: usize,
        arch: usize,
        garch: usize,
    },
    /// AR(`p`) driven by ARCH(inf) innovations with weights
    /// `alpha * i^-decay`, summed over at most `max_lag` lags.
    ArArchInf {
        p: usize,
        decay: f64,
        #[serde(default = "default_max_lag")]
        max_lag: usize,
    },
}

fn default_max_lag() -> usize {
    DEFAULT_MAX_LAG
}

/// Per-slot box constraint.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SlotBound {
    Free,
    Positive,
    NonNegative,
    /// Open interval `(lo, hi)`.
    Interval {
        lo: f64,
        hi: f64,
    },
}

impl SlotBound {
    /// Distance outside the admissible set, zero when satisfied.
    pub fn violation(&self, v: f64) -> f64 {
        if !v.is_finite() {
            return f64::INFINITY;
        }
        match *self {
            SlotBound::Free => 0.0,
            SlotBound::Positive => (POSITIVE_FLOOR - v).max(0.0),
            SlotBound::NonNegative => (-v).max(0.0),
            SlotBound::Interval { lo, hi } => {
                let m = STATIONARITY_MARGIN;
                (lo + m - v).max(0.0) + (v - (hi - m)).max(0.0)
            }
        }
    }

    /// Distance to the nearest finite edge of the constraint.
    pub(crate) fn slack(&self, v: f64) -> f64 {
        match *self {
            SlotBound::Free => f64::INFINITY,
            SlotBound::Positive | SlotBound::NonNegative => v,
            SlotBound::Interval { lo, hi } => (v - lo).min(hi - v),
        }
    }
}

impl fmt::Display for SlotBound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SlotBound::Free => write!(f, "free"),
            SlotBound::Positive => write!(f, ">0"),
            SlotBound::NonNegative => write!(f, ">=0"),
            SlotBound::Interval { lo, hi } => write!(f, "in ({lo}, {hi})"),
        }
    }
}

/// What a slot does in the recursion; `lag` is 1-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "role", content = "lag", rename_all = "snake_case")]
pub enum SlotRole {
    Scale,
    /// Scale of the ARCH(inf) weight sequence.
    ArchScale,
    Ar(usize),
    Ma(usize),
    Arch(usize),
    Asym(usize),
    Garch(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Slot {
    pub name: String,
    pub role: SlotRole,
    pub bound: SlotBound,
}

fn slot(name: impl Into<String>, role: SlotRole, bound: SlotBound) -> Slot {
    Slot {
        name: name.into(),
        role,
        bound,
    }
}

/// Coarse grouping used to decide whether two models are nested.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyClass {
    Linear,
    Garch,
    Aparch { delta: f64 },
    ArmaGarch,
    ArArchInf { decay: f64 },
}

/// Borrowed view of a parameter vector split by role.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Parts<'a> {
    pub scale: f64,
    pub ar: &'a [f64],
    pub ma: &'a [f64],
    pub arch: &'a [f64],
    pub asym: &'a [f64],
    pub garch: &'a [f64],
    pub arch_scale: f64,
}

impl ModelFamily {
    pub fn check(&self) -> Result<()> {
        match *self {
            ModelFamily::Aparch { delta, .. } if !(delta >= 1.0) => Err(Error::InvalidSpec(
                format!("APARCH power must be >= 1, got {delta}"),
            )),
            ModelFamily::ArArchInf { decay, max_lag, .. } => {
                if !(decay > 1.0) {
                    Err(Error::InvalidSpec(format!(
                        "ARCH(inf) decay exponent must be > 1, got {decay}"
                    )))
                } else if max_lag == 0 {
                    Err(Error::InvalidSpec(
                        "ARCH(inf) truncation must be >= 1".into(),
                    ))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    /// Full parameter dimension `d`.
    pub fn dim(&self) -> usize {
        match *self {
            ModelFamily::WhiteNoise => 1,
            ModelFamily::Ar { p } => 1 + p,
            ModelFamily::Arma { p, q } => 1 + p + q,
            ModelFamily::Arch { p } => 1 + p,
            ModelFamily::Garch { p, q } => 1 + p + q,
            ModelFamily::Aparch { p, q, .. } => 1 + 2 * p + q,
            ModelFamily::ArmaGarch { p, q, arch, garch } => 1 + arch + garch + p + q,
            ModelFamily::ArArchInf { p, .. } => 2 + p,
        }
    }

    pub fn class(&self) -> FamilyClass {
        match *self {
            ModelFamily::WhiteNoise | ModelFamily::Ar { .. } | ModelFamily::Arma { .. } => {
                FamilyClass::Linear
            }
            ModelFamily::Arch { .. } | ModelFamily::Garch { .. } => FamilyClass::Garch,
            ModelFamily::Aparch { delta, .. } => FamilyClass::Aparch { delta },
            ModelFamily::ArmaGarch { .. } => FamilyClass::ArmaGarch,
            ModelFamily::ArArchInf { decay, .. } => FamilyClass::ArArchInf { decay },
        }
    }

    /// Conditional variance is constant in time.
    pub fn is_homoscedastic(&self) -> bool {
        self.class() == FamilyClass::Linear
    }

    pub fn label(&self) -> String {
        match *self {
            ModelFamily::WhiteNoise => "WN".into(),
            ModelFamily::Ar { p } => format!("AR({p})"),
            ModelFamily::Arma { p, q } => format!("ARMA({p},{q})"),
            ModelFamily::Arch { p } => format!("ARCH({p})"),
            ModelFamily::Garch { p, q } => format!("GARCH({p},{q})"),
            ModelFamily::Aparch { delta, p, q } => format!("APARCH({delta},{p},{q})"),
            ModelFamily::ArmaGarch { p, q, arch, garch } => {
                format!("ARMA({p},{q})-GARCH({arch},{garch})")
            }
            ModelFamily::ArArchInf { p, decay, .. } => format!("AR({p})-ARCH(inf;{decay})"),
        }
    }

    /// Ordered slot layout. Identical for equal families.
    pub fn layout(&self) -> Vec<Slot> {
        use SlotBound::*;
        use SlotRole as R;
        let mut s = Vec::with_capacity(self.dim());
        match *self {
            ModelFamily::WhiteNoise => s.push(slot("sigma", R::Scale, Positive)),
            ModelFamily::Ar { p } => {
                s.push(slot("sigma", R::Scale, Positive));
                s.extend((1..=p).map(|i| slot(format!("phi{i}"), R::Ar(i), Free)));
            }
            ModelFamily::Arma { p, q } => {
                s.push(slot("sigma", R::Scale, Positive));
                s.extend((1..=p).map(|i| slot(format!("a{i}"), R::Ar(i), Free)));
                s.extend((1..=q).map(|j| slot(format!("b{j}"), R::Ma(j), Free)));
            }
            ModelFamily::Arch { p } => {
                s.push(slot("a0", R::Scale, Positive));
                s.extend((1..=p).map(|i| slot(format!("a{i}"), R::Arch(i), NonNegative)));
            }
            ModelFamily::Garch { p, q } => {
                s.push(slot("c0", R::Scale, Positive));
                s.extend((1..=p).map(|i| slot(format!("c{i}"), R::Arch(i), NonNegative)));
                s.extend((1..=q).map(|j| slot(format!("d{j}"), R::Garch(j), NonNegative)));
            }
            ModelFamily::Aparch { p, q, .. } => {
                s.push(slot("omega", R::Scale, Positive));
                s.extend((1..=p).map(|i| slot(format!("alpha{i}"), R::Arch(i), NonNegative)));
                s.extend((1..=p).map(|i| {
                    slot(
                        format!("gamma{i}"),
                        R::Asym(i),
                        Interval { lo: -1.0, hi: 1.0 },
                    )
                }));
                s.extend((1..=q).map(|j| slot(format!("beta{j}"), R::Garch(j), NonNegative)));
            }
            ModelFamily::ArmaGarch { p, q, arch, garch } => {
                s.push(slot("c0", R::Scale, Positive));
                s.extend((1..=arch).map(|i| slot(format!("c{i}"), R::Arch(i), NonNegative)));
                s.extend((1..=garch).map(|j| slot(format!("d{j}"), R::Garch(j), NonNegative)));
                s.extend((1..=p).map(|i| slot(format!("a{i}"), R::Ar(i), Free)));
                s.extend((1..=q).map(|j| slot(format!("b{j}"), R::Ma(j), Free)));
            }
            ModelFamily::ArArchInf { p, .. } => {
                s.push(slot("omega", R::Scale, Positive));
                s.push(slot("alpha", R::ArchScale, NonNegative));
                s.extend((1..=p).map(|i| slot(format!("phi{i}"), R::Ar(i), Free)));
            }
        }
        s
    }

    pub(crate) fn parts<'a>(&self, v: &'a [f64]) -> Parts<'a> {
        debug_assert_eq!(v.len(), self.dim());
        let empty: &[f64] = &[];
        let mut parts = Parts {
            scale: v[0],
            ar: empty,
            ma: empty,
            arch: empty,
            asym: empty,
            garch: empty,
            arch_scale: 0.0,
        };
        match *self {
            ModelFamily::WhiteNoise => {}
            ModelFamily::Ar { p } => parts.ar = &v[1..1 + p],
            ModelFamily::Arma { p, q } => {
                parts.ar = &v[1..1 + p];
                parts.ma = &v[1 + p..1 + p + q];
            }
            ModelFamily::Arch { p } => parts.arch = &v[1..1 + p],
            ModelFamily::Garch { p, q } => {
                parts.arch = &v[1..1 + p];
                parts.garch = &v[1 + p..1 + p + q];
            }
            ModelFamily::Aparch { p, q, .. } => {
                parts.arch = &v[1..1 + p];
                parts.asym = &v[1 + p..1 + 2 * p];
                parts.garch = &v[1 + 2 * p..1 + 2 * p + q];
            }
            ModelFamily::ArmaGarch { p, q, arch, garch } => {
                let mut o = 1;
                parts.arch = &v[o..o + arch];
                o += arch;
                parts.garch = &v[o..o + garch];
                o += garch;
                parts.ar = &v[o..o + p];
                o += p;
                parts.ma = &v[o..o + q];
            }
            ModelFamily::ArArchInf { p, .. } => {
                parts.arch_scale = v[1];
                parts.ar = &v[2..2 + p];
            }
        }
        parts
    }

    /// Weights `i^-decay` for `i = 1..=min(len, max_lag)`.
    pub(crate) fn arch_inf_weights(&self, len: usize) -> Vec<f64> {
        match *self {
            ModelFamily::ArArchInf { decay, max_lag, .. } => (1..=len.min(max_lag))
                .map(|i| (i as f64).powf(-decay))
                .collect(),
            _ => Vec::new(),
        }
    }

    /// Sum of [`Self::arch_inf_weights`]. Memoized per thread, since the
    /// region check calls it on every objective evaluation.
    pub(crate) fn arch_inf_weight_sum(&self, len: usize) -> f64 {
        thread_local! {
            static CACHE: RefCell<HashMap<(u64, usize), f64>> = RefCell::new(HashMap::new());
        }
        let ModelFamily::ArArchInf { decay, max_lag, .. } = *self else {
            return 0.0;
        };
        let key = (decay.to_bits(), len.min(max_lag));
        CACHE.with(|c| {
            *c.borrow_mut()
                .entry(key)
                .or_insert_with(|| self.arch_inf_weights(len).iter().sum())
        })
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Human-readable layout listing, e.g. `[sigma>0, phi1, phi2]`.
pub fn param_layout(family: &ModelFamily) -> Vec<(String, SlotBound)> {
    family
        .layout()
        .into_iter()
        .map(|s| (s.name, s.bound))
        .collect()
}

/// A family together with the set of estimated slots.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: ModelFamily,
    active: Vec<bool>,
}

impl ModelSpec {
    /// All slots active.
    pub fn full(family: ModelFamily) -> Result<Self> {
        family.check()?;
        let d = family.dim();
        Ok(ModelSpec {
            family,
            active: vec![true; d],
        })
    }

    pub fn with_active(family: ModelFamily, active: Vec<bool>) -> Result<Self> {
        family.check()?;
        if active.len() != family.dim() {
            return Err(Error::InvalidSpec(format!(
                "active mask has {} entries, {} has {} slots",
                active.len(),
                family,
                family.dim()
            )));
        }
        if !active[0] {
            return Err(Error::InvalidSpec(format!(
                "the scale slot of {family} must stay active"
            )));
        }
        Ok(ModelSpec { family, active })
    }

    /// AR(`max_p`) with only the listed (1-based) lags active.
    pub fn ar_subset(max_p: usize, lags: &[usize]) -> Result<Self> {
        let mut active = vec![false; max_p + 1];
        active[0] = true;
        for &l in lags {
            if l == 0 || l > max_p {
                return Err(Error::InvalidSpec(format!("lag {l} outside 1..={max_p}")));
            }
            active[l] = true;
        }
        ModelSpec::with_active(ModelFamily::Ar { p: max_p }, active)
    }

    pub fn active(&self) -> &[bool] {
        &self.active
    }

    pub fn active_indices(&self) -> Vec<usize> {
        self.active
            .iter()
            .enumerate()
            .filter_map(|(i, &a)| a.then_some(i))
            .collect()
    }

    /// `|m|`, the number of estimated components.
    pub fn dim(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    pub fn is_full(&self) -> bool {
        self.active.iter().all(|&a| a)
    }

    pub fn label(&self) -> String {
        if self.is_full() {
            return self.family.label();
        }
        let layout = self.family.layout();
        let names: Vec<&str> = self
            .active_indices()
            .into_iter()
            .skip(1)
            .map(|i| layout[i].name.as_str())
            .collect();
        format!("{}[{}]", self.family.label(), names.join(","))
    }

    /// Roles of the active non-scale slots together with the family class.
    ///
    /// Two specs describe the same model iff their supports are equal, so
    /// e.g. `ARMA(2,0)` and `AR(2)`, or `GARCH(2,0)` and `ARCH(2)`, coincide.
    pub fn support(&self) -> (FamilyClass, BTreeSet<SlotRole>) {
        let layout = self.family.layout();
        let roles = self
            .active_indices()
            .into_iter()
            .map(|i| layout[i].role)
            .filter(|r| !matches!(r, SlotRole::Scale | SlotRole::ArchScale))
            .collect();
        (self.family.class(), roles)
    }

    /// Zero vector with the family layout.
    pub fn zero_params(&self) -> ParamVector {
        ParamVector::zeros(&self.family)
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// A parameter point laid out as [`ModelFamily::layout`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub names: Vec<String>,
    pub values: Vec<f64>,
    pub bounds: Vec<SlotBound>,
}

impl ParamVector {
    pub fn zeros(family: &ModelFamily) -> Self {
        let layout = family.layout();
        ParamVector {
            names: layout.iter().map(|s| s.name.clone()).collect(),
            values: vec![0.0; layout.len()],
            bounds: layout.iter().map(|s| s.bound).collect(),
        }
    }

    pub fn new(family: &ModelFamily, values: Vec<f64>) -> Result<Self> {
        let mut p = ParamVector::zeros(family);
        if values.len() != p.values.len() {
            return Err(Error::DimensionMismatch {
                family: family.label(),
                expected: p.values.len(),
                got: values.len(),
            });
        }
        p.values = values;
        Ok(p)
    }

    /// Builds a vector from `(name, value)` pairs; unnamed slots are zero.
    pub fn from_named<'a>(
        family: &ModelFamily,
        named: impl IntoIterator<Item = (&'a str, f64)>,
    ) -> Result<Self> {
        let mut p = ParamVector::zeros(family);
        for (name, v) in named {
            let i = p.index_of(name).ok_or_else(|| {
                Error::InvalidSpec(format!("{family} has no parameter named {name:?}"))
            })?;
            p.values[i] = v;
        }
        Ok(p)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.index_of(name).map(|i| self.values[i])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Mask of slots holding a non-zero value, with the scale forced on.
    pub fn support_mask(&self) -> Vec<bool> {
        let mut m: Vec<bool> = self.values.iter().map(|v| *v != 0.0).collect();
        if let Some(first) = m.first_mut() {
            *first = true;
        }
        m
    }
}

impl fmt::Display for ParamVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let items: Vec<String> = self
            .names
            .iter()
            .zip(&self.values)
            .map(|(n, v)| format!("{n}={v:.6}"))
            .collect();
        write!(f, "[{}]", items.join(", "))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl TimeSeries {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidSeries("series is empty".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidSeries(format!(
                "non-finite observation at index {i}"
            )));
        }
        Ok(TimeSeries {
            values,
            label: None,
        })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.len() as f64
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / self.len() as f64
    }
}

/// Outcome of [`validate_params`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Validity {
    pub valid: bool,
    pub violations: Vec<String>,
}

fn check_len(spec: &ModelSpec, theta: &ParamVector) -> Result<()> {
    if theta.len() != spec.family.dim() {
        return Err(Error::DimensionMismatch {
            family: spec.family.label(),
            expected: spec.family.dim(),
            got: theta.len(),
        });
    }
    Ok(())
}

fn push_bounds_and_mask(spec: &ModelSpec, theta: &ParamVector, out: &mut Vec<String>) {
    let layout = spec.family.layout();
    for (i, s) in layout.iter().enumerate() {
        let v = theta.values[i];
        if !spec.active[i] && v != 0.0 {
            out.push(format!("{} is inactive but equals {v}", s.name));
        }
        let viol = match s.bound {
            SlotBound::Positive if v > 0.0 => 0.0,
            SlotBound::Positive => 1.0,
            SlotBound::NonNegative if v >= 0.0 => 0.0,
            SlotBound::NonNegative => 1.0,
            SlotBound::Interval { lo, hi } if v > lo && v < hi => 0.0,
            SlotBound::Interval { .. } => 1.0,
            SlotBound::Free if v.is_finite() => 0.0,
            SlotBound::Free => 1.0,
        };
        if viol > 0.0 {
            out.push(format!("{} = {v} violates {}", s.name, s.bound));
        }
    }
}

/// APARCH expansion `sigma^delta = b0 + sum_k b+_k x+^delta + b-_k x-^delta`;
/// returns `sum_k max(b+_k, b-_k)^(1/delta)`.
fn aparch_lipschitz_sum(delta: f64, alpha: &[f64], gamma: &[f64], beta: &[f64]) -> f64 {
    let pi = poly::inverse_series(beta, EXPANSION_LAGS);
    let mut total = 0.0;
    for k in 1..=EXPANSION_LAGS {
        let mut bp = 0.0;
        let mut bm = 0.0;
        for (i, (&a, &g)) in alpha.iter().zip(gamma).enumerate().take(k) {
            let w = pi[k - i - 1];
            bp += a * (1.0 - g).powf(delta) * w;
            bm += a * (1.0 + g).powf(delta) * w;
        }
        let term = bp.abs().max(bm.abs()).powf(1.0 / delta);
        total += term;
        if k > alpha.len() && term < 1e-17 {
            break;
        }
    }
    total
}

/// Checks `theta` against the per-slot bounds and the family's contraction
/// condition at moment order `r`, using Gaussian `||xi_0||_r`.
pub fn validate_params(spec: &ModelSpec, theta: &ParamVector, r: f64) -> Result<Validity> {
    check_len(spec, theta)?;
    if !(r >= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "moment order must be >= 1, got {r}"
        )));
    }
    let mut v = Vec::new();
    push_bounds_and_mask(spec, theta, &mut v);
    let norm = gaussian_lr_norm(r);
    let p = spec.family.parts(&theta.values);
    let stable = |name: &str, c: &[f64], v: &mut Vec<String>| {
        let k = poly::max_reflection(c);
        if k >= 1.0 {
            v.push(format!(
                "{name} polynomial has a root in the unit disk (max reflection {k:.4})"
            ));
        }
    };
    match spec.family {
        ModelFamily::WhiteNoise => {}
        ModelFamily::Ar { .. } => stable("AR", p.ar, &mut v),
        ModelFamily::Arma { .. } => {
            stable("AR", p.ar, &mut v);
            stable("MA", p.ma, &mut v);
        }
        ModelFamily::Arch { .. } | ModelFamily::Garch { .. } => {
            let sd: f64 = p.garch.iter().sum();
            if sd >= 1.0 {
                v.push(format!("sum of GARCH coefficients {sd} >= 1"));
            } else {
                let psi = p.arch.iter().sum::<f64>() / (1.0 - sd);
                let c = norm * norm * psi;
                if c >= 1.0 {
                    v.push(format!(
                        "contraction ||xi||_{r}^2 * sum psi_k = {c:.6} >= 1"
                    ));
                }
            }
        }
        ModelFamily::Aparch { delta, .. } => {
            let sb: f64 = p.garch.iter().sum();
            if sb >= 1.0 {
                v.push(format!("sum of beta coefficients {sb} >= 1"));
            } else {
                let c = norm * aparch_lipschitz_sum(delta, p.arch, p.asym, p.garch);
                if c >= 1.0 {
                    v.push(format!(
                        "contraction ||xi||_{r} * sum max(b+,b-)^(1/delta) = {c:.6} >= 1"
                    ));
                }
            }
        }
        ModelFamily::ArmaGarch { .. } => {
            stable("AR", p.ar, &mut v);
            stable("MA", p.ma, &mut v);
            let c = p.garch.iter().sum::<f64>() + norm * p.arch.iter().sum::<f64>();
            if c >= 1.0 {
                v.push(format!("sum d_j + ||xi||_{r} * sum c_j = {c:.6} >= 1"));
            }
        }
        ModelFamily::ArArchInf { .. } => {
            stable("AR", p.ar, &mut v);
            let w = spec.family.arch_inf_weight_sum(EXPANSION_LAGS);
            let c = norm * norm * p.arch_scale * w;
            if c >= 1.0 {
                v.push(format!(
                    "contraction ||xi||_{r}^2 * alpha * sum i^-decay = {c:.6} >= 1"
                ));
            }
        }
    }
    Ok(Validity {
        valid: v.is_empty(),
        violations: v,
    })
}

/// Total amount by which `values` leaves the estimation region: per-slot
/// bounds plus second-order stationarity (and invertibility for MA parts).
/// Zero inside the region.
pub(crate) fn region_violation(family: &ModelFamily, values: &[f64]) -> f64 {
    let mut total: f64 = family
        .layout()
        .iter()
        .zip(values)
        .map(|(s, &v)| s.bound.violation(v))
        .sum();
    let p = family.parts(values);
    let limit = 1.0 - STATIONARITY_MARGIN;
    let roots = |c: &[f64]| (poly::max_reflection(c) - limit).max(0.0);
    let sum_pos = |c: &[f64]| c.iter().map(|x| x.max(0.0)).sum::<f64>();
    match *family {
        ModelFamily::WhiteNoise => {}
        ModelFamily::Ar { .. } => total += roots(p.ar),
        ModelFamily::Arma { .. } => total += roots(p.ar) + roots(p.ma),
        ModelFamily::Arch { .. } | ModelFamily::Garch { .. } => {
            total += (sum_pos(p.arch) + sum_pos(p.garch) - limit).max(0.0);
        }
        ModelFamily::Aparch { delta, .. } => {
            let m = gaussian_abs_moment(delta);
            let pers: f64 = p
                .arch
                .iter()
                .zip(p.asym)
                .map(|(&a, &g)| {
                    let g = g.clamp(-1.0, 1.0);
                    a.max(0.0) * 0.5 * ((1.0 - g).powf(delta) + (1.0 + g).powf(delta)) * m
                })
                .sum::<f64>()
                + sum_pos(p.garch);
            total += (pers - limit).max(0.0);
        }
        ModelFamily::ArmaGarch { .. } => {
            total += roots(p.ar) + roots(p.ma);
            total += (sum_pos(p.arch) + sum_pos(p.garch) - limit).max(0.0);
        }
        ModelFamily::ArArchInf { .. } => {
            total += roots(p.ar);
            let w = family.arch_inf_weight_sum(EXPANSION_LAGS);
            total += (p.arch_scale.max(0.0) * w - limit).max(0.0);
        }
    }
    if total.is_nan() {
        f64::INFINITY
    } else {
        total
    }
}

/// Smallest slack to any active constraint of the estimation region.
pub(crate) fn region_slack(spec: &ModelSpec, values: &[f64]) -> f64 {
    let family = &spec.family;
    let layout = family.layout();
    let mut slack = f64::INFINITY;
    for i in spec.active_indices() {
        if i == 0 {
            continue;
        }
        slack = slack.min(layout[i].bound.slack(values[i]));
    }
    let p = family.parts(values);
    let roots = |c: &[f64]| 1.0 - poly::max_reflection(c);
    match *family {
        ModelFamily::Ar { .. } | ModelFamily::ArArchInf { .. } => slack = slack.min(roots(p.ar)),
        ModelFamily::Arma { .. } | ModelFamily::ArmaGarch { .. } => {
            slack = slack.min(roots(p.ar)).min(roots(p.ma))
        }
        _ => {}
    }
    if matches!(
        family,
        ModelFamily::Arch { .. } | ModelFamily::Garch { .. } | ModelFamily::ArmaGarch { .. }
    ) {
        slack = slack.min(1.0 - p.arch.iter().sum::<f64>() - p.garch.iter().sum::<f64>());
    }
    slack
}

/// Verifies that `theta` has the right length, zeros on inactive slots, and
/// lies in the estimation region.
pub fn check_admissible(spec: &ModelSpec, theta: &ParamVector) -> Result<()> {
    check_len(spec, theta)?;
    let mut v = Vec::new();
    push_bounds_and_mask(spec, theta, &mut v);
    if v.is_empty() {
        let excess = region_violation(&spec.family, &theta.values);
        if excess > 0.0 {
            v.push(format!(
                "outside the second-order stationarity region (excess {excess:.3e})"
            ));
        }
    }
    if v.is_empty() {
        Ok(())
    } else {
        Err(Error::InvalidParams(v))
    }
}

/// Unconditional mean of a GARCH-type variance recursion.
fn garch_level(c0: f64, arch: &[f64], garch: &[f64]) -> f64 {
    c0 / (1.0 - arch.iter().sum::<f64>() - garch.iter().sum::<f64>())
}

#[inline]
fn lag(buf: &[f64], t: usize, k: usize) -> f64 {
    if k <= t {
        buf[t - k]
    } else {
        0.0
    }
}

/// Runs the family recursion over the given noise draws (`xi.len()` steps,
/// nothing discarded). Returns the path and, for families with a separate
/// innovation, nothing else: callers keep `xi` as the driving noise.
fn run_recursion(family: &ModelFamily, values: &[f64], xi: &[f64]) -> Result<Vec<f64>> {
    let total = xi.len();
    let p = family.parts(values);
    let mut x = vec![0.0; total];
    let finite = |v: f64, t: usize| {
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite { index: t })
        }
    };
    match *family {
        ModelFamily::WhiteNoise | ModelFamily::Ar { .. } | ModelFamily::Arma { .. } => {
            let sigma = p.scale;
            let mut eps = vec![0.0; total];
            for t in 0..total {
                eps[t] = sigma * xi[t];
                let mut v = eps[t];
                for (i, a) in p.ar.iter().enumerate() {
                    v += a * lag(&x, t, i + 1);
                }
                for (j, b) in p.ma.iter().enumerate() {
                    v -= b * lag(&eps, t, j + 1);
                }
                x[t] = finite(v, t)?;
            }
        }
        ModelFamily::Arch { .. } | ModelFamily::Garch { .. } => {
            let init = garch_level(p.scale, p.arch, p.garch);
            let mut h = vec![0.0; total];
            for t in 0..total {
                let mut v = p.scale;
                for (i, c) in p.arch.iter().enumerate() {
                    v += c * lag(&x, t, i + 1).powi(2);
                }
                for (j, d) in p.garch.iter().enumerate() {
                    v += d * if j < t { h[t - j - 1] } else { init };
                }
                h[t] = v;
                x[t] = finite(v.sqrt() * xi[t], t)?;
            }
        }
        ModelFamily::Aparch { delta, .. } => {
            let m = gaussian_abs_moment(delta);
            let pers: f64 = p
                .arch
                .iter()
                .zip(p.asym)
                .map(|(&a, &g)| a * 0.5 * ((1.0 - g).powf(delta) + (1.0 + g).powf(delta)) * m)
                .sum::<f64>()
                + p.garch.iter().sum::<f64>();
            let init = p.scale / (1.0 - pers);
            let mut s = vec![0.0; total];
            for t in 0..total {
                let mut v = p.scale;
                for (i, (a, g)) in p.arch.iter().zip(p.asym).enumerate() {
                    let xl = lag(&x, t, i + 1);
                    v += a * (xl.abs() - g * xl).powf(delta);
                }
                for (j, b) in p.garch.iter().enumerate() {
                    v += b * if j < t { s[t - j - 1] } else { init };
                }
                s[t] = v;
                x[t] = finite(v.powf(1.0 / delta) * xi[t], t)?;
            }
        }
        ModelFamily::ArmaGarch { .. } => {
            let init = garch_level(p.scale, p.arch, p.garch);
            let mut h = vec![0.0; total];
            let mut eps = vec![0.0; total];
            for t in 0..total {
                let mut v = p.scale;
                for (i, c) in p.arch.iter().enumerate() {
                    v += c * lag(&eps, t, i + 1).powi(2);
                }
                for (j, d) in p.garch.iter().enumerate() {
                    v += d * if j < t { h[t - j - 1] } else { init };
                }
                h[t] = v;
                eps[t] = v.sqrt() * xi[t];
                let mut xv = eps[t];
                for (i, a) in p.ar.iter().enumerate() {
                    xv += a * lag(&x, t, i + 1);
                }
                for (j, b) in p.ma.iter().enumerate() {
                    xv -= b * lag(&eps, t, j + 1);
                }
                x[t] = finite(xv, t)?;
            }
        }
        ModelFamily::ArArchInf { max_lag, .. } => {
            let w = family.arch_inf_weights(total.min(max_lag));
            let mut eps2 = vec![0.0; total];
            let mut eps = vec![0.0; total];
            for t in 0..total {
                let reach = t.min(w.len());
                let s: f64 = (1..=reach).map(|k| w[k - 1] * eps2[t - k]).sum();
                let h = p.scale + p.arch_scale * s;
                eps[t] = h.sqrt() * xi[t];
                eps2[t] = eps[t] * eps[t];
                let mut xv = eps[t];
                for (i, a) in p.ar.iter().enumerate() {
                    xv += a * lag(&x, t, i + 1);
                }
                x[t] = finite(xv, t)?;
            }
        }
    }
    Ok(x)
}

/// Simulation driven by caller-supplied i.i.d. zero-mean unit-variance noise.
/// Returns the retained path and the noise that drove it.
pub fn simulate_with_noise_source(
    spec: &ModelSpec,
    theta: &ParamVector,
    n: usize,
    burn_in: usize,
    mut noise: impl FnMut() -> f64,
) -> Result<(TimeSeries, Vec<f64>)> {
    check_admissible(spec, theta)?;
    if n == 0 {
        return Err(Error::InvalidArgument(
            "simulation length must be >= 1".into(),
        ));
    }
    let xi: Vec<f64> = (0..burn_in + n).map(|_| noise()).collect();
    let x = run_recursion(&spec.family, &theta.values, &xi)?;
    let series = TimeSeries::new(x[burn_in..].to_vec())?;
    Ok((series, xi[burn_in..].to_vec()))
}

/// Gaussian simulation that also returns the retained noise draws.
pub fn simulate_with_noise(
    spec: &ModelSpec,
    theta: &ParamVector,
    n: usize,
    burn_in: usize,
    seed: u64,
) -> Result<(TimeSeries, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    simulate_with_noise_source(spec, theta, n, burn_in, || StandardNormal.sample(&mut rng))
}

/// Simulates `burn_in + n` steps from a zero prehistory and keeps the last
/// `n`. Identical arguments give bit-identical output.
pub fn simulate(
    spec: &ModelSpec,
    theta: &ParamVector,
    n: usize,
    burn_in: usize,
    seed: u64,
) -> Result<TimeSeries> {
    simulate_with_noise(spec, theta, n, burn_in, seed).map(|(x, _)| x)
}
