//! Portmanteau goodness-of-fit test on squared standardized residuals.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{covariance, fd_step, FitResult};
use crate::likelihood::{residuals, Evaluator, ResidualSeries};
use crate::linalg::{solve_spd, Matrix};
use crate::models::{ModelFamily, ModelSpec, TimeSeries};
use crate::special::chi2_sf;

/// Default number of lags for single-series tests.
pub const DEFAULT_K: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Correlogram {
    pub k: usize,
    /// `gamma_0..gamma_K`.
    pub gamma: Vec<f64>,
    /// `rho_1..rho_K`.
    pub rho: Vec<f64>,
}

/// Correlogram of `s_t - 1` where `s_t` are the squared residuals.
pub fn correlogram_of_squares(sq: &[f64], k: usize) -> Result<Correlogram> {
    let n = sq.len();
    if k == 0 || k >= n {
        return Err(Error::InvalidArgument(format!(
            "lag count K = {k} must satisfy 1 <= K < n = {n}"
        )));
    }
    let c: Vec<f64> = sq.iter().map(|s| s - 1.0).collect();
    let gamma: Vec<f64> = (0..=k)
        .map(|lag| {
            let mut acc = 0.0;
            for t in lag..n {
                acc += c[t] * c[t - lag];
            }
            acc / n as f64
        })
        .collect();
    if !gamma.iter().all(|g| g.is_finite()) {
        return Err(Error::DegenerateResiduals(
            "non-finite autocovariance".into(),
        ));
    }
    if gamma[0] == 0.0 {
        return Err(Error::DegenerateResiduals(
            "squared residuals are identically one".into(),
        ));
    }
    let rho = gamma[1..].iter().map(|g| g / gamma[0]).collect();
    Ok(Correlogram { k, gamma, rho })
}

/// `gamma_k = (1/n) sum_{t>k} (e_t^2 - 1)(e_{t-k}^2 - 1)` and
/// `rho_k = gamma_k / gamma_0` for `k = 1..=K`.
pub fn squared_residual_correlogram(e: &ResidualSeries, k: usize) -> Result<Correlogram> {
    let sq: Vec<f64> = e.e_hat.iter().map(|v| v * v).collect();
    correlogram_of_squares(&sq, k)
}

/// Form of the asymptotic covariance of `sqrt(n) rho_hat`, with
/// `c = mu4 - 1` and `Sigma = F^-1 G F^-1`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VForm {
    /// `I + c^-2 J Sigma J' + c^-1 J F^-1 J'`.
    #[default]
    Published,
    /// `I + c^-2 J Sigma J' - 2 c^-1 J F^-1 J'`. The cross term follows from
    /// `sqrt(n)(theta_hat - theta) = -F^-1 n^-1/2 sum grad q_t` and
    /// `E[(e_t^2 - 1) grad q_t] = -(mu4 - 1) 2 grad log M_t`; under Gaussian
    /// noise it reduces to the classical `I - c^-1 J F^-1 J'`.
    Derived,
}

impl std::str::FromStr for VForm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "published" => Ok(VForm::Published),
            "derived" => Ok(VForm::Derived),
            _ => Err(Error::InvalidArgument(format!(
                "unknown V form {s:?} (expected published or derived)"
            ))),
        }
    }
}

impl std::fmt::Display for VForm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            VForm::Published => "published",
            VForm::Derived => "derived",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VEstimate {
    pub mu4_hat: f64,
    /// K x |m|.
    pub j_hat: Matrix,
    /// K x K.
    pub v_hat: Matrix,
}

/// `d log M_t / d theta_j = 0.5 d log h_t / d theta_j` over the active slots.
fn log_volatility_gradients(
    spec: &ModelSpec,
    values: &[f64],
    x: &[f64],
    fd_scale: f64,
) -> Result<Vec<Vec<f64>>> {
    let ev = Evaluator::new(&spec.family, x);
    let n = x.len();
    let mut f = vec![0.0; n];
    let mut hp = vec![0.0; n];
    let mut hm = vec![0.0; n];
    let mut point = values.to_vec();
    let mut out = Vec::new();
    for i in spec.active_indices() {
        let h = fd_step(values[i], fd_scale);
        point[i] = values[i] + h;
        let ok_p = ev.moments(&point, &mut f, &mut hp);
        point[i] = values[i] - h;
        let ok_m = ev.moments(&point, &mut f, &mut hm);
        point[i] = values[i];
        if !(ok_p && ok_m) {
            return Err(Error::NonFinite { index: 0 });
        }
        out.push(
            hp.iter()
                .zip(&hm)
                .map(|(a, b)| 0.25 * (a.ln() - b.ln()) / h)
                .collect(),
        );
    }
    Ok(out)
}

fn fourth_moment(e: &[f64]) -> f64 {
    e.iter().map(|v| v.powi(4)).sum::<f64>() / e.len() as f64
}

fn check_fit(spec: &ModelSpec, fit: &FitResult, x: &TimeSeries, k: usize) -> Result<()> {
    if &fit.spec != spec {
        return Err(Error::InvalidArgument(format!(
            "fit is for {}, test requested for {spec}",
            fit.spec
        )));
    }
    if k == 0 || k >= x.len() {
        return Err(Error::InvalidArgument(format!(
            "lag count K = {k} must satisfy 1 <= K < n = {}",
            x.len()
        )));
    }
    Ok(())
}

/// `mu4_hat`, `J_hat` and `V_hat` in the default [`VForm`].
pub fn estimate_v(
    spec: &ModelSpec,
    fit: &FitResult,
    x: &TimeSeries,
    k: usize,
) -> Result<VEstimate> {
    estimate_v_in(spec, fit, x, k, VForm::default())
}

pub fn estimate_v_in(
    spec: &ModelSpec,
    fit: &FitResult,
    x: &TimeSeries,
    k: usize,
    form: VForm,
) -> Result<VEstimate> {
    check_fit(spec, fit, x, k)?;
    let e = residuals(spec, &fit.theta, x)?;
    estimate_v_with(spec, fit, x, k, &e.e_hat, 1.0, form)
}

fn estimate_v_with(
    spec: &ModelSpec,
    fit: &FitResult,
    x: &TimeSeries,
    k: usize,
    e: &[f64],
    fd_scale: f64,
    form: VForm,
) -> Result<VEstimate> {
    let n = x.len();
    let mu4_hat = fourth_moment(e);
    if !(mu4_hat > 1.0) {
        return Err(Error::DegenerateResiduals(format!(
            "sample fourth moment {mu4_hat} is not above 1"
        )));
    }
    let cov = match &fit.covariance {
        Some(c) => c.clone(),
        None => covariance(spec, &fit.theta, x, fd_scale)?,
    };
    let grads = log_volatility_gradients(spec, &fit.theta.values, x.as_slice(), fd_scale)?;
    let m = grads.len();
    let mut j_hat = Matrix::zeros(k, m);
    for lag in 1..=k {
        for (j, g) in grads.iter().enumerate() {
            let mut acc = 0.0;
            for t in lag..n {
                acc += (e[t - lag] * e[t - lag] - 1.0) * g[t];
            }
            j_hat[(lag - 1, j)] = -2.0 * acc / n as f64;
        }
    }
    let f_inv = solve_spd(&cov.f_hat, &Matrix::identity(m))?.x;
    let jt = j_hat.transpose();
    let a = j_hat.matmul(&cov.sandwich).matmul(&jt);
    let b = j_hat.matmul(&f_inv).matmul(&jt);
    let c = mu4_hat - 1.0;
    let cross = match form {
        VForm::Published => 1.0 / c,
        VForm::Derived => -2.0 / c,
    };
    let mut v_hat = Matrix::identity(k)
        .add(&a.scale(1.0 / (c * c)))
        .add(&b.scale(cross));
    v_hat.symmetrize();
    Ok(VEstimate {
        mu4_hat,
        j_hat,
        v_hat,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TestVariant {
    General { form: VForm },
    ArchSpecial { p: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PortmanteauReport {
    pub k: usize,
    pub n: usize,
    pub correlogram: Correlogram,
    pub mu4_hat: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub j_hat: Option<Matrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_hat: Option<Matrix>,
    pub q: f64,
    pub df: usize,
    pub p_value: f64,
    pub variant: TestVariant,
    /// `V_hat` needed the ridge to factor.
    pub ridged: bool,
}

impl PortmanteauReport {
    pub fn rejects(&self, level: f64) -> bool {
        self.p_value < level
    }

    pub fn to_text(&self) -> String {
        let rho: Vec<String> = self
            .correlogram
            .rho
            .iter()
            .map(|r| format!("{r:.4}"))
            .collect();
        let variant = match self.variant {
            TestVariant::General { form } => format!("general, {form} V"),
            TestVariant::ArchSpecial { p } => format!("arch({p})"),
        };
        format!(
            "portmanteau K = {} ({variant}): Q = {:.4}, df = {}, p-value = {:.4}{}\n  rho = [{}], mu4 = {:.4}\n",
            self.k,
            self.q,
            self.df,
            self.p_value,
            if self.ridged { " [ridged]" } else { "" },
            rho.join(", "),
            self.mu4_hat
        )
    }
}

/// `n rho' V^-1 rho`; the flag reports a ridged solve.
pub fn quadratic_statistic(rho: &[f64], v: &Matrix, n: usize) -> Result<(f64, bool)> {
    if rho.iter().all(|r| *r == 0.0) {
        return Ok((0.0, false));
    }
    let sol = solve_spd(v, &Matrix::column(rho))?;
    let q: f64 = n as f64
        * rho
            .iter()
            .zip(sol.x.as_slice())
            .map(|(a, b)| a * b)
            .sum::<f64>();
    Ok((q.max(0.0), sol.ridged))
}

/// `n sum_{i=p+1}^K rho_i^2`.
pub fn arch_statistic(rho: &[f64], n: usize, p: usize) -> Result<f64> {
    if rho.len() <= p {
        return Err(Error::InvalidArgument(format!(
            "K = {} must exceed the ARCH order {p}",
            rho.len()
        )));
    }
    Ok(n as f64 * rho[p..].iter().map(|r| r * r).sum::<f64>())
}

/// General statistic `Q = n rho' V_hat^-1 rho`, compared with chi2(K), with
/// the default [`VForm`].
pub fn portmanteau(
    spec: &ModelSpec,
    fit: &FitResult,
    x: &TimeSeries,
    k: usize,
) -> Result<PortmanteauReport> {
    portmanteau_in(spec, fit, x, k, VForm::default())
}

pub fn portmanteau_in(
    spec: &ModelSpec,
    fit: &FitResult,
    x: &TimeSeries,
    k: usize,
    form: VForm,
) -> Result<PortmanteauReport> {
    check_fit(spec, fit, x, k)?;
    let e = residuals(spec, &fit.theta, x)?;
    let correlogram = squared_residual_correlogram(&e, k)?;
    let v = estimate_v_with(spec, fit, x, k, &e.e_hat, 1.0, form)?;
    let (q, ridged) = quadratic_statistic(&correlogram.rho, &v.v_hat, x.len())?;
    Ok(PortmanteauReport {
        k,
        n: x.len(),
        correlogram,
        mu4_hat: v.mu4_hat,
        j_hat: Some(v.j_hat),
        v_hat: Some(v.v_hat),
        q,
        df: k,
        p_value: chi2_sf(q, k)?,
        variant: TestVariant::General { form },
        ridged,
    })
}

/// Statistic for a fitted ARCH(p): `Q = n sum_{i=p+1}^K rho_i^2`, compared
/// with chi2(K - p).
pub fn portmanteau_arch(
    fit: &FitResult,
    x: &TimeSeries,
    p: usize,
    k: usize,
) -> Result<PortmanteauReport> {
    let order = match fit.spec.family {
        ModelFamily::Arch { p } | ModelFamily::Garch { p, q: 0 } => p,
        ref f => {
            return Err(Error::InvalidArgument(format!(
                "the ARCH statistic needs an ARCH fit, got {f}"
            )))
        }
    };
    if order != p {
        return Err(Error::InvalidArgument(format!(
            "fit has ARCH order {order}, test requested order {p}"
        )));
    }
    if k <= p {
        return Err(Error::InvalidArgument(format!(
            "K = {k} must exceed the ARCH order {p}"
        )));
    }
    check_fit(&fit.spec, fit, x, k)?;
    let e = residuals(&fit.spec, &fit.theta, x)?;
    let correlogram = squared_residual_correlogram(&e, k)?;
    let q = arch_statistic(&correlogram.rho, x.len(), p)?;
    Ok(PortmanteauReport {
        k,
        n: x.len(),
        mu4_hat: fourth_moment(&e.e_hat),
        correlogram,
        j_hat: None,
        v_hat: None,
        q,
        df: k - p,
        p_value: chi2_sf(q, k - p)?,
        variant: TestVariant::ArchSpecial { p },
        ridged: false,
    })
}
