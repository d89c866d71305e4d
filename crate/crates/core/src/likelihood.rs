//! Truncated Gaussian quasi-likelihood.
//!
//! Unknown prehistory is replaced by zeros. Variance recursions start at the
//! level that makes them equal to their zero-past ARCH(inf) expansion.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{check_admissible, ModelFamily, ModelSpec, ParamVector, TimeSeries};

/// Lower bound applied to every conditional variance.
pub const VARIANCE_FLOOR: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuasiLikEval {
    pub f_hat: Vec<f64>,
    pub h_hat: Vec<f64>,
    pub q_hat: Vec<f64>,
    /// `-0.5 * sum(q_hat)`.
    pub total: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualSeries {
    pub e_hat: Vec<f64>,
}

impl ResidualSeries {
    pub fn new(e_hat: Vec<f64>) -> Result<Self> {
        if let Some(i) = e_hat.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index: i });
        }
        Ok(ResidualSeries { e_hat })
    }

    pub fn len(&self) -> usize {
        self.e_hat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.e_hat.is_empty()
    }
}

#[inline]
fn lag(buf: &[f64], t: usize, k: usize) -> f64 {
    if k <= t {
        buf[t - k]
    } else {
        0.0
    }
}

/// `sum_k w_k x_{u-k} x_{u-k-d}` for every `u` and `d = 0..=p`, stored row
/// major: entry `u * (p + 1) + d`.
fn arch_inf_tables(x: &[f64], w: &[f64], p: usize) -> Vec<f64> {
    let n = x.len();
    let width = p + 1;
    let mut out = vec![0.0; n * width];
    for d in 0..width {
        let y: Vec<f64> = (0..n).map(|s| x[s] * lag(x, s, d)).collect();
        for u in 0..n {
            let reach = u.min(w.len());
            let mut acc = 0.0;
            for k in 1..=reach {
                acc += w[k - 1] * y[u - k];
            }
            out[u * width + d] = acc;
        }
    }
    out
}

/// Likelihood evaluator bound to one family and one series. Performs no
/// admissibility checks; the optimizer and finite differences call it at
/// arbitrary points.
pub(crate) struct Evaluator<'a> {
    family: ModelFamily,
    x: &'a [f64],
    tables: Vec<f64>,
}

impl<'a> Evaluator<'a> {
    pub fn new(family: &ModelFamily, x: &'a [f64]) -> Self {
        let tables = match *family {
            ModelFamily::ArArchInf { p, .. } => {
                arch_inf_tables(x, &family.arch_inf_weights(x.len()), p)
            }
            _ => Vec::new(),
        };
        Evaluator {
            family: family.clone(),
            x,
            tables,
        }
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    /// ARMA innovations `eps_t = x_t - sum a_i x_{t-i} + sum b_j eps_{t-j}`.
    fn innovations(&self, ar: &[f64], ma: &[f64], eps: &mut [f64]) {
        let x = self.x;
        for t in 0..x.len() {
            let mut e = x[t];
            for (i, a) in ar.iter().enumerate() {
                e -= a * lag(x, t, i + 1);
            }
            for (j, b) in ma.iter().enumerate() {
                e += b * lag(eps, t, j + 1);
            }
            eps[t] = e;
        }
    }

    /// Residual sum of squares of the mean recursion, for homoscedastic
    /// families.
    pub fn rss(&self, v: &[f64]) -> f64 {
        let p = self.family.parts(v);
        let mut eps = vec![0.0; self.n()];
        self.innovations(p.ar, p.ma, &mut eps);
        let s: f64 = eps.iter().map(|e| e * e).sum();
        if s.is_finite() {
            s
        } else {
            f64::INFINITY
        }
    }

    /// Fills conditional means and variances; returns false if anything is
    /// non-finite.
    pub fn moments(&self, v: &[f64], f: &mut [f64], h: &mut [f64]) -> bool {
        let x = self.x;
        let n = x.len();
        let p = self.family.parts(v);
        match self.family {
            ModelFamily::WhiteNoise | ModelFamily::Ar { .. } | ModelFamily::Arma { .. } => {
                let var = (p.scale * p.scale).max(VARIANCE_FLOOR);
                self.innovations(p.ar, p.ma, f);
                for t in 0..n {
                    f[t] = x[t] - f[t];
                    h[t] = var;
                }
            }
            ModelFamily::Arch { .. } | ModelFamily::Garch { .. } => {
                let sd: f64 = p.garch.iter().sum();
                let init = if sd < 1.0 {
                    p.scale / (1.0 - sd)
                } else {
                    p.scale
                };
                for t in 0..n {
                    let mut s = p.scale;
                    for (i, c) in p.arch.iter().enumerate() {
                        let xl = lag(x, t, i + 1);
                        s += c * xl * xl;
                    }
                    for (j, d) in p.garch.iter().enumerate() {
                        s += d * if j < t { h[t - j - 1] } else { init };
                    }
                    f[t] = 0.0;
                    h[t] = s.max(VARIANCE_FLOOR);
                }
            }
            ModelFamily::Aparch { delta, .. } => {
                let sb: f64 = p.garch.iter().sum();
                let init = if sb < 1.0 {
                    p.scale / (1.0 - sb)
                } else {
                    p.scale
                };
                let floor = VARIANCE_FLOOR.powf(delta / 2.0);
                let square = delta == 2.0;
                // h stores sigma^delta until the final pass
                for t in 0..n {
                    let mut s = p.scale;
                    for (i, (a, g)) in p.arch.iter().zip(p.asym).enumerate() {
                        let xl = lag(x, t, i + 1);
                        let u = xl.abs() - g * xl;
                        s += a * if square { u * u } else { u.abs().powf(delta) };
                    }
                    for (j, b) in p.garch.iter().enumerate() {
                        s += b * if j < t { h[t - j - 1] } else { init };
                    }
                    f[t] = 0.0;
                    h[t] = s.max(floor);
                }
                if !square {
                    for ht in h.iter_mut() {
                        *ht = ht.powf(2.0 / delta).max(VARIANCE_FLOOR);
                    }
                }
            }
            ModelFamily::ArmaGarch { .. } => {
                self.innovations(p.ar, p.ma, f);
                let sd: f64 = p.garch.iter().sum();
                let init = if sd < 1.0 {
                    p.scale / (1.0 - sd)
                } else {
                    p.scale
                };
                for t in 0..n {
                    let mut s = p.scale;
                    for (i, c) in p.arch.iter().enumerate() {
                        let e = lag(f, t, i + 1);
                        s += c * e * e;
                    }
                    for (j, d) in p.garch.iter().enumerate() {
                        s += d * if j < t { h[t - j - 1] } else { init };
                    }
                    h[t] = s.max(VARIANCE_FLOOR);
                }
                for t in 0..n {
                    f[t] = x[t] - f[t];
                }
            }
            ModelFamily::ArArchInf { .. } => {
                let width = p.ar.len() + 1;
                let mut c = Vec::with_capacity(width);
                c.push(1.0);
                c.extend(p.ar.iter().map(|a| -a));
                // coef[a][d] multiplies R^(d) at u = t - a
                let mut coef = vec![0.0; width * width];
                for a in 0..width {
                    coef[a * width] = c[a] * c[a];
                    for d in 1..width - a {
                        coef[a * width + d] = 2.0 * c[a] * c[a + d];
                    }
                }
                for t in 0..n {
                    let mut mean = 0.0;
                    for (i, a) in p.ar.iter().enumerate() {
                        mean += a * lag(x, t, i + 1);
                    }
                    let mut s = 0.0;
                    for a in 0..width.min(t + 1) {
                        let row = &self.tables[(t - a) * width..(t - a + 1) * width];
                        let k = &coef[a * width..(a + 1) * width - a];
                        s += k.iter().zip(row).map(|(k, r)| k * r).sum::<f64>();
                    }
                    f[t] = mean;
                    h[t] = (p.scale + p.arch_scale * s).max(VARIANCE_FLOOR);
                }
            }
        }
        f.iter().chain(h.iter()).all(|v| v.is_finite())
    }

    /// Per-observation `q_t`; returns false if anything is non-finite.
    pub fn q_terms(&self, v: &[f64], q: &mut [f64]) -> bool {
        let n = self.n();
        let mut f = vec![0.0; n];
        let mut h = vec![0.0; n];
        if !self.moments(v, &mut f, &mut h) {
            return false;
        }
        for t in 0..n {
            let r = self.x[t] - f[t];
            q[t] = r * r / h[t] + h[t].ln();
        }
        q.iter().all(|v| v.is_finite())
    }

    /// `-2 L_n`, or infinity when the recursion breaks down.
    pub fn neg2_loglik(&self, v: &[f64]) -> f64 {
        let mut q = vec![0.0; self.n()];
        if !self.q_terms(v, &mut q) {
            return f64::INFINITY;
        }
        q.iter().sum()
    }
}

/// Conditional means `f_hat` and variances `h_hat` from the truncated
/// recursion.
pub fn conditional_moments(
    spec: &ModelSpec,
    theta: &ParamVector,
    x: &TimeSeries,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_admissible(spec, theta)?;
    let n = x.len();
    let mut f = vec![0.0; n];
    let mut h = vec![0.0; n];
    let ev = Evaluator::new(&spec.family, x.as_slice());
    if !ev.moments(&theta.values, &mut f, &mut h) {
        let index = f
            .iter()
            .zip(&h)
            .position(|(a, b)| !a.is_finite() || !b.is_finite())
            .unwrap_or(0);
        return Err(Error::NonFinite { index });
    }
    Ok((f, h))
}

pub fn quasi_loglik(spec: &ModelSpec, theta: &ParamVector, x: &TimeSeries) -> Result<QuasiLikEval> {
    let (f_hat, h_hat) = conditional_moments(spec, theta, x)?;
    let q_hat: Vec<f64> = x
        .values
        .iter()
        .zip(f_hat.iter().zip(&h_hat))
        .map(|(xt, (f, h))| (xt - f).powi(2) / h + h.ln())
        .collect();
    if let Some(index) = q_hat.iter().position(|q| !q.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    let total = -0.5 * q_hat.iter().sum::<f64>();
    Ok(QuasiLikEval {
        f_hat,
        h_hat,
        q_hat,
        total,
    })
}

/// Standardized residuals `(x_t - f_hat_t) / sqrt(h_hat_t)`.
pub fn residuals(spec: &ModelSpec, theta: &ParamVector, x: &TimeSeries) -> Result<ResidualSeries> {
    let (f, h) = conditional_moments(spec, theta, x)?;
    let e = x
        .values
        .iter()
        .zip(f.iter().zip(&h))
        .map(|(xt, (ft, ht))| (xt - ft) / ht.sqrt())
        .collect();
    ResidualSeries::new(e)
}
