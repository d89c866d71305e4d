//! Gaussian QMLE over the active slots of a model and its sandwich
//! covariance.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::likelihood::{Evaluator, VARIANCE_FLOOR};
use crate::linalg::{solve_spd, Cholesky, Matrix};
use crate::models::{
    check_admissible, region_slack, region_violation, ModelFamily, ModelSpec, ParamVector,
    SlotBound, SlotRole, TimeSeries,
};
use crate::optim::{nelder_mead, NelderMeadOptions};

/// Objective assigned to points outside the estimation region, before the
/// graded violation term is added.
const INFEASIBLE: f64 = 1e15;
const VIOLATION_WEIGHT: f64 = 1e8;
/// Nelder-Mead is restarted from its own optimum at most this many times.
const MAX_CYCLES: usize = 6;
/// Distance to a constraint below which the fit is flagged as a boundary fit.
pub const BOUNDARY_TOL: f64 = 1e-6;
/// `F_hat` is reported singular beyond this condition estimate.
pub const MAX_CONDITION: f64 = 1e14;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerOptions {
    /// Number of starting points; the first is a moment-based guess.
    pub restarts: usize,
    /// Simplex iterations per cycle.
    pub max_iter: usize,
    pub xtol: f64,
    pub ftol: f64,
    /// Multiplier on the finite-difference step `cbrt(eps) * max(|theta|, 1e-2)`.
    pub fd_scale: f64,
    pub seed: u64,
    /// Compute `F_hat`, `G_hat` and the sandwich after fitting.
    pub covariance: bool,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        OptimizerOptions {
            restarts: 2,
            max_iter: 4000,
            xtol: 1e-7,
            ftol: 1e-10,
            fd_scale: 1.0,
            seed: 0,
            covariance: true,
        }
    }
}

impl OptimizerOptions {
    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 {
            return Err(Error::InvalidArgument("restarts must be >= 1".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("max_iter must be >= 1".into()));
        }
        if !(self.xtol > 0.0 && self.ftol > 0.0 && self.fd_scale > 0.0) {
            return Err(Error::InvalidArgument(
                "tolerances and the finite-difference scale must be > 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Covariance {
    pub f_hat: Matrix,
    pub g_hat: Matrix,
    /// Asymptotic covariance of `sqrt(n) (theta_hat - theta*)`, active slots.
    pub sandwich: Matrix,
    /// `sqrt(sandwich_ii / n)` per active slot.
    pub std_errors: Vec<f64>,
    pub condition: f64,
    /// `F_hat` needed the ridge to factor.
    pub ridged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub spec: ModelSpec,
    pub theta: ParamVector,
    pub loglik: f64,
    pub n: usize,
    pub converged: bool,
    pub iterations: usize,
    /// Some active constraint is within [`BOUNDARY_TOL`] of binding.
    pub boundary: bool,
    /// Index of the winning starting point.
    pub best_restart: usize,
    /// Final `-2 L_n` of every restart.
    pub restart_objectives: Vec<f64>,
    pub covariance: Option<Covariance>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariance_error: Option<String>,
}

impl FitResult {
    /// `|m|`.
    pub fn dim(&self) -> usize {
        self.spec.dim()
    }

    pub fn active_values(&self) -> Vec<f64> {
        self.spec
            .active_indices()
            .into_iter()
            .map(|i| self.theta.values[i])
            .collect()
    }

    pub fn active_names(&self) -> Vec<String> {
        self.spec
            .active_indices()
            .into_iter()
            .map(|i| self.theta.names[i].clone())
            .collect()
    }
}

fn mean_square(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}

/// Least squares of `y_t` on the columns `cols[c][t]`, all over t = 0..n.
fn least_squares(y: &[f64], cols: &[Vec<f64>]) -> Option<Vec<f64>> {
    let k = cols.len();
    if k == 0 {
        return Some(Vec::new());
    }
    let mut xtx = Matrix::zeros(k, k);
    let mut xty = vec![0.0; k];
    for i in 0..k {
        xty[i] = cols[i].iter().zip(y).map(|(a, b)| a * b).sum();
        for j in 0..=i {
            let s: f64 = cols[i].iter().zip(&cols[j]).map(|(a, b)| a * b).sum();
            xtx[(i, j)] = s;
            xtx[(j, i)] = s;
        }
    }
    let sol = solve_spd(&xtx, &Matrix::column(&xty)).ok()?;
    let b = sol.x.as_slice().to_vec();
    b.iter().all(|v| v.is_finite()).then_some(b)
}

fn lagged(x: &[f64], k: usize) -> Vec<f64> {
    (0..x.len())
        .map(|t| if t >= k { x[t - k] } else { 0.0 })
        .collect()
}

/// Zero-padded least squares of `x_t` on the given lags.
pub(crate) fn ar_least_squares(x: &[f64], lags: &[usize]) -> Option<Vec<f64>> {
    let cols: Vec<Vec<f64>> = lags.iter().map(|&k| lagged(x, k)).collect();
    least_squares(x, &cols)
}

/// Hannan-Rissanen regression: a long autoregression supplies innovation
/// proxies, then `x_t` is regressed on the AR lags and lagged proxies.
/// Returns `(a, b)` in the `x_t = sum a x + eps - sum b eps` convention.
fn hannan_rissanen(x: &[f64], ar: &[usize], ma: &[usize]) -> Option<(Vec<f64>, Vec<f64>)> {
    if ma.is_empty() {
        return ar_least_squares(x, ar).map(|a| (a, Vec::new()));
    }
    let long = (ar.len() + ma.len() + 5).max(10).min(x.len() / 10).max(1);
    let lags: Vec<usize> = (1..=long).collect();
    let phi = ar_least_squares(x, &lags)?;
    let resid: Vec<f64> = (0..x.len())
        .map(|t| {
            x[t] - lags
                .iter()
                .zip(&phi)
                .map(|(&k, p)| p * if t >= k { x[t - k] } else { 0.0 })
                .sum::<f64>()
        })
        .collect();
    let mut cols: Vec<Vec<f64>> = ar.iter().map(|&k| lagged(x, k)).collect();
    cols.extend(ma.iter().map(|&k| lagged(&resid, k)));
    let beta = least_squares(x, &cols)?;
    let (a, b) = beta.split_at(ar.len());
    Some((a.to_vec(), b.iter().map(|v| -v).collect()))
}

/// Shrinks the non-scale slots towards zero until `v` is inside the
/// estimation region.
fn make_admissible(family: &ModelFamily, v: &mut [f64]) {
    for _ in 0..80 {
        if region_violation(family, v) == 0.0 {
            return;
        }
        for x in v.iter_mut().skip(1) {
            *x *= 0.8;
        }
    }
    for x in v.iter_mut().skip(1) {
        *x = 0.0;
    }
}

fn roles(spec: &ModelSpec, pred: impl Fn(SlotRole) -> Option<usize>) -> Vec<(usize, usize)> {
    let layout = spec.family.layout();
    spec.active_indices()
        .into_iter()
        .filter_map(|i| pred(layout[i].role).map(|lag| (i, lag)))
        .collect()
}

/// Moment-based first starting point on the full layout.
fn initial_point(spec: &ModelSpec, x: &[f64]) -> Vec<f64> {
    let family = &spec.family;
    let mut v = vec![0.0; family.dim()];
    let m2 = mean_square(x).max(VARIANCE_FLOOR);
    let ar = roles(spec, |r| {
        if let SlotRole::Ar(k) = r {
            Some(k)
        } else {
            None
        }
    });
    let ma = roles(spec, |r| {
        if let SlotRole::Ma(k) = r {
            Some(k)
        } else {
            None
        }
    });
    let arch = roles(spec, |r| {
        if let SlotRole::Arch(k) = r {
            Some(k)
        } else {
            None
        }
    });
    let garch = roles(spec, |r| {
        if let SlotRole::Garch(k) = r {
            Some(k)
        } else {
            None
        }
    });

    let ar_lags: Vec<usize> = ar.iter().map(|p| p.1).collect();
    let ma_lags: Vec<usize> = ma.iter().map(|p| p.1).collect();
    let mut resid_var = m2;
    if !ar.is_empty() || !ma.is_empty() {
        if let Some((a, b)) = hannan_rissanen(x, &ar_lags, &ma_lags) {
            for (&(i, _), val) in ar.iter().zip(a) {
                v[i] = val;
            }
            for (&(i, _), val) in ma.iter().zip(b) {
                v[i] = val;
            }
            let mean_fam = match *family {
                ModelFamily::ArmaGarch { p, q, .. } => ModelFamily::Arma { p, q },
                ModelFamily::ArArchInf { p, .. } => ModelFamily::Ar { p },
                ref f => f.clone(),
            };
            let mut mean_v = vec![0.0; mean_fam.dim()];
            mean_v[0] = 1.0;
            let layout = spec.family.layout();
            let mean_layout = mean_fam.layout();
            for (i, s) in layout.iter().enumerate() {
                if let Some(j) = mean_layout.iter().position(|m| m.role == s.role) {
                    if j > 0 {
                        mean_v[j] = v[i];
                    }
                }
            }
            if region_violation(&mean_fam, &mean_v) == 0.0 {
                let rss = Evaluator::new(&mean_fam, x).rss(&mean_v);
                if rss.is_finite() && rss > 0.0 {
                    resid_var = rss / x.len() as f64;
                }
            }
        }
    }

    let n_arch = arch.len().max(1) as f64;
    let n_garch = garch.len().max(1) as f64;
    match *family {
        ModelFamily::WhiteNoise | ModelFamily::Ar { .. } | ModelFamily::Arma { .. } => {
            v[0] = resid_var.sqrt();
        }
        ModelFamily::Arch { .. } | ModelFamily::Garch { .. } | ModelFamily::ArmaGarch { .. } => {
            v[0] = 0.5 * resid_var;
            for &(i, _) in &arch {
                v[i] = 0.2 / n_arch;
            }
            for &(i, _) in &garch {
                v[i] = 0.5 / n_garch;
            }
        }
        ModelFamily::Aparch { delta, .. } => {
            let md = x.iter().map(|v| v.abs().powf(delta)).sum::<f64>() / x.len() as f64;
            v[0] = 0.5 * md.max(VARIANCE_FLOOR);
            for &(i, _) in &arch {
                v[i] = 0.2 / n_arch;
            }
            for &(i, _) in &garch {
                v[i] = 0.5 / n_garch;
            }
        }
        ModelFamily::ArArchInf { .. } => {
            let w = family.arch_inf_weight_sum(x.len());
            v[0] = 0.5 * resid_var;
            v[1] = 0.3 / w.max(1.0);
        }
    }
    v[0] = v[0]
        .max(1e-6 * m2.sqrt())
        .max(2.0 * crate::models::POSITIVE_FLOOR);
    make_admissible(family, &mut v);
    v
}

/// Random admissible starting point around `base`.
fn random_point(spec: &ModelSpec, base: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let layout = spec.family.layout();
    let mut v = vec![0.0; base.len()];
    for i in spec.active_indices() {
        v[i] = if i == 0 {
            base[0] * rng.random_range(0.5..2.0)
        } else {
            match layout[i].bound {
                SlotBound::NonNegative | SlotBound::Positive => rng.random_range(0.0..0.5),
                SlotBound::Free | SlotBound::Interval { .. } => rng.random_range(-0.5..0.5),
            }
        };
    }
    make_admissible(&spec.family, &mut v);
    v
}

/// Maps optimizer coordinates onto the full layout and back.
struct Problem<'a> {
    spec: &'a ModelSpec,
    ev: Evaluator<'a>,
    /// Layout index of each optimizer coordinate.
    coords: Vec<usize>,
    /// Scale profiled out in closed form.
    profiled: bool,
}

impl<'a> Problem<'a> {
    fn new(spec: &'a ModelSpec, x: &'a [f64]) -> Self {
        let profiled = spec.family.is_homoscedastic();
        let coords = spec
            .active_indices()
            .into_iter()
            .filter(|&i| !(profiled && i == 0))
            .collect();
        Problem {
            spec,
            ev: Evaluator::new(&spec.family, x),
            coords,
            profiled,
        }
    }

    fn expand(&self, z: &[f64], full: &mut [f64]) {
        full.iter_mut().for_each(|v| *v = 0.0);
        if self.profiled {
            full[0] = 1.0;
        }
        for (&i, &zi) in self.coords.iter().zip(z) {
            full[i] = zi;
        }
    }

    fn profiled_variance(&self, full: &[f64]) -> f64 {
        (self.ev.rss(full) / self.ev.n() as f64).max(VARIANCE_FLOOR)
    }

    /// `-2 L_n`, profiled over the scale for homoscedastic families.
    fn objective(&self, z: &[f64], full: &mut [f64]) -> f64 {
        self.expand(z, full);
        let viol = region_violation(&self.spec.family, full);
        if viol > 0.0 {
            return INFEASIBLE + VIOLATION_WEIGHT * viol.min(1e6);
        }
        let val = if self.profiled {
            let n = self.ev.n() as f64;
            let s2 = self.profiled_variance(full);
            if s2.is_finite() {
                n * s2.ln() + self.ev.rss(full) / s2
            } else {
                f64::INFINITY
            }
        } else {
            self.ev.neg2_loglik(full)
        };
        if val.is_finite() {
            val
        } else {
            INFEASIBLE
        }
    }

    fn finish(&self, z: &[f64]) -> Vec<f64> {
        let mut full = vec![0.0; self.spec.family.dim()];
        self.expand(z, &mut full);
        if self.profiled {
            full[0] = self.profiled_variance(&full).sqrt();
        }
        full
    }
}

struct RestartOutcome {
    z: Vec<f64>,
    f: f64,
    iterations: usize,
    converged: bool,
}

fn run_restart(problem: &Problem, z0: Vec<f64>, opts: &OptimizerOptions) -> RestartOutcome {
    let nm = NelderMeadOptions {
        max_iter: opts.max_iter,
        xtol: opts.xtol,
        ftol: opts.ftol,
    };
    let mut full = vec![0.0; problem.spec.family.dim()];
    let mut z = z0;
    let mut f = problem.objective(&z, &mut full);
    let mut iterations = 0;
    let mut converged = false;
    for _ in 0..MAX_CYCLES {
        let step: Vec<f64> = problem
            .coords
            .iter()
            .zip(&z)
            .map(|(&i, &v)| {
                if i == 0 {
                    0.25 * v.abs()
                } else {
                    (0.1 * v.abs()).max(0.05)
                }
            })
            .collect();
        let m = nelder_mead(|zz| problem.objective(zz, &mut full), &z, &step, &nm);
        iterations += m.iterations;
        converged = m.converged;
        let improved = f - m.f > opts.ftol * (m.f.abs() + 1.0);
        if m.f <= f {
            z = m.x;
            f = m.f;
        }
        if !improved {
            break;
        }
    }
    RestartOutcome {
        z,
        f,
        iterations,
        converged,
    }
}

/// Maximizes the truncated quasi-likelihood over the active slots.
pub fn fit_qmle(spec: &ModelSpec, x: &TimeSeries, opts: &OptimizerOptions) -> Result<FitResult> {
    opts.validate()?;
    let n = x.len();
    let dim = spec.dim();
    if n <= 10 * dim {
        return Err(Error::TooShort { n, dim });
    }
    let xs = x.as_slice();
    if xs.iter().all(|v| *v == xs[0]) {
        return Err(Error::DegenerateSeries(format!(
            "all {n} observations equal {}",
            xs[0]
        )));
    }
    let problem = Problem::new(spec, xs);
    let base = initial_point(spec, xs);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut outcomes = Vec::with_capacity(opts.restarts);
    for r in 0..opts.restarts {
        let start = if r == 0 {
            base.clone()
        } else {
            random_point(spec, &base, &mut rng)
        };
        let z0: Vec<f64> = problem.coords.iter().map(|&i| start[i]).collect();
        outcomes.push(run_restart(&problem, z0, opts));
    }
    let mut best = 0;
    for (r, o) in outcomes.iter().enumerate().skip(1) {
        let b = outcomes[best].f;
        if o.f < b - opts.ftol * (b.abs() + 1.0) {
            best = r;
        }
    }
    let win = &outcomes[best];
    if win.f >= INFEASIBLE {
        return Err(Error::InvalidParams(vec![format!(
            "no admissible point with a finite likelihood was found for {spec}"
        )]));
    }
    let values = problem.finish(&win.z);
    let loglik = -0.5 * problem.ev.neg2_loglik(&values);
    let theta = ParamVector::new(&spec.family, values)?;
    check_admissible(spec, &theta)?;
    let mut fit = FitResult {
        spec: spec.clone(),
        boundary: region_slack(spec, &theta.values) < BOUNDARY_TOL,
        theta,
        loglik,
        n,
        converged: win.converged,
        iterations: outcomes.iter().map(|o| o.iterations).sum(),
        best_restart: best,
        restart_objectives: outcomes.iter().map(|o| o.f).collect(),
        covariance: None,
        covariance_error: None,
    };
    if opts.covariance {
        attach_covariance(&mut fit, x, opts.fd_scale);
    }
    Ok(fit)
}

/// Computes and stores the sandwich covariance; failures are recorded on the
/// fit instead of being raised.
pub fn attach_covariance(fit: &mut FitResult, x: &TimeSeries, fd_scale: f64) {
    match covariance(&fit.spec, &fit.theta, x, fd_scale) {
        Ok(c) => {
            fit.covariance = Some(c);
            fit.covariance_error = None;
        }
        Err(e) => {
            fit.covariance = None;
            fit.covariance_error = Some(e.to_string());
        }
    }
}

/// Finite-difference step for slot value `v`.
pub(crate) fn fd_step(v: f64, scale: f64) -> f64 {
    f64::EPSILON.cbrt() * v.abs().max(1e-2) * scale
}

/// Per-observation gradients and the averaged Hessian of `q_t` over the
/// active slots, by central differences.
pub(crate) fn score_terms(
    ev: &Evaluator,
    spec: &ModelSpec,
    values: &[f64],
    scale: f64,
) -> Result<(Vec<Vec<f64>>, Matrix)> {
    let n = ev.n();
    let idx = spec.active_indices();
    let k = idx.len();
    let steps: Vec<f64> = idx.iter().map(|&i| fd_step(values[i], scale)).collect();
    let mut q_plus = vec![0.0; n];
    let mut q_minus = vec![0.0; n];
    let mut point = values.to_vec();
    let eval = |pt: &[f64], out: &mut [f64]| -> Result<()> {
        if ev.q_terms(pt, out) {
            Ok(())
        } else {
            Err(Error::NonFinite { index: 0 })
        }
    };
    let mut grads = vec![vec![0.0; n]; k];
    for (a, &i) in idx.iter().enumerate() {
        point[i] = values[i] + steps[a];
        eval(&point, &mut q_plus)?;
        point[i] = values[i] - steps[a];
        eval(&point, &mut q_minus)?;
        point[i] = values[i];
        for t in 0..n {
            grads[a][t] = (q_plus[t] - q_minus[t]) / (2.0 * steps[a]);
        }
    }
    // per-observation second differences, summed afterwards so the large
    // totals never cancel against each other
    let mut corner = vec![0.0; n];
    let mut acc = vec![0.0; n];
    let mut hess = Matrix::zeros(k, k);
    for a in 0..k {
        for b in 0..=a {
            let (i, j) = (idx[a], idx[b]);
            let (hi, hj) = (steps[a], steps[b]);
            acc.iter_mut().for_each(|v| *v = 0.0);
            for (si, sj, sign) in [
                (1.0, 1.0, 1.0),
                (1.0, -1.0, -1.0),
                (-1.0, 1.0, -1.0),
                (-1.0, -1.0, 1.0),
            ] {
                point[i] = values[i] + si * hi;
                point[j] += sj * hj;
                eval(&point, &mut corner)?;
                for (s, c) in acc.iter_mut().zip(&corner) {
                    *s += sign * c;
                }
                point[i] = values[i];
                point[j] = values[j];
            }
            let v = acc.iter().sum::<f64>() / (4.0 * hi * hj * n as f64);
            hess[(a, b)] = v;
            hess[(b, a)] = v;
        }
    }
    Ok((grads, hess))
}

fn outer_mean(grads: &[Vec<f64>]) -> Matrix {
    let k = grads.len();
    let n = grads.first().map_or(1, Vec::len) as f64;
    let mut g = Matrix::zeros(k, k);
    for a in 0..k {
        for b in 0..=a {
            let s: f64 = grads[a]
                .iter()
                .zip(&grads[b])
                .map(|(u, v)| u * v)
                .sum::<f64>()
                / n;
            g[(a, b)] = s;
            g[(b, a)] = s;
        }
    }
    g
}

/// `(G_hat, F_hat)` over the active slots, with steps scaled by `fd_scale`.
pub fn score_and_curvature_with_step(
    spec: &ModelSpec,
    theta: &ParamVector,
    x: &TimeSeries,
    fd_scale: f64,
) -> Result<(Matrix, Matrix)> {
    check_admissible(spec, theta)?;
    let ev = Evaluator::new(&spec.family, x.as_slice());
    let (grads, f) = score_terms(&ev, spec, &theta.values, fd_scale)?;
    Ok((outer_mean(&grads), f))
}

/// `G_hat = mean(grad q_t grad q_t')` and `F_hat = mean(Hess q_t)` over the
/// active slots.
pub fn score_and_curvature(
    spec: &ModelSpec,
    theta: &ParamVector,
    x: &TimeSeries,
) -> Result<(Matrix, Matrix)> {
    score_and_curvature_with_step(spec, theta, x, 1.0)
}

/// `F^-1 G F^-1`, with the condition estimate of `F` and the ridge flag.
pub fn sandwich(f: &Matrix, g: &Matrix) -> Result<(Matrix, f64, bool)> {
    let condition = Cholesky::new(f).map_or(f64::INFINITY, |c| c.condition_estimate());
    if condition > MAX_CONDITION && condition.is_finite() {
        return Err(Error::Singular { condition });
    }
    let fi =
        solve_spd(f, &Matrix::identity(f.rows())).map_err(|_| Error::Singular { condition })?;
    let mut s = fi.x.matmul(g).matmul(&fi.x);
    s.symmetrize();
    Ok((s, condition, fi.ridged))
}

pub fn covariance(
    spec: &ModelSpec,
    theta: &ParamVector,
    x: &TimeSeries,
    fd_scale: f64,
) -> Result<Covariance> {
    let (g_hat, f_hat) = score_and_curvature_with_step(spec, theta, x, fd_scale)?;
    let (sandwich, condition, ridged) = sandwich(&f_hat, &g_hat)?;
    let n = x.len() as f64;
    let std_errors = sandwich
        .diag()
        .iter()
        .map(|v| (v.max(0.0) / n).sqrt())
        .collect();
    Ok(Covariance {
        f_hat,
        g_hat,
        sandwich,
        std_errors,
        condition,
        ridged,
    })
}
