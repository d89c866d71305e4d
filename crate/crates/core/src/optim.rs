//! Nelder-Mead simplex minimization.

#[derive(Clone, Debug)]
pub struct NelderMeadOptions {
    pub max_iter: usize,
    /// Stop when the simplex diameter falls below this.
    pub xtol: f64,
    /// Stop when `f_worst - f_best <= ftol * (|f_best| + ftol)`.
    pub ftol: f64,
}

#[derive(Clone, Debug)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub converged: bool,
}

const ALPHA: f64 = 1.0;

/// Expansion, contraction and shrink coefficients. Above two dimensions the
/// dimension-adapted values of Gao and Han (2012) are used; at `d <= 2` they
/// coincide with the classical (2, 1/2, 1/2).
fn coefficients(d: usize) -> (f64, f64, f64) {
    if d <= 2 {
        return (2.0, 0.5, 0.5);
    }
    let d = d as f64;
    (1.0 + 2.0 / d, 0.75 - 0.5 / d, 1.0 - 1.0 / d)
}

/// Minimizes `f` starting from `x0`, with initial simplex vertices
/// `x0 + step_i e_i`.
pub fn nelder_mead(
    mut f: impl FnMut(&[f64]) -> f64,
    x0: &[f64],
    step: &[f64],
    opts: &NelderMeadOptions,
) -> Minimum {
    let d = x0.len();
    if d == 0 {
        return Minimum {
            x: Vec::new(),
            f: f(&[]),
            iterations: 0,
            converged: true,
        };
    }
    let mut pts: Vec<Vec<f64>> = Vec::with_capacity(d + 1);
    pts.push(x0.to_vec());
    for i in 0..d {
        let mut p = x0.to_vec();
        p[i] += step[i];
        pts.push(p);
    }
    let mut vals: Vec<f64> = pts.iter().map(|p| f(p)).collect();
    let mut order: Vec<usize> = (0..=d).collect();
    let mut iterations = 0;
    let mut converged = false;
    let mut centroid = vec![0.0; d];
    let mut trial = vec![0.0; d];
    let mut trial2 = vec![0.0; d];
    let (gamma, rho, sigma) = coefficients(d);

    while iterations < opts.max_iter {
        // stable sort keeps earlier vertices first among ties
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        let best = order[0];
        let worst = order[d];
        let second = order[d - 1];
        let spread = vals[worst] - vals[best];
        let diam = order[1..]
            .iter()
            .map(|&i| {
                pts[i]
                    .iter()
                    .zip(&pts[best])
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if spread <= opts.ftol * (vals[best].abs() + opts.ftol) && diam <= opts.xtol {
            converged = true;
            break;
        }
        iterations += 1;

        centroid.iter_mut().for_each(|c| *c = 0.0);
        for &i in &order[..d] {
            for (c, v) in centroid.iter_mut().zip(&pts[i]) {
                *c += v;
            }
        }
        centroid.iter_mut().for_each(|c| *c /= d as f64);

        for k in 0..d {
            trial[k] = centroid[k] + ALPHA * (centroid[k] - pts[worst][k]);
        }
        let fr = f(&trial);
        if fr < vals[best] {
            for k in 0..d {
                trial2[k] = centroid[k] + gamma * (trial[k] - centroid[k]);
            }
            let fe = f(&trial2);
            if fe < fr {
                pts[worst].copy_from_slice(&trial2);
                vals[worst] = fe;
            } else {
                pts[worst].copy_from_slice(&trial);
                vals[worst] = fr;
            }
            continue;
        }
        if fr < vals[second] {
            pts[worst].copy_from_slice(&trial);
            vals[worst] = fr;
            continue;
        }
        let (target, ft) = if fr < vals[worst] {
            (&trial, fr)
        } else {
            (&pts[worst].clone(), vals[worst])
        };
        for k in 0..d {
            trial2[k] = centroid[k] + rho * (target[k] - centroid[k]);
        }
        let fc = f(&trial2);
        if fc < ft {
            pts[worst].copy_from_slice(&trial2);
            vals[worst] = fc;
            continue;
        }
        let anchor = pts[best].clone();
        for &i in &order[1..] {
            for k in 0..d {
                pts[i][k] = anchor[k] + sigma * (pts[i][k] - anchor[k]);
            }
            vals[i] = f(&pts[i]);
        }
    }
    let best = (0..=d)
        .min_by(|&a, &b| vals[a].total_cmp(&vals[b]).then(a.cmp(&b)))
        .unwrap_or(0);
    Minimum {
        x: pts[best].clone(),
        f: vals[best],
        iterations,
        converged,
    }
}
