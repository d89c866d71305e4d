//! Sandwich covariance against analytic scores and asymptotic variances.

use affsel_core::estimation::{covariance, score_and_curvature_with_step};
use affsel_core::*;

fn spec(family: ModelFamily) -> ModelSpec {
    ModelSpec::full(family).unwrap()
}

fn params(family: &ModelFamily, v: &[f64]) -> ParamVector {
    ParamVector::new(family, v.to_vec()).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-12)
}

/// Analytic `G` and `F` for AR(1) in (sigma, phi) with
/// `q_t = (x_t - phi x_{t-1})^2 / sigma^2 + 2 ln sigma`.
fn ar1_analytic(x: &[f64], sigma: f64, phi: f64) -> ([[f64; 2]; 2], [[f64; 2]; 2]) {
    let n = x.len() as f64;
    let (mut g, mut f) = ([[0.0; 2]; 2], [[0.0; 2]; 2]);
    let s2 = sigma * sigma;
    for t in 0..x.len() {
        let l = if t > 0 { x[t - 1] } else { 0.0 };
        let e = x[t] - phi * l;
        let ds = -2.0 * e * e / (s2 * sigma) + 2.0 / sigma;
        let dp = -2.0 * l * e / s2;
        let d = [ds, dp];
        for a in 0..2 {
            for b in 0..2 {
                g[a][b] += d[a] * d[b] / n;
            }
        }
        f[0][0] += (6.0 * e * e / (s2 * s2) - 2.0 / s2) / n;
        f[0][1] += 4.0 * l * e / (s2 * sigma) / n;
        f[1][1] += 2.0 * l * l / s2 / n;
    }
    f[1][0] = f[0][1];
    (g, f)
}

#[test]
fn finite_differences_match_analytic_ar1_derivatives() {
    let ar = spec(ModelFamily::Ar { p: 1 });
    let x = simulate(&ar, &params(&ar.family, &[1.0, 0.6]), 3000, 200, 2).unwrap();
    // away from the optimum so the score does not vanish
    let (sigma, phi) = (1.2, 0.45);
    let theta = params(&ar.family, &[sigma, phi]);
    let (g, f) = score_and_curvature_with_step(&ar, &theta, &x, 1.0).unwrap();
    let (ga, fa) = ar1_analytic(&x.values, sigma, phi);
    for a in 0..2 {
        for b in 0..2 {
            assert!(
                rel(g[(a, b)], ga[a][b]) < 1e-5,
                "G[{a}][{b}]: {} vs {}",
                g[(a, b)],
                ga[a][b]
            );
            assert!(
                rel(f[(a, b)], fa[a][b]) < 1e-5,
                "F[{a}][{b}]: {} vs {}",
                f[(a, b)],
                fa[a][b]
            );
        }
    }
}

#[test]
fn white_noise_sigma_variance_is_half_sigma_squared() {
    // var(sigma2_hat) = 2 sigma^4 maps to var(sigma_hat) = sigma^2 / 2
    let wn = spec(ModelFamily::WhiteNoise);
    let sigma = 1.5;
    let x = simulate(&wn, &params(&wn.family, &[sigma]), 20_000, 0, 4).unwrap();
    let fit = fit_qmle(&wn, &x, &OptimizerOptions::default()).unwrap();
    let s = &fit.covariance.as_ref().unwrap().sandwich;
    let want = sigma * sigma / 2.0;
    assert!(rel(s[(0, 0)], want) < 0.05, "{} vs {want}", s[(0, 0)]);
    // the delta method back to the variance scale
    let var_s2 = 4.0 * fit.theta.values[0].powi(2) * s[(0, 0)];
    let want = 2.0 * sigma.powi(4);
    assert!(rel(var_s2, want) < 0.08, "{var_s2} vs {want}");
}

#[test]
fn ar1_sandwich_matches_one_minus_phi_squared() {
    let ar = spec(ModelFamily::Ar { p: 1 });
    let phi = 0.5;
    let x = simulate(&ar, &params(&ar.family, &[1.0, phi]), 10_000, 500, 6).unwrap();
    let fit = fit_qmle(&ar, &x, &OptimizerOptions::default()).unwrap();
    let s = &fit.covariance.as_ref().unwrap().sandwich;
    assert!(rel(s[(1, 1)], 1.0 - phi * phi) < 0.15, "{}", s[(1, 1)]);
}

#[test]
fn halving_the_step_keeps_three_digits() {
    let cases = [
        (ModelFamily::Ar { p: 2 }, vec![1.0, 0.4, 0.4]),
        (ModelFamily::Garch { p: 1, q: 1 }, vec![0.05, 0.1, 0.8]),
        (ModelFamily::Arch { p: 2 }, vec![0.2, 0.4, 0.2]),
    ];
    for (family, v) in cases {
        let s = spec(family);
        let x = simulate(&s, &params(&s.family, &v), 2000, 500, 12).unwrap();
        let fit = fit_qmle(
            &s,
            &x,
            &OptimizerOptions {
                covariance: false,
                ..Default::default()
            },
        )
        .unwrap();
        let a = covariance(&s, &fit.theta, &x, 1.0).unwrap();
        let b = covariance(&s, &fit.theta, &x, 0.5).unwrap();
        let pairs = [(&a.g_hat, &b.g_hat), (&a.f_hat, &b.f_hat)];
        for (u, w) in pairs {
            // entries that vanish at the optimum are compared on the matrix scale
            let scale = u.as_slice().iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for (p, q) in u.as_slice().iter().zip(w.as_slice()) {
                assert!(
                    (p - q).abs() < 5e-4 * p.abs().max(1e-3 * scale),
                    "{}: {p} vs {q}",
                    s.family
                );
            }
        }
        for (u, w) in a.std_errors.iter().zip(&b.std_errors) {
            assert!(rel(*u, *w) < 5e-4, "{}: {u} vs {w}", s.family);
        }
    }
}

#[test]
fn sandwich_is_symmetric_and_positive() {
    let g = spec(ModelFamily::Garch { p: 1, q: 1 });
    let x = simulate(&g, &params(&g.family, &[0.05, 0.1, 0.8]), 2000, 500, 13).unwrap();
    let fit = fit_qmle(&g, &x, &OptimizerOptions::default()).unwrap();
    let c = fit.covariance.as_ref().unwrap();
    assert!(c.sandwich.is_symmetric(1e-12));
    assert!(solve_spd(&c.sandwich, &Matrix::identity(3)).is_ok());
    assert!(c.std_errors.iter().all(|s| *s > 0.0 && s.is_finite()));
}
