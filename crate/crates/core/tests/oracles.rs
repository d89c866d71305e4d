//! Closed forms and independent reimplementations checked against the
//! library.

#![allow(clippy::needless_range_loop)]

use affsel_core::models::simulate_with_noise;
use affsel_core::*;

fn spec(family: ModelFamily) -> ModelSpec {
    ModelSpec::full(family).unwrap()
}

fn params(family: &ModelFamily, v: &[f64]) -> ParamVector {
    ParamVector::new(family, v.to_vec()).unwrap()
}

fn no_cov() -> OptimizerOptions {
    OptimizerOptions {
        covariance: false,
        ..Default::default()
    }
}

#[test]
fn white_noise_sigma_is_root_mean_square() {
    let wn = spec(ModelFamily::WhiteNoise);
    let x = simulate(&wn, &params(&wn.family, &[1.7]), 3000, 0, 11).unwrap();
    let fit = fit_qmle(&wn, &x, &no_cov()).unwrap();
    let ms = x.values.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
    let s2 = fit.theta.values[0].powi(2);
    assert!((s2 - ms).abs() <= 1e-8 * ms, "{s2} vs {ms}");
}

/// Least squares on `x_t = a x_{t-1} + b x_{t-2}` with zero padding, solved
/// by Cramer's rule.
fn ar2_least_squares(x: &[f64]) -> (f64, f64) {
    let lag = |t: usize, k: usize| if t >= k { x[t - k] } else { 0.0 };
    let (mut s11, mut s12, mut s22, mut r1, mut r2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for t in 0..x.len() {
        let (u, v) = (lag(t, 1), lag(t, 2));
        s11 += u * u;
        s12 += u * v;
        s22 += v * v;
        r1 += u * x[t];
        r2 += v * x[t];
    }
    let det = s11 * s22 - s12 * s12;
    ((r1 * s22 - r2 * s12) / det, (s11 * r2 - s12 * r1) / det)
}

#[test]
fn ar2_qmle_matches_least_squares() {
    let ar2 = spec(ModelFamily::Ar { p: 2 });
    for seed in [1, 2, 3] {
        let x = simulate(
            &ar2,
            &params(&ar2.family, &[1.0, 0.4, 0.4]),
            2000,
            500,
            seed,
        )
        .unwrap();
        let fit = fit_qmle(&ar2, &x, &no_cov()).unwrap();
        let (a, b) = ar2_least_squares(&x.values);
        assert!(
            (fit.theta.values[1] - a).abs() < 1e-4,
            "{} vs {a}",
            fit.theta.values[1]
        );
        assert!(
            (fit.theta.values[2] - b).abs() < 1e-4,
            "{} vs {b}",
            fit.theta.values[2]
        );
    }
}

#[test]
fn garch_recursion_equals_truncated_arch_inf_expansion() {
    let g = spec(ModelFamily::Garch { p: 1, q: 1 });
    let (c0, c1, d1) = (0.05, 0.1, 0.8);
    let theta = params(&g.family, &[c0, c1, d1]);
    let x = simulate(&g, &theta, 800, 200, 5).unwrap();
    let (_, h) = conditional_moments(&g, &theta, &x).unwrap();
    // zero presample: h_t = c0/(1-d1) + c1 sum_{k=1..t} d1^(k-1) x_{t-k}^2
    for t in 0..x.len() {
        let mut s = c0 / (1.0 - d1);
        let mut w = c1;
        for k in 1..=t {
            s += w * x.values[t - k].powi(2);
            w *= d1;
        }
        assert!((h[t] - s).abs() <= 1e-10 * s, "t = {t}: {} vs {s}", h[t]);
    }
    // the likelihood built on either variance path agrees too
    let total = quasi_loglik(&g, &theta, &x).unwrap().total;
    let direct: f64 = x
        .values
        .iter()
        .zip(&h)
        .map(|(v, h)| -0.5 * (v * v / h + h.ln()))
        .sum();
    assert!((total - direct).abs() <= 1e-10 * direct.abs());
}

#[test]
fn gaussian_likelihood_identity_for_ar() {
    // -2 L = n ln sigma^2 + RSS / sigma^2 for any admissible AR parameter
    let ar = spec(ModelFamily::Ar { p: 2 });
    let x = simulate(&ar, &params(&ar.family, &[1.0, 0.5, -0.2]), 400, 100, 9).unwrap();
    let theta = params(&ar.family, &[1.3, 0.1, 0.3]);
    let ev = quasi_loglik(&ar, &theta, &x).unwrap();
    let xs = &x.values;
    let mut rss = 0.0;
    for t in 0..xs.len() {
        let l1 = if t >= 1 { xs[t - 1] } else { 0.0 };
        let l2 = if t >= 2 { xs[t - 2] } else { 0.0 };
        rss += (xs[t] - 0.1 * l1 - 0.3 * l2).powi(2);
    }
    let n = xs.len() as f64;
    let expect = -0.5 * (n * 1.69f64.ln() + rss / 1.69);
    assert!((ev.total - expect).abs() < 1e-9 * expect.abs());
}

#[test]
fn residuals_recover_the_driving_noise() {
    let cases = [
        (ModelFamily::Arma { p: 1, q: 1 }, vec![1.0, 0.3, -0.5]),
        (ModelFamily::Garch { p: 1, q: 1 }, vec![0.05, 0.1, 0.8]),
        (ModelFamily::Arch { p: 2 }, vec![0.2, 0.4, 0.2]),
    ];
    for (family, v) in cases {
        let s = spec(family);
        let theta = params(&s.family, &v);
        let (x, xi) = simulate_with_noise(&s, &theta, 1000, 500, 21).unwrap();
        let e = residuals(&s, &theta, &x).unwrap();
        for t in 101..x.len() {
            assert!(
                (e.e_hat[t] - xi[t]).abs() < 1e-6,
                "{}: t = {t}, {} vs {}",
                s.family,
                e.e_hat[t],
                xi[t]
            );
        }
    }
}

#[test]
fn truncation_is_forgotten() {
    // dropping a prefix only changes the early conditional variances
    let g = spec(ModelFamily::Garch { p: 1, q: 1 });
    let theta = params(&g.family, &[0.05, 0.1, 0.8]);
    let x = simulate(&g, &theta, 1500, 200, 8).unwrap();
    let cut = 100;
    let tail = TimeSeries::new(x.values[cut..].to_vec()).unwrap();
    let (_, h_full) = conditional_moments(&g, &theta, &x).unwrap();
    let (_, h_tail) = conditional_moments(&g, &theta, &tail).unwrap();
    for t in 300..tail.len() {
        let d = (h_full[t + cut] - h_tail[t]).abs();
        assert!(d < 1e-10, "t = {t}: gap {d}");
    }
}

#[test]
fn ar2_sample_variance_matches_yule_walker() {
    let ar = spec(ModelFamily::Ar { p: 2 });
    let (a, b) = (0.4, 0.4);
    let x = simulate(&ar, &params(&ar.family, &[1.0, a, b]), 100_000, 1000, 3).unwrap();
    let var = (1.0 - b) / ((1.0 + b) * ((1.0 - b).powi(2) - a * a));
    let got = x.variance();
    assert!((got / var - 1.0).abs() < 0.02, "{got} vs {var}");
}

#[test]
fn garch_second_moment_matches_closed_form() {
    let g = spec(ModelFamily::Garch { p: 1, q: 1 });
    let x = simulate(&g, &params(&g.family, &[0.05, 0.1, 0.8]), 100_000, 1000, 4).unwrap();
    let m2 = x.values.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
    let expect = 0.05 / (1.0 - 0.1 - 0.8);
    assert!((m2 / expect - 1.0).abs() < 0.05, "{m2} vs {expect}");
}

#[test]
fn hand_correlogram() {
    // squares (2, 0, 2, 0): centred (1, -1, 1, -1)
    let c = correlogram_of_squares(&[2.0, 0.0, 2.0, 0.0], 1).unwrap();
    assert_eq!(c.gamma, vec![1.0, -0.75]);
    assert_eq!(c.rho, vec![-0.75]);

    // squares (0, 4, 0, 4): centred (-1, 3, -1, 3)
    let e = ResidualSeries::new(vec![0.0, 2.0, 0.0, 2.0]).unwrap();
    let c = squared_residual_correlogram(&e, 1).unwrap();
    assert_eq!(c.gamma, vec![5.0, -2.25]);
    assert_eq!(c.rho, vec![-0.45]);
}

#[test]
fn chi2_two_degrees_is_exponential() {
    for x in [0.0, 0.1, 1.0, 2.5, 5.991, 10.0, 40.0, 120.0] {
        let got = chi2_sf(x, 2).unwrap();
        let want = (-x / 2.0).exp();
        assert!(
            (got - want).abs() <= 1e-12 * want.max(1e-300),
            "x = {x}: {got} vs {want}"
        );
    }
}

/// Gamma at a positive half-integer by the recursion from 1 or 1/2.
fn gamma_half_integer(k: f64) -> f64 {
    let (mut g, mut z) = if k.fract() == 0.0 {
        (1.0, 1.0)
    } else {
        (std::f64::consts::PI.sqrt(), 0.5)
    };
    while z < k {
        g *= z;
        z += 1.0;
    }
    g
}

/// Upper tail of the chi-square density by composite Simpson on `[x, x+200]`.
fn chi2_sf_by_quadrature(x: f64, df: usize) -> f64 {
    let k = df as f64 / 2.0;
    let ln_gamma_k = gamma_half_integer(k).ln();
    let pdf = |t: f64| {
        if t <= 0.0 {
            return 0.0;
        }
        ((k - 1.0) * t.ln() - t / 2.0 - k * 2f64.ln() - ln_gamma_k).exp()
    };
    let (a, b, m) = (x, x + 200.0, 200_000);
    let h = (b - a) / m as f64;
    let mut s = pdf(a) + pdf(b);
    for i in 1..m {
        s += pdf(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

#[test]
fn chi2_matches_quadrature() {
    let got = chi2_sf(7.8147, 3).unwrap();
    assert!((got - 0.05).abs() < 1e-5, "{got}");
    for (x, df) in [
        (7.8147, 3),
        (1.0, 1),
        (3.0, 4),
        (12.0, 7),
        (0.5, 10),
        (30.0, 5),
    ] {
        let got = chi2_sf(x, df).unwrap();
        let want = chi2_sf_by_quadrature(x, df);
        assert!(
            (got - want).abs() < 1e-8,
            "x = {x}, df = {df}: {got} vs {want}"
        );
    }
}

#[test]
fn aparch_with_power_two_and_no_asymmetry_is_garch() {
    let g = spec(ModelFamily::Garch { p: 1, q: 1 });
    let a = spec(ModelFamily::Aparch {
        delta: 2.0,
        p: 1,
        q: 1,
    });
    let tg = params(&g.family, &[0.05, 0.1, 0.8]);
    // omega, alpha1, gamma1, beta1
    let ta = params(&a.family, &[0.05, 0.1, 0.0, 0.8]);
    let xg = simulate(&g, &tg, 1000, 200, 17).unwrap();
    let xa = simulate(&a, &ta, 1000, 200, 17).unwrap();
    assert_eq!(xg.values, xa.values);
    let (_, hg) = conditional_moments(&g, &tg, &xg).unwrap();
    let (_, ha) = conditional_moments(&a, &ta, &xg).unwrap();
    for (u, v) in hg.iter().zip(&ha) {
        assert!((u - v).abs() <= 1e-12 * u);
    }
}
