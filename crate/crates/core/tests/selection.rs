//! Estimation and selection behaviour on simulated data.

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
fn sqrt_n_separates_white_noise_from_ar1() {
    let wn = spec(ModelFamily::WhiteNoise);
    let ar1 = spec(ModelFamily::Ar { p: 1 });
    let candidates = [wn.clone(), ar1.clone()];
    let (mut wn_right, mut ar_right) = (0, 0);
    for seed in 0..20 {
        let x = simulate(&wn, &params(&wn.family, &[1.0]), 1000, 0, seed).unwrap();
        let r = select(&x, &candidates, &Penalty::SqrtN, &no_cov()).unwrap();
        wn_right += usize::from(r.chosen_spec() == &wn);
        let y = simulate(&ar1, &params(&ar1.family, &[1.0, 0.3]), 1000, 200, seed).unwrap();
        let r = select(&y, &candidates, &Penalty::SqrtN, &no_cov()).unwrap();
        ar_right += usize::from(r.chosen_spec() == &ar1);
    }
    assert!(wn_right >= 19, "{wn_right}/20");
    assert_eq!(ar_right, 20);
}

#[test]
fn larger_nested_models_never_lose_likelihood() {
    let ar2 = spec(ModelFamily::Ar { p: 2 });
    let x = simulate(&ar2, &params(&ar2.family, &[1.0, 0.4, 0.4]), 1000, 200, 3).unwrap();
    let mut prev = f64::NEG_INFINITY;
    for p in 0..=4 {
        let s = if p == 0 {
            spec(ModelFamily::WhiteNoise)
        } else {
            spec(ModelFamily::Ar { p })
        };
        let fit = fit_qmle(&s, &x, &no_cov()).unwrap();
        assert!(
            fit.loglik >= prev - 1e-6,
            "AR({p}): {} < {prev}",
            fit.loglik
        );
        prev = fit.loglik;
    }
    let g1 = fit_qmle(&spec(ModelFamily::Arch { p: 1 }), &x, &no_cov()).unwrap();
    let g2 = fit_qmle(&spec(ModelFamily::Garch { p: 1, q: 1 }), &x, &no_cov()).unwrap();
    assert!(g2.loglik >= g1.loglik - 1e-6);
}

#[test]
fn masked_slots_behave_like_the_smaller_model() {
    let ar1 = spec(ModelFamily::Ar { p: 1 });
    let x = simulate(&ar1, &params(&ar1.family, &[1.0, 0.6]), 1500, 200, 4).unwrap();
    let masked =
        ModelSpec::with_active(ModelFamily::Ar { p: 3 }, vec![true, true, false, false]).unwrap();
    let small = fit_qmle(&ar1, &x, &no_cov()).unwrap();
    let big = fit_qmle(&masked, &x, &no_cov()).unwrap();
    assert!((small.loglik - big.loglik).abs() < 1e-8);
    assert!((small.theta.values[1] - big.theta.values[1]).abs() < 1e-5);
    assert_eq!(&big.theta.values[2..], &[0.0, 0.0]);
    assert_eq!(big.dim(), 2);
}

#[test]
fn subset_search_finds_lags_three_and_four() {
    let ar4 = ModelSpec::ar_subset(4, &[3, 4]).unwrap();
    let theta = params(&ar4.family, &[1.0, 0.0, 0.0, 0.4, 0.4]);
    let candidates = enumerate_candidates(&CandidateGrid::ar_subsets(4)).unwrap();
    assert_eq!(candidates.len(), 16);
    for seed in 0..3 {
        let x = simulate(&ar4, &theta, 2000, 500, seed).unwrap();
        let mut r = select(&x, &candidates, &Penalty::SqrtN, &no_cov()).unwrap();
        r.classify_against(&ar4);
        assert_eq!(r.chosen_spec(), &ar4);
        assert_eq!(r.classification, Some(Classification::True));
    }
}

#[test]
fn duplicate_candidates_tie_and_the_first_wins() {
    let ar1 = spec(ModelFamily::Ar { p: 1 });
    let x = simulate(&ar1, &params(&ar1.family, &[1.0, 0.5]), 800, 200, 5).unwrap();
    let candidates = [spec(ModelFamily::WhiteNoise), ar1.clone(), ar1.clone()];
    let r = select(&x, &candidates, &Penalty::LogN, &no_cov()).unwrap();
    assert_eq!(r.chosen, 1);
    assert_eq!(r.ties, vec![1, 2]);
}

#[test]
fn criterion_adds_kappa_per_parameter() {
    let ar1 = spec(ModelFamily::Ar { p: 1 });
    let x = simulate(&ar1, &params(&ar1.family, &[1.0, 0.5]), 500, 200, 6).unwrap();
    let r = select(&x, &[ar1], &Penalty::PowerN(0.5), &no_cov()).unwrap();
    let rec = r.chosen_record();
    let kappa = 500f64.sqrt();
    assert!((r.kappa - kappa).abs() < 1e-12);
    let want = -2.0 * rec.loglik.unwrap() + 2.0 * kappa;
    assert!((rec.criterion.unwrap() - want).abs() < 1e-9);
}

#[test]
fn garch_intervals_cover_the_truth() {
    let g = spec(ModelFamily::Garch { p: 1, q: 1 });
    let truth = [0.05, 0.1, 0.8];
    let theta = params(&g.family, &truth);
    let runs = 40;
    let mut hits = [0usize; 3];
    for seed in 0..runs {
        let x = simulate(&g, &theta, 2000, 500, 500 + seed).unwrap();
        let fit = fit_qmle(&g, &x, &OptimizerOptions::default()).unwrap();
        let se = &fit.covariance.as_ref().unwrap().std_errors;
        for i in 0..3 {
            if (fit.theta.values[i] - truth[i]).abs() <= 1.96 * se[i] {
                hits[i] += 1;
            }
        }
    }
    // nominal 95%; 40 runs put the 1% binomial quantile near 34
    for (i, h) in hits.iter().enumerate() {
        assert!(*h >= 33, "slot {i}: {h}/{runs}");
    }
}

#[test]
fn failed_candidates_are_excluded_not_fatal() {
    // AR(60) needs n > 610 and fails on 300 points
    let ar1 = spec(ModelFamily::Ar { p: 1 });
    let x = simulate(&ar1, &params(&ar1.family, &[1.0, 0.5]), 300, 100, 7).unwrap();
    let candidates = [spec(ModelFamily::Ar { p: 60 }), ar1.clone()];
    let r = select(&x, &candidates, &Penalty::LogN, &no_cov()).unwrap();
    assert_eq!(r.excluded, vec![0]);
    assert_eq!(r.chosen, 1);
    assert!(r.records[0].error.is_some());
    let only_bad = [spec(ModelFamily::Ar { p: 60 })];
    assert!(select(&x, &only_bad, &Penalty::LogN, &no_cov()).is_err());
}
