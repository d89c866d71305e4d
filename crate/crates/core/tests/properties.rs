use affsel_core::models::check_admissible;
use affsel_core::*;
use proptest::prelude::*;

fn params(family: &ModelFamily, v: &[f64]) -> ParamVector {
    ParamVector::new(family, v.to_vec()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn power_penalty_round_trips(d in 0.01f64..0.99) {
        let p = Penalty::PowerN(d);
        let back: Penalty = p.to_string().parse().unwrap();
        prop_assert_eq!(&back, &p);
        let json = serde_json::to_string(&p).unwrap();
        let back: Penalty = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(back, p);
    }

    #[test]
    fn power_penalty_rejects_exponents_outside_the_unit_interval(d in 1.0f64..5.0) {
        let above = format!("power:{d}").parse::<Penalty>();
        let below = format!("power:{}", -d).parse::<Penalty>();
        prop_assert!(above.is_err() && below.is_err());
    }

    #[test]
    fn chi2_tail_is_a_decreasing_probability(x in 0.0f64..200.0, dx in 0.0f64..20.0, df in 1usize..40) {
        let a = chi2_sf(x, df).unwrap();
        let b = chi2_sf(x + dx, df).unwrap();
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert!(b <= a + 1e-15);
    }

    #[test]
    fn simulation_is_a_function_of_the_seed(seed in any::<u64>()) {
        let g = ModelSpec::full(ModelFamily::Garch { p: 1, q: 1 }).unwrap();
        let theta = params(&g.family, &[0.05, 0.1, 0.8]);
        let a = simulate(&g, &theta, 200, 50, seed).unwrap();
        let b = simulate(&g, &theta, 200, 50, seed).unwrap();
        prop_assert_eq!(&a.values, &b.values);
        let c = simulate(&g, &theta, 200, 50, seed.wrapping_add(1)).unwrap();
        prop_assert_ne!(a.values, c.values);
    }

    #[test]
    fn autocorrelations_are_bounded(e in prop::collection::vec(-10.0f64..10.0, 20..200), k in 1usize..10) {
        prop_assume!(e.iter().any(|v| (v * v - 1.0).abs() > 1e-3));
        let c = squared_residual_correlogram(&ResidualSeries::new(e).unwrap(), k).unwrap();
        prop_assert!(c.rho.iter().all(|r| r.abs() <= 1.0 + 1e-12));
        prop_assert!(c.gamma[0] > 0.0);
    }

    #[test]
    fn param_vectors_survive_json(c0 in 1e-3f64..1.0, c1 in 0.0f64..0.5, d1 in 0.0f64..0.49) {
        let family = ModelFamily::Garch { p: 1, q: 1 };
        let theta = params(&family, &[c0, c1, d1]);
        let back: ParamVector = serde_json::from_str(&serde_json::to_string(&theta).unwrap()).unwrap();
        prop_assert_eq!(back, theta);
    }

    #[test]
    fn stationary_ar2_passes_both_checks(a in -1.9f64..1.9, b in -0.95f64..0.95) {
        // AR(2) is stationary iff |b| < 1, b + a < 1 and b - a < 1
        let inside = b + a < 1.0 && b - a < 1.0;
        let ar = ModelSpec::full(ModelFamily::Ar { p: 2 }).unwrap();
        let theta = params(&ar.family, &[1.0, a, b]);
        let v = validate_params(&ar, &theta, 2.0).unwrap();
        let margin = (1.0 - b - a).min(1.0 - b + a);
        prop_assume!(margin.abs() > 1e-6);
        prop_assert_eq!(v.valid, inside, "{:?}", v.violations);
        prop_assert_eq!(check_admissible(&ar, &theta).is_ok(), inside);
    }

    #[test]
    fn garch_admissibility_is_the_sum_condition(c1 in 0.0f64..1.0, d1 in 0.0f64..1.0) {
        prop_assume!((c1 + d1 - 1.0).abs() > 1e-6);
        let g = ModelSpec::full(ModelFamily::Garch { p: 1, q: 1 }).unwrap();
        let theta = params(&g.family, &[0.1, c1, d1]);
        prop_assert_eq!(check_admissible(&g, &theta).is_ok(), c1 + d1 < 1.0);
    }
}
