//! Fixed series and parameter points shared by the benchmarks.

use affsel_core::models::DEFAULT_MAX_LAG;
use affsel_core::{simulate, ModelFamily, ModelSpec, ParamVector, TimeSeries};

pub const SEED: u64 = 2024;

/// Full spec with its generating parameters.
pub fn model(family: ModelFamily, values: &[f64]) -> (ModelSpec, ParamVector) {
    let theta = ParamVector::new(&family, values.to_vec()).expect("parameter count");
    (ModelSpec::full(family).expect("valid family"), theta)
}

pub fn garch11() -> (ModelSpec, ParamVector) {
    model(ModelFamily::Garch { p: 1, q: 1 }, &[0.05, 0.1, 0.8])
}

pub fn ar2() -> (ModelSpec, ParamVector) {
    model(ModelFamily::Ar { p: 2 }, &[1.0, 0.4, 0.4])
}

pub fn arma11() -> (ModelSpec, ParamVector) {
    model(ModelFamily::Arma { p: 1, q: 1 }, &[1.0, 0.3, -0.5])
}

/// AR(2) with ARCH(inf) innovations, decay 3.
pub fn ar_arch_inf() -> (ModelSpec, ParamVector) {
    model(
        ModelFamily::ArArchInf {
            p: 2,
            decay: 3.0,
            max_lag: DEFAULT_MAX_LAG,
        },
        &[0.5, 0.1, -0.45, 0.4],
    )
}

pub fn series(spec: &ModelSpec, theta: &ParamVector, n: usize) -> TimeSeries {
    simulate(spec, theta, n, 500, SEED).expect("admissible generator")
}
