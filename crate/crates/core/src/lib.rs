//! Quasi-maximum-likelihood estimation, penalized model selection and
//! squared-residual portmanteau testing for affine causal time series.
//!
//! The families covered are white noise, AR, ARMA, ARCH, GARCH, APARCH,
//! ARMA-GARCH and AR models with ARCH(inf) innovations. [`harness`] drives
//! Monte Carlo selection and size/power experiments on top of them.

// NaN must fail the range checks, and the numeric loops index several
// arrays in step.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod diagnostics;
pub mod error;
pub mod estimation;
pub mod harness;
pub mod likelihood;
pub mod linalg;
pub mod models;
pub mod optim;
pub mod poly;
pub mod selection;
pub mod special;

pub use diagnostics::{
    correlogram_of_squares, estimate_v, estimate_v_in, portmanteau, portmanteau_arch,
    portmanteau_in, squared_residual_correlogram, Correlogram, PortmanteauReport, TestVariant,
    VEstimate, VForm,
};
pub use error::{Error, Result};
pub use estimation::{fit_qmle, score_and_curvature, Covariance, FitResult, OptimizerOptions};
pub use likelihood::{
    conditional_moments, quasi_loglik, residuals, QuasiLikEval, ResidualSeries, VARIANCE_FLOOR,
};
pub use linalg::{solve_spd, Matrix};
pub use models::{
    param_layout, simulate, validate_params, ModelFamily, ModelSpec, ParamVector, SlotBound,
    TimeSeries, Validity,
};
pub use selection::{
    classify, criterion, enumerate_candidates, penalty_value, select, CandidateGrid,
    Classification, GridPart, Penalty, SelectionReport,
};
pub use special::chi2_sf;
