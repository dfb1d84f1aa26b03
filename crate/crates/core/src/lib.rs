//! Semiparametric Fisher information for models parametrized by normed spaces, on finite grids.
//!
//! - [`spaces`]: weighted `L_q` norms, the sup norm and the grid dual pairing.
//! - [`operators`]: score operators, adjoints, null spaces and quotient reduction.
//! - [`information`]: directional and infimal information, least-norm representers,
//!   identifiability, and the positive-information / adjoint-range cross-check.
//! - [`models`]: the average-of-a-transformation and density-at-a-point models, refinement
//!   studies and mean-square differentiability remainders.
//! - [`ratelab`]: seeded Monte Carlo rate experiments.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fit;
pub mod information;
mod linalg;
pub mod models;
pub mod operators;
pub mod ratelab;
pub mod serde_float;
pub mod spaces;

pub use error::{Error, Result};
pub use information::{
    check_local_identifiability, compute_information, directional_information,
    least_norm_representer, quotient_information, verdict_from_report, verify_theorem,
    GradientFunctional, Identifiability, InfoProblem, InfoReport, QuotientCheck, Representer,
    TheoremVerdict, Tolerances,
};
pub use operators::{
    l2_norm, null_space, quotient_reduce, NullSpaceBasis, OperatorMatrix, Quotient,
    QuotientReduction, ScoreOperator,
};
pub use spaces::{
    dual_exponent, dual_pairing, lp_norm, sup_norm, Density, GridMeasure, NormSpec, TangentVector,
    Weighting,
};
