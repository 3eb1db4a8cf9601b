//! Special functions and the count / rate distributions of the cardinality model.
//!
//! A set cardinality `m` is Poisson with a Gamma-distributed rate; integrating the
//! rate out gives a negative binomial law. Everything here works in log space.

mod dist;
mod special;

pub use dist::{
    gamma_log_pdf, ln_factorial, nb_log_pmf, nb_mean, nb_mode, poisson_log_pmf, GammaParams, NegBinParams,
    PoissonParams,
};
pub use special::{digamma, log_gamma};

/// Variants that skip argument validation, for callers whose types already
/// guarantee a positive argument.
pub(crate) mod special_unchecked {
    pub(crate) use super::special::{digamma_unchecked as digamma, log_gamma_unchecked as log_gamma};
}
