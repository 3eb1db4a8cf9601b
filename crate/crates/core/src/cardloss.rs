//! Cardinality loss: the negative log-likelihood of an observed count under the
//! negative binomial obtained from a Gamma `(alpha, beta)` prior on a Poisson rate.
//!
//! Per sample, with `m` the observed cardinality,
//!
//! ```text
//! nll(m; alpha, beta) = -[ lnΓ(m+alpha) - lnΓ(m+1) - lnΓ(alpha)
//!                          + alpha ln(beta) - (alpha+m) ln(1+beta) ]
//! ```
//!
//! which equals `-ln NB(m; alpha, 1/(1+beta))`. The L2 penalty on the network
//! weights is not part of this loss; the optimizer applies it as weight decay.

use serde::{Deserialize, Serialize};

use crate::numerics::special_unchecked::{digamma, log_gamma};
use crate::numerics::{ln_factorial, NegBinParams};
use crate::{Error, Result};

/// Gamma shape `alpha` and rate `beta` predicted for one input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaBeta {
    alpha: f64,
    beta: f64,
}

impl AlphaBeta {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0 && beta.is_finite() && beta > 0.0) {
            return Err(Error::Domain(format!(
                "alpha and beta must be finite and > 0, got ({alpha}, {beta})"
            )));
        }
        Ok(Self { alpha, beta })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// The induced cardinality law `NB(alpha, 1/(1+beta))`.
    pub fn cardinality(&self) -> Result<NegBinParams> {
        NegBinParams::from_gamma_prior(self.alpha, self.beta)
    }
}

/// Scales of the two weighted sigmoids that map pre-activations to `(alpha, beta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeadWeights {
    pub alpha_max: f64,
    pub beta_max: f64,
    #[serde(default = "HeadWeights::default_floor")]
    pub floor: f64,
}

impl HeadWeights {
    pub const DEFAULT_ALPHA_MAX: f64 = 160.0;
    pub const DEFAULT_BETA_MAX: f64 = 20.0;
    pub const DEFAULT_FLOOR: f64 = 1e-6;

    fn default_floor() -> f64 {
        Self::DEFAULT_FLOOR
    }

    pub fn new(alpha_max: f64, beta_max: f64, floor: f64) -> Result<Self> {
        let w = Self {
            alpha_max,
            beta_max,
            floor,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.alpha_max.is_finite() && self.beta_max.is_finite() && self.floor.is_finite();
        if !finite || self.floor < 0.0 || self.alpha_max <= self.floor || self.beta_max <= self.floor {
            return Err(Error::Config(format!(
                "head weights need alpha_max > floor >= 0 and beta_max > floor, got {self:?}"
            )));
        }
        Ok(())
    }
}

impl Default for HeadWeights {
    fn default() -> Self {
        Self {
            alpha_max: Self::DEFAULT_ALPHA_MAX,
            beta_max: Self::DEFAULT_BETA_MAX,
            floor: Self::DEFAULT_FLOOR,
        }
    }
}

/// Gradient of the per-sample loss with respect to `alpha` and `beta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossGrad {
    pub d_alpha: f64,
    pub d_beta: f64,
}

/// Counts up to this size use explicit finite sums for the Gamma and digamma
/// ratios instead of differences of large special-function values.
const SMALL_COUNT: u64 = 64;

/// `ln[Γ(m+alpha) / (Γ(m+1) Γ(alpha))]`
fn ln_binomial_ratio(m: u64, alpha: f64) -> f64 {
    if m <= SMALL_COUNT {
        // Π (alpha+k)/(k+1) = Π (1 + (alpha-1)/(k+1))
        (0..m).map(|k| ((alpha - 1.0) / (k as f64 + 1.0)).ln_1p()).sum()
    } else {
        log_gamma(m as f64 + alpha) - ln_factorial(m) - log_gamma(alpha)
    }
}

/// `Ψ(m+alpha) - Ψ(alpha)`
fn digamma_gap(m: u64, alpha: f64) -> f64 {
    if m <= SMALL_COUNT {
        (0..m).map(|k| 1.0 / (alpha + k as f64)).sum()
    } else {
        digamma(m as f64 + alpha) - digamma(alpha)
    }
}

/// Negative log-likelihood of cardinality `m` given the predicted Gamma prior.
pub fn card_nll(m: u64, ab: &AlphaBeta) -> f64 {
    let (alpha, beta) = (ab.alpha, ab.beta);
    // alpha ln(beta) - (alpha+m) ln(1+beta) = -alpha ln(1 + 1/beta) - m ln(1+beta)
    let log_lik = ln_binomial_ratio(m, alpha) - alpha * beta.recip().ln_1p() - m as f64 * beta.ln_1p();
    -log_lik
}

/// Analytic gradient of [`card_nll`].
///
/// The log-likelihood derivatives are
/// `Ψ(m+alpha) - Ψ(alpha) + ln(beta/(1+beta))` and `(alpha - m beta) / (beta (1+beta))`;
/// the returned values are their negatives.
pub fn card_grad(m: u64, ab: &AlphaBeta) -> LossGrad {
    let (alpha, beta) = (ab.alpha, ab.beta);
    let d_alpha = -(digamma_gap(m, alpha) - beta.recip().ln_1p());
    let d_beta = -(alpha - m as f64 * beta) / (beta * (1.0 + beta));
    LossGrad { d_alpha, d_beta }
}

/// Logistic function, evaluated without overflow for large `|z|`.
pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn weighted_sigmoid(z: f64, floor: f64, max: f64) -> f64 {
    // stays strictly positive even with a zero floor and a saturated sigmoid
    (floor + (max - floor) * sigmoid(z)).max(f64::MIN_POSITIVE)
}

/// Maps two pre-activations to `(alpha, beta)` through weighted sigmoids:
/// `alpha = floor + (alpha_max - floor) σ(z_alpha)`, likewise for `beta`.
pub fn head_forward(z_alpha: f64, z_beta: f64, w: &HeadWeights) -> AlphaBeta {
    AlphaBeta {
        alpha: weighted_sigmoid(z_alpha, w.floor, w.alpha_max),
        beta: weighted_sigmoid(z_beta, w.floor, w.beta_max),
    }
}

/// Chains a loss gradient through [`head_forward`] back to the pre-activations.
pub fn head_backward(z_alpha: f64, z_beta: f64, w: &HeadWeights, g: &LossGrad) -> (f64, f64) {
    let slope = |z: f64, max: f64| {
        let s = sigmoid(z);
        (max - w.floor) * s * (1.0 - s)
    };
    (
        g.d_alpha * slope(z_alpha, w.alpha_max),
        g.d_beta * slope(z_beta, w.beta_max),
    )
}

/// Squared-error baseline on a directly regressed count: `(½(m̂ - m)², m̂ - m)`.
pub fn regression_loss(m: u64, m_hat: f64) -> (f64, f64) {
    let r = m_hat - m as f64;
    (0.5 * r * r, r)
}
