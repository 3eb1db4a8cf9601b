use crate::{Error, Result};

/// Arguments below this are shifted up by the recurrence before the asymptotic
/// series is applied.
const ASYMPTOTIC_FROM: f64 = 10.0;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

// B_{2k} / (2k (2k - 1)) for k = 1..8
const STIRLING: [f64; 8] = [
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360_360.0,
    1.0 / 156.0,
    -3617.0 / 122_400.0,
];

// B_{2k} / (2k) for k = 1..7
const DIGAMMA_ASYMPTOTIC: [f64; 7] = [
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32_760.0,
    1.0 / 12.0,
];

fn check_positive(name: &str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} requires a finite x > 0, got {x}")))
    }
}

/// Natural log of the Gamma function for `x > 0`.
///
/// Arguments below 10 are raised with `Γ(x) = Γ(x + n) / (x (x+1) ... (x+n-1))`
/// and the Stirling series is summed at the shifted point.
pub fn log_gamma(x: f64) -> Result<f64> {
    check_positive("log_gamma", x)?;
    Ok(log_gamma_unchecked(x))
}

pub(crate) fn log_gamma_unchecked(x: f64) -> f64 {
    if x >= ASYMPTOTIC_FROM {
        return stirling(x);
    }
    let mut shifted = x;
    let mut product = 1.0;
    while shifted < ASYMPTOTIC_FROM {
        product *= shifted;
        shifted += 1.0;
    }
    stirling(shifted) - product.ln()
}

fn stirling(x: f64) -> f64 {
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let series = STIRLING.iter().rev().fold(0.0, |acc, &c| acc * inv2 + c);
    (x - 0.5) * x.ln() - x + HALF_LN_2PI + series * inv
}

/// Digamma `Ψ(x) = d/dx ln Γ(x)` for `x > 0`.
pub fn digamma(x: f64) -> Result<f64> {
    check_positive("digamma", x)?;
    Ok(digamma_unchecked(x))
}

pub(crate) fn digamma_unchecked(x: f64) -> f64 {
    let mut shifted = x;
    let mut recurrence = 0.0;
    while shifted < ASYMPTOTIC_FROM {
        recurrence += 1.0 / shifted;
        shifted += 1.0;
    }
    let inv2 = 1.0 / (shifted * shifted);
    let series = DIGAMMA_ASYMPTOTIC.iter().rev().fold(0.0, |acc, &c| acc * inv2 + c) * inv2;
    shifted.ln() - 0.5 / shifted - series - recurrence
}
