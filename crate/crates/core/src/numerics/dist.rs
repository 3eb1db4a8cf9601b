use serde::{Deserialize, Serialize};

use super::special::log_gamma_unchecked;
use crate::{Error, Result};

/// Negative binomial law `NB(m; a, b) = Γ(m+a) / (Γ(m+1) Γ(a)) (1-b)^a b^m`.
///
/// `a` is the dispersion and `b` the per-trial success probability. With a Gamma
/// prior `(alpha, beta)` on a Poisson rate the marginal count law is
/// `NB(a = alpha, b = 1 / (1 + beta))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawNegBin", into = "RawNegBin")]
pub struct NegBinParams {
    a: f64,
    b: f64,
}

#[derive(Serialize, Deserialize)]
struct RawNegBin {
    a: f64,
    b: f64,
}

impl TryFrom<RawNegBin> for NegBinParams {
    type Error = Error;

    fn try_from(raw: RawNegBin) -> Result<Self> {
        NegBinParams::new(raw.a, raw.b)
    }
}

impl From<NegBinParams> for RawNegBin {
    fn from(p: NegBinParams) -> Self {
        RawNegBin { a: p.a, b: p.b }
    }
}

impl NegBinParams {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && a > 0.0) {
            return Err(Error::domain(format!("NB dispersion must be finite and > 0, got {a}")));
        }
        if !(b > 0.0 && b < 1.0) {
            return Err(Error::domain(format!(
                "NB success probability must lie in (0, 1), got {b}"
            )));
        }
        Ok(Self { a, b })
    }

    /// The marginal count law of a Poisson whose rate is `Gamma(shape, rate)`.
    pub fn from_gamma_prior(shape: f64, rate: f64) -> Result<Self> {
        if !(rate.is_finite() && rate > 0.0) {
            return Err(Error::domain(format!("Gamma rate must be finite and > 0, got {rate}")));
        }
        Self::new(shape, 1.0 / (1.0 + rate))
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    /// Smallest `M` whose cumulative mass reaches `1 - tail`, or `cap` if the
    /// tail is still heavier there.
    pub fn support_bound(&self, tail: f64, cap: u64) -> u64 {
        let target = 1.0 - tail;
        let mut cdf = 0.0;
        for m in 0..=cap {
            cdf += nb_log_pmf(m, self).exp();
            if cdf >= target {
                return m;
            }
        }
        cap
    }
}

/// Poisson law with rate `lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoissonParams {
    lambda: f64,
}

impl PoissonParams {
    pub fn new(lambda: f64) -> Result<Self> {
        if lambda.is_finite() && lambda > 0.0 {
            Ok(Self { lambda })
        } else {
            Err(Error::domain(format!(
                "Poisson rate must be finite and > 0, got {lambda}"
            )))
        }
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

/// Gamma law in the shape / rate parameterisation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaParams {
    shape: f64,
    rate: f64,
}

impl GammaParams {
    pub fn new(shape: f64, rate: f64) -> Result<Self> {
        if !(shape.is_finite() && shape > 0.0 && rate.is_finite() && rate > 0.0) {
            return Err(Error::domain(format!(
                "Gamma shape and rate must be finite and > 0, got ({shape}, {rate})"
            )));
        }
        Ok(Self { shape, rate })
    }

    pub fn shape(&self) -> f64 {
        self.shape
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }
}

/// `ln m!`
pub fn ln_factorial(m: u64) -> f64 {
    if m < 2 {
        0.0
    } else {
        log_gamma_unchecked(m as f64 + 1.0)
    }
}

/// Log probability mass of `m` under a negative binomial.
pub fn nb_log_pmf(m: u64, p: &NegBinParams) -> f64 {
    let tail = p.a * (-p.b).ln_1p();
    if m == 0 {
        return tail;
    }
    let mf = m as f64;
    log_gamma_unchecked(mf + p.a) - ln_factorial(m) - log_gamma_unchecked(p.a) + tail + mf * p.b.ln()
}

/// The most probable count. Exact ties resolve to the smaller count.
pub fn nb_mode(p: &NegBinParams) -> u64 {
    if p.a <= 1.0 {
        return 0;
    }
    // pmf(m+1)/pmf(m) = (m+a) b / (m+1), which crosses 1 at (a-1) b / (1-b)
    let crossing = (p.a - 1.0) * p.b / (1.0 - p.b);
    let centre = if crossing >= u64::MAX as f64 {
        u64::MAX - 1
    } else {
        crossing.floor() as u64
    };
    let mut best = centre.saturating_sub(1);
    let mut best_lp = nb_log_pmf(best, p);
    for m in best + 1..=centre.saturating_add(1) {
        let lp = nb_log_pmf(m, p);
        let tie = 1e-12 * best_lp.abs().max(1.0);
        if lp > best_lp + tie {
            best = m;
            best_lp = lp;
        }
    }
    best
}

/// `a b / (1 - b)`
pub fn nb_mean(p: &NegBinParams) -> f64 {
    p.a * p.b / (1.0 - p.b)
}

pub fn poisson_log_pmf(m: u64, p: &PoissonParams) -> f64 {
    if m == 0 {
        return -p.lambda;
    }
    m as f64 * p.lambda.ln() - p.lambda - ln_factorial(m)
}

pub fn gamma_log_pdf(x: f64, p: &GammaParams) -> Result<f64> {
    if !(x.is_finite() && x > 0.0) {
        return Err(Error::domain(format!("Gamma density needs a finite x > 0, got {x}")));
    }
    Ok(p.shape * p.rate.ln() - log_gamma_unchecked(p.shape) + (p.shape - 1.0) * x.ln() - p.rate * x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn nb(a: f64, b: f64) -> NegBinParams {
        NegBinParams::new(a, b).unwrap()
    }

    fn brute_force_mode(p: &NegBinParams) -> u64 {
        let mut best = 0;
        let mut best_lp = f64::NEG_INFINITY;
        for m in 0..=10_000u64 {
            let lp = nb_log_pmf(m, p);
            if lp > best_lp {
                best = m;
                best_lp = lp;
            }
        }
        best
    }

    #[test]
    fn param_validation() {
        assert!(NegBinParams::new(0.0, 0.5).is_err());
        assert!(NegBinParams::new(-1.0, 0.5).is_err());
        assert!(NegBinParams::new(f64::NAN, 0.5).is_err());
        assert!(NegBinParams::new(1.0, 0.0).is_err());
        assert!(NegBinParams::new(1.0, 1.0).is_err());
        assert!(PoissonParams::new(0.0).is_err());
        assert!(GammaParams::new(1.0, 0.0).is_err());
        assert!(GammaParams::new(0.0, 1.0).is_err());
        assert!(gamma_log_pdf(0.0, &GammaParams::new(2.0, 1.0).unwrap()).is_err());
    }

    #[test]
    fn deserialization_validates() {
        assert!(serde_json::from_str::<NegBinParams>(r#"{"a":2.0,"b":1.5}"#).is_err());
        let p: NegBinParams = serde_json::from_str(r#"{"a":2.0,"b":0.5}"#).unwrap();
        assert_eq!(p, nb(2.0, 0.5));
    }

    #[test]
    fn log_pmf_at_zero() {
        for &(a, b) in &[(0.3, 0.1), (2.0, 0.5), (150.0, 0.95)] {
            let p = nb(a, b);
            assert!((nb_log_pmf(0, &p) - a * (1.0 - b).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn geometric_case() {
        // a = 1: pmf(m) = (1-b) b^m
        let got = nb_log_pmf(2, &nb(1.0, 0.25));
        assert!((got - (-3.060_270_794_691_562_2)).abs() < 1e-12);
    }

    #[test]
    fn normalization_over_truncated_support() {
        for &(a, b) in &[
            (0.2, 0.3),
            (1.0, 0.5),
            (5.0, 0.5),
            (80.0, 1.0 / 11.0),
            (0.5, 0.99),
            (160.0, 0.95),
        ] {
            let p = nb(a, b);
            let bound = p.support_bound(1e-12, 1_000_000);
            let total: f64 = (0..=bound).map(|m| nb_log_pmf(m, &p).exp()).sum();
            assert!((total - 1.0).abs() <= 1e-9, "({a},{b}) sums to {total}");
        }
    }

    #[test]
    fn mode_examples() {
        assert_eq!(nb_mode(&nb(1.0, 0.9)), 0);
        assert_eq!(nb_mode(&nb(0.7, 0.9)), 0);
        assert_eq!(brute_force_mode(&nb(0.7, 0.9)), 0);
        assert_eq!(nb_mode(&nb(5.0, 0.4)), 2);
        assert_eq!(brute_force_mode(&nb(5.0, 0.4)), 2);
    }

    #[test]
    fn mode_of_five_half_is_a_tie() {
        // pmf(3) = 35/256 = pmf(4): both are modes and the smaller one wins
        let p = nb(5.0, 0.5);
        assert!((nb_log_pmf(3, &p).exp() - 35.0 / 256.0).abs() < 1e-15);
        assert!((nb_log_pmf(4, &p).exp() - 35.0 / 256.0).abs() < 1e-15);
        assert_eq!(nb_mode(&p), 3);
    }

    #[test]
    fn mode_tie_prefers_smaller() {
        // crossing (3-1)*0.5/0.5 = 2: pmf(1) = pmf(2) = 0.1875
        let p = nb(3.0, 0.5);
        assert!((nb_log_pmf(1, &p).exp() - 0.1875).abs() < 1e-15);
        assert!((nb_log_pmf(2, &p).exp() - 0.1875).abs() < 1e-15);
        assert_eq!(nb_mode(&p), 1);
    }

    #[test]
    fn mode_matches_brute_force_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let p = nb(rng.random_range(0.05..60.0), rng.random_range(0.001..0.99));
            assert_eq!(nb_mode(&p), brute_force_mode(&p), "{p:?}");
        }
    }

    #[test]
    fn mean_examples() {
        assert!((nb_mean(&nb(5.0, 0.5)) - 5.0).abs() < 1e-15);
        assert!((nb_mean(&nb(1.0, 0.5)) - 1.0).abs() < 1e-15);
        assert!(nb_mean(&nb(3.0, 1e-12)) < 1e-11);
        for &(a, b) in &[(5.0, 0.5), (1.0, 0.5), (0.4, 0.8), (30.0, 0.2)] {
            let p = nb(a, b);
            let bound = p.support_bound(1e-14, 1_000_000);
            let summed: f64 = (0..=bound).map(|m| m as f64 * nb_log_pmf(m, &p).exp()).sum();
            assert!((summed - nb_mean(&p)).abs() <= 1e-6 * nb_mean(&p));
        }
    }

    #[test]
    fn poisson_at_zero() {
        let p = PoissonParams::new(3.5).unwrap();
        assert_eq!(poisson_log_pmf(0, &p), -3.5);
        let total: f64 = (0..60).map(|m| poisson_log_pmf(m, &p).exp()).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gamma_mode_by_grid_search() {
        for &(shape, rate) in &[(2.0, 1.0), (5.5, 0.7), (30.0, 4.0)] {
            let p = GammaParams::new(shape, rate).unwrap();
            let (mut best_x, mut best) = (0.0, f64::NEG_INFINITY);
            for i in 1..200_000 {
                let x = i as f64 * 1e-4;
                let lp = gamma_log_pdf(x, &p).unwrap();
                if lp > best {
                    best = lp;
                    best_x = x;
                }
            }
            assert!((best_x - (shape - 1.0) / rate).abs() < 2e-4, "{shape},{rate}: {best_x}");
        }
    }

    proptest! {
        #[test]
        fn mode_never_beaten_by_neighbours(a in 0.01f64..200.0, b in 0.001f64..0.999) {
            let p = nb(a, b);
            let m = nb_mode(&p);
            let lp = nb_log_pmf(m, &p);
            prop_assert!(nb_log_pmf(m + 1, &p) <= lp + 1e-9 * lp.abs().max(1.0));
            if m > 0 {
                prop_assert!(nb_log_pmf(m - 1, &p) <= lp + 1e-9 * lp.abs().max(1.0));
            }
        }
    }
}
