//! Set-valued inference and sampling.
//!
//! The most probable set is found sequentially: first the mode `m*` of the
//! cardinality distribution, then the `m*` elements with the highest
//! probabilities (for i.i.d. elements this maximises the joint probability among
//! all sets of that size). [`sample_rfs`] draws from a random finite set with a
//! given cardinality law and i.i.d. elements.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::cardloss::AlphaBeta;
use crate::numerics::{ln_factorial, nb_log_pmf, nb_mode, NegBinParams};
use crate::{Error, Result};

/// Per-element probabilities from an external classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredElements {
    probs: Vec<f64>,
}

impl ScoredElements {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::Domain(format!("element probability {p} outside [0, 1]")));
        }
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// Selected element indices, strictly increasing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictedSet {
    indices: Vec<usize>,
}

impl PredictedSet {
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn cardinality(&self) -> usize {
        self.indices.len()
    }

    pub fn into_indices(self) -> Vec<usize> {
        self.indices
    }
}

/// Indices of `scores` ordered by decreasing score, ties by increasing index.
pub(crate) fn rank_desc(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]).then(i.cmp(&j)));
    order
}

/// The `m_star` most probable elements.
pub fn map_set(scores: &ScoredElements, m_star: usize) -> Result<PredictedSet> {
    if m_star > scores.len() {
        return Err(Error::usage(format!(
            "cannot select {m_star} of {} elements",
            scores.len()
        )));
    }
    let mut indices = rank_desc(&scores.probs);
    indices.truncate(m_star);
    indices.sort_unstable();
    Ok(PredictedSet { indices })
}

/// Cardinality mode of `NB(alpha, 1/(1+beta))`, clamped to the number of
/// elements available, followed by [`map_set`].
pub fn sequential_map(scores: &ScoredElements, ab: &AlphaBeta) -> Result<PredictedSet> {
    let mode = nb_mode(&ab.cardinality()?);
    let m_star = usize::try_from(mode).unwrap_or(usize::MAX).min(scores.len());
    map_set(scores, m_star)
}

/// A probability mass function over cardinalities `0..pmf.len()`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CardinalityPmf {
    pmf: Vec<f64>,
}

impl CardinalityPmf {
    pub fn new(pmf: Vec<f64>) -> Result<Self> {
        if pmf.is_empty() || pmf.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::Domain(
                "cardinality pmf needs finite, non-negative entries".into(),
            ));
        }
        let total: f64 = pmf.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Domain(format!("cardinality pmf sums to {total}, not 1")));
        }
        Ok(Self { pmf })
    }

    /// A point mass at `m`.
    pub fn delta(m: usize) -> Self {
        let mut pmf = vec![0.0; m + 1];
        pmf[m] = 1.0;
        Self { pmf }
    }

    /// Negative binomial truncated where its cumulative mass first reaches
    /// `1 - 1e-12` (at most 10^6 terms).
    pub fn from_negbin(p: &NegBinParams) -> Self {
        let bound = p.support_bound(1e-12, 1_000_000);
        let pmf = (0..=bound).map(|m| nb_log_pmf(m, p).exp()).collect();
        Self { pmf }
    }

    pub fn probs(&self) -> &[f64] {
        &self.pmf
    }

    /// Largest representable cardinality.
    pub fn max_cardinality(&self) -> usize {
        self.pmf.len() - 1
    }

    pub fn prob(&self, m: usize) -> f64 {
        self.pmf.get(m).copied().unwrap_or(0.0)
    }

    /// Inverse-CDF draw of a cardinality.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total: f64 = self.pmf.iter().sum();
        let u = rng.random::<f64>() * total;
        let mut acc = 0.0;
        for (m, &p) in self.pmf.iter().enumerate() {
            acc += p;
            if u < acc {
                return m;
            }
        }
        // u landed in the rounding gap at the top; return the last supported value
        self.pmf.iter().rposition(|&p| p > 0.0).unwrap_or(0)
    }
}

/// A law from which set elements are drawn independently.
pub trait ElementLaw {
    type Value;

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Self::Value;
}

/// Element index drawn with the given probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct Categorical {
    cumulative: Vec<f64>,
}

impl Categorical {
    pub fn new(probs: &[f64]) -> Result<Self> {
        if probs.is_empty() || probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::Domain(
                "categorical weights must be finite and non-negative".into(),
            ));
        }
        let mut acc = 0.0;
        let cumulative: Vec<f64> = probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        if acc <= 0.0 {
            return Err(Error::Domain("categorical weights sum to zero".into()));
        }
        Ok(Self { cumulative })
    }
}

impl ElementLaw for Categorical {
    type Value = usize;

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = *self.cumulative.last().expect("non-empty");
        let u = rng.random::<f64>() * total;
        self.cumulative
            .partition_point(|&c| c <= u)
            .min(self.cumulative.len() - 1)
    }
}

/// Uniform real element on `[low, high)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformElement {
    low: f64,
    high: f64,
}

impl UniformElement {
    pub fn new(low: f64, high: f64) -> Result<Self> {
        if !(low.is_finite() && high.is_finite() && low < high) {
            return Err(Error::Domain(format!(
                "uniform element needs low < high, got [{low}, {high})"
            )));
        }
        Ok(Self { low, high })
    }
}

impl ElementLaw for UniformElement {
    type Value = f64;

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        rng.random_range(self.low..self.high)
    }
}

/// Gaussian real element.
#[derive(Debug, Clone, Copy)]
pub struct GaussianElement {
    normal: Normal<f64>,
}

impl GaussianElement {
    pub fn new(mean: f64, std: f64) -> Result<Self> {
        if !(mean.is_finite() && std.is_finite() && std > 0.0) {
            return Err(Error::Domain(format!(
                "gaussian element needs std > 0, got ({mean}, {std})"
            )));
        }
        let normal = Normal::new(mean, std).map_err(|e| Error::Domain(e.to_string()))?;
        Ok(Self { normal })
    }
}

impl ElementLaw for GaussianElement {
    type Value = f64;

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.normal.sample(rng)
    }
}

/// Draws one set: a cardinality `m` from `card`, then `m` i.i.d. elements.
///
/// The draws are returned as drawn (a multiset); removing duplicates from a
/// discrete element law is left to the caller.
pub fn sample_rfs<L: ElementLaw, R: Rng + ?Sized>(card: &CardinalityPmf, law: &L, rng: &mut R) -> Vec<L::Value> {
    let m = card.sample(rng);
    (0..m).map(|_| law.draw(rng)).collect()
}

/// `ln m!`: the number of orderings over which a set density is spread when
/// written as a density over vectors.
pub fn vector_set_factor(m: usize) -> f64 {
    ln_factorial(m as u64)
}

/// Log density of a set with i.i.d. elements, dropping the hypervolume unit:
/// `ln p(m) + ln m! + Σ ln p(y_k)`.
pub fn log_set_density(card: &CardinalityPmf, element_log_densities: &[f64]) -> f64 {
    let m = element_log_densities.len();
    card.prob(m).ln() + vector_set_factor(m) + element_log_densities.iter().sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop, prop_assert, prop_assert_eq, proptest};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scores(p: &[f64]) -> ScoredElements {
        ScoredElements::new(p.to_vec()).unwrap()
    }

    /// Exhaustive search over all size-`m` subsets for the largest product,
    /// first-found (lexicographically smallest) on ties.
    fn brute_force_best(probs: &[f64], m: usize) -> Vec<usize> {
        let n = probs.len();
        let mut best: Option<(f64, Vec<usize>)> = None;
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize != m {
                continue;
            }
            let idx: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
            let prod: f64 = idx.iter().map(|&i| probs[i]).product();
            if best.as_ref().is_none_or(|(b, _)| prod > *b) {
                best = Some((prod, idx));
            }
        }
        best.map(|(_, idx)| idx).unwrap_or_default()
    }

    #[test]
    fn map_set_examples() {
        assert_eq!(map_set(&scores(&[0.9, 0.1, 0.7]), 2).unwrap().indices(), &[0, 2]);
        assert!(map_set(&scores(&[0.9, 0.1, 0.7]), 0).unwrap().indices().is_empty());
        assert!(matches!(map_set(&scores(&[0.5]), 2), Err(Error::Usage(_))));
        assert_eq!(map_set(&scores(&[0.4, 0.4, 0.4]), 2).unwrap().indices(), &[0, 1]);
        assert!(ScoredElements::new(vec![1.2]).is_err());
    }

    #[test]
    fn map_set_matches_subset_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let n = rng.random_range(1..=12);
            let probs: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let m = rng.random_range(0..=n);
            let got = map_set(&scores(&probs), m).unwrap();
            assert_eq!(got.indices(), brute_force_best(&probs, m).as_slice());
            assert_eq!(got.cardinality(), m);
        }
    }

    #[test]
    fn sequential_examples() {
        let probs = [0.05, 0.9, 0.3, 0.8, 0.1, 0.6, 0.95, 0.2, 0.4, 0.7];
        let s = scores(&probs);
        assert!(sequential_map(&s, &AlphaBeta::new(0.9, 0.01).unwrap())
            .unwrap()
            .indices()
            .is_empty());
        // NB(5, 1/2) has tied modes 3 and 4; the smaller is used
        assert_eq!(
            sequential_map(&s, &AlphaBeta::new(5.0, 1.0).unwrap())
                .unwrap()
                .indices(),
            &[1, 3, 6]
        );
        // NB(9, 1/2): mode 7
        assert_eq!(
            sequential_map(&s, &AlphaBeta::new(9.0, 1.0).unwrap())
                .unwrap()
                .indices(),
            &[1, 2, 3, 5, 6, 8, 9]
        );
        // mode 4 clamped to the two available elements
        let two = scores(&[0.2, 0.6]);
        assert_eq!(
            sequential_map(&two, &AlphaBeta::new(9.0, 1.5).unwrap())
                .unwrap()
                .indices(),
            &[0, 1]
        );
    }

    #[test]
    fn pmf_validation_and_truncation() {
        assert!(CardinalityPmf::new(vec![0.5, 0.6]).is_err());
        assert!(CardinalityPmf::new(vec![]).is_err());
        let nb = NegBinParams::new(5.0, 0.5).unwrap();
        let card = CardinalityPmf::from_negbin(&nb);
        let total: f64 = card.probs().iter().sum();
        assert!((total - 1.0).abs() < 1e-9);
        assert!(CardinalityPmf::new(card.probs().to_vec()).is_ok());
    }

    #[test]
    fn point_masses() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let law = Categorical::new(&[0.2, 0.5, 0.3]).unwrap();
        for _ in 0..1000 {
            assert!(sample_rfs(&CardinalityPmf::delta(0), &law, &mut rng).is_empty());
            assert_eq!(sample_rfs(&CardinalityPmf::delta(2), &law, &mut rng).len(), 2);
        }
    }

    #[test]
    fn categorical_frequencies() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let law = Categorical::new(&[0.2, 0.0, 0.8]).unwrap();
        let mut counts = [0usize; 3];
        for _ in 0..50_000 {
            counts[law.draw(&mut rng)] += 1;
        }
        assert_eq!(counts[1], 0);
        assert!((counts[0] as f64 / 50_000.0 - 0.2).abs() < 0.01);
    }

    #[test]
    fn negbin_cardinality_histogram() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let card = CardinalityPmf::from_negbin(&NegBinParams::new(5.0, 0.5).unwrap());
        let law = UniformElement::new(0.0, 1.0).unwrap();
        let n = 100_000;
        let mut hist = vec![0f64; card.probs().len()];
        for _ in 0..n {
            hist[sample_rfs(&card, &law, &mut rng).len()] += 1.0;
        }
        let tv: f64 = hist
            .iter()
            .zip(card.probs())
            .map(|(h, p)| (h / n as f64 - p).abs())
            .sum::<f64>()
            / 2.0;
        assert!(tv < 0.02, "{tv}");
    }

    #[test]
    fn gaussian_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let law = GaussianElement::new(2.0, 0.5).unwrap();
        let xs: Vec<f64> = (0..20_000).map(|_| law.draw(&mut rng)).collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        assert!((mean - 2.0).abs() < 0.02);
        assert!(GaussianElement::new(0.0, 0.0).is_err());
        assert!(UniformElement::new(1.0, 1.0).is_err());
    }

    #[test]
    fn exchangeable_elements() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let card = CardinalityPmf::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let law = Categorical::new(&[0.1, 0.2, 0.3, 0.4]).unwrap();
        let (mut first, mut last, mut n) = ([0f64; 4], [0f64; 4], 0.0);
        for _ in 0..100_000 {
            let set = sample_rfs(&card, &law, &mut rng);
            if let (Some(&a), Some(&b)) = (set.first(), set.last()) {
                first[a] += 1.0;
                last[b] += 1.0;
                n += 1.0;
            }
        }
        let tv: f64 = first.iter().zip(&last).map(|(a, b)| (a - b).abs() / n).sum::<f64>() / 2.0;
        assert!(tv < 0.02, "{tv}");
    }

    #[test]
    fn set_factor_values() {
        assert_eq!(vector_set_factor(0), 0.0);
        assert!((vector_set_factor(5) - 120f64.ln()).abs() < 1e-13);
        assert!(vector_set_factor(170).is_finite());
    }

    #[test]
    fn set_density_assembly() {
        let card = CardinalityPmf::new(vec![0.25, 0.25, 0.5]).unwrap();
        let elems = [0.3f64.ln(), 0.6f64.ln()];
        // p(2) * 2! * 0.3 * 0.6
        let want = (0.5 * 2.0 * 0.3 * 0.6f64).ln();
        assert!((log_set_density(&card, &elems) - want).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn permutation_consistent(probs in prop::collection::vec(0.0f64..1.0, 1..12), alpha in 1.0f64..40.0, beta in 0.2f64..5.0, rot in 0usize..12) {
            let ab = AlphaBeta::new(alpha, beta).unwrap();
            let n = probs.len();
            let rot = rot % n;
            let mut rotated = probs.clone();
            rotated.rotate_left(rot);
            let a = sequential_map(&scores(&probs), &ab).unwrap();
            let b = sequential_map(&scores(&rotated), &ab).unwrap();
            let mut a_vals: Vec<f64> = a.indices().iter().map(|&i| probs[i]).collect();
            let mut b_vals: Vec<f64> = b.indices().iter().map(|&i| rotated[i]).collect();
            a_vals.sort_by(f64::total_cmp);
            b_vals.sort_by(f64::total_cmp);
            prop_assert_eq!(a_vals, b_vals);
        }

        #[test]
        fn scale_invariant(probs in prop::collection::vec(0.0f64..1.0, 0..12), k in 0.01f64..1.0, m in 0usize..12) {
            let m = m.min(probs.len());
            let scaled: Vec<f64> = probs.iter().map(|p| p * k).collect();
            let a = map_set(&scores(&probs), m).unwrap();
            let b = map_set(&scores(&scaled), m).unwrap();
            let a_vals: Vec<f64> = a.indices().iter().map(|&i| probs[i]).collect();
            let b_vals: Vec<f64> = b.indices().iter().map(|&i| probs[i]).collect();
            // identical index sets unless rounding creates a tie
            prop_assert!(a == b || a_vals.iter().product::<f64>() == b_vals.iter().product::<f64>());
        }

        #[test]
        fn predicted_set_invariants(probs in prop::collection::vec(0.0f64..1.0, 0..20), m in 0usize..20) {
            let m = m.min(probs.len());
            let set = map_set(&scores(&probs), m).unwrap();
            prop_assert_eq!(set.cardinality(), m);
            prop_assert!(set.indices().windows(2).all(|w| w[0] < w[1]));
            prop_assert!(set.indices().iter().all(|&i| i < probs.len()));
        }
    }
}
