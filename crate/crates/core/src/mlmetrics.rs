//! Multi-label evaluation: per-class and overall precision, recall and F1, the
//! top-k sweep, evaluation at predicted cardinalities, and the mean cardinality
//! error.
//!
//! An empty denominator counts as 100%: an empty prediction has precision 1 and
//! an empty ground truth is fully recalled. Per-class figures apply this rule to
//! each class before averaging over all `C` classes. Overall figures are
//! averaged over examples.

use serde::{Deserialize, Serialize};

use crate::setinfer::rank_desc;
use crate::{Error, Result};

/// `num / den`, or 1 when `den == 0`.
pub fn ratio_or_one(num: usize, den: usize) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

/// `2pr / (p + r)`, or 0 when both are 0.
pub fn harmonic_mean(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Sorted, unique category indices.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelSet {
    labels: Vec<usize>,
}

impl LabelSet {
    /// Sorts `labels`; duplicates and indices `>= num_classes` are rejected.
    pub fn new(mut labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        labels.sort_unstable();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Data(format!("duplicate label in {labels:?}")));
        }
        if let Some(&l) = labels.last().filter(|&&l| l >= num_classes) {
            return Err(Error::Data(format!("label {l} out of range for {num_classes} classes")));
        }
        Ok(Self { labels })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// The `k` highest scores, ties to the lower index (`k` is capped at the
    /// number of scores).
    pub fn top_k(scores: &[f64], k: usize) -> Self {
        let mut labels = rank_desc(scores);
        labels.truncate(k);
        labels.sort_unstable();
        Self { labels }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn contains(&self, label: usize) -> bool {
        self.labels.binary_search(&label).is_ok()
    }

    pub fn intersection_len(&self, other: &LabelSet) -> usize {
        let (mut i, mut j, mut n) = (0, 0, 0);
        while i < self.labels.len() && j < other.labels.len() {
            match self.labels[i].cmp(&other.labels[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    n += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        n
    }
}

/// Classifier scores over `C` categories and the true label set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub scores: Vec<f64>,
    pub truth: LabelSet,
}

impl EvalRecord {
    pub fn new(scores: Vec<f64>, truth: LabelSet) -> Result<Self> {
        let rec = Self { scores, truth };
        rec.validate()?;
        Ok(rec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::Data("non-finite score".into()));
        }
        if self.truth.labels().last().is_some_and(|&l| l >= self.scores.len()) {
            return Err(Error::Data(format!(
                "truth {:?} out of range for {} classes",
                self.truth.labels(),
                self.scores.len()
            )));
        }
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        self.scores.len()
    }
}

/// `(precision, recall)` of one prediction.
pub fn precision_recall(pred: &LabelSet, truth: &LabelSet) -> (f64, f64) {
    let hit = pred.intersection_len(truth);
    (ratio_or_one(hit, pred.len()), ratio_or_one(hit, truth.len()))
}

/// The six summary figures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub c_p: f64,
    pub c_r: f64,
    pub c_f1: f64,
    pub o_p: f64,
    pub o_r: f64,
    pub o_f1: f64,
}

/// Per-class and overall metrics of `preds` against `truths`.
pub fn aggregate(preds: &[LabelSet], truths: &[LabelSet], num_classes: usize) -> Result<Metrics> {
    if preds.is_empty() {
        return Err(Error::usage("aggregate needs at least one record"));
    }
    if preds.len() != truths.len() {
        return Err(Error::usage(format!(
            "{} predictions for {} ground truths",
            preds.len(),
            truths.len()
        )));
    }
    let out_of_range = preds
        .iter()
        .chain(truths)
        .any(|s| s.labels().last().is_some_and(|&l| l >= num_classes));
    if out_of_range {
        return Err(Error::usage(format!("label out of range for {num_classes} classes")));
    }

    let mut tp = vec![0usize; num_classes];
    let mut n_pred = vec![0usize; num_classes];
    let mut n_true = vec![0usize; num_classes];
    let (mut sum_p, mut sum_r) = (0.0, 0.0);
    for (pred, truth) in preds.iter().zip(truths) {
        for &l in pred.labels() {
            n_pred[l] += 1;
            if truth.contains(l) {
                tp[l] += 1;
            }
        }
        for &l in truth.labels() {
            n_true[l] += 1;
        }
        let (p, r) = precision_recall(pred, truth);
        sum_p += p;
        sum_r += r;
    }

    let n = preds.len() as f64;
    let (o_p, o_r) = (sum_p / n, sum_r / n);
    let (c_p, c_r) = if num_classes == 0 {
        (1.0, 1.0)
    } else {
        let c = num_classes as f64;
        let cp = (0..num_classes).map(|k| ratio_or_one(tp[k], n_pred[k])).sum::<f64>() / c;
        let cr = (0..num_classes).map(|k| ratio_or_one(tp[k], n_true[k])).sum::<f64>() / c;
        (cp, cr)
    };
    Ok(Metrics {
        c_p,
        c_r,
        c_f1: harmonic_mean(c_p, c_r),
        o_p,
        o_r,
        o_f1: harmonic_mean(o_p, o_r),
    })
}

fn class_count(records: &[EvalRecord]) -> Result<usize> {
    let c = records.first().ok_or_else(|| Error::usage("no records"))?.num_classes();
    if records.iter().any(|r| r.num_classes() != c) {
        return Err(Error::usage("records disagree on the number of classes"));
    }
    Ok(c)
}

fn eval_at(records: &[EvalRecord], ks: impl Iterator<Item = usize>, c: usize) -> Result<Metrics> {
    let preds: Vec<LabelSet> = records
        .iter()
        .zip(ks)
        .map(|(r, k)| LabelSet::top_k(&r.scores, k))
        .collect();
    let truths: Vec<LabelSet> = records.iter().map(|r| r.truth.clone()).collect();
    aggregate(&preds, &truths, c)
}

/// One point of the top-k curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub k: usize,
    #[serde(flatten)]
    pub metrics: Metrics,
}

/// Predicts the `k` top-scored labels for every record, for each `k` given.
pub fn topk_sweep(records: &[EvalRecord], k_values: &[usize]) -> Result<Vec<SweepPoint>> {
    let c = class_count(records)?;
    if let Some(k) = k_values.iter().find(|&&k| k > c) {
        return Err(Error::usage(format!("k = {k} exceeds {c} classes")));
    }
    k_values
        .iter()
        .map(|&k| {
            Ok(SweepPoint {
                k,
                metrics: eval_at(records, std::iter::repeat(k), c)?,
            })
        })
        .collect()
}

/// Predicts the top `m_star[i]` labels for record `i`.
pub fn predicted_k_eval(records: &[EvalRecord], m_star: &[usize]) -> Result<Metrics> {
    if records.len() != m_star.len() {
        return Err(Error::usage(format!(
            "{} cardinalities for {} records",
            m_star.len(),
            records.len()
        )));
    }
    let c = class_count(records)?;
    eval_at(records, m_star.iter().copied(), c)
}

/// Mean and population standard deviation of `|pred - truth|`.
pub fn mce(pred: &[u64], truth: &[u64]) -> Result<(f64, f64)> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(Error::usage(format!(
            "cardinality error needs equal non-empty lengths, got {} and {}",
            pred.len(),
            truth.len()
        )));
    }
    let n = pred.len() as f64;
    let (mut mean, mut m2) = (0.0, 0.0);
    for (i, (p, t)) in pred.iter().zip(truth).enumerate() {
        let e = p.abs_diff(*t) as f64;
        let d = e - mean;
        mean += d / (i + 1) as f64;
        m2 += d * (e - mean);
    }
    Ok((mean, (m2 / n).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ls(l: &[usize]) -> LabelSet {
        LabelSet::new(l.to_vec(), 10).unwrap()
    }

    fn rec(scores: &[f64], truth: &[usize]) -> EvalRecord {
        EvalRecord::new(scores.to_vec(), LabelSet::new(truth.to_vec(), scores.len()).unwrap()).unwrap()
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn label_set_rules() {
        assert_eq!(ls(&[3, 1]).labels(), &[1, 3]);
        assert!(LabelSet::new(vec![1, 1], 5).is_err());
        assert!(LabelSet::new(vec![5], 5).is_err());
        assert_eq!(LabelSet::top_k(&[0.2, 0.9, 0.2, 0.5], 3).labels(), &[0, 1, 3]);
        assert_eq!(LabelSet::top_k(&[0.2, 0.9], 7).labels(), &[0, 1]);
        assert!(EvalRecord::new(vec![0.1, f64::NAN], LabelSet::empty()).is_err());
        assert!(EvalRecord::new(vec![0.1], ls(&[1])).is_err());
    }

    #[test]
    fn precision_recall_examples() {
        assert_eq!(precision_recall(&ls(&[0, 2]), &ls(&[0, 1])), (0.5, 0.5));
        assert_eq!(precision_recall(&ls(&[]), &ls(&[])), (1.0, 1.0));
        assert_eq!(precision_recall(&ls(&[4, 7]), &ls(&[4, 7])), (1.0, 1.0));
        assert_eq!(precision_recall(&ls(&[]), &ls(&[3])), (1.0, 0.0));
        assert_eq!(precision_recall(&ls(&[3]), &ls(&[])), (0.0, 1.0));
    }

    #[test]
    fn harmonic_mean_of_published_figures() {
        let f = harmonic_mean(0.701, 0.687);
        assert!((f - 0.694).abs() < 0.0005, "{f}");
        assert_eq!(harmonic_mean(0.0, 0.0), 0.0);
    }

    #[test]
    fn aggregate_examples() {
        let m = aggregate(&[ls(&[1, 2])], &[ls(&[1, 2])], 4).unwrap();
        assert_eq!([m.c_p, m.c_r, m.c_f1, m.o_p, m.o_r, m.o_f1], [1.0; 6]);

        // record 1: truth {0}, pred {0,1}; record 2: truth {1}, pred {0}
        let m = aggregate(&[ls(&[0, 1]), ls(&[0])], &[ls(&[0]), ls(&[1])], 2).unwrap();
        assert!(close(m.c_p, 0.25) && close(m.c_r, 0.5) && close(m.c_f1, 1.0 / 3.0));
        assert!(close(m.o_p, 0.25) && close(m.o_r, 0.5) && close(m.o_f1, 1.0 / 3.0));

        assert!(aggregate(&[], &[], 2).is_err());
        assert!(aggregate(&[ls(&[])], &[], 2).is_err());
        assert!(aggregate(&[ls(&[3])], &[ls(&[])], 2).is_err());
    }

    fn three_records() -> Vec<EvalRecord> {
        vec![
            rec(&[0.9, 0.5, 0.1], &[0]),
            rec(&[0.2, 0.8, 0.6], &[1, 2]),
            rec(&[0.3, 0.4, 0.7], &[]),
        ]
    }

    #[test]
    fn sweep_fixture() {
        let pts = topk_sweep(&three_records(), &[0, 1, 2, 3]).unwrap();
        let o: Vec<(f64, f64)> = pts.iter().map(|p| (p.metrics.o_p, p.metrics.o_r)).collect();
        let want = [(1.0, 1.0 / 3.0), (2.0 / 3.0, 2.5 / 3.0), (0.5, 1.0), (1.0 / 3.0, 1.0)];
        for (got, want) in o.iter().zip(want) {
            assert!(close(got.0, want.0) && close(got.1, want.1), "{got:?} vs {want:?}");
        }
        let k1 = pts[1].metrics;
        assert!(close(k1.c_p, 2.0 / 3.0) && close(k1.c_r, 2.0 / 3.0));
        assert!(topk_sweep(&three_records(), &[4]).is_err());
    }

    #[test]
    fn predicted_k_examples() {
        let recs = three_records();
        let oracle: Vec<usize> = recs.iter().map(|r| r.truth.len()).collect();
        // oracle sizes on this fixture pick exactly the true labels
        let m = predicted_k_eval(&recs, &oracle).unwrap();
        assert_eq!([m.c_p, m.c_r, m.o_p, m.o_r], [1.0; 4]);
        let zero = predicted_k_eval(&recs, &[0, 0, 0]).unwrap();
        assert!(close(zero.o_p, 1.0) && close(zero.o_r, 1.0 / 3.0));
        assert!(predicted_k_eval(&recs, &[1]).is_err());
    }

    #[test]
    fn mce_examples() {
        assert_eq!(mce(&[2, 3], &[2, 5]).unwrap().0, 1.0);
        assert_eq!(mce(&[4, 1, 0], &[4, 1, 0]).unwrap(), (0.0, 0.0));
        assert!(mce(&[1], &[1, 2]).is_err());
        assert!(mce(&[], &[]).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p: Vec<u64> = (0..1000).map(|_| rng.random_range(0..30)).collect();
        let t: Vec<u64> = (0..1000).map(|_| rng.random_range(0..30)).collect();
        let errs: Vec<f64> = p.iter().zip(&t).map(|(a, b)| (*a as f64 - *b as f64).abs()).collect();
        let mean = errs.iter().sum::<f64>() / errs.len() as f64;
        let var = errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / errs.len() as f64;
        let (m, s) = mce(&p, &t).unwrap();
        assert!((m - mean).abs() < 1e-12 && (s - var.sqrt()).abs() < 1e-12);
    }

    fn arb_records() -> impl Strategy<Value = Vec<EvalRecord>> {
        (1usize..6).prop_flat_map(|c| {
            prop::collection::vec(
                (
                    prop::collection::vec(0.0f64..1.0, c),
                    prop::collection::vec(any::<bool>(), c),
                )
                    .prop_map(|(scores, mask)| {
                        let truth: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
                        rec(&scores, &truth)
                    }),
                1..8,
            )
        })
    }

    fn all_k(records: &[EvalRecord]) -> Vec<usize> {
        (0..=records[0].num_classes()).collect()
    }

    proptest! {
        #[test]
        fn metrics_bounded_and_recall_monotone(records in arb_records()) {
            let pts = topk_sweep(&records, &all_k(&records)).unwrap();
            for p in &pts {
                let m = p.metrics;
                for v in [m.c_p, m.c_r, m.c_f1, m.o_p, m.o_r, m.o_f1] {
                    prop_assert!((0.0..=1.0).contains(&v));
                }
                prop_assert!((m.o_f1 - harmonic_mean(m.o_p, m.o_r)).abs() < 1e-15);
            }
            prop_assert!(pts.windows(2).all(|w| w[1].metrics.o_r >= w[0].metrics.o_r - 1e-15));
            prop_assert!((pts.last().unwrap().metrics.o_r - 1.0).abs() < 1e-15);
            prop_assert!((pts[0].metrics.o_p - 1.0).abs() < 1e-15);
        }

        #[test]
        fn invariant_to_order_and_relabelling(records in arb_records(), shift in 0usize..5) {
            let c = records[0].num_classes();
            let ks = all_k(&records);
            let base = topk_sweep(&records, &ks).unwrap();
            let mut reversed = records.clone();
            reversed.reverse();
            let rev = topk_sweep(&reversed, &ks).unwrap();
            // cyclic relabelling of classes, applied to scores and truths alike
            let perm = |l: usize| (l + shift) % c;
            let relabelled: Vec<EvalRecord> = records.iter().map(|r| {
                let mut scores = vec![0.0; c];
                for (l, s) in r.scores.iter().enumerate() {
                    scores[perm(l)] = *s;
                }
                let truth = LabelSet::new(r.truth.labels().iter().map(|&l| perm(l)).collect(), c).unwrap();
                EvalRecord::new(scores, truth).unwrap()
            }).collect();
            let rel = topk_sweep(&relabelled, &ks).unwrap();
            // distinct scores make the top-k selections correspond exactly
            let distinct = records.iter().all(|r| {
                let mut s = r.scores.clone();
                s.sort_by(f64::total_cmp);
                s.windows(2).all(|w| w[0] < w[1])
            });
            for i in 0..ks.len() {
                let (a, b) = (base[i].metrics, rev[i].metrics);
                for (x, y) in [(a.c_p, b.c_p), (a.c_r, b.c_r), (a.o_p, b.o_p), (a.o_r, b.o_r)] {
                    prop_assert!((x - y).abs() < 1e-12);
                }
                if distinct {
                    let d = rel[i].metrics;
                    for (x, y) in [(a.c_p, d.c_p), (a.c_r, d.c_r), (a.o_p, d.o_p), (a.o_r, d.o_r)] {
                        prop_assert!((x - y).abs() < 1e-12);
                    }
                }
            }
        }

        #[test]
        fn oracle_dominates_when_truth_ranks_first(records in arb_records()) {
            // rescore so every true label outranks every false one
            let ranked: Vec<EvalRecord> = records.iter().map(|r| {
                let scores = (0..r.num_classes()).map(|l| if r.truth.contains(l) { 0.5 + r.scores[l] / 2.0 } else { r.scores[l] / 2.0 }).collect();
                EvalRecord::new(scores, r.truth.clone()).unwrap()
            }).collect();
            let oracle: Vec<usize> = ranked.iter().map(|r| r.truth.len()).collect();
            let star = predicted_k_eval(&ranked, &oracle).unwrap();
            prop_assert_eq!((star.o_p, star.o_r), (1.0, 1.0));
            for p in topk_sweep(&ranked, &all_k(&ranked)).unwrap() {
                prop_assert!(star.o_r >= p.metrics.o_r && star.o_p >= p.metrics.o_p);
            }
        }
    }
}
