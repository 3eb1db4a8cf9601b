use serde::{Deserialize, Serialize};

use super::{iou, BoxDetection};
use crate::mlmetrics::{harmonic_mean, ratio_or_one};
use crate::{Error, Result};

/// Miss rates are floored here before taking logs.
pub const MR_FLOOR: f64 = 1e-10;

/// Matching outcome for one image, or several images combined.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    /// `(score, is_true_positive)` per detection, descending score.
    pub scored: Vec<(f64, bool)>,
}

impl MatchResult {
    pub fn ground_truths(&self) -> usize {
        self.true_positives + self.false_negatives
    }

    /// Sums counts and concatenates score flags, keeping the score order.
    pub fn combine<'a>(parts: impl IntoIterator<Item = &'a MatchResult>) -> MatchResult {
        let mut out = MatchResult::default();
        for p in parts {
            out.true_positives += p.true_positives;
            out.false_positives += p.false_positives;
            out.false_negatives += p.false_negatives;
            out.scored.extend_from_slice(&p.scored);
        }
        out.scored.sort_by(|a, b| b.0.total_cmp(&a.0));
        out
    }

    pub fn precision(&self) -> f64 {
        ratio_or_one(self.true_positives, self.true_positives + self.false_positives)
    }

    pub fn recall(&self) -> f64 {
        ratio_or_one(self.true_positives, self.ground_truths())
    }
}

/// Greedy one-to-one matching in descending score order. A detection is a true
/// positive when the unmatched ground truth it overlaps most has IoU at least
/// `iou_thresh`; equal overlaps go to the lower ground-truth index.
pub fn match_detections(dets: &[BoxDetection], gts: &[BoxDetection], iou_thresh: f64) -> Result<MatchResult> {
    if !(iou_thresh > 0.0 && iou_thresh < 1.0) {
        return Err(Error::domain(format!("match threshold {iou_thresh} outside (0, 1)")));
    }
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&i, &j| dets[j].score.total_cmp(&dets[i].score));

    let mut taken = vec![false; gts.len()];
    let mut res = MatchResult::default();
    for i in order {
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if taken[g] {
                continue;
            }
            let v = iou(&dets[i], gt);
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((g, v));
            }
        }
        let hit = match best {
            Some((g, v)) if v >= iou_thresh => {
                taken[g] = true;
                true
            }
            _ => false,
        };
        if hit {
            res.true_positives += 1;
        } else {
            res.false_positives += 1;
        }
        res.scored.push((dets[i].score, hit));
    }
    res.false_negatives = gts.len() - res.true_positives;
    Ok(res)
}

/// `(fppi, miss_rate)` operating points from the strictest score threshold
/// down, starting at `(0, 1)`. Detections with equal scores enter together.
pub fn miss_rate_curve(per_image: &[MatchResult], n_images: usize) -> Result<Vec<(f64, f64)>> {
    if n_images == 0 {
        return Err(Error::usage("miss rate needs at least one image"));
    }
    let total_gt: usize = per_image.iter().map(MatchResult::ground_truths).sum();
    if total_gt == 0 {
        return Err(Error::usage("miss rate is undefined without ground truth"));
    }
    let mut flags: Vec<(f64, bool)> = per_image.iter().flat_map(|m| m.scored.iter().copied()).collect();
    flags.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut curve = vec![(0.0, 1.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut k = 0;
    while k < flags.len() {
        let s = flags[k].0;
        while k < flags.len() && flags[k].0 == s {
            if flags[k].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        curve.push((fp as f64 / n_images as f64, 1.0 - tp as f64 / total_gt as f64));
    }
    Ok(curve)
}

/// Log-average miss rate: the geometric mean of the miss rate sampled at nine
/// FPPI values log-spaced over `[1e-2, 1]`. Each sample uses the last operating
/// point whose FPPI does not exceed the reference.
pub fn log_avg_miss_rate(per_image: &[MatchResult], n_images: usize) -> Result<f64> {
    let curve = miss_rate_curve(per_image, n_images)?;
    let mut log_sum = 0.0;
    for i in 0..9 {
        let reference = 10f64.powf(-2.0 + 2.0 * i as f64 / 8.0);
        let mr = curve
            .iter()
            .take_while(|(fppi, _)| *fppi <= reference * (1.0 + 1e-12))
            .last()
            .map_or(1.0, |p| p.1);
        log_sum += mr.max(MR_FLOOR).ln();
    }
    Ok((log_sum / 9.0).exp())
}

/// Harmonic mean of precision and recall; empty denominators count as 100%.
pub fn detection_f1(m: &MatchResult) -> f64 {
    harmonic_mean(m.precision(), m.recall())
}
