use serde::{Deserialize, Serialize};

use super::{iou, BoxDetection};
use crate::{Error, Result};

/// Threshold sweep for [`adaptive_nms`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NmsConfig {
    pub t0: f64,
    pub step: f64,
    pub t_max: f64,
}

impl Default for NmsConfig {
    fn default() -> Self {
        Self {
            t0: 0.4,
            step: 0.01,
            t_max: 0.95,
        }
    }
}

impl NmsConfig {
    /// A single fixed threshold.
    pub fn fixed(t: f64) -> Self {
        Self {
            t0: t,
            step: 0.01,
            t_max: t,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.t0.is_finite()
            && self.step.is_finite()
            && self.t_max.is_finite()
            && 0.0 <= self.t0
            && self.t0 <= self.t_max
            && self.t_max < 1.0
            && self.step > 0.0;
        if !ok {
            return Err(Error::Config(format!(
                "nms sweep needs 0 <= t0 <= t_max < 1 and step > 0, got {self:?}"
            )));
        }
        Ok(())
    }

    /// `t0, t0 + step, ...` up to and including `t_max`.
    fn thresholds(&self) -> Vec<f64> {
        let n = ((self.t_max - self.t0) / self.step + 1e-9).floor() as usize;
        let mut ts: Vec<f64> = (0..=n)
            .map(|k| (self.t0 + k as f64 * self.step).min(self.t_max))
            .collect();
        if ts.last().is_some_and(|&t| t < self.t_max - 1e-12) {
            ts.push(self.t_max);
        }
        ts
    }
}

/// Score-descending order, ties by input position.
fn score_order(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]));
    order
}

fn sweep_greedy(order: &[usize], overlap: &impl Fn(usize, usize) -> f64, t: f64) -> Vec<usize> {
    let mut kept: Vec<usize> = Vec::new();
    for &i in order {
        if kept.iter().all(|&k| overlap(k, i) <= t) {
            kept.push(i);
        }
    }
    kept
}

/// Greedy NMS over abstract items: `overlap(i, j)` gives the overlap of items
/// `i` and `j`. Returns kept indices in descending score order.
pub fn greedy_nms_by(scores: &[f64], overlap: impl Fn(usize, usize) -> f64, t: f64) -> Vec<usize> {
    sweep_greedy(&score_order(scores), &overlap, t)
}

/// Keeps a box iff its IoU with every higher-scored kept box is at most `t`.
pub fn greedy_nms(boxes: &[BoxDetection], t: f64) -> Vec<BoxDetection> {
    let scores: Vec<f64> = boxes.iter().map(|b| b.score).collect();
    greedy_nms_by(&scores, |i, j| iou(&boxes[i], &boxes[j]), t)
        .into_iter()
        .map(|i| boxes[i])
        .collect()
}

/// Outcome of a cardinality-driven threshold sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveSweep {
    /// Kept indices, descending score.
    pub kept: Vec<usize>,
    /// Threshold at which the sweep stopped.
    pub threshold: f64,
}

/// Raises the NMS threshold from `cfg.t0` until greedy NMS keeps at least
/// `m_star` items (or `cfg.t_max` is reached), then keeps the `m_star`
/// highest-scored survivors.
///
/// The number of survivors is not monotone in the threshold, so the sweep stops
/// at the first threshold that qualifies.
pub fn adaptive_nms_by(
    scores: &[f64],
    overlap: impl Fn(usize, usize) -> f64,
    m_star: usize,
    cfg: &NmsConfig,
) -> Result<AdaptiveSweep> {
    cfg.validate()?;
    let order = score_order(scores);
    let mut last = AdaptiveSweep {
        kept: Vec::new(),
        threshold: cfg.t0,
    };
    for t in cfg.thresholds() {
        let kept = sweep_greedy(&order, &overlap, t);
        let done = kept.len() >= m_star;
        last = AdaptiveSweep { kept, threshold: t };
        if done {
            break;
        }
    }
    last.kept.truncate(m_star);
    Ok(last)
}

/// [`adaptive_nms_by`] over boxes with IoU overlap.
pub fn adaptive_nms(boxes: &[BoxDetection], m_star: usize, cfg: &NmsConfig) -> Result<Vec<BoxDetection>> {
    let n = boxes.len();
    let mut table = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let v = iou(&boxes[i], &boxes[j]);
            table[i * n + j] = v;
            table[j * n + i] = v;
        }
    }
    let scores: Vec<f64> = boxes.iter().map(|b| b.score).collect();
    let sweep = adaptive_nms_by(&scores, |i, j| table[i * n + j], m_star, cfg)?;
    Ok(sweep.kept.into_iter().map(|i| boxes[i]).collect())
}
