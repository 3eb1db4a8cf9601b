//! Box geometry, non-maximum suppression and detection evaluation.

mod eval;
mod nms;

pub use eval::{detection_f1, log_avg_miss_rate, match_detections, miss_rate_curve, MatchResult, MR_FLOOR};
pub use nms::{adaptive_nms, adaptive_nms_by, greedy_nms, greedy_nms_by, AdaptiveSweep, NmsConfig};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// An axis-aligned box in pixel coordinates with a confidence score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxDetection {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
    pub score: f64,
}

impl BoxDetection {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64, score: f64) -> Result<Self> {
        let finite = [x1, y1, x2, y2].iter().all(|v| v.is_finite());
        if !finite || x2 <= x1 || y2 <= y1 {
            return Err(Error::Domain(format!(
                "box needs finite corners with positive extent, got ({x1}, {y1}, {x2}, {y2})"
            )));
        }
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::Domain(format!("box score {score} outside [0, 1]")));
        }
        Ok(Self { x1, y1, x2, y2, score })
    }

    /// A ground-truth box; its score is fixed at 1.
    pub fn ground_truth(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        Self::new(x1, y1, x2, y2, 1.0)
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }
}

/// Intersection over union of two boxes, in `[0, 1]`.
pub fn iou(a: &BoxDetection, b: &BoxDetection) -> f64 {
    let w = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let h = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    let inter = w * h;
    if inter == 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn b(x1: f64, y1: f64, x2: f64, y2: f64) -> BoxDetection {
        BoxDetection::new(x1, y1, x2, y2, 0.5).unwrap()
    }

    #[test]
    fn iou_values() {
        assert_eq!(iou(&b(0.0, 0.0, 10.0, 10.0), &b(0.0, 0.0, 10.0, 10.0)), 1.0);
        assert_eq!(iou(&b(0.0, 0.0, 10.0, 10.0), &b(20.0, 0.0, 30.0, 10.0)), 0.0);
        assert_eq!(iou(&b(0.0, 0.0, 10.0, 10.0), &b(10.0, 0.0, 20.0, 10.0)), 0.0);
        let third = iou(&b(0.0, 0.0, 10.0, 10.0), &b(5.0, 0.0, 15.0, 10.0));
        assert!((third - 1.0 / 3.0).abs() < 1e-15);
        // nested: 4 / 16
        assert_eq!(iou(&b(0.0, 0.0, 4.0, 4.0), &b(1.0, 1.0, 3.0, 3.0)), 0.25);
    }

    #[test]
    fn invalid_boxes() {
        assert!(BoxDetection::new(1.0, 0.0, 1.0, 2.0, 0.5).is_err());
        assert!(BoxDetection::new(0.0, 0.0, 1.0, f64::NAN, 0.5).is_err());
        assert!(BoxDetection::new(0.0, 0.0, 1.0, 1.0, 1.5).is_err());
    }

    fn arb_box() -> impl Strategy<Value = BoxDetection> {
        (0.0f64..100.0, 0.0f64..100.0, 0.1f64..50.0, 0.1f64..50.0).prop_map(|(x, y, w, h)| b(x, y, x + w, y + h))
    }

    proptest! {
        #[test]
        fn iou_symmetric_bounded(a in arb_box(), c in arb_box()) {
            let v = iou(&a, &c);
            prop_assert_eq!(v, iou(&c, &a));
            prop_assert!((0.0..=1.0).contains(&v));
            prop_assert!((iou(&a, &a) - 1.0).abs() < 1e-12);
        }
    }
}
