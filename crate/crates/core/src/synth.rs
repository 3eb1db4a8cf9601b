//! Seeded synthetic data following the Gamma–Poisson cardinality model.
//!
//! Every sample draws features `x ~ U(-1, 1)^d`, maps them to `(alpha(x), beta(x))`,
//! draws a rate `lambda ~ Gamma(alpha, rate = beta)` and a count `m ~ Poisson(lambda)`.
//! The marginal law of `m` given `x` is `NB(alpha, 1/(1+beta))`.

use log::debug;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::cardloss::AlphaBeta;
use crate::cardnet::TrainingSample;
use crate::detect::BoxDetection;
use crate::mlmetrics::{EvalRecord, LabelSet};
use crate::{Error, Result};

/// `clamp(bias + Σ weights[i] * x[i], lo, hi)`; missing weights count as zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamMap {
    pub bias: f64,
    #[serde(default)]
    pub weights: Vec<f64>,
    pub lo: f64,
    pub hi: f64,
}

impl ParamMap {
    pub fn constant(v: f64) -> Self {
        Self {
            bias: v,
            weights: Vec::new(),
            lo: v,
            hi: v,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let z = self.bias + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        z.clamp(self.lo, self.hi)
    }

    fn validate(&self, name: &str, d: usize) -> Result<()> {
        let finite = self.bias.is_finite() && self.lo.is_finite() && self.hi.is_finite();
        if !finite || self.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Config(format!("{name}: non-finite coefficient")));
        }
        if !(self.lo > 0.0 && self.lo <= self.hi) {
            return Err(Error::Config(format!(
                "{name}: need 0 < lo <= hi, got [{}, {}]",
                self.lo, self.hi
            )));
        }
        if self.weights.len() > d {
            return Err(Error::Config(format!(
                "{name}: {} weights for dimension {d}",
                self.weights.len()
            )));
        }
        Ok(())
    }
}

/// Generator settings. The box fields only affect [`gen_boxes`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    /// Feature dimension.
    pub d: usize,
    /// Number of label categories.
    pub num_classes: usize,
    /// Number of samples (images, for boxes).
    pub n: usize,
    pub seed: u64,
    pub alpha_fn: ParamMap,
    pub beta_fn: ParamMap,
    /// Score corruption level in `[0, 1]`.
    pub noise: f64,
    pub image_width: f64,
    pub image_height: f64,
    /// Proposals emitted around each ground-truth box.
    pub proposals_per_gt: usize,
    /// Proposal corner jitter as a fraction of the box size.
    pub jitter: f64,
    /// Mean number of background false positives per image.
    pub false_positives: f64,
    /// Probability that a box is placed next to an earlier one.
    pub crowding: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            d: 8,
            num_classes: 20,
            n: 1000,
            seed: 0,
            alpha_fn: ParamMap {
                bias: -10.0,
                weights: vec![40.0],
                lo: 0.3,
                hi: 30.0,
            },
            beta_fn: ParamMap {
                bias: 0.1,
                weights: vec![2.0],
                lo: 0.1,
                hi: 3.0,
            },
            noise: 0.2,
            image_width: 640.0,
            image_height: 480.0,
            proposals_per_gt: 4,
            jitter: 0.05,
            false_positives: 2.0,
            crowding: 0.5,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.num_classes == 0 || self.n == 0 {
            return Err(Error::Config("d, num_classes and n must be at least 1".into()));
        }
        self.alpha_fn.validate("alpha_fn", self.d)?;
        self.beta_fn.validate("beta_fn", self.d)?;
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(self.noise) || !unit(self.crowding) {
            return Err(Error::Config("noise and crowding must lie in [0, 1]".into()));
        }
        let size_ok = self.image_width.is_finite()
            && self.image_height.is_finite()
            && self.image_height >= 80.0
            && self.image_width >= 40.0;
        if !size_ok {
            return Err(Error::Config("image must be at least 40 x 80".into()));
        }
        if !(self.jitter.is_finite() && self.jitter >= 0.0) {
            return Err(Error::Config("jitter must be finite and >= 0".into()));
        }
        if !(self.false_positives.is_finite() && self.false_positives >= 0.0) {
            return Err(Error::Config("false_positives must be finite and >= 0".into()));
        }
        Ok(())
    }

    /// `(alpha(x), beta(x))`.
    pub fn params(&self, x: &[f64]) -> AlphaBeta {
        AlphaBeta::new(self.alpha_fn.eval(x), self.beta_fn.eval(x)).expect("maps validated positive")
    }

    fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }

    fn features<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.d).map(|_| rng.random_range(-1.0..1.0)).collect()
    }
}

fn poisson<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> u64 {
    // rates that underflow to zero give an empty draw
    match Poisson::new(lambda) {
        Ok(p) => p.sample(rng) as u64,
        Err(_) if lambda <= 0.0 => 0,
        Err(e) => panic!("poisson rate {lambda}: {e}"),
    }
}

/// One Gamma–Poisson draw: `lambda ~ Gamma(alpha, rate = beta)`, then `m ~ Poisson(lambda)`.
pub fn sample_gamma_poisson<R: Rng + ?Sized>(ab: &AlphaBeta, rng: &mut R) -> u64 {
    let gamma = Gamma::new(ab.alpha(), 1.0 / ab.beta()).expect("positive shape and scale");
    poisson(gamma.sample(rng), rng)
}

/// Counting data: features and a Gamma–Poisson count per sample.
pub fn gen_counting(cfg: &SynthConfig) -> Result<Vec<TrainingSample>> {
    cfg.validate()?;
    let mut rng = cfg.rng();
    (0..cfg.n)
        .map(|_| {
            let x = cfg.features(&mut rng);
            let m = sample_gamma_poisson(&cfg.params(&x), &mut rng);
            TrainingSample::new(x, m)
        })
        .collect()
}

/// A multi-label example with the features its cardinality was drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultilabelSample {
    pub features: Vec<f64>,
    pub record: EvalRecord,
}

impl MultilabelSample {
    pub fn cardinality(&self) -> usize {
        self.record.truth.len()
    }
}

/// Multi-label data. The label count follows the Gamma–Poisson law, clamped
/// to `num_classes`; labels are a uniform subset of that size. True labels
/// score `1 - noise`, false labels `U(0, 1) * (1 - noise)`, and every score is
/// then perturbed by `noise * U(-1, 1)` and clipped to `[0, 1]`.
pub fn gen_multilabel(cfg: &SynthConfig) -> Result<Vec<MultilabelSample>> {
    cfg.validate()?;
    let c = cfg.num_classes;
    let mut rng = cfg.rng();
    let mut clamped = 0usize;
    let mut out = Vec::with_capacity(cfg.n);
    for _ in 0..cfg.n {
        let x = cfg.features(&mut rng);
        let drawn = sample_gamma_poisson(&cfg.params(&x), &mut rng);
        let m = usize::try_from(drawn).unwrap_or(usize::MAX).min(c);
        clamped += usize::from(m as u64 != drawn);
        let truth = LabelSet::new(index::sample(&mut rng, c, m).into_vec(), c)?;
        let scores = (0..c)
            .map(|l| {
                let base = if truth.contains(l) {
                    1.0 - cfg.noise
                } else {
                    rng.random::<f64>() * (1.0 - cfg.noise)
                };
                let jolt = if cfg.noise > 0.0 {
                    cfg.noise * rng.random_range(-1.0..1.0)
                } else {
                    0.0
                };
                (base + jolt).clamp(0.0, 1.0)
            })
            .collect();
        out.push(MultilabelSample {
            features: x,
            record: EvalRecord::new(scores, truth)?,
        });
    }
    if clamped > 0 {
        debug!("clamped {clamped} of {} label counts to {c}", cfg.n);
    }
    Ok(out)
}

/// Proposals and ground truth for one synthetic image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxImage {
    pub image_id: usize,
    pub features: Vec<f64>,
    pub proposals: Vec<BoxDetection>,
    pub ground_truth: Vec<BoxDetection>,
}

const ASPECT: f64 = 0.41;
const MAX_GT_IOU: f64 = 0.7;
const PLACEMENT_TRIES: usize = 50;

fn place_box<R: Rng + ?Sized>(cfg: &SynthConfig, placed: &[BoxDetection], rng: &mut R) -> BoxDetection {
    let (w_img, h_img) = (cfg.image_width, cfg.image_height);
    let max_h = (h_img / 4.0).clamp(40.0, 120.0).min(h_img - 1.0);
    for _ in 0..PLACEMENT_TRIES {
        let h = rng.random_range(40.0..=max_h);
        let w = (h * ASPECT).min(w_img - 1.0);
        let (cx, cy) = match placed.last() {
            Some(prev) if rng.random::<f64>() < cfg.crowding => {
                // a neighbour, shifted sideways by a fraction of its width
                let side = if rng.random::<bool>() { 1.0 } else { -1.0 };
                let dx = side * prev.width() * rng.random_range(0.2..0.8);
                let dy = prev.height() * rng.random_range(-0.1..0.1);
                ((prev.x1 + prev.x2) / 2.0 + dx, (prev.y1 + prev.y2) / 2.0 + dy)
            }
            _ => (rng.random_range(0.0..w_img), rng.random_range(0.0..h_img)),
        };
        let x1 = (cx - w / 2.0).clamp(0.0, w_img - w);
        let y1 = (cy - h / 2.0).clamp(0.0, h_img - h);
        let b = BoxDetection {
            x1,
            y1,
            x2: x1 + w,
            y2: y1 + h,
            score: 1.0,
        };
        if placed.iter().all(|p| crate::detect::iou(p, &b) <= MAX_GT_IOU) {
            return b;
        }
    }
    // fall back to an unconstrained position
    let h = max_h;
    let w = h * ASPECT;
    let x1 = rng.random_range(0.0..(w_img - w));
    let y1 = rng.random_range(0.0..(h_img - h));
    BoxDetection {
        x1,
        y1,
        x2: x1 + w,
        y2: y1 + h,
        score: 1.0,
    }
}

fn jittered<R: Rng + ?Sized>(gt: &BoxDetection, cfg: &SynthConfig, rng: &mut R) -> BoxDetection {
    let score = rng.random_range(0.6..1.0);
    if cfg.jitter == 0.0 {
        return BoxDetection { score, ..*gt };
    }
    let nx = Normal::new(0.0, cfg.jitter * gt.width()).expect("positive std");
    let ny = Normal::new(0.0, cfg.jitter * gt.height()).expect("positive std");
    let x1 = gt.x1 + nx.sample(rng);
    let y1 = gt.y1 + ny.sample(rng);
    let x2 = (gt.x2 + nx.sample(rng)).max(x1 + 1.0);
    let y2 = (gt.y2 + ny.sample(rng)).max(y1 + 1.0);
    BoxDetection { x1, y1, x2, y2, score }
}

/// Crowded pedestrian-like scenes: the number of ground-truth boxes follows the
/// Gamma–Poisson law, each yields `proposals_per_gt` jittered high-score
/// proposals, and a Poisson number of low-score background boxes is added.
pub fn gen_boxes(cfg: &SynthConfig) -> Result<Vec<BoxImage>> {
    cfg.validate()?;
    let mut rng = cfg.rng();
    let mut out = Vec::with_capacity(cfg.n);
    for image_id in 0..cfg.n {
        let x = cfg.features(&mut rng);
        let k = sample_gamma_poisson(&cfg.params(&x), &mut rng) as usize;
        let mut gts: Vec<BoxDetection> = Vec::with_capacity(k);
        for _ in 0..k {
            let b = place_box(cfg, &gts, &mut rng);
            gts.push(b);
        }
        let mut proposals = Vec::with_capacity(k * cfg.proposals_per_gt);
        for gt in &gts {
            for _ in 0..cfg.proposals_per_gt {
                proposals.push(jittered(gt, cfg, &mut rng));
            }
        }
        let n_fp = poisson(cfg.false_positives, &mut rng);
        for _ in 0..n_fp {
            let mut b = place_box(cfg, &[], &mut rng);
            b.score = rng.random_range(0.0..0.7);
            proposals.push(b);
        }
        out.push(BoxImage {
            image_id,
            features: x,
            proposals,
            ground_truth: gts,
        });
    }
    Ok(out)
}
