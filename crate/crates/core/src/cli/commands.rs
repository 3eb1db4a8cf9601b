use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::io::{read_boxes, read_jsonl, require_file, write_boxes, write_csv, write_json, write_jsonl, Provenance};
use crate::cardloss::HeadWeights;
use crate::cardnet::{
    gradient_check, gradient_check_fixture, train, Activation, MlpModel, Objective, TrainConfig, TrainingSample,
};
use crate::detect::{
    adaptive_nms, detection_f1, greedy_nms, log_avg_miss_rate, match_detections, miss_rate_curve, BoxDetection,
    MatchResult, NmsConfig,
};
use crate::mlmetrics::{aggregate, mce, predicted_k_eval, topk_sweep, EvalRecord, LabelSet, Metrics};
use crate::numerics::NegBinParams;
use crate::setinfer::{sample_rfs, CardinalityPmf, Categorical, GaussianElement, UniformElement};
use crate::synth::{gen_boxes, gen_counting, gen_multilabel, SynthConfig};
use crate::{Error, Result};

/// Shared inputs of every command.
pub struct Context {
    pub config: Option<PathBuf>,
    pub seed: u64,
    pub out: PathBuf,
}

/// What a command reports on standard output.
pub struct Report {
    pub config: Value,
    pub outputs: Vec<PathBuf>,
    pub result: Value,
}

fn read_config_value(ctx: &Context) -> Result<Value> {
    match &ctx.config {
        None => Ok(json!({})),
        Some(path) => {
            require_file("--config", path)?;
            let text = fs::read_to_string(path)?;
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
        }
    }
}

fn parse_config<T: DeserializeOwned>(v: Value) -> Result<T> {
    serde_json::from_value(v).map_err(|e| Error::Config(e.to_string()))
}

fn load_config<T: DeserializeOwned>(ctx: &Context) -> Result<T> {
    parse_config(read_config_value(ctx)?)
}

fn to_value<T: Serialize>(v: &T) -> Result<Value> {
    serde_json::to_value(v).map_err(|e| Error::Data(e.to_string()))
}

fn out_dir(ctx: &Context) -> Result<&Path> {
    fs::create_dir_all(&ctx.out)?;
    Ok(&ctx.out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum SynthKind {
    #[default]
    Counting,
    Multilabel,
    Boxes,
}

#[derive(Serialize)]
struct SynthRun {
    kind: SynthKind,
    #[serde(flatten)]
    synth: SynthConfig,
}

#[derive(Serialize)]
struct CountRow<'a> {
    features: &'a [f64],
    count: u64,
}

#[derive(Serialize)]
struct MultilabelRow<'a> {
    features: &'a [f64],
    scores: &'a [f64],
    truth: &'a [usize],
}

#[derive(Serialize)]
struct ImageFeatures<'a> {
    image_id: u64,
    features: &'a [f64],
}

#[derive(Serialize)]
struct ImageCountRow<'a> {
    image_id: u64,
    features: &'a [f64],
    count: u64,
}

pub fn synth(ctx: &Context) -> Result<Report> {
    let mut v = read_config_value(ctx)?;
    let obj = v
        .as_object_mut()
        .ok_or_else(|| Error::Config("config must be a JSON object".into()))?;
    if obj.contains_key("seed") {
        return Err(Error::Config("the seed is set with --seed, not in the config".into()));
    }
    let kind: SynthKind = match obj.remove("kind") {
        Some(k) => parse_config(k)?,
        None => SynthKind::default(),
    };
    let mut synth: SynthConfig = parse_config(v)?;
    synth.seed = ctx.seed;
    synth.validate()?;
    let run = SynthRun { kind, synth };
    let prov = Provenance::new("synth", &run, ctx.seed)?;
    let dir = out_dir(ctx)?;
    let cfg = &run.synth;

    let (outputs, samples) = match kind {
        SynthKind::Counting => {
            let data = gen_counting(cfg)?;
            let rows: Vec<CountRow> = data
                .iter()
                .map(|s| CountRow {
                    features: &s.features,
                    count: s.count,
                })
                .collect();
            (
                vec![write_jsonl(&dir.join("counting.jsonl"), &prov, &rows)?],
                data.len(),
            )
        }
        SynthKind::Multilabel => {
            let data = gen_multilabel(cfg)?;
            let rows: Vec<MultilabelRow> = data
                .iter()
                .map(|s| MultilabelRow {
                    features: &s.features,
                    scores: &s.record.scores,
                    truth: s.record.truth.labels(),
                })
                .collect();
            let counts: Vec<CountRow> = data
                .iter()
                .map(|s| CountRow {
                    features: &s.features,
                    count: s.cardinality() as u64,
                })
                .collect();
            let outputs = vec![
                write_jsonl(&dir.join("multilabel.jsonl"), &prov, &rows)?,
                write_jsonl(&dir.join("multilabel_counts.jsonl"), &prov, &counts)?,
            ];
            (outputs, data.len())
        }
        SynthKind::Boxes => {
            let images = gen_boxes(cfg)?;
            let id = |i: usize| i as u64;
            let feats: Vec<ImageFeatures> = images
                .iter()
                .map(|im| ImageFeatures {
                    image_id: id(im.image_id),
                    features: &im.features,
                })
                .collect();
            let counts: Vec<ImageCountRow> = images
                .iter()
                .map(|im| ImageCountRow {
                    image_id: id(im.image_id),
                    features: &im.features,
                    count: im.ground_truth.len() as u64,
                })
                .collect();
            let outputs = vec![
                write_boxes(
                    &dir.join("proposals.txt"),
                    &prov,
                    images.iter().map(|im| (id(im.image_id), &im.proposals[..])),
                    true,
                )?,
                write_boxes(
                    &dir.join("ground_truth.txt"),
                    &prov,
                    images.iter().map(|im| (id(im.image_id), &im.ground_truth[..])),
                    false,
                )?,
                write_jsonl(&dir.join("image_features.jsonl"), &prov, &feats)?,
                write_jsonl(&dir.join("box_counts.jsonl"), &prov, &counts)?,
            ];
            (outputs, images.len())
        }
    };
    Ok(Report {
        config: to_value(&run)?,
        outputs,
        result: json!({ "samples": samples }),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct TrainRun {
    data: PathBuf,
    hidden: Vec<usize>,
    activation: Activation,
    objective: Objective,
    alpha_max: f64,
    beta_max: f64,
    floor: f64,
    learning_rate: f64,
    momentum: f64,
    weight_decay: f64,
    epochs: usize,
    batch_size: usize,
}

impl Default for TrainRun {
    fn default() -> Self {
        let t = TrainConfig::default();
        let h = HeadWeights::default();
        Self {
            data: PathBuf::new(),
            hidden: vec![16],
            activation: Activation::default(),
            objective: Objective::default(),
            alpha_max: h.alpha_max,
            beta_max: h.beta_max,
            floor: h.floor,
            learning_rate: t.learning_rate,
            momentum: t.momentum,
            weight_decay: t.weight_decay,
            epochs: t.epochs,
            batch_size: t.batch_size,
        }
    }
}

fn read_samples(path: &Path) -> Result<Vec<TrainingSample>> {
    let rows: Vec<TrainingSample> = read_jsonl(path)?;
    rows.into_iter()
        .map(|s| TrainingSample::new(s.features, s.count))
        .collect()
}

#[derive(Serialize)]
struct EpochRow {
    epoch: usize,
    loss: f64,
}

#[derive(Serialize)]
struct ModelProvenance<'a> {
    config_hash: &'a str,
    seed: u64,
    run: &'a TrainRun,
}

pub fn train_cmd(ctx: &Context) -> Result<Report> {
    let run: TrainRun = load_config(ctx)?;
    require_file("data", &run.data)?;
    let head = HeadWeights::new(run.alpha_max, run.beta_max, run.floor)?;
    let tc = TrainConfig {
        learning_rate: run.learning_rate,
        momentum: run.momentum,
        weight_decay: run.weight_decay,
        epochs: run.epochs,
        batch_size: run.batch_size,
        seed: ctx.seed,
    };
    tc.validate()?;
    let data = read_samples(&run.data)?;
    let dim = data
        .first()
        .ok_or_else(|| Error::Data("training file has no samples".into()))?
        .features
        .len();
    let model = MlpModel::new(dim, &run.hidden, run.activation, head, run.objective, ctx.seed)
        .map_err(|e| Error::Config(e.to_string()))?;
    let report = train(&model, &data, &tc)?;

    let prov = Provenance::new("train", &run, ctx.seed)?;
    let dir = out_dir(ctx)?;
    let model_path = dir.join("model.json");
    let doc = report.model.to_json(&ModelProvenance {
        config_hash: &prov.config_hash,
        seed: ctx.seed,
        run: &run,
    })?;
    fs::write(&model_path, doc + "\n")?;
    let log: Vec<EpochRow> = report
        .epoch_losses
        .iter()
        .enumerate()
        .map(|(epoch, &loss)| EpochRow { epoch, loss })
        .collect();
    let log_path = write_jsonl(&dir.join("train_log.jsonl"), &prov, &log)?;
    Ok(Report {
        config: to_value(&run)?,
        outputs: vec![model_path, log_path],
        result: json!({
            "samples": data.len(),
            "steps": report.steps,
            "final_loss": report.epoch_losses.last(),
        }),
    })
}

fn load_model(path: &Path) -> Result<MlpModel> {
    require_file("model", path)?;
    MlpModel::from_json(&fs::read_to_string(path)?)
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct PredictRun {
    model: PathBuf,
    features: PathBuf,
}

#[derive(Deserialize)]
struct FeatureRow {
    features: Vec<f64>,
    count: Option<u64>,
}

#[derive(Serialize)]
struct PredictionRow {
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    estimate: Option<f64>,
    mode: u64,
}

pub fn predict(ctx: &Context) -> Result<Report> {
    let run: PredictRun = load_config(ctx)?;
    let model = load_model(&run.model)?;
    require_file("features", &run.features)?;
    let rows: Vec<FeatureRow> = read_jsonl(&run.features)?;

    let mut preds = Vec::with_capacity(rows.len());
    for r in &rows {
        let mode = model.predict_count(&r.features)?;
        let row = match model.objective {
            Objective::NegBinomial => {
                let ab = model.forward(&r.features)?;
                PredictionRow {
                    alpha: Some(ab.alpha()),
                    beta: Some(ab.beta()),
                    estimate: None,
                    mode,
                }
            }
            Objective::Regression => PredictionRow {
                alpha: None,
                beta: None,
                estimate: Some(model.outputs(&r.features)?[0]),
                mode,
            },
        };
        preds.push(row);
    }

    let truth: Option<Vec<u64>> = rows.iter().map(|r| r.count).collect();
    let error = match truth {
        Some(t) if !t.is_empty() => {
            let p: Vec<u64> = preds.iter().map(|r| r.mode).collect();
            let (mean, std) = mce(&p, &t)?;
            json!({ "mce": mean, "mce_std": std })
        }
        _ => json!({}),
    };
    let prov = Provenance::new("predict", &run, ctx.seed)?;
    let path = write_jsonl(&out_dir(ctx)?.join("predictions.jsonl"), &prov, &preds)?;
    let mut result = json!({ "records": preds.len() });
    result
        .as_object_mut()
        .expect("object")
        .extend(error.as_object().cloned().unwrap_or_default());
    Ok(Report {
        config: to_value(&run)?,
        outputs: vec![path],
        result,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum EvalMode {
    /// Fixed `k` for every record.
    #[default]
    Sweep,
    /// Per-record `k` from a predictions file.
    Predicted,
    /// Per-record `k` equal to the true label count.
    Oracle,
    /// Label sets given in the records' `pred` field.
    Given,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct EvalMlRun {
    records: PathBuf,
    mode: EvalMode,
    predictions: Option<PathBuf>,
    k_values: Option<Vec<usize>>,
}

#[derive(Deserialize)]
struct RecordRow {
    scores: Vec<f64>,
    truth: Vec<usize>,
    #[serde(default)]
    pred: Option<Vec<usize>>,
}

#[derive(Deserialize)]
struct ModeRow {
    mode: u64,
}

#[derive(Serialize)]
struct EvalMlOut {
    mode: EvalMode,
    records: usize,
    classes: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    metrics: Option<Metrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mce: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mce_std: Option<f64>,
    best_fixed_k: usize,
    best_fixed_k_o_f1: f64,
}

pub fn eval_ml(ctx: &Context) -> Result<Report> {
    let run: EvalMlRun = load_config(ctx)?;
    require_file("records", &run.records)?;
    let rows: Vec<RecordRow> = read_jsonl(&run.records)?;
    let c = rows
        .first()
        .ok_or_else(|| Error::Data("records file is empty".into()))?
        .scores
        .len();
    let mut records = Vec::with_capacity(rows.len());
    let mut given = Vec::new();
    for r in rows {
        if r.scores.len() != c {
            return Err(Error::Data(format!(
                "records disagree on the class count ({} vs {c})",
                r.scores.len()
            )));
        }
        if let Some(p) = r.pred {
            given.push(LabelSet::new(p, c)?);
        }
        records.push(EvalRecord::new(r.scores, LabelSet::new(r.truth, c)?)?);
    }

    let ks = run.k_values.clone().unwrap_or_else(|| (0..=c).collect());
    let sweep = topk_sweep(&records, &ks).map_err(|e| Error::Config(e.to_string()))?;
    let best = sweep
        .iter()
        .fold(None, |acc: Option<&crate::mlmetrics::SweepPoint>, p| match acc {
            Some(b) if b.metrics.o_f1 >= p.metrics.o_f1 => Some(b),
            _ => Some(p),
        })
        .ok_or_else(|| Error::Config("k_values is empty".into()))?;

    let truth_sizes: Vec<usize> = records.iter().map(|r| r.truth.len()).collect();
    let (metrics, ks_used) = match run.mode {
        EvalMode::Sweep => (None, None),
        EvalMode::Oracle => (
            Some(predicted_k_eval(&records, &truth_sizes)?),
            Some(truth_sizes.clone()),
        ),
        EvalMode::Predicted => {
            let path = run
                .predictions
                .as_deref()
                .ok_or_else(|| Error::Config("predicted mode needs predictions".into()))?;
            require_file("predictions", path)?;
            let modes: Vec<ModeRow> = read_jsonl(path)?;
            if modes.len() != records.len() {
                return Err(Error::Data(format!(
                    "{} predictions for {} records",
                    modes.len(),
                    records.len()
                )));
            }
            let m: Vec<usize> = modes
                .iter()
                .map(|r| usize::try_from(r.mode).unwrap_or(usize::MAX).min(c))
                .collect();
            (Some(predicted_k_eval(&records, &m)?), Some(m))
        }
        EvalMode::Given => {
            if given.len() != records.len() {
                return Err(Error::Data("given mode needs a pred field on every record".into()));
            }
            let truths: Vec<LabelSet> = records.iter().map(|r| r.truth.clone()).collect();
            let sizes = given.iter().map(LabelSet::len).collect();
            (Some(aggregate(&given, &truths, c)?), Some(sizes))
        }
    };
    let (mce_mean, mce_std) = match &ks_used {
        Some(m) => {
            let p: Vec<u64> = m.iter().map(|&k| k as u64).collect();
            let t: Vec<u64> = truth_sizes.iter().map(|&k| k as u64).collect();
            let (a, b) = mce(&p, &t)?;
            (Some(a), Some(b))
        }
        None => (None, None),
    };
    let out = EvalMlOut {
        mode: run.mode,
        records: records.len(),
        classes: c,
        metrics,
        mce: mce_mean,
        mce_std,
        best_fixed_k: best.k,
        best_fixed_k_o_f1: best.metrics.o_f1,
    };

    let prov = Provenance::new("eval-ml", &run, ctx.seed)?;
    let dir = out_dir(ctx)?;
    let curve: Vec<Vec<f64>> = sweep
        .iter()
        .map(|p| {
            let m = p.metrics;
            vec![p.k as f64, m.o_p, m.o_r, m.o_f1, m.c_p, m.c_r, m.c_f1]
        })
        .collect();
    let outputs = vec![
        write_json(&dir.join("ml_metrics.json"), &prov, &out)?,
        write_csv(
            &dir.join("pr_curve.csv"),
            &prov,
            &["k", "o_p", "o_r", "o_f1", "c_p", "c_r", "c_f1"],
            &curve,
        )?,
    ];
    Ok(Report {
        config: to_value(&run)?,
        outputs,
        result: to_value(&out)?,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct EvalDetRun {
    detections: PathBuf,
    ground_truth: PathBuf,
    iou_threshold: f64,
    /// Images in the evaluation; defaults to the ids seen in either file.
    n_images: Option<usize>,
}

impl Default for EvalDetRun {
    fn default() -> Self {
        Self {
            detections: PathBuf::new(),
            ground_truth: PathBuf::new(),
            iou_threshold: 0.5,
            n_images: None,
        }
    }
}

#[derive(Serialize)]
struct EvalDetOut {
    images: usize,
    true_positives: usize,
    false_positives: usize,
    false_negatives: usize,
    precision: f64,
    recall: f64,
    f1: f64,
    log_avg_miss_rate: f64,
}

pub fn eval_det(ctx: &Context) -> Result<Report> {
    let run: EvalDetRun = load_config(ctx)?;
    require_file("detections", &run.detections)?;
    require_file("ground_truth", &run.ground_truth)?;
    let dets = read_boxes(&run.detections, true)?;
    let gts = read_boxes(&run.ground_truth, false)?;
    let ids: std::collections::BTreeSet<u64> = dets.keys().chain(gts.keys()).copied().collect();
    let n_images = run.n_images.unwrap_or(ids.len());
    if n_images < ids.len() {
        return Err(Error::Config(format!(
            "n_images = {n_images} but {} image ids appear",
            ids.len()
        )));
    }
    let empty = Vec::new();
    let per_image = ids
        .iter()
        .map(|id| {
            let d = dets.get(id).unwrap_or(&empty);
            let g = gts.get(id).unwrap_or(&empty);
            match_detections(d, g, run.iou_threshold).map_err(|e| Error::Config(e.to_string()))
        })
        .collect::<Result<Vec<MatchResult>>>()?;
    let total = MatchResult::combine(&per_image);
    let curve = miss_rate_curve(&per_image, n_images).map_err(|e| Error::Data(e.to_string()))?;
    let out = EvalDetOut {
        images: n_images,
        true_positives: total.true_positives,
        false_positives: total.false_positives,
        false_negatives: total.false_negatives,
        precision: total.precision(),
        recall: total.recall(),
        f1: detection_f1(&total),
        log_avg_miss_rate: log_avg_miss_rate(&per_image, n_images)?,
    };
    let prov = Provenance::new("eval-det", &run, ctx.seed)?;
    let dir = out_dir(ctx)?;
    let rows: Vec<Vec<f64>> = curve.iter().map(|&(f, m)| vec![f, m]).collect();
    let outputs = vec![
        write_json(&dir.join("det_metrics.json"), &prov, &out)?,
        write_csv(&dir.join("miss_rate_curve.csv"), &prov, &["fppi", "miss_rate"], &rows)?,
    ];
    Ok(Report {
        config: to_value(&run)?,
        outputs,
        result: to_value(&out)?,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum CountSource {
    /// Plain greedy NMS at `t0`.
    #[default]
    Threshold,
    /// The same target count for every image.
    Fixed,
    /// Per-image counts from a JSONL file of `{"image_id", "count"}`.
    File,
    /// Counts predicted by a trained model from per-image features.
    Model,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct NmsRun {
    proposals: PathBuf,
    source: CountSource,
    m_star: Option<usize>,
    counts: Option<PathBuf>,
    model: Option<PathBuf>,
    features: Option<PathBuf>,
    t0: f64,
    step: f64,
    t_max: f64,
}

impl Default for NmsRun {
    fn default() -> Self {
        let n = NmsConfig::default();
        Self {
            proposals: PathBuf::new(),
            source: CountSource::default(),
            m_star: None,
            counts: None,
            model: None,
            features: None,
            t0: n.t0,
            step: n.step,
            t_max: n.t_max,
        }
    }
}

#[derive(Deserialize)]
struct ImageCount {
    image_id: u64,
    count: u64,
}

#[derive(Deserialize)]
struct ImageFeatureRow {
    image_id: u64,
    features: Vec<f64>,
}

fn need<'a, T>(v: &'a Option<T>, key: &str, source: &str) -> Result<&'a T> {
    v.as_ref()
        .ok_or_else(|| Error::Config(format!("source {source} needs {key}")))
}

pub fn nms(ctx: &Context) -> Result<Report> {
    let run: NmsRun = load_config(ctx)?;
    let cfg = NmsConfig {
        t0: run.t0,
        step: run.step,
        t_max: run.t_max,
    };
    cfg.validate()?;
    require_file("proposals", &run.proposals)?;
    let proposals = read_boxes(&run.proposals, true)?;

    let targets: Option<BTreeMap<u64, u64>> = match run.source {
        CountSource::Threshold => None,
        CountSource::Fixed => {
            let m = *need(&run.m_star, "m_star", "fixed")? as u64;
            Some(proposals.keys().map(|&id| (id, m)).collect())
        }
        CountSource::File => {
            let path = need(&run.counts, "counts", "file")?;
            require_file("counts", path)?;
            let rows: Vec<ImageCount> = read_jsonl(path)?;
            Some(rows.into_iter().map(|r| (r.image_id, r.count)).collect())
        }
        CountSource::Model => {
            let model = load_model(need(&run.model, "model", "model")?)?;
            let path = need(&run.features, "features", "model")?;
            require_file("features", path)?;
            let rows: Vec<ImageFeatureRow> = read_jsonl(path)?;
            let counts = rows
                .iter()
                .map(|r| Ok((r.image_id, model.predict_count(&r.features)?)))
                .collect::<Result<BTreeMap<u64, u64>>>()?;
            Some(counts)
        }
    };

    let mut kept: BTreeMap<u64, Vec<BoxDetection>> = BTreeMap::new();
    for (id, boxes) in &proposals {
        let out = match &targets {
            None => greedy_nms(boxes, cfg.t0),
            Some(t) => {
                let m = *t
                    .get(id)
                    .ok_or_else(|| Error::Data(format!("no target count for image {id}")))?;
                adaptive_nms(boxes, usize::try_from(m).unwrap_or(usize::MAX), &cfg)?
            }
        };
        kept.insert(*id, out);
    }
    let total: usize = kept.values().map(Vec::len).sum();
    let prov = Provenance::new("nms", &run, ctx.seed)?;
    let path = write_boxes(
        &out_dir(ctx)?.join("kept.txt"),
        &prov,
        kept.iter().map(|(id, b)| (*id, &b[..])),
        true,
    )?;
    Ok(Report {
        config: to_value(&run)?,
        outputs: vec![path],
        result: json!({ "images": kept.len(), "kept": total }),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
enum CardSpec {
    /// `NB(a, b)`.
    NegBin {
        a: f64,
        b: f64,
    },
    /// `NB(alpha, 1/(1+beta))` from a Gamma prior on a Poisson rate.
    GammaPoisson {
        alpha: f64,
        beta: f64,
    },
    Pmf(Vec<f64>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
enum ElementSpec {
    Categorical(Vec<f64>),
    Uniform { low: f64, high: f64 },
    Gaussian { mean: f64, std: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct SampleRun {
    cardinality: CardSpec,
    element: ElementSpec,
    n: usize,
}

impl Default for SampleRun {
    fn default() -> Self {
        Self {
            cardinality: CardSpec::NegBin { a: 5.0, b: 0.5 },
            element: ElementSpec::Uniform { low: 0.0, high: 1.0 },
            n: 1000,
        }
    }
}

#[derive(Serialize)]
struct SetRow<T> {
    elements: Vec<T>,
}

pub fn sample(ctx: &Context) -> Result<Report> {
    let run: SampleRun = load_config(ctx)?;
    let card = match &run.cardinality {
        CardSpec::NegBin { a, b } => CardinalityPmf::from_negbin(&NegBinParams::new(*a, *b)?),
        CardSpec::GammaPoisson { alpha, beta } => {
            CardinalityPmf::from_negbin(&NegBinParams::from_gamma_prior(*alpha, *beta)?)
        }
        CardSpec::Pmf(p) => CardinalityPmf::new(p.clone())?,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let mut sizes = vec![0u64; card.max_cardinality() + 1];
    let rows: Vec<Value> = match &run.element {
        ElementSpec::Categorical(p) => {
            let law = Categorical::new(p)?;
            (0..run.n)
                .map(|_| {
                    to_value(&SetRow {
                        elements: sample_rfs(&card, &law, &mut rng),
                    })
                })
                .collect::<Result<_>>()?
        }
        ElementSpec::Uniform { low, high } => {
            let law = UniformElement::new(*low, *high)?;
            (0..run.n)
                .map(|_| {
                    to_value(&SetRow {
                        elements: sample_rfs(&card, &law, &mut rng),
                    })
                })
                .collect::<Result<_>>()?
        }
        ElementSpec::Gaussian { mean, std } => {
            let law = GaussianElement::new(*mean, *std)?;
            (0..run.n)
                .map(|_| {
                    to_value(&SetRow {
                        elements: sample_rfs(&card, &law, &mut rng),
                    })
                })
                .collect::<Result<_>>()?
        }
    };
    for r in &rows {
        sizes[r["elements"].as_array().map_or(0, Vec::len)] += 1;
    }
    let n = run.n.max(1) as f64;
    let tv: f64 = sizes
        .iter()
        .zip(card.probs())
        .map(|(&s, p)| (s as f64 / n - p).abs())
        .sum::<f64>()
        / 2.0;
    let mean = sizes.iter().enumerate().map(|(m, &s)| m as f64 * s as f64).sum::<f64>() / n;
    let prov = Provenance::new("sample", &run, ctx.seed)?;
    let path = write_jsonl(&out_dir(ctx)?.join("samples.jsonl"), &prov, &rows)?;
    Ok(Report {
        config: to_value(&run)?,
        outputs: vec![path],
        result: json!({ "sets": run.n, "mean_cardinality": mean, "cardinality_tv": tv }),
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct GradcheckRun {
    input_dim: usize,
    hidden: Vec<usize>,
    batch_size: usize,
    activation: Activation,
    h: f64,
    /// Check this model instead of a random one; its batch is read from `data`.
    model: Option<PathBuf>,
    data: Option<PathBuf>,
}

impl Default for GradcheckRun {
    fn default() -> Self {
        Self {
            input_dim: 4,
            hidden: vec![8],
            batch_size: 8,
            activation: Activation::Tanh,
            h: 1e-5,
            model: None,
            data: None,
        }
    }
}

/// Error bound the report is judged against.
const GRADCHECK_TOLERANCE: f64 = 1e-4;

pub fn gradcheck(ctx: &Context) -> Result<Report> {
    let run: GradcheckRun = load_config(ctx)?;
    let (model, batch) = match (&run.model, &run.data) {
        (None, None) => gradient_check_fixture(run.input_dim, &run.hidden, run.batch_size, run.activation, ctx.seed)
            .map_err(|e| Error::Config(e.to_string()))?,
        (Some(m), Some(d)) => {
            let model = load_model(m)?;
            require_file("data", d)?;
            let mut batch = read_samples(d)?;
            batch.truncate(run.batch_size);
            (model, batch)
        }
        _ => return Err(Error::Config("model and data must be given together".into())),
    };
    let err = gradient_check(&model, &batch, run.h).map_err(|e| Error::Config(e.to_string()))?;
    let out = json!({
        "max_relative_error": err,
        "parameters": model.param_count(),
        "batch": batch.len(),
        "tolerance": GRADCHECK_TOLERANCE,
        "passed": err < GRADCHECK_TOLERANCE,
    });
    let prov = Provenance::new("gradcheck", &run, ctx.seed)?;
    let path = write_json(&out_dir(ctx)?.join("gradcheck.json"), &prov, &out)?;
    Ok(Report {
        config: to_value(&run)?,
        outputs: vec![path],
        result: out,
    })
}
