//! Metrics, experiment drivers and the latency/size benchmark.

use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::{split, to_examples, CirSample, Environment, Obstacle, SplitPolicy};
use crate::error::{Error, Result};
use crate::model::Regressor;
use crate::quant::{encode_qmodel, Int8Engine, QuantizedModel};
use crate::remnet::infer32::Float32Remnet;
use crate::remnet::{encode_checkpoint, Mlp, Remnet, RemnetConfig};
use crate::rng;
use crate::training::{dataset_mae, fit, TrainPlan};

/// Anything that maps a normalised CIR prefix to a range error estimate.
pub trait Predictor: Sync {
    fn input_len(&self) -> usize;
    fn predict_one(&self, input: &[f64]) -> Result<f64>;
}

impl<R: Regressor> Predictor for R {
    fn input_len(&self) -> usize {
        Regressor::input_len(self)
    }

    fn predict_one(&self, input: &[f64]) -> Result<f64> {
        self.predict(input)
    }
}

impl Predictor for Float32Remnet {
    fn input_len(&self) -> usize {
        Float32Remnet::input_len(self)
    }

    fn predict_one(&self, input: &[f64]) -> Result<f64> {
        let x: Vec<f32> = input.iter().map(|&v| v as f32).collect();
        Ok(self.predict(&x)? as f64)
    }
}

/// Integer model plus its compiled engine; inputs are quantized on entry.
#[derive(Debug, Clone)]
pub struct Int8Predictor {
    pub model: QuantizedModel,
    engine: Int8Engine,
}

impl Int8Predictor {
    pub fn new(model: QuantizedModel) -> Result<Self> {
        let engine = Int8Engine::new(&model)?;
        Ok(Int8Predictor { model, engine })
    }
}

impl Predictor for Int8Predictor {
    fn input_len(&self) -> usize {
        self.engine.input_len()
    }

    fn predict_one(&self, input: &[f64]) -> Result<f64> {
        self.engine.forward(&self.model.quantize_input(input))
    }
}

pub fn mae(preds: &[f64], targets: &[f64]) -> Result<f64> {
    if preds.len() != targets.len() || preds.is_empty() {
        return Err(Error::shape(
            "mae",
            format!("{} predictions, {} targets", preds.len(), targets.len()),
        ));
    }
    Ok(preds
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t).abs())
        .sum::<f64>()
        / preds.len() as f64)
}

/// `1 − Σ(t − p)² / Σ(t − mean t)²`.
pub fn r_squared(preds: &[f64], targets: &[f64]) -> Result<f64> {
    if preds.len() != targets.len() || preds.is_empty() {
        return Err(Error::shape(
            "r_squared",
            format!("{} predictions, {} targets", preds.len(), targets.len()),
        ));
    }
    let mean = targets.iter().sum::<f64>() / targets.len() as f64;
    let ss_tot: f64 = targets.iter().map(|t| (t - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::UndefinedR2);
    }
    let ss_res: f64 = preds
        .iter()
        .zip(targets)
        .map(|(p, t)| (t - p).powi(2))
        .sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Fixed-width histogram with explicit under/overflow counts.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
    pub underflow: u64,
    pub overflow: u64,
}

pub const HISTOGRAM_BINS: usize = 300;

impl Histogram {
    pub fn new(lo: f64, hi: f64, bins: usize) -> Result<Self> {
        if bins == 0 || lo.partial_cmp(&hi) != Some(std::cmp::Ordering::Less) {
            return Err(Error::InvalidArgument(format!(
                "histogram [{lo}, {hi}) with {bins} bins"
            )));
        }
        Ok(Histogram {
            lo,
            hi,
            counts: vec![0; bins],
            underflow: 0,
            overflow: 0,
        })
    }

    pub fn add(&mut self, v: f64) {
        if v < self.lo {
            self.underflow += 1;
        } else if v >= self.hi {
            self.overflow += 1;
        } else {
            let n = self.counts.len();
            let i = (((v - self.lo) / (self.hi - self.lo)) * n as f64) as usize;
            self.counts[i.min(n - 1)] += 1;
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.underflow + self.overflow
    }

    pub fn bin_left(&self, i: usize) -> f64 {
        self.lo + (self.hi - self.lo) * i as f64 / self.counts.len() as f64
    }

    /// `bin_left,count` rows; under- and overflow appear as `-inf` and the
    /// upper bound.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut s = String::from("bin_left,count\n");
        s.push_str(&format!("-inf,{}\n", self.underflow));
        for (i, c) in self.counts.iter().enumerate() {
            s.push_str(&format!("{},{}\n", self.bin_left(i), c));
        }
        s.push_str(&format!("{},{}\n", self.hi, self.overflow));
        std::fs::write(path, s).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub count: usize,
    pub n_nlos: usize,
    pub n_los: usize,
    pub mae: f64,
    pub mae_nlos: Option<f64>,
    pub mae_los: Option<f64>,
    pub r2_nlos: Option<f64>,
    pub r2_los: Option<f64>,
    pub sigma_nlos: Option<f64>,
    /// Not part of the usual table; reported for completeness.
    pub sigma_los_extra: Option<f64>,
    pub raw_mae_nlos: Option<f64>,
    pub raw_mae_los: Option<f64>,
    pub raw_sigma_nlos: Option<f64>,
    /// `(raw − mae) / raw` as a fraction.
    pub improvement_nlos: Option<f64>,
    pub improvement_los: Option<f64>,
    pub histogram: Histogram,
}

fn std_dev(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
}

struct ClassStats {
    mae: Option<f64>,
    r2: Option<f64>,
    sigma: Option<f64>,
    raw_mae: Option<f64>,
    raw_sigma: Option<f64>,
    improvement: Option<f64>,
}

fn class_stats(preds: &[f64], targets: &[f64]) -> ClassStats {
    if preds.is_empty() {
        return ClassStats {
            mae: None,
            r2: None,
            sigma: None,
            raw_mae: None,
            raw_sigma: None,
            improvement: None,
        };
    }
    let m = mae(preds, targets).expect("non-empty, equal length");
    let zeros = vec![0.0; targets.len()];
    let raw = mae(&zeros, targets).expect("non-empty");
    let residuals: Vec<f64> = targets.iter().zip(preds).map(|(t, p)| t - p).collect();
    ClassStats {
        mae: Some(m),
        r2: r_squared(preds, targets).ok(),
        sigma: Some(std_dev(&residuals)),
        raw_mae: Some(raw),
        raw_sigma: Some(std_dev(targets)),
        improvement: if raw > 0.0 {
            Some((raw - m) / raw)
        } else {
            None
        },
    }
}

/// Report from predictions already made for `samples` (same order).
pub fn report_from_predictions(preds: &[f64], samples: &[CirSample]) -> Result<EvalReport> {
    if preds.len() != samples.len() || preds.is_empty() {
        return Err(Error::shape(
            "evaluate",
            format!("{} predictions for {} samples", preds.len(), samples.len()),
        ));
    }
    let mut hist = Histogram::new(-1.0, 1.0, HISTOGRAM_BINS)?;
    let (mut p_n, mut t_n, mut p_l, mut t_l) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (p, s) in preds.iter().zip(samples) {
        let t = s.label();
        hist.add(t - p);
        if s.los {
            p_l.push(*p);
            t_l.push(t);
        } else {
            p_n.push(*p);
            t_n.push(t);
        }
    }
    let targets: Vec<f64> = samples.iter().map(CirSample::label).collect();
    let nl = class_stats(&p_n, &t_n);
    let l = class_stats(&p_l, &t_l);
    Ok(EvalReport {
        count: samples.len(),
        n_nlos: p_n.len(),
        n_los: p_l.len(),
        mae: mae(preds, &targets)?,
        mae_nlos: nl.mae,
        mae_los: l.mae,
        r2_nlos: nl.r2,
        r2_los: l.r2,
        sigma_nlos: nl.sigma,
        sigma_los_extra: l.sigma,
        raw_mae_nlos: nl.raw_mae,
        raw_mae_los: l.raw_mae,
        raw_sigma_nlos: nl.raw_sigma,
        improvement_nlos: nl.improvement,
        improvement_los: l.improvement,
        histogram: hist,
    })
}

fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
        Ok(pool.install(f))
    } else {
        Ok(f())
    }
}

/// Predictions for every sample (normalised, truncated to the model's K),
/// in input order.
pub fn predict_all(
    model: &dyn Predictor,
    samples: &[CirSample],
    threads: usize,
) -> Result<Vec<f64>> {
    let k = model.input_len();
    let one = |s: &CirSample| -> Result<f64> {
        let x = crate::dataset::truncate_to_k(&crate::dataset::normalize(s)?.cir, k)?;
        model.predict_one(&x)
    };
    with_threads(threads, || {
        if threads > 1 {
            samples.par_iter().map(one).collect()
        } else {
            samples.iter().map(one).collect()
        }
    })?
}

pub fn evaluate(
    model: &dyn Predictor,
    samples: &[CirSample],
    threads: usize,
) -> Result<EvalReport> {
    let preds = predict_all(model, samples, threads)?;
    report_from_predictions(&preds, samples)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub k: usize,
    pub maes: Vec<f64>,
    pub mean_mae: f64,
    pub std_mae: f64,
}

const SWEEP_STREAM: u64 = 0x5EE9;

/// Retrains REMNet for every K (`repeats` seeds each) and reports the test
/// MAE of each run.
pub fn k_sweep(
    train: &[CirSample],
    test: &[CirSample],
    ks: &[usize],
    repeats: usize,
    base: RemnetConfig,
    plan: &TrainPlan,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    if repeats == 0 || ks.is_empty() {
        return Err(Error::InvalidArgument(
            "k_sweep needs at least one K and one repeat".into(),
        ));
    }
    let mut rows = Vec::with_capacity(ks.len());
    for &k in ks {
        let tr = to_examples(train, k)?;
        let te = to_examples(test, k)?;
        let mut maes = Vec::with_capacity(repeats);
        for r in 0..repeats {
            let s = rng::derive_seed(seed, SWEEP_STREAM, ((k as u64) << 16) | r as u64);
            let mut model = Remnet::build(base.with_input_len(k), &mut rng::seeded(s))?;
            let plan = TrainPlan {
                shuffle_seed: s,
                ..plan.clone()
            };
            fit(&mut model, &tr, &plan, &mut |_, _| {})?;
            maes.push(dataset_mae(&model, &te)?);
        }
        let mean = maes.iter().sum::<f64>() / repeats as f64;
        rows.push(SweepRow {
            k,
            std_mae: std_dev(&maes),
            mean_mae: mean,
            maes,
        });
    }
    Ok(rows)
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut s = String::from("k,mean_mae,std_mae,runs\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{}\n",
            r.k,
            r.mean_mae,
            r.std_mae,
            r.maes.len()
        ));
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TransferAxis {
    Environment,
    Obstacle,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TransferModel {
    Mlp { hidden: usize, layers: usize },
    Remnet(RemnetConfig),
}

impl Default for TransferModel {
    fn default() -> Self {
        TransferModel::Mlp {
            hidden: 64,
            layers: 3,
        }
    }
}

/// Row = training class, column = test class; cells hold test MAE after
/// mitigation, `raw` the unmitigated MAE of each test class.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransferGrid {
    pub axis: TransferAxis,
    pub classes: Vec<String>,
    pub cells: Vec<Vec<f64>>,
    pub raw: Vec<f64>,
}

const TRANSFER_STREAM: u64 = 0x7A45;
/// Share of each class used for training; the rest is held out.
pub const TRANSFER_TRAIN_FRAC: f64 = 0.8;

/// Trains on each class in turn and tests on the held-out part of every
/// class (including its own).
pub fn transfer_matrix(
    samples: &[CirSample],
    axis: TransferAxis,
    model: TransferModel,
    k: usize,
    plan: &TrainPlan,
    seed: u64,
) -> Result<TransferGrid> {
    let key = |s: &CirSample| match axis {
        TransferAxis::Environment => s.environment.to_string(),
        TransferAxis::Obstacle => s.obstacle.to_string(),
    };
    let mut classes: Vec<String> = Vec::new();
    let order: Vec<String> = match axis {
        TransferAxis::Environment => Environment::ALL.iter().map(|e| e.to_string()).collect(),
        TransferAxis::Obstacle => Obstacle::ALL.iter().map(|o| o.to_string()).collect(),
    };
    for c in order {
        if samples.iter().any(|s| key(s) == c) {
            classes.push(c);
        }
    }
    if classes.is_empty() {
        return Err(Error::InvalidArgument(
            "transfer matrix on an empty dataset".into(),
        ));
    }
    let parts: Vec<(Vec<CirSample>, Vec<CirSample>)> = classes
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let members: Vec<CirSample> =
                samples.iter().filter(|s| &key(s) == c).cloned().collect();
            let sp = split(
                &members,
                SplitPolicy::Stratified {
                    frac: TRANSFER_TRAIN_FRAC,
                    seed: rng::derive_seed(seed, TRANSFER_STREAM, i as u64),
                },
            );
            (sp.train, if sp.test.is_empty() { members } else { sp.test })
        })
        .collect();
    let mut cells = Vec::with_capacity(classes.len());
    for (i, (train, _)) in parts.iter().enumerate() {
        if train.is_empty() {
            return Err(Error::Data(format!(
                "class {} has no training samples",
                classes[i]
            )));
        }
        let s = rng::derive_seed(seed, TRANSFER_STREAM, 1000 + i as u64);
        let ex = to_examples(train, k)?;
        let plan = TrainPlan {
            shuffle_seed: s,
            ..plan.clone()
        };
        let predictor: Box<dyn Predictor> = match model {
            TransferModel::Mlp { hidden, layers } => {
                let mut m = Mlp::build(k, hidden, layers, &mut rng::seeded(s))?;
                fit(&mut m, &ex, &plan, &mut |_, _| {})?;
                Box::new(m)
            }
            TransferModel::Remnet(cfg) => {
                let mut m = Remnet::build(cfg.with_input_len(k), &mut rng::seeded(s))?;
                fit(&mut m, &ex, &plan, &mut |_, _| {})?;
                Box::new(m)
            }
        };
        let mut row = Vec::with_capacity(classes.len());
        for (_, test) in &parts {
            row.push(evaluate(predictor.as_ref(), test, plan.threads)?.mae);
        }
        cells.push(row);
    }
    let raw = parts
        .iter()
        .map(|(_, t)| t.iter().map(|s| s.label().abs()).sum::<f64>() / t.len() as f64)
        .collect();
    Ok(TransferGrid {
        axis,
        classes,
        cells,
        raw,
    })
}

pub fn write_transfer_csv(path: &Path, grid: &TransferGrid) -> Result<()> {
    let mut s = String::from("train\\test");
    for c in &grid.classes {
        s.push_str(&format!(",{c}"));
    }
    s.push('\n');
    for (c, row) in grid.classes.iter().zip(&grid.cells) {
        s.push_str(c);
        for v in row {
            s.push_str(&format!(",{v}"));
        }
        s.push('\n');
    }
    s.push_str("raw");
    for v in &grid.raw {
        s.push_str(&format!(",{v}"));
    }
    s.push('\n');
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Deployable forms of a trained REMNet.
#[allow(clippy::large_enum_variant)]
pub enum BenchVariant {
    Float32(Float32Remnet, usize),
    /// Weights rounded to binary16, computed in f32.
    Float16(Float32Remnet, usize),
    Int8(Int8Predictor, usize),
}

impl BenchVariant {
    pub fn float32(model: &Remnet) -> Self {
        BenchVariant::Float32(Float32Remnet::new(model), encode_checkpoint(model).len())
    }

    /// Size counts the weight payload at two bytes per value.
    pub fn float16(model: &Remnet) -> Result<Self> {
        let (cfg, w) = model.clone().into_parts();
        let rounded = Remnet::from_weights(cfg, w.to_f16_precision())?;
        let bytes = encode_checkpoint(model).len() - 2 * model.total_params();
        Ok(BenchVariant::Float16(Float32Remnet::new(&rounded), bytes))
    }

    pub fn int8(q: QuantizedModel) -> Result<Self> {
        let bytes = encode_qmodel(&q).len();
        Ok(BenchVariant::Int8(Int8Predictor::new(q)?, bytes))
    }

    pub fn name(&self) -> &'static str {
        match self {
            BenchVariant::Float32(..) => "float32",
            BenchVariant::Float16(..) => "float16",
            BenchVariant::Int8(..) => "int8",
        }
    }

    pub fn model_bytes(&self) -> usize {
        match self {
            BenchVariant::Float32(_, b)
            | BenchVariant::Float16(_, b)
            | BenchVariant::Int8(_, b) => *b,
        }
    }

    pub fn input_len(&self) -> usize {
        match self {
            BenchVariant::Float32(m, _) | BenchVariant::Float16(m, _) => m.input_len(),
            BenchVariant::Int8(p, _) => Predictor::input_len(p),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchResult {
    pub variant: String,
    pub median_ms: f64,
    pub p95_ms: f64,
    pub model_bytes: usize,
    pub iters: usize,
    pub batch: usize,
}

/// Per-inference wall time over `iters` timed batches of `batch`
/// inferences each, after `warmup` untimed batches. Int8 timing includes
/// input quantization; float inputs are converted to f32 beforehand.
pub fn bench_latency(
    variant: &BenchVariant,
    inputs: &[Vec<f64>],
    batch: usize,
    warmup: usize,
    iters: usize,
) -> Result<BenchResult> {
    if iters == 0 || batch == 0 {
        return Err(Error::InvalidArgument(
            "bench needs iters > 0 and batch > 0".into(),
        ));
    }
    if inputs.is_empty() {
        return Err(Error::InvalidArgument(
            "bench needs at least one input".into(),
        ));
    }
    let k = variant.input_len();
    if let Some(x) = inputs.iter().find(|x| x.len() != k) {
        return Err(Error::shape(
            "bench",
            format!("input length {} != {k}", x.len()),
        ));
    }
    let f32_inputs: Vec<Vec<f32>> = inputs
        .iter()
        .map(|x| x.iter().map(|&v| v as f32).collect())
        .collect();
    let mut sink = 0.0f64;
    let mut run = |start: usize| -> Result<()> {
        for j in 0..batch {
            let i = (start + j) % inputs.len();
            let y = match variant {
                BenchVariant::Float32(m, _) | BenchVariant::Float16(m, _) => {
                    m.predict(&f32_inputs[i])? as f64
                }
                BenchVariant::Int8(p, _) => p.predict_one(&inputs[i])?,
            };
            sink += y;
        }
        Ok(())
    };
    for w in 0..warmup {
        run(w * batch)?;
    }
    let mut times = Vec::with_capacity(iters);
    for it in 0..iters {
        let t = Instant::now();
        run(it * batch)?;
        times.push(t.elapsed().as_secs_f64() * 1e3 / batch as f64);
    }
    std::hint::black_box(sink);
    times.sort_by(|a, b| a.total_cmp(b));
    let median = if iters % 2 == 1 {
        times[iters / 2]
    } else {
        0.5 * (times[iters / 2 - 1] + times[iters / 2])
    };
    let p95 = times[((0.95 * iters as f64).ceil() as usize).clamp(1, iters) - 1];
    Ok(BenchResult {
        variant: variant.name().to_string(),
        median_ms: median,
        p95_ms: p95,
        model_bytes: variant.model_bytes(),
        iters,
        batch,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let s = serde_json::to_string_pretty(value).map_err(|e| Error::Data(e.to_string()))?;
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}
