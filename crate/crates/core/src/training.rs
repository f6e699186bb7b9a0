//! Training loop with temperature annealing, best-validation model
//! selection, per-epoch metric logging, epochs-to-threshold speedup and
//! seeded sweeps.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::analysis::TraceRecord;
use crate::autodiff::{Tape, Var};
use crate::concrete::{
    gumbel_sample, unique_percentage_of, SelectorParams, TemperatureSchedule, Variant, WeightInit,
};
use crate::data::{Dataset, Split};
use crate::error::{Error, Result};
use crate::model::{lr_schedule, CaeModel, Mlp, Optimizer, OptimizerConfig, OptimizerKind};
use crate::objectives::{
    cross_entropy, gjsd_value, mse, normalized_frobenius, regularized_loss, top1_accuracy, Task,
};
use crate::tensor::{Rng, Shape, Tensor};

const DECODER_STREAM: u64 = 3;
const RUN_STREAM: u64 = 4;

/// Everything that determines a run besides the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub task: Task,
    /// Number of selected features.
    pub k: usize,
    /// Embedding size; `None` means `P = D`.
    #[serde(default)]
    pub p: Option<usize>,
    #[serde(default = "default_variant")]
    pub variant: Variant,
    #[serde(default)]
    pub bias: bool,
    #[serde(default)]
    pub weight_init: WeightInit,
    /// Keep the selector weight (and bias) at its initial value.
    #[serde(default)]
    pub freeze_weight: bool,
    #[serde(default)]
    pub lambda: f64,
    #[serde(default = "default_t0")]
    pub t0: f64,
    #[serde(default = "default_tb")]
    pub tb: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_optimizer")]
    pub optimizer: OptimizerKind,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub warmup_epochs: usize,
    #[serde(default)]
    pub weight_decay: f64,
    /// Record per-step update components.
    #[serde(default)]
    pub trace: bool,
}

fn default_variant() -> Variant {
    Variant::FullIp
}
fn default_t0() -> f64 {
    10.0
}
fn default_tb() -> f64 {
    0.01
}
fn default_epochs() -> usize {
    200
}
fn default_lr() -> f64 {
    1e-3
}
fn default_optimizer() -> OptimizerKind {
    OptimizerKind::Adam
}
fn default_batch_size() -> usize {
    256
}
fn default_hidden() -> Vec<usize> {
    alloc::vec![200]
}
fn default_seed() -> u64 {
    crate::FIXED_SEEDS[0]
}

impl TrainConfig {
    /// Defaults for everything but the task and `K`.
    pub fn new(task: Task, k: usize) -> Self {
        TrainConfig {
            task,
            k,
            p: None,
            variant: default_variant(),
            bias: false,
            weight_init: WeightInit::default(),
            freeze_weight: false,
            lambda: 0.0,
            t0: default_t0(),
            tb: default_tb(),
            epochs: default_epochs(),
            lr: default_lr(),
            optimizer: default_optimizer(),
            batch_size: default_batch_size(),
            hidden: default_hidden(),
            seed: default_seed(),
            warmup_epochs: 0,
            weight_decay: 0.0,
            trace: false,
        }
    }

    /// Checks everything that does not depend on the data.
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::config("k must be at least 1"));
        }
        if self.p == Some(0) {
            return Err(Error::config("p must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config(format!(
                "lr must be positive and finite, got {}",
                self.lr
            )));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::config("weight_decay must be non-negative"));
        }
        if self.hidden.contains(&0) {
            return Err(Error::config("hidden layer widths must be positive"));
        }
        if self.freeze_weight && !self.variant.has_weight() {
            return Err(Error::config(
                "freeze_weight needs a selector with a weight",
            ));
        }
        TemperatureSchedule::new(self.t0, self.tb, self.epochs)?;
        crate::objectives::LossConfig {
            task: self.task,
            lambda: self.lambda,
        }
        .validate()
    }

    fn optimizer_config(&self) -> OptimizerConfig {
        let base = match self.optimizer {
            OptimizerKind::Adam => OptimizerConfig::adam(),
            OptimizerKind::Sgd => OptimizerConfig::sgd(),
        };
        OptimizerConfig {
            weight_decay: self.weight_decay,
            ..base
        }
    }

    /// Fresh model for `D` input features and `outputs` decoder outputs.
    pub fn init_model(&self, d: usize, outputs: usize) -> Result<CaeModel> {
        self.validate()?;
        if self.k > d {
            return Err(Error::config(format!(
                "k = {} exceeds the number of features {}",
                self.k, d
            )));
        }
        let p = self.p.unwrap_or(d);
        let selector = SelectorParams::init(
            self.variant,
            self.k,
            d,
            p,
            self.bias,
            self.weight_init,
            self.seed,
        )?;
        let mut rng = Rng::with_stream(self.seed, DECODER_STREAM);
        let decoder = Mlp::init(self.k, &self.hidden, outputs, &mut rng)?;
        let model = CaeModel {
            selector,
            decoder,
            train_weight: !self.freeze_weight,
        };
        model.validate()?;
        Ok(model)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    /// Normalized Frobenius reconstruction error; lower is better.
    Frobenius,
    /// Top-1 accuracy; higher is better.
    Accuracy,
}

impl MetricKind {
    pub fn of(task: Task) -> Self {
        match task {
            Task::Reconstruction => MetricKind::Frobenius,
            Task::Classification => MetricKind::Accuracy,
        }
    }

    /// Whether `a` is at least as good as `b`.
    pub fn at_least_as_good(self, a: f64, b: f64) -> bool {
        match self {
            MetricKind::Frobenius => a <= b,
            MetricKind::Accuracy => a >= b,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub temperature: f64,
    pub lr: f64,
    /// Mean regularized training loss over the epoch's rows.
    pub train_loss: f64,
    /// Task loss on the validation split with discrete selection.
    pub val_loss: f64,
    pub val_metric: f64,
    pub unique_pct: f64,
    pub gjsd: f64,
    pub alpha_norm: f64,
    pub psi_norm: f64,
    /// Absent for selectors without a trainable weight.
    pub w_norm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricLog {
    pub metric: MetricKind,
    pub records: Vec<EpochRecord>,
    /// Epoch with the lowest validation loss (earliest on ties).
    pub best_epoch: usize,
    /// Test metric of the best-validation model.
    pub test_metric: f64,
    /// Discrete selection of the best-validation model.
    pub selection: Vec<usize>,
    /// Per-step update components; empty unless tracing was requested.
    pub trace: Vec<TraceRecord>,
}

impl MetricLog {
    pub fn final_record(&self) -> &EpochRecord {
        self.records
            .last()
            .expect("a finished run has at least one epoch")
    }

    pub fn best_record(&self) -> &EpochRecord {
        &self.records[self.best_epoch]
    }
}

/// Model snapshot from the best-validation epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub epoch: usize,
    pub task: Task,
    pub model: CaeModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub metric_kind: MetricKind,
    pub metric: f64,
    pub loss: f64,
    pub unique_pct: f64,
    pub indices: Vec<usize>,
}

struct SplitData {
    x: Tensor,
    labels: Option<Vec<usize>>,
}

fn split_data(ds: &Dataset, split: Split, task: Task) -> Result<SplitData> {
    let labels = ds.split_labels(split);
    if task == Task::Classification && labels.is_none() {
        return Err(Error::config("classification needs a labeled dataset"));
    }
    Ok(SplitData {
        x: ds.features(split),
        labels: if task == Task::Classification {
            labels
        } else {
            None
        },
    })
}

fn task_loss(
    tape: &mut Tape,
    task: Task,
    out: Var,
    x: Var,
    labels: Option<&[usize]>,
) -> Result<Var> {
    match (task, labels) {
        (Task::Reconstruction, _) => mse(tape, out, x),
        (Task::Classification, Some(y)) => cross_entropy(tape, out, y),
        (Task::Classification, None) => Err(Error::config("classification needs labels")),
    }
}

fn eval_split(model: &CaeModel, task: Task, data: &SplitData) -> Result<(f64, f64)> {
    let out = model.forward_eval(&data.x)?;
    let mut tape = Tape::new();
    let ov = tape.constant(out.clone());
    let xv = tape.constant(data.x.clone());
    let loss = task_loss(&mut tape, task, ov, xv, data.labels.as_deref())?;
    let loss = tape.value(loss).item();
    let metric = match task {
        Task::Reconstruction => normalized_frobenius(&data.x, &out)?,
        Task::Classification => top1_accuracy(&out, data.labels.as_deref().unwrap_or(&[]))?,
    };
    Ok((loss, metric))
}

fn output_dim(config: &TrainConfig, ds: &Dataset) -> usize {
    match config.task {
        Task::Reconstruction => ds.d(),
        Task::Classification => ds.num_classes(),
    }
}

/// Trains one model and returns its log and best-validation checkpoint.
pub fn train(config: &TrainConfig, ds: &Dataset) -> Result<(MetricLog, Checkpoint)> {
    config.validate()?;
    ds.validate_for_training()?;
    let task = config.task;
    let train_set = split_data(ds, Split::Train, task)?;
    let val_set = split_data(ds, Split::Val, task)?;
    let test_set = split_data(ds, Split::Test, task)?;
    let outputs = output_dim(config, ds);
    if task == Task::Classification && outputs < 2 {
        return Err(Error::config("classification needs at least 2 classes"));
    }
    let mut model = config.init_model(ds.d(), outputs)?;
    let shapes: Vec<Shape> = model.trainable_mut().iter().map(|t| t.shape()).collect();
    let mut optimizer = Optimizer::new(config.optimizer_config(), &shapes);
    let schedule = TemperatureSchedule::new(config.t0, config.tb, config.epochs)?;
    let mut rng = Rng::with_stream(config.seed, RUN_STREAM);
    let (k, d) = (model.selector.k(), model.selector.d());
    let n_train = train_set.x.rows();

    let mut records = Vec::with_capacity(config.epochs);
    let mut trace = Vec::new();
    let mut best: Option<(usize, f64, CaeModel)> = None;
    for epoch in 0..config.epochs {
        let temperature = schedule.temperature(epoch)?;
        let lr = lr_schedule(epoch, config.lr, config.warmup_epochs);
        let order = rng.permutation(n_train);
        let mut loss_sum = 0.0;
        for (batch, rows) in order.chunks(config.batch_size).enumerate() {
            let x = train_set.x.gather_rows(rows);
            let labels: Option<Vec<usize>> = train_set
                .labels
                .as_ref()
                .map(|y| rows.iter().map(|&i| y[i]).collect());
            let noise = gumbel_sample(&mut rng, Shape::Matrix(k, d));
            let mut tape = Tape::new();
            let bound = model.bind(&mut tape);
            let xv = tape.constant(x);
            let fwd = model.forward_with_noise(&mut tape, &bound, xv, &noise, temperature)?;
            let task_var = task_loss(&mut tape, task, fwd.output, xv, labels.as_deref())?;
            let loss = regularized_loss(&mut tape, task_var, fwd.logits, config.lambda)?;
            let value = tape.value(loss).item();
            if !value.is_finite() {
                return Err(Error::NonFinite { epoch, batch });
            }
            loss_sum += value * rows.len() as f64;
            let grads = tape.backward(loss)?;
            let grads = model.gradients(&bound, &grads);
            let before = config.trace.then(|| model.selector.clone());
            optimizer.step(&mut model.trainable_mut(), &grads, lr)?;
            if let Some(before) = before {
                let step = optimizer.steps() - 1;
                trace.push(TraceRecord::capture(
                    &before,
                    &model.selector,
                    model.train_weight,
                    step,
                    epoch,
                )?);
            }
        }

        let (val_loss, val_metric) = eval_split(&model, task, &val_set)?;
        let logits = model.selector.logits()?;
        let weight = model
            .selector
            .weight
            .as_ref()
            .filter(|_| model.train_weight);
        records.push(EpochRecord {
            epoch,
            temperature,
            lr,
            train_loss: loss_sum / n_train as f64,
            val_loss,
            val_metric,
            unique_pct: unique_percentage_of(&logits.argmax_rows()),
            gjsd: gjsd_value(&logits),
            alpha_norm: logits.frobenius_norm(),
            psi_norm: model.selector.psi.frobenius_norm(),
            w_norm: weight.map(Tensor::frobenius_norm),
        });
        let improved = match &best {
            None => true,
            Some((_, loss, _)) => val_loss < *loss,
        };
        if improved {
            best = Some((epoch, val_loss, model.clone()));
        }
    }

    let (best_epoch, _, best_model) =
        best.ok_or_else(|| Error::config("epochs must be at least 1"))?;
    let checkpoint = Checkpoint {
        epoch: best_epoch,
        task,
        model: best_model,
    };
    let test = evaluate_tensors(&checkpoint, &test_set)?;
    let log = MetricLog {
        metric: MetricKind::of(task),
        records,
        best_epoch,
        test_metric: test.metric,
        selection: test.indices,
        trace,
    };
    Ok((log, checkpoint))
}

fn evaluate_tensors(ckpt: &Checkpoint, data: &SplitData) -> Result<EvalRecord> {
    let (loss, metric) = eval_split(&ckpt.model, ckpt.task, data)?;
    let indices = ckpt.model.selector.logits()?.argmax_rows();
    Ok(EvalRecord {
        metric_kind: MetricKind::of(ckpt.task),
        metric,
        loss,
        unique_pct: unique_percentage_of(&indices),
        indices,
    })
}

/// Evaluates a checkpoint on one split with discrete selection.
pub fn evaluate(ckpt: &Checkpoint, ds: &Dataset, split: Split) -> Result<EvalRecord> {
    let d = ckpt.model.selector.d();
    if ds.d() != d {
        return Err(Error::shape(
            "evaluate",
            Shape::Matrix(ds.n(), ds.d()),
            Shape::Matrix(ds.n(), d),
        ));
    }
    if ckpt.task == Task::Classification && ds.num_classes() > ckpt.model.decoder.output_dim() {
        return Err(Error::Data(format!(
            "dataset has {} classes but the checkpoint predicts {}",
            ds.num_classes(),
            ckpt.model.decoder.output_dim()
        )));
    }
    let data = split_data(ds, split, ckpt.task)?;
    if data.x.rows() == 0 {
        return Err(Error::config(format!("{split:?} split is empty")));
    }
    evaluate_tensors(ckpt, &data)
}

/// How many times fewer epochs run `a` needs to match run `b`: `B_b`
/// divided by the 1-based epoch at which `a`'s validation metric first
/// reaches the best validation metric `b` attains in any epoch. `None`
/// when `a` never gets there.
pub fn speedup(a: &MetricLog, b: &MetricLog) -> Result<Option<f64>> {
    if a.metric != b.metric {
        return Err(Error::config(format!(
            "cannot compare {:?} against {:?}",
            a.metric, b.metric
        )));
    }
    let kind = b.metric;
    let values = b.records.iter().map(|r| r.val_metric);
    let target = match kind {
        MetricKind::Frobenius => values.reduce(f64::min),
        MetricKind::Accuracy => values.reduce(f64::max),
    }
    .ok_or_else(|| Error::config("reference log is empty"))?;
    Ok(a.records
        .iter()
        .position(|r| kind.at_least_as_good(r.val_metric, target))
        .map(|i| b.records.len() as f64 / (i + 1) as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    K,
    P,
    Variant,
    Lambda,
}

impl core::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "K" | "k" => Ok(SweepAxis::K),
            "P" | "p" => Ok(SweepAxis::P),
            "variant" => Ok(SweepAxis::Variant),
            "lambda" => Ok(SweepAxis::Lambda),
            _ => Err(Error::config(format!(
                "unknown sweep axis '{s}' (expected K, P, variant or lambda)"
            ))),
        }
    }
}

pub fn parse_variant(s: &str) -> Result<Variant> {
    match s {
        "direct" => Ok(Variant::Direct),
        "scalar_ip" => Ok(Variant::ScalarIp),
        "diag_ip" => Ok(Variant::DiagIp),
        "full_ip" => Ok(Variant::FullIp),
        _ => Err(Error::config(format!(
            "unknown variant '{s}' (expected direct, scalar_ip, diag_ip or full_ip)"
        ))),
    }
}

/// Copy of `template` with one axis set to `value`.
pub fn apply_axis(template: &TrainConfig, axis: SweepAxis, value: &str) -> Result<TrainConfig> {
    let mut cfg = template.clone();
    let bad = |what: &str| Error::config(format!("invalid {what} value '{value}'"));
    match axis {
        SweepAxis::K => cfg.k = value.parse().map_err(|_| bad("K"))?,
        SweepAxis::P => cfg.p = Some(value.parse().map_err(|_| bad("P"))?),
        SweepAxis::Variant => cfg.variant = parse_variant(value)?,
        SweepAxis::Lambda => cfg.lambda = value.parse().map_err(|_| bad("lambda"))?,
    }
    cfg.validate()?;
    Ok(cfg)
}

/// One run of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepJob {
    pub value: String,
    pub config: TrainConfig,
}

/// Expands a sweep into one job per (value, seed), values outermost.
/// Every value is validated before any job is returned.
pub fn plan_sweep(
    template: &TrainConfig,
    axis: SweepAxis,
    values: &[String],
    seeds: &[u64],
) -> Result<Vec<SweepJob>> {
    if values.is_empty() || seeds.is_empty() {
        return Err(Error::config(
            "a sweep needs at least one value and one seed",
        ));
    }
    let mut jobs = Vec::with_capacity(values.len() * seeds.len());
    for value in values {
        let cfg = apply_axis(template, axis, value)?;
        for &seed in seeds {
            jobs.push(SweepJob {
                value: value.clone(),
                config: TrainConfig {
                    seed,
                    ..cfg.clone()
                },
            });
        }
    }
    Ok(jobs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub best_epoch: usize,
    pub test_metric: f64,
    /// Validation metric of the best-validation epoch.
    pub best_val_metric: f64,
    pub final_val_metric: f64,
    pub final_unique_pct: f64,
    pub selection: Vec<usize>,
}

impl RunSummary {
    pub fn of(seed: u64, log: &MetricLog) -> Self {
        RunSummary {
            seed,
            best_epoch: log.best_epoch,
            test_metric: log.test_metric,
            best_val_metric: log.best_record().val_metric,
            final_val_metric: log.final_record().val_metric,
            final_unique_pct: log.final_record().unique_pct,
            selection: log.selection.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Some(MeanStd {
            mean,
            std: libm::sqrt(var),
        })
    }
}

/// Per-value aggregate of a sweep. Failed runs are listed with their
/// error and left out of the statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: String,
    pub runs: Vec<RunSummary>,
    pub failures: Vec<(u64, String)>,
    pub test_metric: Option<MeanStd>,
    pub final_unique_pct: Option<MeanStd>,
}

/// Groups job results (in job order) into one row per value.
pub fn summarize_sweep(jobs: &[SweepJob], results: &[Result<MetricLog>]) -> Vec<SweepRow> {
    let mut rows: Vec<SweepRow> = Vec::new();
    for (job, result) in jobs.iter().zip(results) {
        if rows.last().is_none_or(|r| r.value != job.value) {
            rows.push(SweepRow {
                value: job.value.clone(),
                runs: Vec::new(),
                failures: Vec::new(),
                test_metric: None,
                final_unique_pct: None,
            });
        }
        let row = rows.last_mut().expect("row pushed above");
        match result {
            Ok(log) => row.runs.push(RunSummary::of(job.config.seed, log)),
            Err(e) => row.failures.push((job.config.seed, e.to_string())),
        }
    }
    for row in &mut rows {
        let metric: Vec<f64> = row.runs.iter().map(|r| r.test_metric).collect();
        let up: Vec<f64> = row.runs.iter().map(|r| r.final_unique_pct).collect();
        row.test_metric = MeanStd::of(&metric);
        row.final_unique_pct = MeanStd::of(&up);
    }
    rows
}

/// Runs a sweep sequentially over `seeds`.
pub fn sweep(
    template: &TrainConfig,
    ds: &Dataset,
    axis: SweepAxis,
    values: &[String],
    seeds: &[u64],
) -> Result<(Vec<SweepRow>, Vec<Result<MetricLog>>)> {
    let jobs = plan_sweep(template, axis, values, seeds)?;
    let results: Vec<Result<MetricLog>> = jobs
        .iter()
        .map(|j| train(&j.config, ds).map(|(log, _)| log))
        .collect();
    Ok((summarize_sweep(&jobs, &results), results))
}
