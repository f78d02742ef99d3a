//! Experiment protocol: split, scale and mask the data per seed, fit the
//! requested methods, and evaluate single- and double-label prediction on
//! held-out fully labeled samples.

mod config;

pub use config::{
    DataConfig, ExperimentConfig, InferenceOverrides, Method, MissingConfig, ModelOverrides,
    Preset, PresetName, Resolved, SweepConfig, TraceConfig, TrainOverrides,
    DEFAULT_LEARNING_RATE,
};

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::baselines::{baseline_fit, BaselinePredictor};
use crate::datahub::{
    gen_synthetic_classification, gen_synthetic_regression, load_csv, mask_labels,
    train_val_test_split, validate, MinMaxScaler, PresenceMask, Sample, TaskKind,
};
use crate::dualtower::{
    save_dual_tower, save_multitask, DualTower, DualTowerParams, ModelConfig, MultiTaskModel,
    MultiTaskParams,
};
use crate::error::{Error, Result};
use crate::evalkit::{classification_metrics, mape, Results, TASKS};
use crate::inference::{
    alternate_infer, direct_infer, InferenceConfig, InferenceTrace, Missing,
    Prediction,
};
use crate::rng::substream_seed;
use crate::training::{pretrain_multitask, train, LossWeights, TrainConfig, TrainHistory};

/// Anything that fills in missing labels. Implementations only ever see the
/// labels left visible in the sample they are given.
pub trait Predictor: Sync {
    fn predict(&self, sample: &Sample) -> Result<(Option<Prediction>, Option<Prediction>)>;
}

impl Predictor for BaselinePredictor {
    fn predict(&self, sample: &Sample) -> Result<(Option<Prediction>, Option<Prediction>)> {
        BaselinePredictor::predict(self, sample)
    }
}

/// Trained dual-tower model with its inference settings.
#[derive(Debug, Clone)]
pub struct DllPredictor {
    pub model: DualTower,
    pub params: DualTowerParams,
    pub inference: InferenceConfig,
}

impl Predictor for DllPredictor {
    fn predict(&self, sample: &Sample) -> Result<(Option<Prediction>, Option<Prediction>)> {
        match sample.presence() {
            PresenceMask::NONE => {
                let r = alternate_infer(&self.model, &self.params, sample, &self.inference)?;
                Ok((Some(r.y1), Some(r.y2)))
            }
            PresenceMask::FULL => Err(Error::Contract("nothing to predict".into())),
            _ => {
                let (which, p) = direct_infer(&self.model, &self.params, sample)?;
                Ok(match which {
                    Missing::Y1 => (Some(p), None),
                    Missing::Y2 => (None, Some(p)),
                })
            }
        }
    }
}

/// The marginal model alone: both labels from `x`, visible labels ignored.
#[derive(Debug, Clone)]
pub struct MarginalPredictor {
    pub model: MultiTaskModel,
    pub params: MultiTaskParams,
}

impl Predictor for MarginalPredictor {
    fn predict(&self, sample: &Sample) -> Result<(Option<Prediction>, Option<Prediction>)> {
        if sample.presence() == PresenceMask::FULL {
            return Err(Error::Contract("nothing to predict".into()));
        }
        let task = self.model.config().task;
        let (a, b) = self.model.m_forward(&self.params, &sample.x)?;
        Ok((
            sample.y1.is_none().then(|| Prediction::new(task, a)),
            sample.y2.is_none().then(|| Prediction::new(task, b)),
        ))
    }
}

/// One seed's data after splitting, scaling and masking.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedData {
    pub train: Vec<Sample>,
    pub val: Vec<Sample>,
    pub test: Vec<Sample>,
    pub d: usize,
}

/// Loads or generates the dataset for `seed`.
pub fn load_dataset(config: &ExperimentConfig, seed: u64) -> Result<Vec<Sample>> {
    let task = config.task();
    let data = match &config.data {
        DataConfig::Synthetic { n, d, seed: fixed } => {
            let s = fixed.unwrap_or_else(|| substream_seed(seed, "data"));
            match task {
                TaskKind::Regression => gen_synthetic_regression(*n, *d, s)?.samples,
                TaskKind::BinaryClassification => gen_synthetic_classification(*n, *d, s)?.samples,
            }
        }
        DataConfig::Csv { path } => load_csv(path, task)?,
    };
    validate(&data, task)?;
    Ok(data)
}

/// Splits 64:16:20, fits min-max scaling on the training features, and masks
/// training labels at the given rates.
pub fn prepare(config: &ExperimentConfig, seed: u64, rate1: f64, rate2: f64) -> Result<PreparedData> {
    let data = load_dataset(config, seed)?;
    let d = data[0].x.len();
    let (train, val, test) = train_val_test_split(&data, substream_seed(seed, "split"));
    let scaler = MinMaxScaler::fit(&train);
    let train = mask_labels(&scaler.transform(&train), rate1, rate2, substream_seed(seed, "mask"))?;
    Ok(PreparedData {
        train,
        val: scaler.transform(&val),
        test: scaler.transform(&test),
        d,
    })
}

/// A fitted dual-tower run.
#[derive(Debug, Clone)]
pub struct DllRun {
    pub config: ModelConfig,
    pub predictor: DllPredictor,
    pub history: TrainHistory,
    pub marginal: Option<MarginalPredictor>,
}

fn method_seeds(seed: u64, method: &str) -> (u64, u64) {
    (
        substream_seed(seed, &format!("model/{method}")),
        substream_seed(seed, &format!("train/{method}")),
    )
}

/// Pretrains the marginal model when `weights` or `force` need it, then trains
/// the dual-tower model from the `DLL` init stream.
pub fn fit_dll(
    config: &ExperimentConfig,
    data: &PreparedData,
    seed: u64,
    weights: LossWeights,
    force_marginal: bool,
) -> Result<DllRun> {
    let r = config.resolve()?;
    let (model_seed, train_seed) = method_seeds(seed, "DLL");
    let mc = config.model_config(data.d, model_seed)?;
    let tc = TrainConfig {
        weights,
        seed: train_seed,
        ..r.train
    };
    let model = DualTower::new(mc.clone())?;
    let marginal = if weights.lambda_d > 0.0 || force_marginal {
        let mt = MultiTaskModel::marginal(&mc)?;
        let mut mtp = mt.init_params("marginal")?;
        pretrain_multitask(&mt, &data.train, &mut mtp, &tc)?;
        Some(MarginalPredictor {
            model: mt,
            params: mtp,
        })
    } else {
        None
    };
    let mut params = model.init_params()?;
    let history = train(
        &model,
        &data.train,
        &mut params,
        marginal.as_ref().map(|m| (&m.model, &m.params)),
        &tc,
    )?;
    Ok(DllRun {
        config: mc,
        predictor: DllPredictor {
            model,
            params,
            inference: r.inference,
        },
        history,
        marginal,
    })
}

pub fn fit_baseline(
    config: &ExperimentConfig,
    data: &PreparedData,
    seed: u64,
    method: Method,
) -> Result<BaselinePredictor> {
    let kind = method
        .baseline()
        .ok_or_else(|| Error::Contract("DLL is not a baseline".into()))?;
    let r = config.resolve()?;
    let (model_seed, train_seed) = method_seeds(seed, kind.name());
    let mc = config.model_config(data.d, model_seed)?;
    let tc = TrainConfig {
        seed: train_seed,
        ..r.train
    };
    baseline_fit(kind, &data.train, &mc, &tc)
}

/// Metric names for a task kind.
pub fn metric_names(task: TaskKind) -> &'static [&'static str] {
    match task {
        TaskKind::BinaryClassification => &["accuracy", "precision", "recall", "f1"],
        TaskKind::Regression => &["mape"],
    }
}

fn metrics(task: TaskKind, pred: &[Prediction], truth: &[f64]) -> Result<Vec<(&'static str, f64)>> {
    match task {
        TaskKind::BinaryClassification => {
            let p: Vec<f64> = pred.iter().map(Prediction::point).collect();
            let m = classification_metrics(&p, truth)?;
            Ok(vec![
                ("accuracy", m.accuracy),
                ("precision", m.precision),
                ("recall", m.recall),
                ("f1", m.f1),
            ])
        }
        TaskKind::Regression => {
            let p: Vec<f64> = pred.iter().map(|p| p.value).collect();
            Ok(vec![("mape", mape(&p, truth)?)])
        }
    }
}

/// Evaluates the four prediction tasks on the fully labeled samples of
/// `test`. Single-label tasks reveal the partner label; double-label tasks
/// reveal neither. Returns `(task, metric, value)` rows in task order.
pub fn evaluate(
    predictor: &dyn Predictor,
    test: &[Sample],
    task: TaskKind,
) -> Result<Vec<(&'static str, &'static str, f64)>> {
    let full: Vec<&Sample> = test.iter().filter(|s| s.presence() == PresenceMask::FULL).collect();
    if full.is_empty() {
        return Err(Error::Config("the test split has no fully labeled samples".into()));
    }
    type Row = (Prediction, Prediction, Prediction, Prediction);
    let rows: Vec<Row> = full
        .par_iter()
        .map(|s| {
            let single1 = predictor.predict(&s.with_visible(false, true))?.0;
            let single2 = predictor.predict(&s.with_visible(true, false))?.1;
            let (d1, d2) = predictor.predict(&s.unlabeled())?;
            let missing = || Error::Contract("predictor skipped a missing label".into());
            Ok((
                single1.ok_or_else(missing)?,
                single2.ok_or_else(missing)?,
                d1.ok_or_else(missing)?,
                d2.ok_or_else(missing)?,
            ))
        })
        .collect::<Result<_>>()?;
    let y1: Vec<f64> = full.iter().map(|s| s.y1.expect("full")).collect();
    let y2: Vec<f64> = full.iter().map(|s| s.y2.expect("full")).collect();
    let columns: [(Vec<Prediction>, &Vec<f64>); 4] = [
        (rows.iter().map(|r| r.0).collect(), &y1),
        (rows.iter().map(|r| r.1).collect(), &y2),
        (rows.iter().map(|r| r.2).collect(), &y1),
        (rows.iter().map(|r| r.3).collect(), &y2),
    ];
    let mut out = Vec::new();
    for (name, (pred, truth)) in TASKS.iter().zip(columns) {
        for (metric, value) in metrics(task, &pred, truth)? {
            if !value.is_finite() {
                return Err(Error::Numeric(format!("{name} {metric} is not finite")));
            }
            out.push((*name, metric, value));
        }
    }
    Ok(out)
}

/// Everything a `run` produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub results: Results,
    /// DLL training history per seed.
    pub histories: Vec<(u64, TrainHistory)>,
    /// DLL models per seed, kept for checkpointing.
    pub models: Vec<(u64, DllRun)>,
}

/// Runs every method over every seed at the configured missing rates.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunOutput> {
    run_at_rates(config, config.missing.rate1, config.missing.rate2)
}

fn run_at_rates(config: &ExperimentConfig, rate1: f64, rate2: f64) -> Result<RunOutput> {
    config.validate()?;
    let task = config.task();
    let r = config.resolve()?;
    let mut out = RunOutput {
        results: Results::new(),
        histories: Vec::new(),
        models: Vec::new(),
    };
    for &seed in &config.seeds {
        let data = prepare(config, seed, rate1, rate2)?;
        for &method in &config.methods {
            let rows = if method == Method::Dll {
                let run = fit_dll(config, &data, seed, r.train.weights, false)?;
                let rows = evaluate(&run.predictor, &data.test, task)?;
                out.histories.push((seed, run.history.clone()));
                out.models.push((seed, run));
                rows
            } else {
                let p = fit_baseline(config, &data, seed, method)?;
                evaluate(&p, &data.test, task)?
            };
            for (t, m, v) in rows {
                out.results.record(method.name(), t, m, v);
            }
        }
    }
    Ok(out)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write(path: PathBuf, text: &str) -> Result<()> {
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

/// Writes `results.json`, `history.csv` (first seed), per-seed histories and
/// checkpoints under `dir`.
pub fn write_run(dir: impl AsRef<Path>, out: &RunOutput) -> Result<()> {
    let dir = dir.as_ref();
    create_dir(dir)?;
    out.results.write_json(dir.join("results.json"))?;
    if let Some((_, h)) = out.histories.first() {
        h.write_csv(dir.join("history.csv"))?;
    }
    for (seed, h) in &out.histories {
        h.write_csv(dir.join(format!("history-seed-{seed}.csv")))?;
    }
    if !out.models.is_empty() {
        let ck = dir.join("checkpoints");
        create_dir(&ck)?;
        for (seed, run) in &out.models {
            save_dual_tower(ck.join(format!("dll-seed-{seed}.json")), &run.config, &run.predictor.params)?;
            if let Some(m) = &run.marginal {
                save_multitask(ck.join(format!("marginal-seed-{seed}.json")), m.model.config(), &m.params)?;
            }
        }
    }
    Ok(())
}

fn label_of(task: &str) -> &'static str {
    if task.ends_with("y1") {
        "y1"
    } else {
        "y2"
    }
}

/// Long-format sweep table.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutput {
    /// `(rate, results)` in sweep order.
    pub per_rate: Vec<(f64, Results)>,
}

impl SweepOutput {
    /// CSV with columns `rate,method,task,label,seed,metric,value`.
    pub fn to_csv(&self, seeds: &[u64]) -> String {
        let mut s = String::from("rate,method,task,label,seed,metric,value\n");
        for (rate, res) in &self.per_rate {
            for method in res.methods() {
                for task in res.tasks(method) {
                    let summary = res.summarize();
                    for (metric, sm) in &summary[method][task] {
                        for (seed, v) in seeds.iter().zip(&sm.values) {
                            let _ = writeln!(
                                s,
                                "{rate},{method},{task},{},{seed},{metric},{v}",
                                label_of(task)
                            );
                        }
                    }
                }
            }
        }
        s
    }
}

/// Runs the experiment once per rate with both labels masked at that rate.
pub fn sweep_missing_rates(config: &ExperimentConfig, rates: &[f64]) -> Result<SweepOutput> {
    if let Some(r) = rates.iter().find(|r| !(0.0..=1.0).contains(*r)) {
        return Err(Error::Config(format!("sweep rate {r} outside [0, 1]")));
    }
    let per_rate = rates
        .iter()
        .map(|&rate| Ok((rate, run_at_rates(config, rate, rate)?.results)))
        .collect::<Result<_>>()?;
    Ok(SweepOutput { per_rate })
}

/// Training-mode stacks compared by [`ablation`], in order.
pub const STACKS: [&str; 4] = ["f", "a", "a+b", "a+b+c"];

/// Loss weights realizing each stack on top of the configured weights.
pub fn stack_weights(stack: &str, full: LossWeights) -> Option<LossWeights> {
    match stack {
        "a" => Some(LossWeights {
            lambda11: 0.0,
            lambda22: 0.0,
            lambda_d: 0.0,
            ..full
        }),
        "a+b" => Some(LossWeights {
            lambda_d: 0.0,
            ..full
        }),
        "a+b+c" => Some(full),
        _ => None,
    }
}

/// Evaluates the marginal model alone (`f`) and the cumulative stacks `a`,
/// `a+b`, `a+b+c` on the same splits. Needs a classification task with a
/// positive duality weight.
pub fn ablation(config: &ExperimentConfig) -> Result<Results> {
    config.validate()?;
    let task = config.task();
    let r = config.resolve()?;
    if !task.is_classification() || r.train.weights.lambda_d <= 0.0 {
        return Err(Error::Config(
            "ablation needs a classification preset with lambda_d > 0".into(),
        ));
    }
    let mut results = Results::new();
    for &seed in &config.seeds {
        let data = prepare(config, seed, config.missing.rate1, config.missing.rate2)?;
        for stack in STACKS {
            let rows = match stack_weights(stack, r.train.weights) {
                None => {
                    let run = fit_dll(config, &data, seed, LossWeights::uniform(0.0), true)?;
                    let m = run.marginal.expect("forced");
                    evaluate(&m, &data.test, task)?
                }
                Some(w) => {
                    let run = fit_dll(config, &data, seed, w, false)?;
                    evaluate(&run.predictor, &data.test, task)?
                }
            };
            for (t, m, v) in rows {
                results.record(stack, t, m, v);
            }
        }
    }
    Ok(results)
}

/// CSV with columns `stack,task,seed,metric,value`.
pub fn ablation_csv(results: &Results, seeds: &[u64]) -> String {
    let mut s = String::from("stack,task,seed,metric,value\n");
    let summary = results.summarize();
    for stack in STACKS {
        let Some(tasks) = summary.get(stack) else { continue };
        for (task, metrics) in tasks {
            for (metric, sm) in metrics {
                for (seed, v) in seeds.iter().zip(&sm.values) {
                    let _ = writeln!(s, "{stack},{task},{seed},{metric},{v}");
                }
            }
        }
    }
    s
}

/// First 1-based iteration whose change from the previous iterate (the
/// initialization for iteration 1) is below `epsilon` in both labels.
pub fn first_converged(trace: &InferenceTrace, y0: f64, epsilon: f64) -> Option<usize> {
    let mut prev = (y0, y0);
    for (k, &(a, b)) in trace.iterates.iter().enumerate() {
        if (a - prev.0).abs().max((b - prev.1).abs()) < epsilon {
            return Some(k + 1);
        }
        prev = (a, b);
    }
    None
}

/// Per-iteration behaviour of alternate inference on unlabeled test samples.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub task: TaskKind,
    /// `(iteration, metric for y1, metric for y2)` for iterations `1..=L`.
    pub per_iteration: Vec<(usize, f64, f64)>,
    /// Convergence iteration per sample at the trace tolerance.
    pub converged_at: Vec<Option<usize>>,
    pub histogram: BTreeMap<usize, usize>,
    /// Full-length traces, one per evaluated sample, in test order.
    pub traces: Vec<InferenceTrace>,
    pub history: TrainHistory,
    pub epsilon: f64,
}

impl ConvergenceReport {
    pub fn metric_name(&self) -> &'static str {
        if self.task.is_classification() {
            "f1"
        } else {
            "mape"
        }
    }

    pub fn converged_fraction_within(&self, iterations: usize) -> f64 {
        let n = self.converged_at.len().max(1) as f64;
        self.converged_at
            .iter()
            .filter(|c| c.is_some_and(|k| k <= iterations))
            .count() as f64
            / n
    }

    pub fn median_convergence(&self) -> Option<usize> {
        let mut ks: Vec<usize> = self.converged_at.iter().map(|c| c.unwrap_or(usize::MAX)).collect();
        ks.sort_unstable();
        ks.get(ks.len() / 2).copied().filter(|k| *k != usize::MAX)
    }

    /// `iteration,<metric>_y1,<metric>_y2`.
    pub fn metrics_csv(&self) -> String {
        let m = self.metric_name();
        let mut s = format!("iteration,{m}_y1,{m}_y2\n");
        for (k, a, b) in &self.per_iteration {
            let _ = writeln!(s, "{k},{a},{b}");
        }
        s
    }

    /// `iteration,count`, plus a `none` row for samples that never converged.
    pub fn histogram_csv(&self) -> String {
        let mut s = String::from("iteration,count\n");
        for (k, c) in &self.histogram {
            let _ = writeln!(s, "{k},{c}");
        }
        let never = self.converged_at.iter().filter(|c| c.is_none()).count();
        let _ = writeln!(s, "none,{never}");
        s
    }
}

/// Trains DLL on the first seed and traces alternate inference for every
/// test sample with both labels hidden, for all `L` iterations.
pub fn convergence_report(config: &ExperimentConfig) -> Result<ConvergenceReport> {
    config.validate()?;
    let r = config.resolve()?;
    let seed = config.seeds[0];
    let data = prepare(config, seed, config.missing.rate1, config.missing.rate2)?;
    let run = fit_dll(config, &data, seed, r.train.weights, false)?;
    let full: Vec<&Sample> = data.test.iter().filter(|s| s.presence() == PresenceMask::FULL).collect();
    let inference = InferenceConfig {
        epsilon: None,
        ..r.inference
    };
    convergence_of(&run.predictor.model, &run.predictor.params, &full, &inference, config.trace.epsilon, run.history)
}

/// Traces alternate inference on `samples` with their labels hidden.
pub fn convergence_of(
    model: &DualTower,
    params: &DualTowerParams,
    samples: &[&Sample],
    inference: &InferenceConfig,
    epsilon: f64,
    history: TrainHistory,
) -> Result<ConvergenceReport> {
    let task = model.task();
    let full = InferenceConfig {
        epsilon: None,
        ..*inference
    };
    let traces: Vec<InferenceTrace> = samples
        .par_iter()
        .map(|s| Ok(alternate_infer(model, params, &s.unlabeled(), &full)?.trace))
        .collect::<Result<_>>()?;
    let y1: Vec<f64> = samples.iter().map(|s| s.y1.expect("labeled")).collect();
    let y2: Vec<f64> = samples.iter().map(|s| s.y2.expect("labeled")).collect();
    let mut per_iteration = Vec::with_capacity(full.max_iterations);
    if !samples.is_empty() {
        for k in 0..full.max_iterations {
            let p1: Vec<Prediction> = traces.iter().map(|t| Prediction::new(task, t.iterates[k].0)).collect();
            let p2: Vec<Prediction> = traces.iter().map(|t| Prediction::new(task, t.iterates[k].1)).collect();
            let metric = |p: &[Prediction], t: &[f64]| -> Result<f64> {
                let m = metrics(task, p, t)?;
                Ok(if task.is_classification() { m[3].1 } else { m[0].1 })
            };
            per_iteration.push((k + 1, metric(&p1, &y1)?, metric(&p2, &y2)?));
        }
    }
    let converged_at: Vec<Option<usize>> =
        traces.iter().map(|t| first_converged(t, full.y0, epsilon)).collect();
    let mut histogram = BTreeMap::new();
    for k in converged_at.iter().flatten() {
        *histogram.entry(*k).or_insert(0) += 1;
    }
    Ok(ConvergenceReport {
        task,
        per_iteration,
        converged_at,
        histogram,
        traces,
        history,
        epsilon,
    })
}

/// Writes `trace.csv` (the first `max_samples` samples), `convergence.csv`,
/// `histogram.csv` and `history.csv`.
pub fn write_convergence(dir: impl AsRef<Path>, report: &ConvergenceReport, max_samples: usize) -> Result<()> {
    let dir = dir.as_ref();
    create_dir(dir)?;
    crate::inference::write_trace_csv(
        dir.join("trace.csv"),
        report.traces.iter().take(max_samples).enumerate(),
    )?;
    write(dir.join("convergence.csv"), &report.metrics_csv())?;
    write(dir.join("histogram.csv"), &report.histogram_csv())?;
    report.history.write_csv(dir.join("history.csv"))
}

/// Writes the configured synthetic dataset for the first seed to `data.csv`.
pub fn gen_data(config: &ExperimentConfig, dir: impl AsRef<Path>) -> Result<PathBuf> {
    config.validate()?;
    let dir = dir.as_ref();
    create_dir(dir)?;
    let data = load_dataset(config, config.seeds[0])?;
    let path = dir.join("data.csv");
    crate::datahub::write_csv(&path, &data)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn small(preset: PresetName) -> ExperimentConfig {
        let mut c = ExperimentConfig::from_preset(preset);
        c.data = DataConfig::Synthetic { n: 120, d: 3, seed: None };
        c.train.epochs = Some(2);
        c.inference.max_iterations = Some(20);
        c
    }

    #[test]
    fn run_reports_four_tasks_per_method() {
        let mut c = small(PresetName::Higgs);
        c.methods = vec![Method::Dll, Method::Id];
        let out = run_experiment(&c).unwrap();
        for m in ["DLL", "ID"] {
            assert_eq!(out.results.tasks(m), {
                let mut t = TASKS.to_vec();
                t.sort();
                t
            });
        }
        assert_eq!(out.histories.len(), 1);
    }

    #[test]
    fn runs_are_reproducible() {
        let mut c = small(PresetName::Tox21);
        c.seeds = vec![3, 4];
        let a = run_experiment(&c).unwrap().results.to_json().unwrap();
        let b = run_experiment(&c).unwrap().results.to_json().unwrap();
        assert_eq!(a, b);
    }

    struct Spy(AtomicUsize);

    impl Predictor for Spy {
        fn predict(&self, s: &Sample) -> Result<(Option<Prediction>, Option<Prediction>)> {
            if s.presence() == PresenceMask::NONE {
                self.0.fetch_add(1, Ordering::SeqCst);
            }
            let p = Prediction::new(TaskKind::Regression, 1.0);
            Ok((s.y1.is_none().then_some(p), s.y2.is_none().then_some(p)))
        }
    }

    #[test]
    fn double_label_tasks_hide_both_labels() {
        let test: Vec<Sample> = (1..=5).map(|i| Sample::new(vec![0.0], Some(i as f64), Some(2.0))).collect();
        let spy = Spy(AtomicUsize::new(0));
        let rows = evaluate(&spy, &test, TaskKind::Regression).unwrap();
        assert_eq!(spy.0.load(Ordering::SeqCst), 5);
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[1], ("Single-y2", "mape", 0.5));
    }

    #[test]
    fn sweep_csv_row_count() {
        let mut c = small(PresetName::Higgs);
        c.seeds = vec![1, 2];
        let s = sweep_missing_rates(&c, &[0.0, 0.5]).unwrap();
        let csv = s.to_csv(&c.seeds);
        assert_eq!(csv.lines().count(), 1 + 2 * 4 * 2);
        assert!(csv.lines().nth(1).unwrap().starts_with("0,DLL,Double-y1,y1,1,mape,"));
    }

    #[test]
    fn ablation_needs_classification() {
        assert!(matches!(ablation(&small(PresetName::Higgs)), Err(Error::Config(_))));
        let r = ablation(&small(PresetName::Tox21)).unwrap();
        assert_eq!(r.methods().count(), 4);
        let csv = ablation_csv(&r, &[0]);
        assert_eq!(csv.lines().count(), 1 + 4 * 4 * 4);
    }

    #[test]
    fn stack_a_is_supervision_only() {
        let w = Preset::get(PresetName::Tox21).weights;
        let a = stack_weights("a", w).unwrap();
        assert_eq!((a.lambda11, a.lambda22, a.lambda_d), (0.0, 0.0, 0.0));
        assert_eq!((a.lambda12, a.lambda21), (1.0, 2.0));
        assert_eq!(stack_weights("a+b+c", w), Some(w));
        assert_eq!(stack_weights("f", w), None);
    }

    #[test]
    fn convergence_matches_early_stopping() {
        let c = small(PresetName::Higgs);
        let rep = convergence_report(&c).unwrap();
        assert_eq!(rep.per_iteration.len(), 20);
        assert!(rep.traces.iter().all(|t| t.iterates.len() == 20));
        let data = prepare(&c, 0, 0.3, 0.3).unwrap();
        let run = fit_dll(&c, &data, 0, c.resolve().unwrap().train.weights, false).unwrap();
        let stopping = InferenceConfig { y0: 1.0, max_iterations: 20, epsilon: Some(rep.epsilon) };
        for (s, k) in data.test.iter().zip(&rep.converged_at) {
            let t = alternate_infer(&run.predictor.model, &run.predictor.params, &s.unlabeled(), &stopping)
                .unwrap()
                .trace;
            assert_eq!(t.converged_at, *k);
        }
        assert!(rep.histogram_csv().starts_with("iteration,count\n"));
    }
}
