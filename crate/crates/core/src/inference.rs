//! Label inference for samples with missing labels: direct inference for
//! samples with one label, alternate fixed-point inference for unlabeled ones.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datahub::{PresenceMask, Sample, TaskKind};
use crate::dualtower::{DualTower, DualTowerParams, Tower};
use crate::error::{Error, Result};

/// Decision threshold for class 1; a probability of exactly 0.5 maps to 1.
pub const CLASS_THRESHOLD: f64 = 0.5;

pub fn threshold(p: f64) -> f64 {
    if p >= CLASS_THRESHOLD {
        1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InferenceConfig {
    pub y0: f64,
    /// Iteration cap `L`.
    pub max_iterations: usize,
    /// Convergence tolerance on the per-iteration change; `None` runs all
    /// `max_iterations` iterations.
    pub epsilon: Option<f64>,
}

impl InferenceConfig {
    /// `y0` of 0.5 for classification and 1.0 for regression, `L = 1000`, no
    /// tolerance.
    pub fn for_task(task: TaskKind) -> Self {
        InferenceConfig {
            y0: if task.is_classification() { 0.5 } else { 1.0 },
            max_iterations: 1000,
            epsilon: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be >= 1".into()));
        }
        if let Some(e) = self.epsilon {
            if !(e >= 0.0) {
                return Err(Error::Config(format!("epsilon must be >= 0, got {e}")));
            }
        }
        if !self.y0.is_finite() {
            return Err(Error::Config("y0 must be finite".into()));
        }
        Ok(())
    }
}

/// Iterates `(y1_hat, y2_hat)` after each full iteration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InferenceTrace {
    pub iterates: Vec<(f64, f64)>,
    /// 1-based iteration at which the change first fell below epsilon.
    pub converged_at: Option<usize>,
}

/// A predicted label: the raw output (class-1 probability for classification)
/// and, for classification, the thresholded class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub value: f64,
    pub class: Option<f64>,
}

impl Prediction {
    pub fn new(task: TaskKind, value: f64) -> Self {
        Prediction {
            value,
            class: task.is_classification().then(|| threshold(value)),
        }
    }

    /// Class for classification, raw value for regression.
    pub fn point(&self) -> f64 {
        self.class.unwrap_or(self.value)
    }
}

/// Which label a direct prediction fills in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Missing {
    Y1,
    Y2,
}

/// `y2 = f(x, y1)` for samples with only `y1`, `y1 = g(x, y2)` for samples
/// with only `y2`.
pub fn direct_infer(
    model: &DualTower,
    params: &DualTowerParams,
    sample: &Sample,
) -> Result<(Missing, Prediction)> {
    let task = model.task();
    match (sample.y1, sample.y2) {
        (Some(y1), None) => Ok((Missing::Y2, Prediction::new(task, model.f_forward(params, &sample.x, y1)?))),
        (None, Some(y2)) => Ok((Missing::Y1, Prediction::new(task, model.g_forward(params, &sample.x, y2)?))),
        _ => Err(Error::Contract(format!(
            "direct inference needs exactly one label, sample has presence {:?}",
            sample.presence().bits()
        ))),
    }
}

/// Fixed-point iteration `y2 <- f(y1); y1 <- g(y2)` from `(y0, y0)`. Stops
/// when both values change by less than epsilon in one iteration, or after
/// the cap. Returns the last iterate and the trace.
pub fn alternate_with<F, G>(mut f: F, mut g: G, config: &InferenceConfig) -> Result<(f64, f64, InferenceTrace)>
where
    F: FnMut(f64) -> Result<f64>,
    G: FnMut(f64) -> Result<f64>,
{
    config.validate()?;
    let (mut y1, mut y2) = (config.y0, config.y0);
    let mut trace = InferenceTrace {
        iterates: Vec::with_capacity(config.max_iterations.min(1024)),
        converged_at: None,
    };
    for k in 1..=config.max_iterations {
        let n2 = f(y1)?;
        let n1 = g(n2)?;
        if !(n1.is_finite() && n2.is_finite()) {
            return Err(Error::Numeric(format!("alternate inference produced a non-finite value at iteration {k}")));
        }
        let change = (n1 - y1).abs().max((n2 - y2).abs());
        y1 = n1;
        y2 = n2;
        trace.iterates.push((y1, y2));
        if let Some(eps) = config.epsilon {
            if change < eps {
                trace.converged_at = Some(k);
                break;
            }
        }
    }
    Ok((y1, y2, trace))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlternateResult {
    pub y1: Prediction,
    pub y2: Prediction,
    pub trace: InferenceTrace,
}

/// Alternate inference with the dual-tower model on one unlabeled sample.
/// Classification relays probabilities; thresholding happens only at the end.
pub fn alternate_infer(
    model: &DualTower,
    params: &DualTowerParams,
    sample: &Sample,
    config: &InferenceConfig,
) -> Result<AlternateResult> {
    if sample.presence() != PresenceMask::NONE {
        return Err(Error::Contract("alternate inference needs an unlabeled sample".into()));
    }
    let enc = model.encode(params, &sample.x)?;
    let mut f = model.bind_tower(params, Tower::Two)?;
    let mut g = model.bind_tower(params, Tower::One)?;
    f.set_encoding(&enc)?;
    g.set_encoding(&enc)?;
    let (y1, y2, trace) = alternate_with(|y1| f.eval(y1), |y2| g.eval(y2), config)?;
    let task = model.task();
    Ok(AlternateResult {
        y1: Prediction::new(task, y1),
        y2: Prediction::new(task, y2),
        trace,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePrediction {
    pub index: usize,
    pub y1: Option<Prediction>,
    pub y2: Option<Prediction>,
    pub trace: Option<InferenceTrace>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInference {
    pub predictions: Vec<SamplePrediction>,
    /// Share of unlabeled samples that converged; `None` without epsilon or
    /// unlabeled samples.
    pub converged_fraction: Option<f64>,
    /// Convergence iteration -> sample count.
    pub histogram: BTreeMap<usize, usize>,
}

impl DatasetInference {
    /// Number of predicted label values.
    pub fn label_count(&self) -> usize {
        self.predictions
            .iter()
            .map(|p| usize::from(p.y1.is_some()) + usize::from(p.y2.is_some()))
            .sum()
    }
}

/// Predicts every missing label: direct inference for semi-labeled samples,
/// alternate inference for unlabeled ones. Fully labeled samples are skipped.
/// Samples are processed in parallel; output order follows the input.
pub fn infer_dataset(
    model: &DualTower,
    params: &DualTowerParams,
    data: &[Sample],
    config: &InferenceConfig,
) -> Result<DatasetInference> {
    config.validate()?;
    let predictions: Vec<SamplePrediction> = data
        .par_iter()
        .enumerate()
        .filter(|(_, s)| s.presence() != PresenceMask::FULL)
        .map(|(index, s)| {
            if s.presence() == PresenceMask::NONE {
                let r = alternate_infer(model, params, s, config)?;
                Ok(SamplePrediction {
                    index,
                    y1: Some(r.y1),
                    y2: Some(r.y2),
                    trace: Some(r.trace),
                })
            } else {
                let (which, p) = direct_infer(model, params, s)?;
                Ok(SamplePrediction {
                    index,
                    y1: (which == Missing::Y1).then_some(p),
                    y2: (which == Missing::Y2).then_some(p),
                    trace: None,
                })
            }
        })
        .collect::<Result<_>>()?;
    let traces: Vec<&InferenceTrace> = predictions.iter().filter_map(|p| p.trace.as_ref()).collect();
    let mut histogram = BTreeMap::new();
    for t in &traces {
        if let Some(k) = t.converged_at {
            *histogram.entry(k).or_insert(0) += 1;
        }
    }
    let converged_fraction = (config.epsilon.is_some() && !traces.is_empty()).then(|| {
        traces.iter().filter(|t| t.converged_at.is_some()).count() as f64 / traces.len() as f64
    });
    Ok(DatasetInference {
        predictions,
        converged_fraction,
        histogram,
    })
}

/// Trace CSV with columns `sample_id,iteration,y1_hat,y2_hat`.
pub fn trace_csv<'a>(traces: impl IntoIterator<Item = (usize, &'a InferenceTrace)>) -> String {
    let mut out = String::from("sample_id,iteration,y1_hat,y2_hat\n");
    for (id, t) in traces {
        for (k, (a, b)) in t.iterates.iter().enumerate() {
            let _ = writeln!(out, "{id},{},{a:.17e},{b:.17e}", k + 1);
        }
    }
    out
}

pub fn write_trace_csv<'a>(
    path: impl AsRef<Path>,
    traces: impl IntoIterator<Item = (usize, &'a InferenceTrace)>,
) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, trace_csv(traces)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dualtower::ModelConfig;

    fn halving() -> impl FnMut(f64) -> Result<f64> {
        |y| Ok(0.5 * y)
    }

    #[test]
    fn contraction_stubs_decay_as_powers_of_four() {
        let cfg = InferenceConfig { y0: 1.0, max_iterations: 1000, epsilon: Some(1e-6) };
        let (y1, y2, t) = alternate_with(halving(), halving(), &cfg).unwrap();
        for (k, (a, b)) in t.iterates.iter().enumerate() {
            let k = (k + 1) as i32;
            assert!((a - 4f64.powi(-k)).abs() < 1e-12);
            assert!((b - 2.0 * 4f64.powi(-k)).abs() < 1e-12);
        }
        assert_eq!(t.converged_at, Some(12));
        assert!(y1.abs() < 1e-6 && y2.abs() < 1e-6);
    }

    #[test]
    fn identity_stubs_stay_at_initialization() {
        let cfg = InferenceConfig { y0: 0.3, max_iterations: 5, epsilon: Some(0.0) };
        let (y1, y2, t) = alternate_with(|y| Ok(y), |y| Ok(y), &cfg).unwrap();
        assert_eq!((y1, y2), (0.3, 0.3));
        assert_eq!(t.iterates, vec![(0.3, 0.3); 5]);
        assert_eq!(t.converged_at, None);
    }

    #[test]
    fn no_epsilon_runs_the_full_cap() {
        let cfg = InferenceConfig { y0: 1.0, max_iterations: 40, epsilon: None };
        let (_, _, t) = alternate_with(halving(), halving(), &cfg).unwrap();
        assert_eq!(t.iterates.len(), 40);
        assert!(t.converged_at.is_none());
    }

    #[test]
    fn defaults_by_task() {
        assert_eq!(InferenceConfig::for_task(TaskKind::BinaryClassification).y0, 0.5);
        assert_eq!(InferenceConfig::for_task(TaskKind::Regression).y0, 1.0);
        let bad = InferenceConfig { y0: 0.0, max_iterations: 0, epsilon: None };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn zeroed_tower_gives_half_and_class_one() {
        let m = DualTower::new(ModelConfig::with_defaults(TaskKind::BinaryClassification, 3, 2)).unwrap();
        let mut p = m.init_params().unwrap();
        p.zero_tower_output(Tower::Two);
        let s = Sample::new(vec![0.2, 0.1, 0.9], Some(1.0), None);
        let (which, pred) = direct_infer(&m, &p, &s).unwrap();
        assert_eq!(which, Missing::Y2);
        assert_eq!(pred.value, 0.5);
        assert_eq!(pred.class, Some(1.0));
    }

    #[test]
    fn routing_errors() {
        let m = DualTower::new(ModelConfig::with_defaults(TaskKind::Regression, 2, 2)).unwrap();
        let p = m.init_params().unwrap();
        let full = Sample::new(vec![0.0, 0.0], Some(1.0), Some(1.0));
        assert!(matches!(direct_infer(&m, &p, &full), Err(Error::Contract(_))));
        assert!(matches!(direct_infer(&m, &p, &full.unlabeled()), Err(Error::Contract(_))));
        let cfg = InferenceConfig::for_task(TaskKind::Regression);
        assert!(matches!(alternate_infer(&m, &p, &full, &cfg), Err(Error::Contract(_))));
    }

    #[test]
    fn dataset_counts_and_relay_bounds() {
        let m = DualTower::new(ModelConfig::with_defaults(TaskKind::BinaryClassification, 2, 7)).unwrap();
        let p = m.init_params().unwrap();
        let data = vec![
            Sample::new(vec![0.1, 0.2], Some(1.0), Some(0.0)),
            Sample::new(vec![0.3, 0.2], Some(1.0), None),
            Sample::new(vec![0.5, 0.9], None, Some(0.0)),
            Sample::new(vec![0.7, 0.4], None, None),
            Sample::new(vec![0.9, 0.1], None, None),
        ];
        let cfg = InferenceConfig { y0: 0.5, max_iterations: 50, epsilon: Some(1e-8) };
        let r = infer_dataset(&m, &p, &data, &cfg).unwrap();
        assert_eq!(r.predictions.len(), 4);
        assert_eq!(r.label_count(), 1 + 1 + 2 * 2);
        for sp in &r.predictions {
            if let Some(t) = &sp.trace {
                assert!(t.iterates.len() <= 50);
                assert!(t.iterates.iter().all(|(a, b)| (0.0..=1.0).contains(a) && (0.0..=1.0).contains(b)));
            }
        }
        let again = infer_dataset(&m, &p, &data, &cfg).unwrap();
        assert_eq!(r, again);
        let only_full = infer_dataset(&m, &p, &data[..1], &cfg).unwrap();
        assert!(only_full.predictions.is_empty());
        assert_eq!(only_full.converged_fraction, None);
    }

    #[test]
    fn trace_csv_layout() {
        let t = InferenceTrace { iterates: vec![(0.25, 0.5), (0.0625, 0.125)], converged_at: None };
        let csv = trace_csv([(7, &t)]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "sample_id,iteration,y1_hat,y2_hat");
        assert_eq!(lines.len(), 3);
        assert!(lines[2].starts_with("7,2,6.25"));
    }
}
