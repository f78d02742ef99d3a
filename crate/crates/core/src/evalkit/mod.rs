//! Metrics, the combined empirical risk over presence patterns, and result
//! aggregation over seeds.

mod results;

pub use results::{MetricSummary, Results, TASKS};

use serde::{Deserialize, Serialize};

use crate::datahub::{PresenceMask, Sample, TaskKind};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Positive class is 1. Undefined precision, recall or F1 are reported as 0.
pub fn classification_metrics(predicted: &[f64], truth: &[f64]) -> Result<ClassificationMetrics> {
    if predicted.len() != truth.len() {
        return Err(Error::Contract(format!(
            "{} predictions for {} labels",
            predicted.len(),
            truth.len()
        )));
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0usize, 0usize, 0usize, 0usize);
    for (&p, &t) in predicted.iter().zip(truth) {
        for v in [p, t] {
            if v != 0.0 && v != 1.0 {
                return Err(Error::Contract(format!("binary metrics need labels 0 or 1, got {v}")));
            }
        }
        match (p == 1.0, t == 1.0) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(ClassificationMetrics {
        accuracy: ratio(tp + tn, tp + fp + fn_ + tn),
        precision,
        recall,
        f1,
    })
}

/// Mean of `|true - pred| / |true|`.
pub fn mape(predicted: &[f64], truth: &[f64]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::Contract(format!(
            "{} predictions for {} targets",
            predicted.len(),
            truth.len()
        )));
    }
    if predicted.is_empty() {
        return Err(Error::Contract("MAPE of an empty set".into()));
    }
    let mut sum = 0.0;
    for (i, (&p, &t)) in predicted.iter().zip(truth).enumerate() {
        if t == 0.0 {
            return Err(Error::Contract(format!("MAPE undefined: true value at {i} is zero")));
        }
        sum += (t - p).abs() / t.abs();
    }
    Ok(sum / predicted.len() as f64)
}

/// Spearman rank correlation with average ranks for ties. `None` when either
/// side is constant or the lengths differ or are below 2.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma).powi(2);
        vb += (y - mb).powi(2);
    }
    (va > 0.0 && vb > 0.0).then(|| cov / (va * vb).sqrt())
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

/// Coefficients of the four risk terms: supervised `f`, supervised `g`,
/// round trip of y1, round trip of y2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskWeights {
    pub alpha: [f64; 4],
}

impl RiskWeights {
    pub fn new(alpha: [f64; 4]) -> Result<Self> {
        let w = RiskWeights { alpha };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if self.alpha.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return Err(Error::Contract(format!("alpha entries must lie in [0, 1]: {:?}", self.alpha)));
        }
        let s: f64 = self.alpha.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::Contract(format!("alpha must sum to 1, sums to {s}")));
        }
        Ok(())
    }
}

/// Per-sample loss clipped to `[0, 1]`: cross entropy on the class-1
/// probability for classification, squared error for regression.
pub fn clipped_loss(task: TaskKind, pred: f64, target: f64) -> f64 {
    let l = match task {
        TaskKind::BinaryClassification => {
            let p = if target >= 0.5 { pred } else { 1.0 - pred };
            -p.max(crate::diffcore::LOG_FLOOR).ln()
        }
        TaskKind::Regression => (pred - target).powi(2),
    };
    l.clamp(0.0, 1.0)
}

/// Empirical combined risk
/// `(1/n) sum_i [a1 u1u2 l2(f(x,y1),y2) + a2 u1u2 l1(g(x,y2),y1)
///  + a3 u1 l1(g(x,f(x,y1)),y1) + a4 u2 l2(f(x,g(x,y2)),y2)]` with clipped losses.
pub fn empirical_risk<F, G>(
    task: TaskKind,
    mut f: F,
    mut g: G,
    data: &[Sample],
    weights: &RiskWeights,
) -> Result<f64>
where
    F: FnMut(&[f64], f64) -> Result<f64>,
    G: FnMut(&[f64], f64) -> Result<f64>,
{
    weights.validate()?;
    if data.is_empty() {
        return Ok(0.0);
    }
    let a = weights.alpha;
    let mut total = 0.0;
    for s in data {
        let u = s.presence();
        if u == PresenceMask::FULL {
            let (y1, y2) = (s.y1.expect("present"), s.y2.expect("present"));
            if a[0] > 0.0 {
                total += a[0] * clipped_loss(task, f(&s.x, y1)?, y2);
            }
            if a[1] > 0.0 {
                total += a[1] * clipped_loss(task, g(&s.x, y2)?, y1);
            }
        }
        if let (Some(y1), true) = (s.y1, a[2] > 0.0) {
            let y2_hat = f(&s.x, y1)?;
            total += a[2] * clipped_loss(task, g(&s.x, y2_hat)?, y1);
        }
        if let (Some(y2), true) = (s.y2, a[3] > 0.0) {
            let y1_hat = g(&s.x, y2)?;
            total += a[3] * clipped_loss(task, f(&s.x, y1_hat)?, y2);
        }
    }
    Ok(total / data.len() as f64)
}
