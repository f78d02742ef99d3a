use serde::{Deserialize, Serialize};

use super::graph::{Graph, Var};
use crate::error::{Error, Result};

/// Floor applied inside every log-probability.
pub const LOG_FLOOR: f64 = 1e-12;

/// Per-class loss weights for binary labels (positive = class 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub positive: f64,
    pub negative: f64,
}

impl ClassWeights {
    pub fn of(&self, label: usize) -> f64 {
        if label == 1 {
            self.positive
        } else {
            self.negative
        }
    }
}

/// Summed weighted cross entropy over the rows of `prob`:
/// `sum_i -w(label_i) * ln(max(prob[i, label_i], 1e-12))`.
///
/// Every row of `prob` must be a distribution (non-negative, sums to 1 within 1e-6).
pub fn cross_entropy(
    graph: &mut Graph,
    prob: Var,
    labels: &[usize],
    class_weights: Option<ClassWeights>,
) -> Result<Var> {
    let pv = graph.value(prob);
    for r in 0..pv.rows() {
        let row = pv.row(r);
        let s: f64 = row.iter().sum();
        if row.iter().any(|v| *v < 0.0 || !v.is_finite()) || (s - 1.0).abs() > 1e-6 {
            return Err(Error::Contract(format!(
                "cross entropy row {r} is not a distribution: {row:?}"
            )));
        }
    }
    let picked = graph.pick(prob, labels)?;
    let logp = graph.ln_clamped(picked, LOG_FLOOR);
    let weights = labels
        .iter()
        .map(|&l| -class_weights.map_or(1.0, |w| w.of(l)))
        .collect();
    let weighted = graph.weighted(logp, weights)?;
    Ok(graph.sum(weighted))
}

/// `[n, 1]` class-1 probabilities to `[n, 2]` distributions `[1 - p, p]`.
pub fn binary_distribution(graph: &mut Graph, p: Var) -> Result<Var> {
    let q = graph.affine(p, -1.0, 1.0);
    graph.concat(q, p)
}

/// `sum((a - b)^2)` over all elements.
pub fn sum_squared_error(graph: &mut Graph, a: Var, b: Var) -> Result<Var> {
    let d = graph.sub(a, b)?;
    let sq = graph.square(d);
    Ok(graph.sum(sq))
}

/// Mean of squared elementwise differences.
pub fn mse(graph: &mut Graph, a: Var, b: Var) -> Result<Var> {
    let n = graph.value(a).len();
    let sse = sum_squared_error(graph, a, b)?;
    Ok(if n == 0 { sse } else { graph.scale(sse, 1.0 / n as f64) })
}
