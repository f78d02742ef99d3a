//! Results over seeds keyed by method, task and metric.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Prediction tasks in report order.
pub const TASKS: [&str; 4] = ["Single-y1", "Single-y2", "Double-y1", "Double-y2"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single value.
    pub sd: f64,
    pub values: Vec<f64>,
}

impl MetricSummary {
    pub fn from_values(values: Vec<f64>) -> Self {
        let n = values.len() as f64;
        let mean = if values.is_empty() { 0.0 } else { values.iter().sum::<f64>() / n };
        let sd = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        MetricSummary { mean, sd, values }
    }
}

/// method -> task -> metric -> values, one per seed in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Results {
    cells: BTreeMap<String, BTreeMap<String, BTreeMap<String, Vec<f64>>>>,
}

impl Results {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, method: &str, task: &str, metric: &str, value: f64) {
        self.cells
            .entry(method.to_string())
            .or_default()
            .entry(task.to_string())
            .or_default()
            .entry(metric.to_string())
            .or_default()
            .push(value);
    }

    pub fn values(&self, method: &str, task: &str, metric: &str) -> Option<&[f64]> {
        self.cells.get(method)?.get(task)?.get(metric).map(Vec::as_slice)
    }

    pub fn summary(&self, method: &str, task: &str, metric: &str) -> Option<MetricSummary> {
        self.values(method, task, metric)
            .map(|v| MetricSummary::from_values(v.to_vec()))
    }

    pub fn methods(&self) -> impl Iterator<Item = &str> {
        self.cells.keys().map(String::as_str)
    }

    pub fn tasks(&self, method: &str) -> Vec<&str> {
        self.cells
            .get(method)
            .map(|t| t.keys().map(String::as_str).collect())
            .unwrap_or_default()
    }

    /// Appends every cell of `other`.
    pub fn merge(&mut self, other: &Results) {
        for (m, tasks) in &other.cells {
            for (t, metrics) in tasks {
                for (k, vals) in metrics {
                    for v in vals {
                        self.record(m, t, k, *v);
                    }
                }
            }
        }
    }

    pub fn summarize(&self) -> BTreeMap<String, BTreeMap<String, BTreeMap<String, MetricSummary>>> {
        self.cells
            .iter()
            .map(|(m, tasks)| {
                let tasks = tasks
                    .iter()
                    .map(|(t, metrics)| {
                        let metrics = metrics
                            .iter()
                            .map(|(k, v)| (k.clone(), MetricSummary::from_values(v.clone())))
                            .collect();
                        (t.clone(), metrics)
                    })
                    .collect();
                (m.clone(), tasks)
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(&self.summarize())
            .map_err(|e| Error::Numeric(format!("results are not serializable: {e}")))?;
        s.push('\n');
        Ok(s)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }
}
