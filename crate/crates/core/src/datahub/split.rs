use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Sample;
use crate::error::{Error, Result};
use crate::rng::seeded;

/// Independently hides each `y1` with probability `rate1` and each `y2` with
/// probability `rate2`. Two uniform draws are consumed per sample regardless of
/// the rates, so the draw for sample `i` never depends on earlier outcomes.
pub fn mask_labels(samples: &[Sample], rate1: f64, rate2: f64, seed: u64) -> Result<Vec<Sample>> {
    for (name, r) in [("rate1", rate1), ("rate2", rate2)] {
        if !(0.0..=1.0).contains(&r) {
            return Err(Error::Contract(format!("{name} must lie in [0, 1], got {r}")));
        }
    }
    let mut rng = seeded(seed);
    Ok(samples
        .iter()
        .map(|s| {
            let d1: f64 = rng.gen();
            let d2: f64 = rng.gen();
            Sample::new(
                s.x.clone(),
                s.y1.filter(|_| d1 >= rate1),
                s.y2.filter(|_| d2 >= rate2),
            )
        })
        .collect())
}

/// Seeded shuffle then a 64:16:20 cut (floors on the first two boundaries,
/// remainder to test).
pub fn train_val_test_split(
    samples: &[Sample],
    seed: u64,
) -> (Vec<Sample>, Vec<Sample>, Vec<Sample>) {
    let n = samples.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seeded(seed));
    let n_train = n * 64 / 100;
    let n_val = n * 16 / 100;
    let pick = |idx: &[usize]| idx.iter().map(|&i| samples[i].clone()).collect::<Vec<_>>();
    (
        pick(&order[..n_train]),
        pick(&order[n_train..n_train + n_val]),
        pick(&order[n_train + n_val..]),
    )
}

/// Per-feature min-max scaling to `[0, 1]` fitted on one portion of the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl MinMaxScaler {
    pub fn fit(samples: &[Sample]) -> Self {
        let d = samples.first().map_or(0, |s| s.x.len());
        let mut min = vec![f64::INFINITY; d];
        let mut max = vec![f64::NEG_INFINITY; d];
        for s in samples {
            for (j, v) in s.x.iter().enumerate() {
                min[j] = min[j].min(*v);
                max[j] = max[j].max(*v);
            }
        }
        MinMaxScaler { min, max }
    }

    /// Constant features map to 0. Values outside the fitted range are not clipped.
    pub fn transform_row(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(j, v)| {
                let range = self.max[j] - self.min[j];
                if range > 0.0 {
                    (v - self.min[j]) / range
                } else {
                    0.0
                }
            })
            .collect()
    }

    pub fn transform(&self, samples: &[Sample]) -> Vec<Sample> {
        samples
            .iter()
            .map(|s| Sample::new(self.transform_row(&s.x), s.y1, s.y2))
            .collect()
    }
}
