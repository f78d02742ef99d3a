//! Samples, label presence, dataset partitioning and data sources.

mod csv_io;
mod split;
mod synthetic;

use serde::{Deserialize, Serialize};

pub use csv_io::{load_csv, write_csv};
pub use split::{mask_labels, train_val_test_split, MinMaxScaler};
pub use synthetic::{
    gen_synthetic_classification, gen_synthetic_regression, ClassificationTruth, RegressionTruth,
    SyntheticClassification, SyntheticRegression,
};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    BinaryClassification,
    Regression,
}

impl TaskKind {
    pub fn is_classification(self) -> bool {
        self == TaskKind::BinaryClassification
    }
}

/// Feature vector with two optional labels. Classification labels are stored
/// as `0.0` / `1.0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x: Vec<f64>,
    pub y1: Option<f64>,
    pub y2: Option<f64>,
}

impl Sample {
    pub fn new(x: Vec<f64>, y1: Option<f64>, y2: Option<f64>) -> Self {
        Sample { x, y1, y2 }
    }

    pub fn presence(&self) -> PresenceMask {
        presence_indicator(self)
    }

    /// Copy with both labels hidden.
    pub fn unlabeled(&self) -> Sample {
        Sample::new(self.x.clone(), None, None)
    }

    /// Copy that keeps only the requested labels.
    pub fn with_visible(&self, y1: bool, y2: bool) -> Sample {
        Sample::new(
            self.x.clone(),
            self.y1.filter(|_| y1),
            self.y2.filter(|_| y2),
        )
    }
}

/// Which labels of a sample are observed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PresenceMask {
    pub u1: bool,
    pub u2: bool,
}

impl PresenceMask {
    pub const FULL: PresenceMask = PresenceMask { u1: true, u2: true };
    pub const ONLY_Y1: PresenceMask = PresenceMask { u1: true, u2: false };
    pub const ONLY_Y2: PresenceMask = PresenceMask { u1: false, u2: true };
    pub const NONE: PresenceMask = PresenceMask { u1: false, u2: false };

    pub fn bits(self) -> (u8, u8) {
        (u8::from(self.u1), u8::from(self.u2))
    }
}

pub fn presence_indicator(sample: &Sample) -> PresenceMask {
    PresenceMask {
        u1: sample.y1.is_some(),
        u2: sample.y2.is_some(),
    }
}

/// Indices of a dataset grouped by label presence, each in dataset order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    /// Both labels present.
    pub labeled: Vec<usize>,
    /// Only `y1` present.
    pub only_y1: Vec<usize>,
    /// Only `y2` present.
    pub only_y2: Vec<usize>,
    /// Neither label present.
    pub unlabeled: Vec<usize>,
}

impl DatasetSplit {
    pub fn total(&self) -> usize {
        self.labeled.len() + self.only_y1.len() + self.only_y2.len() + self.unlabeled.len()
    }

    /// `I_l ∪ I_1 ∪ I_2` in ascending index order.
    pub fn trainable(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self
            .labeled
            .iter()
            .chain(&self.only_y1)
            .chain(&self.only_y2)
            .copied()
            .collect();
        v.sort_unstable();
        v
    }
}

pub fn partition(samples: &[Sample]) -> DatasetSplit {
    let mut split = DatasetSplit::default();
    for (i, s) in samples.iter().enumerate() {
        match presence_indicator(s) {
            PresenceMask::FULL => split.labeled.push(i),
            PresenceMask::ONLY_Y1 => split.only_y1.push(i),
            PresenceMask::ONLY_Y2 => split.only_y2.push(i),
            PresenceMask::NONE => split.unlabeled.push(i),
        }
    }
    split
}

/// Checks the per-dataset invariants: constant feature width and, for
/// classification, labels in {0, 1}. Returns the feature width.
pub fn validate(samples: &[Sample], task: TaskKind) -> Result<usize> {
    let d = samples.first().map_or(0, |s| s.x.len());
    for (i, s) in samples.iter().enumerate() {
        if s.x.len() != d {
            return Err(Error::Dimension(format!(
                "sample {i} has {} features, expected {d}",
                s.x.len()
            )));
        }
        if task.is_classification() {
            for y in [s.y1, s.y2].into_iter().flatten() {
                if y != 0.0 && y != 1.0 {
                    return Err(Error::Contract(format!(
                        "sample {i} has classification label {y}, expected 0 or 1"
                    )));
                }
            }
        }
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(y1: Option<f64>, y2: Option<f64>) -> Sample {
        Sample::new(vec![0.0], y1, y2)
    }

    #[test]
    fn presence_bits() {
        assert_eq!(presence_indicator(&s(Some(1.0), None)).bits(), (1, 0));
        assert_eq!(presence_indicator(&s(Some(1.0), Some(0.0))).bits(), (1, 1));
        assert_eq!(presence_indicator(&s(None, None)).bits(), (0, 0));
        assert_eq!(presence_indicator(&s(None, Some(2.0))).bits(), (0, 1));
    }

    #[test]
    fn partition_by_presence() {
        let data = vec![
            s(Some(1.0), Some(1.0)),
            s(Some(1.0), None),
            s(None, Some(1.0)),
            s(None, None),
        ];
        let p = partition(&data);
        assert_eq!(p.labeled, vec![0]);
        assert_eq!(p.only_y1, vec![1]);
        assert_eq!(p.only_y2, vec![2]);
        assert_eq!(p.unlabeled, vec![3]);

        let full = vec![s(Some(0.0), Some(1.0)); 3];
        let p = partition(&full);
        assert_eq!(p.labeled, vec![0, 1, 2]);
        assert!(p.only_y1.is_empty() && p.only_y2.is_empty() && p.unlabeled.is_empty());

        assert_eq!(partition(&[]), DatasetSplit::default());
    }

    #[test]
    fn validation_catches_bad_rows() {
        let ragged = vec![Sample::new(vec![0.0], None, None), Sample::new(vec![0.0, 1.0], None, None)];
        assert!(validate(&ragged, TaskKind::Regression).is_err());
        let bad_label = vec![s(Some(0.5), None)];
        assert!(validate(&bad_label, TaskKind::BinaryClassification).is_err());
        assert_eq!(validate(&bad_label, TaskKind::Regression).unwrap(), 1);
    }
}
