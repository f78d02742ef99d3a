//! Training: the integrated loop over fully and partially labeled samples,
//! the individual training modes used for ablations, and supervised fitting of
//! multi-head models (marginal model pretraining and the baselines).

mod losses;
mod supervised;

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use losses::{
    duality_from_likelihoods, duality_term, impute_missing, label_likelihood, BatchContext,
    BatchLosses, ImputedSample, LabelSlot,
};
pub use supervised::{fit_multihead, pretrain_multitask, MarginalSubset};

use crate::datahub::{partition, Sample};
use crate::diffcore::{sgd_step_from, ClassWeights, Gradients};
use crate::dualtower::{DualTower, DualTowerParams, MultiTaskModel, MultiTaskParams};
use crate::error::{Error, Result};
use crate::rng::substream;

/// Loss coefficients. `lambda21` scales the supervision loss of `g` (predicting
/// y1), `lambda12` that of `f`; `lambda11` / `lambda22` scale the
/// reconstruction losses of y1 / y2; `lambda_d` the duality loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda11: f64,
    pub lambda22: f64,
    pub lambda12: f64,
    pub lambda21: f64,
    pub lambda_d: f64,
}

impl LossWeights {
    pub fn uniform(v: f64) -> Self {
        LossWeights {
            lambda11: v,
            lambda22: v,
            lambda12: v,
            lambda21: v,
            lambda_d: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda11", self.lambda11),
            ("lambda22", self.lambda22),
            ("lambda12", self.lambda12),
            ("lambda21", self.lambda21),
            ("lambda_d", self.lambda_d),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be a finite value >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weights: LossWeights,
    pub class_weights: Option<ClassWeights>,
    /// Which samples the marginal model is fitted on.
    #[serde(default)]
    pub marginal_subset: MarginalSubset,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config(format!(
                "epochs and batch_size must be >= 1, got {} and {}",
                self.epochs, self.batch_size
            )));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if let Some(w) = self.class_weights {
            if !(w.positive > 0.0 && w.negative > 0.0) {
                return Err(Error::Config("class weights must be positive".into()));
            }
        }
        self.weights.validate()
    }
}

/// Summed loss values of one epoch.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochLosses {
    pub epoch: usize,
    pub s1: f64,
    pub s2: f64,
    pub r1: f64,
    pub r2: f64,
    pub d: f64,
}

impl EpochLosses {
    pub fn total(&self) -> f64 {
        self.s1 + self.s2 + self.r1 + self.r2 + self.d
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochLosses>,
}

impl TrainHistory {
    /// CSV with columns `epoch,s1,s2,r1,r2,d,total`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,s1,s2,r1,r2,d,total\n");
        for e in &self.epochs {
            let _ = writeln!(
                out,
                "{},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
                e.epoch,
                e.s1,
                e.s2,
                e.r1,
                e.r2,
                e.d,
                e.total()
            );
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// One training mode of the dual-tower model, run on its own.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainMode {
    /// Supervised learning on fully labeled samples; updates theta0, theta1, theta2.
    A,
    /// Structural duality on samples with only y1; updates theta0, theta1.
    B1,
    /// Structural duality on samples with only y2; updates theta0, theta2.
    B2,
    /// Probabilistic duality on all labeled samples; updates all three groups.
    C,
}

#[derive(Debug, Clone, Copy)]
struct Terms {
    supervision: bool,
    r1: bool,
    r2: bool,
    duality: bool,
}

#[derive(Debug, Clone, Copy)]
struct Updates {
    theta0: bool,
    theta1: bool,
    theta2: bool,
}

const ALL_GROUPS: Updates = Updates {
    theta0: true,
    theta1: true,
    theta2: true,
};

fn check_duality(
    model: &DualTower,
    config: &TrainConfig,
    marginal: Option<(&MultiTaskModel, &MultiTaskParams)>,
) -> Result<()> {
    if config.weights.lambda_d > 0.0 {
        if !model.task().is_classification() {
            return Err(Error::Unsupported(
                "lambda_d > 0 requires a binary classification task".into(),
            ));
        }
        if marginal.is_none() {
            return Err(Error::Config(
                "lambda_d > 0 requires a pretrained multi-task model".into(),
            ));
        }
    }
    Ok(())
}

/// Forward, backward and update for one batch. Returns the term values.
///
/// The gradient of `(s1 + s2 + r1 + r2 + d) / B` is taken once; because imputed
/// labels are constants, its theta1 block equals the gradient of
/// `(s1 + r1 + d) / B` and its theta2 block that of `(s2 + r2 + d) / B`.
#[allow(clippy::too_many_arguments)]
fn step(
    model: &DualTower,
    params: &mut DualTowerParams,
    marginal: Option<(&MultiTaskModel, &MultiTaskParams)>,
    batch: &[&Sample],
    config: &TrainConfig,
    terms: Terms,
    updates: Updates,
) -> Result<EpochLosses> {
    let grads: Gradients;
    let mut vals = EpochLosses::default();
    {
        let imputed = impute_missing(model, params, batch)?;
        let mut ctx = BatchContext::new(model, params, imputed, config.class_weights)?;
        let w = config.weights;
        let off = LossWeights {
            lambda11: 0.0,
            lambda22: 0.0,
            lambda12: 0.0,
            lambda21: 0.0,
            lambda_d: 0.0,
        };
        let sup_w = if terms.supervision { w } else { off };
        let rec_w = LossWeights {
            lambda11: if terms.r1 { w.lambda11 } else { 0.0 },
            lambda22: if terms.r2 { w.lambda22 } else { 0.0 },
            ..off
        };
        let dual_w = if terms.duality { w } else { off };
        let (s1, s2) = ctx.supervision_losses(&sup_w)?;
        let (r1, r2) = ctx.reconstruction_losses(&rec_w)?;
        let d = ctx.duality_loss(&dual_w, marginal)?;
        vals.s1 = ctx.value(s1);
        vals.s2 = ctx.value(s2);
        vals.r1 = ctx.value(r1);
        vals.r2 = ctx.value(r2);
        vals.d = ctx.value(d);

        let g = &mut ctx.graph;
        let a = g.add(s1, s2)?;
        let a = g.add(a, r1)?;
        let a = g.add(a, r2)?;
        let total = g.add(a, d)?;
        let total = g.scale(total, 1.0 / config.batch_size as f64);
        grads = g.backward(total)?;
    }
    let lr = config.learning_rate;
    if updates.theta0 {
        sgd_step_from(&mut params.theta0, &grads, lr)?;
    }
    if updates.theta1 {
        sgd_step_from(&mut params.theta1, &grads, lr)?;
    }
    if updates.theta2 {
        sgd_step_from(&mut params.theta2, &grads, lr)?;
    }
    Ok(vals)
}

#[allow(clippy::too_many_arguments)]
fn run_epochs(
    model: &DualTower,
    data: &[Sample],
    indices: Vec<usize>,
    params: &mut DualTowerParams,
    marginal: Option<(&MultiTaskModel, &MultiTaskParams)>,
    config: &TrainConfig,
    terms: Terms,
    updates: Updates,
) -> Result<TrainHistory> {
    let mut rng = substream(config.seed, "train/shuffle");
    let mut history = TrainHistory::default();
    for epoch in 1..=config.epochs {
        let mut order = indices.clone();
        order.shuffle(&mut rng);
        let mut acc = EpochLosses {
            epoch,
            ..Default::default()
        };
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&Sample> = chunk.iter().map(|&i| &data[i]).collect();
            let v = step(model, params, marginal, &batch, config, terms, updates)?;
            acc.s1 += v.s1;
            acc.s2 += v.s2;
            acc.r1 += v.r1;
            acc.r2 += v.r2;
            acc.d += v.d;
        }
        if !acc.total().is_finite() {
            return Err(Error::Numeric(format!("training loss diverged at epoch {epoch}")));
        }
        history.epochs.push(acc);
    }
    Ok(history)
}

/// Integrated training over fully labeled and both kinds of semi-labeled
/// samples. Unlabeled samples never enter a batch.
pub fn train(
    model: &DualTower,
    data: &[Sample],
    params: &mut DualTowerParams,
    marginal: Option<(&MultiTaskModel, &MultiTaskParams)>,
    config: &TrainConfig,
) -> Result<TrainHistory> {
    config.validate()?;
    check_duality(model, config, marginal)?;
    let indices = partition(data).trainable();
    if indices.is_empty() {
        return Err(Error::Config("no labeled samples to train on".into()));
    }
    let terms = Terms {
        supervision: true,
        r1: true,
        r2: true,
        duality: true,
    };
    run_epochs(model, data, indices, params, marginal, config, terms, ALL_GROUPS)
}

/// Runs a single training mode for `config.epochs` epochs over that mode's
/// subset. A mode whose subset is empty logs a warning and leaves the
/// parameters untouched.
pub fn train_mode(
    mode: TrainMode,
    model: &DualTower,
    data: &[Sample],
    params: &mut DualTowerParams,
    marginal: Option<(&MultiTaskModel, &MultiTaskParams)>,
    config: &TrainConfig,
) -> Result<TrainHistory> {
    config.validate()?;
    let split = partition(data);
    let none = Terms {
        supervision: false,
        r1: false,
        r2: false,
        duality: false,
    };
    let (indices, terms, updates) = match mode {
        TrainMode::A => (split.labeled, Terms { supervision: true, ..none }, ALL_GROUPS),
        TrainMode::B1 => (
            split.only_y1,
            Terms { r1: true, ..none },
            Updates { theta2: false, ..ALL_GROUPS },
        ),
        TrainMode::B2 => (
            split.only_y2,
            Terms { r2: true, ..none },
            Updates { theta1: false, ..ALL_GROUPS },
        ),
        TrainMode::C => {
            if marginal.is_none() {
                return Err(Error::Config("mode c requires a pretrained multi-task model".into()));
            }
            check_duality(model, config, marginal)?;
            (split.trainable(), Terms { duality: true, ..none }, ALL_GROUPS)
        }
    };
    if indices.is_empty() {
        log::warn!("training mode {mode:?} has no samples; skipping");
        return Ok(TrainHistory::default());
    }
    run_epochs(model, data, indices, params, marginal, config, terms, updates)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datahub::{gen_synthetic_classification, mask_labels, TaskKind};
    use crate::dualtower::ModelConfig;

    fn cfg(epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            batch_size: 4,
            learning_rate: 0.05,
            weights: LossWeights {
                lambda11: 2.0,
                lambda22: 1.0,
                lambda12: 1.0,
                lambda21: 2.0,
                lambda_d: 0.2,
            },
            class_weights: Some(ClassWeights {
                positive: 0.7,
                negative: 0.3,
            }),
            marginal_subset: MarginalSubset::AllPresent,
            seed: 5,
        }
    }

    #[test]
    fn config_validation() {
        let mut c = cfg(1);
        c.epochs = 0;
        assert!(c.validate().is_err());
        let mut c = cfg(1);
        c.weights.lambda11 = -1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn empty_training_set_is_a_config_error() {
        let m = DualTower::new(ModelConfig::with_defaults(TaskKind::Regression, 2, 0)).unwrap();
        let mut p = m.init_params().unwrap();
        let mut c = cfg(1);
        c.weights.lambda_d = 0.0;
        let data = vec![Sample::new(vec![0.0, 1.0], None, None)];
        assert!(matches!(train(&m, &data, &mut p, None, &c), Err(Error::Config(_))));
    }

    #[test]
    fn duality_needs_marginals_and_classification() {
        let m = DualTower::new(ModelConfig::with_defaults(TaskKind::Regression, 2, 0)).unwrap();
        let mut p = m.init_params().unwrap();
        let data = vec![Sample::new(vec![0.0, 1.0], Some(1.0), Some(1.0))];
        assert!(matches!(
            train(&m, &data, &mut p, None, &cfg(1)),
            Err(Error::Unsupported(_))
        ));
        let m = DualTower::new(ModelConfig::with_defaults(TaskKind::BinaryClassification, 2, 0))
            .unwrap();
        assert!(matches!(
            train(&m, &data, &mut p, None, &cfg(1)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn empty_mode_subset_is_a_no_op() {
        let m = DualTower::new(ModelConfig::with_defaults(TaskKind::Regression, 2, 0)).unwrap();
        let mut p = m.init_params().unwrap();
        let before = p.clone();
        let data = vec![Sample::new(vec![0.0, 1.0], Some(1.0), Some(1.0))];
        let mut c = cfg(2);
        c.weights.lambda_d = 0.0;
        let h = train_mode(TrainMode::B1, &m, &data, &mut p, None, &c).unwrap();
        assert!(h.epochs.is_empty());
        assert_eq!(p, before);
    }

    #[test]
    fn full_training_is_deterministic_and_history_is_complete() {
        let data = gen_synthetic_classification(40, 3, 2).unwrap().samples;
        let data = mask_labels(&data, 0.3, 0.3, 9).unwrap();
        let mc = ModelConfig::with_defaults(TaskKind::BinaryClassification, 3, 1);
        let m = DualTower::new(mc.clone()).unwrap();
        let mt = MultiTaskModel::marginal(&mc).unwrap();
        let c = cfg(3);
        let run = || {
            let mut mtp = mt.init_params("marginal").unwrap();
            pretrain_multitask(&mt, &data, &mut mtp, &c).unwrap();
            let mut p = m.init_params().unwrap();
            let h = train(&m, &data, &mut p, Some((&mt, &mtp)), &c).unwrap();
            (p, h)
        };
        let (p1, h1) = run();
        let (p2, h2) = run();
        assert_eq!(p1, p2);
        assert_eq!(h1, h2);
        assert_eq!(h1.epochs.len(), 3);
        for e in &h1.epochs {
            for v in [e.s1, e.s2, e.r1, e.r2, e.d] {
                assert!(v >= 0.0);
            }
            assert!(e.d > 0.0 && e.r1 > 0.0);
        }
        let csv = h1.to_csv();
        assert!(csv.starts_with("epoch,s1,s2,r1,r2,d,total\n"));
        assert_eq!(csv.lines().count(), 4);
    }
}
