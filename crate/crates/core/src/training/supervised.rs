//! Minibatch fitting of multi-head models on rows with partially observed
//! targets. Used for the marginal model and for the baselines.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::datahub::{PresenceMask, Sample, TaskKind};
use crate::diffcore::{
    binary_distribution, cross_entropy, sgd_step_from, sum_squared_error, ClassWeights, Graph,
    Tensor, Var,
};
use crate::dualtower::{MultiTaskModel, MultiTaskParams};
use crate::error::{Error, Result};
use crate::rng::substream;

/// Samples the marginal model is fitted on.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginalSubset {
    /// Each head trains on every sample where its label is present.
    #[default]
    AllPresent,
    /// Both heads train on fully labeled samples only.
    LabeledOnly,
}

pub(crate) fn label_loss(
    graph: &mut Graph,
    task: TaskKind,
    pred: Var,
    targets: &[f64],
    class_weights: Option<ClassWeights>,
) -> Result<Var> {
    match task {
        TaskKind::BinaryClassification => {
            let dist = binary_distribution(graph, pred)?;
            let labels: Vec<usize> = targets.iter().map(|t| usize::from(*t >= 0.5)).collect();
            cross_entropy(graph, dist, &labels, class_weights)
        }
        TaskKind::Regression => {
            let t = graph.constant(Tensor::matrix(targets.len(), 1, targets.to_vec())?);
            sum_squared_error(graph, pred, t)
        }
    }
}

/// Fits `model` on `inputs` with one optional target per head. Each batch
/// minimizes the sum over heads of the summed per-sample loss on rows whose
/// target is present, divided by the batch size. Returns the summed loss per
/// epoch. `stream` names the shuffle substream.
pub fn fit_multihead(
    model: &MultiTaskModel,
    params: &mut MultiTaskParams,
    inputs: &[Vec<f64>],
    targets: &[Vec<Option<f64>>],
    config: &TrainConfig,
    stream: &str,
) -> Result<Vec<f64>> {
    config.validate()?;
    if inputs.len() != targets.len() {
        return Err(Error::Dimension(format!(
            "{} inputs but {} target rows",
            inputs.len(),
            targets.len()
        )));
    }
    let heads = model.n_heads();
    if let Some((i, t)) = targets.iter().enumerate().find(|(_, t)| t.len() != heads) {
        return Err(Error::Dimension(format!(
            "target row {i} has {} entries, model has {heads} heads",
            t.len()
        )));
    }
    if let Some((i, x)) = inputs.iter().enumerate().find(|(_, x)| x.len() != model.input_dim()) {
        return Err(Error::Dimension(format!(
            "input row {i} has width {}, model expects {}",
            x.len(),
            model.input_dim()
        )));
    }
    let usable: Vec<usize> = (0..inputs.len())
        .filter(|&i| targets[i].iter().any(Option::is_some))
        .collect();
    if usable.is_empty() {
        log::warn!("fit `{stream}` has no targets; parameters left unchanged");
        return Ok(Vec::new());
    }
    let task = model.config().task;
    let mut rng = substream(config.seed, &format!("fit/{stream}"));
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let mut order = usable.clone();
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let grads = {
                let mut g = Graph::new();
                for grp in params.groups() {
                    g.register_group(grp)?;
                }
                let rows: Vec<Vec<f64>> = chunk.iter().map(|&i| inputs[i].clone()).collect();
                let xv = g.constant(Tensor::from_rows(&rows)?);
                let outs = model.forward_graph(&mut g, params, xv)?;
                let mut total = g.constant(Tensor::scalar(0.0));
                for (h, out) in outs.into_iter().enumerate() {
                    let (sel, tv): (Vec<usize>, Vec<f64>) = chunk
                        .iter()
                        .enumerate()
                        .filter_map(|(r, &i)| targets[i][h].map(|t| (r, t)))
                        .unzip();
                    if sel.is_empty() {
                        continue;
                    }
                    let picked = g.select_rows(out, &sel)?;
                    let l = label_loss(&mut g, task, picked, &tv, config.class_weights)?;
                    total = g.add(total, l)?;
                }
                epoch_loss += g.value(total).item();
                let scaled = g.scale(total, 1.0 / config.batch_size as f64);
                g.backward(scaled)?
            };
            for grp in params.groups_mut() {
                sgd_step_from(grp, &grads, config.learning_rate)?;
            }
        }
        if !epoch_loss.is_finite() {
            return Err(Error::Numeric(format!("fit `{stream}` diverged at epoch {epoch}")));
        }
        history.push(epoch_loss);
    }
    Ok(history)
}

/// Fits the two-head marginal model `(P(y1|x), P(y2|x))`.
pub fn pretrain_multitask(
    model: &MultiTaskModel,
    data: &[Sample],
    params: &mut MultiTaskParams,
    config: &TrainConfig,
) -> Result<Vec<f64>> {
    if model.n_heads() != 2 {
        return Err(Error::Contract(format!(
            "the marginal model needs two heads, got {}",
            model.n_heads()
        )));
    }
    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    for s in data {
        let keep = match config.marginal_subset {
            MarginalSubset::AllPresent => s.presence() != PresenceMask::NONE,
            MarginalSubset::LabeledOnly => s.presence() == PresenceMask::FULL,
        };
        if keep {
            inputs.push(s.x.clone());
            targets.push(vec![s.y1, s.y2]);
        }
    }
    for h in 0..2 {
        if targets.iter().all(|t| t[h].is_none()) {
            return Err(Error::Config(format!(
                "marginal head {} has no labeled samples",
                h + 1
            )));
        }
    }
    fit_multihead(model, params, &inputs, &targets, config, "marginal")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dualtower::ModelConfig;
    use crate::training::LossWeights;

    fn cfg() -> TrainConfig {
        TrainConfig {
            epochs: 200,
            batch_size: 4,
            learning_rate: 0.05,
            weights: LossWeights::uniform(1.0),
            class_weights: None,
            marginal_subset: MarginalSubset::AllPresent,
            seed: 3,
        }
    }

    #[test]
    fn regression_fit_reduces_loss() {
        let mc = ModelConfig::with_defaults(TaskKind::Regression, 2, 4);
        let m = MultiTaskModel::new(&mc, 2, 1).unwrap();
        let mut p = m.init_params("reg").unwrap();
        let inputs: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 / 20.0, 0.5]).collect();
        let targets: Vec<Vec<Option<f64>>> =
            inputs.iter().map(|x| vec![Some(2.0 * x[0] + 1.0)]).collect();
        let h = fit_multihead(&m, &mut p, &inputs, &targets, &cfg(), "reg").unwrap();
        assert!(h.last().unwrap() < &(h[0] * 0.05), "{:?}", (h[0], h.last()));
    }

    #[test]
    fn missing_targets_leave_head_untouched() {
        let mc = ModelConfig::with_defaults(TaskKind::Regression, 2, 4);
        let m = MultiTaskModel::new(&mc, 2, 2).unwrap();
        let mut p = m.init_params("m").unwrap();
        let before = p.heads[1].clone();
        let inputs = vec![vec![0.1, 0.2], vec![0.3, 0.4]];
        let targets = vec![vec![Some(1.0), None], vec![Some(0.0), None]];
        let mut c = cfg();
        c.epochs = 3;
        fit_multihead(&m, &mut p, &inputs, &targets, &c, "m").unwrap();
        assert_eq!(p.heads[1], before);
    }

    #[test]
    fn marginal_head_without_labels_is_a_config_error() {
        let mc = ModelConfig::with_defaults(TaskKind::Regression, 2, 4);
        let m = MultiTaskModel::marginal(&mc).unwrap();
        let mut p = m.init_params("marginal").unwrap();
        let data = vec![Sample::new(vec![0.1, 0.2], Some(1.0), None)];
        assert!(matches!(pretrain_multitask(&m, &data, &mut p, &cfg()), Err(Error::Config(_))));
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mc = ModelConfig::with_defaults(TaskKind::Regression, 2, 4);
        let m = MultiTaskModel::new(&mc, 2, 2).unwrap();
        let mut p = m.init_params("m").unwrap();
        let r = fit_multihead(&m, &mut p, &[vec![0.0, 0.0]], &[vec![Some(1.0)]], &cfg(), "m");
        assert!(matches!(r, Err(Error::Dimension(_))));
    }
}
