//! Per-batch loss terms on a shared tape.
//!
//! One `f` pass and one `g` pass cover the whole batch: `f` is evaluated at
//! `(x, y1)` with `y1` either observed or imputed, and `g` at `(x, y2)` likewise.
//! Each loss term then selects the rows it sums over.

use crate::datahub::{PresenceMask, Sample, TaskKind};
use crate::diffcore::{
    binary_distribution, cross_entropy, sum_squared_error, ClassWeights, Graph, Tensor, Var,
    LOG_FLOOR,
};
use crate::dualtower::{DualTower, DualTowerParams, MultiTaskModel, MultiTaskParams};
use crate::error::{Error, Result};

use super::LossWeights;

/// A label slot after imputation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelSlot {
    pub value: f64,
    pub imputed: bool,
}

/// A training sample with its missing partner label filled in where possible.
#[derive(Debug, Clone, PartialEq)]
pub struct ImputedSample {
    pub x: Vec<f64>,
    pub y1: Option<LabelSlot>,
    pub y2: Option<LabelSlot>,
    /// Presence before imputation.
    pub presence: PresenceMask,
}

impl ImputedSample {
    fn observed(s: &Sample) -> Self {
        ImputedSample {
            x: s.x.clone(),
            y1: s.y1.map(|value| LabelSlot { value, imputed: false }),
            y2: s.y2.map(|value| LabelSlot { value, imputed: false }),
            presence: s.presence(),
        }
    }
}

/// Fills `y2 = f(x, y1)` for samples with only `y1` and `y1 = g(x, y2)` for
/// samples with only `y2`. Imputed values come from the graph-free path, so they
/// enter later losses as constants. Other samples are copied unchanged.
pub fn impute_missing(
    model: &DualTower,
    params: &DualTowerParams,
    batch: &[&Sample],
) -> Result<Vec<ImputedSample>> {
    batch
        .iter()
        .map(|s| {
            let mut out = ImputedSample::observed(s);
            match out.presence {
                PresenceMask::ONLY_Y1 => {
                    let v = model.f_forward(params, &s.x, s.y1.expect("present"))?;
                    out.y2 = Some(LabelSlot { value: v, imputed: true });
                }
                PresenceMask::ONLY_Y2 => {
                    let v = model.g_forward(params, &s.x, s.y2.expect("present"))?;
                    out.y1 = Some(LabelSlot { value: v, imputed: true });
                }
                _ => {}
            }
            Ok(out)
        })
        .collect()
}

/// Probability that a binary variable with class-1 probability `p` takes the
/// (possibly soft) value `q`: `q p + (1 - q)(1 - p)`. Exact for `q` in {0, 1}.
pub fn label_likelihood(p: f64, q: f64) -> f64 {
    q * p + (1.0 - q) * (1.0 - p)
}

/// One duality residual:
/// `(ln P_M(y1|x) + ln P_f(y2|x,y1) - ln P_M(y2|x) - ln P_g(y1|x,y2))^2`,
/// with every probability floored at `1e-12`.
pub fn duality_term(pm_y1: f64, pf_y2: f64, pm_y2: f64, pg_y1: f64) -> f64 {
    let ln = |p: f64| p.max(LOG_FLOOR).ln();
    let r = (ln(pf_y2) - ln(pg_y1)) + (ln(pm_y1) - ln(pm_y2));
    r * r
}

/// Recorded sum of duality residuals given `[n, 1]` tower likelihood nodes and
/// constant marginal likelihoods.
pub fn duality_from_likelihoods(
    graph: &mut Graph,
    pf_y2: Var,
    pg_y1: Var,
    pm_y1: &[f64],
    pm_y2: &[f64],
) -> Result<Var> {
    let n = graph.value(pf_y2).rows();
    if pm_y1.len() != n || pm_y2.len() != n || graph.value(pg_y1).rows() != n {
        return Err(Error::Dimension("duality inputs have different lengths".into()));
    }
    let lf = graph.ln_clamped(pf_y2, LOG_FLOOR);
    let lg = graph.ln_clamped(pg_y1, LOG_FLOOR);
    let diff = graph.sub(lf, lg)?;
    let marg: Vec<f64> = pm_y1
        .iter()
        .zip(pm_y2)
        .map(|(a, b)| a.max(LOG_FLOOR).ln() - b.max(LOG_FLOOR).ln())
        .collect();
    let c = graph.constant(Tensor::matrix(n, 1, marg)?);
    let r = graph.add(diff, c)?;
    let sq = graph.square(r);
    Ok(graph.sum(sq))
}

/// Loss terms of one batch, as scalar nodes on [`BatchContext::graph`].
#[derive(Debug, Clone, Copy)]
pub struct BatchLosses {
    pub s1: Var,
    pub s2: Var,
    pub r1: Var,
    pub r2: Var,
    pub d: Var,
}

/// Tape plus cached forward passes for one imputed batch.
pub struct BatchContext<'a> {
    pub graph: Graph,
    model: &'a DualTower,
    params: &'a DualTowerParams,
    batch: Vec<ImputedSample>,
    encoded: Var,
    class_weights: Option<ClassWeights>,
    f_out: Option<Var>,
    g_out: Option<Var>,
}

impl<'a> BatchContext<'a> {
    pub fn new(
        model: &'a DualTower,
        params: &'a DualTowerParams,
        batch: Vec<ImputedSample>,
        class_weights: Option<ClassWeights>,
    ) -> Result<Self> {
        Self::on_graph(Graph::new(), model, params, batch, class_weights)
    }

    /// Like [`BatchContext::new`] but records onto an existing tape.
    pub fn on_graph(
        mut graph: Graph,
        model: &'a DualTower,
        params: &'a DualTowerParams,
        batch: Vec<ImputedSample>,
        class_weights: Option<ClassWeights>,
    ) -> Result<Self> {
        for g in params.groups() {
            graph.register_group(g)?;
        }
        let d = model.config().input_dim();
        let rows: Vec<Vec<f64>> = batch.iter().map(|s| s.x.clone()).collect();
        let x = if rows.is_empty() {
            Tensor::zeros(&[0, d])
        } else {
            Tensor::from_rows(&rows)?
        };
        let xv = graph.constant(x);
        let encoded = model.encode_graph(&mut graph, params, xv)?;
        Ok(BatchContext {
            graph,
            model,
            params,
            batch,
            encoded,
            class_weights,
            f_out: None,
            g_out: None,
        })
    }

    pub fn into_graph(self) -> Graph {
        self.graph
    }

    pub fn batch(&self) -> &[ImputedSample] {
        &self.batch
    }

    fn zero(&mut self) -> Var {
        self.graph.constant(Tensor::scalar(0.0))
    }

    fn rows_where(&self, mask: PresenceMask) -> Vec<usize> {
        self.batch
            .iter()
            .enumerate()
            .filter(|(_, s)| s.presence == mask)
            .map(|(i, _)| i)
            .collect()
    }

    fn label_column(&self, which: u8) -> Result<Vec<f64>> {
        self.batch
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let slot = if which == 1 { s.y1 } else { s.y2 };
                slot.map(|l| l.value).ok_or_else(|| {
                    Error::Contract(format!("batch row {i} has no y{which}; impute the batch first"))
                })
            })
            .collect()
    }

    /// `f(x, y1)` for every row.
    fn f_all(&mut self) -> Result<Var> {
        if let Some(v) = self.f_out {
            return Ok(v);
        }
        let y1 = self.label_column(1)?;
        let n = y1.len();
        let lv = self.graph.constant(Tensor::matrix(n, 1, y1)?);
        let out = self.model.f_graph(&mut self.graph, self.params, self.encoded, lv)?;
        self.f_out = Some(out);
        Ok(out)
    }

    /// `g(x, y2)` for every row.
    fn g_all(&mut self) -> Result<Var> {
        if let Some(v) = self.g_out {
            return Ok(v);
        }
        let y2 = self.label_column(2)?;
        let n = y2.len();
        let lv = self.graph.constant(Tensor::matrix(n, 1, y2)?);
        let out = self.model.g_graph(&mut self.graph, self.params, self.encoded, lv)?;
        self.g_out = Some(out);
        Ok(out)
    }

    /// Summed per-sample loss of `pred` rows against observed targets.
    fn label_loss(&mut self, pred: Var, targets: &[f64]) -> Result<Var> {
        match self.model.task() {
            TaskKind::BinaryClassification => {
                let dist = binary_distribution(&mut self.graph, pred)?;
                let labels: Vec<usize> = targets.iter().map(|t| usize::from(*t >= 0.5)).collect();
                cross_entropy(&mut self.graph, dist, &labels, self.class_weights)
            }
            TaskKind::Regression => {
                let t = self
                    .graph
                    .constant(Tensor::matrix(targets.len(), 1, targets.to_vec())?);
                sum_squared_error(&mut self.graph, pred, t)
            }
        }
    }

    /// `lambda * sum_rows l(output[rows], target[rows])`; an exact zero when the
    /// coefficient is zero or no row qualifies.
    fn term(&mut self, rows: &[usize], lambda: f64, tower_f: bool) -> Result<Var> {
        if rows.is_empty() || lambda == 0.0 {
            return Ok(self.zero());
        }
        let out = if tower_f { self.f_all()? } else { self.g_all()? };
        let picked = self.graph.select_rows(out, rows)?;
        let targets: Vec<f64> = rows
            .iter()
            .map(|&i| {
                let slot = if tower_f { self.batch[i].y2 } else { self.batch[i].y1 };
                slot.expect("row has target").value
            })
            .collect();
        let l = self.label_loss(picked, &targets)?;
        Ok(self.graph.scale(l, lambda))
    }

    /// `s1 = l21 * sum_{I_l} l1(g(x, y2), y1)`, `s2 = l12 * sum_{I_l} l2(f(x, y1), y2)`.
    pub fn supervision_losses(&mut self, weights: &LossWeights) -> Result<(Var, Var)> {
        let rows = self.rows_where(PresenceMask::FULL);
        let s1 = self.term(&rows, weights.lambda21, false)?;
        let s2 = self.term(&rows, weights.lambda12, true)?;
        Ok((s1, s2))
    }

    /// `r1 = l11 * sum_{I_1} l1(g(x, y2_hat), y1)` and the mirror `r2` over `I_2`.
    /// Imputed inputs are constants, so tower 2 gets no gradient from `r1` and
    /// tower 1 none from `r2`.
    pub fn reconstruction_losses(&mut self, weights: &LossWeights) -> Result<(Var, Var)> {
        let rows1 = self.rows_where(PresenceMask::ONLY_Y1);
        let rows2 = self.rows_where(PresenceMask::ONLY_Y2);
        for &i in &rows1 {
            if !self.batch[i].y2.is_some_and(|s| s.imputed) {
                return Err(Error::Contract(format!("row {i} of I_1 was not imputed")));
            }
        }
        for &i in &rows2 {
            if !self.batch[i].y1.is_some_and(|s| s.imputed) {
                return Err(Error::Contract(format!("row {i} of I_2 was not imputed")));
            }
        }
        let r1 = self.term(&rows1, weights.lambda11, false)?;
        let r2 = self.term(&rows2, weights.lambda22, true)?;
        Ok((r1, r2))
    }

    /// `d = ld * sum_i (ln P_M(y1|x) + ln P_f(y2|x,y1) - ln P_M(y2|x) - ln P_g(y1|x,y2))^2`
    /// over every fully or partially labeled row (imputed values included).
    /// Marginals come from the frozen multi-task model.
    pub fn duality_loss(
        &mut self,
        weights: &LossWeights,
        marginal: Option<(&MultiTaskModel, &MultiTaskParams)>,
    ) -> Result<Var> {
        if weights.lambda_d == 0.0 {
            return Ok(self.zero());
        }
        if self.model.task() != TaskKind::BinaryClassification {
            return Err(Error::Unsupported(
                "the duality loss is only defined for binary classification".into(),
            ));
        }
        let (mt, mtp) = marginal.ok_or_else(|| {
            Error::Config("duality loss needs a pretrained multi-task model".into())
        })?;
        let rows: Vec<usize> = self
            .batch
            .iter()
            .enumerate()
            .filter(|(_, s)| s.presence != PresenceMask::NONE)
            .map(|(i, _)| i)
            .collect();
        if rows.is_empty() {
            return Ok(self.zero());
        }
        let f = self.f_all()?;
        let g = self.g_all()?;
        let f = self.graph.select_rows(f, &rows)?;
        let g = self.graph.select_rows(g, &rows)?;

        let mut y1 = Vec::with_capacity(rows.len());
        let mut y2 = Vec::with_capacity(rows.len());
        let mut pm1 = Vec::with_capacity(rows.len());
        let mut pm2 = Vec::with_capacity(rows.len());
        for &i in &rows {
            let s = &self.batch[i];
            let (q1, q2) = (s.y1.expect("imputed").value, s.y2.expect("imputed").value);
            let (m1, m2) = mt.m_forward(mtp, &s.x)?;
            pm1.push(label_likelihood(m1, q1));
            pm2.push(label_likelihood(m2, q2));
            y1.push(q1);
            y2.push(q2);
        }
        let pf = self.likelihood(f, &y2)?;
        let pg = self.likelihood(g, &y1)?;
        let sum = duality_from_likelihoods(&mut self.graph, pf, pg, &pm1, &pm2)?;
        Ok(self.graph.scale(sum, weights.lambda_d))
    }

    /// Recorded `q p + (1 - q)(1 - p)` for `[n, 1]` probabilities `p`.
    fn likelihood(&mut self, p: Var, q: &[f64]) -> Result<Var> {
        let slope: Vec<f64> = q.iter().map(|q| 2.0 * q - 1.0).collect();
        let offset: Vec<f64> = q.iter().map(|q| 1.0 - q).collect();
        let scaled = self.graph.weighted(p, slope)?;
        let c = self.graph.constant(Tensor::matrix(q.len(), 1, offset)?);
        self.graph.add(scaled, c)
    }

    /// All five terms; terms that are switched off come back as exact zeros.
    pub fn all_losses(
        &mut self,
        weights: &LossWeights,
        marginal: Option<(&MultiTaskModel, &MultiTaskParams)>,
    ) -> Result<BatchLosses> {
        let (s1, s2) = self.supervision_losses(weights)?;
        let (r1, r2) = self.reconstruction_losses(weights)?;
        let d = self.duality_loss(weights, marginal)?;
        Ok(BatchLosses { s1, s2, r1, r2, d })
    }

    pub fn value(&self, v: Var) -> f64 {
        self.graph.value(v).item()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dualtower::{ModelConfig, Tower};

    #[test]
    fn duality_term_cases() {
        assert!(duality_term(0.3, 0.6, 0.3, 0.6).abs() < 1e-12);
        let v = duality_term(0.5, 0.8, 0.5, 0.4);
        let ln2 = std::f64::consts::LN_2;
        assert!((v - ln2 * ln2).abs() < 1e-12);
        assert!((v - 0.4805).abs() < 1e-4);
        assert!(duality_term(1e-30, 0.5, 0.5, 0.5).is_finite());
    }

    #[test]
    fn recorded_duality_matches_scalar_form() {
        let mut g = Graph::new();
        let pf = g.constant(Tensor::matrix(2, 1, vec![0.8, 0.6]).unwrap());
        let pg = g.constant(Tensor::matrix(2, 1, vec![0.4, 0.6]).unwrap());
        let d = duality_from_likelihoods(&mut g, pf, pg, &[0.5, 0.3], &[0.5, 0.3]).unwrap();
        let expect = duality_term(0.5, 0.8, 0.5, 0.4) + duality_term(0.3, 0.6, 0.3, 0.6);
        assert!((g.value(d).item() - expect).abs() < 1e-12);
    }

    #[test]
    fn likelihood_of_hard_labels() {
        assert_eq!(label_likelihood(0.8, 1.0), 0.8);
        assert!((label_likelihood(0.8, 0.0) - 0.2).abs() < 1e-15);
    }

    fn regression_model() -> (DualTower, DualTowerParams) {
        let m = DualTower::new(ModelConfig::with_defaults(TaskKind::Regression, 3, 4)).unwrap();
        let p = m.init_params().unwrap();
        (m, p)
    }

    #[test]
    fn imputation_fills_only_partial_samples() {
        let m = DualTower::new(ModelConfig::with_defaults(TaskKind::BinaryClassification, 3, 4))
            .unwrap();
        let mut p = m.init_params().unwrap();
        p.zero_tower_output(Tower::Two);
        let data = [
            Sample::new(vec![0.1, 0.2, 0.3], Some(1.0), Some(0.0)),
            Sample::new(vec![0.1, 0.2, 0.3], Some(1.0), None),
            Sample::new(vec![0.4, 0.2, 0.3], None, Some(1.0)),
            Sample::new(vec![0.4, 0.2, 0.3], None, None),
        ];
        let refs: Vec<&Sample> = data.iter().collect();
        let imp = impute_missing(&m, &p, &refs).unwrap();
        assert_eq!(imp[0], ImputedSample::observed(&data[0]));
        assert_eq!(imp[1].y2, Some(LabelSlot { value: 0.5, imputed: true }));
        assert_eq!(imp[1].y1, Some(LabelSlot { value: 1.0, imputed: false }));
        assert!(imp[2].y1.unwrap().imputed && !imp[2].y2.unwrap().imputed);
        assert_eq!(imp[3], ImputedSample::observed(&data[3]));
    }

    #[test]
    fn supervision_by_hand_for_regression() {
        let (m, mut p) = regression_model();
        // Force f to output exactly 3: zero the last layer and set its bias.
        p.zero_tower_output(Tower::Two);
        let last = p.theta2.keys().filter(|k| k.starts_with("tower2") && k.ends_with(".bias")).count() - 1;
        p.theta2.get_mut(&format!("tower2.{last}.bias")).unwrap().values_mut()[0] = 3.0;
        let s = Sample::new(vec![0.2, 0.5, 0.9], Some(1.0), Some(5.0));
        let imp = impute_missing(&m, &p, &[&s]).unwrap();
        let mut ctx = BatchContext::new(&m, &p, imp, None).unwrap();
        let w = LossWeights { lambda11: 0.0, lambda22: 0.0, lambda12: 1.0, lambda21: 0.0, lambda_d: 0.0 };
        let (s1, s2) = ctx.supervision_losses(&w).unwrap();
        assert_eq!(ctx.value(s2), 4.0);
        assert_eq!(ctx.value(s1), 0.0);

        let imp = impute_missing(&m, &p, &[&s]).unwrap();
        let mut ctx = BatchContext::new(&m, &p, imp, None).unwrap();
        let w0 = LossWeights { lambda12: 0.0, ..w };
        let (_, s2) = ctx.supervision_losses(&w0).unwrap();
        assert_eq!(ctx.value(s2), 0.0);
    }

    #[test]
    fn empty_subsets_give_exact_zeros() {
        let (m, p) = regression_model();
        let s = Sample::new(vec![0.2, 0.5, 0.9], Some(1.0), Some(5.0));
        let imp = impute_missing(&m, &p, &[&s]).unwrap();
        let mut ctx = BatchContext::new(&m, &p, imp, None).unwrap();
        let (r1, r2) = ctx.reconstruction_losses(&LossWeights::uniform(1.0)).unwrap();
        assert_eq!((ctx.value(r1), ctx.value(r2)), (0.0, 0.0));
    }

    #[test]
    fn unimputed_batch_is_rejected() {
        let (m, p) = regression_model();
        let s = Sample::new(vec![0.2, 0.5, 0.9], Some(1.0), None);
        let raw = vec![ImputedSample::observed(&s)];
        let mut ctx = BatchContext::new(&m, &p, raw, None).unwrap();
        assert!(matches!(
            ctx.reconstruction_losses(&LossWeights::uniform(1.0)),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn duality_on_regression_is_unsupported() {
        let (m, p) = regression_model();
        let s = Sample::new(vec![0.2, 0.5, 0.9], Some(1.0), Some(2.0));
        let imp = impute_missing(&m, &p, &[&s]).unwrap();
        let mut ctx = BatchContext::new(&m, &p, imp, None).unwrap();
        let w = LossWeights { lambda_d: 0.2, ..LossWeights::uniform(1.0) };
        assert!(matches!(ctx.duality_loss(&w, None), Err(Error::Unsupported(_))));
        let w = LossWeights { lambda_d: 0.0, ..w };
        let d = ctx.duality_loss(&w, None).unwrap();
        assert_eq!(ctx.value(d), 0.0);
    }
}
