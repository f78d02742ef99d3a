//! Comparison schemes built from the same MLP stack: independent models (ID),
//! a two-head model (COL), self-training (SSL), label stacking (LS) and model
//! reuse (DSML, plus DSML_REV with the labels swapped).

use serde::{Deserialize, Serialize};

use crate::datahub::{PresenceMask, Sample, TaskKind};
use crate::dualtower::{ModelConfig, MultiTaskModel, MultiTaskParams};
use crate::error::{Error, Result};
use crate::inference::{threshold, Prediction};
use crate::training::{fit_multihead, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum BaselineKind {
    #[serde(rename = "ID")]
    Id,
    #[serde(rename = "COL")]
    Col,
    #[serde(rename = "SSL")]
    Ssl,
    #[serde(rename = "LS")]
    Ls,
    #[serde(rename = "DSML")]
    Dsml,
    #[serde(rename = "DSML_REV")]
    DsmlRev,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 6] = [
        BaselineKind::Id,
        BaselineKind::Col,
        BaselineKind::Ssl,
        BaselineKind::Ls,
        BaselineKind::Dsml,
        BaselineKind::DsmlRev,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::Id => "ID",
            BaselineKind::Col => "COL",
            BaselineKind::Ssl => "SSL",
            BaselineKind::Ls => "LS",
            BaselineKind::Dsml => "DSML",
            BaselineKind::DsmlRev => "DSML_REV",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name().eq_ignore_ascii_case(s))
    }

    pub fn component_count(self) -> usize {
        match self {
            BaselineKind::Id | BaselineKind::Ssl | BaselineKind::Ls => 2,
            BaselineKind::Col => 1,
            BaselineKind::Dsml | BaselineKind::DsmlRev => 3,
        }
    }
}

/// One fitted model of a scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    pub stage: String,
    pub model: MultiTaskModel,
    pub params: MultiTaskParams,
    /// Samples that contributed a target in this stage.
    pub samples: usize,
}

impl Component {
    fn eval(&self, x: &[f64], label: Option<f64>) -> Result<Vec<f64>> {
        match label {
            Some(l) => {
                let mut row = x.to_vec();
                row.push(l);
                self.model.forward(&self.params, &row)
            }
            None => self.model.forward(&self.params, x),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselinePredictor {
    pub kind: BaselineKind,
    pub task: TaskKind,
    pub components: Vec<Component>,
}

/// Labels in the scheme's own order; DSML_REV swaps them.
#[derive(Clone, Copy)]
struct Pair {
    a: Option<f64>,
    b: Option<f64>,
}

struct Fitter<'a> {
    kind: BaselineKind,
    config: &'a ModelConfig,
    train: &'a TrainConfig,
    task: TaskKind,
    d: usize,
}

impl Fitter<'_> {
    /// Fits a model with `heads` outputs on rows `(x, label input, targets)`.
    fn fit(
        &self,
        stage: &str,
        heads: usize,
        conditioned: bool,
        rows: Vec<(Vec<f64>, Option<f64>, Vec<Option<f64>>)>,
    ) -> Result<Component> {
        let stream = format!("{}/{stage}", self.stream_kind());
        let count = rows.iter().filter(|r| r.2.iter().any(Option::is_some)).count();
        if count == 0 {
            return Err(Error::Config(format!(
                "{} stage `{stage}` has no training samples",
                self.kind.name()
            )));
        }
        let width = self.d + usize::from(conditioned);
        let model = MultiTaskModel::new(self.config, width, heads)?;
        let mut params = model.init_params(&stream)?;
        let (inputs, targets): (Vec<Vec<f64>>, Vec<Vec<Option<f64>>>) = rows
            .into_iter()
            .map(|(mut x, l, t)| {
                if let Some(l) = l {
                    x.push(l);
                }
                (x, t)
            })
            .unzip();
        fit_multihead(&model, &mut params, &inputs, &targets, self.train, &stream)?;
        Ok(Component {
            stage: stage.to_string(),
            model,
            params,
            samples: count,
        })
    }

    /// COL and the first SSL stage share their stream so they coincide.
    fn stream_kind(&self) -> &'static str {
        match self.kind {
            BaselineKind::Col | BaselineKind::Ssl => "multi",
            k => k.name(),
        }
    }

    fn point(&self, v: f64) -> f64 {
        if self.task.is_classification() {
            threshold(v)
        } else {
            v
        }
    }
}

fn pairs(data: &[Sample], swap: bool) -> Vec<(&Sample, Pair)> {
    data.iter()
        .map(|s| {
            let p = if swap {
                Pair { a: s.y2, b: s.y1 }
            } else {
                Pair { a: s.y1, b: s.y2 }
            };
            (s, p)
        })
        .collect()
}

/// Fits `kind` on the training samples. Every model uses `config`'s widths
/// and `train`'s optimizer settings; unlabeled samples are never used.
pub fn baseline_fit(
    kind: BaselineKind,
    data: &[Sample],
    config: &ModelConfig,
    train: &TrainConfig,
) -> Result<BaselinePredictor> {
    let d = crate::datahub::validate(data, config.task)?;
    let f = Fitter {
        kind,
        config,
        train,
        task: config.task,
        d,
    };
    let x = |s: &Sample| s.x.clone();
    let components = match kind {
        BaselineKind::Id => {
            let m1 = f.fit("y1", 1, false, data.iter().map(|s| (x(s), None, vec![s.y1])).collect())?;
            let m2 = f.fit("y2", 1, false, data.iter().map(|s| (x(s), None, vec![s.y2])).collect())?;
            vec![m1, m2]
        }
        BaselineKind::Col => {
            let rows = data
                .iter()
                .filter(|s| s.presence() == PresenceMask::FULL)
                .map(|s| (x(s), None, vec![s.y1, s.y2]))
                .collect();
            vec![f.fit("multi", 2, false, rows)?]
        }
        BaselineKind::Ssl => {
            let rows = data
                .iter()
                .filter(|s| s.presence() == PresenceMask::FULL)
                .map(|s| (x(s), None, vec![s.y1, s.y2]))
                .collect();
            let first = f.fit("multi", 2, false, rows)?;
            let mut rows = Vec::new();
            for s in data.iter().filter(|s| s.presence() != PresenceMask::NONE) {
                let out = first.eval(&s.x, None)?;
                let y1 = s.y1.unwrap_or_else(|| f.point(out[0]));
                let y2 = s.y2.unwrap_or_else(|| f.point(out[1]));
                rows.push((x(s), None, vec![Some(y1), Some(y2)]));
            }
            let second = f.fit("refit", 2, false, rows)?;
            vec![first, second]
        }
        BaselineKind::Ls => {
            let m1 = f.fit("b_given_x", 1, false, data.iter().map(|s| (x(s), None, vec![s.y2])).collect())?;
            let mut rows = Vec::new();
            for s in data {
                match (s.y1, s.y2) {
                    (Some(y1), Some(y2)) => rows.push((x(s), Some(y2), vec![Some(y1)])),
                    (Some(y1), None) => {
                        let b = f.point(m1.eval(&s.x, None)?[0]);
                        rows.push((x(s), Some(b), vec![Some(y1)]));
                    }
                    _ => {}
                }
            }
            let m2 = f.fit("a_given_b", 1, true, rows)?;
            vec![m1, m2]
        }
        BaselineKind::Dsml | BaselineKind::DsmlRev => {
            let p = pairs(data, kind == BaselineKind::DsmlRev);
            let m1 = f.fit("b_given_x", 1, false, p.iter().map(|(s, l)| (x(s), None, vec![l.b])).collect())?;
            let mut rows = Vec::new();
            let mut b_hat = vec![None; p.len()];
            for (i, (s, l)) in p.iter().enumerate() {
                match (l.a, l.b) {
                    (Some(a), Some(b)) => rows.push((x(s), Some(b), vec![Some(a)])),
                    (Some(a), None) => {
                        let b = f.point(m1.eval(&s.x, None)?[0]);
                        b_hat[i] = Some(b);
                        rows.push((x(s), Some(b), vec![Some(a)]));
                    }
                    _ => {}
                }
            }
            let m2 = f.fit("a_given_b", 1, true, rows)?;
            let mut rows = Vec::new();
            for (i, (s, l)) in p.iter().enumerate() {
                match (l.a, l.b) {
                    (Some(a), Some(b)) => rows.push((x(s), Some(a), vec![Some(b)])),
                    (Some(a), None) => rows.push((x(s), Some(a), vec![b_hat[i]])),
                    (None, Some(b)) => {
                        let a = f.point(m2.eval(&s.x, Some(b))?[0]);
                        rows.push((x(s), Some(a), vec![Some(b)]));
                    }
                    (None, None) => {}
                }
            }
            let m3 = f.fit("b_given_a", 1, true, rows)?;
            vec![m1, m2, m3]
        }
    };
    Ok(BaselinePredictor {
        kind,
        task: config.task,
        components,
    })
}

impl BaselinePredictor {
    /// Predicts each missing label of `sample`, using its visible label where
    /// the scheme conditions on one. Returns `(y1, y2)` with `None` for labels
    /// that were present.
    pub fn predict(&self, sample: &Sample) -> Result<(Option<Prediction>, Option<Prediction>)> {
        let presence = sample.presence();
        if presence == PresenceMask::FULL {
            return Err(Error::Contract("nothing to predict for a fully labeled sample".into()));
        }
        let (r1, r2) = self.raw(sample)?;
        let wrap = |v: f64| Prediction::new(self.task, v);
        Ok((
            sample.y1.is_none().then(|| wrap(r1)),
            sample.y2.is_none().then(|| wrap(r2)),
        ))
    }

    fn point(&self, v: f64) -> f64 {
        if self.task.is_classification() {
            threshold(v)
        } else {
            v
        }
    }

    /// Raw outputs for both labels; entries for visible labels are ignored.
    fn raw(&self, s: &Sample) -> Result<(f64, f64)> {
        let c = &self.components;
        let x = &s.x;
        Ok(match self.kind {
            BaselineKind::Id => (c[0].eval(x, None)?[0], c[1].eval(x, None)?[0]),
            BaselineKind::Col | BaselineKind::Ssl => {
                let out = c[c.len() - 1].eval(x, None)?;
                (out[0], out[1])
            }
            BaselineKind::Ls => {
                let y2 = match s.y2 {
                    Some(v) => v,
                    None => c[0].eval(x, None)?[0],
                };
                let y2_in = s.y2.unwrap_or_else(|| self.point(y2));
                (c[1].eval(x, Some(y2_in))?[0], y2)
            }
            BaselineKind::Dsml | BaselineKind::DsmlRev => {
                let rev = self.kind == BaselineKind::DsmlRev;
                let (a, b) = if rev { (s.y2, s.y1) } else { (s.y1, s.y2) };
                let (ra, rb) = match (a, b) {
                    (Some(a), None) => (a, c[2].eval(x, Some(a))?[0]),
                    (None, Some(b)) => (c[1].eval(x, Some(b))?[0], b),
                    _ => {
                        let b1 = c[0].eval(x, None)?[0];
                        let a1 = c[1].eval(x, Some(self.point(b1)))?[0];
                        let b2 = c[2].eval(x, Some(self.point(a1)))?[0];
                        (a1, b2)
                    }
                };
                if rev {
                    (rb, ra)
                } else {
                    (ra, rb)
                }
            }
        })
    }

    /// `(stage, samples)` per component.
    pub fn stage_counts(&self) -> Vec<(&str, usize)> {
        self.components.iter().map(|c| (c.stage.as_str(), c.samples)).collect()
    }
}
