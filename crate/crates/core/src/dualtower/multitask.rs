//! Shared encoder with one or more scalar heads. With two heads this is the
//! marginal model `M` estimating `P(y1|x)` and `P(y2|x)`; the baselines reuse
//! it with one head and arbitrary inputs.

use serde::{Deserialize, Serialize};

use super::ModelConfig;
use crate::diffcore::{Activation, Graph, MlpSpec, ParamGroup, Var};
use crate::error::{Error, Result};
use crate::rng::substream;

const ENCODER: &str = "encoder";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiTaskParams {
    pub shared: ParamGroup,
    pub heads: Vec<ParamGroup>,
}

impl MultiTaskParams {
    pub fn groups(&self) -> impl Iterator<Item = &ParamGroup> {
        std::iter::once(&self.shared).chain(&self.heads)
    }

    pub fn groups_mut(&mut self) -> impl Iterator<Item = &mut ParamGroup> {
        std::iter::once(&mut self.shared).chain(self.heads.iter_mut())
    }

    /// Zeroes the last layer of every head.
    pub fn zero_heads(&mut self) {
        for h in &mut self.heads {
            let layers = h.keys().filter(|k| k.ends_with(".weight")).count();
            let last = layers - 1;
            for key in [MlpSpec::weight_key("head", last), MlpSpec::bias_key("head", last)] {
                if let Some(t) = h.get_mut(&key) {
                    t.values_mut().iter_mut().for_each(|v| *v = 0.0);
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiTaskModel {
    config: ModelConfig,
    encoder: MlpSpec,
    head: MlpSpec,
    n_heads: usize,
}

impl MultiTaskModel {
    /// Encoder from `config.encoder_widths` (with the input width replaced by
    /// `input_dim`), heads `[encoded, tower hidden..., 1]`.
    pub fn new(config: &ModelConfig, input_dim: usize, n_heads: usize) -> Result<Self> {
        if n_heads == 0 {
            return Err(Error::Config("a multi-task model needs at least one head".into()));
        }
        let mut config = config.clone();
        if let Some(w) = config.encoder_widths.first_mut() {
            *w = input_dim;
        }
        let encoder = config.encoder_spec()?;
        let mut head_widths = vec![encoder.output_width()];
        head_widths.extend_from_slice(config.tower_widths.get(1..).unwrap_or(&[]));
        if head_widths.len() < 2 {
            head_widths.push(1);
        }
        let head = MlpSpec::new(head_widths, Activation::Relu, config.output_activation())?;
        Ok(MultiTaskModel {
            config,
            encoder,
            head,
            n_heads,
        })
    }

    /// The two-head marginal model over the dual-tower feature width.
    pub fn marginal(config: &ModelConfig) -> Result<Self> {
        Self::new(config, config.input_dim(), 2)
    }

    pub fn n_heads(&self) -> usize {
        self.n_heads
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.input_width()
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// `stream` separates independent models built from the same seed.
    pub fn init_params(&self, stream: &str) -> Result<MultiTaskParams> {
        let seed = self.config.seed;
        let mut shared = ParamGroup::new(format!("{stream}/shared"));
        self.encoder
            .init_params(&mut shared, ENCODER, &mut substream(seed, &format!("init/{stream}/shared")))?;
        let heads = (0..self.n_heads)
            .map(|h| {
                let mut g = ParamGroup::new(format!("{stream}/head{}", h + 1));
                self.head.init_params(
                    &mut g,
                    "head",
                    &mut substream(seed, &format!("init/{stream}/head{}", h + 1)),
                )?;
                Ok(g)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(MultiTaskParams { shared, heads })
    }

    /// Recorded pass: `[n, d]` input to one `[n, 1]` output per head.
    pub fn forward_graph(&self, graph: &mut Graph, params: &MultiTaskParams, x: Var) -> Result<Vec<Var>> {
        self.check(params)?;
        let h = self.encoder.forward(graph, &params.shared, ENCODER, x)?;
        params
            .heads
            .iter()
            .map(|hp| self.head.forward(graph, hp, "head", h))
            .collect()
    }

    /// Graph-free pass on one row, one value per head.
    pub fn forward(&self, params: &MultiTaskParams, x: &[f64]) -> Result<Vec<f64>> {
        self.check(params)?;
        let h = self.encoder.eval(&params.shared, ENCODER, x)?;
        params
            .heads
            .iter()
            .map(|hp| Ok(self.head.eval(hp, "head", &h)?[0]))
            .collect()
    }

    /// Marginal estimates `(P(y1=1|x), P(y2=1|x))` for classification, or the
    /// two regression means.
    pub fn m_forward(&self, params: &MultiTaskParams, x: &[f64]) -> Result<(f64, f64)> {
        let out = self.forward(params, x)?;
        if out.len() != 2 {
            return Err(Error::Contract(format!("m_forward needs two heads, model has {}", out.len())));
        }
        Ok((out[0], out[1]))
    }

    fn check(&self, params: &MultiTaskParams) -> Result<()> {
        if params.heads.len() != self.n_heads {
            return Err(Error::Dimension(format!(
                "model has {} heads, parameters have {}",
                self.n_heads,
                params.heads.len()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datahub::TaskKind;

    #[test]
    fn zeroed_heads_give_half() {
        let cfg = ModelConfig::with_defaults(TaskKind::BinaryClassification, 5, 1);
        let m = MultiTaskModel::marginal(&cfg).unwrap();
        let mut p = m.init_params("mt").unwrap();
        p.zero_heads();
        assert_eq!(m.m_forward(&p, &[0.1, 0.2, 0.3, 0.4, 0.5]).unwrap(), (0.5, 0.5));
    }

    #[test]
    fn outputs_are_deterministic_and_finite() {
        let cfg = ModelConfig::with_defaults(TaskKind::Regression, 3, 2);
        let m = MultiTaskModel::marginal(&cfg).unwrap();
        let p = m.init_params("mt").unwrap();
        let a = m.m_forward(&p, &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(a, m.m_forward(&p, &[1.0, 2.0, 3.0]).unwrap());
        assert!(a.0.is_finite() && a.1.is_finite());
        assert!(m.m_forward(&p, &[1.0]).is_err());
    }

    #[test]
    fn groups_are_disjoint() {
        let cfg = ModelConfig::with_defaults(TaskKind::Regression, 3, 2);
        let p = MultiTaskModel::marginal(&cfg).unwrap().init_params("mt").unwrap();
        let names: Vec<&str> = p.groups().map(|g| g.name()).collect();
        assert_eq!(names, vec!["mt/shared", "mt/head1", "mt/head2"]);
    }
}
