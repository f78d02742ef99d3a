//! Dual-tower model: a shared encoder (theta0) feeding two label-conditioned
//! towers. Tower 2 with embedding 2 (theta2) realizes `f: (x, y1) -> y2`;
//! tower 1 with embedding 1 (theta1) realizes `g: (x, y2) -> y1`.

mod checkpoint;
mod multitask;

use serde::{Deserialize, Serialize};

pub use checkpoint::{
    load_dual_tower, load_multitask, save_dual_tower, save_multitask, CHECKPOINT_VERSION,
};
pub use multitask::{MultiTaskModel, MultiTaskParams};

use crate::datahub::TaskKind;
use crate::diffcore::{Activation, BoundMlp, Graph, MlpSpec, ParamGroup, Tensor, Var};
use crate::error::{Error, Result};
use crate::rng::substream;

pub const THETA0: &str = "theta0";
pub const THETA1: &str = "theta1";
pub const THETA2: &str = "theta2";

const ENCODER: &str = "encoder";
const EMBED1: &str = "embed1";
const TOWER1: &str = "tower1";
const EMBED2: &str = "embed2";
const TOWER2: &str = "tower2";

/// Layer widths for the model. The tower input width must equal the encoder
/// output width plus the embedding output width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub task: TaskKind,
    /// `[d, hidden..., encoded]`
    pub encoder_widths: Vec<usize>,
    /// `[1, ..., embedded]`
    pub embedding_widths: Vec<usize>,
    /// `[encoded + embedded, hidden..., 1]`
    pub tower_widths: Vec<usize>,
    pub seed: u64,
}

impl ModelConfig {
    /// Encoder `[d, 32, 16]`, embedding `[1, 8]`, towers `[24, 16, 1]`.
    pub fn with_defaults(task: TaskKind, input_dim: usize, seed: u64) -> Self {
        ModelConfig {
            task,
            encoder_widths: vec![input_dim, 32, 16],
            embedding_widths: vec![1, 8],
            tower_widths: vec![24, 16, 1],
            seed,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.encoder_widths.first().copied().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        let enc = self.encoder_widths.last().copied().unwrap_or(0);
        let emb = self.embedding_widths.last().copied().unwrap_or(0);
        if self.encoder_widths.len() < 2
            || self.embedding_widths.len() < 2
            || self.tower_widths.len() < 2
        {
            return Err(Error::Config(
                "encoder, embedding and tower each need at least two widths".into(),
            ));
        }
        if self.embedding_widths[0] != 1 {
            return Err(Error::Config(format!(
                "embedding input width must be 1, got {}",
                self.embedding_widths[0]
            )));
        }
        if self.tower_widths[0] != enc + emb {
            return Err(Error::Config(format!(
                "tower input width {} does not equal encoder output {enc} + embedding output {emb}",
                self.tower_widths[0]
            )));
        }
        if *self.tower_widths.last().unwrap() != 1 {
            return Err(Error::Config("towers must emit a single value".into()));
        }
        Ok(())
    }

    pub(crate) fn output_activation(&self) -> Activation {
        match self.task {
            TaskKind::BinaryClassification => Activation::Sigmoid,
            TaskKind::Regression => Activation::Identity,
        }
    }

    pub(crate) fn encoder_spec(&self) -> Result<MlpSpec> {
        MlpSpec::new(self.encoder_widths.clone(), Activation::Relu, Activation::Relu)
    }
}

/// The three disjoint parameter groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualTowerParams {
    pub theta0: ParamGroup,
    pub theta1: ParamGroup,
    pub theta2: ParamGroup,
}

/// One tower bound to its parameters plus reusable buffers.
pub struct BoundTower<'p> {
    embedding: BoundMlp<'p>,
    tower: BoundMlp<'p>,
    encoded_width: usize,
    joined: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
}

impl BoundTower<'_> {
    pub fn set_encoding(&mut self, encoded: &[f64]) -> Result<()> {
        if encoded.len() != self.encoded_width {
            return Err(Error::Dimension(format!(
                "encoding has width {}, towers expect {}",
                encoded.len(),
                self.encoded_width
            )));
        }
        self.joined[..self.encoded_width].copy_from_slice(encoded);
        Ok(())
    }

    /// Tower output at the current encoding and `label`.
    pub fn eval(&mut self, label: f64) -> Result<f64> {
        self.embedding.eval_into(&[label], &mut self.a, &mut self.b)?;
        self.joined[self.encoded_width..].copy_from_slice(&self.a);
        self.tower.eval_into(&self.joined, &mut self.a, &mut self.b)?;
        Ok(self.a[0])
    }
}

/// Selects tower 1 (`g`) or tower 2 (`f`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tower {
    One,
    Two,
}

impl DualTowerParams {
    pub fn groups(&self) -> [&ParamGroup; 3] {
        [&self.theta0, &self.theta1, &self.theta2]
    }

    /// Zeroes the final layer of a tower, so it emits `act(0)`.
    pub fn zero_tower_output(&mut self, tower: Tower) {
        let (group, prefix) = match tower {
            Tower::One => (&mut self.theta1, TOWER1),
            Tower::Two => (&mut self.theta2, TOWER2),
        };
        let last = group
            .keys()
            .filter(|k| k.starts_with(prefix) && k.ends_with(".weight"))
            .count()
            - 1;
        for key in [MlpSpec::weight_key(prefix, last), MlpSpec::bias_key(prefix, last)] {
            if let Some(t) = group.get_mut(&key) {
                t.values_mut().iter_mut().for_each(|v| *v = 0.0);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualTower {
    config: ModelConfig,
    encoder: MlpSpec,
    embedding: MlpSpec,
    tower: MlpSpec,
}

impl DualTower {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let encoder = config.encoder_spec()?;
        let embedding =
            MlpSpec::new(config.embedding_widths.clone(), Activation::Relu, Activation::Relu)?;
        let tower = MlpSpec::new(
            config.tower_widths.clone(),
            Activation::Relu,
            config.output_activation(),
        )?;
        Ok(DualTower {
            config,
            encoder,
            embedding,
            tower,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn task(&self) -> TaskKind {
        self.config.task
    }

    /// Seeded initialization; each group draws from its own sub-stream.
    pub fn init_params(&self) -> Result<DualTowerParams> {
        let seed = self.config.seed;
        let mut theta0 = ParamGroup::new(THETA0);
        self.encoder
            .init_params(&mut theta0, ENCODER, &mut substream(seed, "init/theta0"))?;
        let mut theta1 = ParamGroup::new(THETA1);
        let mut rng = substream(seed, "init/theta1");
        self.embedding.init_params(&mut theta1, EMBED1, &mut rng)?;
        self.tower.init_params(&mut theta1, TOWER1, &mut rng)?;
        let mut theta2 = ParamGroup::new(THETA2);
        let mut rng = substream(seed, "init/theta2");
        self.embedding.init_params(&mut theta2, EMBED2, &mut rng)?;
        self.tower.init_params(&mut theta2, TOWER2, &mut rng)?;
        Ok(DualTowerParams {
            theta0,
            theta1,
            theta2,
        })
    }

    fn tower_parts<'p>(&self, params: &'p DualTowerParams, tower: Tower) -> (&'p ParamGroup, &'static str, &'static str) {
        match tower {
            Tower::One => (&params.theta1, EMBED1, TOWER1),
            Tower::Two => (&params.theta2, EMBED2, TOWER2),
        }
    }

    /// Recorded encoder pass over `[n, d]` features.
    pub fn encode_graph(&self, graph: &mut Graph, params: &DualTowerParams, x: Var) -> Result<Var> {
        self.encoder.forward(graph, &params.theta0, ENCODER, x)
    }

    /// Recorded tower pass: `[n, encoded]` encodings and `[n, 1]` label inputs
    /// to `[n, 1]` outputs.
    pub fn tower_graph(
        &self,
        graph: &mut Graph,
        params: &DualTowerParams,
        tower: Tower,
        encoded: Var,
        label: Var,
    ) -> Result<Var> {
        let (group, embed, head) = self.tower_parts(params, tower);
        let e = self.embedding.forward(graph, group, embed, label)?;
        let joined = graph.concat(encoded, e)?;
        self.tower.forward(graph, group, head, joined)
    }

    /// Recorded `f(x, y1)` over a batch.
    pub fn f_graph(&self, graph: &mut Graph, params: &DualTowerParams, encoded: Var, y1: Var) -> Result<Var> {
        self.tower_graph(graph, params, Tower::Two, encoded, y1)
    }

    /// Recorded `g(x, y2)` over a batch.
    pub fn g_graph(&self, graph: &mut Graph, params: &DualTowerParams, encoded: Var, y2: Var) -> Result<Var> {
        self.tower_graph(graph, params, Tower::One, encoded, y2)
    }

    /// Graph-free encoder pass on one sample.
    pub fn encode(&self, params: &DualTowerParams, x: &[f64]) -> Result<Vec<f64>> {
        self.encoder.eval(&params.theta0, ENCODER, x)
    }

    /// Graph-free tower pass from a cached encoding.
    pub fn tower_from_encoding(
        &self,
        params: &DualTowerParams,
        tower: Tower,
        encoded: &[f64],
        label: f64,
    ) -> Result<f64> {
        let mut bound = self.bind_tower(params, tower)?;
        bound.set_encoding(encoded)?;
        bound.eval(label)
    }

    /// Tower with parameters resolved, for repeated evaluation at one encoding.
    pub fn bind_tower<'p>(&self, params: &'p DualTowerParams, tower: Tower) -> Result<BoundTower<'p>> {
        let (group, embed, head) = self.tower_parts(params, tower);
        let enc = self.encoder.output_width();
        Ok(BoundTower {
            embedding: self.embedding.bind(group, embed)?,
            tower: self.tower.bind(group, head)?,
            encoded_width: enc,
            joined: vec![0.0; enc + self.embedding.output_width()],
            a: Vec::new(),
            b: Vec::new(),
        })
    }

    /// `f(x, y1)`: prediction for `y2` (class-1 probability for classification).
    pub fn f_forward(&self, params: &DualTowerParams, x: &[f64], y1: f64) -> Result<f64> {
        let enc = self.encode(params, x)?;
        self.tower_from_encoding(params, Tower::Two, &enc, y1)
    }

    /// `g(x, y2)`: prediction for `y1`.
    pub fn g_forward(&self, params: &DualTowerParams, x: &[f64], y2: f64) -> Result<f64> {
        let enc = self.encode(params, x)?;
        self.tower_from_encoding(params, Tower::One, &enc, y2)
    }

    /// Recorded single-sample `f` or `g`, returning the graph and output node.
    pub fn record_single(
        &self,
        params: &DualTowerParams,
        tower: Tower,
        x: &[f64],
        label: f64,
    ) -> Result<(Graph, Var)> {
        let mut g = Graph::new();
        for group in params.groups() {
            g.register_group(group)?;
        }
        let xv = g.constant(Tensor::matrix(1, x.len(), x.to_vec())?);
        let lv = g.constant(Tensor::matrix(1, 1, vec![label])?);
        let enc = self.encode_graph(&mut g, params, xv)?;
        let out = self.tower_graph(&mut g, params, tower, enc, lv)?;
        Ok((g, out))
    }
}
