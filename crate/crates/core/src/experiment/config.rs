//! Experiment configuration: a TOML document layered over a named preset.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::BaselineKind;
use crate::datahub::TaskKind;
use crate::diffcore::ClassWeights;
use crate::dualtower::ModelConfig;
use crate::error::{Error, Result};
use crate::inference::InferenceConfig;
use crate::training::{LossWeights, MarginalSubset, TrainConfig};

pub const DEFAULT_LEARNING_RATE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PresetName {
    Tox21,
    Higgs,
    Mof,
}

impl FromStr for PresetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tox21" => Ok(PresetName::Tox21),
            "higgs" => Ok(PresetName::Higgs),
            "mof" => Ok(PresetName::Mof),
            other => Err(Error::Config(format!(
                "unknown preset `{other}`, expected tox21, higgs or mof"
            ))),
        }
    }
}

/// Hyperparameter bundle of one benchmark family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Preset {
    pub name: PresetName,
    pub task: TaskKind,
    pub weights: LossWeights,
    pub batch_size: usize,
    pub epochs: usize,
    pub class_weights: Option<ClassWeights>,
    pub y0: f64,
    pub max_iterations: usize,
}

impl Preset {
    pub fn get(name: PresetName) -> Preset {
        let w = |l11, l21, l12, l22, ld| LossWeights {
            lambda11: l11,
            lambda21: l21,
            lambda12: l12,
            lambda22: l22,
            lambda_d: ld,
        };
        match name {
            PresetName::Tox21 => Preset {
                name,
                task: TaskKind::BinaryClassification,
                weights: w(2.0, 2.0, 1.0, 1.0, 0.2),
                batch_size: 4,
                epochs: 100,
                class_weights: Some(ClassWeights {
                    positive: 0.7,
                    negative: 0.3,
                }),
                y0: 0.5,
                max_iterations: 1000,
            },
            PresetName::Higgs => Preset {
                name,
                task: TaskKind::Regression,
                weights: w(1.0, 1.0, 1.0, 1.0, 0.0),
                batch_size: 4,
                epochs: 100,
                class_weights: None,
                y0: 1.0,
                max_iterations: 1000,
            },
            PresetName::Mof => Preset {
                name,
                task: TaskKind::Regression,
                weights: w(2.0, 2.0, 1.0, 1.0, 0.0),
                batch_size: 1,
                epochs: 100,
                class_weights: None,
                y0: 1.0,
                max_iterations: 1000,
            },
        }
    }
}

/// Learning schemes an experiment can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "DLL")]
    Dll,
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

impl Method {
    pub fn name(self) -> &'static str {
        match self.baseline() {
            Some(b) => b.name(),
            None => "DLL",
        }
    }

    pub fn baseline(self) -> Option<BaselineKind> {
        match self {
            Method::Dll => None,
            Method::Id => Some(BaselineKind::Id),
            Method::Col => Some(BaselineKind::Col),
            Method::Ssl => Some(BaselineKind::Ssl),
            Method::Ls => Some(BaselineKind::Ls),
            Method::Dsml => Some(BaselineKind::Dsml),
            Method::DsmlRev => Some(BaselineKind::DsmlRev),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataConfig {
    /// Generated data of the preset's task; `seed` fixes the dataset across
    /// run seeds, otherwise each run seed draws its own.
    Synthetic {
        #[serde(default = "default_n")]
        n: usize,
        #[serde(default = "default_d")]
        d: usize,
        #[serde(default)]
        seed: Option<u64>,
    },
    Csv { path: PathBuf },
}

fn default_n() -> usize {
    1000
}

fn default_d() -> usize {
    10
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig::Synthetic {
            n: default_n(),
            d: default_d(),
            seed: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MissingConfig {
    pub rate1: f64,
    pub rate2: f64,
}

impl Default for MissingConfig {
    fn default() -> Self {
        MissingConfig {
            rate1: 0.3,
            rate2: 0.3,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainOverrides {
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub lambda11: Option<f64>,
    pub lambda21: Option<f64>,
    pub lambda12: Option<f64>,
    pub lambda22: Option<f64>,
    pub lambda_d: Option<f64>,
    /// `[positive, negative]`; `[1, 1]` disables reweighting.
    pub class_weights: Option<[f64; 2]>,
    pub marginal_subset: Option<MarginalSubset>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelOverrides {
    pub encoder_hidden: Option<Vec<usize>>,
    pub embedding_hidden: Option<Vec<usize>>,
    pub tower_hidden: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InferenceOverrides {
    pub y0: Option<f64>,
    pub max_iterations: Option<usize>,
    pub epsilon: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub rates: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            rates: vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraceConfig {
    /// Samples written to `trace.csv`; metrics use every unlabeled test sample.
    pub max_samples: usize,
    /// Tolerance for the convergence histogram.
    pub epsilon: f64,
}

impl Default for TraceConfig {
    fn default() -> Self {
        TraceConfig {
            max_samples: 200,
            epsilon: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub preset: PresetName,
    #[serde(default)]
    pub task: Option<TaskKind>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub missing: MissingConfig,
    #[serde(default)]
    pub train: TrainOverrides,
    #[serde(default)]
    pub model: ModelOverrides,
    #[serde(default)]
    pub inference: InferenceOverrides,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub trace: TraceConfig,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_methods() -> Vec<Method> {
    vec![Method::Dll]
}

/// Settings after layering overrides on the preset.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub task: TaskKind,
    pub train: TrainConfig,
    pub inference: InferenceConfig,
}

impl ExperimentConfig {
    pub fn from_preset(preset: PresetName) -> Self {
        ExperimentConfig {
            preset,
            task: None,
            seeds: default_seeds(),
            methods: default_methods(),
            data: DataConfig::default(),
            missing: MissingConfig::default(),
            train: TrainOverrides::default(),
            model: ModelOverrides::default(),
            inference: InferenceOverrides::default(),
            sweep: SweepConfig::default(),
            trace: TraceConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            e => e,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn task(&self) -> TaskKind {
        self.task.unwrap_or(Preset::get(self.preset).task)
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds: at least one seed is required".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("methods: at least one method is required".into()));
        }
        for (k, v) in [("missing.rate1", self.missing.rate1), ("missing.rate2", self.missing.rate2)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{k}: rate must lie in [0, 1], got {v}")));
            }
        }
        if let Some(r) = self.sweep.rates.iter().find(|r| !(0.0..=1.0).contains(*r)) {
            return Err(Error::Config(format!("sweep.rates: rate must lie in [0, 1], got {r}")));
        }
        if let DataConfig::Synthetic { n, d, .. } = self.data {
            if n < 10 || d < 2 {
                return Err(Error::Config(format!("data: synthetic data needs n >= 10 and d >= 2, got n = {n}, d = {d}")));
            }
        }
        if self.trace.max_samples == 0 || !(self.trace.epsilon >= 0.0) {
            return Err(Error::Config("trace: max_samples must be >= 1 and epsilon >= 0".into()));
        }
        let r = self.resolve()?;
        r.train.validate().map_err(|e| Error::Config(format!("train: {e}")))?;
        r.inference.validate().map_err(|e| Error::Config(format!("inference: {e}")))?;
        if r.train.weights.lambda_d > 0.0 && !r.task.is_classification() {
            return Err(Error::Unsupported(
                "train.lambda_d: the duality loss needs a classification task".into(),
            ));
        }
        Ok(())
    }

    /// Train and inference settings; seeds are filled in per run.
    pub fn resolve(&self) -> Result<Resolved> {
        let p = Preset::get(self.preset);
        let task = self.task();
        let t = &self.train;
        let weights = LossWeights {
            lambda11: t.lambda11.unwrap_or(p.weights.lambda11),
            lambda21: t.lambda21.unwrap_or(p.weights.lambda21),
            lambda12: t.lambda12.unwrap_or(p.weights.lambda12),
            lambda22: t.lambda22.unwrap_or(p.weights.lambda22),
            lambda_d: t.lambda_d.unwrap_or(p.weights.lambda_d),
        };
        let class_weights = match t.class_weights {
            Some([pos, neg]) => Some(ClassWeights {
                positive: pos,
                negative: neg,
            }),
            None => p.class_weights,
        }
        .filter(|_| task.is_classification());
        let train = TrainConfig {
            epochs: t.epochs.unwrap_or(p.epochs),
            batch_size: t.batch_size.unwrap_or(p.batch_size),
            learning_rate: t.learning_rate.unwrap_or(DEFAULT_LEARNING_RATE),
            weights,
            class_weights,
            marginal_subset: t.marginal_subset.unwrap_or_default(),
            seed: 0,
        };
        let y0_default = if task == p.task {
            p.y0
        } else {
            InferenceConfig::for_task(task).y0
        };
        let inference = InferenceConfig {
            y0: self.inference.y0.unwrap_or(y0_default),
            max_iterations: self.inference.max_iterations.unwrap_or(p.max_iterations),
            epsilon: self.inference.epsilon,
        };
        Ok(Resolved {
            task,
            train,
            inference,
        })
    }

    /// Layer widths for input width `d`.
    pub fn model_config(&self, d: usize, seed: u64) -> Result<ModelConfig> {
        let mut c = ModelConfig::with_defaults(self.task(), d, seed);
        if let Some(h) = &self.model.encoder_hidden {
            c.encoder_widths = std::iter::once(d).chain(h.iter().copied()).collect();
        }
        if let Some(h) = &self.model.embedding_hidden {
            c.embedding_widths = std::iter::once(1).chain(h.iter().copied()).collect();
        }
        let tower_hidden = self
            .model
            .tower_hidden
            .clone()
            .unwrap_or_else(|| c.tower_widths[1..c.tower_widths.len() - 1].to_vec());
        let joined = c.encoder_widths.last().copied().unwrap_or(0)
            + c.embedding_widths.last().copied().unwrap_or(0);
        c.tower_widths = std::iter::once(joined)
            .chain(tower_hidden)
            .chain(std::iter::once(1))
            .collect();
        c.validate().map_err(|e| Error::Config(format!("model: {e}")))?;
        if c.encoder_widths.iter().chain(&c.embedding_widths).chain(&c.tower_widths).any(|w| *w == 0) {
            return Err(Error::Config("model: layer widths must be positive".into()));
        }
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_document_takes_preset_values() {
        let c = ExperimentConfig::from_toml("preset = \"higgs\"\n").unwrap();
        let r = c.resolve().unwrap();
        assert_eq!(r.task, TaskKind::Regression);
        assert_eq!(r.train.batch_size, 4);
        assert_eq!(r.train.learning_rate, 0.05);
        assert_eq!(r.inference.y0, 1.0);
        assert_eq!(r.inference.max_iterations, 1000);
        assert_eq!(c.seeds, vec![0]);
        assert_eq!(c.methods, vec![Method::Dll]);
    }

    #[test]
    fn overrides_apply() {
        let text = r#"
preset = "tox21"
seeds = [1, 2]
methods = ["DLL", "ID", "DSML_REV"]
[data]
source = "synthetic"
n = 200
d = 4
[missing]
rate1 = 0.1
rate2 = 0.2
[train]
epochs = 3
lambda_d = 0.0
class_weights = [1.0, 1.0]
[model]
encoder_hidden = [8]
tower_hidden = []
[inference]
epsilon = 1e-6
"#;
        let c = ExperimentConfig::from_toml(text).unwrap();
        let r = c.resolve().unwrap();
        assert_eq!(r.train.epochs, 3);
        assert_eq!(r.train.weights.lambda_d, 0.0);
        assert_eq!(r.train.weights.lambda11, 2.0);
        assert_eq!(r.train.class_weights.unwrap().positive, 1.0);
        assert_eq!(r.inference.epsilon, Some(1e-6));
        assert_eq!(c.methods[2], Method::DsmlRev);
        let m = c.model_config(4, 0).unwrap();
        assert_eq!(m.encoder_widths, vec![4, 8]);
        assert_eq!(m.tower_widths, vec![16, 1]);
        let back = ExperimentConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn errors_name_the_field() {
        let e = ExperimentConfig::from_toml("preset = \"higgs\"\n[train]\nepoch = 3\n").unwrap_err();
        assert!(matches!(e, Error::Config(_)));
        assert!(e.to_string().contains("epoch"), "{e}");
        let e = ExperimentConfig::from_toml("preset = \"higgs\"\n[missing]\nrate1 = 2.0\nrate2 = 0.0\n")
            .unwrap_err();
        assert!(e.to_string().contains("missing.rate1"), "{e}");
        let e = ExperimentConfig::from_toml("preset = \"higgs\"\nseeds = []\n").unwrap_err();
        assert!(e.to_string().contains("seeds"), "{e}");
        assert!(ExperimentConfig::from_toml("preset = \"nope\"\n").is_err());
        let e = ExperimentConfig::from_toml("preset = \"higgs\"\n[train]\nlambda_d = 0.5\n").unwrap_err();
        assert!(matches!(e, Error::Unsupported(_)));
    }
}
