//! JSON checkpoints. Floats are written with shortest round-trip formatting and
//! parsed with correct rounding, so a save/load cycle is bit-exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DualTowerParams, ModelConfig, MultiTaskParams};
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;
const FORMAT: &str = "duallabel-checkpoint";

#[derive(Serialize, Deserialize)]
struct Envelope<T> {
    format: String,
    version: u32,
    kind: String,
    config: ModelConfig,
    params: T,
}

fn save<T: Serialize>(path: &Path, kind: &str, config: &ModelConfig, params: &T) -> Result<()> {
    let env = Envelope {
        format: FORMAT.to_string(),
        version: CHECKPOINT_VERSION,
        kind: kind.to_string(),
        config: config.clone(),
        params,
    };
    let text = serde_json::to_string(&env)
        .map_err(|e| Error::Numeric(format!("cannot serialize checkpoint: {e}")))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn load<T: for<'de> Deserialize<'de>>(path: &Path, kind: &str) -> Result<(ModelConfig, T)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let env: Envelope<T> = serde_json::from_str(&text)
        .map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
    if env.format != FORMAT || env.version != CHECKPOINT_VERSION || env.kind != kind {
        return Err(Error::Schema(format!(
            "{}: expected {FORMAT} v{CHECKPOINT_VERSION} `{kind}`, found {} v{} `{}`",
            path.display(),
            env.format,
            env.version,
            env.kind
        )));
    }
    Ok((env.config, env.params))
}

pub fn save_dual_tower(path: impl AsRef<Path>, config: &ModelConfig, params: &DualTowerParams) -> Result<()> {
    save(path.as_ref(), "dual-tower", config, params)
}

pub fn load_dual_tower(path: impl AsRef<Path>) -> Result<(ModelConfig, DualTowerParams)> {
    load(path.as_ref(), "dual-tower")
}

pub fn save_multitask(path: impl AsRef<Path>, config: &ModelConfig, params: &MultiTaskParams) -> Result<()> {
    save(path.as_ref(), "multi-task", config, params)
}

pub fn load_multitask(path: impl AsRef<Path>) -> Result<(ModelConfig, MultiTaskParams)> {
    load(path.as_ref(), "multi-task")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datahub::TaskKind;
    use crate::dualtower::{DualTower, MultiTaskModel};

    #[test]
    fn round_trip_is_bit_exact() {
        let cfg = ModelConfig::with_defaults(TaskKind::BinaryClassification, 6, 42);
        let params = DualTower::new(cfg.clone()).unwrap().init_params().unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        save_dual_tower(&path, &cfg, &params).unwrap();
        let (cfg2, params2) = load_dual_tower(&path).unwrap();
        assert_eq!(cfg, cfg2);
        for (a, b) in params.groups().iter().zip(params2.groups()) {
            for ((ka, ta), (kb, tb)) in a.iter().zip(b.iter()) {
                assert_eq!(ka, kb);
                let bits_a: Vec<u64> = ta.values().iter().map(|v| v.to_bits()).collect();
                let bits_b: Vec<u64> = tb.values().iter().map(|v| v.to_bits()).collect();
                assert_eq!(bits_a, bits_b);
            }
        }

        let mt = MultiTaskModel::marginal(&cfg).unwrap().init_params("mt").unwrap();
        let p = dir.path().join("mt.json");
        save_multitask(&p, &cfg, &mt).unwrap();
        assert_eq!(load_multitask(&p).unwrap().1, mt);
        assert!(load_dual_tower(&p).is_err());
    }
}
