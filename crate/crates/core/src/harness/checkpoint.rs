//! Versioned JSON checkpoints of named parameter tensors.
//!
//! Tensor names look like `population.policy.0.layer1.weight`; optimizer
//! moments live under the same names with `.adam_m` / `.adam_v` appended and
//! step counters under `<network>.adam_t`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::RunConfig;
use crate::nn::Mlp;
use crate::ppo::{GovernmentModel, Network, PopulationModel, Trainer};

pub const FORMAT: &str = "econsim-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("cannot read checkpoint {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("unsupported checkpoint {format} v{version}")]
    Version { format: String, version: u32 },
    #[error("environment config hash {found} does not match {expected}")]
    EnvMismatch { expected: String, found: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config_hash: String,
    pub env_hash: String,
    pub seed: u64,
    pub update: u64,
    pub global_step: u64,
    pub run: RunConfig,
    pub tensors: BTreeMap<String, Tensor>,
    pub optimizer: BTreeMap<String, Tensor>,
    pub optimizer_steps: BTreeMap<String, u64>,
}

fn put_mlp(prefix: &str, mlp: &Mlp<f32>, out: &mut BTreeMap<String, Tensor>) {
    for (l, layer) in mlp.layers.iter().enumerate() {
        out.insert(
            format!("{prefix}.layer{l}.weight"),
            Tensor {
                shape: layer.weight.shape().to_vec(),
                data: layer.weight.iter().copied().collect(),
            },
        );
        out.insert(
            format!("{prefix}.layer{l}.bias"),
            Tensor {
                shape: layer.bias.shape().to_vec(),
                data: layer.bias.to_vec(),
            },
        );
    }
}

fn take_mlp(prefix: &str, mlp: &mut Mlp<f32>, from: &BTreeMap<String, Tensor>) -> Result<(), CheckpointError> {
    for (l, layer) in mlp.layers.iter_mut().enumerate() {
        let get = |suffix: &str, shape: &[usize]| {
            let name = format!("{prefix}.layer{l}.{suffix}");
            let t = from
                .get(&name)
                .ok_or_else(|| CheckpointError::Corrupt(format!("missing tensor {name}")))?;
            if t.shape != shape || t.data.len() != shape.iter().product::<usize>() {
                return Err(CheckpointError::Corrupt(format!(
                    "tensor {name} has shape {:?}, expected {shape:?}",
                    t.shape
                )));
            }
            Ok(t.data.clone())
        };
        let (i, o) = layer.weight.dim();
        layer.weight = Array2::from_shape_vec((i, o), get("weight", &[i, o])?).expect("checked shape");
        layer.bias = Array1::from_vec(get("bias", &[o])?);
    }
    Ok(())
}

fn networks<'a>(pop: &'a PopulationModel, gov: Option<&'a GovernmentModel>) -> Vec<(String, &'a Network)> {
    let mut v = Vec::new();
    for (k, n) in pop.policies.iter().enumerate() {
        v.push((format!("population.policy.{k}"), n));
    }
    for (k, n) in pop.values.iter().enumerate() {
        v.push((format!("population.value.{k}"), n));
    }
    if let Some(g) = gov {
        v.push(("government.policy".to_string(), &g.policy));
        v.push(("government.value".to_string(), &g.value));
    }
    v
}

fn networks_mut<'a>(
    pop: &'a mut PopulationModel,
    gov: Option<&'a mut GovernmentModel>,
) -> Vec<(String, &'a mut Network)> {
    let mut v = Vec::new();
    for (k, n) in pop.policies.iter_mut().enumerate() {
        v.push((format!("population.policy.{k}"), n));
    }
    for (k, n) in pop.values.iter_mut().enumerate() {
        v.push((format!("population.value.{k}"), n));
    }
    if let Some(g) = gov {
        v.push(("government.policy".to_string(), &mut g.policy));
        v.push(("government.value".to_string(), &mut g.value));
    }
    v
}

impl Checkpoint {
    pub fn from_trainer(run: &RunConfig, trainer: &Trainer) -> Self {
        let mut tensors = BTreeMap::new();
        let mut optimizer = BTreeMap::new();
        let mut optimizer_steps = BTreeMap::new();
        for (name, net) in networks(&trainer.population, trainer.government.as_ref()) {
            put_mlp(&name, &net.params, &mut tensors);
            put_mlp(&format!("{name}.adam_m"), &net.opt.m, &mut optimizer);
            put_mlp(&format!("{name}.adam_v"), &net.opt.v, &mut optimizer);
            optimizer_steps.insert(format!("{name}.adam_t"), net.opt.t);
        }
        Checkpoint {
            format: FORMAT.to_string(),
            version: VERSION,
            config_hash: run.config_hash(),
            env_hash: run.env_hash(),
            seed: run.seed,
            update: trainer.update,
            global_step: trainer.global_step,
            run: run.clone(),
            tensors,
            optimizer,
            optimizer_steps,
        }
    }

    /// Rebuilds the models this checkpoint was taken from.
    pub fn models(&self) -> Result<(PopulationModel, Option<GovernmentModel>), CheckpointError> {
        let trainer = Trainer::new(self.run.env.clone(), self.run.train.clone(), self.run.seed)
            .map_err(|e| CheckpointError::Corrupt(format!("embedded config: {e}")))?;
        let mut pop = trainer.population;
        let mut gov = trainer.government;
        for (name, net) in networks_mut(&mut pop, gov.as_mut()) {
            take_mlp(&name, &mut net.params, &self.tensors)?;
            take_mlp(&format!("{name}.adam_m"), &mut net.opt.m, &self.optimizer)?;
            take_mlp(&format!("{name}.adam_v"), &mut net.opt.v, &self.optimizer)?;
            net.opt.t = *self
                .optimizer_steps
                .get(&format!("{name}.adam_t"))
                .ok_or_else(|| CheckpointError::Corrupt(format!("missing {name}.adam_t")))?;
        }
        let expected = networks(&pop, gov.as_ref()).len() * 2;
        if self.tensors.len() != expected * pop.policies[0].params.layers.len() {
            return Err(CheckpointError::Corrupt(format!(
                "{} tensors, expected {}",
                self.tensors.len(),
                expected * pop.policies[0].params.layers.len()
            )));
        }
        Ok((pop, gov))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("serializable checkpoint")
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        fs::write(path, self.to_json())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let text = fs::read_to_string(path).map_err(|source| CheckpointError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CheckpointError> {
        let head: serde_json::Value =
            serde_json::from_str(text).map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
        let format = head.get("format").and_then(|v| v.as_str()).unwrap_or_default();
        let version = head.get("version").and_then(|v| v.as_u64()).unwrap_or(0) as u32;
        if format != FORMAT || version != VERSION {
            return Err(CheckpointError::Version {
                format: format.to_string(),
                version,
            });
        }
        let ckpt: Checkpoint = serde_json::from_value(head).map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
        if ckpt.env_hash != ckpt.run.env_hash() {
            return Err(CheckpointError::Corrupt(
                "env hash does not match embedded config".into(),
            ));
        }
        Ok(ckpt)
    }

    /// Fails unless the checkpoint was trained on `env_hash`, or `force` is set.
    pub fn check_env(&self, env_hash: &str, force: bool) -> Result<(), CheckpointError> {
        if force || self.env_hash == env_hash {
            Ok(())
        } else {
            Err(CheckpointError::EnvMismatch {
                expected: env_hash.to_string(),
                found: self.env_hash.clone(),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ppo::{Preset, SharingMode};

    fn small_run(mode: SharingMode) -> RunConfig {
        let mut run = RunConfig::from_preset(Preset::Section4Default);
        run.env.population_size = 3;
        run.train.sharing_mode = mode;
        run.train.hidden_width = 8;
        run.train.shared_hidden_width = 8;
        run.train.num_envs = 1;
        run.train.rollout_length = 10;
        run.train.total_timesteps = 20;
        run
    }

    #[test]
    fn round_trip_restores_models() {
        for mode in [SharingMode::Shared, SharingMode::CtdeNaive] {
            let run = small_run(mode);
            let mut t = Trainer::new(run.env.clone(), run.train.clone(), run.seed).unwrap();
            t.step().unwrap();
            let ck = Checkpoint::from_trainer(&run, &t);
            let text = ck.to_json();
            let back = Checkpoint::parse(&text).unwrap();
            assert_eq!(back.to_json(), text);
            let (pop, gov) = back.models().unwrap();
            assert_eq!(pop, t.population);
            assert_eq!(gov, t.government);
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(Checkpoint::parse("{"), Err(CheckpointError::Corrupt(_))));
        assert!(matches!(
            Checkpoint::parse(r#"{"format":"other","version":1}"#),
            Err(CheckpointError::Version { .. })
        ));
        let run = small_run(SharingMode::Shared);
        let t = Trainer::new(run.env.clone(), run.train.clone(), 0).unwrap();
        let mut ck = Checkpoint::from_trainer(&run, &t);
        ck.tensors.remove("population.value.0.layer2.bias");
        let back = Checkpoint::parse(&ck.to_json()).unwrap();
        assert!(matches!(back.models(), Err(CheckpointError::Corrupt(_))));
    }

    #[test]
    fn env_hash_guard() {
        let run = small_run(SharingMode::Shared);
        let t = Trainer::new(run.env.clone(), run.train.clone(), 0).unwrap();
        let ck = Checkpoint::from_trainer(&run, &t);
        assert!(ck.check_env(&run.env_hash(), false).is_ok());
        assert!(ck.check_env("deadbeef", false).is_err());
        assert!(ck.check_env("deadbeef", true).is_ok());
    }
}
