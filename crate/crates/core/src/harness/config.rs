//! Run configuration files.
//!
//! A config file is TOML restricted to flat dotted keys, one `key = value`
//! per line:
//!
//! ```toml
//! preset = "free_market"
//! seed = 3
//! name = "fm-3"
//! env.population_size = 4
//! env.skill_init.kind = "pareto_noise"
//! train.total_timesteps = 200000
//! train.sharing_mode = "independent"
//! ```
//!
//! Top-level keys are `preset`, `seed`, `name` and `output_dir`; everything
//! else lives under `env.` or `train.` and overrides the preset's value.
//! Keys not present in the resolved configuration are rejected by name.
//! Integers are accepted where a float is expected.

use std::fmt::Write as _;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::{Table, Value};

use crate::config::{ConfigError, EnvConfig};
use crate::ppo::{Preset, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    pub seed: u64,
    pub preset: Preset,
    /// Where outputs go; when unset the harness picks `<root>/<name>`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub env: EnvConfig,
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn from_preset(preset: Preset) -> Self {
        let (env, train) = preset.configs();
        RunConfig {
            name: preset.name().to_string(),
            seed: 0,
            preset,
            output_dir: None,
            env,
            train,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.env.validate()?;
        self.train.validate()?;
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(ConfigError::invalid("name", "must be a non-empty plain file name"));
        }
        Ok(())
    }

    /// Parses a config file. The preset named in the file (default
    /// `section4_default`) supplies every value the file leaves out.
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let table: Table = text
            .parse()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        let preset = match table.get("preset") {
            None => Preset::Section4Default,
            Some(Value::String(s)) => s.parse()?,
            Some(_) => return Err(ConfigError::invalid("preset", "must be a string")),
        };
        let mut config = RunConfig::from_preset(preset);
        let mut overrides = Vec::new();
        flatten("", &table, &mut overrides);
        config.apply(overrides)?;
        Ok(config)
    }

    /// Applies `key=value` overrides, where the value is parsed as a TOML
    /// value and falls back to a bare string.
    pub fn apply_assignments<S: AsRef<str>>(&mut self, assignments: &[S]) -> Result<(), ConfigError> {
        let mut pairs = Vec::new();
        for a in assignments {
            let a = a.as_ref();
            let (key, raw) = a
                .split_once('=')
                .ok_or_else(|| ConfigError::Parse(format!("expected key=value, got `{a}`")))?;
            let key = key.trim();
            let raw = raw.trim();
            let value = format!("v = {raw}")
                .parse::<Table>()
                .ok()
                .and_then(|mut t| t.remove("v"))
                .unwrap_or_else(|| Value::String(raw.to_string()));
            pairs.push((key.to_string(), value));
        }
        if let Some((_, Value::String(p))) = pairs.iter().find(|(k, _)| k == "preset") {
            let preset: Preset = p.parse()?;
            let (env, train) = preset.configs();
            self.preset = preset;
            self.env = env;
            self.train = train;
        }
        self.apply(pairs)
    }

    fn apply(&mut self, pairs: Vec<(String, Value)>) -> Result<(), ConfigError> {
        let mut current = Table::try_from(&*self).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let mut known = Vec::new();
        flatten("", &current, &mut known);
        for (key, value) in pairs {
            if key == "preset" {
                continue;
            }
            let optional = key == "output_dir";
            let existing = known.iter().find(|(k, _)| *k == key).map(|(_, v)| v);
            let value = match existing {
                Some(old) => coerce(&key, old, value)?,
                None if optional => match value {
                    Value::String(_) => value,
                    _ => return Err(ConfigError::invalid(key, "must be a string")),
                },
                None => return Err(ConfigError::UnknownKey(key)),
            };
            set_path(&mut current, &key, value);
        }
        *self = current
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        self.validate()
    }

    /// Resolved configuration as flat dotted `key = value` lines.
    pub fn to_toml(&self) -> String {
        let table = Table::try_from(self).expect("serializable config");
        let mut pairs = Vec::new();
        flatten("", &table, &mut pairs);
        let mut out = String::new();
        for (k, v) in pairs {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    /// Hash over the environment and training settings (not seed, name or
    /// output location), hex encoded.
    pub fn config_hash(&self) -> String {
        let canon = serde_json::json!({ "env": self.env, "train": self.train, "preset": self.preset });
        short_hash(&canon)
    }

    pub fn env_hash(&self) -> String {
        env_hash(&self.env)
    }
}

pub fn env_hash(env: &EnvConfig) -> String {
    short_hash(&serde_json::to_value(env).expect("serializable"))
}

fn short_hash(value: &serde_json::Value) -> String {
    let bytes = serde_json::to_vec(value).expect("serializable");
    let digest = Sha256::digest(&bytes);
    digest[..8].iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn flatten(prefix: &str, table: &Table, out: &mut Vec<(String, Value)>) {
    for (k, v) in table {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            Value::Table(t) => flatten(&key, t, out),
            other => out.push((key, other.clone())),
        }
    }
}

fn set_path(table: &mut Table, key: &str, value: Value) {
    let mut parts = key.split('.').peekable();
    let mut t = table;
    while let Some(part) = parts.next() {
        if parts.peek().is_none() {
            t.insert(part.to_string(), value);
            return;
        }
        t = t
            .entry(part.to_string())
            .or_insert_with(|| Value::Table(Table::new()))
            .as_table_mut()
            .expect("path through tables");
    }
}

fn type_name(v: &Value) -> &'static str {
    match v {
        Value::String(_) => "a string",
        Value::Integer(_) => "an integer",
        Value::Float(_) => "a number",
        Value::Boolean(_) => "a boolean",
        Value::Datetime(_) => "a datetime",
        Value::Array(_) => "an array",
        Value::Table(_) => "a table",
    }
}

fn coerce(key: &str, old: &Value, new: Value) -> Result<Value, ConfigError> {
    match (old, new) {
        (Value::Float(_), Value::Integer(i)) => Ok(Value::Float(i as f64)),
        (Value::Array(a), Value::Array(b)) => {
            let elem = a.first();
            let b = b
                .into_iter()
                .map(|v| match (elem, v) {
                    (Some(Value::Float(_)), Value::Integer(i)) => Ok(Value::Float(i as f64)),
                    (Some(e), v) if std::mem::discriminant(e) != std::mem::discriminant(&v) => Err(
                        ConfigError::invalid(key, format!("array elements must be {}", type_name(e))),
                    ),
                    (_, v) => Ok(v),
                })
                .collect::<Result<Vec<_>, _>>()?;
            Ok(Value::Array(b))
        }
        (o, n) if std::mem::discriminant(o) == std::mem::discriminant(&n) => Ok(n),
        (o, n) => Err(ConfigError::invalid(
            key,
            format!("expected {}, got {}", type_name(o), type_name(&n)),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ppo::SharingMode;

    #[test]
    fn file_overrides_preset() {
        let c = RunConfig::from_toml(
            "preset = \"free_market\"\nseed = 3\nenv.population_size = 4\nenv.starting_coin = 20\ntrain.sharing_mode = \"independent\"\n",
        )
        .unwrap();
        assert_eq!(c.preset, Preset::FreeMarket);
        assert_eq!(c.seed, 3);
        assert_eq!(c.env.population_size, 4);
        assert_eq!(c.env.starting_coin, 20.0);
        assert!(!c.env.taxes_enabled);
        assert_eq!(c.train.sharing_mode, SharingMode::Independent);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = RunConfig::from_toml("env.populaton_size = 4\n").unwrap_err();
        assert_eq!(err, ConfigError::UnknownKey("env.populaton_size".into()));
        assert!(err.to_string().contains("env.populaton_size"));
    }

    #[test]
    fn wrong_type_is_named() {
        let err = RunConfig::from_toml("train.num_envs = \"ten\"\n").unwrap_err();
        assert!(err.to_string().contains("train.num_envs"), "{err}");
    }

    #[test]
    fn invalid_value_is_named() {
        let err = RunConfig::from_toml("env.population_size = 0\n").unwrap_err();
        assert!(err.to_string().contains("population_size"), "{err}");
    }

    #[test]
    fn round_trips_through_text() {
        let mut c = RunConfig::from_preset(Preset::Section5Multiagent);
        c.seed = 9;
        c.output_dir = Some("out/x".into());
        let back = RunConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        let json = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&json).unwrap(), c);
    }

    #[test]
    fn assignments() {
        let mut c = RunConfig::from_preset(Preset::Section4Default);
        c.apply_assignments(&["preset=free_market", "seed=5", "env.trade_prices=[1, 2]", "name=abc"])
            .unwrap();
        assert_eq!(c.preset, Preset::FreeMarket);
        assert_eq!((c.seed, c.name.as_str()), (5, "abc"));
        assert_eq!(c.env.trade_prices, vec![1, 2]);
        assert!(c.apply_assignments(&["bogus=1"]).is_err());
    }

    #[test]
    fn hash_ignores_seed_but_not_settings() {
        let a = RunConfig::from_preset(Preset::Section4Default);
        let mut b = a.clone();
        b.seed = 42;
        b.name = "other".into();
        assert_eq!(a.config_hash(), b.config_hash());
        b.env.population_size = 5;
        assert_ne!(a.config_hash(), b.config_hash());
        assert_ne!(a.env_hash(), b.env_hash());
        assert_eq!(a.config_hash().len(), 16);
    }
}
