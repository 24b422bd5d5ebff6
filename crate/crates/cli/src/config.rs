use std::path::Path;

use anyhow::{Context, Result};
use ppn::corpus::{GeneratorConfig, SplitMode};
use ppn::model::ModelConfig;
use ppn::train::TrainConfig;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Small model trained from scratch on the synthetic corpus.
    Desk,
    /// Hyperparameters documented for the original pretrained setting.
    Reference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSettings {
    pub mode: SplitMode,
    pub k: Option<usize>,
    pub seed: u64,
}

/// Every setting a command can read. Built from a preset, then a JSON file,
/// then command-line flags, each layer overriding the previous one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub preset: Preset,
    pub generator: GeneratorConfig,
    pub split: SplitSettings,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn preset(preset: Preset) -> Self {
        let (model, train) = match preset {
            Preset::Desk => (
                ModelConfig {
                    dropout: 0.0,
                    ..Default::default()
                },
                TrainConfig::desk(),
            ),
            Preset::Reference => (ModelConfig::default(), TrainConfig::default()),
        };
        RunConfig {
            preset,
            generator: GeneratorConfig::default(),
            split: SplitSettings {
                mode: SplitMode::ZeroShot,
                k: None,
                seed: 7,
            },
            model,
            train,
        }
    }

    /// Merges `file` (if any) and `overrides` over the selected preset.
    pub fn load(file: Option<&Path>, overrides: Value) -> Result<Self> {
        let file_value = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| ppn::Error::Input(format!("config file `{}`: {e}", path.display())))?;
                serde_json::from_str(&text).map_err(|e| config_error(format!("{}: {e}", path.display())))?
            }
            None => Value::Object(Map::new()),
        };
        let preset_of = |v: &Value| v.get("preset").cloned().map(serde_json::from_value::<Preset>);
        let preset = match preset_of(&overrides).or_else(|| preset_of(&file_value)) {
            Some(p) => p.map_err(|e| config_error(format!("preset: {e}")))?,
            None => Preset::Desk,
        };
        let mut merged = serde_json::to_value(Self::preset(preset))?;
        merge(&mut merged, file_value);
        merge(&mut merged, overrides);
        let config: RunConfig = serde_json::from_value(merged).map_err(|e| config_error(e.to_string()))?;
        Ok(config)
    }

    /// Writes the effective configuration, plus the command and its inputs,
    /// into `dir/config.json`.
    pub fn echo(&self, dir: &Path, command: &str, inputs: Value) -> Result<()> {
        let v = serde_json::json!({ "command": command, "inputs": inputs, "config": self });
        let path = dir.join("config.json");
        std::fs::write(&path, serde_json::to_string_pretty(&v)? + "\n")
            .with_context(|| format!("writing {}", path.display()))
    }
}

pub fn config_error(msg: impl std::fmt::Display) -> anyhow::Error {
    ppn::Error::Config(msg.to_string()).into()
}

/// Recursive object merge; non-object values in `over` replace `base`.
pub fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

/// Builder for flag overrides addressed by dotted paths.
#[derive(Debug, Default)]
pub struct Overrides(Value);

impl Overrides {
    pub fn new() -> Self {
        Overrides(Value::Object(Map::new()))
    }

    pub fn set<T: Serialize>(&mut self, path: &str, value: Option<T>) -> &mut Self {
        if let Some(v) = value {
            let mut node = &mut self.0;
            let parts: Vec<&str> = path.split('.').collect();
            for p in &parts[..parts.len() - 1] {
                node = node
                    .as_object_mut()
                    .expect("object node")
                    .entry(p.to_string())
                    .or_insert_with(|| Value::Object(Map::new()));
            }
            let v = serde_json::to_value(v).expect("serializable flag");
            node.as_object_mut().expect("object node").insert(parts[parts.len() - 1].to_string(), v);
        }
        self
    }

    pub fn into_value(self) -> Value {
        self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_and_file_overrides_preset() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"train": {"epochs": 3, "seed": 1}, "model": {"d_model": 32}}"#).unwrap();
        let mut o = Overrides::new();
        o.set("train.seed", Some(9u64));
        let c = RunConfig::load(Some(&path), o.into_value()).unwrap();
        assert_eq!(c.train.epochs, 3);
        assert_eq!(c.train.seed, 9);
        assert_eq!(c.model.d_model, 32);
        assert_eq!(c.train.learning_rate, TrainConfig::desk().learning_rate);
    }

    #[test]
    fn reference_preset_uses_documented_defaults() {
        let mut o = Overrides::new();
        o.set("preset", Some(Preset::Reference));
        let c = RunConfig::load(None, o.into_value()).unwrap();
        assert_eq!(c.train, TrainConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"train": {"epoch": 3}}"#).unwrap();
        let err = RunConfig::load(Some(&path), Value::Object(Map::new())).unwrap_err();
        assert!(err.to_string().contains("unknown field"), "{err}");
        std::fs::write(&path, r#"{"trainer": {}}"#).unwrap();
        assert!(RunConfig::load(Some(&path), Value::Object(Map::new())).is_err());
    }
}
