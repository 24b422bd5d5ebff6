use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{evaluate, Metrics};
use crate::corpus::{make_splits, Document, SchemaSet, SplitMode, SplitSpec};
use crate::model::ModelConfig;
use crate::train::{train, TrainConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ProtocolMode {
    ZeroShot,
    FewShot(usize),
    Full,
}

impl ProtocolMode {
    pub fn name(&self) -> String {
        match self {
            ProtocolMode::ZeroShot => "zero_shot".into(),
            ProtocolMode::FewShot(k) => format!("few_shot_{k}"),
            ProtocolMode::Full => "full".into(),
        }
    }

    fn split(&self) -> (SplitMode, Option<usize>) {
        match *self {
            ProtocolMode::ZeroShot => (SplitMode::ZeroShot, None),
            ProtocolMode::FewShot(k) => (SplitMode::FewShot, Some(k)),
            ProtocolMode::Full => (SplitMode::Full, None),
        }
    }
}

impl std::str::FromStr for ProtocolMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero_shot" => Ok(ProtocolMode::ZeroShot),
            "full" => Ok(ProtocolMode::Full),
            _ => s
                .strip_prefix("few_shot_")
                .and_then(|k| k.parse().ok())
                .map(ProtocolMode::FewShot)
                .ok_or_else(|| Error::Config(format!("unknown protocol mode `{s}`; use zero_shot, few_shot_K or full"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolEntry {
    pub mode: String,
    #[serde(flatten)]
    pub metrics: Metrics,
    pub train_categories: Vec<String>,
    pub test_categories: Vec<String>,
    pub n_train_documents: usize,
    pub n_test_documents: usize,
    pub best_step: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolReport {
    pub modes: BTreeMap<String, ProtocolEntry>,
    /// Whether full >= largest few-shot >= zero-shot in F1, when all three ran.
    pub ordering_full_few_zero: Option<bool>,
}

fn categories(docs: &[Document], ids: &[String]) -> Vec<String> {
    let ids: BTreeSet<&str> = ids.iter().map(String::as_str).collect();
    let cats: BTreeSet<&str> = docs
        .iter()
        .filter(|d| ids.contains(d.id.as_str()))
        .map(|d| d.form_category.as_str())
        .collect();
    cats.into_iter().map(str::to_string).collect()
}

fn test_docs(docs: &[Document], split: &SplitSpec) -> Vec<Document> {
    let ids: BTreeSet<&str> = split.test_ids.iter().map(String::as_str).collect();
    docs.iter().filter(|d| ids.contains(d.id.as_str())).cloned().collect()
}

/// For each mode: split, train, evaluate on the held-out side. Checkpoints
/// go to `out_dir/<mode>`.
pub fn run_protocol(
    docs: &[Document],
    schemas: &SchemaSet,
    modes: &[ProtocolMode],
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    split_seed: u64,
    out_dir: impl AsRef<Path>,
) -> Result<ProtocolReport> {
    let mut out = BTreeMap::new();
    for mode in modes {
        let (split_mode, k) = mode.split();
        let split = make_splits(docs, split_mode, k, split_seed)?;
        let outcome = train(train_config, model_config, docs, schemas, &split, out_dir.as_ref().join(mode.name()))?;
        let test = test_docs(docs, &split);
        let (metrics, _) = evaluate(&outcome.model, &outcome.vocab, schemas, &test, &train_config.inference())?;
        out.insert(
            mode.name(),
            ProtocolEntry {
                mode: mode.name(),
                metrics,
                train_categories: categories(docs, &split.train_ids),
                test_categories: categories(docs, &split.test_ids),
                n_train_documents: split.train_ids.len(),
                n_test_documents: test.len(),
                best_step: outcome.best_step,
            },
        );
    }
    let f1_of = |m: ProtocolMode| out.get(&m.name()).map(|e: &ProtocolEntry| e.metrics.f1);
    let few = modes
        .iter()
        .filter_map(|m| match m {
            ProtocolMode::FewShot(k) => Some(*k),
            _ => None,
        })
        .max()
        .and_then(|k| f1_of(ProtocolMode::FewShot(k)));
    let ordering_full_few_zero = match (f1_of(ProtocolMode::Full), few, f1_of(ProtocolMode::ZeroShot)) {
        (Some(full), Some(few), Some(zero)) => Some(full >= few && few >= zero),
        _ => None,
    };
    Ok(ProtocolReport {
        modes: out,
        ordering_full_few_zero,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Ablation {
    Sin,
    Key,
    Qci,
    Qhi,
    Qti,
}

impl Ablation {
    pub const ALL: [Ablation; 5] = [Ablation::Sin, Ablation::Key, Ablation::Qci, Ablation::Qhi, Ablation::Qti];

    pub fn name(&self) -> &'static str {
        match self {
            Ablation::Sin => "-sin",
            Ablation::Key => "-key",
            Ablation::Qci => "-QCI",
            Ablation::Qhi => "-QHI",
            Ablation::Qti => "-QTI",
        }
    }

    /// Model configuration with this component turned off.
    pub fn apply(&self, config: &ModelConfig) -> ModelConfig {
        let mut c = config.clone();
        match self {
            Ablation::Sin => c.use_sinusoidal = false,
            Ablation::Key => c.use_key_channels = false,
            Ablation::Qci => c.use_qci = false,
            Ablation::Qhi => c.use_qhi = false,
            Ablation::Qti => c.use_qti = false,
        }
        c
    }
}

impl std::str::FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim_start_matches('-').to_ascii_lowercase().as_str() {
            "sin" => Ok(Ablation::Sin),
            "key" => Ok(Ablation::Key),
            "qci" => Ok(Ablation::Qci),
            "qhi" => Ok(Ablation::Qhi),
            "qti" => Ok(Ablation::Qti),
            _ => Err(Error::Config(format!("unknown ablation `{s}`; use sin, key, qci, qhi or qti"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub name: String,
    pub n_link_types: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// F1 minus the full model's F1.
    pub delta_f1: f64,
    pub checkpoint: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
}

/// Trains the full model plus one model per ablation on `split` and
/// evaluates each on the test side. Checkpoints go to `out_dir/<row>`.
pub fn run_ablations(
    docs: &[Document],
    schemas: &SchemaSet,
    split: &SplitSpec,
    ablations: &[Ablation],
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    out_dir: impl AsRef<Path>,
) -> Result<AblationReport> {
    let test = test_docs(docs, split);
    let mut variants = vec![("full".to_string(), "full", model_config.clone())];
    let mut seen = BTreeSet::new();
    for a in ablations {
        if seen.insert(*a) {
            variants.push((a.name().to_string(), &a.name()[1..], a.apply(model_config)));
        }
    }
    let mut rows: Vec<AblationRow> = Vec::new();
    for (name, dir, config) in variants {
        let outcome = train(train_config, &config, docs, schemas, split, out_dir.as_ref().join(dir))?;
        let (m, _) = evaluate(&outcome.model, &outcome.vocab, schemas, &test, &train_config.inference())?;
        let base = rows.first().map_or(m.f1, |r| r.f1);
        rows.push(AblationRow {
            name,
            n_link_types: outcome.model.config.n_link_types(),
            precision: m.precision,
            recall: m.recall,
            f1: m.f1,
            delta_f1: m.f1 - base,
            checkpoint: outcome.checkpoint,
        });
    }
    Ok(AblationReport { rows })
}
