//! Optimization loop: batching, warmup schedule, periodic dev evaluation and
//! best-checkpoint retention.

mod optim;

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Document, SchemaSet, SplitSpec};
use crate::eval::{evaluate, InferenceOptions};
use crate::linking::{build_link_matrix, build_masks, check_coverage, LinkMatrix, MaskTensor};
use crate::model::{Model, ModelConfig};
use crate::serialize::{
    assemble_input, build_question_set, questions_for_schema, samples_for_document, InputSample, Question, Vocab,
};
use crate::{Error, Result};

pub use crate::model::{load_checkpoint, load_checkpoint_expecting, save_checkpoint};
pub use optim::{clip_global_norm, global_norm, AdamW, LrSchedule};

pub const CHECKPOINT_FILE: &str = "best.ckpt";
pub const VOCAB_FILE: &str = "vocab.json";
pub const LOG_FILE: &str = "train_log.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// Windows per optimizer step.
    pub batch_size: usize,
    pub warmup_ratio: f64,
    pub eval_every_steps: usize,
    pub seed: u64,
    /// Decision threshold on raw scores.
    pub threshold: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub weight_decay: f64,
    pub clip_norm: f64,
    /// Share of training documents held out for dev evaluation. With 0 the
    /// training documents themselves are evaluated.
    pub dev_fraction: f64,
    /// Optional cap on the total number of optimizer steps.
    pub max_steps: Option<usize>,
    pub max_question_window: usize,
    pub max_seq_len: usize,
    /// Training words seen fewer times than this map to `<unk>`.
    pub vocab_min_count: usize,
    /// Re-draw the question order of every training window at every step.
    pub shuffle_questions: bool,
    /// Probability of keeping each question of a training window at every
    /// step (at least one is always kept).
    pub question_keep_prob: f64,
    /// Keep the 1D position and layout tables at their initial values.
    pub freeze_position_tables: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 5e-5,
            epochs: 30,
            batch_size: 8,
            warmup_ratio: 0.1,
            eval_every_steps: 500,
            seed: 7,
            threshold: 0.5,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            weight_decay: 0.01,
            clip_norm: 1.0,
            dev_fraction: 0.1,
            max_steps: None,
            max_question_window: 128,
            max_seq_len: crate::serialize::DEFAULT_MAX_SEQ_LEN,
            vocab_min_count: 2,
            shuffle_questions: false,
            question_keep_prob: 1.0,
            freeze_position_tables: false,
        }
    }
}

impl TrainConfig {
    /// Settings for the small synthetic corpus and a model trained from
    /// scratch.
    pub fn desk() -> Self {
        TrainConfig {
            learning_rate: 3e-3,
            epochs: 60,
            eval_every_steps: 100,
            shuffle_questions: true,
            question_keep_prob: 0.7,
            freeze_position_tables: true,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(0.0..=1.0).contains(&self.warmup_ratio) {
            return bad(format!("warmup_ratio must lie in [0, 1], got {}", self.warmup_ratio));
        }
        if !(0.0..1.0).contains(&self.dev_fraction) {
            return bad(format!("dev_fraction must lie in [0, 1), got {}", self.dev_fraction));
        }
        if self.epochs == 0 || self.batch_size == 0 || self.eval_every_steps == 0 {
            return bad("epochs, batch_size and eval_every_steps must be positive".into());
        }
        if self.max_steps == Some(0) {
            return bad("max_steps must be positive when set".into());
        }
        if !self.threshold.is_finite() || self.clip_norm.is_nan() || self.clip_norm <= 0.0 {
            return bad("threshold must be finite and clip_norm positive".into());
        }
        if !(self.question_keep_prob > 0.0 && self.question_keep_prob <= 1.0) {
            return bad(format!("question_keep_prob must lie in (0, 1], got {}", self.question_keep_prob));
        }
        if self.max_question_window == 0 || self.max_seq_len == 0 {
            return bad("max_question_window and max_seq_len must be positive".into());
        }
        Ok(())
    }

    fn augments(&self) -> bool {
        self.shuffle_questions || self.question_keep_prob < 1.0
    }

    pub fn inference(&self) -> InferenceOptions {
        InferenceOptions {
            threshold: self.threshold,
            max_question_window: self.max_question_window,
            max_seq_len: self.max_seq_len,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub step: usize,
    pub loss: f64,
    pub lr: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dev_f1: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: PathBuf,
    pub vocab_path: PathBuf,
    pub log_path: PathBuf,
    pub best_step: usize,
    pub best_dev_f1: f64,
    pub total_steps: usize,
    pub log: Vec<LogEntry>,
    /// Parameters of the best checkpoint.
    pub model: Model<f32>,
    pub vocab: Vocab,
}

/// One training window with its targets.
#[derive(Debug, Clone)]
pub struct Example {
    pub sample: InputSample,
    pub gold: LinkMatrix,
    pub mask: MaskTensor,
    /// Index of the source document in the list given to
    /// [`prepare_examples`].
    pub doc: usize,
    pub questions: Vec<Question>,
}

/// Windows, gold link matrices and masks for every document.
pub fn prepare_examples(
    docs: &[&Document],
    schemas: &SchemaSet,
    vocab: &Vocab,
    model_config: &ModelConfig,
    max_question_window: usize,
    max_seq_len: usize,
) -> Result<Vec<Example>> {
    let n = model_config.n_link_types();
    let flags = model_config.isolation();
    let mut out = Vec::new();
    for (d, doc) in docs.iter().enumerate() {
        let samples = samples_for_document(doc, schemas, vocab, max_question_window, max_seq_len)?;
        check_coverage(&samples, doc)?;
        let questions = build_question_set(doc, schemas)?;
        for sample in samples {
            let gold = build_link_matrix(&sample, doc, n)?;
            let mask = build_masks(&sample, n, flags);
            let asked = sample
                .question_registry
                .iter()
                .map(|slot| questions.iter().find(|q| q.label == slot.label).cloned().expect("asked question"))
                .collect();
            out.push(Example {
                sample,
                gold,
                mask,
                doc: d,
                questions: asked,
            });
        }
    }
    Ok(out)
}

/// The example re-assembled with a shuffled and thinned question list.
fn augment<R: rand::Rng>(
    ex: &Example,
    doc: &Document,
    vocab: &Vocab,
    model_config: &ModelConfig,
    config: &TrainConfig,
    rng: &mut R,
) -> Result<Example> {
    let mut questions = ex.questions.clone();
    if config.shuffle_questions {
        questions.shuffle(rng);
    }
    if config.question_keep_prob < 1.0 {
        let keep = rng.random_range(0..questions.len());
        let mut i = 0;
        questions.retain(|_| {
            i += 1;
            i - 1 == keep || rng.random_bool(config.question_keep_prob)
        });
    }
    let mut samples = assemble_input(&questions, doc, vocab, config.max_question_window, config.max_seq_len)?;
    let sample = samples.swap_remove(0);
    let n = model_config.n_link_types();
    Ok(Example {
        gold: build_link_matrix(&sample, doc, n)?,
        mask: build_masks(&sample, n, model_config.isolation()),
        sample,
        doc: ex.doc,
        questions,
    })
}

/// Vocabulary over the training documents plus every question of every
/// schema.
pub fn build_vocab(train_docs: &[&Document], schemas: &SchemaSet, min_count: usize) -> Result<Vocab> {
    let mut texts = BTreeSet::new();
    for schema in schemas.iter() {
        for q in questions_for_schema(schema)? {
            texts.insert(q.text);
        }
    }
    Ok(Vocab::build_with_min_count(train_docs.iter().copied(), texts, min_count))
}

fn select<'a>(docs: &'a [Document], ids: &[String], what: &str) -> Result<Vec<&'a Document>> {
    let by_id: std::collections::BTreeMap<&str, &Document> = docs.iter().map(|d| (d.id.as_str(), d)).collect();
    ids.iter()
        .map(|id| {
            by_id
                .get(id.as_str())
                .copied()
                .ok_or_else(|| Error::Split(format!("{what} document `{id}` is not in the corpus")))
        })
        .collect()
}

/// Deterministic dev hold-out from the training side of `split`.
pub fn dev_partition(
    train: Vec<&Document>,
    dev_fraction: f64,
    seed: u64,
) -> (Vec<&Document>, Vec<&Document>) {
    let n_dev = (train.len() as f64 * dev_fraction).round() as usize;
    if n_dev == 0 || n_dev >= train.len() {
        return (train.clone(), train);
    }
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x05ee_dde5));
    let dev_set: BTreeSet<usize> = order[..n_dev].iter().copied().collect();
    let (mut fit, mut dev) = (Vec::new(), Vec::new());
    for (i, d) in train.into_iter().enumerate() {
        if dev_set.contains(&i) {
            dev.push(d);
        } else {
            fit.push(d);
        }
    }
    (fit, dev)
}

/// Trains a model on the training side of `split` and writes the best
/// checkpoint, the vocabulary and the step log into `out_dir`.
pub fn train(
    config: &TrainConfig,
    model_config: &ModelConfig,
    docs: &[Document],
    schemas: &SchemaSet,
    split: &SplitSpec,
    out_dir: impl AsRef<Path>,
) -> Result<TrainOutcome> {
    config.validate()?;
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let train_docs = select(docs, &split.train_ids, "training")?;
    if train_docs.is_empty() {
        return Err(Error::Split("the split has no training documents".into()));
    }
    let (fit_docs, dev_docs) = dev_partition(train_docs, config.dev_fraction, config.seed);
    let vocab = build_vocab(&fit_docs, schemas, config.vocab_min_count)?;
    let mut model_config = model_config.clone();
    model_config.vocab_size = vocab.len();
    model_config.max_seq_len = model_config.max_seq_len.max(config.max_seq_len);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = Model::<f32>::init(model_config.clone(), &mut rng)?;
    let examples = prepare_examples(
        &fit_docs,
        schemas,
        &vocab,
        &model_config,
        config.max_question_window,
        config.max_seq_len,
    )?;
    let dev_owned: Vec<Document> = dev_docs.into_iter().cloned().collect();

    let steps_per_epoch = examples.len().div_ceil(config.batch_size);
    let mut total = steps_per_epoch * config.epochs;
    if let Some(cap) = config.max_steps {
        total = total.min(cap);
    }
    let schedule = LrSchedule::new(config.learning_rate, config.warmup_ratio, total);
    let mut opt = AdamW::new(&model.params, config.beta1, config.beta2, config.adam_eps, config.weight_decay);

    let vocab_path = out_dir.join(VOCAB_FILE);
    vocab.save(&vocab_path)?;
    let log_path = out_dir.join(LOG_FILE);
    let mut log_file = BufWriter::new(File::create(&log_path).map_err(|e| Error::io(&log_path, e))?);
    let checkpoint = out_dir.join(CHECKPOINT_FILE);

    let mut log = Vec::new();
    let mut best: Option<(usize, f64, Model<f32>)> = None;
    let mut grads = model.params.zeros_like();
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut step = 0;
    'epochs: for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            if step == total {
                break 'epochs;
            }
            step += 1;
            grads.fill(0.0);
            let mut loss = 0.0f64;
            for &i in batch {
                let fresh;
                let ex = if config.augments() {
                    fresh = augment(&examples[i], fit_docs[examples[i].doc], &vocab, &model_config, config, &mut rng)?;
                    &fresh
                } else {
                    &examples[i]
                };
                loss += model.loss_and_grad(&ex.sample, &ex.gold, &ex.mask, Some(&mut rng), &mut grads)? as f64;
            }
            let scale = 1.0 / batch.len() as f32;
            for (_, _, g) in grads.entries_mut() {
                g.iter_mut().for_each(|v| *v *= scale);
            }
            loss /= batch.len() as f64;
            if !loss.is_finite() || !grads.is_finite() {
                return Err(Error::NonFiniteLoss { step });
            }
            if config.freeze_position_tables {
                grads.position.fill(0.0);
                grads.layout.iter_mut().for_each(|t| t.fill(0.0));
            }
            clip_global_norm(&mut grads, config.clip_norm);
            let lr = schedule.at(step);
            opt.step(&mut model.params, &grads, lr);

            let dev_f1 = if step % config.eval_every_steps == 0 || step == total {
                let (metrics, _) = evaluate(&model, &vocab, schemas, &dev_owned, &config.inference())?;
                if best.as_ref().is_none_or(|(_, f, _)| metrics.f1 > *f) {
                    let meta = serde_json::json!({ "step": step, "dev_f1": metrics.f1 });
                    save_checkpoint(&model, &meta, &checkpoint)?;
                    best = Some((step, metrics.f1, model.clone()));
                }
                Some(metrics.f1)
            } else {
                None
            };
            let entry = LogEntry { step, loss, lr, dev_f1 };
            let line = serde_json::to_string(&entry)?;
            writeln!(log_file, "{line}").map_err(|e| Error::io(&log_path, e))?;
            log.push(entry);
        }
    }
    log_file.flush().map_err(|e| Error::io(&log_path, e))?;
    let (best_step, best_dev_f1, best_model) =
        best.ok_or_else(|| Error::Config("training ran zero steps; the split yields no windows".into()))?;
    Ok(TrainOutcome {
        checkpoint,
        vocab_path,
        log_path,
        best_step,
        best_dev_f1,
        total_steps: step,
        log,
        model: best_model,
        vocab,
    })
}

/// Reads a training log written by [`train`].
pub fn load_log(path: impl AsRef<Path>) -> Result<Vec<LogEntry>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}
