//! Inference, entity-level metrics, the split protocols, ablations and the
//! parallel-versus-sequential speed benchmark.

mod bench;
mod metrics;
mod protocol;

use serde::{Deserialize, Serialize};

use crate::corpus::{Document, SchemaSet};
use crate::linking::{binarize, build_masks, decode, DecodeOptions, Prediction};
use crate::model::Model;
use crate::serialize::{assemble_input, build_question_set, InputSample, Question, Vocab};
use crate::{Error, Result};

pub use bench::{speed_bench, SpeedOutputs, SpeedReport, REFERENCE_SPEED_RATIO};
pub use metrics::{f1, score_predictions, Counts, LabelMetrics, Metrics};
pub use protocol::{run_ablations, run_protocol, Ablation, AblationReport, AblationRow, ProtocolMode, ProtocolReport};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceOptions {
    pub threshold: f64,
    pub max_question_window: usize,
    pub max_seq_len: usize,
    pub decode: DecodeOptions,
}

impl Default for InferenceOptions {
    fn default() -> Self {
        InferenceOptions {
            threshold: 0.5,
            max_question_window: 128,
            max_seq_len: crate::serialize::DEFAULT_MAX_SEQ_LEN,
            decode: DecodeOptions::default(),
        }
    }
}

/// A metrics report as written to disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mode: String,
    #[serde(flatten)]
    pub metrics: Metrics,
}

fn check_compatible(model: &Model<f32>, vocab: &Vocab) -> Result<()> {
    if model.config.vocab_size != vocab.len() {
        return Err(Error::Evaluation(format!(
            "checkpoint expects a vocabulary of {} entries, the vocabulary has {}",
            model.config.vocab_size,
            vocab.len()
        )));
    }
    Ok(())
}

/// Scores, thresholds and decodes one window.
pub fn predict_sample(model: &Model<f32>, sample: &InputSample, opts: &InferenceOptions) -> Result<Prediction> {
    let mask = build_masks(sample, model.config.n_link_types(), model.config.isolation());
    let scores = model.scores(sample, &mask)?;
    let grid = binarize(scores.view(), &mask, opts.threshold as f32);
    Ok(decode(&grid, sample, opts.decode))
}

/// Asks `questions` about `doc`, windowed, and merges the answers.
pub fn predict_with_questions(
    model: &Model<f32>,
    vocab: &Vocab,
    doc: &Document,
    questions: &[Question],
    opts: &InferenceOptions,
) -> Result<Prediction> {
    let samples = assemble_input(questions, doc, vocab, opts.max_question_window, opts.max_seq_len)?;
    let mut out = Prediction::empty(&doc.id);
    for sample in &samples {
        out.merge(predict_sample(model, sample, opts)?);
    }
    Ok(out)
}

/// Asks every question of the document's category.
pub fn predict_document(
    model: &Model<f32>,
    vocab: &Vocab,
    schemas: &SchemaSet,
    doc: &Document,
    opts: &InferenceOptions,
) -> Result<Prediction> {
    check_compatible(model, vocab)?;
    let questions = build_question_set(doc, schemas)?;
    predict_with_questions(model, vocab, doc, &questions, opts)
}

/// Predicts every document and scores the result.
pub fn evaluate(
    model: &Model<f32>,
    vocab: &Vocab,
    schemas: &SchemaSet,
    docs: &[Document],
    opts: &InferenceOptions,
) -> Result<(Metrics, Vec<Prediction>)> {
    check_compatible(model, vocab)?;
    let predictions = docs
        .iter()
        .map(|d| predict_document(model, vocab, schemas, d, opts))
        .collect::<Result<Vec<_>>>()?;
    Ok((score_predictions(docs, &predictions), predictions))
}
