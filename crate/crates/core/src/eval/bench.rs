use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{check_compatible, predict_with_questions, InferenceOptions};
use crate::corpus::{Document, SchemaSet};
use crate::linking::Prediction;
use crate::model::Model;
use crate::serialize::{build_question_set, Question, Vocab};
use crate::{Error, Result};

/// Speed-up of parallel over per-question inference reported for the
/// original system, shown next to measured ratios for reference.
pub const REFERENCE_SPEED_RATIO: f64 = 6.4;

/// Below this total measured time the timer is considered too coarse.
const MIN_MEASURED_SECS: f64 = 0.010;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedReport {
    pub n_documents: usize,
    pub questions_per_document: usize,
    pub n_questions_total: usize,
    /// Seconds.
    pub parallel_wall_time: f64,
    /// Seconds.
    pub sequential_wall_time: f64,
    /// `sequential_wall_time / parallel_wall_time`.
    pub ratio: f64,
    pub reference_ratio: f64,
}

/// Predictions of both modes, kept for comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeedOutputs {
    pub parallel: Vec<Prediction>,
    pub sequential: Vec<Prediction>,
}

fn run_parallel(
    model: &Model<f32>,
    vocab: &Vocab,
    doc: &Document,
    qs: &[Question],
    opts: &InferenceOptions,
) -> Result<Prediction> {
    predict_with_questions(model, vocab, doc, qs, opts)
}

fn run_sequential(
    model: &Model<f32>,
    vocab: &Vocab,
    doc: &Document,
    qs: &[Question],
    opts: &InferenceOptions,
) -> Result<Prediction> {
    let mut out = Prediction::empty(&doc.id);
    for q in qs {
        out.merge(predict_with_questions(model, vocab, doc, std::slice::from_ref(q), opts)?);
    }
    Ok(out)
}

/// Times parallel inference (all `q` questions of a document in one input)
/// against sequential inference (one input per question), both including
/// input assembly and decoding. A warm-up pass on the first document is not
/// timed.
pub fn speed_bench(
    model: &Model<f32>,
    vocab: &Vocab,
    schemas: &SchemaSet,
    docs: &[Document],
    q: usize,
    opts: &InferenceOptions,
) -> Result<(SpeedReport, SpeedOutputs)> {
    check_compatible(model, vocab)?;
    if docs.is_empty() || q == 0 {
        return Err(Error::Benchmark("needs at least one document and one question".into()));
    }
    let mut questions = Vec::with_capacity(docs.len());
    for doc in docs {
        let mut qs = build_question_set(doc, schemas)?;
        if qs.len() < q {
            return Err(Error::Benchmark(format!(
                "document `{}` has {} value types in its category, fewer than {q} questions",
                doc.id,
                qs.len()
            )));
        }
        qs.truncate(q);
        questions.push(qs);
    }

    run_parallel(model, vocab, &docs[0], &questions[0], opts)?;
    run_sequential(model, vocab, &docs[0], &questions[0], opts)?;

    let start = Instant::now();
    let parallel = docs
        .iter()
        .zip(&questions)
        .map(|(d, qs)| run_parallel(model, vocab, d, qs, opts))
        .collect::<Result<Vec<_>>>()?;
    let parallel_wall_time = start.elapsed().as_secs_f64();

    let start = Instant::now();
    let sequential = docs
        .iter()
        .zip(&questions)
        .map(|(d, qs)| run_sequential(model, vocab, d, qs, opts))
        .collect::<Result<Vec<_>>>()?;
    let sequential_wall_time = start.elapsed().as_secs_f64();

    if parallel_wall_time + sequential_wall_time < MIN_MEASURED_SECS || parallel_wall_time <= 0.0 {
        return Err(Error::Benchmark(format!(
            "only {:.3} ms measured in total; rerun with more documents",
            (parallel_wall_time + sequential_wall_time) * 1e3
        )));
    }
    let report = SpeedReport {
        n_documents: docs.len(),
        questions_per_document: q,
        n_questions_total: q * docs.len(),
        parallel_wall_time,
        sequential_wall_time,
        ratio: sequential_wall_time / parallel_wall_time,
        reference_ratio: REFERENCE_SPEED_RATIO,
    };
    Ok((report, SpeedOutputs { parallel, sequential }))
}
