//! Model-ready input: reading order, vocabulary, question sets and the
//! `<s> Q1 [T] Q2 ... </s> C` window assembly.

mod order;
mod vocab;

use serde::{Deserialize, Serialize};

use crate::corpus::{CategorySchema, Document, SchemaSet};
use crate::{Error, Result};

pub use order::reading_order;
pub use vocab::{shape, Vocab, BOS, EOS, PAD, SEP, UNK};

pub const DEFAULT_MAX_QUESTION_WINDOW: usize = 128;
pub const DEFAULT_MAX_SEQ_LEN: usize = 512;
/// Number of layout buckets per coordinate (0..=1000).
pub const LAYOUT_BUCKETS: usize = 1001;

/// A question asked of a document: the value-type label plus the text that
/// is tokenized into the input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub label: String,
    pub text: String,
}

impl Question {
    pub fn from_label(label: &str) -> Self {
        Question {
            label: label.to_string(),
            text: label.to_string(),
        }
    }

    /// Question words: the text split on whitespace and underscores.
    pub fn words(&self) -> Vec<&str> {
        split_question(&self.text)
    }
}

pub(crate) fn split_question(text: &str) -> Vec<&str> {
    text.split(|c: char| c == '_' || c.is_whitespace())
        .filter(|w| !w.is_empty())
        .collect()
}

/// Position of one question inside an input window.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionSlot {
    pub label: String,
    pub head: usize,
    pub tail: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputSample {
    pub doc_id: String,
    pub window_index: usize,
    pub token_ids: Vec<u32>,
    pub segment_ids: Vec<u8>,
    pub position_ids: Vec<u32>,
    /// Quantized `[x1, y1, x2, y2]` per position; zero box outside the context.
    pub layout: Vec<[u16; 4]>,
    pub question_registry: Vec<QuestionSlot>,
    pub context_offset: usize,
    /// Context position (relative to `context_offset`) to document token index.
    pub origin_map: Vec<usize>,
}

impl InputSample {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    /// Sequence position of document token `doc_index`, if it is in context.
    pub fn position_of(&self, doc_index: usize) -> Option<usize> {
        self.origin_map
            .iter()
            .position(|&o| o == doc_index)
            .map(|p| p + self.context_offset)
    }

    /// Inverse of `origin_map`, indexed by document token.
    pub fn positions_by_doc_index(&self, n_doc_tokens: usize) -> Vec<Option<usize>> {
        let mut inv = vec![None; n_doc_tokens];
        for (p, &o) in self.origin_map.iter().enumerate() {
            if o < n_doc_tokens {
                inv[o] = Some(p + self.context_offset);
            }
        }
        inv
    }

    pub fn is_special(&self, pos: usize) -> bool {
        matches!(self.token_ids[pos], BOS | EOS | SEP | PAD)
    }

    pub fn is_context(&self, pos: usize) -> bool {
        pos >= self.context_offset && self.token_ids[pos] != PAD
    }
}

/// All value-type labels of the document's category, sorted, as questions.
/// Labels absent from the document become negative questions.
pub fn build_question_set(doc: &Document, schemas: &SchemaSet) -> Result<Vec<Question>> {
    let schema = schemas.get(&doc.form_category)?;
    questions_for_schema(schema)
}

pub fn questions_for_schema(schema: &CategorySchema) -> Result<Vec<Question>> {
    if schema.value_types.is_empty() {
        return Err(Error::Schema(format!("category `{}` defines no value types", schema.name)));
    }
    let mut labels: Vec<&String> = schema.value_types.iter().collect();
    labels.sort();
    labels.dedup();
    Ok(labels
        .into_iter()
        .map(|l| Question {
            label: l.clone(),
            text: schema.question_text(l).to_string(),
        })
        .collect())
}

/// Quantizes a pixel coordinate into `0..=1000` relative to the page extent.
pub fn quantize(v: u32, extent: u32) -> u16 {
    if extent == 0 {
        return 0;
    }
    let q = (v as u64 * 1000 + extent as u64 / 2) / extent as u64;
    q.min(1000) as u16
}

/// Packs questions greedily, in order, into windows whose question region
/// (each question plus one separator) fits `max_question_window`, and emits
/// one sample per window with the full context in reading order.
pub fn assemble_input(
    questions: &[Question],
    doc: &Document,
    vocab: &Vocab,
    max_question_window: usize,
    max_seq_len: usize,
) -> Result<Vec<InputSample>> {
    if questions.is_empty() {
        return Err(Error::Input(format!("document `{}`: empty question list", doc.id)));
    }
    let tokenized: Vec<Vec<u32>> = questions
        .iter()
        .map(|q| q.words().iter().map(|w| vocab.id(w)).collect())
        .collect();
    if let Some(i) = tokenized.iter().position(Vec::is_empty) {
        return Err(Error::Input(format!("question `{}` has no words", questions[i].label)));
    }
    let longest = tokenized.iter().map(Vec::len).max().unwrap_or(0);

    let n_ctx = doc.tokens.len();
    // <s> and </s> around the question region.
    if n_ctx + 2 > max_seq_len {
        return Err(Error::Truncation {
            doc_id: doc.id.clone(),
            message: format!("context of {n_ctx} tokens exceeds max_seq_len {max_seq_len}"),
        });
    }
    let budget = max_question_window.min(max_seq_len - n_ctx - 1);
    if longest + 1 > budget {
        if longest + 1 > max_question_window {
            return Err(Error::Input(format!(
                "max_question_window {max_question_window} is smaller than the longest question ({longest} tokens) + 1"
            )));
        }
        return Err(Error::Truncation {
            doc_id: doc.id.clone(),
            message: format!("no room for a {longest}-token question next to {n_ctx} context tokens"),
        });
    }

    let order = reading_order(&doc.tokens);
    let ctx_ids: Vec<u32> = order.iter().map(|&i| vocab.id(&doc.tokens[i].text)).collect();
    let ctx_layout: Vec<[u16; 4]> = order
        .iter()
        .map(|&i| {
            let b = doc.tokens[i].bbox;
            [
                quantize(b.x1, doc.page_width),
                quantize(b.y1, doc.page_height),
                quantize(b.x2, doc.page_width),
                quantize(b.y2, doc.page_height),
            ]
        })
        .collect();

    let mut windows: Vec<Vec<usize>> = Vec::new();
    let mut used = 0;
    for (i, q) in tokenized.iter().enumerate() {
        let cost = q.len() + 1;
        match windows.last_mut() {
            Some(w) if used + cost <= budget => {
                w.push(i);
                used += cost;
            }
            _ => {
                windows.push(vec![i]);
                used = cost;
            }
        }
    }

    Ok(windows
        .into_iter()
        .enumerate()
        .map(|(window_index, members)| {
            let mut token_ids = vec![BOS];
            let mut registry = Vec::with_capacity(members.len());
            for (n, &qi) in members.iter().enumerate() {
                if n > 0 {
                    token_ids.push(SEP);
                }
                let head = token_ids.len();
                token_ids.extend_from_slice(&tokenized[qi]);
                registry.push(QuestionSlot {
                    label: questions[qi].label.clone(),
                    head,
                    tail: token_ids.len() - 1,
                });
            }
            token_ids.push(EOS);
            let context_offset = token_ids.len();
            token_ids.extend_from_slice(&ctx_ids);
            let len = token_ids.len();
            let mut layout = vec![[0u16; 4]; context_offset];
            layout.extend_from_slice(&ctx_layout);
            InputSample {
                doc_id: doc.id.clone(),
                window_index,
                segment_ids: (0..len).map(|p| u8::from(p >= context_offset)).collect(),
                position_ids: (0..len as u32).collect(),
                layout,
                token_ids,
                question_registry: registry,
                context_offset,
                origin_map: order.clone(),
            }
        })
        .collect())
}

/// Questions for `doc` assembled into windows.
pub fn samples_for_document(
    doc: &Document,
    schemas: &SchemaSet,
    vocab: &Vocab,
    max_question_window: usize,
    max_seq_len: usize,
) -> Result<Vec<InputSample>> {
    let questions = build_question_set(doc, schemas)?;
    assemble_input(&questions, doc, vocab, max_question_window, max_seq_len)
}
