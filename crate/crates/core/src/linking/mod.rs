//! Token-linking channels: ground-truth relation tensors, isolation masks,
//! thresholding and word-graph decoding.

mod decode;

use std::collections::BTreeMap;

use ndarray::ArrayView3;
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::corpus::{Document, Span};
use crate::serialize::InputSample;
use crate::{Error, Result};

pub use decode::{decode, DecodeOptions};

pub const DEFAULT_THRESHOLD: f64 = 0.5;
/// Channel count with key channels; the key-less variant keeps the first five.
pub const FULL_CHANNELS: usize = 11;
pub const VALUE_CHANNELS: usize = 5;

/// The eleven directed link types. `id()` is the stable 1-based type id and
/// channel `id() - 1` of every tensor holds that type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LinkType {
    /// Consecutive tokens inside one value span.
    ValueNext = 1,
    /// Final value tail to first value head.
    ValueTailToHead = 2,
    QuestionHeadToValueHead = 3,
    QuestionTailToValueTail = 4,
    /// Value segment tail to next segment head; self-loop at the final tail.
    ValueContinue = 5,
    /// Consecutive tokens inside one key span.
    KeyNext = 6,
    KeyHeadToValueHead = 7,
    ValueTailToKeyTail = 8,
    QuestionHeadToKeyHead = 9,
    KeyTailToQuestionTail = 10,
    /// Key segment tail to next segment head; self-loop at the final tail.
    KeyContinue = 11,
}

impl LinkType {
    pub const ALL: [LinkType; 11] = [
        LinkType::ValueNext,
        LinkType::ValueTailToHead,
        LinkType::QuestionHeadToValueHead,
        LinkType::QuestionTailToValueTail,
        LinkType::ValueContinue,
        LinkType::KeyNext,
        LinkType::KeyHeadToValueHead,
        LinkType::ValueTailToKeyTail,
        LinkType::QuestionHeadToKeyHead,
        LinkType::KeyTailToQuestionTail,
        LinkType::KeyContinue,
    ];

    pub fn id(self) -> usize {
        self as usize
    }

    pub fn channel(self) -> usize {
        self.id() - 1
    }

    pub fn from_id(id: usize) -> Option<Self> {
        Self::ALL.get(id.checked_sub(1)?).copied()
    }
}

/// Binary `[channels, L, L]` tensor; used for both the relation matrix and
/// the isolation mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelGrid {
    n_channels: usize,
    len: usize,
    data: Vec<u8>,
}

pub type LinkMatrix = ChannelGrid;
pub type MaskTensor = ChannelGrid;

impl ChannelGrid {
    pub fn zeros(n_channels: usize, len: usize) -> Self {
        ChannelGrid {
            n_channels,
            len,
            data: vec![0; n_channels * len * len],
        }
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn has(&self, link: LinkType) -> bool {
        link.channel() < self.n_channels
    }

    #[inline]
    fn offset(&self, channel: usize, i: usize, j: usize) -> usize {
        (channel * self.len + i) * self.len + j
    }

    /// Cell value; channels beyond `n_channels` read as 0.
    #[inline]
    pub fn get(&self, link: LinkType, i: usize, j: usize) -> bool {
        self.has(link) && self.data[self.offset(link.channel(), i, j)] != 0
    }

    #[inline]
    pub fn get_channel(&self, channel: usize, i: usize, j: usize) -> bool {
        self.data[self.offset(channel, i, j)] != 0
    }

    #[inline]
    pub fn set(&mut self, link: LinkType, i: usize, j: usize, on: bool) {
        let o = self.offset(link.channel(), i, j);
        self.data[o] = u8::from(on);
    }

    /// Raw channel-major cells, `[channel][i][j]`.
    pub fn as_slice(&self) -> &[u8] {
        &self.data
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    /// Every set cell as `(type id, i, j)`.
    pub fn ones(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        let l = self.len;
        self.data.iter().enumerate().filter(|(_, &v)| v != 0).map(move |(o, _)| {
            let c = o / (l * l);
            let r = o % (l * l);
            (c + 1, r / l, r % l)
        })
    }
}

/// Gold entity resolved to sample positions, one position list per span.
struct Resolved {
    spans: Vec<Vec<usize>>,
}

impl Resolved {
    fn head(&self) -> usize {
        self.spans[0][0]
    }

    fn tail(&self) -> usize {
        *self.spans.last().unwrap().last().unwrap()
    }
}

fn resolve(sample: &InputSample, doc: &Document, spans: &[Span], inverse: &[Option<usize>]) -> Result<Resolved> {
    let mut out = Vec::with_capacity(spans.len());
    for span in spans {
        let mut pos = Vec::with_capacity(span.len());
        for i in span.indices() {
            let p = inverse.get(i).copied().flatten().ok_or_else(|| Error::Coverage {
                doc_id: doc.id.clone(),
                message: format!("token {i} is not in window {}", sample.window_index),
            })?;
            pos.push(p);
        }
        if pos.windows(2).any(|w| w[1] != w[0] + 1) {
            return Err(Error::Coverage {
                doc_id: doc.id.clone(),
                message: format!("span [{}, {}) is not contiguous in reading order", span.start, span.end),
            });
        }
        out.push(pos);
    }
    Ok(Resolved { spans: out })
}

fn link_spans(grid: &mut ChannelGrid, ent: &Resolved, next: LinkType, cont: LinkType) {
    for span in &ent.spans {
        for w in span.windows(2) {
            grid.set(next, w[0], w[1], true);
        }
    }
    for w in ent.spans.windows(2) {
        grid.set(cont, *w[0].last().unwrap(), w[1][0], true);
    }
    grid.set(cont, ent.tail(), ent.tail(), true);
}

/// Ground-truth relation tensor for one window. Value entities whose label
/// is not asked in this window are skipped; key channels are filled only for
/// values with a linked key and only when `n_channels` is 11.
pub fn build_link_matrix(sample: &InputSample, doc: &Document, n_channels: usize) -> Result<LinkMatrix> {
    if n_channels != FULL_CHANNELS && n_channels != VALUE_CHANNELS {
        return Err(Error::Input(format!("link channels must be 5 or 11, got {n_channels}")));
    }
    let len = sample.len();
    let mut grid = ChannelGrid::zeros(n_channels, len);
    let inverse = sample.positions_by_doc_index(doc.tokens.len());
    let slots: BTreeMap<&str, (usize, usize)> = sample
        .question_registry
        .iter()
        .map(|q| (q.label.as_str(), (q.head, q.tail)))
        .collect();

    for (vi, value) in doc.value_entities() {
        let Some(&(qh, qt)) = value.label.as_deref().and_then(|l| slots.get(l)) else {
            continue;
        };
        let v = resolve(sample, doc, &value.spans, &inverse)?;
        link_spans(&mut grid, &v, LinkType::ValueNext, LinkType::ValueContinue);
        grid.set(LinkType::ValueTailToHead, v.tail(), v.head(), true);
        grid.set(LinkType::QuestionHeadToValueHead, qh, v.head(), true);
        grid.set(LinkType::QuestionTailToValueTail, qt, v.tail(), true);

        if n_channels < FULL_CHANNELS {
            continue;
        }
        let Some(ki) = doc.key_of(vi) else {
            continue;
        };
        let k = resolve(sample, doc, &doc.entities[ki].spans, &inverse)?;
        link_spans(&mut grid, &k, LinkType::KeyNext, LinkType::KeyContinue);
        grid.set(LinkType::KeyHeadToValueHead, k.head(), v.head(), true);
        grid.set(LinkType::ValueTailToKeyTail, v.tail(), k.tail(), true);
        grid.set(LinkType::QuestionHeadToKeyHead, qh, k.head(), true);
        grid.set(LinkType::KeyTailToQuestionTail, k.tail(), qt, true);
    }
    Ok(grid)
}

/// Checks that every gold value label is asked in exactly one window.
pub fn check_coverage(samples: &[InputSample], doc: &Document) -> Result<()> {
    for (_, value) in doc.value_entities() {
        let label = value.label.as_deref().unwrap_or_default();
        let n = samples
            .iter()
            .filter(|s| s.question_registry.iter().any(|q| q.label == label))
            .count();
        if n != 1 {
            return Err(Error::Coverage {
                doc_id: doc.id.clone(),
                message: format!("label `{label}` is asked in {n} windows, expected exactly 1"),
            });
        }
    }
    Ok(())
}

/// Which isolation rules are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IsolationFlags {
    /// Question-context isolation.
    pub qci: bool,
    /// Question-head isolation.
    pub qhi: bool,
    /// Question-tail isolation.
    pub qti: bool,
}

impl Default for IsolationFlags {
    fn default() -> Self {
        IsolationFlags {
            qci: true,
            qhi: true,
            qti: true,
        }
    }
}

/// Scorable cells per channel. Cells touching special or padding positions
/// are always masked.
pub fn build_masks(sample: &InputSample, n_channels: usize, flags: IsolationFlags) -> MaskTensor {
    let len = sample.len();
    let mut grid = ChannelGrid::zeros(n_channels, len);
    let plain: Vec<bool> = (0..len).map(|p| !sample.is_special(p)).collect();
    let context: Vec<bool> = (0..len).map(|p| sample.is_context(p)).collect();
    let mut heads = vec![false; len];
    let mut tails = vec![false; len];
    for q in &sample.question_registry {
        heads[q.head] = true;
        tails[q.tail] = true;
    }
    let pair_region: &[bool] = if flags.qci { &context } else { &plain };
    let head_rows: &[bool] = if flags.qhi { &heads } else { &plain };
    let tail_rows: &[bool] = if flags.qti { &tails } else { &plain };

    for link in LinkType::ALL.into_iter().filter(|l| l.channel() < n_channels) {
        let (rows, cols): (&[bool], &[bool]) = match link {
            LinkType::ValueNext
            | LinkType::ValueTailToHead
            | LinkType::ValueContinue
            | LinkType::KeyNext
            | LinkType::KeyHeadToValueHead
            | LinkType::ValueTailToKeyTail
            | LinkType::KeyContinue => (pair_region, pair_region),
            LinkType::QuestionHeadToValueHead | LinkType::QuestionHeadToKeyHead => (head_rows, &context),
            LinkType::QuestionTailToValueTail => (tail_rows, &context),
            LinkType::KeyTailToQuestionTail => (&context, tail_rows),
        };
        for i in (0..len).filter(|&i| rows[i] && plain[i]) {
            for j in (0..len).filter(|&j| cols[j] && plain[j]) {
                grid.set(link, i, j, true);
            }
        }
    }
    grid
}

/// Thresholds scores: 1 where `score >= delta` and the cell is unmasked.
pub fn binarize<T: Float>(scores: ArrayView3<'_, T>, mask: &MaskTensor, delta: T) -> ChannelGrid {
    let (c, l, _) = scores.dim();
    let mut grid = ChannelGrid::zeros(c, l);
    for ((k, i, j), &z) in scores.indexed_iter() {
        if z >= delta && mask.get_channel(k, i, j) {
            let o = grid.offset(k, i, j);
            grid.data[o] = 1;
        }
    }
    grid
}

/// One extracted value, in document token indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PredictedEntity {
    pub spans: Vec<Span>,
    pub key_spans: Option<Vec<Span>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub doc_id: String,
    pub answers: BTreeMap<String, Vec<PredictedEntity>>,
}

impl Prediction {
    pub fn empty(doc_id: &str) -> Self {
        Prediction {
            doc_id: doc_id.to_string(),
            answers: BTreeMap::new(),
        }
    }

    /// Folds another window's answers into this prediction.
    pub fn merge(&mut self, other: Prediction) {
        for (label, mut ents) in other.answers {
            let slot = self.answers.entry(label).or_default();
            slot.append(&mut ents);
            slot.sort();
            slot.dedup();
        }
    }
}

/// Gold annotations of `doc` in prediction form, restricted to `labels`.
pub fn gold_prediction<'a>(doc: &Document, labels: impl IntoIterator<Item = &'a str>) -> Prediction {
    let mut answers: BTreeMap<String, Vec<PredictedEntity>> =
        labels.into_iter().map(|l| (l.to_string(), Vec::new())).collect();
    for (vi, value) in doc.value_entities() {
        let Some(slot) = value.label.as_ref().and_then(|l| answers.get_mut(l)) else {
            continue;
        };
        slot.push(PredictedEntity {
            spans: value.spans.clone(),
            key_spans: doc.key_of(vi).map(|k| doc.entities[k].spans.clone()),
        });
    }
    for ents in answers.values_mut() {
        ents.sort();
    }
    Prediction {
        doc_id: doc.id.clone(),
        answers,
    }
}
