use std::collections::BTreeSet;

use super::{ChannelGrid, LinkType, PredictedEntity, Prediction};
use crate::corpus::Span;
use crate::serialize::InputSample;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeOptions {
    /// Also require the final-tail to first-head link before accepting a value.
    pub confirm_tail_to_head: bool,
}

/// Segments as inclusive `(head, tail)` position pairs.
type Segments = Vec<(usize, usize)>;

struct Walker<'a> {
    grid: &'a ChannelGrid,
    sample: &'a InputSample,
}

impl Walker<'_> {
    fn context(&self) -> impl Iterator<Item = usize> + '_ {
        (self.sample.context_offset..self.sample.len()).filter(|&p| self.sample.is_context(p))
    }

    /// Grows an entity from `start`: follows `next` to the adjacent position,
    /// then at each tail prefers a `cont` jump forward, else closes on a
    /// self-loop. `None` when the walk neither continues nor closes.
    fn grow(&self, start: usize, next: LinkType, cont: LinkType) -> Option<Segments> {
        let len = self.sample.len();
        let mut started = BTreeSet::new();
        let mut segs = Vec::new();
        let mut head = start;
        loop {
            if !started.insert(head) {
                return None;
            }
            let mut tail = head;
            while tail + 1 < len && self.sample.is_context(tail + 1) && self.grid.get(next, tail, tail + 1) {
                tail += 1;
            }
            segs.push((head, tail));
            let jump = (tail + 1..len)
                .find(|&h| self.sample.is_context(h) && !started.contains(&h) && self.grid.get(cont, tail, h));
            match jump {
                Some(h) => head = h,
                None if self.grid.get(cont, tail, tail) => return Some(segs),
                None => return None,
            }
        }
    }

    fn key_for(&self, qh: usize, qt: usize, head: usize, tail: usize) -> Option<Segments> {
        let g = self.grid;
        if !g.has(LinkType::KeyContinue) {
            return None;
        }
        let tails: BTreeSet<usize> = self
            .context()
            .filter(|&kt| g.get(LinkType::ValueTailToKeyTail, tail, kt) && g.get(LinkType::KeyTailToQuestionTail, kt, qt))
            .collect();
        if tails.is_empty() {
            return None;
        }
        self.context()
            .filter(|&kh| g.get(LinkType::KeyHeadToValueHead, kh, head) && g.get(LinkType::QuestionHeadToKeyHead, qh, kh))
            .filter_map(|kh| self.grow(kh, LinkType::KeyNext, LinkType::KeyContinue))
            .find(|segs| tails.contains(&segs.last().unwrap().1))
    }

    /// Maps position segments to document spans, splitting where the
    /// underlying document indices are not consecutive.
    fn to_spans(&self, segs: &Segments) -> Vec<Span> {
        let off = self.sample.context_offset;
        let mut spans: Vec<Span> = Vec::new();
        for &(h, t) in segs {
            let mut run: Option<Span> = None;
            for p in h..=t {
                let i = self.sample.origin_map[p - off];
                run = match run {
                    Some(s) if s.end == i => Some(Span::new(s.start, i + 1)),
                    Some(s) => {
                        spans.push(s);
                        Some(Span::new(i, i + 1))
                    }
                    None => Some(Span::new(i, i + 1)),
                };
            }
            spans.extend(run);
        }
        spans
    }
}

/// Walks the binary link graph of one window and returns the value entities
/// (with keys where both key endpoints resolve) for every registered question.
pub fn decode(grid: &ChannelGrid, sample: &InputSample, opts: DecodeOptions) -> Prediction {
    let w = Walker { grid, sample };
    let mut pred = Prediction::empty(&sample.doc_id);
    for q in &sample.question_registry {
        let mut taken: BTreeSet<usize> = BTreeSet::new();
        let mut found = Vec::new();
        let heads: Vec<usize> = w
            .context()
            .filter(|&h| grid.get(LinkType::QuestionHeadToValueHead, q.head, h))
            .collect();
        for h in heads {
            let Some(segs) = w.grow(h, LinkType::ValueNext, LinkType::ValueContinue) else {
                continue;
            };
            let t = segs.last().unwrap().1;
            if !grid.get(LinkType::QuestionTailToValueTail, q.tail, t) {
                continue;
            }
            if opts.confirm_tail_to_head && !grid.get(LinkType::ValueTailToHead, t, h) {
                continue;
            }
            // Heads are visited in reading order, so earlier heads win overlaps.
            let positions: Vec<usize> = segs.iter().flat_map(|&(a, b)| a..=b).collect();
            if positions.iter().any(|p| taken.contains(p)) {
                continue;
            }
            taken.extend(positions);
            let key_spans = w.key_for(q.head, q.tail, h, t).map(|k| w.to_spans(&k));
            found.push(PredictedEntity {
                spans: w.to_spans(&segs),
                key_spans,
            });
        }
        found.sort();
        pred.answers.insert(q.label.clone(), found);
    }
    pred
}
