use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{Document, Span};
use crate::linking::Prediction;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub gold: usize,
    pub predicted: usize,
    pub correct: usize,
}

impl Counts {
    fn add(&mut self, other: Counts) {
        self.gold += other.gold;
        self.predicted += other.predicted;
        self.correct += other.correct;
    }

    pub fn precision(&self) -> f64 {
        if self.predicted == 0 {
            0.0
        } else {
            self.correct as f64 / self.predicted as f64
        }
    }

    pub fn recall(&self) -> f64 {
        if self.gold == 0 {
            0.0
        } else {
            self.correct as f64 / self.gold as f64
        }
    }

    pub fn f1(&self) -> f64 {
        f1(self.precision(), self.recall())
    }
}

pub fn f1(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub counts: Counts,
}

impl From<Counts> for LabelMetrics {
    fn from(counts: Counts) -> Self {
        LabelMetrics {
            precision: counts.precision(),
            recall: counts.recall(),
            f1: counts.f1(),
            counts,
        }
    }
}

/// Entity-level scores. A prediction is correct when its label and ordered
/// span list equal a gold value entity; duplicates count once.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub per_label: BTreeMap<String, LabelMetrics>,
    pub counts: Counts,
}

impl Metrics {
    pub fn from_counts(per_label: BTreeMap<String, Counts>) -> Self {
        let mut total = Counts::default();
        for c in per_label.values() {
            total.add(*c);
        }
        Metrics {
            precision: total.precision(),
            recall: total.recall(),
            f1: total.f1(),
            per_label: per_label.into_iter().map(|(k, c)| (k, c.into())).collect(),
            counts: total,
        }
    }
}

type EntitySet<'a> = BTreeMap<&'a str, BTreeSet<&'a [Span]>>;

fn gold_sets(doc: &Document) -> EntitySet<'_> {
    let mut out: EntitySet = BTreeMap::new();
    for (_, e) in doc.value_entities() {
        if let Some(l) = e.label.as_deref() {
            out.entry(l).or_default().insert(&e.spans);
        }
    }
    out
}

fn predicted_sets(pred: &Prediction) -> EntitySet<'_> {
    pred.answers
        .iter()
        .map(|(l, ents)| (l.as_str(), ents.iter().map(|e| e.spans.as_slice()).collect()))
        .collect()
}

/// Scores predictions against the gold documents; documents without a
/// prediction count as predicting nothing.
pub fn score_predictions(docs: &[Document], predictions: &[Prediction]) -> Metrics {
    let by_id: BTreeMap<&str, &Prediction> = predictions.iter().map(|p| (p.doc_id.as_str(), p)).collect();
    let mut per_label: BTreeMap<String, Counts> = BTreeMap::new();
    for doc in docs {
        let gold = gold_sets(doc);
        let pred = by_id.get(doc.id.as_str()).map(|p| predicted_sets(p)).unwrap_or_default();
        let labels: BTreeSet<&str> = gold.keys().chain(pred.keys()).copied().collect();
        for label in labels {
            let g = gold.get(label);
            let p = pred.get(label);
            let c = per_label.entry(label.to_string()).or_default();
            c.gold += g.map_or(0, BTreeSet::len);
            c.predicted += p.map_or(0, BTreeSet::len);
            if let (Some(g), Some(p)) = (g, p) {
                c.correct += g.intersection(p).count();
            }
        }
    }
    Metrics::from_counts(per_label)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{BBox, Entity, Role, Token};
    use crate::linking::{gold_prediction, PredictedEntity};

    fn doc() -> Document {
        Document {
            id: "d".into(),
            form_category: "c".into(),
            page_width: 1000,
            page_height: 1000,
            tokens: (0..6)
                .map(|i| Token {
                    text: format!("w{i}"),
                    bbox: BBox::new(10 + 100 * i, 10, 90 + 100 * i, 30),
                })
                .collect(),
            entities: vec![
                Entity {
                    role: Role::Value,
                    label: Some("a".into()),
                    spans: vec![Span::new(0, 2)],
                },
                Entity {
                    role: Role::Value,
                    label: Some("b".into()),
                    spans: vec![Span::new(3, 4), Span::new(5, 6)],
                },
            ],
            kv_links: vec![],
        }
    }

    fn ent(spans: &[(usize, usize)]) -> PredictedEntity {
        PredictedEntity {
            spans: spans.iter().map(|&(s, e)| Span::new(s, e)).collect(),
            key_spans: None,
        }
    }

    #[test]
    fn perfect_predictions_score_one() {
        let d = doc();
        let m = score_predictions(std::slice::from_ref(&d), &[gold_prediction(&d, ["a", "b"])]);
        assert_eq!((m.precision, m.recall, m.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn no_predictions_score_zero() {
        let m = score_predictions(&[doc()], &[]);
        assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
        assert_eq!(m.counts.gold, 2);
    }

    #[test]
    fn half_right_is_one_half() {
        let d = doc();
        let mut p = Prediction::empty("d");
        p.answers.insert("a".into(), vec![ent(&[(0, 2)])]);
        p.answers.insert("b".into(), vec![ent(&[(3, 4)])]);
        let m = score_predictions(&[d], &[p]);
        assert_eq!((m.precision, m.recall, m.f1), (0.5, 0.5, 0.5));
        assert_eq!(m.per_label["b"].counts.correct, 0);
    }

    #[test]
    fn duplicates_count_once_and_labels_must_match() {
        let d = doc();
        let mut p = Prediction::empty("d");
        p.answers.insert("a".into(), vec![ent(&[(0, 2)]), ent(&[(0, 2)])]);
        p.answers.insert("c".into(), vec![ent(&[(3, 4), (5, 6)])]);
        let m = score_predictions(&[d], &[p]);
        assert_eq!(m.counts, Counts { gold: 2, predicted: 2, correct: 1 });
    }

    #[test]
    fn off_by_one_is_wrong() {
        let d = doc();
        for spans in [vec![(0, 1)], vec![(0, 3)], vec![(1, 2)]] {
            let mut p = Prediction::empty("d");
            p.answers.insert("a".into(), vec![ent(&spans)]);
            assert_eq!(score_predictions(std::slice::from_ref(&d), &[p]).counts.correct, 0);
        }
    }

    #[test]
    fn f1_is_harmonic_mean() {
        let c = Counts { gold: 7, predicted: 4, correct: 3 };
        let (p, r) = (0.75, 3.0 / 7.0);
        assert!((c.f1() - 2.0 * p * r / (p + r)).abs() < 1e-15);
    }
}
