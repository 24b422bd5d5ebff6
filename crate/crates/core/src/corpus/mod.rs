//! Synthetic complex-layout form corpus: document model, generator,
//! JSONL persistence and dataset splits.

mod generate;
mod io;
mod lexicon;
mod split;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use generate::{generate_corpus, Corpus, GeneratorConfig};
pub use io::{load_corpus, load_schemas, save_corpus, save_schemas};
pub use lexicon::value_type_labels;
pub use split::{load_split, make_splits, save_split, SplitMode, SplitSpec};

/// Axis-aligned token box in page pixels, `[x1, y1, x2, y2]` on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[u32; 4]", into = "[u32; 4]")]
pub struct BBox {
    pub x1: u32,
    pub y1: u32,
    pub x2: u32,
    pub y2: u32,
}

impl BBox {
    pub fn new(x1: u32, y1: u32, x2: u32, y2: u32) -> Self {
        BBox { x1, y1, x2, y2 }
    }

    pub fn height(&self) -> u32 {
        self.y2.saturating_sub(self.y1)
    }
}

impl From<[u32; 4]> for BBox {
    fn from(v: [u32; 4]) -> Self {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [u32; 4] {
    fn from(b: BBox) -> Self {
        [b.x1, b.y1, b.x2, b.y2]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub bbox: BBox,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Key,
    Value,
}

/// Half-open token index range `[start, end)`, `[start, end]` on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn indices(&self) -> std::ops::Range<usize> {
        self.start..self.end
    }
}

impl From<[usize; 2]> for Span {
    fn from(v: [usize; 2]) -> Self {
        Span::new(v[0], v[1])
    }
}

impl From<Span> for [usize; 2] {
    fn from(s: Span) -> Self {
        [s.start, s.end]
    }
}

/// A key or value semantic entity. Values carry a type label; keys do not.
/// More than one span means the entity is folded or discontinuous.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub role: Role,
    pub label: Option<String>,
    pub spans: Vec<Span>,
}

impl Entity {
    pub fn token_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.spans.iter().flat_map(|s| s.indices())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KvLink {
    pub key: usize,
    pub value: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub form_category: String,
    pub page_width: u32,
    pub page_height: u32,
    pub tokens: Vec<Token>,
    pub entities: Vec<Entity>,
    pub kv_links: Vec<KvLink>,
}

impl Document {
    /// Key entity index linked to the value entity `value`, if any.
    pub fn key_of(&self, value: usize) -> Option<usize> {
        self.kv_links
            .iter()
            .find(|l| l.value == value)
            .map(|l| l.key)
    }

    pub fn value_entities(&self) -> impl Iterator<Item = (usize, &Entity)> {
        self.entities
            .iter()
            .enumerate()
            .filter(|(_, e)| e.role == Role::Value)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |message: String| {
            Err(Error::Validation {
                doc_id: self.id.clone(),
                message,
            })
        };
        for (i, tok) in self.tokens.iter().enumerate() {
            let b = tok.bbox;
            if tok.text.is_empty() || tok.text.chars().any(char::is_whitespace) {
                return fail(format!("token {i} has empty or whitespace text {:?}", tok.text));
            }
            if b.x1 > b.x2 || b.y1 > b.y2 {
                return fail(format!("token {i} has inverted bbox {:?}", <[u32; 4]>::from(b)));
            }
            if b.x2 > self.page_width || b.y2 > self.page_height {
                return fail(format!("token {i} bbox lies outside the page"));
            }
        }
        for (i, ent) in self.entities.iter().enumerate() {
            if ent.spans.is_empty() {
                return fail(format!("entity {i} has no spans"));
            }
            match (ent.role, &ent.label) {
                (Role::Value, None) => return fail(format!("value entity {i} has no label")),
                (Role::Value, Some(l)) if l.is_empty() => {
                    return fail(format!("value entity {i} has an empty label"))
                }
                _ => {}
            }
            let mut prev_end = 0;
            for (k, span) in ent.spans.iter().enumerate() {
                if span.start >= span.end {
                    return fail(format!("entity {i} span {k} is empty or inverted"));
                }
                if span.end > self.tokens.len() {
                    return fail(format!("entity {i} span {k} exceeds token count"));
                }
                if k > 0 && span.start < prev_end {
                    return fail(format!("entity {i} spans overlap or are unsorted"));
                }
                prev_end = span.end;
            }
        }
        let mut linked = vec![false; self.entities.len()];
        for (n, link) in self.kv_links.iter().enumerate() {
            let (Some(k), Some(v)) = (self.entities.get(link.key), self.entities.get(link.value))
            else {
                return fail(format!("kv link {n} references a missing entity"));
            };
            if k.role != Role::Key || v.role != Role::Value {
                return fail(format!("kv link {n} must connect a key to a value"));
            }
            if std::mem::replace(&mut linked[link.value], true) {
                return fail(format!("value entity {} appears in more than one kv link", link.value));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayoutKind {
    /// Key and value on one line, single column.
    Inline,
    /// Key on one line, value indented on the next.
    Stacked,
    /// Two cells per row; each cell inline when it fits, stacked otherwise.
    TwoColumn,
    /// Two cells per row, keys form a header line above the values.
    Table,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayoutTemplate {
    pub kind: LayoutKind,
    /// Value-type labels in rendering order.
    pub field_order: Vec<String>,
    /// Horizontal offset of the template's left margin.
    pub indent: u32,
}

/// Per-category rendering rules: which value types exist, how their keys are
/// phrased and which layout templates the category's documents use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategorySchema {
    pub name: String,
    pub title: Vec<String>,
    pub layouts: Vec<LayoutTemplate>,
    /// Sorted value-type labels.
    pub value_types: Vec<String>,
    pub key_phrases: BTreeMap<String, Vec<Vec<String>>>,
    pub no_key_prob: f64,
    pub multi_span_prob: f64,
    /// Optional natural-language question text per label; the label itself
    /// is used when absent.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub question_phrases: BTreeMap<String, String>,
}

impl CategorySchema {
    pub fn n_layouts(&self) -> usize {
        self.layouts.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.layouts.is_empty() {
            return Err(Error::Schema(format!("category `{}` has no layout template", self.name)));
        }
        if self.value_types.is_empty() {
            return Err(Error::Schema(format!("category `{}` has no value type", self.name)));
        }
        Ok(())
    }

    pub fn question_text<'a>(&'a self, label: &'a str) -> &'a str {
        self.question_phrases
            .get(label)
            .map(String::as_str)
            .unwrap_or(label)
    }
}

/// Category schemas indexed by name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SchemaSet {
    by_name: BTreeMap<String, CategorySchema>,
}

impl SchemaSet {
    pub fn new(schemas: impl IntoIterator<Item = CategorySchema>) -> Self {
        SchemaSet {
            by_name: schemas.into_iter().map(|s| (s.name.clone(), s)).collect(),
        }
    }

    pub fn get(&self, category: &str) -> Result<&CategorySchema> {
        self.by_name
            .get(category)
            .ok_or_else(|| Error::Schema(format!("unknown form category `{category}`")))
    }

    pub fn iter(&self) -> impl Iterator<Item = &CategorySchema> {
        self.by_name.values()
    }

    pub fn len(&self) -> usize {
        self.by_name.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_name.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc() -> Document {
        let tok = |t: &str, x: u32| Token {
            text: t.into(),
            bbox: BBox::new(x, 10, x + 30, 30),
        };
        Document {
            id: "d0".into(),
            form_category: "c".into(),
            page_width: 1000,
            page_height: 1000,
            tokens: vec![tok("Name", 10), tok("Li", 60), tok("Wei", 100)],
            entities: vec![
                Entity {
                    role: Role::Key,
                    label: None,
                    spans: vec![Span::new(0, 1)],
                },
                Entity {
                    role: Role::Value,
                    label: Some("person_name".into()),
                    spans: vec![Span::new(1, 3)],
                },
            ],
            kv_links: vec![KvLink { key: 0, value: 1 }],
        }
    }

    #[test]
    fn valid_document_passes() {
        doc().validate().unwrap();
    }

    #[test]
    fn inverted_bbox_is_rejected() {
        let mut d = doc();
        d.tokens[1].bbox = BBox::new(90, 10, 60, 30);
        assert!(matches!(d.validate(), Err(Error::Validation { doc_id, .. }) if doc_id == "d0"));
    }

    #[test]
    fn overlapping_spans_are_rejected() {
        let mut d = doc();
        d.entities[1].spans = vec![Span::new(1, 3), Span::new(2, 3)];
        assert!(d.validate().is_err());
    }

    #[test]
    fn reversed_link_is_rejected() {
        let mut d = doc();
        d.kv_links = vec![KvLink { key: 1, value: 0 }];
        assert!(d.validate().is_err());
    }

    #[test]
    fn value_linked_twice_is_rejected() {
        let mut d = doc();
        d.kv_links.push(KvLink { key: 0, value: 1 });
        assert!(d.validate().is_err());
    }

    #[test]
    fn unknown_category_is_schema_error() {
        let set = SchemaSet::default();
        assert!(matches!(set.get("nope"), Err(Error::Schema(_))));
    }
}
