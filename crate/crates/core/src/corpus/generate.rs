use std::collections::BTreeMap;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::lexicon::{self, FILLER, FORM_KINDS, FORM_QUALIFIERS, VALUE_TYPES};
use super::{
    BBox, CategorySchema, Document, Entity, KvLink, LayoutKind, LayoutTemplate, Role, Span, Token,
};
use crate::serialize::reading_order;
use crate::{Error, Result};

pub const PAGE_SIZE: u32 = 1000;
const TOP_MARGIN: u32 = 40;
const LEFT_MARGIN: u32 = 20;
const WORD_GAP: u32 = 8;
const LEAD_GAP: u32 = 16;
const TABLE_VALUE_OFFSET: u32 = 190;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub categories: usize,
    pub layouts_per_category: usize,
    pub docs_per_category: usize,
    /// Value types per category are drawn uniformly from `min_types..=max_types`.
    pub min_types: usize,
    pub max_types: usize,
    /// Probability that a value is rendered without a linked key.
    pub no_key_ratio: f64,
    pub multi_span_prob: f64,
    /// Share of key-less values rendered inside running cue text.
    pub implicit_share: f64,
    /// Probability that a category's value type is missing from a document.
    pub absent_prob: f64,
    pub seed: u64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            categories: 10,
            layouts_per_category: 2,
            docs_per_category: 30,
            min_types: 5,
            max_types: 8,
            no_key_ratio: 0.305,
            multi_span_prob: 0.15,
            implicit_share: 0.4,
            absent_prob: 0.1,
            seed: 7,
        }
    }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.categories == 0 {
            return bad("categories must be at least 1");
        }
        if self.docs_per_category == 0 {
            return bad("docs_per_category must be at least 1");
        }
        if self.layouts_per_category == 0 {
            return bad("layouts_per_category must be at least 1");
        }
        if self.min_types == 0 || self.min_types > self.max_types {
            return bad("type range must satisfy 1 <= min_types <= max_types");
        }
        if self.max_types > VALUE_TYPES.len() {
            return Err(Error::Config(format!(
                "max_types {} exceeds the {} available value types",
                self.max_types,
                VALUE_TYPES.len()
            )));
        }
        for (name, p) in [
            ("no_key_ratio", self.no_key_ratio),
            ("multi_span_prob", self.multi_span_prob),
            ("implicit_share", self.implicit_share),
            ("absent_prob", self.absent_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub schemas: Vec<CategorySchema>,
    pub documents: Vec<Document>,
}

impl Corpus {
    /// Fraction of value entities that have no linked key.
    pub fn no_key_fraction(&self) -> f64 {
        let (mut values, mut keyless) = (0usize, 0usize);
        for doc in &self.documents {
            for (i, _) in doc.value_entities() {
                values += 1;
                if doc.key_of(i).is_none() {
                    keyless += 1;
                }
            }
        }
        if values == 0 {
            0.0
        } else {
            keyless as f64 / values as f64
        }
    }
}

/// Generates schemas and documents; a pure function of `config`.
pub fn generate_corpus(config: &GeneratorConfig) -> Result<Corpus> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let schemas = make_schemas(config, &mut rng);
    let mut documents = Vec::with_capacity(config.categories * config.docs_per_category);
    for schema in &schemas {
        for n in 0..config.docs_per_category {
            let id = format!("{}-{n:04}", schema.name);
            let doc = render_document(id, schema, config, &mut rng);
            doc.validate()?;
            documents.push(doc);
        }
    }
    Ok(Corpus { schemas, documents })
}

fn make_schemas(config: &GeneratorConfig, rng: &mut ChaCha8Rng) -> Vec<CategorySchema> {
    let mut names: Vec<(usize, usize)> = (0..FORM_QUALIFIERS.len())
        .flat_map(|q| (0..FORM_KINDS.len()).map(move |k| (q, k)))
        .collect();
    names.shuffle(rng);
    let kinds = [LayoutKind::Inline, LayoutKind::Stacked, LayoutKind::TwoColumn, LayoutKind::Table];
    (0..config.categories)
        .map(|c| {
            let (q, k) = names[c % names.len()];
            let mut name = format!("{}_{}", FORM_QUALIFIERS[q], FORM_KINDS[k]);
            if c >= names.len() {
                name.push_str(&format!("_{}", c / names.len()));
            }
            let n_types = rng.random_range(config.min_types..=config.max_types);
            let mut value_types: Vec<String> = VALUE_TYPES
                .choose_multiple(rng, n_types)
                .map(|t| t.label.to_string())
                .collect();
            value_types.sort();
            let key_phrases: BTreeMap<String, Vec<Vec<String>>> = value_types
                .iter()
                .map(|label| {
                    let def = lexicon::value_type(label).expect("label from pool");
                    let n = rng.random_range(1..=2usize).min(def.keys.len());
                    let variants = def
                        .keys
                        .choose_multiple(rng, n)
                        .map(|k| lexicon::split_words(k))
                        .collect();
                    (label.clone(), variants)
                })
                .collect();
            let kind = *kinds.choose(rng).unwrap();
            let layouts = (0..config.layouts_per_category)
                .map(|_| {
                    let mut field_order = value_types.clone();
                    field_order.shuffle(rng);
                    LayoutTemplate {
                        kind,
                        field_order,
                        indent: rng.random_range(0..=60),
                    }
                })
                .collect();
            CategorySchema {
                title: vec![
                    lexicon::capitalize(FORM_QUALIFIERS[q]),
                    lexicon::capitalize(FORM_KINDS[k]),
                ],
                name,
                layouts,
                value_types,
                key_phrases,
                no_key_prob: config.no_key_ratio,
                multi_span_prob: config.multi_span_prob,
                question_phrases: BTreeMap::new(),
            }
        })
        .collect()
}

/// One field to render: an optional lead (key phrase or implicit cue) and an
/// optional value.
struct FieldPlan {
    label: String,
    value: Option<Vec<String>>,
    lead: Lead,
    /// Split point of a folded value.
    value_fold: Option<usize>,
    /// Split point of a folded key; forces the stacked arrangement.
    key_fold: Option<usize>,
}

enum Lead {
    None,
    Key(Vec<String>),
    Cue(Vec<String>),
}

impl Lead {
    fn words(&self) -> &[String] {
        match self {
            Lead::None => &[],
            Lead::Key(w) | Lead::Cue(w) => w,
        }
    }
}

/// Placed run of words on one line.
struct Chunk {
    words: Vec<String>,
    line: u32,
    x: u32,
}

fn word_width(w: &str) -> u32 {
    6 * w.chars().count() as u32 + 4
}

fn run_width(words: &[String]) -> u32 {
    if words.is_empty() {
        return 0;
    }
    words.iter().map(|w| word_width(w)).sum::<u32>() + WORD_GAP * (words.len() as u32 - 1)
}

struct Page {
    chunks: Vec<Chunk>,
    entities: Vec<Entity>,
    /// Per entity, the chunk indices that make up its spans.
    entity_chunks: Vec<Vec<usize>>,
    kv_links: Vec<KvLink>,
}

impl Page {
    fn new_entity(&mut self, role: Role, label: Option<String>) -> usize {
        self.entities.push(Entity {
            role,
            label,
            spans: Vec::new(),
        });
        self.entity_chunks.push(Vec::new());
        self.entities.len() - 1
    }

    fn put(&mut self, words: &[String], line: u32, x: u32, owner: Option<usize>) {
        if words.is_empty() {
            return;
        }
        if let Some(e) = owner {
            self.entity_chunks[e].push(self.chunks.len());
        }
        self.chunks.push(Chunk {
            words: words.to_vec(),
            line,
            x,
        });
    }
}

/// Width a field needs when stacked (lead above value).
fn stacked_width(field: &FieldPlan) -> u32 {
    let value_w = field.value.as_deref().map(run_width).unwrap_or(0) + 12;
    run_width(field.lead.words()).max(value_w)
}

fn inline_fits(field: &FieldPlan, cell_w: u32, kind: LayoutKind) -> Option<u32> {
    if field.key_fold.is_some() {
        return None;
    }
    let lead = field.lead.words();
    let value = field.value.as_deref()?;
    if lead.is_empty() {
        return None;
    }
    let first = match field.value_fold {
        Some(k) => &value[..k],
        None => value,
    };
    let offset = match kind {
        LayoutKind::Inline | LayoutKind::TwoColumn => run_width(lead) + LEAD_GAP,
        LayoutKind::Table if matches!(field.lead, Lead::Key(_)) => {
            if run_width(lead) + LEAD_GAP > TABLE_VALUE_OFFSET {
                return None;
            }
            TABLE_VALUE_OFFSET
        }
        LayoutKind::Table => run_width(lead) + LEAD_GAP,
        LayoutKind::Stacked => return None,
    };
    let tail_w = field.value_fold.map(|k| run_width(&value[k..])).unwrap_or(0);
    (offset + run_width(first).max(tail_w) <= cell_w).then_some(offset)
}

fn place_field(page: &mut Page, field: &FieldPlan, x: u32, line: u32, cell_w: u32, kind: LayoutKind) -> u32 {
    let key_entity = match &field.lead {
        Lead::Key(_) => Some(page.new_entity(Role::Key, None)),
        _ => None,
    };
    let value_entity = field
        .value
        .as_ref()
        .map(|_| page.new_entity(Role::Value, Some(field.label.clone())));
    if let (Some(k), Some(v)) = (key_entity, value_entity) {
        page.kv_links.push(KvLink { key: k, value: v });
    }
    let lead = field.lead.words().to_vec();

    let put_value = |page: &mut Page, vx: u32, vline: u32| -> u32 {
        let (Some(value), Some(e)) = (field.value.as_ref(), value_entity) else {
            return 0;
        };
        match field.value_fold {
            Some(k) => {
                page.put(&value[..k], vline, vx, Some(e));
                page.put(&value[k..], vline + 1, vx, Some(e));
                2
            }
            None => {
                page.put(value, vline, vx, Some(e));
                1
            }
        }
    };

    if lead.is_empty() {
        return put_value(page, x, line).max(1);
    }
    if let Some(offset) = inline_fits(field, cell_w, kind) {
        page.put(&lead, line, x, key_entity);
        return put_value(page, x + offset, line).max(1);
    }
    // Stacked: lead (possibly folded) then the value below, indented.
    let mut used = match field.key_fold {
        Some(k) => {
            page.put(&lead[..k], line, x, key_entity);
            page.put(&lead[k..], line + 1, x, key_entity);
            2
        }
        None => {
            page.put(&lead, line, x, key_entity);
            1
        }
    };
    used += put_value(page, x + 12, line + used);
    used
}

fn plan_fields(
    template: &LayoutTemplate,
    schema: &CategorySchema,
    config: &GeneratorConfig,
    rng: &mut ChaCha8Rng,
) -> Vec<FieldPlan> {
    let n = template.field_order.len();
    let forced_present = rng.random_range(0..n);
    let mut plans = Vec::with_capacity(n);
    for (i, label) in template.field_order.iter().enumerate() {
        let def = lexicon::value_type(label).expect("schema labels come from the pool");
        let variants = &schema.key_phrases[label];
        let key = variants.choose(rng).expect("at least one key variant").clone();
        let present = i == forced_present || !rng.random_bool(config.absent_prob);
        if !present {
            // Blank field: the key may still be printed with nothing after it.
            if rng.random_bool(0.5) {
                plans.push(FieldPlan {
                    label: label.clone(),
                    value: None,
                    lead: Lead::Key(key),
                    value_fold: None,
                    key_fold: None,
                });
            }
            continue;
        }
        let value = (def.gen)(rng);
        let keyed = !rng.random_bool(schema.no_key_prob);
        let lead = if keyed {
            Lead::Key(key)
        } else if rng.random_bool(config.implicit_share) {
            Lead::Cue(lexicon::split_words(def.cue))
        } else {
            Lead::None
        };
        let value_fold = (value.len() >= 2 && rng.random_bool(schema.multi_span_prob))
            .then(|| rng.random_range(1..value.len()));
        let key_fold = match &lead {
            Lead::Key(k) if k.len() >= 2 && rng.random_bool(schema.multi_span_prob / 2.0) => {
                Some(rng.random_range(1..k.len()))
            }
            _ => None,
        };
        plans.push(FieldPlan {
            label: label.clone(),
            value: Some(value),
            lead,
            value_fold,
            key_fold,
        });
    }
    plans
}

fn render_document(
    id: String,
    schema: &CategorySchema,
    config: &GeneratorConfig,
    rng: &mut ChaCha8Rng,
) -> Document {
    let template = schema.layouts.choose(rng).expect("schema has layouts");
    let fields = plan_fields(template, schema, config, rng);
    let mut page = Page {
        chunks: Vec::new(),
        entities: Vec::new(),
        entity_chunks: Vec::new(),
        kv_links: Vec::new(),
    };

    let left = LEFT_MARGIN + template.indent;
    let full_w = PAGE_SIZE - left - 2 * LEFT_MARGIN;
    let half_w = full_w / 2 - 2 * LEFT_MARGIN;
    let two_cells = matches!(template.kind, LayoutKind::TwoColumn | LayoutKind::Table);

    let title_w = run_width(&schema.title);
    page.put(&schema.title, 0, (PAGE_SIZE - title_w) / 2, None);
    let mut line = 2;

    let mut i = 0;
    while i < fields.len() {
        let jitter = |rng: &mut ChaCha8Rng| rng.random_range(0..=4u32);
        let pair_fits = two_cells
            && i + 1 < fields.len()
            && stacked_width(&fields[i]) <= half_w
            && stacked_width(&fields[i + 1]) <= half_w;
        if pair_fits {
            let a = place_field(&mut page, &fields[i], left + jitter(rng), line, half_w, template.kind);
            let right_x = left + full_w / 2 + jitter(rng);
            let b = place_field(&mut page, &fields[i + 1], right_x, line, half_w, template.kind);
            line += a.max(b);
            i += 2;
        } else {
            line += place_field(&mut page, &fields[i], left + jitter(rng), line, full_w, template.kind);
            i += 1;
        }
    }

    if rng.random_bool(0.5) {
        let n = rng.random_range(1..=3);
        let words: Vec<String> = FILLER.choose_multiple(rng, n).map(|w| w.to_string()).collect();
        page.put(&words, line, left, None);
        line += 1;
    }
    let footer: Vec<String> = ["Page", "1", "of", "1"].iter().map(|s| s.to_string()).collect();
    page.put(&footer, line, PAGE_SIZE - run_width(&footer) - 40, None);
    let n_lines = line + 1;

    materialize(id, schema, page, n_lines, rng)
}

/// Assigns pixel boxes, sorts tokens into reading order and resolves spans.
fn materialize(id: String, schema: &CategorySchema, page: Page, n_lines: u32, rng: &mut ChaCha8Rng) -> Document {
    let line_h = ((PAGE_SIZE - 2 * TOP_MARGIN) / n_lines).min(32);
    let height = (line_h * 5 / 8).max(4);
    let jitter = line_h / 16;

    let mut tokens = Vec::new();
    let mut owner_chunk = Vec::new();
    for (ci, chunk) in page.chunks.iter().enumerate() {
        let mut x = chunk.x;
        for w in &chunk.words {
            let y1 = TOP_MARGIN + chunk.line * line_h + rng.random_range(0..=2 * jitter);
            let x2 = (x + word_width(w)).min(PAGE_SIZE);
            tokens.push(Token {
                text: w.clone(),
                bbox: BBox::new(x, y1, x2, y1 + height),
            });
            owner_chunk.push(ci);
            x = x2 + WORD_GAP;
        }
    }

    let order = reading_order(&tokens);
    let mut new_index = vec![0usize; tokens.len()];
    for (pos, &old) in order.iter().enumerate() {
        new_index[old] = pos;
    }
    let mut chunk_positions: Vec<Vec<usize>> = vec![Vec::new(); page.chunks.len()];
    for (old, &ci) in owner_chunk.iter().enumerate() {
        chunk_positions[ci].push(new_index[old]);
    }
    let sorted_tokens: Vec<Token> = order.iter().map(|&i| tokens[i].clone()).collect();

    let mut entities = page.entities;
    for (e, chunks) in page.entity_chunks.iter().enumerate() {
        let mut spans: Vec<Span> = Vec::new();
        for &ci in chunks {
            let mut pos = chunk_positions[ci].clone();
            pos.sort_unstable();
            // A chunk is one run on one line; split defensively if anything
            // was serialized in between.
            let mut start = pos[0];
            for w in pos.windows(2) {
                if w[1] != w[0] + 1 {
                    spans.push(Span::new(start, w[0] + 1));
                    start = w[1];
                }
            }
            spans.push(Span::new(start, pos[pos.len() - 1] + 1));
        }
        spans.sort();
        entities[e].spans = spans;
    }

    Document {
        id,
        form_category: schema.name.clone(),
        page_width: PAGE_SIZE,
        page_height: PAGE_SIZE,
        tokens: sorted_tokens,
        entities,
        kv_links: page.kv_links,
    }
}
