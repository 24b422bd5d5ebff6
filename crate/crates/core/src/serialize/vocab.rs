use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::split_question;
use crate::corpus::Document;
use crate::{Error, Result};

pub const BOS: u32 = 0;
pub const EOS: u32 = 1;
pub const SEP: u32 = 2;
pub const PAD: u32 = 3;
pub const UNK: u32 = 4;
const N_RESERVED: u32 = 5;

const RESERVED: [(&str, u32); 5] = [("<s>", BOS), ("</s>", EOS), ("[T]", SEP), ("<pad>", PAD), ("<unk>", UNK)];

fn normalize(word: &str) -> String {
    word.to_lowercase()
}

/// Character classes of `word` (`X` upper, `x` lower, `d` digit, other
/// characters kept) with runs capped at four, e.g. `+86` -> `<shape:+dd>`.
pub fn shape(word: &str) -> String {
    let mut out = String::from("<shape:");
    let (mut prev, mut run) = ('\0', 0);
    for ch in word.chars() {
        let c = if ch.is_ascii_digit() {
            'd'
        } else if ch.is_uppercase() {
            'X'
        } else if ch.is_lowercase() {
            'x'
        } else {
            ch
        };
        run = if c == prev { run + 1 } else { 1 };
        prev = c;
        if run <= 4 {
            out.push(c);
        }
    }
    out.push('>');
    out
}

/// Case-insensitive word-level vocabulary with five reserved ids and
/// shape-class fallbacks for rare words.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    words: BTreeMap<String, u32>,
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    reserved: BTreeMap<String, u32>,
    tokens: BTreeMap<String, u32>,
}

impl Vocab {
    /// Builds the vocabulary from training documents plus question words.
    /// Ids are assigned in sorted word order after the reserved block.
    pub fn build<'a, D, Q>(docs: D, question_texts: Q) -> Self
    where
        D: IntoIterator<Item = &'a Document>,
        Q: IntoIterator,
        Q::Item: AsRef<str>,
    {
        Self::build_with_min_count(docs, question_texts, 1)
    }

    /// Like [`Vocab::build`], but document words seen fewer than `min_count`
    /// times are left out and fall back to their shape class. Question words
    /// are always kept.
    pub fn build_with_min_count<'a, D, Q>(docs: D, question_texts: Q, min_count: usize) -> Self
    where
        D: IntoIterator<Item = &'a Document>,
        Q: IntoIterator,
        Q::Item: AsRef<str>,
    {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for d in docs {
            for t in &d.tokens {
                *counts.entry(normalize(&t.text)).or_default() += 1;
                *counts.entry(shape(&t.text)).or_default() += 1;
            }
        }
        let mut set: std::collections::BTreeSet<String> = counts
            .into_iter()
            .filter(|&(_, c)| c >= min_count)
            .map(|(w, _)| w)
            .collect();
        for q in question_texts {
            for w in split_question(q.as_ref()) {
                set.insert(normalize(w));
            }
        }
        let words = set
            .into_iter()
            .filter(|w| !RESERVED.iter().any(|(r, _)| r == w))
            .enumerate()
            .map(|(i, w)| (w, i as u32 + N_RESERVED))
            .collect();
        Vocab { words }
    }

    /// Id of the case-folded word, else of its shape class, else `<unk>`.
    pub fn id(&self, word: &str) -> u32 {
        self.words
            .get(&normalize(word))
            .or_else(|| self.words.get(&shape(word)))
            .copied()
            .unwrap_or(UNK)
    }

    /// Total id space, reserved ids included.
    pub fn len(&self) -> usize {
        self.words.len() + N_RESERVED as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = VocabFile {
            reserved: RESERVED.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            tokens: self.words.clone(),
        };
        let text = serde_json::to_string_pretty(&file)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: VocabFile = serde_json::from_str(&text)?;
        for (name, id) in RESERVED {
            if file.reserved.get(name) != Some(&id) {
                return Err(Error::Input(format!("vocab file: reserved token {name} must have id {id}")));
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for (w, &id) in &file.tokens {
            if id < N_RESERVED || !seen.insert(id) {
                return Err(Error::Input(format!("vocab file: token {w:?} has invalid or duplicate id {id}")));
            }
        }
        Ok(Vocab { words: file.tokens })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_corpus, GeneratorConfig};

    fn vocab() -> (Vocab, Vec<Document>) {
        let corpus = generate_corpus(&GeneratorConfig {
            categories: 2,
            docs_per_category: 4,
            ..Default::default()
        })
        .unwrap();
        let labels: Vec<String> = corpus.schemas.iter().flat_map(|s| s.value_types.clone()).collect();
        (Vocab::build(&corpus.documents, &labels), corpus.documents)
    }

    #[test]
    fn known_words_are_stable_and_unknown_is_unk() {
        let (v, docs) = vocab();
        let w = &docs[0].tokens[0].text;
        assert_eq!(v.id(w), v.id(w));
        assert!(v.id(w) >= N_RESERVED);
        assert_eq!(v.id("§§never§§"), UNK);
        assert_eq!(v.id("<s>"), UNK);
    }

    #[test]
    fn question_words_are_in_vocab() {
        let v = Vocab::build(std::iter::empty(), ["issue_date"]);
        assert_ne!(v.id("issue"), UNK);
        assert_ne!(v.id("date"), UNK);
        assert_eq!(v.len(), 7);
    }

    #[test]
    fn lookup_is_case_insensitive() {
        let v = Vocab::build(std::iter::empty(), ["issue_date"]);
        assert_eq!(v.id("Issue"), v.id("issue"));
        assert_eq!(v.id("DATE"), v.id("date"));
    }

    #[test]
    fn rare_words_fall_back_to_shape() {
        let (v, docs) = vocab();
        let counted = Vocab::build_with_min_count(&docs, ["x"], 1_000_000);
        assert_eq!(counted.id("x"), counted.id("X"));
        assert!(counted.len() < v.len());
        assert_eq!(shape("2015"), "<shape:dddd>");
        assert_eq!(shape("@12.50"), "<shape:@dd.dd>");
        assert_eq!(shape("Beijing"), "<shape:Xxxxx>");
        let strict = Vocab::build_with_min_count(&docs, ["x"], 2);
        let year = docs
            .iter()
            .flat_map(|d| d.tokens.iter())
            .find(|t| t.text.len() == 4 && t.text.chars().all(|c| c.is_ascii_digit()))
            .map(|t| t.text.clone());
        if let Some(year) = year {
            assert_ne!(strict.id(&year), UNK);
        }
    }

    #[test]
    fn save_load_round_trip() {
        let (v, _) = vocab();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.json");
        v.save(&path).unwrap();
        assert_eq!(Vocab::load(&path).unwrap(), v);
        let raw: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(raw["reserved"]["[T]"], 2);
    }

    #[test]
    fn ids_are_injective() {
        let (v, _) = vocab();
        let mut ids: Vec<u32> = v.words.values().copied().collect();
        let n = ids.len();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), n);
    }
}
