use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Document;
use crate::{Error, Result};

const TRAIN_SHARE: f64 = 0.7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    ZeroShot,
    FewShot,
    Full,
}

impl std::str::FromStr for SplitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero_shot" => Ok(SplitMode::ZeroShot),
            "few_shot" => Ok(SplitMode::FewShot),
            "full" => Ok(SplitMode::Full),
            other => Err(Error::Split(format!("unknown split mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub mode: SplitMode,
    pub k: Option<usize>,
    pub seed: u64,
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
}

fn docs_by_category(docs: &[Document]) -> BTreeMap<&str, Vec<&str>> {
    let mut by_cat: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for d in docs {
        by_cat.entry(&d.form_category).or_default().push(&d.id);
    }
    by_cat
}

/// Greedy 7:3 partition of categories by document count. Categories are
/// sorted by name, shuffled by `seed`, then each is sent to test when doing so
/// brings the test share closer to 0.3.
fn partition_categories(by_cat: &BTreeMap<&str, Vec<&str>>, seed: u64) -> Result<(Vec<String>, Vec<String>)> {
    if by_cat.len() < 2 {
        return Err(Error::Split(format!(
            "a category-disjoint split needs at least 2 categories, found {}",
            by_cat.len()
        )));
    }
    let mut cats: Vec<&str> = by_cat.keys().copied().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    cats.shuffle(&mut rng);

    let total: usize = by_cat.values().map(Vec::len).sum();
    let target = 1.0 - TRAIN_SHARE;
    let mut test_docs = 0usize;
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (i, cat) in cats.iter().enumerate() {
        let n = by_cat[cat].len();
        let now = (test_docs as f64 / total as f64 - target).abs();
        let with = ((test_docs + n) as f64 / total as f64 - target).abs();
        let remaining = cats.len() - i - 1;
        // Keep at least one category on each side.
        let must_test = test.is_empty() && remaining == 0;
        let must_train = train.is_empty() && remaining == 0;
        if must_test || (!must_train && with < now) {
            test_docs += n;
            test.push(cat.to_string());
        } else {
            train.push(cat.to_string());
        }
    }
    train.sort();
    test.sort();
    Ok((train, test))
}

/// Builds a train/test split; a pure function of `(docs, mode, k, seed)`.
pub fn make_splits(docs: &[Document], mode: SplitMode, k: Option<usize>, seed: u64) -> Result<SplitSpec> {
    let by_cat = docs_by_category(docs);
    let (mut train_ids, mut test_ids): (Vec<String>, Vec<String>) = match mode {
        SplitMode::Full => {
            let mut ids: Vec<&str> = docs.iter().map(|d| d.id.as_str()).collect();
            ids.sort_unstable();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            ids.shuffle(&mut rng);
            let n_train = (ids.len() as f64 * TRAIN_SHARE).round() as usize;
            let (a, b) = ids.split_at(n_train);
            (a.iter().map(|s| s.to_string()).collect(), b.iter().map(|s| s.to_string()).collect())
        }
        SplitMode::ZeroShot | SplitMode::FewShot => {
            let (train_cats, test_cats) = partition_categories(&by_cat, seed)?;
            let ids_of = |cats: &[String]| -> Vec<String> {
                cats.iter()
                    .flat_map(|c| by_cat[c.as_str()].iter().map(|s| s.to_string()))
                    .collect()
            };
            let mut train = ids_of(&train_cats);
            let mut test = ids_of(&test_cats);
            if mode == SplitMode::FewShot {
                let k = k.ok_or_else(|| Error::Split("few_shot requires k".into()))?;
                if ![1, 5, 10].contains(&k) {
                    return Err(Error::Split(format!("few_shot k must be 1, 5 or 10, got {k}")));
                }
                let mut moved = Vec::new();
                for cat in &test_cats {
                    let mut ids: Vec<&str> = by_cat[cat.as_str()].clone();
                    if k > ids.len() {
                        return Err(Error::Split(format!(
                            "category `{cat}` has {} documents, cannot move k={k}",
                            ids.len()
                        )));
                    }
                    ids.sort_unstable();
                    // The permutation does not depend on k, so smaller shots
                    // are prefixes of larger ones.
                    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a(cat));
                    ids.shuffle(&mut rng);
                    moved.extend(ids[..k].iter().map(|s| s.to_string()));
                }
                test.retain(|id| !moved.contains(id));
                train.extend(moved);
            }
            (train, test)
        }
    };
    train_ids.sort();
    test_ids.sort();
    Ok(SplitSpec {
        mode,
        k: if mode == SplitMode::FewShot { k } else { None },
        seed,
        train_ids,
        test_ids,
    })
}

fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

pub fn save_split(split: &SplitSpec, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(split)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn load_split(path: impl AsRef<Path>) -> Result<SplitSpec> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let split: SplitSpec = serde_json::from_str(&text)?;
    if split.train_ids.iter().any(|id| split.test_ids.contains(id)) {
        return Err(Error::Split("train and test ids overlap".into()));
    }
    Ok(split)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_corpus, GeneratorConfig};
    use std::collections::BTreeSet;

    fn corpus(categories: usize, docs: usize) -> Vec<Document> {
        generate_corpus(&GeneratorConfig {
            categories,
            docs_per_category: docs,
            ..Default::default()
        })
        .unwrap()
        .documents
    }

    fn categories_of<'a>(docs: &'a [Document], ids: &[String]) -> BTreeSet<&'a str> {
        docs.iter()
            .filter(|d| ids.contains(&d.id))
            .map(|d| d.form_category.as_str())
            .collect()
    }

    #[test]
    fn zero_shot_ten_categories_is_seven_three() {
        let docs = corpus(10, 6);
        let split = make_splits(&docs, SplitMode::ZeroShot, None, 1).unwrap();
        let train = categories_of(&docs, &split.train_ids);
        let test = categories_of(&docs, &split.test_ids);
        assert_eq!((train.len(), test.len()), (7, 3));
        assert!(train.is_disjoint(&test));
    }

    #[test]
    fn few_shot_moves_exactly_k() {
        let docs = corpus(10, 20);
        let zero = make_splits(&docs, SplitMode::ZeroShot, None, 3).unwrap();
        let few = make_splits(&docs, SplitMode::FewShot, Some(5), 3).unwrap();
        let test_cats = categories_of(&docs, &zero.test_ids);
        for cat in test_cats {
            let in_train = docs
                .iter()
                .filter(|d| d.form_category == cat && few.train_ids.contains(&d.id))
                .count();
            let in_test = docs
                .iter()
                .filter(|d| d.form_category == cat && few.test_ids.contains(&d.id))
                .count();
            assert_eq!((in_train, in_test), (5, 15), "{cat}");
        }
    }

    #[test]
    fn few_shot_train_sets_are_nested() {
        let docs = corpus(6, 12);
        let sets: Vec<BTreeSet<String>> = [1, 5, 10]
            .iter()
            .map(|&k| {
                make_splits(&docs, SplitMode::FewShot, Some(k), 9)
                    .unwrap()
                    .train_ids
                    .into_iter()
                    .collect()
            })
            .collect();
        assert!(sets[0].is_subset(&sets[1]) && sets[1].is_subset(&sets[2]));
    }

    #[test]
    fn k_larger_than_category_names_it() {
        let docs = corpus(4, 3);
        let err = make_splits(&docs, SplitMode::FewShot, Some(5), 0).unwrap_err();
        match err {
            Error::Split(m) => assert!(m.contains("category `"), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn invalid_k_is_rejected() {
        let docs = corpus(4, 12);
        assert!(make_splits(&docs, SplitMode::FewShot, Some(3), 0).is_err());
        assert!(make_splits(&docs, SplitMode::FewShot, None, 0).is_err());
    }

    #[test]
    fn full_split_is_seven_three_and_mixes_categories() {
        let docs = corpus(5, 20);
        let split = make_splits(&docs, SplitMode::Full, None, 4).unwrap();
        assert_eq!((split.train_ids.len(), split.test_ids.len()), (70, 30));
        let train = categories_of(&docs, &split.train_ids);
        let test = categories_of(&docs, &split.test_ids);
        assert!(!train.is_disjoint(&test));
    }

    #[test]
    fn splits_are_deterministic() {
        let docs = corpus(6, 10);
        for mode in [SplitMode::ZeroShot, SplitMode::Full] {
            assert_eq!(
                make_splits(&docs, mode, None, 5).unwrap(),
                make_splits(&docs, mode, None, 5).unwrap()
            );
        }
    }

    #[test]
    fn split_file_round_trips() {
        let docs = corpus(4, 10);
        let split = make_splits(&docs, SplitMode::FewShot, Some(1), 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("split.json");
        save_split(&split, &path).unwrap();
        assert_eq!(load_split(&path).unwrap(), split);
        let raw: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(raw["mode"], "few_shot");
        assert_eq!(raw["k"], 1);
    }
}
