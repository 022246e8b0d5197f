//! Labeled corpus construction: necessity labels, rare-tag filtering,
//! tag normalization and fold splitting.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const DEFAULT_NECESSITY_THRESHOLD: i64 = 4;
pub const DEFAULT_RARE_TAG_THRESHOLD: usize = 50;
pub const DEFAULT_FOLDS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Necessity {
    Necessary,
    Unnecessary,
}

/// One review request after cleaning and labeling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewRequest {
    pub id: u64,
    pub title: String,
    pub text: String,
    pub code_snippets: Vec<String>,
    /// Tag ids; each resolves in the corpus [`TagVocabulary`].
    pub tags: Vec<String>,
    pub score: i64,
    pub necessity: Necessity,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagEntry {
    pub surface: String,
    pub words: Vec<String>,
    pub frequency: usize,
}

/// Tag id → entry. Serializes as a plain JSON object keyed by tag id.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TagVocabulary {
    pub entries: BTreeMap<String, TagEntry>,
}

impl TagVocabulary {
    pub fn get(&self, id: &str) -> Option<&TagEntry> {
        self.entries.get(id)
    }

    pub fn contains(&self, id: &str) -> bool {
        self.entries.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &TagEntry)> {
        self.entries.iter()
    }

    /// Every distinct word used by any label, sorted.
    pub fn words(&self) -> BTreeSet<&str> {
        self.entries
            .values()
            .flat_map(|e| e.words.iter().map(String::as_str))
            .collect()
    }

    /// Longest label in words; the data-driven alternative to the fixed
    /// three tag masks of the default template.
    pub fn max_words(&self) -> usize {
        self.entries.values().map(|e| e.words.len()).max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub n_labels_total: usize,
    pub n_labels_train: usize,
}

impl CorpusStats {
    pub fn compute(corpus: &[ReviewRequest], vocab: &TagVocabulary, split: &FoldSplit) -> Self {
        let train_labels: BTreeSet<&str> = split
            .train
            .iter()
            .flat_map(|&i| corpus[i].tags.iter().map(String::as_str))
            .collect();
        CorpusStats {
            n_train: split.train.len(),
            n_val: split.validation.len(),
            n_test: split.test.len(),
            n_labels_total: vocab.len(),
            n_labels_train: train_labels.len(),
        }
    }
}

pub fn label_necessity(score: i64, threshold: i64) -> Necessity {
    if score >= threshold {
        Necessity::Necessary
    } else {
        Necessity::Unnecessary
    }
}

/// Counts, per tag, the number of requests carrying it.
pub fn tag_frequencies(corpus: &[ReviewRequest]) -> BTreeMap<String, usize> {
    let mut freq = BTreeMap::new();
    for req in corpus {
        let distinct: BTreeSet<&String> = req.tags.iter().collect();
        for tag in distinct {
            *freq.entry(tag.clone()).or_insert(0) += 1;
        }
    }
    freq
}

/// Removes tags used by fewer than `theta` requests, then drops requests
/// left without tags. Frequencies are counted once on the input corpus.
///
/// A single pass is already a fixed point: a request is only dropped when
/// none of its tags survived, so no surviving tag loses frequency.
pub fn filter_rare_tags(
    corpus: Vec<ReviewRequest>,
    theta: usize,
) -> Result<(Vec<ReviewRequest>, TagVocabulary)> {
    if theta == 0 {
        return Err(Error::invalid("theta", "must be at least 1"));
    }
    let freq = tag_frequencies(&corpus);
    let keep: BTreeSet<&String> = freq
        .iter()
        .filter(|(_, &n)| n >= theta)
        .map(|(t, _)| t)
        .collect();

    let mut entries = BTreeMap::new();
    for tag in &keep {
        let words = normalize_tag(tag)?;
        entries.insert(
            (*tag).clone(),
            TagEntry {
                surface: (*tag).clone(),
                words,
                frequency: freq[*tag],
            },
        );
    }

    let filtered = corpus
        .into_iter()
        .filter_map(|mut req| {
            req.tags.retain(|t| keep.contains(t));
            (!req.tags.is_empty()).then_some(req)
        })
        .collect();
    Ok((filtered, TagVocabulary { entries }))
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum CharClass {
    Letter,
    Digit,
}

fn is_tag_separator(c: char) -> bool {
    matches!(c, '-' | '.' | '+' | '_') || c.is_whitespace()
}

/// Decomposes a tag surface into lowercase words.
///
/// Splits on `-`, `.`, `+`, `_` and whitespace, and between letters and
/// digits. Symbols such as `#` stay attached to the letters around them.
pub fn normalize_tag(surface: &str) -> Result<Vec<String>> {
    let mut words = Vec::new();
    let mut current = String::new();
    let mut last: Option<CharClass> = None;
    for c in surface.chars() {
        if is_tag_separator(c) {
            if !current.is_empty() {
                words.push(core::mem::take(&mut current));
            }
            last = None;
            continue;
        }
        let class = if c.is_numeric() {
            CharClass::Digit
        } else {
            CharClass::Letter
        };
        if last.is_some_and(|l| l != class) && !current.is_empty() {
            words.push(core::mem::take(&mut current));
        }
        current.extend(c.to_lowercase());
        last = Some(class);
    }
    if !current.is_empty() {
        words.push(current);
    }
    if words.is_empty() {
        return Err(Error::EmptyTag {
            surface: surface.into(),
        });
    }
    Ok(words)
}

/// Index sets of one cross-validation fold. Indices are sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

/// Shuffles `0..n` once with `seed`, cuts it into `folds` near-equal
/// chunks, and for each fold uses one chunk as test and splits the rest
/// 8:1 into train and validation.
pub fn split_folds(n: usize, folds: usize, seed: u64) -> Result<Vec<FoldSplit>> {
    if folds < 2 {
        return Err(Error::invalid("folds", "need at least 2 folds"));
    }
    if n < folds {
        return Err(Error::invalid(
            "folds",
            alloc::format!("corpus of {n} requests is smaller than {folds} folds"),
        ));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let base = n / folds;
    let extra = n % folds;
    let mut bounds = Vec::with_capacity(folds + 1);
    bounds.push(0);
    for f in 0..folds {
        let len = base + usize::from(f < extra);
        bounds.push(bounds[f] + len);
    }

    let splits = (0..folds)
        .map(|f| {
            let (lo, hi) = (bounds[f], bounds[f + 1]);
            let mut test = order[lo..hi].to_vec();
            let rest: Vec<usize> = order[..lo].iter().chain(&order[hi..]).copied().collect();
            let n_val = (rest.len() + 4) / 9;
            let n_train = rest.len() - n_val;
            let mut train = rest[..n_train].to_vec();
            let mut validation = rest[n_train..].to_vec();
            train.sort_unstable();
            validation.sort_unstable();
            test.sort_unstable();
            FoldSplit {
                train,
                validation,
                test,
            }
        })
        .collect();
    Ok(splits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    fn req(id: u64, tags: &[&str]) -> ReviewRequest {
        ReviewRequest {
            id,
            title: String::new(),
            text: String::new(),
            code_snippets: vec![],
            tags: tags.iter().map(|t| t.to_string()).collect(),
            score: 0,
            necessity: Necessity::Unnecessary,
        }
    }

    #[test]
    fn necessity_threshold_boundary() {
        assert_eq!(label_necessity(4, 4), Necessity::Necessary);
        assert_eq!(label_necessity(3, 4), Necessity::Unnecessary);
        assert_eq!(label_necessity(0, 0), Necessity::Necessary);
        assert_eq!(label_necessity(-2, 4), Necessity::Unnecessary);
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_tag("object-oriented").unwrap(), ["object", "oriented"]);
        assert_eq!(normalize_tag("java").unwrap(), ["java"]);
        assert_eq!(normalize_tag("python3.x").unwrap(), ["python", "3", "x"]);
        assert_eq!(normalize_tag("C#").unwrap(), ["c#"]);
        assert_eq!(normalize_tag("c++11").unwrap(), ["c", "11"]);
        assert!(matches!(normalize_tag("-+."), Err(Error::EmptyTag { .. })));
        assert!(normalize_tag("").is_err());
    }

    #[test]
    fn rare_tag_boundary() {
        let mut corpus = Vec::new();
        for i in 0..50 {
            corpus.push(req(i, &["common"]));
        }
        for i in 50..99 {
            corpus.push(req(i, &["rare"]));
        }
        corpus.push(req(99, &["rare", "common"]));
        // common: 51, rare: 50 -> both survive at theta 50
        let (out, vocab) = filter_rare_tags(corpus.clone(), 50).unwrap();
        assert_eq!(out.len(), 100);
        assert_eq!(vocab.len(), 2);
        // at theta 51 "rare" goes, and its 49 single-tag requests with it
        let (out, vocab) = filter_rare_tags(corpus, 51).unwrap();
        assert_eq!(out.len(), 51);
        assert!(vocab.contains("common") && !vocab.contains("rare"));
        assert_eq!(out.last().unwrap().tags, ["common"]);
    }

    #[test]
    fn rare_tag_noop_and_empty() {
        let corpus = vec![req(1, &["a"]), req(2, &["a", "b"]), req(3, &["b"])];
        let (out, vocab) = filter_rare_tags(corpus.clone(), 2).unwrap();
        assert_eq!(out, corpus);
        assert_eq!(vocab.get("a").unwrap().frequency, 2);
        let (out, vocab) = filter_rare_tags(vec![], 50).unwrap();
        assert!(out.is_empty() && vocab.is_empty());
        assert!(filter_rare_tags(vec![], 0).is_err());
    }

    #[test]
    fn folds_partition_arithmetic() {
        let folds = split_folds(10, 10, 7).unwrap();
        assert_eq!(folds.len(), 10);
        for f in &folds {
            assert_eq!(f.test.len(), 1);
            assert_eq!(f.train.len() + f.validation.len(), 9);
        }
        assert!(split_folds(9, 10, 0).is_err());
        assert!(split_folds(9, 1, 0).is_err());
        assert_eq!(split_folds(50, 10, 3).unwrap(), split_folds(50, 10, 3).unwrap());
        assert_ne!(split_folds(50, 10, 3).unwrap(), split_folds(50, 10, 4).unwrap());
    }
}
