//! Mapping predicted mask tokens onto the closed label sets.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::dataset::{Necessity, TagVocabulary};
use crate::model::MaskPrediction;
use crate::text::{is_special, PAD};
use crate::{Error, Result};

/// Levenshtein distance over Unicode scalar values with unit costs.
pub fn edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        core::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// How a label was reached, best first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    Exact,
    PartialWords,
    EditDistance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelMapping<L = String> {
    pub label: L,
    pub method: Method,
    pub distance: usize,
    pub source_tokens: Vec<String>,
    pub score: f64,
}

fn rank<L: Ord>(a: &LabelMapping<L>, b: &LabelMapping<L>) -> Ordering {
    a.method
        .cmp(&b.method)
        .then(b.score.total_cmp(&a.score))
        .then(a.distance.cmp(&b.distance))
        .then(a.label.cmp(&b.label))
}

/// Word in `words` closest to `token`; ties go to the smaller word.
fn nearest<'a>(token: &str, words: impl IntoIterator<Item = &'a str>) -> Option<(&'a str, usize)> {
    words
        .into_iter()
        .map(|w| (w, edit_distance(token, w)))
        .min_by(|a, b| a.1.cmp(&b.1).then(a.0.cmp(b.0)))
}

/// Ranks tag labels from the predictions at the tag masks.
///
/// A label of `m` words is read across the masks in order, with padding
/// expected at masks past its last word:
///
/// - `Exact`: every word (and every trailing pad) appears among the
///   candidates of its own mask
/// - `PartialWords`: some of the label's words appear among the candidates
///   of any tag mask
/// - `EditDistance`: a candidate that is no label word is replaced by the
///   nearest label word, and labels containing that word match
///
/// The score is the product of the probabilities of the consumed tokens.
/// Labels rank by method, score descending, distance ascending, then id.
pub fn map_tag_predictions(preds: &[MaskPrediction], vocab: &TagVocabulary, k: usize) -> Result<Vec<LabelMapping>> {
    if vocab.is_empty() {
        return Err(Error::Empty { what: "tag vocabulary" });
    }
    if preds.is_empty() {
        return Err(Error::Empty { what: "tag predictions" });
    }
    let label_words = vocab.words();
    let mut best: BTreeMap<&str, LabelMapping> = BTreeMap::new();
    let mut offer = |m: LabelMapping| {
        let slot = best.get(m.label.as_str()).map(|b| rank(&m, b) == Ordering::Less);
        if slot.unwrap_or(true) {
            let key = vocab.entries.get_key_value(&m.label).map(|(k, _)| k.as_str());
            if let Some(key) = key {
                best.insert(key, m);
            }
        }
    };

    for (id, entry) in vocab.iter() {
        let words = &entry.words;
        let mut exact = words.len() <= preds.len();
        let mut score = 1.0;
        let mut tokens = Vec::new();
        for (j, p) in preds.iter().enumerate() {
            let want = words.get(j).map(String::as_str).unwrap_or(PAD);
            match p.score_of(want) {
                Some(s) => {
                    score *= s;
                    tokens.push(want.into());
                }
                None => exact = false,
            }
            if !exact {
                break;
            }
        }
        if exact {
            offer(LabelMapping {
                label: id.clone(),
                method: Method::Exact,
                distance: 0,
                source_tokens: tokens,
                score,
            });
            continue;
        }
        let mut found = Vec::new();
        let mut score = 1.0;
        for w in words {
            let s = preds.iter().filter_map(|p| p.score_of(w)).fold(None, |acc: Option<f64>, s| {
                Some(acc.map_or(s, |a| a.max(s)))
            });
            if let Some(s) = s {
                score *= s;
                found.push(w.clone());
            }
        }
        if !found.is_empty() {
            offer(LabelMapping {
                label: id.clone(),
                method: Method::PartialWords,
                distance: 0,
                source_tokens: found,
                score,
            });
        }
    }

    let mut by_word: BTreeMap<&str, Vec<&String>> = BTreeMap::new();
    for (id, entry) in vocab.iter() {
        for w in &entry.words {
            by_word.entry(w.as_str()).or_default().push(id);
        }
    }
    let mut tried = BTreeSet::new();
    for p in preds {
        for c in &p.candidates {
            let t = c.token.as_str();
            if is_special(t) || label_words.contains(t) || !tried.insert((t, c.score.to_bits())) {
                continue;
            }
            let Some((word, distance)) = nearest(t, label_words.iter().copied()) else {
                continue;
            };
            for id in &by_word[word] {
                offer(LabelMapping {
                    label: (*id).clone(),
                    method: Method::EditDistance,
                    distance,
                    source_tokens: vec![c.token.clone()],
                    score: c.score,
                });
            }
        }
    }

    let mut ranked: Vec<LabelMapping> = best.into_values().collect();
    ranked.sort_by(rank);
    ranked.truncate(k);
    Ok(ranked)
}

pub fn default_verbalizer() -> BTreeMap<String, Necessity> {
    BTreeMap::from([
        ("yes".into(), Necessity::Necessary),
        ("no".into(), Necessity::Unnecessary),
    ])
}

/// Reads the necessity answer: the best-ranked candidate found in the
/// verbalizer wins; failing that, the verbalizer token nearest the top
/// candidate.
pub fn decide_necessity(pred: &MaskPrediction, verbalizer: &BTreeMap<String, Necessity>) -> Result<LabelMapping<Necessity>> {
    if verbalizer.is_empty() {
        return Err(Error::Empty { what: "verbalizer" });
    }
    let Some(top) = pred.candidates.first() else {
        return Err(Error::Empty { what: "necessity prediction" });
    };
    if let Some((c, &label)) = pred
        .candidates
        .iter()
        .find_map(|c| verbalizer.get(&c.token).map(|l| (c, l)))
    {
        return Ok(LabelMapping {
            label,
            method: Method::Exact,
            distance: 0,
            source_tokens: vec![c.token.clone()],
            score: c.score,
        });
    }
    let (word, distance) = nearest(&top.token, verbalizer.keys().map(String::as_str)).expect("verbalizer is non-empty");
    Ok(LabelMapping {
        label: verbalizer[word],
        method: Method::EditDistance,
        distance,
        source_tokens: vec![top.token.clone()],
        score: top.score,
    })
}
