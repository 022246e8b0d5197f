//! Domain-term knowledge base and term extraction.
//!
//! Terms and aliases are indexed under a normalized key: the lowercase
//! alphanumeric words of the string joined by single spaces. A request is
//! scanned word by word; at each position the longest indexed phrase wins,
//! where the last word of the phrase may be any of its fuzz variants:
//!
//! - the word itself, lowercased
//! - plural stripped: `-ies` → `-y`, `-es` → ``, `-s` → `` (not after `s`)
//! - tense stripped: `-ing` / `-ed` removed, with a doubled final consonant
//!   undone (`mapped` → `map`) and an `e` restored (`coded` → `code`)
//!
//! Aliases carry abbreviations and irregular forms.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dataset::{ReviewRequest, TagVocabulary};
use crate::text::{tokenize, PAD};
use crate::{Error, Result};

/// Default number of prefix slots.
pub const DEFAULT_PREFIX_LEN: usize = 50;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeEntry {
    pub term: String,
    #[serde(default)]
    pub aliases: Vec<String>,
    pub definition: String,
    #[serde(default)]
    pub source: String,
}

impl KnowledgeEntry {
    /// Normalized keys of the term followed by its aliases.
    pub fn keys(&self) -> Vec<String> {
        core::iter::once(&self.term)
            .chain(&self.aliases)
            .map(|s| normalize_key(s))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if normalize_key(&self.term).is_empty() {
            return Err(Error::InvalidKnowledgeEntry {
                reason: "term is empty".into(),
            });
        }
        if self.definition.trim().is_empty() {
            return Err(Error::InvalidKnowledgeEntry {
                reason: alloc::format!("definition of {:?} is empty", self.term),
            });
        }
        let mut seen = BTreeSet::new();
        for key in self.keys() {
            if key.is_empty() {
                return Err(Error::InvalidKnowledgeEntry {
                    reason: alloc::format!("empty alias on {:?}", self.term),
                });
            }
            if !seen.insert(key.clone()) {
                return Err(Error::InvalidKnowledgeEntry {
                    reason: alloc::format!("alias {key:?} repeats on {:?}", self.term),
                });
            }
        }
        Ok(())
    }
}

/// Lowercase alphanumeric words of `s`, space-joined.
pub fn normalize_key(s: &str) -> String {
    let words: Vec<String> = tokenize(s)
        .into_iter()
        .filter(|t| t.chars().all(char::is_alphanumeric))
        .collect();
    words.join(" ")
}

/// An immutable, validated set of entries with a key index.
#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeBase {
    entries: Vec<KnowledgeEntry>,
    index: BTreeMap<String, usize>,
    longest_key: usize,
}

impl KnowledgeBase {
    pub fn new(entries: Vec<KnowledgeEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::EmptyKnowledgeBase);
        }
        let mut index = BTreeMap::new();
        let mut longest_key = 0;
        for (i, e) in entries.iter().enumerate() {
            e.validate()?;
            for key in e.keys() {
                longest_key = longest_key.max(key.split(' ').count());
                if index.insert(key.clone(), i).is_some() {
                    return Err(Error::DuplicateKnowledgeKey { key });
                }
            }
        }
        Ok(KnowledgeBase {
            entries,
            index,
            longest_key,
        })
    }

    pub fn entries(&self) -> &[KnowledgeEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Case-insensitive lookup of a term or alias.
    pub fn lookup(&self, key: &str) -> Option<&KnowledgeEntry> {
        self.index.get(&normalize_key(key)).map(|&i| &self.entries[i])
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.index.keys().map(String::as_str)
    }
}

/// Candidate gating for [`extract_terms`].
#[derive(Debug, Clone, Default)]
pub struct TermFilter<'a> {
    /// Words the backend already knows. A phrase whose words are all known
    /// is not a candidate. `None` disables gating.
    pub model_vocab: Option<&'a BTreeSet<String>>,
    /// Label words that stay candidates even when the backend knows them.
    pub tag_words: BTreeSet<String>,
}

impl<'a> TermFilter<'a> {
    pub fn new(model_vocab: Option<&'a BTreeSet<String>>) -> Self {
        TermFilter {
            model_vocab,
            tag_words: BTreeSet::new(),
        }
    }

    /// Lets every word of every label through the vocabulary gate.
    pub fn seed_tags(mut self, vocab: &TagVocabulary) -> Self {
        self.tag_words.extend(vocab.words().into_iter().map(String::from));
        self
    }

    fn admits(&self, words: &[String]) -> bool {
        let Some(vocab) = self.model_vocab else {
            return true;
        };
        words
            .iter()
            .any(|w| !vocab.contains(w) || self.tag_words.contains(w))
    }
}

/// Fuzz variants of one lowercase word, the word itself first.
pub fn fuzz_variants(word: &str) -> Vec<String> {
    let mut out: Vec<String> = vec![word.into()];
    let mut push = |s: String| {
        if s.chars().count() >= 2 && !out.contains(&s) {
            out.push(s);
        }
    };
    if let Some(stem) = word.strip_suffix("ies") {
        push(alloc::format!("{stem}y"));
    }
    if let Some(stem) = word.strip_suffix("es") {
        push(stem.into());
    }
    if let Some(stem) = word.strip_suffix('s') {
        if !stem.ends_with('s') {
            push(stem.into());
        }
    }
    for suffix in ["ing", "ed"] {
        if let Some(stem) = word.strip_suffix(suffix) {
            let chars: Vec<char> = stem.chars().collect();
            if let [.., a, b] = chars[..] {
                if a == b && !"aeiou".contains(b) {
                    push(chars[..chars.len() - 1].iter().collect());
                }
            }
            push(stem.into());
            push(alloc::format!("{stem}e"));
        }
    }
    out
}

/// Knowledge entries mentioned in a request's title and text, in order of
/// first mention, without duplicates.
pub fn extract_terms<'kb>(
    request: &ReviewRequest,
    kb: &'kb KnowledgeBase,
    filter: &TermFilter<'_>,
) -> Vec<&'kb KnowledgeEntry> {
    let words: Vec<String> = tokenize(&request.title)
        .into_iter()
        .chain(tokenize(&request.text))
        .filter(|t| t.chars().all(char::is_alphanumeric))
        .collect();
    let mut found = Vec::new();
    let mut seen = BTreeSet::new();
    let mut i = 0;
    while i < words.len() {
        let mut matched = None;
        for n in (1..=kb.longest_key.min(words.len() - i)).rev() {
            let phrase = &words[i..i + n];
            if !filter.admits(phrase) {
                continue;
            }
            let head = phrase[..n - 1].join(" ");
            for last in fuzz_variants(&phrase[n - 1]) {
                let key = if head.is_empty() {
                    last
                } else {
                    alloc::format!("{head} {last}")
                };
                if let Some(&e) = kb.index.get(&key) {
                    matched = Some((e, n));
                    break;
                }
            }
            if matched.is_some() {
                break;
            }
        }
        match matched {
            Some((e, n)) => {
                if seen.insert(e) {
                    found.push(&kb.entries[e]);
                }
                i += n;
            }
            None => i += 1,
        }
    }
    found
}

/// Textual content of the knowledge prefix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgePrefix {
    pub tokens: Vec<String>,
    /// True when fewer than `budget` slots carry knowledge text; the rest
    /// start from padding.
    pub uninitialized_tail: bool,
}

/// Concatenates definitions in entry order and keeps the first `budget`
/// tokens. With no entries the prefix is `budget` padding tokens.
pub fn render_knowledge_prefix(entries: &[&KnowledgeEntry], budget: usize) -> Result<KnowledgePrefix> {
    if budget == 0 {
        return Err(Error::invalid("budget", "must be at least 1"));
    }
    if entries.is_empty() {
        return Ok(KnowledgePrefix {
            tokens: vec![PAD.into(); budget],
            uninitialized_tail: true,
        });
    }
    let mut tokens = Vec::new();
    for e in entries {
        tokens.extend(tokenize(&e.definition));
        if tokens.len() >= budget {
            break;
        }
    }
    tokens.truncate(budget);
    Ok(KnowledgePrefix {
        uninitialized_tail: tokens.len() < budget,
        tokens,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Necessity;

    fn entry(term: &str, aliases: &[&str]) -> KnowledgeEntry {
        KnowledgeEntry {
            term: term.into(),
            aliases: aliases.iter().map(|a| String::from(*a)).collect(),
            definition: alloc::format!("about {term}"),
            source: "test".into(),
        }
    }

    fn request(text: &str) -> ReviewRequest {
        ReviewRequest {
            id: 1,
            title: String::new(),
            text: text.into(),
            code_snippets: vec![],
            tags: vec![],
            score: 0,
            necessity: Necessity::Unnecessary,
        }
    }

    fn kb() -> KnowledgeBase {
        KnowledgeBase::new(vec![
            entry("object oriented programming", &["oop"]),
            entry("class", &[]),
            entry("map", &[]),
            entry("library", &[]),
            entry("code", &[]),
        ])
        .unwrap()
    }

    fn terms(text: &str, filter: &TermFilter) -> Vec<String> {
        let kb = kb();
        extract_terms(&request(text), &kb, filter)
            .into_iter()
            .map(|e| e.term.clone())
            .collect()
    }

    #[test]
    fn fuzz_rules() {
        assert_eq!(fuzz_variants("classes"), ["classes", "class", "classe"]);
        assert!(fuzz_variants("libraries").contains(&"library".into()));
        assert!(fuzz_variants("mapped").contains(&"map".into()));
        assert!(fuzz_variants("coded").contains(&"code".into()));
        assert_eq!(fuzz_variants("class"), ["class"]);
    }

    #[test]
    fn alias_and_inflection_matching() {
        let f = TermFilter::default();
        assert_eq!(terms("Is OOP overkill?", &f), ["object oriented programming"]);
        assert_eq!(terms("Two Classes and a map", &f), ["class", "map"]);
        assert_eq!(terms("object oriented programming with classes", &f), [
            "object oriented programming",
            "class"
        ]);
        assert!(terms("nothing relevant here", &f).is_empty());
    }

    #[test]
    fn first_mention_order_without_duplicates() {
        let f = TermFilter::default();
        assert_eq!(terms("map class maps", &f), ["map", "class"]);
    }

    #[test]
    fn case_insensitive() {
        let f = TermFilter::default();
        assert_eq!(terms("CLASSES OOP", &f), terms("classes oop", &f));
    }

    #[test]
    fn vocabulary_gating_and_tag_seeding() {
        let known: BTreeSet<String> = ["class", "classes", "map"].iter().map(|s| String::from(*s)).collect();
        let f = TermFilter::new(Some(&known));
        assert_eq!(terms("classes and map and oop", &f), ["object oriented programming"]);
        let mut seeded = TermFilter::new(Some(&known));
        seeded.tag_words.insert("map".into());
        assert_eq!(terms("classes and map", &seeded), ["map"]);
    }

    #[test]
    fn duplicate_keys_rejected() {
        let err = KnowledgeBase::new(vec![entry("map", &[]), entry("maps", &["MAP"])]).unwrap_err();
        assert_eq!(err, Error::DuplicateKnowledgeKey { key: "map".into() });
        assert_eq!(KnowledgeBase::new(vec![]).unwrap_err(), Error::EmptyKnowledgeBase);
        assert!(entry("a", &["A"]).validate().is_err());
    }

    #[test]
    fn prefix_budget() {
        let mut long = entry("x", &[]);
        long.definition = (0..80).map(|i| alloc::format!("w{i} ")).collect();
        let p = render_knowledge_prefix(&[&long], 50).unwrap();
        assert_eq!(p.tokens.len(), 50);
        assert!(!p.uninitialized_tail);
        let short = entry("y", &[]);
        let p = render_knowledge_prefix(&[&short], 50).unwrap();
        assert_eq!(p.tokens, ["about", "y"]);
        assert!(p.uninitialized_tail);
        let p = render_knowledge_prefix(&[], 50).unwrap();
        assert_eq!(p.tokens.len(), 50);
        assert!(p.tokens.iter().all(|t| t == PAD));
    }
}
