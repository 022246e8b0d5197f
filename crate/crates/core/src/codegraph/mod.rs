//! Code snippets to dependence graphs.
//!
//! A snippet is truncated to the configured code length, its language is
//! guessed from keyword features, and a best-effort parser produces an
//! [`Ast`]. From the tree we derive a data-flow graph (variables and
//! operations, `Data` edges pointing from definition to use), a control-flow
//! graph (basic blocks, `Control` edges between immediate successors) and
//! their merge, the program dependence graph.
//!
//! Graphs serialize to `{"edges":[...],"nodes":[...]}` with keys in sorted
//! order and ids assigned in traversal order, so identical input always
//! yields identical bytes.

mod ast;
mod cfg;
mod dfg;
mod lexer;
mod pdg;

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::hash::Fnv1a;
use crate::{Error, Result};

pub use ast::{parse_ast, Ast, AstKind, AstNode};
pub use cfg::build_cfg;
pub use dfg::build_dfg;
pub use pdg::build_pdg;

pub const DEFAULT_CODE_LENGTH: usize = 150;

/// Half-open range of character (not byte) offsets into the snippet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn cover(self, other: Span) -> Span {
        Span::new(self.start.min(other.start), self.end.max(other.end))
    }
}

impl From<[usize; 2]> for Span {
    fn from([start, end]: [usize; 2]) -> Self {
        Span { start, end }
    }
}

impl From<Span> for [usize; 2] {
    fn from(s: Span) -> Self {
        [s.start, s.end]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Language {
    PythonLike,
    JavaLike,
    CFamily,
    JsLike,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeSnippet {
    pub source: String,
    pub language: Language,
    /// Number of characters kept from the original text.
    pub truncated_to: usize,
}

impl CodeSnippet {
    /// Keeps the first `code_len` characters of `source` and detects the
    /// language on what remains.
    pub fn new(source: &str, code_len: usize) -> Self {
        let kept = truncate_chars(source, code_len);
        let language = detect_language(kept);
        Self::with_language(kept, language, code_len)
    }

    pub fn with_language(source: &str, language: Language, code_len: usize) -> Self {
        let kept = truncate_chars(source, code_len);
        CodeSnippet {
            source: kept.into(),
            language,
            truncated_to: kept.chars().count(),
        }
    }
}

fn truncate_chars(s: &str, n: usize) -> &str {
    match s.char_indices().nth(n) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

enum Feature {
    Word(&'static str),
    Substr(&'static str),
}

use Feature::{Substr, Word};

/// Keyword/pattern table used by [`detect_language`]. Each feature present
/// in the snippet adds its weight to its language once.
const FEATURES: &[(Language, Feature, u32)] = &[
    (Language::PythonLike, Word("def"), 3),
    (Language::PythonLike, Word("elif"), 3),
    (Language::PythonLike, Word("self"), 2),
    (Language::PythonLike, Word("None"), 2),
    (Language::PythonLike, Word("True"), 1),
    (Language::PythonLike, Word("False"), 1),
    (Language::PythonLike, Word("lambda"), 2),
    (Language::PythonLike, Word("print"), 1),
    (Language::PythonLike, Word("range"), 1),
    (Language::PythonLike, Substr("__init__"), 2),
    (Language::PythonLike, Substr("\"\"\""), 1),
    (Language::PythonLike, Substr("):\n"), 2),
    (Language::PythonLike, Substr("else:"), 2),
    (Language::JavaLike, Word("public"), 2),
    (Language::JavaLike, Word("private"), 2),
    (Language::JavaLike, Word("protected"), 2),
    (Language::JavaLike, Word("String"), 2),
    (Language::JavaLike, Word("extends"), 2),
    (Language::JavaLike, Word("implements"), 3),
    (Language::JavaLike, Word("final"), 1),
    (Language::JavaLike, Word("boolean"), 2),
    (Language::JavaLike, Substr("System.out"), 3),
    (Language::JavaLike, Substr("@Override"), 3),
    (Language::JavaLike, Substr("import java"), 3),
    (Language::JavaLike, Word("static"), 1),
    (Language::JavaLike, Word("void"), 1),
    (Language::CFamily, Substr("#include"), 4),
    (Language::CFamily, Substr("std::"), 3),
    (Language::CFamily, Word("printf"), 3),
    (Language::CFamily, Word("cout"), 3),
    (Language::CFamily, Word("nullptr"), 3),
    (Language::CFamily, Word("unsigned"), 2),
    (Language::CFamily, Word("sizeof"), 2),
    (Language::CFamily, Word("malloc"), 3),
    (Language::CFamily, Word("struct"), 2),
    (Language::CFamily, Word("template"), 2),
    (Language::CFamily, Substr("->"), 1),
    (Language::CFamily, Word("static"), 1),
    (Language::CFamily, Word("void"), 1),
    (Language::JsLike, Word("function"), 3),
    (Language::JsLike, Word("const"), 1),
    (Language::JsLike, Word("let"), 2),
    (Language::JsLike, Word("var"), 2),
    (Language::JsLike, Word("undefined"), 3),
    (Language::JsLike, Word("require"), 2),
    (Language::JsLike, Substr("=>"), 2),
    (Language::JsLike, Substr("==="), 3),
    (Language::JsLike, Substr("console.log"), 3),
    (Language::JsLike, Substr("document."), 3),
];

/// Minimum score a language needs before it is reported.
pub const DETECTION_FLOOR: u32 = 2;

/// Scores every language against [`FEATURES`]; the highest score wins,
/// ties go to the earlier language in enum order, and scores below
/// [`DETECTION_FLOOR`] yield `Unknown`.
pub fn detect_language(source: &str) -> Language {
    let words: alloc::collections::BTreeSet<&str> = source
        .split(|c: char| !(c.is_alphanumeric() || c == '_'))
        .filter(|w| !w.is_empty())
        .collect();
    let langs = [
        Language::PythonLike,
        Language::JavaLike,
        Language::CFamily,
        Language::JsLike,
    ];
    let mut best = (Language::Unknown, 0u32);
    for lang in langs {
        let score: u32 = FEATURES
            .iter()
            .filter(|(l, _, _)| *l == lang)
            .filter(|(_, f, _)| match f {
                Word(w) => words.contains(w),
                Substr(s) => source.contains(s),
            })
            .map(|(_, _, w)| w)
            .sum();
        if score > best.1 {
            best = (lang, score);
        }
    }
    if best.1 < DETECTION_FLOOR {
        Language::Unknown
    } else {
        best.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    Variable,
    Operation,
    BasicBlock,
    Placeholder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EdgeKind {
    Data,
    Control,
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl fmt::Display for EdgeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

pub type NodeId = usize;

// Field order is alphabetical so the serialized keys come out sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub kind: NodeKind,
    pub label: String,
    pub span: Option<Span>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    pub dst: NodeId,
    pub kind: EdgeKind,
    pub src: NodeId,
}

/// Identity of the source text a graph was built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SourceId {
    pub chars: usize,
    pub hash: u64,
}

impl SourceId {
    pub fn of(source: &str) -> Self {
        let mut h = Fnv1a::new();
        h.write(source.as_bytes());
        SourceId {
            chars: source.chars().count(),
            hash: h.finish(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DepGraph {
    pub edges: Vec<Edge>,
    pub nodes: Vec<Node>,
    /// Source the spans refer to; `None` for hand-built or empty graphs.
    #[serde(skip)]
    pub source: Option<SourceId>,
}

impl DepGraph {
    pub fn add_node(&mut self, kind: NodeKind, label: impl Into<String>, span: Option<Span>) -> NodeId {
        let id = self.nodes.len();
        self.nodes.push(Node {
            id,
            kind,
            label: label.into(),
            span,
        });
        id
    }

    pub fn add_edge(&mut self, src: NodeId, dst: NodeId, kind: EdgeKind) {
        self.edges.push(Edge { dst, kind, src });
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        match self.nodes.get(id) {
            Some(n) if n.id == id => Some(n),
            _ => self.nodes.iter().find(|n| n.id == id),
        }
    }

    pub fn count_edges(&self, kind: EdgeKind) -> usize {
        self.edges.iter().filter(|e| e.kind == kind).count()
    }

    /// Checks that node ids are unique and every edge endpoint exists.
    pub fn validate(&self) -> Result<()> {
        let mut ids = alloc::collections::BTreeSet::new();
        for n in &self.nodes {
            if !ids.insert(n.id) {
                return Err(Error::invalid("graph", alloc::format!("duplicate node id {}", n.id)));
            }
        }
        for e in &self.edges {
            if !ids.contains(&e.src) || !ids.contains(&e.dst) {
                return Err(Error::invalid(
                    "graph",
                    alloc::format!("dangling edge {} -> {}", e.src, e.dst),
                ));
            }
        }
        Ok(())
    }

    /// Stable hash over the graph content, used as provenance for
    /// embeddings.
    pub fn content_hash(&self) -> u64 {
        let mut h = Fnv1a::new();
        for n in &self.nodes {
            h.write(&(n.id as u64).to_le_bytes());
            h.write_str(&alloc::format!("{}", n.kind));
            h.write_str(&n.label);
            match n.span {
                Some(s) => {
                    h.write(&(s.start as u64).to_le_bytes());
                    h.write(&(s.end as u64).to_le_bytes());
                }
                None => h.write(&[0xfe]),
            }
        }
        for e in &self.edges {
            h.write(&(e.src as u64).to_le_bytes());
            h.write(&(e.dst as u64).to_le_bytes());
            h.write_str(&alloc::format!("{}", e.kind));
        }
        h.finish()
    }
}

/// Parses `snippet` and returns its data-flow, control-flow and merged
/// dependence graphs.
pub fn build_graphs(snippet: &CodeSnippet) -> (DepGraph, DepGraph, DepGraph) {
    let ast = parse_ast(snippet);
    let dfg = build_dfg(&ast);
    let cfg = build_cfg(&ast);
    let pdg = build_pdg(&dfg, &cfg).expect("graphs from one tree share a source");
    (dfg, cfg, pdg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detects_examples() {
        assert_eq!(detect_language("def f(x):\n    return x"), Language::PythonLike);
        assert_eq!(
            detect_language("public static void main(String[] a){}"),
            Language::JavaLike
        );
        assert_eq!(detect_language("#include <stdio.h>\nint main(){printf(\"x\");}"), Language::CFamily);
        assert_eq!(detect_language("const f = (x) => x === 1;"), Language::JsLike);
        assert_eq!(detect_language(""), Language::Unknown);
        assert_eq!(detect_language("a = 1"), Language::Unknown);
    }

    #[test]
    fn truncation_counts_chars() {
        let s = CodeSnippet::new("héllo wörld", 5);
        assert_eq!(s.source, "héllo");
        assert_eq!(s.truncated_to, 5);
        let s = CodeSnippet::new("ab", 150);
        assert_eq!(s.truncated_to, 2);
    }

    #[test]
    fn validate_catches_dangling_and_duplicates() {
        let mut g = DepGraph::default();
        let a = g.add_node(NodeKind::Variable, "a", None);
        g.add_edge(a, 7, EdgeKind::Data);
        assert!(g.validate().is_err());
        let mut g = DepGraph::default();
        g.add_node(NodeKind::Variable, "a", None);
        g.nodes.push(g.nodes[0].clone());
        assert!(g.validate().is_err());
    }

    #[test]
    fn span_serializes_as_pair() {
        let n = Node {
            id: 0,
            kind: NodeKind::Operation,
            label: "=".into(),
            span: Some(Span::new(0, 5)),
        };
        assert_eq!(
            serde_json::to_string(&n).unwrap(),
            r#"{"id":0,"kind":"Operation","label":"=","span":[0,5]}"#
        );
    }
}
