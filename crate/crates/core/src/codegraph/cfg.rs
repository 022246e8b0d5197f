//! Control-flow graph over basic blocks.
//!
//! Blocks are maximal runs of branch-free statements, labeled with their
//! statement texts joined by `"; "`. A condition closes the block it ends
//! up in, loop headers always start a fresh block, and synthetic `entry` and
//! `exit` blocks bracket the graph. Unparseable regions become their own
//! `Placeholder` nodes, sequenced like statements.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::ast::{Ast, AstKind, AstNode};
use super::{DepGraph, EdgeKind, Language, NodeId, NodeKind, SourceId, Span};

pub fn build_cfg(ast: &Ast) -> DepGraph {
    let mut b = Builder {
        ast,
        graph: DepGraph::default(),
        edges: BTreeSet::new(),
        current: None,
        pending: Vec::new(),
        returns: Vec::new(),
    };
    let entry = b.graph.add_node(NodeKind::BasicBlock, "entry", None);
    b.pending.push(entry);
    if ast.language == Language::Unknown {
        if let (false, Some(span)) = (ast.root.children.is_empty(), ast.root.span) {
            let text = ast.text(span);
            b.simple(&text, Some(span));
        }
    } else {
        b.stmt(&ast.root);
    }
    b.close();
    let exit = b.graph.add_node(NodeKind::BasicBlock, "exit", None);
    let ends: Vec<NodeId> = b.pending.iter().chain(&b.returns).copied().collect();
    for p in ends {
        b.edges.insert((p, exit));
    }
    let mut graph = b.graph;
    for (src, dst) in b.edges {
        graph.add_edge(src, dst, EdgeKind::Control);
    }
    graph.source = Some(SourceId::of(&ast.source));
    graph
}

struct Builder<'a> {
    ast: &'a Ast,
    graph: DepGraph,
    edges: BTreeSet<(NodeId, NodeId)>,
    /// Block currently accepting statements.
    current: Option<NodeId>,
    /// Blocks whose successor is whatever comes next.
    pending: Vec<NodeId>,
    returns: Vec<NodeId>,
}

impl Builder<'_> {
    fn text(&self, n: &AstNode) -> String {
        n.span.map(|s| self.ast.text(s)).unwrap_or_default()
    }

    fn connect_pending(&mut self, to: NodeId) {
        for p in core::mem::take(&mut self.pending) {
            self.edges.insert((p, to));
        }
    }

    fn simple(&mut self, text: &str, span: Option<Span>) -> NodeId {
        match self.current {
            Some(id) => {
                let node = &mut self.graph.nodes[id];
                if !node.label.is_empty() {
                    node.label.push_str("; ");
                }
                node.label.push_str(text);
                node.span = match (node.span, span) {
                    (Some(a), Some(b)) => Some(a.cover(b)),
                    (a, b) => a.or(b),
                };
                id
            }
            None => {
                let id = self.graph.add_node(NodeKind::BasicBlock, text, span);
                self.connect_pending(id);
                self.current = Some(id);
                id
            }
        }
    }

    fn close(&mut self) {
        if let Some(id) = self.current.take() {
            self.pending = vec![id];
        }
    }

    /// Appends a condition to the current block and ends the block.
    fn condition(&mut self, text: &str, span: Option<Span>) -> NodeId {
        let id = self.simple(text, span);
        self.close();
        id
    }

    /// Starts a fresh block holding only a loop header.
    fn header(&mut self, text: &str, span: Option<Span>) -> NodeId {
        self.close();
        self.condition(text, span)
    }

    fn back_edges(&mut self, header: NodeId) {
        self.close();
        for p in core::mem::take(&mut self.pending) {
            self.edges.insert((p, header));
        }
        self.pending = vec![header];
    }

    fn stmt(&mut self, n: &AstNode) {
        match n.kind {
            AstKind::Block => {
                if !n.label.is_empty() {
                    self.simple(&n.label.clone(), None);
                }
                for c in &n.children {
                    self.stmt(c);
                }
            }
            AstKind::Assign | AstKind::ExprStmt | AstKind::Other => {
                let t = self.text(n);
                self.simple(&t, n.span);
            }
            AstKind::Return => {
                let t = self.text(n);
                let id = self.simple(&t, n.span);
                self.current = None;
                self.returns.push(id);
            }
            AstKind::If => {
                let cond = &n.children[0];
                let t = format!("if {}", self.text(cond));
                let c = self.condition(&t, cond.span);
                self.pending = vec![c];
                self.stmt(&n.children[1]);
                self.close();
                let mut ends = core::mem::take(&mut self.pending);
                self.pending = vec![c];
                if let Some(other) = n.children.get(2) {
                    self.stmt(other);
                    self.close();
                }
                ends.append(&mut self.pending);
                ends.sort_unstable();
                ends.dedup();
                self.pending = ends;
            }
            AstKind::While => {
                let cond = &n.children[0];
                let t = format!("while {}", self.text(cond));
                let h = self.header(&t, cond.span);
                self.pending = vec![h];
                self.stmt(&n.children[1]);
                self.back_edges(h);
            }
            AstKind::For => {
                self.stmt(&n.children[0]);
                let cond = &n.children[1];
                let t = if cond.kind == AstKind::Empty {
                    "for".into()
                } else {
                    format!("for {}", self.text(cond))
                };
                let h = self.header(&t, cond.span);
                self.pending = vec![h];
                self.stmt(&n.children[3]);
                self.stmt(&n.children[2]);
                self.back_edges(h);
            }
            AstKind::ForEach => {
                let (target, iter) = (&n.children[0], &n.children[1]);
                let t = format!("for {} in {}", self.text(target), self.text(iter));
                let span = match (target.span, iter.span) {
                    (Some(a), Some(b)) => Some(a.cover(b)),
                    (a, b) => a.or(b),
                };
                let h = self.header(&t, span);
                self.pending = vec![h];
                self.stmt(&n.children[2]);
                self.back_edges(h);
            }
            AstKind::Placeholder => {
                self.close();
                let id = self.graph.add_node(NodeKind::Placeholder, n.label.clone(), n.span);
                self.connect_pending(id);
                self.pending = vec![id];
            }
            _ => {}
        }
    }
}
