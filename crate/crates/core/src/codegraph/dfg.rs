//! Data-flow graph construction.
//!
//! Nodes are operations and variable definitions; every definition gets its
//! own `Variable` node. `Data` edges point from the node producing a value
//! to the node consuming it (definition to use). Uses are linked to their
//! reaching definitions with a forward analysis over the statement tree:
//! the last textual definition wins along a path, branch arms merge by set
//! union, and loops iterate until the definition sets stop growing. A use
//! with no visible definition on some path is fed by a `Placeholder` node
//! named after the variable.

use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::ast::{Ast, AstKind, AstNode};
use super::{DepGraph, EdgeKind, NodeId, NodeKind, SourceId, Span};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Def {
    Undefined,
    At(NodeId),
}

type Env = BTreeMap<String, BTreeSet<Def>>;

enum Flow {
    Step {
        uses: Vec<(NodeId, String)>,
        defs: Vec<(String, NodeId)>,
    },
    Seq(Vec<Flow>),
    Branch {
        cond: Box<Flow>,
        arms: Vec<Flow>,
    },
    Loop {
        header: Box<Flow>,
        body: Box<Flow>,
    },
}

enum Value {
    Node(NodeId),
    Uses(Vec<String>),
    Nothing,
}

pub fn build_dfg(ast: &Ast) -> DepGraph {
    let mut b = Builder {
        graph: DepGraph::default(),
        edges: BTreeSet::new(),
        placeholders: BTreeMap::new(),
    };
    let flow = b.stmt(&ast.root);
    b.link(&flow, Env::new());
    let mut graph = b.graph;
    for (src, dst) in b.edges {
        graph.add_edge(src, dst, EdgeKind::Data);
    }
    graph.source = Some(SourceId::of(&ast.source));
    graph
}

struct Builder {
    graph: DepGraph,
    /// (src, dst) pairs; iteration order is the serialized edge order.
    edges: BTreeSet<(NodeId, NodeId)>,
    placeholders: BTreeMap<String, NodeId>,
}

impl Builder {
    fn feed(&mut self, value: Value, consumer: NodeId, uses: &mut Vec<(NodeId, String)>) {
        match value {
            Value::Node(src) => {
                self.edges.insert((src, consumer));
            }
            Value::Uses(names) => uses.extend(names.into_iter().map(|n| (consumer, n))),
            Value::Nothing => {}
        }
    }

    fn op(
        &mut self,
        label: impl Into<String>,
        span: Option<Span>,
        inputs: Vec<Value>,
        uses: &mut Vec<(NodeId, String)>,
    ) -> NodeId {
        let id = self.graph.add_node(NodeKind::Operation, label, span);
        for v in inputs {
            self.feed(v, id, uses);
        }
        id
    }

    fn expr(&mut self, e: &AstNode, uses: &mut Vec<(NodeId, String)>) -> Value {
        match e.kind {
            AstKind::Var => Value::Uses(vec![e.label.clone()]),
            AstKind::Attr => self.expr(&e.children[0], uses),
            AstKind::Seq => {
                let values: Vec<Value> = e.children.iter().map(|c| self.expr(c, uses)).collect();
                if values.iter().any(|v| matches!(v, Value::Node(_))) {
                    Value::Node(self.op(e.label.clone(), e.span, values, uses))
                } else {
                    let names: Vec<String> = values
                        .into_iter()
                        .flat_map(|v| match v {
                            Value::Uses(n) => n,
                            _ => vec![],
                        })
                        .collect();
                    if names.is_empty() {
                        Value::Nothing
                    } else {
                        Value::Uses(names)
                    }
                }
            }
            AstKind::Binary | AstKind::Unary | AstKind::Index => {
                let inputs = e.children.iter().map(|c| self.expr(c, uses)).collect();
                Value::Node(self.op(e.label.clone(), e.span, inputs, uses))
            }
            AstKind::Call => {
                let mut inputs = Vec::new();
                for (i, c) in e.children.iter().enumerate() {
                    // a bare callee name is a function, not a variable use
                    if i == 0 && c.kind == AstKind::Var {
                        continue;
                    }
                    inputs.push(self.expr(c, uses));
                }
                Value::Node(self.op(format!("call {}", e.label), e.span, inputs, uses))
            }
            AstKind::Placeholder => Value::Node(self.graph.add_node(NodeKind::Placeholder, e.label.clone(), e.span)),
            _ => Value::Nothing,
        }
    }

    /// Evaluates a condition or header expression, materializing an
    /// operation when the expression is a bare variable.
    fn condition(&mut self, e: &AstNode, label: &str) -> Flow {
        let mut uses = Vec::new();
        let v = self.expr(e, &mut uses);
        if let Value::Uses(_) = v {
            self.op(label, e.span, vec![v], &mut uses);
        }
        Flow::Step { uses, defs: vec![] }
    }

    /// Variables written by an assignment target, plus the values the
    /// target reads (object of a field write, index expressions).
    fn target(&mut self, t: &AstNode, uses: &mut Vec<(NodeId, String)>, reads: &mut Vec<Value>) -> Vec<(String, Span)> {
        match t.kind {
            AstKind::Var => vec![(t.label.clone(), t.span.unwrap_or(Span::new(0, 0)))],
            AstKind::Seq => t
                .children
                .iter()
                .flat_map(|c| self.target(c, uses, reads))
                .collect(),
            AstKind::Attr | AstKind::Index | AstKind::Unary => {
                for extra in t.children.iter().skip(1) {
                    let v = self.expr(extra, uses);
                    reads.push(v);
                }
                let base = self.target(&t.children[0], uses, reads);
                for (name, _) in &base {
                    reads.push(Value::Uses(vec![name.clone()]));
                }
                base
            }
            _ => vec![],
        }
    }

    fn assign(&mut self, n: &AstNode) -> Flow {
        let mut uses = Vec::new();
        let mut inputs = Vec::new();
        let op = n.label.as_str();
        let target = &n.children[0];
        let simple_target = target.kind == AstKind::Var;
        let targets = self.target(target, &mut uses, &mut inputs);
        if op != "=" && op != ":=" {
            for (name, _) in &targets {
                inputs.push(Value::Uses(vec![name.clone()]));
            }
        }
        let value = match n.children.get(1) {
            Some(v) => self.expr(v, &mut uses),
            None => Value::Nothing,
        };
        let producer = match value {
            Value::Node(id) if simple_target && (op == "=" || op == ":=") => id,
            other => {
                inputs.push(other);
                self.op(op, n.span, inputs, &mut uses)
            }
        };
        let mut defs = Vec::new();
        for (name, span) in targets {
            let var = self.graph.add_node(NodeKind::Variable, name.clone(), Some(span));
            self.edges.insert((producer, var));
            defs.push((name, var));
        }
        Flow::Step { uses, defs }
    }

    fn stmt(&mut self, n: &AstNode) -> Flow {
        match n.kind {
            AstKind::Block => Flow::Seq(n.children.iter().map(|c| self.stmt(c)).collect()),
            AstKind::Assign => self.assign(n),
            AstKind::ExprStmt => {
                let mut uses = Vec::new();
                let v = self.expr(&n.children[0], &mut uses);
                if let Value::Uses(_) = v {
                    self.op("expr", n.span, vec![v], &mut uses);
                }
                Flow::Step { uses, defs: vec![] }
            }
            AstKind::Return => {
                let mut uses = Vec::new();
                let inputs = n.children.iter().map(|c| self.expr(c, &mut uses)).collect();
                self.op("return", n.span, inputs, &mut uses);
                Flow::Step { uses, defs: vec![] }
            }
            AstKind::If => {
                let cond = self.condition(&n.children[0], "cond");
                let arms = n.children[1..].iter().map(|c| self.stmt(c)).collect();
                Flow::Branch {
                    cond: Box::new(cond),
                    arms: pad_arms(arms),
                }
            }
            AstKind::While => {
                let header = self.condition(&n.children[0], "cond");
                let body = self.stmt(&n.children[1]);
                Flow::Loop {
                    header: Box::new(header),
                    body: Box::new(body),
                }
            }
            AstKind::For => {
                let init = self.stmt(&n.children[0]);
                let header = self.condition(&n.children[1], "cond");
                let body = self.stmt(&n.children[3]);
                let step = self.stmt(&n.children[2]);
                Flow::Seq(vec![
                    init,
                    Flow::Loop {
                        header: Box::new(header),
                        body: Box::new(Flow::Seq(vec![body, step])),
                    },
                ])
            }
            AstKind::ForEach => {
                let mut uses = Vec::new();
                let mut reads = Vec::new();
                let iter = self.expr(&n.children[1], &mut uses);
                reads.push(iter);
                let span = match (n.children[0].span, n.children[1].span) {
                    (Some(a), Some(b)) => Some(a.cover(b)),
                    (a, b) => a.or(b),
                };
                let targets = self.target(&n.children[0], &mut uses, &mut Vec::new());
                let producer = self.op("in", span, reads, &mut uses);
                let mut defs = Vec::new();
                for (name, tspan) in targets {
                    let var = self.graph.add_node(NodeKind::Variable, name.clone(), Some(tspan));
                    self.edges.insert((producer, var));
                    defs.push((name, var));
                }
                let body = self.stmt(&n.children[2]);
                Flow::Loop {
                    header: Box::new(Flow::Step { uses, defs }),
                    body: Box::new(body),
                }
            }
            AstKind::Placeholder => {
                self.graph.add_node(NodeKind::Placeholder, n.label.clone(), n.span);
                Flow::Seq(vec![])
            }
            _ => Flow::Seq(vec![]),
        }
    }

    fn undefined(&mut self, name: &str) -> NodeId {
        if let Some(&id) = self.placeholders.get(name) {
            return id;
        }
        let id = self.graph.add_node(NodeKind::Placeholder, name, None);
        self.placeholders.insert(name.into(), id);
        id
    }

    fn link(&mut self, flow: &Flow, mut env: Env) -> Env {
        match flow {
            Flow::Step { uses, defs } => {
                for (consumer, name) in uses {
                    let reaching: Vec<Def> = match env.get(name) {
                        Some(set) => set.iter().copied().collect(),
                        None => vec![Def::Undefined],
                    };
                    for d in reaching {
                        let src = match d {
                            Def::At(id) => id,
                            Def::Undefined => self.undefined(name),
                        };
                        self.edges.insert((src, *consumer));
                    }
                }
                for (name, id) in defs {
                    env.insert(name.clone(), BTreeSet::from([Def::At(*id)]));
                }
                env
            }
            Flow::Seq(items) => items.iter().fold(env, |env, f| self.link(f, env)),
            Flow::Branch { cond, arms } => {
                let env = self.link(cond, env);
                let outs: Vec<Env> = arms.iter().map(|a| self.link(a, env.clone())).collect();
                merge(&outs)
            }
            Flow::Loop { header, body } => {
                let entry = env;
                let mut current = entry.clone();
                loop {
                    let after_header = self.link(header, current.clone());
                    let after_body = self.link(body, after_header.clone());
                    let next = merge(&[entry.clone(), after_body]);
                    if next == current {
                        return after_header;
                    }
                    current = next;
                }
            }
        }
    }
}

fn pad_arms(mut arms: Vec<Flow>) -> Vec<Flow> {
    if arms.len() < 2 {
        arms.push(Flow::Seq(vec![]));
    }
    arms
}

/// Union of reaching-definition sets; a variable missing from some input
/// is undefined along that path.
fn merge(envs: &[Env]) -> Env {
    let mut out = Env::new();
    for env in envs {
        for (k, v) in env {
            out.entry(k.clone()).or_default().extend(v.iter().copied());
        }
    }
    for (k, set) in out.iter_mut() {
        if envs.iter().any(|e| !e.contains_key(k)) {
            set.insert(Def::Undefined);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codegraph::{parse_ast, CodeSnippet, Language};

    fn dfg(src: &str) -> DepGraph {
        build_dfg(&parse_ast(&CodeSnippet::with_language(src, Language::PythonLike, 10_000)))
    }

    fn label(g: &DepGraph, id: NodeId) -> String {
        let n = g.node(id).unwrap();
        format!("{:?}:{}", n.kind, n.label)
    }

    fn edges(g: &DepGraph) -> Vec<(String, String)> {
        g.edges.iter().map(|e| (label(g, e.src), label(g, e.dst))).collect()
    }

    #[test]
    fn minimal_definition() {
        let g = dfg("a = 1");
        assert_eq!(g.nodes.len(), 2);
        assert_eq!(g.count_edges(EdgeKind::Data), 1);
        assert_eq!(edges(&g), [("Operation:=".into(), "Variable:a".into())]);
    }

    #[test]
    fn undefined_use_gets_placeholder() {
        let g = dfg("b = a");
        assert_eq!(
            edges(&g),
            [
                ("Operation:=".into(), "Variable:b".into()),
                ("Placeholder:a".into(), "Operation:=".into()),
            ]
        );
    }

    #[test]
    fn loop_carried_definition_reaches_header() {
        let g = dfg("i = 0\nwhile i < 3:\n    i = i + 1");
        let e = edges(&g);
        // both the initial and the loop definition reach `i < 3` and `i + 1`
        let into_cmp: Vec<_> = e.iter().filter(|(_, d)| d == "Operation:<").collect();
        assert_eq!(into_cmp.len(), 2);
        let into_add: Vec<_> = e.iter().filter(|(_, d)| d == "Operation:+").collect();
        assert_eq!(into_add.len(), 2);
        assert!(g.nodes.iter().all(|n| n.kind != NodeKind::Placeholder));
    }

    #[test]
    fn branch_without_else_keeps_undefined_path() {
        let g = dfg("if c:\n    x = 1\ny = x");
        let e = edges(&g);
        assert!(e.contains(&("Placeholder:x".into(), "Operation:=".into())));
        assert!(e.contains(&("Variable:x".into(), "Operation:=".into())));
    }
}
