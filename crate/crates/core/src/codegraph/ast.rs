//! Best-effort parser over a small statement/expression grammar shared by
//! the supported language families.
//!
//! The parser never fails: a statement it cannot make sense of becomes a
//! `Placeholder` leaf carrying the raw text, and a snippet in an unknown
//! language becomes a flat sequence of `Token` leaves.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::lexer::{lex, Mode, Tok, Token};
use super::{CodeSnippet, Language, Span};

/// Node kinds and their child layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AstKind {
    /// Statements. Label is the header text for `def`/class/function
    /// bodies and empty for plain blocks.
    Block,
    /// Label is the operator (`=`, `+=`, `++`, ...); children are
    /// `[target]` or `[target, value]`.
    Assign,
    /// `[cond, then]` or `[cond, then, else]`; arms are blocks.
    If,
    /// `[cond, body]`.
    While,
    /// C-style loop: `[init, cond, step, body]`, missing parts are `Empty`.
    For,
    /// `[target, iterable, body]`.
    ForEach,
    /// `[]` or `[value]`.
    Return,
    /// `[expr]`.
    ExprStmt,
    /// Statement without data effects: declarations without initializer,
    /// `pass`, `break`, imports. Label is the statement text.
    Other,
    /// Label is the callee text; children are `[callee, args...]`.
    Call,
    /// Label is the operator; `[lhs, rhs]`, or `[cond, then, else]` for `?:`.
    Binary,
    /// Label is the operator; `[operand]`.
    Unary,
    Var,
    Lit,
    /// Label is the field name; `[object]`.
    Attr,
    /// `[object, index]`.
    Index,
    /// Tuple, list or map literal elements.
    Seq,
    Empty,
    Placeholder,
    Token,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AstNode {
    pub kind: AstKind,
    pub label: String,
    pub children: Vec<AstNode>,
    pub span: Option<Span>,
}

impl AstNode {
    fn new(kind: AstKind, label: impl Into<String>, children: Vec<AstNode>, span: Option<Span>) -> Self {
        AstNode {
            kind,
            label: label.into(),
            children,
            span,
        }
    }

    fn leaf(kind: AstKind, label: impl Into<String>, span: Span) -> Self {
        Self::new(kind, label, vec![], Some(span))
    }

    fn empty() -> Self {
        Self::new(AstKind::Empty, "", vec![], None)
    }

    /// Compact s-expression rendering, e.g. `(Assign = (Var a) (Lit 1))`.
    pub fn sexpr(&self) -> String {
        let mut out = format!("({:?}", self.kind);
        if !self.label.is_empty() {
            out.push(' ');
            out.push_str(&self.label);
        }
        for c in &self.children {
            out.push(' ');
            out.push_str(&c.sexpr());
        }
        out.push(')');
        out
    }

    /// Pre-order walk.
    pub fn walk(&self, f: &mut impl FnMut(&AstNode)) {
        f(self);
        for c in &self.children {
            c.walk(f);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ast {
    pub language: Language,
    /// The (already truncated) text that spans refer to.
    pub source: String,
    pub root: AstNode,
    /// Byte offset of every char of `source`, plus its length.
    #[serde(skip)]
    offsets: Vec<usize>,
}

fn char_offsets(s: &str) -> Vec<usize> {
    s.char_indices().map(|(i, _)| i).chain(core::iter::once(s.len())).collect()
}

impl Ast {
    /// Source text under `span`, whitespace runs collapsed to one space.
    pub fn text(&self, span: Span) -> String {
        let end = span.end.max(span.start);
        if self.offsets.is_empty() {
            // deserialized trees carry no index
            let raw: String = self.source.chars().skip(span.start).take(end - span.start).collect();
            return collapse_ws(&raw);
        }
        let byte = |c: usize| self.offsets.get(c).copied().unwrap_or(self.source.len());
        collapse_ws(&self.source[byte(span.start)..byte(end)])
    }
}

fn collapse_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn parse_ast(snippet: &CodeSnippet) -> Ast {
    let chars: Vec<char> = snippet.source.chars().collect();
    let whole = Some(Span::new(0, chars.len()));
    let root = match snippet.language {
        Language::Unknown => {
            let toks = lex(&chars, Mode::Brace);
            let leaves = toks
                .iter()
                .filter(|t| !matches!(t.tok, Tok::Newline(_)))
                .map(|t| AstNode::leaf(AstKind::Token, text_of(&chars, t.span), t.span))
                .collect();
            AstNode::new(AstKind::Block, "", leaves, whole)
        }
        Language::PythonLike => {
            let toks = lex(&chars, Mode::Indent);
            let mut p = Parser::new(&toks, &chars, Mode::Indent);
            AstNode::new(AstKind::Block, "", p.py_top(), whole)
        }
        _ => {
            let toks = lex(&chars, Mode::Brace);
            let mut p = Parser::new(&toks, &chars, Mode::Brace);
            AstNode::new(AstKind::Block, "", p.brace_items(false), whole)
        }
    };
    Ast {
        language: snippet.language,
        offsets: char_offsets(&snippet.source),
        source: snippet.source.clone(),
        root,
    }
}

fn text_of(chars: &[char], span: Span) -> String {
    let raw: String = chars[span.start.min(chars.len())..span.end.min(chars.len())]
        .iter()
        .collect();
    collapse_ws(&raw)
}

const ASSIGN_OPS: &[&str] = &[
    "=", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "<<=", ">>=", "**=", "//=", ":=",
];

const LITERAL_WORDS: &[&str] = &[
    "true", "false", "null", "None", "True", "False", "undefined", "nullptr", "NULL",
];

const NO_EFFECT_WORDS: &[&str] = &[
    "pass", "break", "continue", "import", "from", "raise", "throw", "global", "nonlocal",
    "package", "using", "namespace", "typedef", "goto", "case", "default",
];

const HEADER_WORDS: &[&str] = &[
    "def", "class", "try", "except", "finally", "with", "else", "async", "do", "switch",
];

struct Parser<'a> {
    toks: &'a [Token],
    chars: &'a [char],
    mode: Mode,
    pos: usize,
    /// Exclusive upper bound while parsing a sub-range.
    end: usize,
}

impl<'a> Parser<'a> {
    fn new(toks: &'a [Token], chars: &'a [char], mode: Mode) -> Self {
        Parser {
            toks,
            chars,
            mode,
            pos: 0,
            end: toks.len(),
        }
    }

    // ---- token helpers -------------------------------------------------

    fn tok(&self, i: usize) -> Option<&'a Tok> {
        (i < self.end).then(|| &self.toks[i].tok)
    }

    fn peek(&self) -> Option<&'a Tok> {
        self.tok(self.pos)
    }

    fn is_punct_at(&self, i: usize, p: &str) -> bool {
        matches!(self.tok(i), Some(Tok::Punct(q)) if *q == p)
    }

    fn is_punct(&self, p: &str) -> bool {
        self.is_punct_at(self.pos, p)
    }

    fn is_word_at(&self, i: usize, w: &str) -> bool {
        matches!(self.tok(i), Some(Tok::Ident(q)) if q == w)
    }

    fn is_word(&self, w: &str) -> bool {
        self.is_word_at(self.pos, w)
    }

    fn span_of(&self, lo: usize, hi: usize) -> Option<Span> {
        // Skip newline tokens at either edge so spans hug the code.
        let mut lo = lo;
        let mut hi = hi.min(self.toks.len());
        while lo < hi && matches!(self.toks[lo].tok, Tok::Newline(_)) {
            lo += 1;
        }
        while hi > lo && matches!(self.toks[hi - 1].tok, Tok::Newline(_)) {
            hi -= 1;
        }
        (lo < hi).then(|| self.toks[lo].span.cover(self.toks[hi - 1].span))
    }

    fn text(&self, lo: usize, hi: usize) -> String {
        self.span_of(lo, hi)
            .map(|s| text_of(self.chars, s))
            .unwrap_or_default()
    }

    fn placeholder(&self, lo: usize, hi: usize) -> AstNode {
        AstNode::new(AstKind::Placeholder, self.text(lo, hi), vec![], self.span_of(lo, hi))
    }

    /// Index of the first token in `lo..hi` at bracket depth zero that
    /// satisfies `pred`.
    fn find_top(&self, lo: usize, hi: usize, pred: impl Fn(&Tok) -> bool) -> Option<usize> {
        let mut depth = 0i32;
        for i in lo..hi.min(self.toks.len()) {
            let t = &self.toks[i].tok;
            if depth == 0 && pred(t) {
                return Some(i);
            }
            match t {
                Tok::Punct("(" | "[" | "{") => depth += 1,
                Tok::Punct(")" | "]" | "}") => depth -= 1,
                _ => {}
            }
        }
        None
    }

    /// Index of the bracket closing the one at `open`, if present.
    fn matching(&self, open: usize) -> Option<usize> {
        let mut depth = 0i32;
        for i in open..self.end {
            match &self.toks[i].tok {
                Tok::Punct("(" | "[" | "{") => depth += 1,
                Tok::Punct(")" | "]" | "}") => {
                    depth -= 1;
                    if depth == 0 {
                        return Some(i);
                    }
                }
                _ => {}
            }
        }
        None
    }

    fn block(&self, label: impl Into<String>, children: Vec<AstNode>, lo: usize) -> AstNode {
        let span = self.span_of(lo, self.pos);
        AstNode::new(AstKind::Block, label, children, span)
    }

    fn as_block(&self, stmt: AstNode) -> AstNode {
        if stmt.kind == AstKind::Block && stmt.label.is_empty() {
            stmt
        } else {
            let span = stmt.span;
            AstNode::new(AstKind::Block, "", vec![stmt], span)
        }
    }

    // ---- simple statements ---------------------------------------------

    /// Assignment, expression statement, no-effect statement, or
    /// placeholder, over tokens `lo..hi`.
    fn simple(&mut self, lo: usize, hi: usize) -> AstNode {
        let span = self.span_of(lo, hi);
        if span.is_none() {
            return AstNode::empty();
        }
        if let Some(Tok::Ident(w)) = self.first_non_newline(lo, hi) {
            if NO_EFFECT_WORDS.contains(&w.as_str()) {
                return AstNode::new(AstKind::Other, self.text(lo, hi), vec![], span);
            }
            if w == "return" {
                let at = self.skip_newlines(lo, hi);
                let value = if at + 1 < hi {
                    match self.expr_range(at + 1, hi) {
                        Some(e) => vec![e],
                        None => return self.placeholder(lo, hi),
                    }
                } else {
                    vec![]
                };
                return AstNode::new(AstKind::Return, "return", value, span);
            }
        }
        if let Some(k) = self.find_top(lo, hi, |t| matches!(t, Tok::Punct(p) if ASSIGN_OPS.contains(p))) {
            let op = match &self.toks[k].tok {
                Tok::Punct(p) => *p,
                _ => unreachable!(),
            };
            let target = self.target(lo, k);
            let value = self.expr_range(k + 1, hi);
            return match (target, value) {
                (Some(t), Some(v)) => AstNode::new(AstKind::Assign, op, vec![t, v], span),
                _ => self.placeholder(lo, hi),
            };
        }
        if let Some(e) = self.expr_range(lo, hi) {
            if e.kind == AstKind::Unary && (e.label == "++" || e.label == "--") && is_lvalue(&e.children[0]) {
                let AstNode { label, children, .. } = e;
                return AstNode::new(AstKind::Assign, label, children, span);
            }
            return AstNode::new(AstKind::ExprStmt, "", vec![e], span);
        }
        if self.is_declaration(lo, hi) {
            return AstNode::new(AstKind::Other, self.text(lo, hi), vec![], span);
        }
        self.placeholder(lo, hi)
    }

    fn skip_newlines(&self, mut i: usize, hi: usize) -> usize {
        while i < hi && matches!(self.toks[i].tok, Tok::Newline(_)) {
            i += 1;
        }
        i
    }

    fn first_non_newline(&self, lo: usize, hi: usize) -> Option<&'a Tok> {
        let i = self.skip_newlines(lo, hi);
        (i < hi).then(|| &self.toks[i].tok)
    }

    /// `int a[]`, `List<String> names`, `let x`: identifiers and type
    /// punctuation only, at least two identifiers.
    fn is_declaration(&self, lo: usize, hi: usize) -> bool {
        let mut idents = 0;
        for t in &self.toks[lo..hi] {
            match t {
                Token { tok: Tok::Ident(_), .. } => idents += 1,
                Token {
                    tok: Tok::Punct("<" | ">" | "," | "*" | "&" | "[" | "]" | "::" | "." | ">>"),
                    ..
                }
                | Token { tok: Tok::Number(_), .. }
                | Token { tok: Tok::Newline(_), .. } => {}
                _ => return false,
            }
        }
        idents >= 2
    }

    /// Assignment target over `lo..hi`: an lvalue expression, or the last
    /// identifier after a declaration prefix (`int x`, `const x`,
    /// `x: int`).
    fn target(&mut self, lo: usize, hi: usize) -> Option<AstNode> {
        if let Some(e) = self.expr_range(lo, hi) {
            if is_lvalue(&e) {
                return Some(e);
            }
        }
        if let Some(colon) = self.find_top(lo, hi, |t| matches!(t, Tok::Punct(":"))) {
            return self.expr_range(lo, colon).filter(is_lvalue);
        }
        if !self.is_declaration(lo, hi) && !self.single_ident(lo, hi) {
            return None;
        }
        let (i, name) = (lo..hi).rev().find_map(|i| match &self.toks[i].tok {
            Tok::Ident(n) => Some((i, n.clone())),
            _ => None,
        })?;
        Some(AstNode::leaf(AstKind::Var, name, self.toks[i].span))
    }

    fn single_ident(&self, lo: usize, hi: usize) -> bool {
        self.toks[lo..hi]
            .iter()
            .filter(|t| !matches!(t.tok, Tok::Newline(_)))
            .count()
            == 1
    }

    // ---- brace languages -----------------------------------------------

    fn brace_items(&mut self, nested: bool) -> Vec<AstNode> {
        let mut items = Vec::new();
        loop {
            while matches!(self.peek(), Some(Tok::Newline(_) | Tok::Punct(";"))) {
                self.pos += 1;
            }
            match self.peek() {
                None => break,
                Some(Tok::Punct("}")) => {
                    self.pos += 1;
                    if nested {
                        break;
                    }
                }
                Some(_) => {
                    let before = self.pos;
                    let stmt = self.brace_stmt();
                    if self.pos == before {
                        self.pos += 1;
                        items.push(self.placeholder(before, self.pos));
                    } else if stmt.kind != AstKind::Empty {
                        items.push(stmt);
                    }
                }
            }
        }
        items
    }

    /// End (exclusive) of the simple statement starting at `pos`.
    fn simple_end(&self) -> usize {
        let mut depth = 0i32;
        let mut i = self.pos;
        while i < self.end {
            let t = &self.toks[i].tok;
            match t {
                Tok::Punct(";") | Tok::Punct("}") if depth == 0 => return i,
                Tok::Newline(_) if depth == 0 => {
                    let continues = i > self.pos
                        && matches!(&self.toks[i - 1].tok, Tok::Punct(p) if continues_line(p));
                    if !continues {
                        return i;
                    }
                }
                Tok::Punct("{") if depth == 0 => {
                    let header = i > self.pos
                        && matches!(self.toks[i - 1].tok, Tok::Punct(")") | Tok::Ident(_));
                    if header || i == self.pos {
                        return i;
                    }
                    depth += 1;
                }
                Tok::Punct("(" | "[" | "{") => depth += 1,
                Tok::Punct(")" | "]" | "}") => depth -= 1,
                _ => {}
            }
            i += 1;
        }
        self.end
    }

    fn brace_stmt(&mut self) -> AstNode {
        let lo = self.pos;
        match self.peek() {
            Some(Tok::Punct("{")) => {
                self.pos += 1;
                let items = self.brace_items(true);
                self.block("", items, lo)
            }
            Some(Tok::Ident(w)) if w == "if" => self.brace_if(),
            Some(Tok::Ident(w)) if w == "while" => {
                let Some((cond_lo, cond_hi)) = self.paren_header() else {
                    return self.brace_unparsed(lo);
                };
                let cond = self.expr_range(cond_lo, cond_hi);
                let body = self.brace_body();
                match cond {
                    Some(c) => AstNode::new(AstKind::While, "while", vec![c, body], self.span_of(lo, self.pos)),
                    None => self.placeholder(lo, self.pos),
                }
            }
            Some(Tok::Ident(w)) if w == "for" => self.brace_for(),
            _ => {
                let hi = self.simple_end();
                self.pos = hi;
                if self.is_punct("{") && hi > lo {
                    self.pos += 1;
                    let items = self.brace_items(true);
                    let label = self.text(lo, hi);
                    return self.block(label, items, lo);
                }
                if self.is_punct(";") {
                    self.pos += 1;
                }
                self.simple(lo, hi)
            }
        }
    }

    /// Consumes the rest of a construct whose header could not be parsed.
    fn brace_unparsed(&mut self, lo: usize) -> AstNode {
        self.pos = lo;
        let hi = self.simple_end().max(lo + 1);
        self.pos = hi;
        self.placeholder(lo, hi)
    }

    /// After a keyword at `pos`, expects `( ... )` and returns the inner
    /// token range, leaving `pos` after `)`.
    fn paren_header(&mut self) -> Option<(usize, usize)> {
        let open = self.pos + 1;
        if !self.is_punct_at(open, "(") {
            return None;
        }
        let close = self.matching(open)?;
        self.pos = close + 1;
        Some((open + 1, close))
    }

    fn brace_body(&mut self) -> AstNode {
        while matches!(self.peek(), Some(Tok::Newline(_))) {
            self.pos += 1;
        }
        if self.is_punct(";") {
            self.pos += 1;
            return AstNode::new(AstKind::Block, "", vec![], None);
        }
        if self.peek().is_none() {
            return AstNode::new(
                AstKind::Block,
                "",
                vec![AstNode::new(AstKind::Placeholder, "", vec![], None)],
                None,
            );
        }
        let stmt = self.brace_stmt();
        self.as_block(stmt)
    }

    fn brace_if(&mut self) -> AstNode {
        let lo = self.pos;
        let Some((cond_lo, cond_hi)) = self.paren_header() else {
            return self.brace_unparsed(lo);
        };
        let Some(cond) = self.expr_range(cond_lo, cond_hi) else {
            self.brace_body();
            return self.placeholder(lo, self.pos);
        };
        let then = self.brace_body();
        let mut children = vec![cond, then];
        let mut look = self.pos;
        while matches!(self.tok(look), Some(Tok::Newline(_) | Tok::Punct(";"))) {
            look += 1;
        }
        if self.is_word_at(look, "else") {
            self.pos = look + 1;
            children.push(self.brace_body());
        }
        AstNode::new(AstKind::If, "if", children, self.span_of(lo, self.pos))
    }

    fn brace_for(&mut self) -> AstNode {
        let lo = self.pos;
        let Some((hlo, hhi)) = self.paren_header() else {
            return self.brace_unparsed(lo);
        };
        let semis: Vec<usize> = (hlo..hhi)
            .filter(|&i| self.is_punct_at(i, ";"))
            .collect();
        let header = if semis.len() == 2 {
            let init = self.simple(hlo, semis[0]);
            let cond = if semis[0] + 1 < semis[1] {
                self.expr_range(semis[0] + 1, semis[1])
            } else {
                Some(AstNode::empty())
            };
            let step = self.simple(semis[1] + 1, hhi);
            match cond {
                Some(c) if init.kind != AstKind::Placeholder && step.kind != AstKind::Placeholder => {
                    Some((AstKind::For, vec![init, c, step]))
                }
                _ => None,
            }
        } else if let Some(sep) = self.find_top(hlo, hhi, |t| {
            matches!(t, Tok::Punct(":")) || matches!(t, Tok::Ident(w) if w == "of" || w == "in")
        }) {
            let target = self.target(hlo, sep);
            let iter = self.expr_range(sep + 1, hhi);
            target.zip(iter).map(|(t, i)| (AstKind::ForEach, vec![t, i]))
        } else {
            None
        };
        let body = self.brace_body();
        match header {
            Some((kind, mut children)) => {
                children.push(body);
                AstNode::new(kind, "for", children, self.span_of(lo, self.pos))
            }
            None => self.placeholder(lo, self.pos),
        }
    }

    // ---- indentation languages -------------------------------------------

    fn py_top(&mut self) -> Vec<AstNode> {
        let mut items = Vec::new();
        while let Some(t) = self.peek() {
            let before = self.pos;
            match t {
                Tok::Newline(ind) => items.extend(self.py_block(*ind)),
                _ => items.extend(self.py_stmt(0)),
            }
            if self.pos == before {
                self.pos += 1;
            }
        }
        items
    }

    fn py_block(&mut self, indent: usize) -> Vec<AstNode> {
        let mut items = Vec::new();
        loop {
            match self.peek() {
                None => break,
                Some(Tok::Newline(ind)) => {
                    let ind = *ind;
                    if ind < indent {
                        break;
                    }
                    self.pos += 1;
                    if ind > indent {
                        items.extend(self.py_block(ind));
                    }
                }
                Some(_) => {
                    let before = self.pos;
                    items.extend(self.py_stmt(indent));
                    if self.pos == before {
                        self.pos += 1;
                        items.push(self.placeholder(before, self.pos));
                    }
                }
            }
        }
        items
    }

    fn line_end(&self) -> usize {
        (self.pos..self.end)
            .find(|&i| matches!(self.toks[i].tok, Tok::Newline(_)))
            .unwrap_or(self.end)
    }

    /// Position of the header colon on the current line.
    fn header_colon(&self, from: usize) -> Option<usize> {
        self.find_top(from, self.line_end(), |t| matches!(t, Tok::Punct(":")))
    }

    fn py_stmt(&mut self, indent: usize) -> Vec<AstNode> {
        let lo = self.pos;
        let word = match self.peek() {
            Some(Tok::Ident(w)) => w.as_str(),
            Some(Tok::Punct("@")) => {
                self.pos = self.line_end();
                return vec![AstNode::new(AstKind::Other, self.text(lo, self.pos), vec![], self.span_of(lo, self.pos))];
            }
            _ => "",
        };
        match word {
            "if" => vec![self.py_if(indent)],
            "while" => {
                let Some(colon) = self.header_colon(lo + 1) else {
                    return vec![self.py_unparsed(lo)];
                };
                let cond = self.expr_range(lo + 1, colon);
                self.pos = colon + 1;
                let body = self.py_suite(indent);
                vec![match cond {
                    Some(c) => AstNode::new(AstKind::While, "while", vec![c, body], self.span_of(lo, self.pos)),
                    None => self.placeholder(lo, self.pos),
                }]
            }
            "for" => {
                let Some(colon) = self.header_colon(lo + 1) else {
                    return vec![self.py_unparsed(lo)];
                };
                let sep = self.find_top(lo + 1, colon, |t| matches!(t, Tok::Ident(w) if w == "in"));
                let header = sep.and_then(|s| {
                    let t = self.expr_range(lo + 1, s).filter(is_lvalue)?;
                    let i = self.expr_range(s + 1, colon)?;
                    Some((t, i))
                });
                self.pos = colon + 1;
                let body = self.py_suite(indent);
                vec![match header {
                    Some((t, i)) => AstNode::new(AstKind::ForEach, "for", vec![t, i, body], self.span_of(lo, self.pos)),
                    None => self.placeholder(lo, self.pos),
                }]
            }
            w if HEADER_WORDS.contains(&w) || w == "elif" => {
                let Some(colon) = self.header_colon(lo + 1) else {
                    return vec![self.py_unparsed(lo)];
                };
                let label = self.text(lo, colon);
                self.pos = colon + 1;
                let body = self.py_suite(indent);
                let items = body.children;
                vec![self.block(label, items, lo)]
            }
            _ => self.py_simple_line(),
        }
    }

    fn py_unparsed(&mut self, lo: usize) -> AstNode {
        self.pos = self.line_end().max(lo + 1);
        self.placeholder(lo, self.pos)
    }

    /// `;`-separated simple statements up to the end of the line.
    fn py_simple_line(&mut self) -> Vec<AstNode> {
        let end = self.line_end();
        let mut out = Vec::new();
        let mut lo = self.pos;
        while lo < end {
            let hi = self
                .find_top(lo, end, |t| matches!(t, Tok::Punct(";")))
                .unwrap_or(end);
            let stmt = self.simple(lo, hi);
            if stmt.kind != AstKind::Empty {
                out.push(stmt);
            }
            lo = hi + 1;
        }
        self.pos = end;
        out
    }

    fn py_suite(&mut self, indent: usize) -> AstNode {
        let lo = self.pos;
        match self.peek() {
            Some(Tok::Newline(ind)) if *ind > indent => {
                let ind = *ind;
                let items = self.py_block(ind);
                self.block("", items, lo)
            }
            Some(Tok::Newline(_)) | None => AstNode::new(
                AstKind::Block,
                "",
                vec![AstNode::new(AstKind::Placeholder, "", vec![], None)],
                None,
            ),
            Some(_) => {
                let items = self.py_simple_line();
                self.block("", items, lo)
            }
        }
    }

    fn py_if(&mut self, indent: usize) -> AstNode {
        let lo = self.pos;
        let Some(colon) = self.header_colon(lo + 1) else {
            return self.py_unparsed(lo);
        };
        let cond = self.expr_range(lo + 1, colon);
        self.pos = colon + 1;
        let then = self.py_suite(indent);
        let Some(cond) = cond else {
            return self.placeholder(lo, self.pos);
        };
        let mut children = vec![cond, then];
        if let Some(Tok::Newline(ind)) = self.peek() {
            let next = self.pos + 1;
            if *ind == indent && (self.is_word_at(next, "elif") || self.is_word_at(next, "else")) {
                self.pos = next;
                if self.is_word("elif") {
                    let nested = self.py_if(indent);
                    children.push(self.as_block(nested));
                } else {
                    let else_lo = self.pos;
                    match self.header_colon(else_lo + 1) {
                        Some(c) => {
                            self.pos = c + 1;
                            children.push(self.py_suite(indent));
                        }
                        None => children.push(self.py_unparsed(else_lo)),
                    }
                }
            }
        }
        AstNode::new(AstKind::If, "if", children, self.span_of(lo, self.pos))
    }

    // ---- expressions -----------------------------------------------------

    /// Parses exactly the tokens `lo..hi` as one expression.
    fn expr_range(&mut self, lo: usize, hi: usize) -> Option<AstNode> {
        self.span_of(lo, hi)?;
        let (saved_pos, saved_end) = (self.pos, self.end);
        self.pos = lo;
        self.end = hi;
        let e = self.expr();
        self.skip_nl();
        let ok = self.pos >= hi;
        self.pos = saved_pos;
        self.end = saved_end;
        e.filter(|_| ok)
    }

    fn skip_nl(&mut self) {
        while matches!(self.peek(), Some(Tok::Newline(_))) {
            self.pos += 1;
        }
    }

    fn epunct(&mut self, ops: &[&str]) -> Option<&'static str> {
        self.skip_nl();
        match self.peek() {
            Some(Tok::Punct(p)) if ops.contains(p) => {
                self.pos += 1;
                Some(p)
            }
            _ => None,
        }
    }

    fn eword(&mut self, words: &[&str]) -> Option<String> {
        self.skip_nl();
        match self.peek() {
            Some(Tok::Ident(w)) if words.contains(&w.as_str()) => {
                self.pos += 1;
                Some(w.clone())
            }
            _ => None,
        }
    }

    fn binary(lhs: AstNode, op: &str, rhs: AstNode) -> AstNode {
        let span = join(lhs.span, rhs.span);
        AstNode::new(AstKind::Binary, op, vec![lhs, rhs], span)
    }

    fn expr(&mut self) -> Option<AstNode> {
        let cond = self.or_expr()?;
        if self.epunct(&["?"]).is_some() {
            let a = self.expr()?;
            self.epunct(&[":"])?;
            let b = self.expr()?;
            let span = join(cond.span, b.span);
            return Some(AstNode::new(AstKind::Binary, "?:", vec![cond, a, b], span));
        }
        if self.mode == Mode::Indent && self.eword(&["if"]).is_some() {
            let test = self.or_expr()?;
            self.eword(&["else"])?;
            let other = self.expr()?;
            let span = join(cond.span, other.span);
            return Some(AstNode::new(AstKind::Binary, "?:", vec![test, cond, other], span));
        }
        Some(cond)
    }

    fn or_expr(&mut self) -> Option<AstNode> {
        let mut lhs = self.and_expr()?;
        loop {
            let op = match self.epunct(&["||"]) {
                Some(p) => p.to_string(),
                None => match self.eword(&["or"]) {
                    Some(w) => w,
                    None => return Some(lhs),
                },
            };
            let rhs = self.and_expr()?;
            lhs = Self::binary(lhs, &op, rhs);
        }
    }

    fn and_expr(&mut self) -> Option<AstNode> {
        let mut lhs = self.not_expr()?;
        loop {
            let op = match self.epunct(&["&&"]) {
                Some(p) => p.to_string(),
                None => match self.eword(&["and"]) {
                    Some(w) => w,
                    None => return Some(lhs),
                },
            };
            let rhs = self.not_expr()?;
            lhs = Self::binary(lhs, &op, rhs);
        }
    }

    fn not_expr(&mut self) -> Option<AstNode> {
        self.skip_nl();
        let lo = self.pos;
        if self.eword(&["not"]).is_some() {
            let operand = self.not_expr()?;
            let span = join(Some(self.toks[lo].span), operand.span);
            return Some(AstNode::new(AstKind::Unary, "not", vec![operand], span));
        }
        self.cmp_expr()
    }

    fn cmp_expr(&mut self) -> Option<AstNode> {
        let mut lhs = self.bit_expr(0)?;
        loop {
            let op = if let Some(p) = self.epunct(&["==", "!=", "<", ">", "<=", ">=", "===", "!=="]) {
                p.to_string()
            } else if let Some(w) = self.eword(&["in", "is", "instanceof"]) {
                if w == "is" && self.eword(&["not"]).is_some() {
                    "is not".to_string()
                } else {
                    w
                }
            } else if self.is_word("not") && self.is_word_at(self.pos + 1, "in") {
                self.pos += 2;
                "not in".to_string()
            } else {
                return Some(lhs);
            };
            let rhs = self.bit_expr(0)?;
            lhs = Self::binary(lhs, &op, rhs);
        }
    }

    fn bit_expr(&mut self, level: usize) -> Option<AstNode> {
        const LEVELS: &[&[&str]] = &[
            &["|"],
            &["^"],
            &["&"],
            &["<<", ">>"],
            &["+", "-"],
            &["*", "/", "%", "//"],
        ];
        if level == LEVELS.len() {
            return self.unary();
        }
        let mut lhs = self.bit_expr(level + 1)?;
        while let Some(op) = self.epunct(LEVELS[level]) {
            let rhs = self.bit_expr(level + 1)?;
            lhs = Self::binary(lhs, op, rhs);
        }
        Some(lhs)
    }

    fn unary(&mut self) -> Option<AstNode> {
        self.skip_nl();
        let lo = self.pos;
        let op = match self.peek() {
            Some(Tok::Punct(p @ ("-" | "+" | "~" | "!" | "++" | "--" | "*" | "&" | "**"))) => {
                self.pos += 1;
                p.to_string()
            }
            Some(Tok::Ident(w)) if matches!(w.as_str(), "new" | "await" | "typeof" | "delete" | "yield") => {
                self.pos += 1;
                w.clone()
            }
            _ => return self.power(),
        };
        let operand = self.unary()?;
        let span = join(Some(self.toks[lo].span), operand.span);
        if op == "new" && operand.kind == AstKind::Call {
            let label = format!("new {}", operand.label);
            return Some(AstNode::new(AstKind::Call, label, operand.children, span));
        }
        Some(AstNode::new(AstKind::Unary, op, vec![operand], span))
    }

    fn power(&mut self) -> Option<AstNode> {
        let base = self.postfix()?;
        if self.epunct(&["**"]).is_some() {
            let exp = self.unary()?;
            return Some(Self::binary(base, "**", exp));
        }
        Some(base)
    }

    fn postfix(&mut self) -> Option<AstNode> {
        let lo = self.pos;
        let mut e = self.primary()?;
        loop {
            if self.is_punct("(") {
                let close = self.matching(self.pos)?;
                let args = self.arguments(self.pos + 1, close)?;
                self.pos = close + 1;
                let callee_text = match e.span {
                    Some(s) => text_of(self.chars, s),
                    None => self.text(lo, close),
                };
                let span = join(e.span, Some(self.toks[close].span));
                let mut children = vec![e];
                children.extend(args);
                e = AstNode::new(AstKind::Call, callee_text, children, span);
            } else if self.is_punct("[") {
                let close = self.matching(self.pos)?;
                let index = if close == self.pos + 1 {
                    return None;
                } else {
                    let colon = self.find_top(self.pos + 1, close, |t| matches!(t, Tok::Punct(":")));
                    match colon {
                        Some(_) => {
                            let parts = self.split_top(self.pos + 1, close, ":");
                            let items = parts
                                .into_iter()
                                .filter(|(a, b)| a < b)
                                .map(|(a, b)| self.expr_range(a, b))
                                .collect::<Option<Vec<_>>>()?;
                            AstNode::new(AstKind::Seq, "slice", items, self.span_of(self.pos + 1, close))
                        }
                        None => self.expr_range(self.pos + 1, close)?,
                    }
                };
                let span = join(e.span, Some(self.toks[close].span));
                self.pos = close + 1;
                e = AstNode::new(AstKind::Index, "[]", vec![e, index], span);
            } else if matches!(self.peek(), Some(Tok::Punct("." | "->" | "::"))) {
                match self.tok(self.pos + 1) {
                    Some(Tok::Ident(name)) => {
                        let span = join(e.span, Some(self.toks[self.pos + 1].span));
                        e = AstNode::new(AstKind::Attr, name.clone(), vec![e], span);
                        self.pos += 2;
                    }
                    _ => return None,
                }
            } else if let Some(Tok::Punct(p @ ("++" | "--"))) = self.peek() {
                if !is_lvalue(&e) {
                    return Some(e);
                }
                let span = join(e.span, Some(self.toks[self.pos].span));
                self.pos += 1;
                e = AstNode::new(AstKind::Unary, *p, vec![e], span);
            } else {
                return Some(e);
            }
        }
    }

    /// Splits `lo..hi` on top-level occurrences of `sep`.
    fn split_top(&self, lo: usize, hi: usize, sep: &str) -> Vec<(usize, usize)> {
        let mut parts = Vec::new();
        let mut start = lo;
        while let Some(i) = self.find_top(start, hi, |t| matches!(t, Tok::Punct(p) if *p == sep)) {
            parts.push((start, i));
            start = i + 1;
        }
        parts.push((start, hi));
        parts
    }

    /// Comma-separated call arguments; keyword arguments keep their value.
    fn arguments(&mut self, lo: usize, hi: usize) -> Option<Vec<AstNode>> {
        if self.span_of(lo, hi).is_none() {
            return Some(vec![]);
        }
        let mut out = Vec::new();
        for (a, b) in self.split_top(lo, hi, ",") {
            if self.span_of(a, b).is_none() {
                continue;
            }
            let a = self.skip_newlines(a, b);
            let kw = matches!(self.tok(a), Some(Tok::Ident(_))) && self.is_punct_at(a + 1, "=");
            let start = if kw { a + 2 } else { a };
            out.push(self.expr_range(start, b)?);
        }
        Some(out)
    }

    fn primary(&mut self) -> Option<AstNode> {
        self.skip_nl();
        let lo = self.pos;
        let tok = self.peek()?;
        let span = self.toks[lo].span;
        match tok {
            Tok::Ident(w) => {
                self.pos += 1;
                if LITERAL_WORDS.contains(&w.as_str()) {
                    Some(AstNode::leaf(AstKind::Lit, w.clone(), span))
                } else if is_keyword(w) {
                    None
                } else {
                    Some(AstNode::leaf(AstKind::Var, w.clone(), span))
                }
            }
            Tok::Number(n) => {
                self.pos += 1;
                Some(AstNode::leaf(AstKind::Lit, n.clone(), span))
            }
            Tok::Str(s) => {
                self.pos += 1;
                // adjacent string literals concatenate
                let mut s = s.clone();
                let mut end = span;
                while let Some(Tok::Str(t)) = self.peek() {
                    s.push(' ');
                    s.push_str(t);
                    end = self.toks[self.pos].span;
                    self.pos += 1;
                }
                Some(AstNode::leaf(AstKind::Lit, s, span.cover(end)))
            }
            Tok::Punct(open @ ("(" | "[" | "{")) => {
                let close = self.matching(lo)?;
                let parts = self.split_top(lo + 1, close, ",");
                let full = self.span_of(lo, close + 1);
                self.pos = close + 1;
                if *open == "(" && parts.len() == 1 {
                    let (a, b) = parts[0];
                    if self.span_of(a, b).is_none() {
                        return Some(AstNode::new(AstKind::Seq, "()", vec![], full));
                    }
                    return self.expr_range(a, b);
                }
                let mut items = Vec::new();
                for (a, b) in parts {
                    if self.span_of(a, b).is_none() {
                        continue;
                    }
                    // map entries `k: v` contribute both sides
                    match self.find_top(a, b, |t| matches!(t, Tok::Punct(":"))) {
                        Some(c) if *open == "{" => {
                            let k = self.expr_range(a, c)?;
                            let v = self.expr_range(c + 1, b)?;
                            if k.kind != AstKind::Var {
                                items.push(k);
                            }
                            items.push(v);
                        }
                        _ => items.push(self.expr_range(a, b)?),
                    }
                }
                let label = match *open {
                    "(" => "()",
                    "[" => "[]",
                    _ => "{}",
                };
                Some(AstNode::new(AstKind::Seq, label, items, full))
            }
            _ => None,
        }
    }
}

fn join(a: Option<Span>, b: Option<Span>) -> Option<Span> {
    match (a, b) {
        (Some(a), Some(b)) => Some(a.cover(b)),
        (a, b) => a.or(b),
    }
}

fn continues_line(p: &str) -> bool {
    !matches!(p, ")" | "]" | "}" | ";" | "++" | "--")
}

fn is_keyword(w: &str) -> bool {
    matches!(
        w,
        "if" | "else" | "elif" | "while" | "for" | "return" | "def" | "class" | "in" | "is"
            | "not" | "and" | "or" | "lambda" | "function" | "import" | "from" | "switch"
            | "case" | "do" | "try" | "catch" | "finally" | "public" | "private" | "protected"
            | "static" | "void" | "int" | "float" | "double" | "char" | "long" | "short"
            | "boolean" | "bool" | "var" | "let" | "const" | "final" | "struct" | "pass"
            | "break" | "continue"
    )
}

fn is_lvalue(e: &AstNode) -> bool {
    match e.kind {
        AstKind::Var | AstKind::Attr | AstKind::Index => true,
        AstKind::Unary => e.label == "*" && e.children.first().is_some_and(is_lvalue),
        AstKind::Seq => e.label != "{}" && !e.children.is_empty() && e.children.iter().all(is_lvalue),
        _ => false,
    }
}
