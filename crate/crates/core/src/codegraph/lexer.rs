use alloc::string::String;
use alloc::vec::Vec;

use super::Span;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tok {
    Ident(String),
    Number(String),
    Str(String),
    Punct(&'static str),
    /// End of a logical line; carries the indentation of the next line.
    Newline(usize),
    /// Anything the lexer cannot classify, including unterminated strings.
    Unknown(String),
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Token {
    pub tok: Tok,
    pub span: Span,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Mode {
    /// `#` comments, indentation blocks, braces do not end lines.
    Indent,
    /// `//` and `/* */` comments, `#` directive lines, brace blocks.
    Brace,
}

const PUNCT: &[&str] = &[
    "<<=", ">>=", "**=", "//=", "===", "!==", "...", "==", "!=", "<=", ">=", "&&", "||", "++",
    "--", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "<<", ">>", "**", "//", "->", "=>",
    "::", ":=", "+", "-", "*", "/", "%", "=", "<", ">", "!", "~", "&", "|", "^", "(", ")", "[",
    "]", "{", "}", ",", ";", ":", ".", "?", "@",
];

const STRING_PREFIXES: &[&str] = &["f", "r", "b", "u", "fr", "rf", "br", "rb"];

pub(crate) fn lex(chars: &[char], mode: Mode) -> Vec<Token> {
    Lexer {
        chars,
        pos: 0,
        mode,
        depth: 0,
        out: Vec::new(),
    }
    .run()
}

struct Lexer<'a> {
    chars: &'a [char],
    pos: usize,
    mode: Mode,
    depth: usize,
    out: Vec<Token>,
}

impl Lexer<'_> {
    fn peek(&self, off: usize) -> Option<char> {
        self.chars.get(self.pos + off).copied()
    }

    fn starts_with(&self, s: &str) -> bool {
        s.chars().enumerate().all(|(i, c)| self.chars.get(self.pos + i) == Some(&c))
    }

    fn push(&mut self, tok: Tok, start: usize) {
        self.out.push(Token {
            tok,
            span: Span::new(start, self.pos),
        });
    }

    fn line_indent(&self, mut i: usize) -> usize {
        let mut width = 0;
        while let Some(&c) = self.chars.get(i) {
            match c {
                ' ' => width += 1,
                '\t' => width += 4,
                _ => break,
            }
            i += 1;
        }
        width
    }

    fn newline(&mut self, at: usize) {
        let indent = self.line_indent(at + 1);
        if let Some(Token {
            tok: Tok::Newline(prev),
            span,
        }) = self.out.last_mut()
        {
            *prev = indent;
            span.end = at + 1;
            return;
        }
        self.out.push(Token {
            tok: Tok::Newline(indent),
            span: Span::new(at, at + 1),
        });
    }

    fn skip_to_eol(&mut self) {
        while let Some(c) = self.peek(0) {
            if c == '\n' {
                break;
            }
            self.pos += 1;
        }
    }

    fn at_line_start(&self) -> bool {
        self.chars[..self.pos]
            .iter()
            .rev()
            .take_while(|&&c| c != '\n')
            .all(|c| c.is_whitespace())
    }

    fn run(mut self) -> Vec<Token> {
        // Leading newline records the indentation of the first line.
        self.out.push(Token {
            tok: Tok::Newline(self.line_indent(0)),
            span: Span::new(0, 0),
        });
        while let Some(c) = self.peek(0) {
            let start = self.pos;
            if c == '\n' {
                self.pos += 1;
                if self.depth == 0 {
                    self.newline(start);
                }
                continue;
            }
            if c.is_whitespace() {
                self.pos += 1;
                continue;
            }
            match self.mode {
                Mode::Indent if c == '#' => {
                    self.skip_to_eol();
                    continue;
                }
                Mode::Brace if self.starts_with("//") => {
                    self.skip_to_eol();
                    continue;
                }
                Mode::Brace if self.starts_with("/*") => {
                    self.pos += 2;
                    while self.peek(0).is_some() && !self.starts_with("*/") {
                        self.pos += 1;
                    }
                    self.pos = (self.pos + 2).min(self.chars.len());
                    continue;
                }
                Mode::Brace if c == '#' && self.at_line_start() => {
                    self.skip_to_eol();
                    continue;
                }
                _ => {}
            }
            if c.is_alphabetic() || c == '_' || c == '$' {
                let word = self.take_while(|c| c.is_alphanumeric() || c == '_' || c == '$');
                if matches!(self.peek(0), Some('"' | '\''))
                    && STRING_PREFIXES.contains(&word.to_lowercase().as_str())
                {
                    self.string(start);
                } else {
                    self.push(Tok::Ident(word), start);
                }
                continue;
            }
            if c.is_ascii_digit() || (c == '.' && self.peek(1).is_some_and(|d| d.is_ascii_digit())) {
                let num = self.take_while(|c| c.is_alphanumeric() || c == '.' || c == '_');
                self.push(Tok::Number(num), start);
                continue;
            }
            if matches!(c, '"' | '\'' | '`') {
                self.string(start);
                continue;
            }
            if let Some(p) = PUNCT
                .iter()
                .find(|p| self.starts_with(p) && !(self.mode == Mode::Brace && **p == "//"))
            {
                self.pos += p.chars().count();
                match *p {
                    "(" | "[" => self.depth += 1,
                    "{" if self.mode == Mode::Indent => self.depth += 1,
                    ")" | "]" => self.depth = self.depth.saturating_sub(1),
                    "}" if self.mode == Mode::Indent => self.depth = self.depth.saturating_sub(1),
                    _ => {}
                }
                self.push(Tok::Punct(p), start);
                continue;
            }
            self.pos += 1;
            self.push(Tok::Unknown(c.into()), start);
        }
        self.out
    }

    fn take_while(&mut self, f: impl Fn(char) -> bool) -> String {
        let mut s = String::new();
        while let Some(c) = self.peek(0) {
            if !f(c) {
                break;
            }
            s.push(c);
            self.pos += 1;
        }
        s
    }

    fn string(&mut self, start: usize) {
        let quote = self.peek(0).unwrap_or('"');
        let triple = quote != '`' && self.peek(1) == Some(quote) && self.peek(2) == Some(quote);
        let delim_len = if triple { 3 } else { 1 };
        self.pos += delim_len;
        let mut closed = false;
        while let Some(c) = self.peek(0) {
            if c == '\\' {
                self.pos += 2;
                continue;
            }
            if c == '\n' && !triple && quote != '`' {
                break;
            }
            if c == quote && (!triple || (self.peek(1) == Some(quote) && self.peek(2) == Some(quote))) {
                self.pos += delim_len;
                closed = true;
                break;
            }
            self.pos += 1;
        }
        self.pos = self.pos.min(self.chars.len());
        let text: String = self.chars[start..self.pos].iter().collect();
        if closed {
            self.push(Tok::Str(text), start);
        } else {
            self.push(Tok::Unknown(text), start);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn toks(src: &str, mode: Mode) -> Vec<Tok> {
        let chars: Vec<char> = src.chars().collect();
        lex(&chars, mode).into_iter().map(|t| t.tok).collect()
    }

    #[test]
    fn python_lines_and_indent() {
        let t = toks("if x:\n    y = 1 # c\n\nz", Mode::Indent);
        assert_eq!(
            t,
            vec![
                Tok::Newline(0),
                Tok::Ident("if".into()),
                Tok::Ident("x".into()),
                Tok::Punct(":"),
                Tok::Newline(4),
                Tok::Ident("y".into()),
                Tok::Punct("="),
                Tok::Number("1".into()),
                Tok::Newline(0),
                Tok::Ident("z".into()),
            ]
        );
    }

    #[test]
    fn brace_comments_and_strings() {
        let t = toks("a += \"s;\" // x\n/* y */ b++", Mode::Brace);
        assert_eq!(
            t,
            vec![
                Tok::Newline(0),
                Tok::Ident("a".into()),
                Tok::Punct("+="),
                Tok::Str("\"s;\"".into()),
                Tok::Newline(0),
                Tok::Ident("b".into()),
                Tok::Punct("++"),
            ]
        );
    }

    #[test]
    fn unterminated_string_is_unknown() {
        let t = toks("x = 'abc", Mode::Indent);
        assert!(matches!(t.last(), Some(Tok::Unknown(_))));
    }

    #[test]
    fn newlines_inside_parens_are_suppressed() {
        let t = toks("f(a,\n b)", Mode::Brace);
        assert!(!t[1..].iter().any(|t| matches!(t, Tok::Newline(_))));
    }
}
