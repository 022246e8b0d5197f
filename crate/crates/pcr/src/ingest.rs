//! Streaming reader for Stack Exchange style `Posts.xml` dumps and HTML
//! body cleaning.

use std::borrow::Cow;
use std::io::BufRead;
use std::sync::LazyLock;

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{PcrError, Result};

/// One `<row>` of the dump, before cleaning.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawPost {
    pub id: u64,
    pub score: i64,
    pub title: String,
    pub body_html: String,
    pub tags_raw: String,
    pub created_at: String,
}

/// A row that could not be turned into a post.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowError {
    pub error: String,
    pub offset: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Row {
    Post(RawPost),
    Error(RowError),
}

/// Iterator over the rows of a dump. Memory use is bounded by the largest
/// single row. Malformed XML ends the iteration with an error.
pub struct PostStream<R> {
    reader: Reader<R>,
    buf: Vec<u8>,
    questions_only: bool,
    depth: usize,
    done: bool,
}

/// Streams the rows of `source`. With `questions_only`, rows whose
/// `PostTypeId` is present and not `1` are skipped.
pub fn stream_posts<R: BufRead>(source: R, questions_only: bool) -> PostStream<R> {
    PostStream {
        reader: Reader::from_reader(source),
        buf: Vec::new(),
        questions_only,
        depth: 0,
        done: false,
    }
}

impl<R: BufRead> PostStream<R> {
    fn fatal(&mut self, offset: u64, message: impl Into<String>) -> Option<Result<Row>> {
        self.done = true;
        Some(Err(PcrError::Xml {
            offset,
            message: message.into(),
        }))
    }
}

impl<R: BufRead> Iterator for PostStream<R> {
    type Item = Result<Row>;

    fn next(&mut self) -> Option<Self::Item> {
        while !self.done {
            self.buf.clear();
            let offset = self.reader.buffer_position();
            let (row, opened) = match self.reader.read_event_into(&mut self.buf) {
                Ok(Event::Empty(e)) => ((e.name().as_ref() == b"row").then(|| parse_row(&e, self.questions_only)), false),
                Ok(Event::Start(e)) => ((e.name().as_ref() == b"row").then(|| parse_row(&e, self.questions_only)), true),
                Ok(Event::End(_)) => {
                    self.depth = self.depth.saturating_sub(1);
                    (None, false)
                }
                Ok(Event::Eof) => {
                    if self.depth > 0 {
                        let at = self.reader.buffer_position();
                        return self.fatal(at, "document ends inside an open element");
                    }
                    self.done = true;
                    return None;
                }
                Ok(_) => (None, false),
                Err(e) => {
                    let at = self.reader.error_position();
                    return self.fatal(at, e.to_string());
                }
            };
            if opened {
                self.depth += 1;
            }
            match row {
                Some(Ok(Some(post))) => return Some(Ok(Row::Post(post))),
                Some(Ok(None)) | None => {}
                Some(Err(RowFailure::Row(error))) => return Some(Ok(Row::Error(RowError { error, offset }))),
                Some(Err(RowFailure::Fatal(message))) => return self.fatal(offset, message),
            }
        }
        None
    }
}

enum RowFailure {
    Row(String),
    Fatal(String),
}

/// Decodes an attribute value the way a conforming XML parser does:
/// literal whitespace becomes a space, then references are expanded.
fn attr_value(raw: &[u8]) -> std::result::Result<String, String> {
    let s = std::str::from_utf8(raw).map_err(|e| e.to_string())?;
    let normalized: Cow<str> = if s.contains(['\t', '\n', '\r']) {
        Cow::Owned(s.replace(['\t', '\n', '\r'], " "))
    } else {
        Cow::Borrowed(s)
    };
    quick_xml::escape::unescape(&normalized)
        .map(Cow::into_owned)
        .map_err(|e| e.to_string())
}

fn parse_row(e: &BytesStart, questions_only: bool) -> std::result::Result<Option<RawPost>, RowFailure> {
    let mut id = None;
    let mut score = None;
    let mut post_type = None;
    let mut post = RawPost {
        id: 0,
        score: 0,
        title: String::new(),
        body_html: String::new(),
        tags_raw: String::new(),
        created_at: String::new(),
    };
    for attr in e.attributes() {
        let attr = attr.map_err(|e| RowFailure::Fatal(e.to_string()))?;
        let value = attr_value(&attr.value).map_err(RowFailure::Fatal)?;
        match attr.key.as_ref() {
            b"Id" => id = Some(value),
            b"Score" => score = Some(value),
            b"PostTypeId" => post_type = Some(value),
            b"Title" => post.title = value,
            b"Body" => post.body_html = value,
            b"Tags" => post.tags_raw = value,
            b"CreationDate" => post.created_at = value,
            _ => {}
        }
    }
    if questions_only && post_type.as_deref().is_some_and(|t| t.trim() != "1") {
        return Ok(None);
    }
    let id = id.ok_or_else(|| RowFailure::Row("missing attribute Id".into()))?;
    post.id = id
        .trim()
        .parse()
        .ok()
        .filter(|&n: &u64| n > 0)
        .ok_or_else(|| RowFailure::Row(format!("attribute Id is not a positive integer: {id:?}")))?;
    let score = score.ok_or_else(|| RowFailure::Row(format!("row {}: missing attribute Score", post.id)))?;
    post.score = score
        .trim()
        .parse()
        .map_err(|_| RowFailure::Row(format!("row {}: attribute Score is not an integer: {score:?}", post.id)))?;
    Ok(Some(post))
}

/// Splits `<a><b>` into `["a", "b"]`, lowercased, first occurrence kept.
pub fn parse_tags(tags_raw: &str) -> pcr_core::Result<Vec<String>> {
    let mut out: Vec<String> = Vec::new();
    let mut rest = tags_raw.trim();
    while !rest.is_empty() {
        let bad = |frag: &str| pcr_core::Error::UnbalancedTag { fragment: frag.into() };
        let Some(body) = rest.strip_prefix('<') else {
            let end = rest.find('<').unwrap_or(rest.len());
            return Err(bad(&rest[..end]));
        };
        let Some(close) = body.find('>') else {
            return Err(bad(rest));
        };
        let tag = &body[..close];
        if tag.contains('<') || tag.trim().is_empty() {
            return Err(bad(&rest[..close + 2]));
        }
        let tag = tag.trim().to_lowercase();
        if !out.contains(&tag) {
            out.push(tag);
        }
        rest = body[close + 1..].trim_start();
    }
    Ok(out)
}

/// Text and code of a cleaned post body.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanedBody {
    pub text: String,
    pub code_snippets: Vec<String>,
}

static CODE_ELEMENT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?is)<code\b[^>]*>(.*?)</code\s*>").unwrap());
static URL: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r#"(?i)\b(?:https?|ftp)://[^\s<>"']+|\bwww\.[^\s<>"']+"#).unwrap());
static TAG: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"<[^<>]*>").unwrap());

fn collapse(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for word in s.split(|c: char| c.is_whitespace() || c.is_control()) {
        if !word.is_empty() {
            if !out.is_empty() {
                out.push(' ');
            }
            out.push_str(word);
        }
    }
    out
}

/// Splits an HTML body into prose and code.
///
/// Each `<code>` element's content is kept as a snippet with its
/// whitespace intact, inner markup removed and entities expanded. The
/// remaining markup goes through a fixed sequence of passes: URLs removed,
/// control characters blanked, tags stripped, entities expanded,
/// whitespace collapsed. Entities are expanded after stripping so escaped
/// text like `&lt;T&gt;` survives as `<T>`.
pub fn clean_body(body_html: &str) -> CleanedBody {
    let mut code_snippets = Vec::new();
    let without_code = CODE_ELEMENT.replace_all(body_html, |c: &regex::Captures| {
        let inner = TAG.replace_all(&c[1], "");
        code_snippets.push(html_escape::decode_html_entities(&inner).into_owned());
        " "
    });
    let no_urls = URL.replace_all(&without_code, " ");
    let no_controls: String = no_urls
        .chars()
        .map(|c| if c.is_control() { ' ' } else { c })
        .collect();
    let no_tags = TAG.replace_all(&no_controls, " ");
    let text = collapse(&html_escape::decode_html_entities(&no_tags));
    CleanedBody { text, code_snippets }
}

/// Collapses whitespace in a title.
pub fn clean_title(title: &str) -> String {
    collapse(title)
}
