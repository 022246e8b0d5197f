mod common;

use std::io::BufReader;

use pcr::ingest::{clean_body, stream_posts, Row};
use proptest::prelude::*;

/// Every question row of the fixture, read through a DOM parser.
#[test]
fn stream_agrees_with_dom() {
    let text = std::fs::read_to_string(common::fixture("posts.xml")).unwrap();
    let doc = roxmltree::Document::parse(&text).unwrap();
    let mut want_posts = Vec::new();
    let mut want_errors = 0;
    for row in doc.descendants().filter(|n| n.has_tag_name("row")) {
        if row.attribute("PostTypeId") != Some("1") {
            continue;
        }
        match (row.attribute("Id"), row.attribute("Score")) {
            (Some(id), Some(score)) => want_posts.push((
                id.parse::<u64>().unwrap(),
                score.parse::<i64>().unwrap(),
                row.attribute("Title").unwrap_or("").to_string(),
                row.attribute("Body").unwrap_or("").to_string(),
                row.attribute("Tags").unwrap_or("").to_string(),
            )),
            _ => want_errors += 1,
        }
    }
    let file = std::fs::File::open(common::fixture("posts.xml")).unwrap();
    let mut got_posts = Vec::new();
    let mut got_errors = 0;
    for row in stream_posts(BufReader::new(file), true) {
        match row.unwrap() {
            Row::Post(p) => got_posts.push((p.id, p.score, p.title, p.body_html, p.tags_raw)),
            Row::Error(_) => got_errors += 1,
        }
    }
    assert_eq!(got_posts, want_posts);
    assert_eq!((got_errors, want_errors), (1, 1));
    assert_eq!(got_posts.len(), 48);
}

#[test]
fn answers_kept_when_asked() {
    let file = std::fs::File::open(common::fixture("posts.xml")).unwrap();
    let ids: Vec<u64> = stream_posts(BufReader::new(file), false)
        .filter_map(|r| match r.unwrap() {
            Row::Post(p) => Some(p.id),
            Row::Error(_) => None,
        })
        .collect();
    assert!(ids.contains(&1001) && ids.contains(&1002));
}

#[test]
fn fixture_code_keeps_newlines() {
    let file = std::fs::File::open(common::fixture("posts.xml")).unwrap();
    let first = stream_posts(BufReader::new(file), true).next().unwrap().unwrap();
    let Row::Post(p) = first else { panic!("first row is a post") };
    let body = clean_body(&p.body_html);
    assert_eq!(body.code_snippets, ["total = 0\nfor x in items:\n    total += x\nprint(total)"]);
    assert_eq!(
        body.text,
        "My loop adds numbers from a list. Is there a faster way? See the docs or for context. Thanks & regards."
    );
}

#[test]
fn truncated_document_is_fatal() {
    let xml = r#"<posts><row Id="1" PostTypeId="1" Score="1" Title="a" Body="" Tags="&lt;x&gt;"/>"#;
    let rows: Vec<_> = stream_posts(xml.as_bytes(), true).collect();
    assert!(matches!(rows.last(), Some(Err(pcr::PcrError::Xml { .. }))), "{rows:?}");
}

#[derive(Debug, Clone)]
enum Piece {
    Words(Vec<String>),
    Para(Vec<String>),
    Link(String, Vec<String>),
    Code(String),
    Entity(&'static str),
}

fn word() -> impl Strategy<Value = String> {
    "[a-zA-Z0-9?.,!]{1,8}"
}

fn piece() -> impl Strategy<Value = Piece> {
    prop_oneof![
        proptest::collection::vec(word(), 1..4).prop_map(Piece::Words),
        proptest::collection::vec(word(), 1..4).prop_map(Piece::Para),
        (word(), proptest::collection::vec(word(), 1..3)).prop_map(|(h, w)| Piece::Link(h, w)),
        "[a-z =+;()\n]{1,30}".prop_map(Piece::Code),
        prop_oneof![
            Just("&amp;"),
            Just("&lt;T&gt;"),
            Just("&quot;q&quot;"),
        ]
        .prop_map(Piece::Entity),
    ]
}

fn render(pieces: &[Piece]) -> String {
    pieces
        .iter()
        .map(|p| match p {
            Piece::Words(w) => w.join(" "),
            Piece::Para(w) => format!("<p>{}</p>", w.join(" ")),
            Piece::Link(h, w) => format!("<a href=\"https://example.org/{h}\">{}</a>", w.join(" ")),
            Piece::Code(c) => format!("<pre><code>{c}</code></pre>"),
            Piece::Entity(e) => e.to_string(),
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Prose and code collected from a DOM of the same fragment.
fn dom_oracle(html: &str) -> (String, Vec<String>) {
    let wrapped = format!("<root>{html}</root>");
    let doc = roxmltree::Document::parse(&wrapped).unwrap();
    let mut prose = Vec::new();
    let mut code = Vec::new();
    for n in doc.root_element().descendants() {
        if n.has_tag_name("code") {
            code.push(n.descendants().filter(|d| d.is_text()).filter_map(|d| d.text()).collect::<String>());
        } else if n.is_text() && !n.ancestors().any(|a| a.has_tag_name("code")) {
            prose.push(n.text().unwrap().to_string());
        }
    }
    let text = prose.join(" ").split_whitespace().collect::<Vec<_>>().join(" ");
    (text, code)
}

proptest! {
    #[test]
    fn clean_body_matches_dom(pieces in proptest::collection::vec(piece(), 0..8)) {
        let html = render(&pieces);
        let got = clean_body(&html);
        let (text, code) = dom_oracle(&html);
        prop_assert_eq!(got.text, text);
        prop_assert_eq!(got.code_snippets, code);
    }

    #[test]
    fn cleaning_is_idempotent(pieces in proptest::collection::vec(piece(), 0..8)) {
        let once = clean_body(&render(&pieces)).text;
        if !once.contains(['<', '>', '&']) {
            let twice = clean_body(&once);
            prop_assert_eq!(&twice.text, &once);
            prop_assert!(twice.code_snippets.is_empty());
        }
    }
}
