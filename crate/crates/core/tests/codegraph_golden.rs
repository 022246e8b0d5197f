//! Graphs of small snippets against reviewed JSON files in `tests/golden`.
//! Run with `BLESS=1` to rewrite the files after an intended change.

use std::path::PathBuf;

use pcr_core::codegraph::{build_graphs, CodeSnippet, DepGraph, Language};

const CASES: &[(&str, Language, usize)] = &[
    ("straight_line.py", Language::PythonLike, 150),
    ("if_else.py", Language::PythonLike, 150),
    ("while_loop.py", Language::PythonLike, 150),
    ("undefined_use.py", Language::PythonLike, 150),
    // cut inside the loop body
    ("truncated.java", Language::JavaLike, 45),
    ("incomplete.js", Language::JsLike, 150),
];

fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

fn render(g: &DepGraph) -> String {
    serde_json::to_string_pretty(g).unwrap() + "\n"
}

#[test]
fn graphs_match_golden_files() {
    let bless = std::env::var_os("BLESS").is_some();
    let mut mismatches = Vec::new();
    for &(name, lang, code_len) in CASES {
        let src = std::fs::read_to_string(golden_dir().join(name)).unwrap();
        let (dfg, cfg, pdg) = build_graphs(&CodeSnippet::with_language(&src, lang, code_len));
        for (kind, g) in [("dfg", &dfg), ("cfg", &cfg), ("pdg", &pdg)] {
            let path = golden_dir().join(format!("{name}.{kind}.json"));
            let got = render(g);
            if bless {
                std::fs::write(&path, &got).unwrap();
                continue;
            }
            let want = std::fs::read_to_string(&path).unwrap_or_default();
            if got != want {
                mismatches.push(format!("{}\n{got}", path.display()));
            }
        }
    }
    assert!(mismatches.is_empty(), "graphs differ from golden files:\n{}", mismatches.join("\n"));
}
