//! On-disk artifact formats: newline-delimited JSON records, pretty JSON
//! documents and the knowledge file.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use pcr_core::knowledge::{KnowledgeBase, KnowledgeEntry};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{PcrError, Result};

/// One cleaned post as written by the ingest stage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PostRecord {
    pub id: u64,
    pub score: i64,
    pub title: String,
    pub text: String,
    pub code_snippets: Vec<String>,
    pub tags: Vec<String>,
    pub created_at: String,
}

/// A line of an ingest output file: a post or a row error.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum IngestLine {
    Post(PostRecord),
    Error { error: String, offset: u64 },
}

pub fn open(path: &Path) -> Result<BufReader<File>> {
    match File::open(path) {
        Ok(f) => Ok(BufReader::new(f)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(PcrError::MissingInput { path: path.into() }),
        Err(e) => Err(PcrError::io(path, e)),
    }
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| PcrError::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| PcrError::io(path, e))
}

pub fn write_ndjson<'a, T: Serialize + 'a>(path: &Path, items: impl IntoIterator<Item = &'a T>) -> Result<()> {
    let mut w = create(path)?;
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(|e| PcrError::Json {
            path: path.into(),
            line: 0,
            source: e,
        })?;
        w.write_all(b"\n").map_err(|e| PcrError::io(path, e))?;
    }
    w.flush().map_err(|e| PcrError::io(path, e))
}

pub fn read_ndjson<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let reader = open(path)?;
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| PcrError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| PcrError::Json {
            path: path.into(),
            line: i + 1,
            source: e,
        })?);
    }
    Ok(out)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| PcrError::Json {
        path: path.into(),
        line: 0,
        source: e,
    })?;
    w.write_all(b"\n").map_err(|e| PcrError::io(path, e))?;
    w.flush().map_err(|e| PcrError::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_reader(open(path)?).map_err(|e| PcrError::Json {
        path: path.into(),
        line: e.line(),
        source: e,
    })
}

/// A knowledge-file line that was skipped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LineIssue {
    pub line: usize,
    pub reason: String,
}

/// Reads newline-delimited knowledge entries. Unparseable or invalid lines
/// are skipped and reported; duplicate keys across entries and an empty
/// result are errors.
pub fn load_knowledge<R: BufRead>(reader: R) -> Result<(KnowledgeBase, Vec<LineIssue>)> {
    let mut entries = Vec::new();
    let mut issues = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| PcrError::Other(format!("knowledge line {}: {e}", i + 1)))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<KnowledgeEntry>(&line)
            .map_err(|e| e.to_string())
            .and_then(|e| e.validate().map(|_| e).map_err(|e| e.to_string()));
        match parsed {
            Ok(e) => entries.push(e),
            Err(reason) => issues.push(LineIssue { line: i + 1, reason }),
        }
    }
    for issue in &issues {
        log::warn!("knowledge line {} skipped: {}", issue.line, issue.reason);
    }
    Ok((KnowledgeBase::new(entries)?, issues))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn knowledge_skip_and_report() {
        let mut text = String::new();
        for i in 0..9 {
            text.push_str(&format!(
                "{{\"term\":\"term{i}\",\"aliases\":[],\"definition\":\"d\",\"source\":\"t\"}}\n"
            ));
        }
        text.insert_str(0, "{not json\n");
        let (kb, issues) = load_knowledge(text.as_bytes()).unwrap();
        assert_eq!(kb.len(), 9);
        assert_eq!(issues.len(), 1);
        assert_eq!(issues[0].line, 1);
    }

    #[test]
    fn knowledge_alias_indexed() {
        let line = r#"{"term":"object oriented programming","aliases":["oop"],"definition":"a programming paradigm based on the concept of objects","source":"fixture"}"#;
        let (kb, _) = load_knowledge(line.as_bytes()).unwrap();
        assert_eq!(kb.lookup("OOP").unwrap().term, "object oriented programming");
        assert!(kb.lookup("object oriented programming").is_some());
    }

    #[test]
    fn knowledge_errors() {
        assert!(matches!(
            load_knowledge("".as_bytes()),
            Err(PcrError::Core(pcr_core::Error::EmptyKnowledgeBase))
        ));
        let dup = "{\"term\":\"a\",\"definition\":\"x\"}\n{\"term\":\"b\",\"aliases\":[\"A\"],\"definition\":\"y\"}\n";
        assert!(matches!(
            load_knowledge(dup.as_bytes()),
            Err(PcrError::Core(pcr_core::Error::DuplicateKnowledgeKey { .. }))
        ));
    }
}
