#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use pcr::PipelineConfig;
use serde_json::{json, Value};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/golden")
}

/// Config for the bundled dump, writing everything under `out`.
pub fn fixture_config(out: &Path) -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.set("dump", fixture("posts.xml").to_str().unwrap()).unwrap();
    cfg.set("knowledge", fixture("knowledge.jsonl").to_str().unwrap()).unwrap();
    cfg.set("out_dir", out.to_str().unwrap()).unwrap();
    cfg.rare_tag_theta = 3;
    cfg.folds = 5;
    cfg
}

const FILLER: [&str; 10] = ["please", "review", "my", "code", "it", "works", "but", "could", "be", "cleaner"];

/// A dump where one body token decides both the tags and the necessity
/// label: `zephyrmark` requests are necessary and tagged alpha/anchor/apple,
/// `quokkamark` requests unnecessary and tagged beta/bridge/banana.
pub fn separable_dump(n: usize) -> String {
    let mut out = String::from("<?xml version=\"1.0\" encoding=\"utf-8\"?>\n<posts>\n");
    for i in 1..=n {
        let (key, tags, score) = if i % 2 == 1 {
            ("zephyrmark", "&lt;alpha&gt;&lt;anchor&gt;&lt;apple&gt;", 9)
        } else {
            ("quokkamark", "&lt;beta&gt;&lt;bridge&gt;&lt;banana&gt;", 0)
        };
        let mut words: Vec<&str> = (0..6).map(|j| FILLER[(i * 3 + j * 7) % FILLER.len()]).collect();
        words.insert(i % 7, key);
        out.push_str(&format!(
            "  <row Id=\"{i}\" PostTypeId=\"1\" Score=\"{score}\" Title=\"Request {i}\" \
             Body=\"&lt;p&gt;{}&lt;/p&gt;&lt;pre&gt;&lt;code&gt;x = {i}&#xA;y = x + 2&lt;/code&gt;&lt;/pre&gt;\" Tags=\"{tags}\" />\n",
            words.join(" ")
        ));
    }
    out.push_str("</posts>\n");
    out
}

pub fn separable_config(dump: &Path, out: &Path) -> PipelineConfig {
    let mut cfg = PipelineConfig {
        dump: dump.into(),
        ..PipelineConfig::default()
    };
    cfg.set("out_dir", out.to_str().unwrap()).unwrap();
    cfg.rare_tag_theta = 1;
    cfg.folds = 5;
    cfg.learning_rate = 0.05;
    cfg.epochs = 30;
    cfg.set("eval_split", "train").unwrap();
    cfg
}

/// Minimal HTTP/1.1 server answering every request with `handler(body)`.
pub struct FixtureServer {
    pub url: String,
    pub requests: Arc<AtomicUsize>,
}

pub fn serve<F>(handler: F) -> FixtureServer
where
    F: Fn(usize, &Value) -> (u16, String) + Send + 'static,
{
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let requests = Arc::new(AtomicUsize::new(0));
    let counter = requests.clone();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0;
            let mut line = String::new();
            loop {
                line.clear();
                if reader.read_line(&mut line).unwrap_or(0) == 0 {
                    break;
                }
                let l = line.trim_end();
                if l.is_empty() {
                    break;
                }
                if let Some((k, v)) = l.split_once(':') {
                    if k.eq_ignore_ascii_case("content-length") {
                        len = v.trim().parse().unwrap_or(0);
                    }
                }
            }
            let mut body = vec![0; len];
            if reader.read_exact(&mut body).is_err() {
                continue;
            }
            let n = counter.fetch_add(1, Ordering::SeqCst);
            let value: Value = serde_json::from_slice(&body).unwrap_or(Value::Null);
            let (status, reply) = handler(n, &value);
            let _ = write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
                reply.len()
            );
        }
    });
    FixtureServer { url, requests }
}

/// Conformant reply: at each mask, `first(mask)` then fillers, scores
/// strictly descending.
pub fn conformant(req: &Value, first: impl Fn(usize, usize) -> String) -> String {
    let masks = req["mask_indices"].as_array().map(Vec::len).unwrap_or(0);
    let top_k = req["top_k"].as_u64().unwrap_or(1) as usize;
    let predictions: Vec<Value> = (0..masks)
        .map(|i| {
            (0..top_k)
                .map(|j| {
                    let token = if j == 0 { first(i, masks) } else { format!("filler{j}") };
                    json!({"token": token, "score": 0.5 / (j + 1) as f64})
                })
                .collect()
        })
        .collect();
    json!({"predictions": predictions, "model_id": "fixture"}).to_string()
}
