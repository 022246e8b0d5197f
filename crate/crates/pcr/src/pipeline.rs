//! Pipeline stages. Each stage reads its predecessor's files, writes its
//! own, and leaves a manifest next to them.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};
use std::path::PathBuf;
use std::time::Duration;

use pcr_core::answer::{decide_necessity, map_tag_predictions, Method};
use pcr_core::codegraph::{build_graphs, CodeSnippet, DepGraph, Language};
use pcr_core::dataset::{
    filter_rare_tags, label_necessity, normalize_tag, split_folds, CorpusStats, FoldSplit, Necessity, ReviewRequest,
    TagVocabulary,
};
use pcr_core::knowledge::{extract_terms, render_knowledge_prefix, KnowledgeBase, TermFilter};
use pcr_core::metrics::{cross_validate, evaluate, render_table, CrossValidation, EvalItem, MetricsReport};
use pcr_core::model::{
    encode_code_graph, train, CodeGraphEmbedding, MaskFillBackend, ModelConfig, ModelState, TrainConfig,
    TrainReport, TrainingExample, Vocabulary,
};
use pcr_core::prompt::{assemble_prompt, build_template, PromptInstance, PromptLimits};
use pcr_core::text::{CODE, PAD};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Backend, EvalSplit, PipelineConfig};
use crate::error::{PcrError, Result};
use crate::formats::{self, IngestLine, PostRecord};
use crate::ingest::{clean_body, clean_title, parse_tags, stream_posts, Row};
use crate::manifest::Manifest;
use crate::remote::{RemoteBackend, RemoteConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Ingest,
    Preprocess,
    Graph,
    Train,
    Predict,
    Evaluate,
    All,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Preprocess => "preprocess",
            Stage::Graph => "graph",
            Stage::Train => "train",
            Stage::Predict => "predict",
            Stage::Evaluate => "evaluate",
            Stage::All => "all",
        }
    }
}

/// A stage failed; the exit status follows the underlying error.
#[derive(Debug, thiserror::Error)]
#[error("stage {stage} failed: {error}")]
pub struct StageFailure {
    pub stage: &'static str,
    #[source]
    pub error: PcrError,
}

impl StageFailure {
    pub fn exit_code(&self) -> i32 {
        self.error.exit_code()
    }
}

/// File locations of every artifact.
#[derive(Debug, Clone)]
pub struct Paths {
    pub posts: PathBuf,
    pub corpus: PathBuf,
    pub tags: PathBuf,
    pub folds: PathBuf,
    pub stats: PathBuf,
    pub graphs: PathBuf,
    pub model: PathBuf,
    pub train_report: PathBuf,
    pub predictions: PathBuf,
    pub report: PathBuf,
    pub report_table: PathBuf,
    pub cv_report: PathBuf,
    pub cv_table: PathBuf,
}

impl Paths {
    pub fn new(cfg: &PipelineConfig) -> Self {
        let c = |f: &str| cfg.corpus_dir.join(f);
        let m = |f: &str| cfg.checkpoint_dir.join(f);
        let r = |f: &str| cfg.report_dir.join(f);
        Paths {
            posts: c("posts.jsonl"),
            corpus: c("corpus.jsonl"),
            tags: c("tags.json"),
            folds: c("folds.json"),
            stats: c("stats.json"),
            graphs: c("graphs.jsonl"),
            model: m("model.json"),
            train_report: m("train_report.json"),
            predictions: r("predictions.jsonl"),
            report: r("report.json"),
            report_table: r("report.txt"),
            cv_report: r("cv_report.json"),
            cv_table: r("cv_report.txt"),
        }
    }
}

pub fn run(stage: Stage, cfg: &PipelineConfig) -> std::result::Result<(), StageFailure> {
    let fail = |stage: Stage| move |error| StageFailure {
        stage: stage.name(),
        error,
    };
    match stage {
        Stage::Ingest => ingest(cfg).map(drop).map_err(fail(stage)),
        Stage::Preprocess => preprocess(cfg).map(drop).map_err(fail(stage)),
        Stage::Graph => graph(cfg).map(drop).map_err(fail(stage)),
        Stage::Train => train_stage(cfg).map(drop).map_err(fail(stage)),
        Stage::Predict => predict_stage(cfg).map(drop).map_err(fail(stage)),
        Stage::Evaluate => evaluate_stage(cfg).map(drop).map_err(fail(stage)),
        Stage::All => {
            for s in [Stage::Ingest, Stage::Preprocess, Stage::Graph] {
                run(s, cfg)?;
            }
            if cfg.cross_validate {
                cross_validate_stage(cfg).map(drop).map_err(fail(Stage::All))
            } else {
                for s in [Stage::Train, Stage::Predict, Stage::Evaluate] {
                    run(s, cfg)?;
                }
                Ok(())
            }
        }
    }
}

fn manifest(stage: &str, cfg: &PipelineConfig, inputs: &[PathBuf], outputs: &[PathBuf]) -> Result<()> {
    let dir = outputs
        .first()
        .and_then(|p| p.parent())
        .map(PathBuf::from)
        .unwrap_or_default();
    Manifest::new(stage, &cfg.hash(), cfg.seed, inputs, outputs)?.write(&dir)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct IngestSummary {
    pub posts: usize,
    pub row_errors: usize,
}

/// Dump → `posts.jsonl`, one cleaned post or row error per line.
pub fn ingest(cfg: &PipelineConfig) -> Result<IngestSummary> {
    let paths = Paths::new(cfg);
    let source = formats::open(&cfg.dump)?;
    ingest_from(source, cfg.questions_only, &paths.posts).and_then(|summary| {
        manifest("ingest", cfg, std::slice::from_ref(&cfg.dump), std::slice::from_ref(&paths.posts))?;
        log::info!("ingest: {} posts, {} row errors", summary.posts, summary.row_errors);
        Ok(summary)
    })
}

pub fn ingest_from<R: BufRead>(source: R, questions_only: bool, out: &std::path::Path) -> Result<IngestSummary> {
    let mut w = formats::create(out)?;
    let mut summary = IngestSummary::default();
    let mut emit = |line: &IngestLine| -> Result<()> {
        serde_json::to_writer(&mut w, line).map_err(|e| PcrError::Json {
            path: out.into(),
            line: 0,
            source: e,
        })?;
        w.write_all(b"\n").map_err(|e| PcrError::io(out, e))
    };
    for row in stream_posts(source, questions_only) {
        let line = match row? {
            Row::Post(p) => match parse_tags(&p.tags_raw) {
                Ok(tags) => {
                    let body = clean_body(&p.body_html);
                    summary.posts += 1;
                    IngestLine::Post(PostRecord {
                        id: p.id,
                        score: p.score,
                        title: clean_title(&p.title),
                        text: body.text,
                        code_snippets: body.code_snippets,
                        tags,
                        created_at: p.created_at,
                    })
                }
                Err(e) => {
                    summary.row_errors += 1;
                    IngestLine::Error {
                        error: format!("row {}: {e}", p.id),
                        offset: 0,
                    }
                }
            },
            Row::Error(e) => {
                summary.row_errors += 1;
                IngestLine::Error {
                    error: e.error,
                    offset: e.offset,
                }
            }
        };
        emit(&line)?;
    }
    w.flush().map_err(|e| PcrError::io(out, e))?;
    Ok(summary)
}

/// Turns cleaned posts into labeled requests. Tags that normalize to no
/// words are dropped with a warning.
pub fn label_posts(posts: Vec<PostRecord>, necessity_threshold: i64) -> Vec<ReviewRequest> {
    posts
        .into_iter()
        .map(|p| {
            let tags = p
                .tags
                .into_iter()
                .filter(|t| match normalize_tag(t) {
                    Ok(_) => true,
                    Err(e) => {
                        log::warn!("request {}: {e}; tag dropped", p.id);
                        false
                    }
                })
                .collect();
            ReviewRequest {
                id: p.id,
                title: p.title,
                text: p.text,
                code_snippets: p.code_snippets,
                tags,
                score: p.score,
                necessity: label_necessity(p.score, necessity_threshold),
            }
        })
        .collect()
}

/// `posts.jsonl` → labeled, filtered corpus, tag vocabulary and folds.
pub fn preprocess(cfg: &PipelineConfig) -> Result<CorpusStats> {
    let paths = Paths::new(cfg);
    let lines: Vec<IngestLine> = formats::read_ndjson(&paths.posts)?;
    let posts = lines
        .into_iter()
        .filter_map(|l| match l {
            IngestLine::Post(p) => Some(p),
            IngestLine::Error { .. } => None,
        })
        .collect();
    let requests = label_posts(posts, cfg.necessity_threshold);
    let before = requests.len();
    let (corpus, vocab) = filter_rare_tags(requests, cfg.rare_tag_theta)?;
    let folds = split_folds(corpus.len(), cfg.folds, cfg.seed)?;
    let stats = CorpusStats::compute(&corpus, &vocab, &folds[cfg.fold]);
    formats::write_ndjson(&paths.corpus, &corpus)?;
    formats::write_json(&paths.tags, &vocab)?;
    formats::write_json(&paths.folds, &folds)?;
    formats::write_json(&paths.stats, &stats)?;
    log::info!(
        "preprocess: {} of {before} requests kept, {} tags, longest tag {} words (tag_masks = {})",
        corpus.len(),
        vocab.len(),
        vocab.max_words(),
        cfg.tag_masks
    );
    manifest(
        "preprocess",
        cfg,
        std::slice::from_ref(&paths.posts),
        &[paths.corpus, paths.tags, paths.folds, paths.stats],
    )?;
    Ok(stats)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphRecord {
    pub id: u64,
    pub language: Language,
    pub truncated_to: usize,
    pub pdg: DepGraph,
}

/// The dependence graph of a request's code, all snippets joined.
pub fn request_graph(req: &ReviewRequest, code_len: usize) -> GraphRecord {
    let snippet = CodeSnippet::new(&req.code_snippets.join("\n"), code_len);
    let (_, _, pdg) = build_graphs(&snippet);
    GraphRecord {
        id: req.id,
        language: snippet.language,
        truncated_to: snippet.truncated_to,
        pdg,
    }
}

/// `corpus.jsonl` → `graphs.jsonl`.
pub fn graph(cfg: &PipelineConfig) -> Result<usize> {
    let paths = Paths::new(cfg);
    let corpus: Vec<ReviewRequest> = formats::read_ndjson(&paths.corpus)?;
    let graphs: Vec<GraphRecord> = corpus.par_iter().map(|r| request_graph(r, cfg.code_len)).collect();
    formats::write_ndjson(&paths.graphs, &graphs)?;
    log::info!("graph: {} graphs", graphs.len());
    manifest("graph", cfg, std::slice::from_ref(&paths.corpus), std::slice::from_ref(&paths.graphs))?;
    Ok(graphs.len())
}

/// Everything later stages read from the corpus directory.
pub struct Dataset {
    pub corpus: Vec<ReviewRequest>,
    pub vocab: TagVocabulary,
    pub folds: Vec<FoldSplit>,
    pub graphs: BTreeMap<u64, DepGraph>,
}

impl Dataset {
    pub fn load(cfg: &PipelineConfig) -> Result<Self> {
        let paths = Paths::new(cfg);
        let corpus: Vec<ReviewRequest> = formats::read_ndjson(&paths.corpus)?;
        let vocab: TagVocabulary = formats::read_json(&paths.tags)?;
        let folds: Vec<FoldSplit> = formats::read_json(&paths.folds)?;
        let graphs: Vec<GraphRecord> = formats::read_ndjson(&paths.graphs)?;
        if folds.len() != cfg.folds {
            return Err(PcrError::config(
                "folds",
                format!("corpus was split into {} folds; rerun preprocess", folds.len()),
            ));
        }
        Ok(Dataset {
            corpus,
            vocab,
            folds,
            graphs: graphs.into_iter().map(|g| (g.id, g.pdg)).collect(),
        })
    }

    pub fn inputs(cfg: &PipelineConfig) -> Vec<PathBuf> {
        let p = Paths::new(cfg);
        vec![p.corpus, p.tags, p.folds, p.graphs]
    }

    fn split(&self, fold: usize, which: EvalSplit) -> Vec<usize> {
        let f = &self.folds[fold];
        match which {
            EvalSplit::Train => f.train.clone(),
            EvalSplit::Validation => f.validation.clone(),
            EvalSplit::Test => f.test.clone(),
            EvalSplit::All => (0..self.corpus.len()).collect(),
        }
    }
}

fn load_gate_vocab(cfg: &PipelineConfig) -> Result<Option<BTreeSet<String>>> {
    if !cfg.knowledge_oov_gate {
        return Ok(None);
    }
    let Some(path) = &cfg.vocab_file else {
        log::info!("no backend vocabulary file; knowledge terms are not gated");
        return Ok(None);
    };
    let reader = formats::open(path)?;
    let mut set = BTreeSet::new();
    for line in reader.lines() {
        let line = line.map_err(|e| PcrError::io(path, e))?;
        let t = line.trim();
        if !t.is_empty() {
            set.insert(t.to_lowercase());
        }
    }
    Ok(Some(set))
}

/// Shared knowledge and prompt settings of a run.
pub struct PromptBuilder<'a> {
    template: Vec<String>,
    limits: PromptLimits,
    kb: Option<&'a KnowledgeBase>,
    filter: TermFilter<'a>,
    embedding_dim: usize,
    code_len: usize,
}

impl<'a> PromptBuilder<'a> {
    pub fn new(
        cfg: &PipelineConfig,
        kb: Option<&'a KnowledgeBase>,
        gate: Option<&'a BTreeSet<String>>,
        vocab: &TagVocabulary,
    ) -> Result<Self> {
        let mut filter = TermFilter::new(gate);
        if cfg.knowledge_tag_seed {
            filter = filter.seed_tags(vocab);
        }
        Ok(PromptBuilder {
            template: build_template(cfg.tag_masks)?,
            limits: PromptLimits {
                max_len: cfg.max_len,
                prefix_len: cfg.prefix_len,
            },
            kb,
            filter,
            embedding_dim: cfg.embedding_dim,
            code_len: cfg.code_len,
        })
    }

    pub fn build(&self, req: &ReviewRequest, pdg: Option<&DepGraph>) -> Result<(PromptInstance, CodeGraphEmbedding)> {
        let terms = match self.kb {
            Some(kb) => extract_terms(req, kb, &self.filter),
            None => Vec::new(),
        };
        let prefix = render_knowledge_prefix(&terms, self.limits.prefix_len)?;
        let owned;
        let pdg = match pdg {
            Some(g) => g,
            None => {
                owned = request_graph(req, self.code_len).pdg;
                &owned
            }
        };
        let code = encode_code_graph(pdg, self.embedding_dim);
        let instance = assemble_prompt(req, &self.template, &prefix, code.provenance, self.limits)?;
        Ok((instance, code))
    }
}

fn load_knowledge(cfg: &PipelineConfig) -> Result<Option<KnowledgeBase>> {
    match &cfg.knowledge {
        Some(path) => {
            let (kb, issues) = formats::load_knowledge(formats::open(path)?)?;
            log::info!("knowledge: {} entries, {} lines skipped", kb.len(), issues.len());
            Ok(Some(kb))
        }
        None => {
            log::info!("no knowledge file; prefixes start from padding");
            Ok(None)
        }
    }
}

fn verbalizer_token(cfg: &PipelineConfig, label: Necessity) -> Result<&str> {
    cfg.verbalizer
        .iter()
        .find(|(_, &l)| l == label)
        .map(|(t, _)| t.as_str())
        .ok_or_else(|| PcrError::config("verbalizer", format!("no token for {label:?}")))
}

/// Gold tokens for one tag of a request: the tag's words over the tag
/// masks (padded), then the necessity token.
pub fn gold_tokens(cfg: &PipelineConfig, vocab: &TagVocabulary, tag: &str, necessity: Necessity) -> Result<Vec<String>> {
    let entry = vocab
        .get(tag)
        .ok_or_else(|| PcrError::Other(format!("tag {tag:?} missing from the vocabulary")))?;
    let mut gold: Vec<String> = entry.words.iter().take(cfg.tag_masks).cloned().collect();
    gold.resize(cfg.tag_masks, PAD.into());
    gold.push(verbalizer_token(cfg, necessity)?.into());
    Ok(gold)
}

/// Builds a vocabulary and trains a fresh model on `indices`, one example
/// per (request, tag) pair.
pub fn fit(
    cfg: &PipelineConfig,
    data: &Dataset,
    builder: &PromptBuilder<'_>,
    indices: &[usize],
) -> Result<(ModelState, TrainReport)> {
    let prompts = indices
        .par_iter()
        .map(|&i| {
            let req = &data.corpus[i];
            builder.build(req, data.graphs.get(&req.id)).map(|p| (req, p))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut tokens: BTreeSet<String> = BTreeSet::new();
    for (_, (inst, _)) in &prompts {
        tokens.extend(inst.tokens().filter(|t| *t != CODE).map(String::from));
    }
    for (_, e) in data.vocab.iter() {
        tokens.extend(e.words.iter().cloned());
    }
    tokens.extend(cfg.verbalizer.keys().cloned());
    let mut state = ModelState::new(
        Vocabulary::new(tokens),
        ModelConfig {
            embedding_dim: cfg.embedding_dim,
            prefix_len: cfg.prefix_len,
            mask_slots: cfg.tag_masks + 1,
            seed: cfg.seed,
        },
    )?;
    let mut examples: Vec<TrainingExample> = Vec::new();
    for (req, (inst, code)) in &prompts {
        let x = state.encode(inst, code)?;
        for tag in &req.tags {
            let gold = gold_tokens(cfg, &data.vocab, tag, req.necessity)?;
            examples.push(state.example(x.clone(), &gold)?);
        }
    }
    let report = train(
        &mut state,
        &examples,
        TrainConfig {
            learning_rate: cfg.learning_rate,
            epochs: cfg.epochs,
            batch_size: cfg.batch_size,
            seed: cfg.seed,
            weight_decay: cfg.weight_decay,
        },
    )?;
    log::info!(
        "train: {} examples, {} steps, final loss {:.4}",
        examples.len(),
        report.steps,
        report.epoch_losses.last().copied().unwrap_or(f64::NAN)
    );
    Ok((state, report))
}

/// Trains on the configured fold and writes the checkpoint.
pub fn train_stage(cfg: &PipelineConfig) -> Result<Option<TrainReport>> {
    if let Backend::Remote(url) = &cfg.backend {
        log::info!("train: backend {url} is external; nothing to train");
        return Ok(None);
    }
    let paths = Paths::new(cfg);
    let data = Dataset::load(cfg)?;
    let kb = load_knowledge(cfg)?;
    let gate = load_gate_vocab(cfg)?;
    let builder = PromptBuilder::new(cfg, kb.as_ref(), gate.as_ref(), &data.vocab)?;
    let (state, report) = fit(cfg, &data, &builder, &data.folds[cfg.fold].train)?;
    formats::write_json(&paths.model, &state)?;
    formats::write_json(&paths.train_report, &report)?;
    manifest("train", cfg, &Dataset::inputs(cfg), &[paths.model, paths.train_report])?;
    Ok(Some(report))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictedTag {
    pub label: String,
    pub method: Method,
    pub distance: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: u64,
    pub predicted_tags: Vec<PredictedTag>,
    pub necessity: Necessity,
    pub necessity_method: Method,
}

/// Predicts and maps labels for the requests at `indices`.
pub fn predict_requests<B>(
    cfg: &PipelineConfig,
    data: &Dataset,
    builder: &PromptBuilder<'_>,
    backend: &B,
    top_k: usize,
    indices: &[usize],
) -> Result<Vec<PredictionRecord>>
where
    B: MaskFillBackend + Sync,
    PcrError: From<B::Error>,
{
    let k = cfg.ks.iter().copied().max().unwrap_or(1);
    indices
        .par_iter()
        .map(|&i| {
            let req = &data.corpus[i];
            let (inst, code) = builder.build(req, data.graphs.get(&req.id))?;
            let preds = backend.predict(&inst, &code, top_k)?;
            if preds.len() != inst.mask_positions.len() {
                return Err(PcrError::Other(format!(
                    "backend returned {} predictions for {} masks",
                    preds.len(),
                    inst.mask_positions.len()
                )));
            }
            let tags = map_tag_predictions(&preds[..inst.tag_mask_count], &data.vocab, k)?;
            let necessity = decide_necessity(&preds[inst.tag_mask_count], &cfg.verbalizer)?;
            Ok(PredictionRecord {
                id: req.id,
                predicted_tags: tags
                    .into_iter()
                    .map(|m| PredictedTag {
                        label: m.label,
                        method: m.method,
                        distance: m.distance,
                        score: m.score,
                    })
                    .collect(),
                necessity: necessity.label,
                necessity_method: necessity.method,
            })
        })
        .collect()
}

pub fn predict_stage(cfg: &PipelineConfig) -> Result<usize> {
    let paths = Paths::new(cfg);
    let data = Dataset::load(cfg)?;
    let kb = load_knowledge(cfg)?;
    let gate = load_gate_vocab(cfg)?;
    let builder = PromptBuilder::new(cfg, kb.as_ref(), gate.as_ref(), &data.vocab)?;
    let indices = data.split(cfg.fold, cfg.eval_split);
    let mut inputs = Dataset::inputs(cfg);
    let records = match &cfg.backend {
        Backend::Builtin => {
            let state: ModelState = formats::read_json(&paths.model)?;
            inputs.push(paths.model.clone());
            let top_k = cfg.top_k.min(state.vocab.len());
            predict_requests(cfg, &data, &builder, &state, top_k, &indices)?
        }
        Backend::Remote(url) => {
            let backend = RemoteBackend::new(RemoteConfig {
                attempts: cfg.remote_attempts,
                timeout: Duration::from_secs(cfg.remote_timeout_secs),
                ..RemoteConfig::new(url.clone())
            });
            predict_requests(cfg, &data, &builder, &backend, cfg.top_k, &indices)?
        }
    };
    formats::write_ndjson(&paths.predictions, &records)?;
    log::info!("predict: {} requests", records.len());
    manifest("predict", cfg, &inputs, std::slice::from_ref(&paths.predictions))?;
    Ok(records.len())
}

/// Pairs predictions with the gold labels of their requests.
pub fn eval_items(corpus: &[ReviewRequest], records: &[PredictionRecord]) -> Result<Vec<EvalItem>> {
    let by_id: BTreeMap<u64, &ReviewRequest> = corpus.iter().map(|r| (r.id, r)).collect();
    records
        .iter()
        .map(|p| {
            let req = by_id
                .get(&p.id)
                .ok_or_else(|| PcrError::Other(format!("prediction for unknown request {}", p.id)))?;
            Ok(EvalItem {
                true_tags: req.tags.iter().cloned().collect(),
                predicted_tags: p.predicted_tags.iter().map(|t| t.label.clone()).collect(),
                gold_necessity: req.necessity,
                predicted_necessity: p.necessity,
            })
        })
        .collect()
}

pub fn evaluate_stage(cfg: &PipelineConfig) -> Result<MetricsReport> {
    let paths = Paths::new(cfg);
    let records: Vec<PredictionRecord> = formats::read_ndjson(&paths.predictions)?;
    let corpus: Vec<ReviewRequest> = formats::read_ndjson(&paths.corpus)?;
    let items = eval_items(&corpus, &records)?;
    let report = evaluate(&items, &cfg.ks, cfg.recall_mode, Some(cfg.fold))?;
    formats::write_json(&paths.report, &report)?;
    let table = render_table(&[(format!("fold {}", cfg.fold), &report)]);
    std::fs::write(&paths.report_table, &table).map_err(|e| PcrError::io(&paths.report_table, e))?;
    log::info!("evaluate: accuracy {:.3} over {} requests", report.accuracy, report.n_requests);
    manifest(
        "evaluate",
        cfg,
        &[paths.predictions, paths.corpus],
        &[paths.report, paths.report_table],
    )?;
    Ok(report)
}

/// Train, predict and evaluate on every fold; writes per-fold reports and
/// their mean. Completed folds are written even when a later one fails.
pub fn cross_validate_stage(cfg: &PipelineConfig) -> Result<CrossValidation> {
    let paths = Paths::new(cfg);
    let data = Dataset::load(cfg)?;
    let kb = load_knowledge(cfg)?;
    let gate = load_gate_vocab(cfg)?;
    let builder = PromptBuilder::new(cfg, kb.as_ref(), gate.as_ref(), &data.vocab)?;
    let remote = match &cfg.backend {
        Backend::Remote(url) => Some(RemoteBackend::new(RemoteConfig {
            attempts: cfg.remote_attempts,
            timeout: Duration::from_secs(cfg.remote_timeout_secs),
            ..RemoteConfig::new(url.clone())
        })),
        Backend::Builtin => None,
    };
    let result = cross_validate(&data.folds, |i, fold| -> Result<MetricsReport> {
        log::info!("cross-validation fold {i}");
        let records = match &remote {
            Some(backend) => predict_requests(cfg, &data, &builder, backend, cfg.top_k, &fold.test)?,
            None => {
                let (state, _) = fit(cfg, &data, &builder, &fold.train)?;
                let top_k = cfg.top_k.min(state.vocab.len());
                predict_requests(cfg, &data, &builder, &state, top_k, &fold.test)?
            }
        };
        let items = eval_items(&data.corpus, &records)?;
        Ok(evaluate(&items, &cfg.ks, cfg.recall_mode, Some(i))?)
    });
    let (cv, failure) = match result {
        Ok(cv) => (Some(cv), None),
        Err(f) => {
            formats::write_json(&paths.cv_report, &serde_json::json!({ "folds": f.completed, "failed_fold": f.fold }))?;
            (None, Some(PcrError::Other(format!("fold {}: {}", f.fold, f.error))))
        }
    };
    if let Some(e) = failure {
        return Err(e);
    }
    let cv = cv.expect("set when no failure");
    formats::write_json(&paths.cv_report, &cv)?;
    let mut rows: Vec<(String, &MetricsReport)> = cv.folds.iter().map(|r| (format!("fold {}", r.fold_id.unwrap_or(0)), r)).collect();
    rows.push(("mean".into(), &cv.mean));
    let table = render_table(&rows);
    std::fs::write(&paths.cv_table, &table).map_err(|e| PcrError::io(&paths.cv_table, e))?;
    manifest("cross_validate", cfg, &Dataset::inputs(cfg), &[paths.cv_report, paths.cv_table])?;
    Ok(cv)
}
