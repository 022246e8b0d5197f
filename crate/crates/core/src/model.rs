//! Built-in mask-fill model.
//!
//! A single layer: the hidden state for mask slot `j` is the mean of the
//! context token embeddings, the prefix rows and the projected code-graph
//! vector, plus a per-slot query vector. Output logits are `Wᵀh`. Prefix
//! row `i` is the embedding of the `i`-th knowledge token (zero for
//! padding) plus a trainable offset `P[i]`, so the prefix starts from the
//! knowledge text. The code projection is frozen.
//!
//! The training loss is the summed cross-entropy over all mask slots.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::codegraph::{DepGraph, EdgeKind};
use crate::hash::Fnv1a;
use crate::prompt::{PromptInstance, SegmentKind};
use crate::text::{MASK, PAD, SPECIAL_TOKENS, UNK};
use crate::{Error, Result};

pub const CHECKPOINT_SCHEMA: u32 = 1;
pub const DEFAULT_EMBEDDING_DIM: usize = 64;

/// Token list with specials first and every other token in sorted order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl From<Vec<String>> for Vocabulary {
    fn from(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocabulary { tokens, index }
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}

impl Vocabulary {
    pub fn new<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let rest: BTreeSet<String> = tokens
            .into_iter()
            .map(Into::into)
            .filter(|t| !SPECIAL_TOKENS.contains(&t.as_str()))
            .collect();
        let all: Vec<String> = SPECIAL_TOKENS.iter().map(|s| String::from(*s)).chain(rest).collect();
        all.into()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Id of `token`, or of `[UNK]` when it is unknown.
    pub fn id_or_unk(&self, token: &str) -> usize {
        self.id(token).or_else(|| self.id(UNK)).unwrap_or(0)
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn to_set(&self) -> BTreeSet<String> {
        self.tokens.iter().cloned().collect()
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    fn uniform(rows: usize, cols: usize, scale: f64, rng: &mut ChaCha8Rng) -> Self {
        let data = (0..rows * cols).map(|_| (rng.random::<f64>() - 0.5) * 2.0 * scale).collect();
        Matrix { rows, cols, data }
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Parameter groups of [`ModelState`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamId {
    TokenEmbeddings,
    KnowledgePrefix,
    SlotQueries,
    OutputWeights,
    CodeProjection,
}

impl ParamId {
    pub const ALL: [ParamId; 5] = [
        ParamId::TokenEmbeddings,
        ParamId::KnowledgePrefix,
        ParamId::SlotQueries,
        ParamId::OutputWeights,
        ParamId::CodeProjection,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    pub embedding_dim: usize,
    pub prefix_len: usize,
    /// Mask positions per instance: tag masks plus the necessity mask.
    pub mask_slots: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub schema_version: u32,
    pub embedding_dim: usize,
    pub prefix_len: usize,
    pub mask_slots: usize,
    pub rng_seed: u64,
    pub vocab: Vocabulary,
    /// `|V| × dim`
    pub token_embeddings: Matrix,
    /// `prefix_len × dim`, added to the knowledge token embeddings.
    pub prefix_matrix: Matrix,
    /// `mask_slots × dim`
    pub slot_queries: Matrix,
    /// `dim × |V|`
    pub output_weights: Matrix,
    /// `dim × dim`
    pub code_projection: Matrix,
    pub frozen_registry: BTreeSet<ParamId>,
}

impl ModelState {
    /// Seeded initial state. Output weights start at zero, so every
    /// prediction of a fresh state is exactly uniform.
    pub fn new(vocab: Vocabulary, config: ModelConfig) -> Result<Self> {
        if config.embedding_dim == 0 {
            return Err(Error::invalid("embedding_dim", "must be positive"));
        }
        if config.mask_slots == 0 {
            return Err(Error::invalid("mask_slots", "must be positive"));
        }
        if vocab.id(PAD).is_none() || vocab.id(UNK).is_none() {
            return Err(Error::invalid("vocab", "missing special tokens"));
        }
        let d = config.embedding_dim;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let token_embeddings = Matrix::uniform(vocab.len(), d, 0.5, &mut rng);
        let slot_queries = Matrix::uniform(config.mask_slots, d, 0.5, &mut rng);
        Ok(ModelState {
            schema_version: CHECKPOINT_SCHEMA,
            embedding_dim: d,
            prefix_len: config.prefix_len,
            mask_slots: config.mask_slots,
            rng_seed: config.seed,
            output_weights: Matrix::zeros(d, vocab.len()),
            vocab,
            token_embeddings,
            prefix_matrix: Matrix::zeros(config.prefix_len, d),
            slot_queries,
            code_projection: Matrix::identity(d),
            frozen_registry: BTreeSet::from([ParamId::CodeProjection]),
        })
    }

    pub fn is_trainable(&self, id: ParamId) -> bool {
        !self.frozen_registry.contains(&id)
    }

    pub fn param(&self, id: ParamId) -> &Matrix {
        match id {
            ParamId::TokenEmbeddings => &self.token_embeddings,
            ParamId::KnowledgePrefix => &self.prefix_matrix,
            ParamId::SlotQueries => &self.slot_queries,
            ParamId::OutputWeights => &self.output_weights,
            ParamId::CodeProjection => &self.code_projection,
        }
    }

    pub fn param_mut(&mut self, id: ParamId) -> &mut Matrix {
        match id {
            ParamId::TokenEmbeddings => &mut self.token_embeddings,
            ParamId::KnowledgePrefix => &mut self.prefix_matrix,
            ParamId::SlotQueries => &mut self.slot_queries,
            ParamId::OutputWeights => &mut self.output_weights,
            ParamId::CodeProjection => &mut self.code_projection,
        }
    }

    /// Maps an instance onto vocabulary ids.
    pub fn encode(&self, instance: &PromptInstance, code: &CodeGraphEmbedding) -> Result<EncodedPrompt> {
        if code.vector.len() != self.embedding_dim {
            return Err(Error::LengthMismatch {
                left: code.vector.len(),
                right: self.embedding_dim,
            });
        }
        if instance.mask_positions.len() != self.mask_slots {
            return Err(Error::LengthMismatch {
                left: instance.mask_positions.len(),
                right: self.mask_slots,
            });
        }
        let mut context = Vec::new();
        let mut prefix = Vec::new();
        for s in &instance.segments {
            match s.kind {
                SegmentKind::KnowledgePrefix => {
                    prefix = s
                        .tokens
                        .iter()
                        .map(|t| (t != PAD).then(|| self.vocab.id_or_unk(t)))
                        .collect();
                }
                SegmentKind::CodeGraph => {}
                _ => context.extend(
                    s.tokens
                        .iter()
                        .filter(|t| *t != MASK && *t != PAD)
                        .map(|t| self.vocab.id_or_unk(t)),
                ),
            }
        }
        if prefix.len() != self.prefix_len {
            return Err(Error::LengthMismatch {
                left: prefix.len(),
                right: self.prefix_len,
            });
        }
        Ok(EncodedPrompt {
            context,
            prefix,
            code: code.vector.clone(),
            masks: instance.mask_positions.clone(),
        })
    }

    /// Pairs an encoded prompt with its gold token per mask slot.
    pub fn example<S: AsRef<str>>(&self, input: EncodedPrompt, gold: &[S]) -> Result<TrainingExample> {
        if gold.len() != input.masks.len() {
            return Err(Error::LengthMismatch {
                left: gold.len(),
                right: input.masks.len(),
            });
        }
        let gold = gold
            .iter()
            .map(|g| {
                self.vocab.id(g.as_ref()).ok_or_else(|| Error::UnknownToken {
                    token: g.as_ref().into(),
                })
            })
            .collect::<Result<_>>()?;
        Ok(TrainingExample { input, gold })
    }

    fn input_count(&self, x: &EncodedPrompt) -> f64 {
        (x.context.len() + self.prefix_len + 1) as f64
    }

    /// Mean of the input vectors shared by every mask slot.
    fn pooled(&self, x: &EncodedPrompt) -> Vec<f64> {
        let d = self.embedding_dim;
        let mut h = vec![0.0; d];
        for &t in &x.context {
            axpy(1.0, self.token_embeddings.row(t), &mut h);
        }
        for (i, tok) in x.prefix.iter().enumerate() {
            if let Some(t) = tok {
                axpy(1.0, self.token_embeddings.row(*t), &mut h);
            }
            axpy(1.0, self.prefix_matrix.row(i), &mut h);
        }
        for (r, hr) in h.iter_mut().enumerate() {
            let g: f64 = self.code_projection.row(r).iter().zip(&x.code).map(|(a, b)| a * b).sum();
            *hr += g;
        }
        let n = self.input_count(x);
        h.iter_mut().for_each(|v| *v /= n);
        h
    }

    fn slot_hidden(&self, pooled: &[f64], slot: usize) -> Vec<f64> {
        let mut h = pooled.to_vec();
        axpy(1.0, self.slot_queries.row(slot), &mut h);
        h
    }

    fn probabilities(&self, h: &[f64]) -> Vec<f64> {
        let mut z = vec![0.0; self.vocab.len()];
        for (k, &hk) in h.iter().enumerate() {
            if hk != 0.0 {
                axpy(hk, self.output_weights.row(k), &mut z);
            }
        }
        softmax(&mut z);
        z
    }

    /// Full softmax distribution at every mask slot.
    pub fn distributions(&self, x: &EncodedPrompt) -> Vec<Vec<f64>> {
        let pooled = self.pooled(x);
        (0..x.masks.len())
            .map(|j| self.probabilities(&self.slot_hidden(&pooled, j)))
            .collect()
    }

    /// Top-`top_k` tokens per mask slot; ties go to the lower vocabulary id.
    pub fn predict_masks(&self, x: &EncodedPrompt, top_k: usize) -> Result<Vec<MaskPrediction>> {
        if top_k == 0 || top_k > self.vocab.len() {
            return Err(Error::invalid("top_k", alloc::format!("must be in 1..={}", self.vocab.len())));
        }
        Ok(self
            .distributions(x)
            .into_iter()
            .zip(&x.masks)
            .map(|(p, &position)| {
                let mut ids: Vec<usize> = (0..p.len()).collect();
                ids.sort_by(|&a, &b| p[b].total_cmp(&p[a]).then(a.cmp(&b)));
                MaskPrediction {
                    position,
                    candidates: ids[..top_k]
                        .iter()
                        .map(|&i| Candidate {
                            token: self.vocab.token(i).into(),
                            score: p[i],
                        })
                        .collect(),
                }
            })
            .collect())
    }

    /// Summed cross-entropy over the mask slots.
    pub fn loss(&self, ex: &TrainingExample) -> f64 {
        self.distributions(&ex.input)
            .iter()
            .zip(&ex.gold)
            .map(|(p, &g)| -libm::log(p[g]))
            .sum()
    }

    /// Adds the gradient of [`Self::loss`] to `grads` and returns the loss.
    pub fn accumulate_gradients(&self, ex: &TrainingExample, grads: &mut Gradients) -> f64 {
        let x = &ex.input;
        let d = self.embedding_dim;
        let pooled = self.pooled(x);
        let mut d_pooled = vec![0.0; d];
        let mut loss = 0.0;
        for (j, &gold) in ex.gold.iter().enumerate() {
            let h = self.slot_hidden(&pooled, j);
            let mut dz = self.probabilities(&h);
            loss -= libm::log(dz[gold]);
            dz[gold] -= 1.0;
            let mut dh = vec![0.0; d];
            for k in 0..d {
                let w = self.output_weights.row(k);
                dh[k] = w.iter().zip(&dz).map(|(a, b)| a * b).sum();
                axpy(h[k], &dz, grads.output_weights.row_mut(k));
            }
            axpy(1.0, &dh, grads.slot_queries.row_mut(j));
            axpy(1.0, &dh, &mut d_pooled);
        }
        let scale = 1.0 / self.input_count(x);
        for &t in &x.context {
            axpy(scale, &d_pooled, grads.token_embeddings.row_mut(t));
        }
        for (i, tok) in x.prefix.iter().enumerate() {
            if let Some(t) = tok {
                axpy(scale, &d_pooled, grads.token_embeddings.row_mut(*t));
            }
            axpy(scale, &d_pooled, grads.prefix_matrix.row_mut(i));
        }
        loss
    }

    pub fn gradients(&self, ex: &TrainingExample) -> (f64, Gradients) {
        let mut g = Gradients::zeros_like(self);
        let loss = self.accumulate_gradients(ex, &mut g);
        (loss, g)
    }
}

fn softmax(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = libm::exp(*v - max);
        sum += *v;
    }
    z.iter_mut().for_each(|v| *v /= sum);
}

/// Vocabulary ids of one prompt as seen by the built-in model.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedPrompt {
    pub context: Vec<usize>,
    /// One entry per prefix slot; `None` for padding.
    pub prefix: Vec<Option<usize>>,
    pub code: Vec<f64>,
    pub masks: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub input: EncodedPrompt,
    pub gold: Vec<usize>,
}

/// Gradients of the trainable parameter groups. The frozen code
/// projection has none.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub token_embeddings: Matrix,
    pub prefix_matrix: Matrix,
    pub slot_queries: Matrix,
    pub output_weights: Matrix,
}

impl Gradients {
    pub fn zeros_like(state: &ModelState) -> Self {
        let z = |m: &Matrix| Matrix::zeros(m.rows, m.cols);
        Gradients {
            token_embeddings: z(&state.token_embeddings),
            prefix_matrix: z(&state.prefix_matrix),
            slot_queries: z(&state.slot_queries),
            output_weights: z(&state.output_weights),
        }
    }

    pub fn get(&self, id: ParamId) -> Option<&Matrix> {
        match id {
            ParamId::TokenEmbeddings => Some(&self.token_embeddings),
            ParamId::KnowledgePrefix => Some(&self.prefix_matrix),
            ParamId::SlotQueries => Some(&self.slot_queries),
            ParamId::OutputWeights => Some(&self.output_weights),
            ParamId::CodeProjection => None,
        }
    }

    fn get_mut(&mut self, id: ParamId) -> Option<&mut Matrix> {
        match id {
            ParamId::TokenEmbeddings => Some(&mut self.token_embeddings),
            ParamId::KnowledgePrefix => Some(&mut self.prefix_matrix),
            ParamId::SlotQueries => Some(&mut self.slot_queries),
            ParamId::OutputWeights => Some(&mut self.output_weights),
            ParamId::CodeProjection => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub weight_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-5,
            epochs: 6,
            batch_size: 4,
            seed: 0,
            weight_decay: 0.0,
        }
    }
}

/// AdamW over the trainable parameter groups.
#[derive(Debug, Clone)]
pub struct Trainer {
    config: TrainConfig,
    step: i32,
    moments: BTreeMap<ParamId, (Vec<f64>, Vec<f64>)>,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPSILON: f64 = 1e-8;

impl Trainer {
    pub fn new(config: TrainConfig) -> Self {
        Trainer {
            config,
            step: 0,
            moments: BTreeMap::new(),
        }
    }

    pub fn steps(&self) -> usize {
        self.step as usize
    }

    /// One update on the mean gradient of `batch`; returns the mean loss.
    pub fn step(&mut self, state: &mut ModelState, batch: &[&TrainingExample]) -> f64 {
        if batch.is_empty() {
            return 0.0;
        }
        let mut grads = Gradients::zeros_like(state);
        let loss: f64 = batch.iter().map(|ex| state.accumulate_gradients(ex, &mut grads)).sum();
        let inv = 1.0 / batch.len() as f64;
        self.step += 1;
        let lr = self.config.learning_rate;
        let wd = self.config.weight_decay;
        let c1 = 1.0 - libm::pow(BETA1, self.step as f64);
        let c2 = 1.0 - libm::pow(BETA2, self.step as f64);
        for id in ParamId::ALL {
            if !state.is_trainable(id) {
                continue;
            }
            let Some(g) = grads.get_mut(id) else { continue };
            let p = state.param_mut(id);
            let (m, v) = self
                .moments
                .entry(id)
                .or_insert_with(|| (vec![0.0; p.data.len()], vec![0.0; p.data.len()]));
            for i in 0..p.data.len() {
                let gi = g.data[i] * inv;
                m[i] = BETA1 * m[i] + (1.0 - BETA1) * gi;
                v[i] = BETA2 * v[i] + (1.0 - BETA2) * gi * gi;
                if m[i] == 0.0 && wd == 0.0 {
                    continue;
                }
                let update = (m[i] / c1) / (libm::sqrt(v[i] / c2) + EPSILON);
                p.data[i] -= lr * (update + wd * p.data[i]);
            }
        }
        loss * inv
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean per-example loss of each epoch.
    pub epoch_losses: Vec<f64>,
    pub steps: usize,
}

/// Shuffled mini-batch training; deterministic for a fixed seed.
pub fn train(state: &mut ModelState, examples: &[TrainingExample], config: TrainConfig) -> Result<TrainReport> {
    if config.batch_size == 0 {
        return Err(Error::invalid("batch_size", "must be positive"));
    }
    if config.learning_rate.is_nan() || config.learning_rate <= 0.0 {
        return Err(Error::invalid("learning_rate", "must be positive"));
    }
    let mut trainer = Trainer::new(config);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&TrainingExample> = chunk.iter().map(|&i| &examples[i]).collect();
            total += trainer.step(state, &batch) * batch.len() as f64;
        }
        let mean = if examples.is_empty() { 0.0 } else { total / examples.len() as f64 };
        log::debug!("epoch {} loss {mean:.6}", epoch_losses.len() + 1);
        epoch_losses.push(mean);
    }
    Ok(TrainReport {
        epoch_losses,
        steps: trainer.steps(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub token: String,
    pub score: f64,
}

/// Ranked candidates for one mask position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskPrediction {
    pub position: usize,
    pub candidates: Vec<Candidate>,
}

impl MaskPrediction {
    pub fn score_of(&self, token: &str) -> Option<f64> {
        self.candidates.iter().find(|c| c.token == token).map(|c| c.score)
    }
}

/// Frozen feature vector standing in for an encoded code graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeGraphEmbedding {
    pub vector: Vec<f64>,
    /// Content hash of the source graph.
    pub provenance: u64,
    pub frozen: bool,
}

/// Hashed bag of node `(kind, label)` and edge `(kind, src label, dst
/// label)` features, L2-normalized. Each feature hashes with FNV-1a; the
/// low bits pick a coordinate and bit 63 picks the sign.
pub fn encode_code_graph(pdg: &DepGraph, dim: usize) -> CodeGraphEmbedding {
    let mut vector = vec![0.0; dim];
    let mut add = |h: u64| {
        if dim > 0 {
            let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
            vector[(h % dim as u64) as usize] += sign;
        }
    };
    for n in &pdg.nodes {
        let mut h = Fnv1a::new();
        h.write_str("node");
        h.write_str(&alloc::format!("{}", n.kind));
        h.write_str(&n.label);
        add(h.finish());
    }
    let label = |id| pdg.node(id).map(|n| n.label.as_str()).unwrap_or("");
    for e in &pdg.edges {
        let mut h = Fnv1a::new();
        h.write_str("edge");
        h.write_str(match e.kind {
            EdgeKind::Data => "Data",
            EdgeKind::Control => "Control",
        });
        h.write_str(label(e.src));
        h.write_str(label(e.dst));
        add(h.finish());
    }
    let norm = libm::sqrt(vector.iter().map(|v| v * v).sum());
    if norm > 0.0 {
        vector.iter_mut().for_each(|v| *v /= norm);
    }
    CodeGraphEmbedding {
        vector,
        provenance: pdg.content_hash(),
        frozen: true,
    }
}

/// Anything that fills mask positions with ranked tokens.
pub trait MaskFillBackend {
    type Error;

    fn predict(
        &self,
        instance: &PromptInstance,
        code: &CodeGraphEmbedding,
        top_k: usize,
    ) -> core::result::Result<Vec<MaskPrediction>, Self::Error>;
}

impl MaskFillBackend for ModelState {
    type Error = Error;

    fn predict(&self, instance: &PromptInstance, code: &CodeGraphEmbedding, top_k: usize) -> Result<Vec<MaskPrediction>> {
        let x = self.encode(instance, code)?;
        self.predict_masks(&x, top_k)
    }
}
