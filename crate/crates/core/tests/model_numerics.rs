use pcr_core::codegraph::{build_graphs, CodeSnippet};
use pcr_core::dataset::{Necessity, ReviewRequest};
use pcr_core::knowledge::KnowledgePrefix;
use pcr_core::model::{
    encode_code_graph, train, ModelConfig, ModelState, ParamId, TrainConfig, Trainer, TrainingExample, Vocabulary,
};
use pcr_core::prompt::{assemble_prompt, build_template, PromptLimits};
use pcr_core::text::PAD;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DIM: usize = 16;

fn fixture(seed: u64) -> (ModelState, TrainingExample) {
    let req = ReviewRequest {
        id: 1,
        title: "Sum a list quickly".into(),
        text: "my loop adds numbers".into(),
        code_snippets: vec!["total = 0\nfor x in xs:\n    total += x".into()],
        tags: vec!["python".into()],
        score: 5,
        necessity: Necessity::Necessary,
    };
    let prefix = KnowledgePrefix {
        tokens: vec!["loop".into(), ":".into(), "repeats".into(), "code".into()],
        uninitialized_tail: true,
    };
    let limits = PromptLimits { max_len: 120, prefix_len: 8 };
    let (_, _, pdg) = build_graphs(&CodeSnippet::new(&req.code_snippets[0], 150));
    let code = encode_code_graph(&pdg, DIM);
    let inst = assemble_prompt(&req, &build_template(3).unwrap(), &prefix, code.provenance, limits).unwrap();
    let mut tokens: Vec<String> = inst.tokens().map(String::from).collect();
    tokens.extend(["python", "yes", "no"].map(String::from));
    let state = ModelState::new(
        Vocabulary::new(tokens),
        ModelConfig { embedding_dim: DIM, prefix_len: 8, mask_slots: 4, seed },
    )
    .unwrap();
    let x = state.encode(&inst, &code).unwrap();
    let ex = state.example(x, &["python", PAD, PAD, "yes"]).unwrap();
    (state, ex)
}

fn randomize_outputs(state: &mut ModelState, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for v in &mut state.param_mut(ParamId::OutputWeights).data {
        *v = rng.random_range(-0.5..0.5);
    }
    for v in &mut state.param_mut(ParamId::KnowledgePrefix).data {
        *v = rng.random_range(-0.1..0.1);
    }
}

#[test]
fn fresh_state_is_uniform() {
    let (state, ex) = fixture(3);
    for p in state.distributions(&ex.input) {
        let u = 1.0 / p.len() as f64;
        assert!(p.iter().all(|&v| (v - u).abs() < 1e-15));
    }
}

#[test]
fn gradients_match_central_differences() {
    let (mut state, ex) = fixture(7);
    randomize_outputs(&mut state, 11);
    let (_, grads) = state.gradients(&ex);
    assert!(grads.get(ParamId::CodeProjection).is_none());
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let groups = [ParamId::TokenEmbeddings, ParamId::KnowledgePrefix, ParamId::SlotQueries, ParamId::OutputWeights];
    let h = 1e-5;
    let mut checked = 0;
    while checked < 40 {
        let id = groups[rng.random_range(0..groups.len())];
        let m = state.param(id);
        let row = match id {
            ParamId::TokenEmbeddings => ex.input.context[rng.random_range(0..ex.input.context.len())],
            _ => rng.random_range(0..m.rows),
        };
        let idx = row * m.cols + rng.random_range(0..m.cols);
        let analytic = grads.get(id).unwrap().data[idx];
        let orig = state.param(id).data[idx];
        state.param_mut(id).data[idx] = orig + h;
        let up = state.loss(&ex);
        state.param_mut(id).data[idx] = orig - h;
        let down = state.loss(&ex);
        state.param_mut(id).data[idx] = orig;
        let numeric = (up - down) / (2.0 * h);
        let scale = analytic.abs().max(numeric.abs());
        if scale < 1e-6 {
            continue;
        }
        let rel = (analytic - numeric).abs() / scale;
        assert!(rel <= 1e-4, "{id:?}[{idx}]: analytic {analytic} numeric {numeric} rel {rel}");
        checked += 1;
    }
}

#[test]
fn softmax_sums_to_one() {
    let (mut state, ex) = fixture(1);
    randomize_outputs(&mut state, 2);
    for p in state.distributions(&ex.input) {
        assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-6);
        assert!(p.iter().all(|v| *v >= 0.0));
    }
}

#[test]
fn frozen_projection_untouched_and_prefix_learns() {
    let (mut state, ex) = fixture(4);
    let frozen = state.param(ParamId::CodeProjection).clone();
    let prefix = state.param(ParamId::KnowledgePrefix).clone();
    let mut trainer = Trainer::new(TrainConfig { learning_rate: 0.01, ..TrainConfig::default() });
    for _ in 0..100 {
        trainer.step(&mut state, &[&ex]);
    }
    let after = state.param(ParamId::CodeProjection);
    assert!(frozen.data.iter().zip(&after.data).all(|(a, b)| a.to_bits() == b.to_bits()));
    assert_ne!(&prefix, state.param(ParamId::KnowledgePrefix));
}

#[test]
fn overfits_one_example() {
    let (mut state, ex) = fixture(9);
    let mut trainer = Trainer::new(TrainConfig { learning_rate: 0.05, ..TrainConfig::default() });
    let mut steps = 0;
    while state.loss(&ex) > 0.01 {
        assert!(steps < 500, "loss {} after 500 steps", state.loss(&ex));
        trainer.step(&mut state, &[&ex]);
        steps += 1;
    }
    let preds = state.predict_masks(&ex.input, 1).unwrap();
    let top: Vec<usize> = preds.iter().map(|p| state.vocab.id(&p.candidates[0].token).unwrap()).collect();
    assert_eq!(top, ex.gold);
}

#[test]
fn zero_epochs_leave_state_alone() {
    let (mut state, ex) = fixture(6);
    let before = state.clone();
    let report = train(&mut state, &[ex], TrainConfig { epochs: 0, ..TrainConfig::default() }).unwrap();
    assert_eq!(report.steps, 0);
    assert_eq!(state, before);
}

#[test]
fn unknown_gold_token_is_named() {
    let (state, ex) = fixture(6);
    let err = state.example(ex.input, &["kotlin", PAD, PAD, "yes"]).unwrap_err();
    assert!(err.to_string().contains("kotlin"), "{err}");
}

#[test]
fn checkpoint_round_trip() {
    let (mut state, ex) = fixture(2);
    randomize_outputs(&mut state, 3);
    let json = serde_json::to_string(&state).unwrap();
    let back: ModelState = serde_json::from_str(&json).unwrap();
    assert_eq!(back, state);
    assert_eq!(back.loss(&ex).to_bits(), state.loss(&ex).to_bits());
}
