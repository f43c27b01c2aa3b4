//! Shared helpers for integration tests: a synthetic review corpus whose
//! fix is named only in the comment, and a small train/evaluate loop.
#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use revfix::infer::{beam_search, suggestions_from_beam, BeamConfig};
use revfix::localize::{EditKind, LocalizedSample};
use revfix::neural::{train, Example, Model, ModelConfig, Optimizer, TrainConfig};
use revfix::seqbuild::{
    build_vocab, prepare_sample, DualVocabulary, SeqConfig, TrainingSample, Variant,
};
use revfix::tokenize::detokenize_surfaces;

pub const OLD_NAMES: &[&str] = &[
    "tmp", "val", "res", "obj", "buf", "ret", "cnt", "arr", "ptr", "acc", "aux", "elt", "cur", "prv",
    "nxt", "lhs", "rhs", "src", "dst", "ctx",
];

pub const NEW_NAMES: &[&str] = &[
    "total", "count", "index", "offset", "length", "width", "height", "weight", "score", "limit",
    "margin", "budget", "amount", "price", "delay", "timeout", "retries", "capacity", "balance",
    "quota", "radius", "depth", "level", "rank", "size", "speed", "volume", "ratio", "factor", "period",
];

pub const CALLS: &[&str] = &["load", "read", "parse", "fetch", "compute", "lookup", "decode", "resolve"];
pub const SINKS: &[&str] = &["use", "emit", "store", "send", "log", "check"];

const TEMPLATES: &[&str] = &[
    "rename this to {}",
    "{} would be a clearer name",
    "please call it {}",
    "use {} instead",
];

#[derive(Debug, Clone)]
pub struct SynthCase {
    pub id: String,
    pub project: String,
    pub code_before: String,
    pub code_after: String,
    pub comment: String,
    pub localized: LocalizedSample,
}

/// A rename request: the replacement identifier appears only in the comment.
pub fn synth_corpus(n: usize, seed: u64) -> Vec<SynthCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let old = *OLD_NAMES.choose(&mut rng).unwrap();
            let new = *NEW_NAMES.choose(&mut rng).unwrap();
            let call = *CALLS.choose(&mut rng).unwrap();
            let sink = *SINKS.choose(&mut rng).unwrap();
            let arg = ["a", "b", "c", "d"][rng.gen_range(0..4)];
            let line_before = format!("        int {old} = {call}({arg});\n");
            let line_after = format!("        int {new} = {call}({arg});\n");
            let file = |decl: &str| {
                format!("class K{i} {{\n    void run() {{\n{decl}        {sink}({old});\n    }}\n}}\n")
            };
            let comment = TEMPLATES.choose(&mut rng).unwrap().replace("{}", new);
            SynthCase {
                id: format!("s{i:05}"),
                project: format!("p{}", i % 10),
                code_before: file(&line_before),
                code_after: file(&line_after),
                comment,
                localized: LocalizedSample {
                    triple_id: format!("s{i:05}"),
                    kind: EditKind::Update,
                    focus_start: 3,
                    focus_len: 1,
                    target_lines: vec![line_after],
                    distance: 0,
                },
            }
        })
        .collect()
}

pub struct Prepared {
    pub vocab: DualVocabulary,
    pub samples: Vec<TrainingSample>,
    pub examples: Vec<Example>,
    pub oov: Vec<Vec<String>>,
}

pub fn prepare(cases: &[SynthCase], variant: Variant, train_count: usize) -> Prepared {
    let cfg = SeqConfig::default();
    let samples: Vec<TrainingSample> = cases
        .iter()
        .map(|c| prepare_sample(&c.code_before, &c.comment, &c.localized, variant, &cfg).unwrap().0)
        .collect();
    let (vocab, _) = build_vocab(&samples[..train_count], 2000, 8000);
    let mut examples = Vec::new();
    let mut oov = Vec::new();
    for s in &samples {
        let e = vocab.encode(s);
        examples.push(Example::from(&e));
        oov.push(e.oov);
    }
    Prepared {
        vocab,
        samples,
        examples,
        oov,
    }
}

pub fn model_config(vocab: &DualVocabulary, dim: usize, seed: u64) -> ModelConfig {
    ModelConfig {
        embed_dim: dim,
        encoder_hidden: dim,
        decoder_hidden: 2 * dim,
        source_vocab_size: vocab.source_size(),
        target_vocab_size: vocab.target_size(),
        max_source_len: 600,
        max_target_len: 100,
        dropout: 0.0,
        seed,
        ..ModelConfig::default()
    }
}

pub fn train_config(steps: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        steps,
        batch_size: 16,
        learning_rate: 0.01,
        optimizer: Optimizer::adam(),
        eval_every: 0,
        seed,
        ..TrainConfig::default()
    }
}

/// Top-1 exact match of beam output against the detokenized gold target.
pub fn top1_accuracy(model: &Model<f32>, prep: &Prepared, cases: &[SynthCase], ids: &[usize], beam: usize) -> f64 {
    let cfg = BeamConfig {
        beam_size: beam,
        n_best: 1,
        max_len: 40,
        length_normalize: false,
    };
    let hits = ids
        .iter()
        .filter(|&&i| {
            let ex = &prep.examples[i];
            let enc = model.encode(&ex.source_ids, &ex.source_ext).unwrap();
            let hyps = beam_search(model, &enc, &cfg).unwrap();
            let region = cases[i].localized.region();
            let (sugg, _) = suggestions_from_beam(&hyps, &prep.vocab, &prep.oov[i], &cases[i].code_before, &region, true);
            let gold = detokenize_surfaces(&prep.samples[i].target_tokens).unwrap();
            sugg.first().is_some_and(|s| s.target_text == gold)
        })
        .count();
    100.0 * hits as f64 / ids.len() as f64
}

pub fn train_and_score(
    cases: &[SynthCase],
    variant: Variant,
    train_count: usize,
    dim: usize,
    steps: usize,
    seed: u64,
) -> (f64, f64) {
    let prep = prepare(cases, variant, train_count);
    let model = Model::<f32>::new(model_config(&prep.vocab, dim, seed)).unwrap();
    let out = train(&model, &prep.examples[..train_count], &[], &train_config(steps, seed), &mut |_, _| {}).unwrap();
    let trained = Model::from_parts(model.config.clone(), out.params).unwrap();
    let test_ids: Vec<usize> = (train_count..cases.len()).collect();
    let final_loss = out.log.last().map_or(f64::NAN, |r| r.loss);
    (top1_accuracy(&trained, &prep, cases, &test_ids, 1), final_loss)
}
