//! Browser bindings for three pieces of revfix: the code tokenizer, the
//! review-comment localizer and the copy/generate mixture of the decoder.
//! Every export takes plain strings and numbers and returns JSON.

use revfix::localize::{apply_edit, extract_edit_region, line_diff, select_relevant_hunk, LineDiffHunk};
use revfix::neural::copy_mixture;
use revfix::tokenize::{detokenize, tokenize, Token, TokenizationMode};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
struct TokenView {
    surface: String,
    text: String,
    kind: &'static str,
}

#[derive(Serialize)]
struct Tokenized {
    tokens: Vec<TokenView>,
    round_trip: bool,
    unique_hard: usize,
    unique_soft: usize,
}

fn kind(t: &Token) -> &'static str {
    match t {
        Token::Word(_) => "word",
        Token::Punct(_) => "punct",
        Token::Whitespace { .. } => "space",
        Token::Marker(_) => "marker",
    }
}

fn unique(text: &str, mode: TokenizationMode) -> usize {
    let mut s: Vec<String> = tokenize(text, mode).iter().map(Token::surface).collect();
    s.sort();
    s.dedup();
    s.len()
}

pub fn tokenize_report(text: &str, mode: &str) -> Result<String, String> {
    let mode: TokenizationMode = mode.parse()?;
    let tokens = tokenize(text, mode);
    let out = Tokenized {
        round_trip: detokenize(&tokens) == text,
        tokens: tokens
            .iter()
            .map(|t| {
                let mut text = String::new();
                t.write_text(&mut text);
                TokenView { surface: t.surface(), text, kind: kind(t) }
            })
            .collect(),
        unique_hard: unique(text, TokenizationMode::Hard),
        unique_soft: unique(text, TokenizationMode::Soft),
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct Localized {
    hunks: Vec<LineDiffHunk>,
    selected: Option<usize>,
    distance: Option<usize>,
    region: Option<revfix::localize::EditRegion>,
    fixed: Option<String>,
}

pub fn localize_report(before: &str, after: &str, review_line: usize) -> Result<String, String> {
    let hunks = line_diff(before, after);
    let chosen = select_relevant_hunk(&hunks, review_line);
    let (mut out, region) = match chosen {
        Some((h, d)) => {
            let region = extract_edit_region(&h, before, after).map_err(|e| e.to_string())?;
            let fixed = apply_edit(before, &region).map_err(|e| e.to_string())?;
            let selected = hunks.iter().position(|x| *x == h);
            (
                Localized { hunks: vec![], selected, distance: Some(d), region: None, fixed: Some(fixed) },
                Some(region),
            )
        }
        None => (Localized { hunks: vec![], selected: None, distance: None, region: None, fixed: None }, None),
    };
    out.hunks = hunks;
    out.region = region;
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct MixRow {
    surface: String,
    generate: f64,
    copy: f64,
    total: f64,
    in_vocab: bool,
}

/// Mix a rank-weighted generation distribution over `vocab` with attention
/// centred on source token `focus` (softmax of `-|i - focus| / spread`).
pub fn mixture_report(source: &str, vocab: &str, p_gen: f64, focus: usize, spread: f64) -> Result<String, String> {
    if !(0.0..=1.0).contains(&p_gen) {
        return Err(format!("p_gen must be in [0, 1], got {p_gen}"));
    }
    let spread = spread.max(1e-3);
    let vocab: Vec<String> = vocab.split_whitespace().map(str::to_string).collect();
    let source: Vec<String> = tokenize(source, TokenizationMode::Hard)
        .iter()
        .filter(|t| !t.is_whitespace())
        .map(Token::surface)
        .collect();

    let mut surfaces = vocab.clone();
    let source_ext: Vec<u32> = source
        .iter()
        .map(|s| match surfaces.iter().position(|v| v == s) {
            Some(i) => i as u32,
            None => {
                surfaces.push(s.clone());
                (surfaces.len() - 1) as u32
            }
        })
        .collect();

    let weights: Vec<f64> = (0..vocab.len()).map(|r| 1.0 / (r + 1) as f64).collect();
    let z: f64 = weights.iter().sum();
    let generate: Vec<f64> = weights.iter().map(|w| w / z).collect();
    let logits: Vec<f64> = (0..source.len()).map(|i| -(i.abs_diff(focus) as f64) / spread).collect();
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let ez: f64 = e.iter().sum();
    let attention: Vec<f64> = e.iter().map(|x| x / ez).collect();

    let total = copy_mixture(p_gen, &generate, &attention, &source_ext, surfaces.len());
    let only_copy = copy_mixture(0.0, &generate, &attention, &source_ext, surfaces.len());
    let mut rows: Vec<MixRow> = surfaces
        .into_iter()
        .enumerate()
        .map(|(i, surface)| MixRow {
            surface,
            generate: p_gen * generate.get(i).copied().unwrap_or(0.0),
            copy: (1.0 - p_gen) * only_copy[i],
            total: total[i],
            in_vocab: i < vocab.len(),
        })
        .collect();
    rows.sort_by(|a, b| b.total.total_cmp(&a.total).then(a.surface.cmp(&b.surface)));
    serde_json::to_string(&rows).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn tokenize_code(text: &str, mode: &str) -> Result<String, JsValue> {
    tokenize_report(text, mode).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn localize_comment(before: &str, after: &str, review_line: usize) -> Result<String, JsValue> {
    localize_report(before, after, review_line).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn copy_generate_mixture(source: &str, vocab: &str, p_gen: f64, focus: usize, spread: f64) -> Result<String, JsValue> {
    mixture_report(source, vocab, p_gen, focus, spread).map_err(|e| JsValue::from_str(&e))
}
