//! Beam-search decoding and conversion of hypotheses into patched files.

use std::cmp::Ordering;
use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::localize::{apply_edit, split_lines, EditRegion, LocalizeError};
use crate::neural::{DecoderState, Encoded, Model, NeuralError, Real};
use crate::seqbuild::{DualVocabulary, BOS_ID, EOS_ID, PAD_ID, UNK, UNK_ID};
use crate::tokenize::{detokenize_surfaces, Marker};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BeamConfig {
    pub beam_size: usize,
    pub n_best: usize,
    /// Maximum hypothesis length, end token included.
    pub max_len: usize,
    /// Rank by mean per-token log-probability instead of the sum.
    pub length_normalize: bool,
}

impl Default for BeamConfig {
    fn default() -> Self {
        BeamConfig {
            beam_size: 10,
            n_best: 10,
            max_len: 100,
            length_normalize: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis<T> {
    /// Extended ids, end token included when finished.
    pub tokens: Vec<u32>,
    pub log_prob: f64,
    pub state: DecoderState<T>,
    /// Emitted the end token or reached the length limit.
    pub finished: bool,
    /// Stopped by the length limit without an end token.
    pub truncated: bool,
}

impl<T> Hypothesis<T> {
    fn rank_score(&self, normalize: bool) -> f64 {
        if normalize && !self.tokens.is_empty() {
            self.log_prob / self.tokens.len() as f64
        } else {
            self.log_prob
        }
    }
}

fn by_rank<T>(normalize: bool) -> impl Fn(&Hypothesis<T>, &Hypothesis<T>) -> Ordering {
    move |a, b| {
        b.rank_score(normalize)
            .total_cmp(&a.rank_score(normalize))
            .then_with(|| a.tokens.cmp(&b.tokens))
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BeamError {
    #[error("beam size must be at least 1 and n_best at most the beam size")]
    BadConfig,
    #[error(transparent)]
    Model(#[from] NeuralError),
}

/// Best `n_best` hypotheses for one source. Every live hypothesis proposes
/// its `beam_size` most likely next tokens; the pooled candidates are pruned
/// to `beam_size`, ties broken by lexicographic token order. Hypotheses that
/// emit the end token leave the beam. When fewer than `n_best` finish, the
/// best length-limited truncations fill the remaining slots.
pub fn beam_search<T: Real>(
    model: &Model<T>,
    enc: &Encoded<T>,
    cfg: &BeamConfig,
) -> Result<Vec<Hypothesis<T>>, BeamError> {
    if cfg.beam_size == 0 || cfg.n_best > cfg.beam_size || cfg.max_len == 0 {
        return Err(BeamError::BadConfig);
    }
    let eos = model.config.eos_id;
    let order = by_rank::<T>(cfg.length_normalize);
    let mut live = vec![Hypothesis {
        tokens: Vec::new(),
        log_prob: 0.0,
        state: enc.initial.clone(),
        finished: false,
        truncated: false,
    }];
    let mut finished: Vec<Hypothesis<T>> = Vec::new();
    let mut truncated: Vec<Hypothesis<T>> = Vec::new();

    while !live.is_empty() {
        let mut pool: Vec<Hypothesis<T>> = Vec::new();
        for h in &live {
            let prev = h.tokens.last().copied().unwrap_or(model.config.bos_id);
            let (out, next) = model.decode_step(&h.state, prev, enc)?;
            let mut cands: Vec<(u32, f64)> = out
                .dist
                .iter()
                .enumerate()
                .filter(|(_, p)| **p > T::zero())
                .map(|(i, p)| (i as u32, p.as_f64().ln()))
                .collect();
            cands.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            cands.truncate(cfg.beam_size);
            for (id, lp) in cands {
                let mut tokens = h.tokens.clone();
                tokens.push(id);
                let done = id == eos;
                let at_limit = tokens.len() >= cfg.max_len;
                pool.push(Hypothesis {
                    tokens,
                    log_prob: h.log_prob + lp,
                    state: next.clone(),
                    finished: done || at_limit,
                    truncated: !done && at_limit,
                });
            }
        }
        pool.sort_by(&order);
        pool.truncate(cfg.beam_size);
        live = Vec::new();
        for h in pool {
            if !h.finished {
                live.push(h);
            } else if h.truncated {
                truncated.push(h);
            } else {
                finished.push(h);
            }
        }
    }
    finished.sort_by(&order);
    finished.truncate(cfg.n_best);
    if finished.len() < cfg.n_best {
        truncated.sort_by(&order);
        let missing = cfg.n_best - finished.len();
        finished.extend(truncated.into_iter().take(missing));
    }
    Ok(finished)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixSuggestion {
    pub rank: usize,
    pub score: f64,
    pub target_text: String,
    pub fixed_file: String,
    /// Contains an unknown token with no copy resolution.
    pub has_unknown: bool,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SuggestError {
    #[error("token id {0} does not resolve to a surface")]
    UnresolvedId(u32),
    #[error("control token {0:?} inside a hypothesis")]
    ControlToken(String),
    #[error("malformed whitespace token: {0}")]
    Malformed(String),
    #[error(transparent)]
    Edit(#[from] LocalizeError),
}

/// Resolve a hypothesis to text and splice it into `code_before` at the
/// focus of `region`. The returned suggestion has rank 0; ranks are
/// assigned by [`rank_suggestions`].
pub fn hypothesis_to_suggestion<T>(
    hyp: &Hypothesis<T>,
    vocab: &DualVocabulary,
    oov: &[String],
    code_before: &str,
    region: &EditRegion,
) -> Result<FixSuggestion, SuggestError> {
    let mut ids: &[u32] = &hyp.tokens;
    if let Some((&last, rest)) = ids.split_last() {
        if last == EOS_ID {
            ids = rest;
        }
    }
    let mut surfaces = Vec::with_capacity(ids.len());
    let mut has_unknown = false;
    for &id in ids {
        if id == UNK_ID {
            has_unknown = true;
            surfaces.push(UNK.to_string());
            continue;
        }
        if matches!(id, PAD_ID | BOS_ID | EOS_ID) {
            return Err(SuggestError::ControlToken(vocab.surface(id).unwrap_or("?").into()));
        }
        let s = vocab
            .ext_surface(id, oov)
            .ok_or(SuggestError::UnresolvedId(id))?;
        surfaces.push(s.to_string());
    }
    let del = Marker::Del.surface();
    let is_delete = surfaces.len() == 1 && surfaces[0] == del;
    if !is_delete {
        if let Some(m) = surfaces.iter().find(|s| Marker::from_surface(s).is_some()) {
            return Err(SuggestError::ControlToken(m.clone()));
        }
    }
    let target_text = if is_delete {
        del.to_string()
    } else {
        detokenize_surfaces(&surfaces).map_err(|e| SuggestError::Malformed(e.to_string()))?
    };
    let edit = EditRegion {
        kind: region.kind,
        focus_start: region.focus_start,
        focus_len: region.focus_len,
        target_lines: if is_delete {
            vec![del.to_string()]
        } else {
            split_lines(&target_text).into_iter().map(String::from).collect()
        },
    };
    let fixed_file = apply_edit(code_before, &edit)?;
    Ok(FixSuggestion {
        rank: 0,
        score: hyp.log_prob,
        target_text,
        fixed_file,
        has_unknown,
    })
}

/// Merge suggestions with identical text (keeping the higher score), move
/// those with unknown tokens after all resolved ones and number the rest
/// from 1.
pub fn rank_suggestions(mut list: Vec<FixSuggestion>) -> Vec<FixSuggestion> {
    list.sort_by(|a, b| {
        a.has_unknown
            .cmp(&b.has_unknown)
            .then(b.score.total_cmp(&a.score))
            .then_with(|| a.target_text.cmp(&b.target_text))
    });
    let mut seen = HashSet::new();
    list.retain(|s| seen.insert(s.target_text.clone()));
    for (i, s) in list.iter_mut().enumerate() {
        s.rank = i + 1;
    }
    list
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub tokens: Vec<u32>,
    pub message: String,
}

/// Convert beam output into ranked suggestions, dropping (and reporting)
/// hypotheses that cannot be resolved. With `merge_duplicates` off, equal
/// texts are kept as separate ranks.
pub fn suggestions_from_beam<T>(
    hyps: &[Hypothesis<T>],
    vocab: &DualVocabulary,
    oov: &[String],
    code_before: &str,
    region: &EditRegion,
    merge_duplicates: bool,
) -> (Vec<FixSuggestion>, Vec<Diagnostic>) {
    let mut ok = Vec::new();
    let mut diags = Vec::new();
    for h in hyps {
        match hypothesis_to_suggestion(h, vocab, oov, code_before, region) {
            Ok(s) => ok.push(s),
            Err(e) => diags.push(Diagnostic {
                tokens: h.tokens.clone(),
                message: e.to_string(),
            }),
        }
    }
    let ranked = if merge_duplicates {
        rank_suggestions(ok)
    } else {
        ok.sort_by(|a, b| a.has_unknown.cmp(&b.has_unknown).then(b.score.total_cmp(&a.score)));
        ok.into_iter()
            .enumerate()
            .map(|(i, mut s)| {
                s.rank = i + 1;
                s
            })
            .collect()
    };
    (ranked, diags)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuggestionEntry {
    pub rank: usize,
    pub score: f64,
    pub target_text: String,
    pub fixed_file_path: String,
}

/// On-disk suggestion list for one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuggestionFile {
    pub sample_id: String,
    pub suggestions: Vec<SuggestionEntry>,
}
