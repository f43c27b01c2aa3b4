//! Model-ready sequences: the context window around the focus, marker
//! framing for the code-only and code+comment variants, target limits, and
//! the dual vocabulary.

mod context;
mod vocab;

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use context::{build_context, function_scopes, Context, ContextRule, FocusTooLarge};
pub use vocab::{
    build_vocab, special_surfaces, top_by_frequency, CoverageReport, DualVocabulary, VocabError,
    BOS, BOS_ID, EOS, EOS_ID, PAD, PAD_ID, UNK, UNK_ID,
};

use crate::localize::{is_delete_target, split_lines, EditKind, LocalizedSample};
use crate::tokenize::{surfaces, tokenize, Marker, Token, TokenizationMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Code and review comment.
    Cc,
    /// Code only.
    C,
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cc" => Ok(Variant::Cc),
            "c" => Ok(Variant::C),
            other => Err(format!("unknown variant {other:?} (expected cc or c)")),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Cc => "cc",
            Variant::C => "c",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeqConfig {
    pub mode: TokenizationMode,
    /// Code window `W`, in tokens, including the four code-region markers.
    pub window: usize,
    /// Comment budget, in tokens, including the two comment markers.
    pub comment_limit: usize,
    pub target_limit: usize,
    pub include_insert_at_head: bool,
}

impl Default for SeqConfig {
    fn default() -> Self {
        SeqConfig {
            mode: TokenizationMode::Hard,
            window: 400,
            comment_limit: 200,
            target_limit: 100,
            include_insert_at_head: false,
        }
    }
}

impl SeqConfig {
    pub fn max_source_len(&self, variant: Variant) -> usize {
        match variant {
            Variant::Cc => self.window + self.comment_limit,
            Variant::C => self.window,
        }
    }

    /// Content tokens allowed in the code window once its four markers are
    /// reserved.
    pub fn code_budget(&self) -> usize {
        self.window.saturating_sub(4)
    }

    /// Comment content tokens once its two markers are reserved.
    pub fn comment_budget(&self) -> usize {
        self.comment_limit.saturating_sub(2)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub sample_id: String,
    pub variant: Variant,
    pub source_tokens: Vec<String>,
    pub target_tokens: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Comment,
    Code,
}

impl TrainingSample {
    /// Source surfaces outside the framing markers, tagged by region.
    pub fn source_regions(&self) -> impl Iterator<Item = (&str, Region)> {
        let mut region = Region::Code;
        self.source_tokens.iter().filter_map(move |t| {
            match Marker::from_surface(t) {
                Some(Marker::StartComment) => region = Region::Comment,
                Some(Marker::EndComment) | Some(Marker::StartCode) => region = Region::Code,
                Some(Marker::EndCode) => {}
                _ => return Some((t.as_str(), region)),
            }
            None
        })
    }

    /// Check marker framing: optional comment region first, then one code
    /// region holding exactly one focus pair in order.
    pub fn check_framing(&self) -> Result<(), String> {
        let pos = |m: Marker| -> Vec<usize> {
            self.source_tokens
                .iter()
                .enumerate()
                .filter(|(_, t)| t.as_str() == m.surface())
                .map(|(i, _)| i)
                .collect()
        };
        let one = |m: Marker| -> Result<usize, String> {
            match pos(m)[..] {
                [i] => Ok(i),
                ref v => Err(format!("expected one {}, found {}", m.surface(), v.len())),
            }
        };
        let (sc, ec) = (one(Marker::StartCode)?, one(Marker::EndCode)?);
        let (sf, ef) = (one(Marker::StartFocus)?, one(Marker::EndFocus)?);
        if !(sc < sf && sf < ef && ef < ec) {
            return Err("focus markers not inside the code region".into());
        }
        if ec != self.source_tokens.len() - 1 {
            return Err("tokens after the code region".into());
        }
        match self.variant {
            Variant::Cc => {
                let (scm, ecm) = (one(Marker::StartComment)?, one(Marker::EndComment)?);
                if !(scm == 0 && scm < ecm && ecm + 1 == sc) {
                    return Err("comment region must directly precede the code region".into());
                }
            }
            Variant::C => {
                if !pos(Marker::StartComment).is_empty() || sc != 0 {
                    return Err("code-only sample with a comment region".into());
                }
            }
        }
        Ok(())
    }
}

/// Wrap a context window (and, for `Cc`, the first `comment_limit` comment
/// tokens) in region markers.
pub fn frame_sample(
    context: &[Token],
    comment: Option<&[Token]>,
    variant: Variant,
    comment_limit: usize,
) -> Vec<Token> {
    let mut out = Vec::new();
    if variant == Variant::Cc {
        let comment = comment.unwrap_or(&[]);
        out.push(Token::Marker(Marker::StartComment));
        out.extend_from_slice(&comment[..comment.len().min(comment_limit)]);
        out.push(Token::Marker(Marker::EndComment));
    }
    out.push(Token::Marker(Marker::StartCode));
    out.extend_from_slice(context);
    out.push(Token::Marker(Marker::EndCode));
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "kebab-case")]
pub enum Rejection {
    FocusTooLarge { focus_tokens: usize, budget: usize },
    TargetTooLarge { target_tokens: usize, limit: usize },
    InsertAtHead,
    SourceTooLong { length: usize, cap: usize },
    InvalidRegion { message: String },
}

impl Rejection {
    pub fn name(&self) -> &'static str {
        match self {
            Rejection::FocusTooLarge { .. } => "focus-too-large",
            Rejection::TargetTooLarge { .. } => "target-too-large",
            Rejection::InsertAtHead => "insert-at-head",
            Rejection::SourceTooLong { .. } => "source-too-long",
            Rejection::InvalidRegion { .. } => "invalid-region",
        }
    }
}

/// Tokenize a target; a deletion is the single `<|del|>` token.
pub fn build_target<S: AsRef<str>>(
    target_lines: &[S],
    mode: TokenizationMode,
    limit: usize,
) -> Result<Vec<Token>, Rejection> {
    let tokens = if is_delete_target(target_lines) {
        vec![Token::Marker(Marker::Del)]
    } else {
        let text: String = target_lines.iter().map(|l| l.as_ref()).collect();
        tokenize(&text, mode)
    };
    if tokens.len() > limit {
        return Err(Rejection::TargetTooLarge {
            target_tokens: tokens.len(),
            limit,
        });
    }
    Ok(tokens)
}

/// Tokenize a file in three pieces (before, inside and after the focus
/// lines) so the focus is a contiguous token range.
pub fn tokenize_with_focus(
    code: &str,
    focus_start: usize,
    focus_len: usize,
    mode: TokenizationMode,
) -> (Vec<Token>, Range<usize>) {
    let lines = split_lines(code);
    let from = focus_start.saturating_sub(1).min(lines.len());
    let to = (from + focus_len).min(lines.len());
    let mut tokens = tokenize(&lines[..from].concat(), mode);
    let fs = tokens.len();
    tokens.extend(tokenize(&lines[from..to].concat(), mode));
    let fe = tokens.len();
    tokens.extend(tokenize(&lines[to..].concat(), mode));
    (tokens, fs..fe)
}

/// Build one framed sample from a localized change. The code window and
/// comment budgets reserve room for their markers so the framed source never
/// exceeds [`SeqConfig::max_source_len`].
pub fn prepare_sample(
    code_before: &str,
    review_comment: &str,
    localized: &LocalizedSample,
    variant: Variant,
    cfg: &SeqConfig,
) -> Result<(TrainingSample, ContextRule), Rejection> {
    if localized.kind == EditKind::InsertAtHead && !cfg.include_insert_at_head {
        return Err(Rejection::InsertAtHead);
    }
    if localized.focus_len == 0 && localized.kind != EditKind::InsertAtHead {
        return Err(Rejection::InvalidRegion {
            message: "empty focus".into(),
        });
    }
    let (tokens, focus) =
        tokenize_with_focus(code_before, localized.focus_start, localized.focus_len, cfg.mode);
    let scopes = function_scopes(&tokens);
    let ctx = build_context(&tokens, focus, cfg.code_budget(), &scopes).map_err(|e| {
        Rejection::FocusTooLarge {
            focus_tokens: e.focus_tokens,
            budget: e.budget,
        }
    })?;
    let target = build_target(&localized.target_lines, cfg.mode, cfg.target_limit)?;
    let comment = tokenize(review_comment, cfg.mode);
    let source = frame_sample(&ctx.tokens, Some(&comment), variant, cfg.comment_budget());
    let cap = cfg.max_source_len(variant);
    if source.len() > cap {
        return Err(Rejection::SourceTooLong {
            length: source.len(),
            cap,
        });
    }
    Ok((
        TrainingSample {
            sample_id: localized.triple_id.clone(),
            variant,
            source_tokens: surfaces(&source),
            target_tokens: surfaces(&target),
        },
        ctx.rule,
    ))
}

/// A sample mapped to ids. Copy indices live in the target-extended space:
/// `target_size + k` is the k-th source surface absent from the target
/// vocabulary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedSample {
    pub source_ids: Vec<u32>,
    pub source_ext: Vec<u32>,
    pub oov: Vec<String>,
    /// Gold output ids ending in EOS.
    pub target_ext: Vec<u32>,
}

impl DualVocabulary {
    pub fn encode_source(&self, source: &[String]) -> (Vec<u32>, Vec<u32>, Vec<String>) {
        let tsize = self.target_size() as u32;
        let mut oov: Vec<String> = Vec::new();
        let mut ids = Vec::with_capacity(source.len());
        let mut ext = Vec::with_capacity(source.len());
        for s in source {
            ids.push(self.source_id(s).unwrap_or(UNK_ID));
            ext.push(match self.target_id(s) {
                Some(id) => id,
                None => {
                    let k = match oov.iter().position(|o| o == s) {
                        Some(k) => k,
                        None => {
                            oov.push(s.clone());
                            oov.len() - 1
                        }
                    };
                    tsize + k as u32
                }
            });
        }
        (ids, ext, oov)
    }

    pub fn encode(&self, sample: &TrainingSample) -> EncodedSample {
        let (source_ids, source_ext, oov) = self.encode_source(&sample.source_tokens);
        let tsize = self.target_size() as u32;
        let mut target_ext: Vec<u32> = sample
            .target_tokens
            .iter()
            .map(|t| {
                self.target_id(t)
                    .or_else(|| oov.iter().position(|o| o == t).map(|k| tsize + k as u32))
                    .unwrap_or(UNK_ID)
            })
            .collect();
        target_ext.push(EOS_ID);
        EncodedSample {
            source_ids,
            source_ext,
            oov,
            target_ext,
        }
    }

    /// Surface for an id in a sample's extended space.
    pub fn ext_surface<'a>(&'a self, id: u32, oov: &'a [String]) -> Option<&'a str> {
        let t = self.target_size() as u32;
        if id < t {
            self.surface(id)
        } else {
            oov.get((id - t) as usize).map(String::as_str)
        }
    }
}
