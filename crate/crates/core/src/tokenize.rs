//! Hard and soft tokenization of source code and review comments.
//!
//! Hard mode is lossless: maximal runs of one whitespace character class
//! become a single `<|ws:CLASS:COUNT|>` token, identifiers are split at
//! underscore and case boundaries, and every other non-word character is a
//! token of its own. [`detokenize`] concatenates surfaces back into the
//! original text byte for byte.
//!
//! Soft mode drops whitespace and keeps identifiers whole. It exists for
//! ablations only and has no inverse.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Reserved marker tokens used to frame model input and to encode deletion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Marker {
    StartFocus,
    EndFocus,
    StartCode,
    EndCode,
    StartComment,
    EndComment,
    Del,
}

impl Marker {
    pub const ALL: [Marker; 7] = [
        Marker::StartFocus,
        Marker::EndFocus,
        Marker::StartCode,
        Marker::EndCode,
        Marker::StartComment,
        Marker::EndComment,
        Marker::Del,
    ];

    pub fn surface(self) -> &'static str {
        match self {
            Marker::StartFocus => "<|startfocus|>",
            Marker::EndFocus => "<|endfocus|>",
            Marker::StartCode => "<|startcode|>",
            Marker::EndCode => "<|endcode|>",
            Marker::StartComment => "<|startcomment|>",
            Marker::EndComment => "<|endcomment|>",
            Marker::Del => "<|del|>",
        }
    }

    pub fn from_surface(s: &str) -> Option<Marker> {
        Marker::ALL.into_iter().find(|m| m.surface() == s)
    }
}

/// The whitespace character classes that get run-length encoded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum WsClass {
    Space,
    Tab,
    Newline,
    CarriageReturn,
}

impl WsClass {
    fn of(c: char) -> Option<WsClass> {
        match c {
            ' ' => Some(WsClass::Space),
            '\t' => Some(WsClass::Tab),
            '\n' => Some(WsClass::Newline),
            '\r' => Some(WsClass::CarriageReturn),
            _ => None,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            WsClass::Space => ' ',
            WsClass::Tab => '\t',
            WsClass::Newline => '\n',
            WsClass::CarriageReturn => '\r',
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            WsClass::Space => "sp",
            WsClass::Tab => "tab",
            WsClass::Newline => "nl",
            WsClass::CarriageReturn => "cr",
        }
    }

    fn from_code(s: &str) -> Option<WsClass> {
        match s {
            "sp" => Some(WsClass::Space),
            "tab" => Some(WsClass::Tab),
            "nl" => Some(WsClass::Newline),
            "cr" => Some(WsClass::CarriageReturn),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Token {
    Word(String),
    Punct(char),
    Whitespace { class: WsClass, run: usize },
    Marker(Marker),
}

impl Token {
    /// The serialized form used in token streams, datasets and vocabularies.
    pub fn surface(&self) -> String {
        match self {
            Token::Word(w) => w.clone(),
            Token::Punct(c) => c.to_string(),
            Token::Whitespace { class, run } => format!("<|ws:{}:{}|>", class.code(), run),
            Token::Marker(m) => m.surface().to_string(),
        }
    }

    /// Append the literal text this token stands for.
    pub fn write_text(&self, out: &mut String) {
        match self {
            Token::Word(w) => out.push_str(w),
            Token::Punct(c) => out.push(*c),
            Token::Whitespace { class, run } => {
                out.extend(std::iter::repeat_n(class.as_char(), *run))
            }
            Token::Marker(m) => out.push_str(m.surface()),
        }
    }

    pub fn is_whitespace(&self) -> bool {
        matches!(self, Token::Whitespace { .. })
    }

    pub fn is_punct(&self, c: char) -> bool {
        matches!(self, Token::Punct(p) if *p == c)
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.surface())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TokenError {
    #[error("malformed whitespace token {surface:?} at index {index}")]
    MalformedWhitespace { index: usize, surface: String },
}

impl Token {
    /// Parse one serialized surface. Anything that looks like a whitespace
    /// token must be well formed; other `<|...|>` strings that are not
    /// reserved markers are treated as ordinary words.
    pub fn parse_surface(surface: &str, index: usize) -> Result<Token, TokenError> {
        if let Some(m) = Marker::from_surface(surface) {
            return Ok(Token::Marker(m));
        }
        if let Some(body) = surface.strip_prefix("<|ws:") {
            let bad = || TokenError::MalformedWhitespace {
                index,
                surface: surface.to_string(),
            };
            let body = body.strip_suffix("|>").ok_or_else(bad)?;
            let (class, count) = body.split_once(':').ok_or_else(bad)?;
            let class = WsClass::from_code(class).ok_or_else(bad)?;
            if count.is_empty() || !count.bytes().all(|b| b.is_ascii_digit()) {
                return Err(bad());
            }
            let run: usize = count.parse().map_err(|_| bad())?;
            if run == 0 {
                return Err(bad());
            }
            return Ok(Token::Whitespace { class, run });
        }
        let mut chars = surface.chars();
        match (chars.next(), chars.next()) {
            (Some(c), None) if !is_word_char(c) => Ok(Token::Punct(c)),
            _ => Ok(Token::Word(surface.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenizationMode {
    #[default]
    Hard,
    Soft,
}

impl FromStr for TokenizationMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hard" => Ok(TokenizationMode::Hard),
            "soft" => Ok(TokenizationMode::Soft),
            other => Err(format!("unknown tokenization mode {other:?} (expected hard or soft)")),
        }
    }
}

impl fmt::Display for TokenizationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TokenizationMode::Hard => "hard",
            TokenizationMode::Soft => "soft",
        })
    }
}

// Letters (any script) and digits. Underscore is handled separately so that
// hard mode can emit it as its own token.
fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
}

pub fn tokenize(text: &str, mode: TokenizationMode) -> Vec<Token> {
    match mode {
        TokenizationMode::Hard => tokenize_hard(text),
        TokenizationMode::Soft => tokenize_soft(text),
    }
}

fn tokenize_hard(text: &str) -> Vec<Token> {
    let mut out = Vec::new();
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if let Some(class) = WsClass::of(c) {
            let start = i;
            while i < chars.len() && chars[i] == c {
                i += 1;
            }
            out.push(Token::Whitespace {
                class,
                run: i - start,
            });
        } else if is_word_char(c) {
            let start = i;
            while i < chars.len() && is_word_char(chars[i]) {
                i += 1;
            }
            split_case(&chars[start..i], &mut out);
        } else {
            out.push(Token::Punct(c));
            i += 1;
        }
    }
    out
}

/// Split an alphanumeric run at lower→Upper boundaries and before the last
/// capital of an uppercase run that is followed by a lowercase letter.
fn split_case(word: &[char], out: &mut Vec<Token>) {
    let mut start = 0;
    for i in 1..word.len() {
        let prev = word[i - 1];
        let cur = word[i];
        let lower_to_upper = prev.is_lowercase() && cur.is_uppercase();
        let acronym_end = prev.is_uppercase()
            && cur.is_uppercase()
            && word.get(i + 1).is_some_and(|n| n.is_lowercase());
        if lower_to_upper || acronym_end {
            out.push(Token::Word(word[start..i].iter().collect()));
            start = i;
        }
    }
    out.push(Token::Word(word[start..].iter().collect()));
}

fn tokenize_soft(text: &str) -> Vec<Token> {
    let mut out = Vec::new();
    let mut word = String::new();
    for c in text.chars() {
        if is_word_char(c) || c == '_' {
            word.push(c);
            continue;
        }
        if !word.is_empty() {
            out.push(Token::Word(std::mem::take(&mut word)));
        }
        if WsClass::of(c).is_none() && !c.is_whitespace() {
            out.push(Token::Punct(c));
        }
    }
    if !word.is_empty() {
        out.push(Token::Word(word));
    }
    out
}

/// Rebuild text from tokens. Adjacent non-whitespace tokens are concatenated
/// with no separator.
pub fn detokenize(tokens: &[Token]) -> String {
    let mut out = String::new();
    for t in tokens {
        t.write_text(&mut out);
    }
    out
}

/// Rebuild text from serialized surfaces, validating whitespace tokens.
pub fn detokenize_surfaces<S: AsRef<str>>(surfaces: &[S]) -> Result<String, TokenError> {
    let mut out = String::new();
    for (i, s) in surfaces.iter().enumerate() {
        Token::parse_surface(s.as_ref(), i)?.write_text(&mut out);
    }
    Ok(out)
}

pub fn surfaces(tokens: &[Token]) -> Vec<String> {
    tokens.iter().map(Token::surface).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VocabReduction {
    pub unique_before: usize,
    pub unique_after: usize,
    pub reduction_percent: f64,
}

/// Count unique token surfaces under two modes over the same documents.
pub fn vocab_reduction_report<S: AsRef<str> + Sync>(
    corpus: &[S],
    before_mode: TokenizationMode,
    after_mode: TokenizationMode,
) -> VocabReduction {
    use rayon::prelude::*;
    use std::collections::HashSet;

    let unique = |mode: TokenizationMode| -> usize {
        corpus
            .par_iter()
            .map(|doc| {
                tokenize(doc.as_ref(), mode)
                    .iter()
                    .map(Token::surface)
                    .collect::<HashSet<_>>()
            })
            .reduce(HashSet::new, |mut a, b| {
                a.extend(b);
                a
            })
            .len()
    };
    let unique_before = unique(before_mode);
    let unique_after = unique(after_mode);
    let reduction_percent = if unique_before == 0 {
        0.0
    } else {
        100.0 * (unique_before as f64 - unique_after as f64) / unique_before as f64
    };
    VocabReduction {
        unique_before,
        unique_after,
        reduction_percent,
    }
}
