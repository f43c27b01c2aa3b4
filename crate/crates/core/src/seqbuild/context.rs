//! Function-scope detection and the code context window around a focus.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::tokenize::{Marker, Token};

/// Token ranges of method/constructor declarations, signature through the
/// closing brace.
///
/// A body is a `{` inside a type body (brace depth ≥ 1), not nested in
/// another function, whose previous significant token is `)` or the end of
/// a `throws` clause that follows `)`. String literals are not recognized;
/// braces inside them can confuse the scanner, in which case a focus simply
/// falls back to the file-level window.
pub fn function_scopes(tokens: &[Token]) -> Vec<Range<usize>> {
    let mut scopes = Vec::new();
    let mut depth: usize = 0;
    let mut open: Option<(usize, usize)> = None; // (start token, depth inside body)
    for (i, t) in tokens.iter().enumerate() {
        if t.is_punct('{') {
            if open.is_none() && depth >= 1 && opens_function_body(tokens, i) {
                open = Some((declaration_start(tokens, i), depth + 1));
            }
            depth += 1;
        } else if t.is_punct('}') {
            if let Some((start, body_depth)) = open {
                if depth == body_depth {
                    scopes.push(start..i + 1);
                    open = None;
                }
            }
            depth = depth.saturating_sub(1);
        }
    }
    scopes
}

fn prev_significant(tokens: &[Token], before: usize) -> Option<usize> {
    (0..before).rev().find(|&j| !tokens[j].is_whitespace())
}

fn opens_function_body(tokens: &[Token], brace: usize) -> bool {
    let Some(mut j) = prev_significant(tokens, brace) else {
        return false;
    };
    if tokens[j].is_punct(')') {
        return true;
    }
    // `) throws A, b.C<D> {`
    loop {
        match &tokens[j] {
            Token::Word(w) if w == "throws" => {
                return prev_significant(tokens, j).is_some_and(|k| tokens[k].is_punct(')'));
            }
            Token::Word(_) => {}
            Token::Punct('.' | ',' | '_' | '<' | '>') => {}
            _ => return false,
        }
        match prev_significant(tokens, j) {
            Some(k) => j = k,
            None => return false,
        }
    }
}

fn declaration_start(tokens: &[Token], brace: usize) -> usize {
    let mut paren = 0i32;
    let mut j = brace;
    while j > 0 {
        let t = &tokens[j - 1];
        if t.is_punct(')') {
            paren += 1;
        } else if t.is_punct('(') {
            paren -= 1;
        } else if paren <= 0 && (t.is_punct(';') || t.is_punct('{') || t.is_punct('}')) {
            break;
        }
        j -= 1;
    }
    while j < brace && tokens[j].is_whitespace() {
        j += 1;
    }
    j
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextRule {
    WholeFunction,
    FunctionWindow,
    GlobalWindow,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Context {
    /// Window tokens with the focus wrapped in focus markers.
    pub tokens: Vec<Token>,
    pub rule: ContextRule,
    /// Window bounds in the unmarked token stream.
    pub window: Range<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FocusTooLarge {
    pub focus_tokens: usize,
    pub budget: usize,
}

/// Select up to `budget` tokens around `focus` (markers not counted):
/// the whole enclosing function if it fits, otherwise up to `budget / 2`
/// tokens before the focus and the rest from the focus onward, clipped to
/// the function, or to the file when the focus is not inside one.
pub fn build_context(
    tokens: &[Token],
    focus: Range<usize>,
    budget: usize,
    scopes: &[Range<usize>],
) -> Result<Context, FocusTooLarge> {
    if focus.len() > budget {
        return Err(FocusTooLarge {
            focus_tokens: focus.len(),
            budget,
        });
    }
    let enclosing = scopes
        .iter()
        .find(|s| s.start <= focus.start && focus.end <= s.end && !focus.is_empty())
        .cloned();
    let (region, rule) = match enclosing {
        Some(s) if s.len() <= budget => (s, ContextRule::WholeFunction),
        Some(s) => (s, ContextRule::FunctionWindow),
        None => (0..tokens.len(), ContextRule::GlobalWindow),
    };
    let window = if rule == ContextRule::WholeFunction {
        region
    } else {
        let after_budget = (budget - budget / 2).max(focus.len());
        let before_budget = budget - after_budget;
        let start = focus.start.saturating_sub(before_budget).max(region.start);
        let end = (focus.start + after_budget).min(region.end);
        start..end
    };
    let mut out = Vec::with_capacity(window.len() + 2);
    out.extend_from_slice(&tokens[window.start..focus.start]);
    out.push(Token::Marker(Marker::StartFocus));
    out.extend_from_slice(&tokens[focus.clone()]);
    out.push(Token::Marker(Marker::EndFocus));
    out.extend_from_slice(&tokens[focus.end..window.end]);
    Ok(Context {
        tokens: out,
        rule,
        window,
    })
}
