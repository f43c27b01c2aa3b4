//! Dual source vocabulary (code + comment) with a code-only target side.
//!
//! Index layout: special tokens first, then code surfaces by frequency, then
//! comment surfaces not already present in the code list. Target ids are the
//! prefix `specials + code`, so a target id is also a valid source id.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Region, TrainingSample};
use crate::tokenize::Marker;

pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";
pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const BOS_ID: u32 = 2;
pub const EOS_ID: u32 = 3;

pub const VOCAB_FORMAT_VERSION: u32 = 1;

pub fn special_surfaces() -> Vec<&'static str> {
    let mut v = vec![PAD, UNK, BOS, EOS];
    v.extend(Marker::ALL.iter().map(|m| m.surface()));
    v
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualVocabulary {
    specials: Vec<String>,
    code: Vec<String>,
    comment: Vec<String>,
    index: HashMap<String, u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub code_occurrences: usize,
    pub code_in_vocab: usize,
    pub comment_occurrences: usize,
    pub comment_in_vocab: usize,
}

impl CoverageReport {
    pub fn code_fraction(&self) -> f64 {
        ratio(self.code_in_vocab, self.code_occurrences)
    }

    pub fn comment_fraction(&self) -> f64 {
        ratio(self.comment_in_vocab, self.comment_occurrences)
    }
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        1.0
    } else {
        a as f64 / b as f64
    }
}

#[derive(Debug, Error)]
pub enum VocabError {
    #[error("vocabulary file: {0}")]
    Io(#[from] std::io::Error),
    #[error("vocabulary header: {0}")]
    Header(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    version: u32,
    code_size: usize,
    comment_size: usize,
    specials: BTreeMap<String, u32>,
}

/// Most frequent `size` surfaces; ties broken lexicographically.
pub fn top_by_frequency(counts: &HashMap<String, usize>, size: usize) -> Vec<String> {
    let mut items: Vec<(&String, &usize)> = counts.iter().collect();
    items.sort_by(|a, b| b.1.cmp(a.1).then_with(|| a.0.cmp(b.0)));
    items.into_iter().take(size).map(|(s, _)| s.clone()).collect()
}

impl DualVocabulary {
    pub fn from_lists(code: Vec<String>, comment: Vec<String>) -> Self {
        let specials: Vec<String> = special_surfaces().into_iter().map(String::from).collect();
        let mut index = HashMap::new();
        let mut code_kept = Vec::new();
        let mut comment_kept = Vec::new();
        for s in &specials {
            index.insert(s.clone(), index.len() as u32);
        }
        for s in code {
            if !index.contains_key(&s) {
                index.insert(s.clone(), index.len() as u32);
                code_kept.push(s);
            }
        }
        for s in comment {
            if !index.contains_key(&s) {
                index.insert(s.clone(), index.len() as u32);
                comment_kept.push(s);
            }
        }
        DualVocabulary {
            specials,
            code: code_kept,
            comment: comment_kept,
            index,
        }
    }

    pub fn source_size(&self) -> usize {
        self.index.len()
    }

    pub fn target_size(&self) -> usize {
        self.specials.len() + self.code.len()
    }

    pub fn code_vocab(&self) -> &[String] {
        &self.code
    }

    pub fn comment_vocab(&self) -> &[String] {
        &self.comment
    }

    pub fn source_id(&self, surface: &str) -> Option<u32> {
        self.index.get(surface).copied()
    }

    pub fn target_id(&self, surface: &str) -> Option<u32> {
        self.source_id(surface).filter(|&i| (i as usize) < self.target_size())
    }

    pub fn surface(&self, id: u32) -> Option<&str> {
        let i = id as usize;
        let s = self.specials.len();
        let c = self.code.len();
        if i < s {
            Some(&self.specials[i])
        } else if i < s + c {
            Some(&self.code[i - s])
        } else {
            self.comment.get(i - s - c).map(String::as_str)
        }
    }

    pub fn write<W: Write>(&self, mut w: W) -> Result<(), VocabError> {
        let header = Header {
            version: VOCAB_FORMAT_VERSION,
            code_size: self.code.len(),
            comment_size: self.comment.len(),
            specials: self
                .specials
                .iter()
                .enumerate()
                .map(|(i, s)| (s.clone(), i as u32))
                .collect(),
        };
        let header = serde_json::to_string(&header).map_err(|e| VocabError::Header(e.to_string()))?;
        writeln!(w, "{header}")?;
        for s in self.specials.iter().chain(&self.code).chain(&self.comment) {
            writeln!(w, "{s}")?;
        }
        Ok(())
    }

    pub fn read<R: BufRead>(r: R) -> Result<Self, VocabError> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| VocabError::Header("empty file".into()))??;
        let header: Header =
            serde_json::from_str(&header).map_err(|e| VocabError::Header(e.to_string()))?;
        if header.version != VOCAB_FORMAT_VERSION {
            return Err(VocabError::Header(format!("unsupported version {}", header.version)));
        }
        let body: Vec<String> = lines.collect::<Result<_, _>>()?;
        let n_special = special_surfaces().len();
        if body.len() != n_special + header.code_size + header.comment_size {
            return Err(VocabError::Header(format!(
                "expected {} entries, found {}",
                n_special + header.code_size + header.comment_size,
                body.len()
            )));
        }
        for (name, idx) in &header.specials {
            if body.get(*idx as usize) != Some(name) {
                return Err(VocabError::Header(format!("special {name:?} not at index {idx}")));
            }
        }
        let code = body[n_special..n_special + header.code_size].to_vec();
        let comment = body[n_special + header.code_size..].to_vec();
        let v = DualVocabulary::from_lists(code, comment);
        if v.source_size() != body.len() {
            return Err(VocabError::Header("duplicate surfaces".into()));
        }
        Ok(v)
    }
}

/// Count code surfaces (code region of the source plus the target) and
/// comment surfaces over training samples and keep the most frequent of each.
pub fn build_vocab(
    samples: &[TrainingSample],
    code_size: usize,
    comment_size: usize,
) -> (DualVocabulary, CoverageReport) {
    let specials = special_surfaces();
    let mut code_counts: HashMap<String, usize> = HashMap::new();
    let mut comment_counts: HashMap<String, usize> = HashMap::new();
    for s in samples {
        for (tok, region) in s.source_regions() {
            if specials.contains(&tok) {
                continue;
            }
            let counts = match region {
                Region::Comment => &mut comment_counts,
                Region::Code => &mut code_counts,
            };
            *counts.entry(tok.to_string()).or_insert(0) += 1;
        }
        for tok in &s.target_tokens {
            if !specials.contains(&tok.as_str()) {
                *code_counts.entry(tok.clone()).or_insert(0) += 1;
            }
        }
    }
    let code = top_by_frequency(&code_counts, code_size);
    let code_set: std::collections::HashSet<&String> = code.iter().collect();
    let comment_only: HashMap<String, usize> = comment_counts
        .iter()
        .filter(|(k, _)| !code_set.contains(k))
        .map(|(k, v)| (k.clone(), *v))
        .collect();
    let comment = top_by_frequency(&comment_only, comment_size);
    let vocab = DualVocabulary::from_lists(code, comment);

    let coverage = |counts: &HashMap<String, usize>| {
        counts.iter().fold((0, 0), |(tot, hit), (k, v)| {
            (tot + v, hit + if vocab.source_id(k).is_some() { *v } else { 0 })
        })
    };
    let (code_occurrences, code_in_vocab) = coverage(&code_counts);
    let (comment_occurrences, comment_in_vocab) = coverage(&comment_counts);
    (
        vocab,
        CoverageReport {
            code_occurrences,
            code_in_vocab,
            comment_occurrences,
            comment_in_vocab,
        },
    )
}
