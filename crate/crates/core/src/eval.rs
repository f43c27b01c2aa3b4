//! Exact-match top-k accuracy, per-project and per-label breakdowns, and
//! the code+comment versus code-only comparison table.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const DEFAULT_KS: [usize; 3] = [1, 5, 10];

/// Reference baseline accuracies (hard tokenization), for display next to
/// measured numbers.
pub const REFERENCE_MODEL_C: [f64; 3] = [16.29, 20.94, 23.37];
pub const REFERENCE_MODEL_CC: [f64; 3] = [19.59, 27.73, 31.51];
pub const REFERENCE_IMPROVEMENT: [f64; 3] = [20.33, 32.41, 34.82];

/// Byte-level comparison of detokenized texts.
pub fn exact_match(prediction: &str, gold: &str) -> bool {
    prediction.as_bytes() == gold.as_bytes()
}

/// One evaluated test sample: gold text and predictions in rank order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSample {
    pub sample_id: String,
    pub project: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub gold: String,
    pub predictions: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopK {
    pub k: usize,
    pub hits: usize,
    pub total: usize,
    pub percent: f64,
}

/// What produced a report; enough to tell ablation rows apart.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct ConfigFingerprint {
    pub tokenization: String,
    pub variant: String,
    pub code_vocab_size: usize,
    pub comment_vocab_size: usize,
    pub coverage: bool,
    pub beam_size: usize,
    pub merge_duplicates: bool,
}

impl ConfigFingerprint {
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("fingerprint serializes");
        hex::encode(&Sha256::digest(json)[..8])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRow {
    pub name: String,
    pub percent: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub fingerprint: ConfigFingerprint,
    pub fingerprint_digest: String,
    pub total: usize,
    pub topk: Vec<TopK>,
    pub per_project: BTreeMap<String, Vec<TopK>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub per_label: BTreeMap<String, Vec<TopK>>,
    pub reference: Vec<ReferenceRow>,
}

/// Rank (1-based) of the first exact match, if any.
pub fn first_hit(sample: &EvalSample) -> Option<usize> {
    sample
        .predictions
        .iter()
        .position(|p| exact_match(p, &sample.gold))
        .map(|i| i + 1)
}

fn tally(ranks: impl Iterator<Item = Option<usize>> + Clone, ks: &[usize]) -> Vec<TopK> {
    let total = ranks.clone().count();
    ks.iter()
        .map(|&k| {
            let hits = ranks.clone().filter(|r| r.is_some_and(|r| r <= k)).count();
            TopK {
                k,
                hits,
                total,
                percent: if total == 0 { 0.0 } else { 100.0 * hits as f64 / total as f64 },
            }
        })
        .collect()
}

/// A sample is a hit at k when any of its first k predictions matches the
/// gold text exactly. Samples without predictions are misses.
pub fn topk_accuracy(samples: &[EvalSample], ks: &[usize], fingerprint: ConfigFingerprint) -> EvalReport {
    let ranks: Vec<Option<usize>> = samples.iter().map(first_hit).collect();
    let topk = tally(ranks.iter().copied(), ks);
    let mut by_project: BTreeMap<&str, Vec<Option<usize>>> = BTreeMap::new();
    let mut by_label: BTreeMap<&str, Vec<Option<usize>>> = BTreeMap::new();
    for (s, r) in samples.iter().zip(&ranks) {
        by_project.entry(&s.project).or_default().push(*r);
        if let Some(l) = &s.label {
            by_label.entry(l).or_default().push(*r);
        }
    }
    let group = |m: BTreeMap<&str, Vec<Option<usize>>>| {
        m.into_iter()
            .map(|(k, v)| (k.to_string(), tally(v.iter().copied(), ks)))
            .collect()
    };
    let reference = if ks == DEFAULT_KS {
        vec![
            ReferenceRow {
                name: "reference model_c".into(),
                percent: REFERENCE_MODEL_C.to_vec(),
            },
            ReferenceRow {
                name: "reference model_cc".into(),
                percent: REFERENCE_MODEL_CC.to_vec(),
            },
        ]
    } else {
        Vec::new()
    };
    EvalReport {
        fingerprint_digest: fingerprint.digest(),
        fingerprint,
        total: samples.len(),
        topk,
        per_project: group(by_project),
        per_label: group(by_label),
        reference,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Improvement {
    pub k: usize,
    pub cc_percent: f64,
    pub c_percent: f64,
    /// `None` when the code-only accuracy is zero.
    pub relative_percent: Option<f64>,
}

#[derive(Debug, Error, PartialEq)]
pub enum CompareError {
    #[error("reports cover different test sets ({0} vs {1} samples)")]
    DifferentTests(usize, usize),
    #[error("reports use different k values")]
    DifferentKs,
}

/// Relative improvement `(cc - c) / c` per k, in percent.
pub fn compare_variants(cc: &EvalReport, c: &EvalReport) -> Result<Vec<Improvement>, CompareError> {
    if cc.total != c.total {
        return Err(CompareError::DifferentTests(cc.total, c.total));
    }
    if cc.topk.iter().map(|t| t.k).ne(c.topk.iter().map(|t| t.k)) {
        return Err(CompareError::DifferentKs);
    }
    Ok(cc
        .topk
        .iter()
        .zip(&c.topk)
        .map(|(a, b)| Improvement {
            k: a.k,
            cc_percent: a.percent,
            c_percent: b.percent,
            relative_percent: relative_improvement(a.percent, b.percent),
        })
        .collect())
}

pub fn relative_improvement(cc: f64, c: f64) -> Option<f64> {
    (c != 0.0).then(|| 100.0 * (cc - c) / c)
}

impl EvalReport {
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let header: Vec<String> = self.topk.iter().map(|t| format!("top-{}", t.k)).collect();
        let _ = writeln!(
            out,
            "config {} ({} / {} / vocab {}+{} / coverage {})",
            self.fingerprint_digest,
            self.fingerprint.variant,
            self.fingerprint.tokenization,
            self.fingerprint.code_vocab_size,
            self.fingerprint.comment_vocab_size,
            self.fingerprint.coverage
        );
        let _ = writeln!(out, "{:<28}{}", "", header.iter().map(|h| format!("{h:>10}")).collect::<String>());
        let row = |name: &str, v: &[TopK]| {
            format!(
                "{:<28}{}\n",
                name,
                v.iter().map(|t| format!("{:>10.2}", t.percent)).collect::<String>()
            )
        };
        out.push_str(&row(&format!("all ({})", self.total), &self.topk));
        for (p, v) in &self.per_project {
            out.push_str(&row(&format!("  {p} ({})", v.first().map_or(0, |t| t.total)), v));
        }
        for (l, v) in &self.per_label {
            out.push_str(&row(&format!("  [{l}] ({})", v.first().map_or(0, |t| t.total)), v));
        }
        for r in &self.reference {
            let _ = writeln!(
                out,
                "{:<28}{}",
                r.name,
                r.percent.iter().map(|p| format!("{p:>10.2}")).collect::<String>()
            );
        }
        out
    }

    /// One CSV line per k: fingerprint columns then k, hits, total, percent.
    pub fn csv_rows(&self) -> String {
        let f = &self.fingerprint;
        self.topk
            .iter()
            .map(|t| {
                format!(
                    "{},{},{},{},{},{},{},{},{},{},{},{:.4}\n",
                    self.fingerprint_digest,
                    f.tokenization,
                    f.variant,
                    f.code_vocab_size,
                    f.comment_vocab_size,
                    f.coverage,
                    f.beam_size,
                    f.merge_duplicates,
                    t.k,
                    t.hits,
                    t.total,
                    t.percent
                )
            })
            .collect()
    }
}

pub const CSV_HEADER: &str =
    "fingerprint,tokenization,variant,code_vocab,comment_vocab,coverage,beam_size,merge_duplicates,k,hits,total,percent\n";

pub fn comparison_table(rows: &[Improvement]) -> String {
    let mut out = String::from("k      model_cc   model_c   relative\n");
    for r in rows {
        let rel = r.relative_percent.map_or("undefined".to_string(), |v| format!("{v:+.2}%"));
        let _ = writeln!(out, "{:<6}{:>9.2}{:>10.2}{:>11}", r.k, r.cc_percent, r.c_percent, rel);
    }
    out
}
