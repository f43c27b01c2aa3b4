//! Stage runner behind the command-line tool. Every stage reads the
//! artifacts of earlier stages from a work directory, writes its own
//! atomically and records a manifest with input/output hashes and the
//! configuration that produced them.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{chronological_split, triples_from_events, ReviewTriple, SplitManifest};
use crate::eval::{topk_accuracy, ConfigFingerprint, EvalReport, EvalSample, DEFAULT_KS};
use crate::infer::{beam_search, suggestions_from_beam, BeamConfig, FixSuggestion, SuggestionEntry, SuggestionFile};
use crate::localize::{
    distance_histogram, extract_edit_region, line_diff, nearest_hunk, select_relevant_hunk, EditKind,
    LocalizedSample, WINDOW,
};
use crate::miner::{assemble_raw_events, mine, GerritClient, RateLimiter, RawReviewEvent, PAIRING_RULE};
use crate::neural::{
    load_checkpoint, save_checkpoint, train, Example, Model, ModelConfig, Optimizer, TrainConfig, TrainError,
};
use crate::seqbuild::{build_vocab, prepare_sample, DualVocabulary, SeqConfig, TrainingSample, Variant};
use crate::tokenize::{detokenize_surfaces, TokenizationMode};

/// Environment variable naming the fixture directory or server base URL.
pub const SOURCE_ENV: &str = "REVFIX_SOURCE";

pub const EVENTS: &str = "events.jsonl";
pub const TRIPLES: &str = "triples.jsonl";
pub const SPLIT: &str = "split.json";
pub const LOCALIZED: &str = "localized.jsonl";
pub const VOCAB: &str = "vocab.txt";
pub const TRAIN_SET: &str = "dataset/train.jsonl";
pub const TEST_SET: &str = "dataset/test.jsonl";
pub const CHECKPOINT: &str = "model.ckpt";
pub const TRAIN_LOG: &str = "train_log.jsonl";
pub const SUGGESTIONS: &str = "suggestions";
pub const SUGGESTION_INDEX: &str = "suggestions/index.jsonl";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TABLE: &str = "report.txt";
pub const REPORT_CSV: &str = "report.csv";
pub const MANIFESTS: &str = "manifests";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Mine,
    Extract,
    Localize,
    BuildVocab,
    Prepare,
    Train,
    Suggest,
    Evaluate,
    Report,
}

impl Stage {
    /// Order used by the `all` command.
    pub const PIPELINE: [Stage; 8] = [
        Stage::Mine,
        Stage::Extract,
        Stage::Localize,
        Stage::BuildVocab,
        Stage::Prepare,
        Stage::Train,
        Stage::Suggest,
        Stage::Evaluate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Mine => "mine",
            Stage::Extract => "extract",
            Stage::Localize => "localize",
            Stage::BuildVocab => "build-vocab",
            Stage::Prepare => "prepare",
            Stage::Train => "train",
            Stage::Suggest => "suggest",
            Stage::Evaluate => "evaluate",
            Stage::Report => "report",
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("missing {path}; run `revfix {stage}` first")]
    MissingPrerequisite { path: String, stage: Stage },
    #[error(
        "{path} was produced with a different {stage} configuration \
         (fingerprint {existing}, now {requested}); pass --force to overwrite"
    )]
    Conflict {
        stage: Stage,
        path: String,
        existing: String,
        requested: String,
    },
    #[error("data error: {0}")]
    Data(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("training diverged at step {step}; last good parameters saved to {path}")]
    Diverged { step: usize, path: String },
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) | PipelineError::MissingPrerequisite { .. } | PipelineError::Conflict { .. } => 2,
            PipelineError::Data(_) | PipelineError::Io { .. } => 3,
            PipelineError::Diverged { .. } => 4,
        }
    }
}

fn data(e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Data(e.to_string())
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Every knob of the pipeline. Defaults follow the reference baseline:
/// hard tokenization, a 400/200/100 token budget, 2,000 code and 8,000
/// comment words, beam width 10 and no coverage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Gerrit query used by `mine`.
    pub query: String,
    pub page_size: usize,
    pub max_changes: Option<usize>,
    /// Requests per second; 0 disables throttling.
    pub rate_limit: f64,
    pub test_fraction: f64,
    pub variant: Variant,
    pub tokenization: TokenizationMode,
    pub window: usize,
    pub comment_limit: usize,
    pub target_limit: usize,
    pub include_insert_at_head: bool,
    pub code_vocab_size: usize,
    pub comment_vocab_size: usize,
    pub embed_dim: usize,
    pub encoder_hidden: usize,
    pub decoder_hidden: usize,
    pub dropout: f64,
    pub coverage: bool,
    pub coverage_weight: f64,
    pub optimizer: String,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub clip_norm: f64,
    pub lr_decay: f64,
    pub eval_every: usize,
    pub checkpoint_every: usize,
    /// Tail of the training split held out for validation.
    pub valid_fraction: f64,
    pub beam_size: usize,
    pub n_best: usize,
    pub length_normalize: bool,
    pub merge_duplicates: bool,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            query: "status:merged".into(),
            page_size: 100,
            max_changes: None,
            rate_limit: 5.0,
            test_fraction: 0.05,
            variant: Variant::Cc,
            tokenization: TokenizationMode::Hard,
            window: 400,
            comment_limit: 200,
            target_limit: 100,
            include_insert_at_head: false,
            code_vocab_size: 2_000,
            comment_vocab_size: 8_000,
            embed_dim: 256,
            encoder_hidden: 128,
            decoder_hidden: 256,
            dropout: 0.3,
            coverage: false,
            coverage_weight: 1.0,
            optimizer: "sgd".into(),
            learning_rate: 0.15,
            batch_size: 16,
            steps: 80_000,
            clip_norm: 2.0,
            lr_decay: 0.5,
            eval_every: 400,
            checkpoint_every: 0,
            valid_fraction: 0.05,
            beam_size: 10,
            n_best: 10,
            length_normalize: false,
            merge_duplicates: true,
            seed: 1,
        }
    }
}

impl PipelineConfig {
    pub fn seq(&self) -> SeqConfig {
        SeqConfig {
            mode: self.tokenization,
            window: self.window,
            comment_limit: self.comment_limit,
            target_limit: self.target_limit,
            include_insert_at_head: self.include_insert_at_head,
        }
    }

    pub fn optimizer(&self) -> Result<Optimizer, PipelineError> {
        match self.optimizer.as_str() {
            "sgd" => Ok(Optimizer::Sgd),
            "adam" => Ok(Optimizer::adam()),
            other => Err(PipelineError::Config(format!("unknown optimizer {other:?} (expected sgd or adam)"))),
        }
    }

    pub fn train_config(&self) -> Result<TrainConfig, PipelineError> {
        Ok(TrainConfig {
            steps: self.steps,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            clip_norm: self.clip_norm,
            lr_decay: self.lr_decay,
            eval_every: self.eval_every,
            checkpoint_every: self.checkpoint_every,
            seed: self.seed,
            optimizer: self.optimizer()?,
        })
    }

    pub fn model_config(&self, vocab: &DualVocabulary) -> ModelConfig {
        ModelConfig {
            embed_dim: self.embed_dim,
            encoder_hidden: self.encoder_hidden,
            decoder_hidden: self.decoder_hidden,
            source_vocab_size: vocab.source_size(),
            target_vocab_size: vocab.target_size(),
            max_source_len: self.seq().max_source_len(self.variant),
            // Room for the end token.
            max_target_len: self.target_limit + 1,
            coverage_enabled: self.coverage,
            coverage_weight: self.coverage_weight,
            dropout: self.dropout,
            seed: self.seed,
            ..ModelConfig::default()
        }
    }

    pub fn beam(&self) -> BeamConfig {
        BeamConfig {
            beam_size: self.beam_size,
            n_best: self.n_best,
            max_len: self.target_limit + 1,
            length_normalize: self.length_normalize,
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let cfg = |m: &str| Err(PipelineError::Config(m.into()));
        if self.page_size == 0 {
            return cfg("page_size must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.test_fraction) || !(0.0..1.0).contains(&self.valid_fraction) {
            return cfg("test_fraction must be in [0, 1] and valid_fraction in [0, 1)");
        }
        if self.window < 5 || self.comment_limit < 3 || self.target_limit == 0 {
            return cfg("window must be at least 5, comment_limit at least 3 and target_limit at least 1");
        }
        if self.beam_size == 0 || self.n_best == 0 || self.n_best > self.beam_size {
            return cfg("need 1 <= n_best <= beam_size");
        }
        if self.rate_limit < 0.0 || !self.rate_limit.is_finite() {
            return cfg("rate_limit must be a non-negative number");
        }
        self.optimizer()?;
        let probe = DualVocabulary::from_lists(Vec::new(), Vec::new());
        let mut m = self.model_config(&probe);
        m.source_vocab_size = m.source_vocab_size.max(1);
        m.target_vocab_size = m.target_vocab_size.max(1);
        m.validate().map_err(|e| PipelineError::Config(e.to_string()))
    }

    /// The subset of knobs a stage depends on; its hash is the stage
    /// fingerprint.
    pub fn stage_config(&self, stage: Stage) -> Value {
        let seq = json!({
            "variant": self.variant,
            "tokenization": self.tokenization,
            "window": self.window,
            "comment_limit": self.comment_limit,
            "target_limit": self.target_limit,
            "include_insert_at_head": self.include_insert_at_head,
        });
        match stage {
            Stage::Mine => json!({
                "query": self.query,
                "page_size": self.page_size,
                "max_changes": self.max_changes,
                "pairing": PAIRING_RULE,
            }),
            Stage::Extract => json!({ "test_fraction": self.test_fraction }),
            Stage::Localize => json!({ "window_lines": WINDOW }),
            Stage::BuildVocab => json!({
                "seq": seq,
                "code_vocab_size": self.code_vocab_size,
                "comment_vocab_size": self.comment_vocab_size,
            }),
            Stage::Prepare => json!({ "seq": seq }),
            Stage::Train => json!({
                "seq": seq,
                "embed_dim": self.embed_dim,
                "encoder_hidden": self.encoder_hidden,
                "decoder_hidden": self.decoder_hidden,
                "dropout": self.dropout,
                "coverage": self.coverage,
                "coverage_weight": self.coverage_weight,
                "optimizer": self.optimizer,
                "learning_rate": self.learning_rate,
                "batch_size": self.batch_size,
                "steps": self.steps,
                "clip_norm": self.clip_norm,
                "lr_decay": self.lr_decay,
                "eval_every": self.eval_every,
                "valid_fraction": self.valid_fraction,
                "seed": self.seed,
            }),
            Stage::Suggest => json!({
                "beam_size": self.beam_size,
                "n_best": self.n_best,
                "length_normalize": self.length_normalize,
                "merge_duplicates": self.merge_duplicates,
            }),
            Stage::Evaluate | Stage::Report => json!({}),
        }
    }

    pub fn fingerprint(&self, stage: Stage) -> String {
        let bytes = serde_json::to_vec(&self.stage_config(stage)).expect("config serializes");
        hex::encode(&Sha256::digest(bytes)[..8])
    }

    pub fn eval_fingerprint(&self) -> ConfigFingerprint {
        ConfigFingerprint {
            tokenization: self.tokenization.to_string(),
            variant: self.variant.to_string(),
            code_vocab_size: self.code_vocab_size,
            comment_vocab_size: self.comment_vocab_size,
            coverage: self.coverage,
            beam_size: self.beam_size,
            merge_duplicates: self.merge_duplicates,
        }
    }
}

/// Layer a partial JSON config over `base`. Unknown keys are an error.
pub fn merge_config(base: &PipelineConfig, overlay: &Value) -> Result<PipelineConfig, PipelineError> {
    let mut merged = serde_json::to_value(base).expect("config serializes");
    let (Some(m), Some(o)) = (merged.as_object_mut(), overlay.as_object()) else {
        return Err(PipelineError::Config("config must be a JSON object".into()));
    };
    for (k, v) in o {
        m.insert(k.clone(), v.clone());
    }
    serde_json::from_value(merged).map_err(|e| PipelineError::Config(e.to_string()))
}

pub fn load_config_file(path: &Path, base: &PipelineConfig) -> Result<PipelineConfig, PipelineError> {
    let text = fs::read_to_string(path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
    let v: Value =
        serde_json::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
    merge_config(base, &v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageManifest {
    pub stage: Stage,
    pub fingerprint: String,
    pub stage_config: Value,
    pub effective_config: PipelineConfig,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub stats: Value,
}

pub fn sha256_file(path: &Path) -> Result<String, PipelineError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

/// Write through a hidden sibling temp file and rename into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    {
        let mut f = fs::File::create(&tmp).map_err(io_err(&tmp))?;
        f.write_all(bytes).map_err(io_err(&tmp))?;
        f.sync_all().map_err(io_err(&tmp))?;
    }
    fs::rename(&tmp, path).map_err(io_err(path))
}

fn jsonl_bytes<T: Serialize>(items: &[T]) -> Vec<u8> {
    let mut out = Vec::new();
    for item in items {
        serde_json::to_writer(&mut out, item).expect("record serializes");
        out.push(b'\n');
    }
    out
}

fn pretty<T: Serialize>(v: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(v).expect("record serializes");
    out.push(b'\n');
    out
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, PipelineError> {
    let f = fs::File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|e| data(format!("{}:{}: {e}", path.display(), i + 1)))?,
        );
    }
    Ok(out)
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, PipelineError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| data(format!("{}: {e}", path.display())))
}

/// Where a stage gets its raw data.
pub enum Source {
    Fixtures(PathBuf),
    #[cfg(feature = "http")]
    Http { base_url: String, token: Option<String> },
}

impl Source {
    /// A value starting with `http://` or `https://` is a server base URL,
    /// anything else a fixture directory.
    pub fn parse(spec: &str, token: Option<String>) -> Result<Source, PipelineError> {
        if spec.starts_with("http://") || spec.starts_with("https://") {
            #[cfg(feature = "http")]
            return Ok(Source::Http {
                base_url: spec.to_string(),
                token,
            });
            #[cfg(not(feature = "http"))]
            {
                let _ = token;
                return Err(PipelineError::Config("built without HTTP support".into()));
            }
        }
        let _ = token;
        Ok(Source::Fixtures(PathBuf::from(spec)))
    }
}

/// Options that are not part of the reproducible configuration.
pub struct RunOptions {
    pub work_dir: PathBuf,
    pub source: Option<Source>,
    pub force: bool,
    /// Second report for `report`; the pair is compared as cc against c.
    pub against: Option<PathBuf>,
}

impl RunOptions {
    pub fn new(work_dir: impl Into<PathBuf>) -> Self {
        RunOptions {
            work_dir: work_dir.into(),
            source: None,
            force: false,
            against: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageOutcome {
    pub stage: Stage,
    pub outputs: Vec<String>,
    pub stats: Value,
}

struct Ctx<'a> {
    cfg: &'a PipelineConfig,
    opts: &'a RunOptions,
    stage: Stage,
    inputs: BTreeMap<String, String>,
}

impl Ctx<'_> {
    fn path(&self, rel: &str) -> PathBuf {
        self.opts.work_dir.join(rel)
    }

    /// Resolve an input artifact, hashing it into the manifest.
    fn input(&mut self, rel: &str, producer: Stage) -> Result<PathBuf, PipelineError> {
        let p = self.path(rel);
        if !p.exists() {
            return Err(PipelineError::MissingPrerequisite {
                path: p.display().to_string(),
                stage: producer,
            });
        }
        if p.is_file() {
            self.inputs.insert(rel.to_string(), sha256_file(&p)?);
        }
        Ok(p)
    }
}

fn manifest_path(work_dir: &Path, stage: Stage) -> PathBuf {
    work_dir.join(MANIFESTS).join(format!("{}.json", stage.name()))
}

pub fn read_manifest(work_dir: &Path, stage: Stage) -> Result<Option<StageManifest>, PipelineError> {
    let p = manifest_path(work_dir, stage);
    if !p.exists() {
        return Ok(None);
    }
    read_json(&p).map(Some)
}

pub fn run_stage(stage: Stage, cfg: &PipelineConfig, opts: &RunOptions) -> Result<StageOutcome, PipelineError> {
    cfg.validate()?;
    let fingerprint = cfg.fingerprint(stage);
    if !opts.force {
        if let Some(m) = read_manifest(&opts.work_dir, stage)? {
            if m.fingerprint != fingerprint {
                return Err(PipelineError::Conflict {
                    stage,
                    path: manifest_path(&opts.work_dir, stage).display().to_string(),
                    existing: m.fingerprint,
                    requested: fingerprint,
                });
            }
        }
    }
    let mut ctx = Ctx {
        cfg,
        opts,
        stage,
        inputs: BTreeMap::new(),
    };
    let (outputs, stats) = match stage {
        Stage::Mine => stage_mine(&mut ctx)?,
        Stage::Extract => stage_extract(&mut ctx)?,
        Stage::Localize => stage_localize(&mut ctx)?,
        Stage::BuildVocab => stage_build_vocab(&mut ctx)?,
        Stage::Prepare => stage_prepare(&mut ctx)?,
        Stage::Train => stage_train(&mut ctx)?,
        Stage::Suggest => stage_suggest(&mut ctx)?,
        Stage::Evaluate => stage_evaluate(&mut ctx)?,
        Stage::Report => stage_report(&mut ctx)?,
    };
    let mut hashes = BTreeMap::new();
    for rel in &outputs {
        hashes.insert(rel.clone(), sha256_file(&ctx.path(rel))?);
    }
    let manifest = StageManifest {
        stage,
        fingerprint,
        stage_config: cfg.stage_config(stage),
        effective_config: cfg.clone(),
        inputs: ctx.inputs,
        outputs: hashes,
        stats: stats.clone(),
    };
    write_atomic(&manifest_path(&opts.work_dir, stage), &pretty(&manifest))?;
    Ok(StageOutcome {
        stage: ctx.stage,
        outputs,
        stats,
    })
}

type StageResult = Result<(Vec<String>, Value), PipelineError>;

fn stage_mine(ctx: &mut Ctx) -> StageResult {
    let cfg = ctx.cfg;
    let source = ctx.opts.source.as_ref().ok_or_else(|| {
        PipelineError::Config(format!("no data source; pass --source or set {SOURCE_ENV}"))
    })?;
    let limiter = if cfg.rate_limit > 0.0 {
        RateLimiter::new(cfg.rate_limit)
    } else {
        RateLimiter::unlimited()
    };
    let (events, skips) = match source {
        Source::Fixtures(dir) => {
            if !dir.is_dir() {
                return Err(PipelineError::Config(format!("fixture directory {} not found", dir.display())));
            }
            let client = GerritClient::new(crate::miner::FixtureTransport::new(dir), limiter);
            let mined = mine(&client, &cfg.query, cfg.page_size, cfg.max_changes).map_err(data)?;
            assemble_raw_events(&mined)
        }
        #[cfg(feature = "http")]
        Source::Http { base_url, token } => {
            let t = crate::miner::HttpTransport::new(base_url, token.clone()).map_err(data)?;
            let client = GerritClient::new(t, limiter);
            let mined = mine(&client, &cfg.query, cfg.page_size, cfg.max_changes).map_err(data)?;
            assemble_raw_events(&mined)
        }
    };
    write_atomic(&ctx.path(EVENTS), &jsonl_bytes(&events))?;
    let no_change = events.iter().filter(|e| e.no_change).count();
    Ok((
        vec![EVENTS.into()],
        json!({ "events": events.len(), "no_change": no_change, "skipped": skips, "pairing": PAIRING_RULE }),
    ))
}

fn stage_extract(ctx: &mut Ctx) -> StageResult {
    let events: Vec<RawReviewEvent> = read_jsonl(&ctx.input(EVENTS, Stage::Mine)?)?;
    let (triples, report) = triples_from_events(&events);
    let split = chronological_split(&triples, ctx.cfg.test_fraction);
    write_atomic(&ctx.path(TRIPLES), &jsonl_bytes(&triples))?;
    write_atomic(&ctx.path(SPLIT), &pretty(&split))?;
    Ok((
        vec![TRIPLES.into(), SPLIT.into()],
        json!({ "extract": report, "train": split.train.len(), "test": split.test.len() }),
    ))
}

/// Localize one triple against the change it triggered. `Err` carries the
/// reason it was dropped.
pub fn localize_triple(t: &ReviewTriple) -> Result<LocalizedSample, &'static str> {
    let hunks = line_diff(&t.code_before, &t.code_after);
    let (hunk, distance) = select_relevant_hunk(&hunks, t.review_line).ok_or("outside-window")?;
    let region = extract_edit_region(&hunk, &t.code_before, &t.code_after).map_err(|_| "hunk-mismatch")?;
    Ok(LocalizedSample {
        triple_id: t.id.clone(),
        kind: region.kind,
        focus_start: region.focus_start,
        focus_len: region.focus_len,
        target_lines: region.target_lines,
        distance,
    })
}

fn stage_localize(ctx: &mut Ctx) -> StageResult {
    let triples: Vec<ReviewTriple> = read_jsonl(&ctx.input(TRIPLES, Stage::Extract)?)?;
    let results: Vec<(Result<LocalizedSample, &'static str>, Option<i64>)> = triples
        .par_iter()
        .map(|t| {
            let hunks = line_diff(&t.code_before, &t.code_after);
            let signed = nearest_hunk(&hunks, t.review_line).map(|(h, _)| h.anchor() as i64 - t.review_line as i64);
            (localize_triple(t), signed)
        })
        .collect();
    let mut kept = Vec::new();
    let mut dropped: BTreeMap<&str, usize> = BTreeMap::new();
    let mut kinds: BTreeMap<String, usize> = BTreeMap::new();
    for (r, _) in &results {
        match r {
            Ok(s) => {
                *kinds.entry(kind_name(s.kind).into()).or_default() += 1;
                kept.push(s.clone());
            }
            Err(reason) => *dropped.entry(reason).or_default() += 1,
        }
    }
    let hist = distance_histogram(results.iter().filter_map(|(_, d)| *d));
    write_atomic(&ctx.path(LOCALIZED), &jsonl_bytes(&kept))?;
    Ok((
        vec![LOCALIZED.into()],
        json!({ "localized": kept.len(), "dropped": dropped, "kinds": kinds, "distance_histogram": hist }),
    ))
}

fn kind_name(k: EditKind) -> &'static str {
    match k {
        EditKind::Insert => "insert",
        EditKind::InsertAtHead => "insert_at_head",
        EditKind::Delete => "delete",
        EditKind::Update => "update",
    }
}

struct Framed {
    train: Vec<TrainingSample>,
    test: Vec<TrainingSample>,
    rejected: BTreeMap<String, usize>,
    rules: BTreeMap<String, usize>,
}

/// Frame every localized sample, keeping the split's order: training items
/// in chronological order, then test items.
fn frame_all(ctx: &mut Ctx) -> Result<Framed, PipelineError> {
    let triples: Vec<ReviewTriple> = read_jsonl(&ctx.input(TRIPLES, Stage::Extract)?)?;
    let split: SplitManifest = read_json(&ctx.input(SPLIT, Stage::Extract)?)?;
    let localized: Vec<LocalizedSample> = read_jsonl(&ctx.input(LOCALIZED, Stage::Localize)?)?;
    let by_id: HashMap<&str, &ReviewTriple> = triples.iter().map(|t| (t.id.as_str(), t)).collect();
    let loc: HashMap<&str, &LocalizedSample> = localized.iter().map(|l| (l.triple_id.as_str(), l)).collect();
    let seq = ctx.cfg.seq();
    let variant = ctx.cfg.variant;
    let frame = |ids: &[String]| -> Result<Vec<_>, PipelineError> {
        ids.par_iter()
            .filter_map(|id| loc.get(id.as_str()).map(|l| (id, *l)))
            .map(|(id, l)| {
                let t = by_id
                    .get(id.as_str())
                    .ok_or_else(|| data(format!("split names unknown triple {id}")))?;
                Ok(prepare_sample(&t.code_before, &t.review_comment, l, variant, &seq))
            })
            .collect()
    };
    let mut out = Framed {
        train: Vec::new(),
        test: Vec::new(),
        rejected: BTreeMap::new(),
        rules: BTreeMap::new(),
    };
    for (ids, dest) in [(&split.train, &mut out.train), (&split.test, &mut out.test)] {
        for r in frame(ids)? {
            match r {
                Ok((s, rule)) => {
                    *out.rules.entry(format!("{rule:?}").to_lowercase()).or_default() += 1;
                    dest.push(s);
                }
                Err(rej) => *out.rejected.entry(rej.name().into()).or_default() += 1,
            }
        }
    }
    Ok(out)
}

fn stage_build_vocab(ctx: &mut Ctx) -> StageResult {
    let framed = frame_all(ctx)?;
    if framed.train.is_empty() {
        return Err(data("no training samples survived framing"));
    }
    let (vocab, coverage) = build_vocab(&framed.train, ctx.cfg.code_vocab_size, ctx.cfg.comment_vocab_size);
    let mut buf = Vec::new();
    vocab.write(&mut buf).map_err(data)?;
    write_atomic(&ctx.path(VOCAB), &buf)?;
    Ok((
        vec![VOCAB.into()],
        json!({
            "code_words": vocab.code_vocab().len(),
            "comment_words": vocab.comment_vocab().len(),
            "coverage": coverage,
            "code_coverage": coverage.code_fraction(),
            "comment_coverage": coverage.comment_fraction(),
        }),
    ))
}

fn load_vocab(ctx: &mut Ctx) -> Result<DualVocabulary, PipelineError> {
    let p = ctx.input(VOCAB, Stage::BuildVocab)?;
    let f = fs::File::open(&p).map_err(io_err(&p))?;
    DualVocabulary::read(BufReader::new(f)).map_err(|e| data(format!("{}: {e}", p.display())))
}

fn stage_prepare(ctx: &mut Ctx) -> StageResult {
    let vocab = load_vocab(ctx)?;
    let framed = frame_all(ctx)?;
    let unknown = |set: &[TrainingSample]| -> usize {
        set.iter()
            .flat_map(|s| &s.target_tokens)
            .filter(|t| vocab.target_id(t).is_none())
            .count()
    };
    write_atomic(&ctx.path(TRAIN_SET), &jsonl_bytes(&framed.train))?;
    write_atomic(&ctx.path(TEST_SET), &jsonl_bytes(&framed.test))?;
    Ok((
        vec![TRAIN_SET.into(), TEST_SET.into()],
        json!({
            "train": framed.train.len(),
            "test": framed.test.len(),
            "rejected": framed.rejected,
            "context_rules": framed.rules,
            "train_target_oov": unknown(&framed.train),
            "test_target_oov": unknown(&framed.test),
        }),
    ))
}

fn examples(vocab: &DualVocabulary, samples: &[TrainingSample]) -> Vec<Example> {
    samples.iter().map(|s| Example::from(&vocab.encode(s))).collect()
}

fn check_variant(ctx: &Ctx, samples: &[TrainingSample], path: &str) -> Result<(), PipelineError> {
    match samples.iter().find(|s| s.variant != ctx.cfg.variant) {
        Some(s) => Err(PipelineError::Config(format!(
            "{path} holds {} samples but the config asks for {}; rerun `revfix prepare`",
            s.variant, ctx.cfg.variant
        ))),
        None => Ok(()),
    }
}

fn stage_train(ctx: &mut Ctx) -> StageResult {
    let vocab = load_vocab(ctx)?;
    let vocab_hash = ctx.inputs[VOCAB].clone();
    let samples: Vec<TrainingSample> = read_jsonl(&ctx.input(TRAIN_SET, Stage::Prepare)?)?;
    check_variant(ctx, &samples, TRAIN_SET)?;
    if samples.is_empty() {
        return Err(data("training set is empty"));
    }
    let cfg = ctx.cfg;
    let all = examples(&vocab, &samples);
    let n_valid = if cfg.eval_every > 0 {
        ((all.len() as f64 * cfg.valid_fraction) as usize).min(all.len() - 1)
    } else {
        0
    };
    let (train_set, valid_set) = all.split_at(all.len() - n_valid);
    let model = Model::<f32>::new(cfg.model_config(&vocab)).map_err(|e| PipelineError::Config(e.to_string()))?;
    let tcfg = cfg.train_config()?;
    let meta = |step: usize| {
        json!({
            "variant": cfg.variant,
            "tokenization": cfg.tokenization,
            "code_vocab_size": cfg.code_vocab_size,
            "comment_vocab_size": cfg.comment_vocab_size,
            "vocab_sha256": vocab_hash,
            "step": step,
        })
    };
    let ckpt_dir = ctx.path("checkpoints");
    let mut ckpt_err = None;
    let mut periodic = Vec::new();
    let mut on_checkpoint = |step: usize, p: &crate::neural::Params<f32>| {
        let rel = format!("checkpoints/step-{step:06}.ckpt");
        let m = Model {
            config: model.config.clone(),
            params: p.clone(),
        };
        let r = fs::create_dir_all(&ckpt_dir)
            .map_err(|e| data(e.to_string()))
            .and_then(|_| save_checkpoint(&ctx.opts.work_dir.join(&rel), &m, &meta(step)).map_err(data));
        match r {
            Ok(()) => periodic.push(rel),
            Err(e) => ckpt_err = Some(e),
        }
    };
    let result = train(&model, train_set, valid_set, &tcfg, &mut on_checkpoint);
    if let Some(e) = ckpt_err {
        return Err(e);
    }
    match result {
        Ok(out) => {
            write_atomic(&ctx.path(TRAIN_LOG), &jsonl_bytes(&out.log))?;
            let trained = Model::from_parts(model.config.clone(), out.params).map_err(data)?;
            let mut m = meta(out.best_step);
            m["best_validation"] = json!(out.best_validation);
            save_checkpoint(&ctx.path(CHECKPOINT), &trained, &m).map_err(data)?;
            let mut outputs = vec![CHECKPOINT.to_string(), TRAIN_LOG.to_string()];
            outputs.extend(periodic);
            Ok((
                outputs,
                json!({
                    "train_examples": train_set.len(),
                    "valid_examples": valid_set.len(),
                    "parameters": trained.params.num_params(),
                    "best_step": out.best_step,
                    "best_validation": out.best_validation,
                    "final_loss": out.log.last().map(|r| r.loss),
                }),
            ))
        }
        Err(TrainError::Diverged { step, last_good, log }) => {
            write_atomic(&ctx.path(TRAIN_LOG), &jsonl_bytes(&log))?;
            let path = ctx.path("model.diverged.ckpt");
            let m = Model::from_parts(model.config.clone(), *last_good).map_err(data)?;
            save_checkpoint(&path, &m, &meta(step)).map_err(data)?;
            Err(PipelineError::Diverged {
                step,
                path: path.display().to_string(),
            })
        }
        Err(TrainError::EmptyDataset) => Err(data("training set is empty")),
        Err(TrainError::Config(m)) => Err(PipelineError::Config(m)),
        Err(TrainError::Model(e)) => Err(data(e)),
    }
}

fn load_model(ctx: &mut Ctx) -> Result<(Model<f32>, DualVocabulary), PipelineError> {
    let vocab = load_vocab(ctx)?;
    let p = ctx.input(CHECKPOINT, Stage::Train)?;
    let (model, meta) = load_checkpoint::<f32>(&p).map_err(|e| data(format!("{}: {e}", p.display())))?;
    if meta.get("vocab_sha256").and_then(Value::as_str) != Some(ctx.inputs[VOCAB].as_str()) {
        return Err(data("the vocabulary changed after training; rerun `revfix train`"));
    }
    if model.config.source_vocab_size != vocab.source_size() || model.config.target_vocab_size != vocab.target_size() {
        return Err(data("checkpoint does not match the vocabulary"));
    }
    Ok((model, vocab))
}

/// Decode ranked suggestions for one framed sample.
pub fn suggest_sample(
    model: &Model<f32>,
    vocab: &DualVocabulary,
    sample: &TrainingSample,
    code_before: &str,
    localized: &LocalizedSample,
    beam: &BeamConfig,
    merge_duplicates: bool,
) -> Result<Vec<FixSuggestion>, PipelineError> {
    let enc = vocab.encode(sample);
    let encoded = model.encode(&enc.source_ids, &enc.source_ext).map_err(data)?;
    let hyps = beam_search(model, &encoded, beam).map_err(data)?;
    let (list, _) = suggestions_from_beam(&hyps, vocab, &enc.oov, code_before, &localized.region(), merge_duplicates);
    Ok(list)
}

fn file_name_of(path: &str) -> &str {
    path.rsplit('/').next().filter(|s| !s.is_empty()).unwrap_or("Fixed.java")
}

fn stage_suggest(ctx: &mut Ctx) -> StageResult {
    let (model, vocab) = load_model(ctx)?;
    let tests: Vec<TrainingSample> = read_jsonl(&ctx.input(TEST_SET, Stage::Prepare)?)?;
    check_variant(ctx, &tests, TEST_SET)?;
    let triples: Vec<ReviewTriple> = read_jsonl(&ctx.input(TRIPLES, Stage::Extract)?)?;
    let localized: Vec<LocalizedSample> = read_jsonl(&ctx.input(LOCALIZED, Stage::Localize)?)?;
    let by_id: HashMap<&str, &ReviewTriple> = triples.iter().map(|t| (t.id.as_str(), t)).collect();
    let loc: HashMap<&str, &LocalizedSample> = localized.iter().map(|l| (l.triple_id.as_str(), l)).collect();
    let beam = ctx.cfg.beam();
    let merge = ctx.cfg.merge_duplicates;
    let results: Vec<(String, String, Vec<FixSuggestion>)> = tests
        .par_iter()
        .map(|s| {
            let id = s.sample_id.as_str();
            let (Some(t), Some(l)) = (by_id.get(id), loc.get(id)) else {
                return Err(data(format!("test sample {id} has no triple or localization")));
            };
            let list = suggest_sample(&model, &vocab, s, &t.code_before, l, &beam, merge)?;
            Ok((id.to_string(), file_name_of(&t.file_path).to_string(), list))
        })
        .collect::<Result<_, _>>()?;

    let final_dir = ctx.path(SUGGESTIONS);
    let tmp_dir = ctx.path(".suggestions.tmp");
    if tmp_dir.exists() {
        fs::remove_dir_all(&tmp_dir).map_err(io_err(&tmp_dir))?;
    }
    let mut index = Vec::new();
    let mut outputs = Vec::new();
    for (id, name, list) in results {
        let dir = tmp_dir.join(&id);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let mut entries = Vec::new();
        for s in &list {
            let fixed = format!("{}_{name}", s.rank);
            fs::write(dir.join(&fixed), &s.fixed_file).map_err(io_err(&dir))?;
            outputs.push(format!("{SUGGESTIONS}/{id}/{fixed}"));
            entries.push(SuggestionEntry {
                rank: s.rank,
                score: s.score,
                target_text: s.target_text.clone(),
                fixed_file_path: fixed,
            });
        }
        let file = SuggestionFile {
            sample_id: id.clone(),
            suggestions: entries,
        };
        fs::write(dir.join("suggestions.json"), pretty(&file)).map_err(io_err(&dir))?;
        outputs.push(format!("{SUGGESTIONS}/{id}/suggestions.json"));
        index.push(file);
    }
    fs::create_dir_all(&tmp_dir).map_err(io_err(&tmp_dir))?;
    fs::write(tmp_dir.join("index.jsonl"), jsonl_bytes(&index)).map_err(io_err(&tmp_dir))?;
    if final_dir.exists() {
        fs::remove_dir_all(&final_dir).map_err(io_err(&final_dir))?;
    }
    fs::rename(&tmp_dir, &final_dir).map_err(io_err(&final_dir))?;
    outputs.push(SUGGESTION_INDEX.into());
    outputs.sort();
    let n = index.iter().map(|f| f.suggestions.len()).sum::<usize>();
    Ok((outputs, json!({ "samples": index.len(), "suggestions": n })))
}

fn label_name(t: &ReviewTriple) -> Option<String> {
    t.taxonomy_label
        .and_then(|l| serde_json::to_value(l).ok())
        .and_then(|v| v.as_str().map(str::to_string))
}

fn stage_evaluate(ctx: &mut Ctx) -> StageResult {
    let tests: Vec<TrainingSample> = read_jsonl(&ctx.input(TEST_SET, Stage::Prepare)?)?;
    let index: Vec<SuggestionFile> = read_jsonl(&ctx.input(SUGGESTION_INDEX, Stage::Suggest)?)?;
    let triples: Vec<ReviewTriple> = read_jsonl(&ctx.input(TRIPLES, Stage::Extract)?)?;
    let by_id: HashMap<&str, &ReviewTriple> = triples.iter().map(|t| (t.id.as_str(), t)).collect();
    let preds: HashMap<&str, &SuggestionFile> = index.iter().map(|f| (f.sample_id.as_str(), f)).collect();
    let mut samples = Vec::with_capacity(tests.len());
    for s in &tests {
        let id = s.sample_id.as_str();
        let file = preds.get(id).ok_or_else(|| PipelineError::MissingPrerequisite {
            path: format!("suggestions for {id}"),
            stage: Stage::Suggest,
        })?;
        let t = by_id.get(id).ok_or_else(|| data(format!("unknown test sample {id}")))?;
        samples.push(EvalSample {
            sample_id: id.to_string(),
            project: t.project.clone(),
            label: label_name(t),
            gold: detokenize_surfaces(&s.target_tokens).map_err(data)?,
            predictions: file.suggestions.iter().map(|e| e.target_text.clone()).collect(),
        });
    }
    let report = topk_accuracy(&samples, &DEFAULT_KS, ctx.cfg.eval_fingerprint());
    write_atomic(&ctx.path(REPORT_JSON), &pretty(&report))?;
    write_atomic(&ctx.path(REPORT_TABLE), report.to_table().as_bytes())?;
    write_atomic(&ctx.path(REPORT_CSV), format!("{}\n{}", crate::eval::CSV_HEADER, report.csv_rows()).as_bytes())?;
    Ok((
        vec![REPORT_JSON.into(), REPORT_TABLE.into(), REPORT_CSV.into()],
        json!({ "total": report.total, "topk": report.topk }),
    ))
}

fn stage_report(ctx: &mut Ctx) -> StageResult {
    let own: EvalReport = read_json(&ctx.input(REPORT_JSON, Stage::Evaluate)?)?;
    let Some(other_path) = ctx.opts.against.clone() else {
        print!("{}", own.to_table());
        return Ok((Vec::new(), json!({ "total": own.total })));
    };
    let other_path = if other_path.is_dir() { other_path.join(REPORT_JSON) } else { other_path };
    let other: EvalReport = read_json(&other_path)?;
    let (cc, c) = match (own.fingerprint.variant.as_str(), other.fingerprint.variant.as_str()) {
        ("cc", "c") => (&own, &other),
        ("c", "cc") => (&other, &own),
        (a, b) => {
            return Err(PipelineError::Config(format!(
                "comparison needs one cc and one c report, got {a} and {b}"
            )))
        }
    };
    let rows = crate::eval::compare_variants(cc, c).map_err(data)?;
    let table = crate::eval::comparison_table(&rows);
    print!("{table}");
    write_atomic(&ctx.path("comparison.json"), &pretty(&rows))?;
    write_atomic(&ctx.path("comparison.txt"), table.as_bytes())?;
    Ok((vec!["comparison.json".into(), "comparison.txt".into()], json!({ "rows": rows })))
}

/// Suggestions for an ad-hoc request: a file, the 1-based focus lines and
/// a review comment, decoded with the work directory's trained model.
pub fn suggest_for_file(
    cfg: &PipelineConfig,
    opts: &RunOptions,
    code: &str,
    focus_start: usize,
    focus_len: usize,
    comment: &str,
) -> Result<Vec<FixSuggestion>, PipelineError> {
    let mut ctx = Ctx {
        cfg,
        opts,
        stage: Stage::Suggest,
        inputs: BTreeMap::new(),
    };
    let (model, vocab) = load_model(&mut ctx)?;
    let localized = LocalizedSample {
        triple_id: "adhoc".into(),
        kind: EditKind::Update,
        focus_start,
        focus_len,
        target_lines: Vec::new(),
        distance: 0,
    };
    let (sample, _) = prepare_sample(code, comment, &localized, cfg.variant, &cfg.seq())
        .map_err(|r| data(format!("cannot frame the request: {}", r.name())))?;
    suggest_sample(&model, &vocab, &sample, code, &localized, &cfg.beam(), cfg.merge_duplicates)
}

/// Hashes of every file under `dir`, keyed by forward-slash relative path.
pub fn tree_hashes(dir: &Path) -> Result<BTreeMap<String, String>, PipelineError> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, String>) -> Result<(), PipelineError> {
        let mut entries: Vec<_> = fs::read_dir(dir)
            .map_err(io_err(dir))?
            .collect::<Result<_, _>>()
            .map_err(io_err(dir))?;
        entries.sort_by_key(|e| e.file_name());
        for e in entries {
            let p = e.path();
            if p.is_dir() {
                walk(root, &p, out)?;
            } else {
                let rel = p.strip_prefix(root).expect("under root");
                let key = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
                out.insert(key, sha256_file(&p)?);
            }
        }
        Ok(())
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out)?;
    Ok(out)
}
