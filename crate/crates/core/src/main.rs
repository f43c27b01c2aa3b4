use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{Map, Value};

use revfix::pipeline::{
    load_config_file, merge_config, run_stage, suggest_for_file, PipelineConfig, PipelineError, RunOptions, Source,
    Stage, SOURCE_ENV,
};

#[derive(Parser, Debug)]
#[command(name = "revfix", version, about = "Suggest code fixes from code review history")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Directory holding every artifact of the pipeline.
    #[arg(long, global = true, default_value = "work")]
    work_dir: PathBuf,

    /// JSON file with config knobs; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Fixture directory or Gerrit base URL for `mine`.
    #[arg(long, global = true, env = SOURCE_ENV)]
    source: Option<String>,

    /// Bearer token for a live server.
    #[arg(long, global = true, env = "REVFIX_TOKEN", hide_env_values = true)]
    token: Option<String>,

    /// Overwrite artifacts produced under a different configuration.
    #[arg(long, global = true)]
    force: bool,

    /// Worker threads for per-sample parallelism (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(flatten)]
    knobs: Knobs,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fetch review comments and file revisions into raw events.
    Mine,
    /// Filter noise, deduplicate and split chronologically.
    Extract,
    /// Pair each comment with the nearby change it triggered.
    Localize,
    /// Build the code and comment vocabularies from the training split.
    BuildVocab,
    /// Write the framed train and test datasets.
    Prepare,
    /// Train the encoder-decoder.
    Train,
    /// Decode ranked fixes for the test split, or for one file.
    Suggest(SuggestArgs),
    /// Top-k exact-match accuracy of the suggestions.
    Evaluate,
    /// Print the report, or compare it against another variant's.
    Report {
        /// Another work directory or its report.json; one of the two must be cc and the other c.
        #[arg(long)]
        against: Option<PathBuf>,
    },
    /// Run mine through evaluate.
    All,
}

#[derive(Args, Debug)]
struct SuggestArgs {
    /// Suggest for this file instead of the test split.
    #[arg(long, requires_all = ["line", "comment"])]
    file: Option<PathBuf>,
    /// First line of the code the comment is about (1-based).
    #[arg(long)]
    line: Option<usize>,
    /// Number of lines in the focus.
    #[arg(long, default_value_t = 1)]
    lines: usize,
    /// The review comment.
    #[arg(long)]
    comment: Option<String>,
    /// Directory for the fixed files of an ad-hoc request.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Config knobs. Each one is also a key of the config file; the defaults
/// shown are those of the reference baseline.
#[derive(Args, Debug, Default)]
struct Knobs {
    #[arg(long, global = true, help_heading = "Config", help = "Gerrit change query [default: status:merged]")]
    query: Option<String>,
    #[arg(long, global = true, help_heading = "Config", help = "Changes per page [default: 100]")]
    page_size: Option<usize>,
    #[arg(long, global = true, help_heading = "Config", help = "Stop after this many changes [default: unlimited]")]
    max_changes: Option<usize>,
    #[arg(long, global = true, help_heading = "Config", help = "Requests per second, 0 for none [default: 5]")]
    rate_limit: Option<f64>,
    #[arg(long, global = true, help_heading = "Config", help = "Per-project test fraction [default: 0.05]")]
    test_fraction: Option<f64>,
    #[arg(long, global = true, help_heading = "Config", help = "cc (code + comment) or c (code only) [default: cc]")]
    variant: Option<String>,
    #[arg(long, global = true, help_heading = "Config", help = "hard or soft [default: hard]")]
    tokenization: Option<String>,
    #[arg(long, global = true, help_heading = "Config", help = "Code window W in tokens [default: 400]")]
    window: Option<usize>,
    #[arg(long, global = true, help_heading = "Config", help = "Comment budget in tokens [default: 200]")]
    comment_limit: Option<usize>,
    #[arg(long, global = true, help_heading = "Config", help = "Target budget in tokens [default: 100]")]
    target_limit: Option<usize>,
    #[arg(long, global = true, help_heading = "Config", help = "Keep insertions before line 1 [default: false]")]
    include_insert_at_head: Option<bool>,
    #[arg(long, global = true, help_heading = "Config", help = "Code vocabulary size [default: 2000]")]
    code_vocab_size: Option<usize>,
    #[arg(long, global = true, help_heading = "Config", help = "Comment vocabulary size [default: 8000]")]
    comment_vocab_size: Option<usize>,
    #[arg(long, global = true, help_heading = "Config", help = "Embedding size [default: 256]")]
    embed_dim: Option<usize>,
    #[arg(long, global = true, help_heading = "Config", help = "Encoder LSTM size per direction [default: 128]")]
    encoder_hidden: Option<usize>,
    #[arg(long, global = true, help_heading = "Config", help = "Decoder LSTM size [default: 256]")]
    decoder_hidden: Option<usize>,
    #[arg(long, global = true, help_heading = "Config", help = "Dropout rate [default: 0.3]")]
    dropout: Option<f64>,
    #[arg(long, global = true, help_heading = "Config", help = "Coverage mechanism [default: false]")]
    coverage: Option<bool>,
    #[arg(long, global = true, help_heading = "Config", help = "Coverage loss weight [default: 1]")]
    coverage_weight: Option<f64>,
    #[arg(long, global = true, help_heading = "Config", help = "sgd or adam [default: sgd]")]
    optimizer: Option<String>,
    #[arg(long, global = true, help_heading = "Config", help = "Learning rate [default: 0.15]")]
    learning_rate: Option<f64>,
    #[arg(long, global = true, help_heading = "Config", help = "Batch size [default: 16]")]
    batch_size: Option<usize>,
    #[arg(long, global = true, help_heading = "Config", help = "Training steps [default: 80000]")]
    steps: Option<usize>,
    #[arg(long, global = true, help_heading = "Config", help = "Gradient norm clip [default: 2]")]
    clip_norm: Option<f64>,
    #[arg(long, global = true, help_heading = "Config", help = "Learning-rate factor on a validation plateau [default: 0.5]")]
    lr_decay: Option<f64>,
    #[arg(long, global = true, help_heading = "Config", help = "Steps between validation runs, 0 for none [default: 400]")]
    eval_every: Option<usize>,
    #[arg(long, global = true, help_heading = "Config", help = "Steps between checkpoints, 0 for none [default: 0]")]
    checkpoint_every: Option<usize>,
    #[arg(long, global = true, help_heading = "Config", help = "Training tail held out for validation [default: 0.05]")]
    valid_fraction: Option<f64>,
    #[arg(long, global = true, help_heading = "Config", help = "Beam width k [default: 10]")]
    beam_size: Option<usize>,
    #[arg(long, global = true, help_heading = "Config", help = "Suggestions kept, N <= k [default: 10]")]
    n_best: Option<usize>,
    #[arg(long, global = true, help_heading = "Config", help = "Length-normalized beam scores [default: false]")]
    length_normalize: Option<bool>,
    #[arg(long, global = true, help_heading = "Config", help = "Merge identical suggestions [default: true]")]
    merge_duplicates: Option<bool>,
    #[arg(long, global = true, help_heading = "Config", help = "Random seed [default: 1]")]
    seed: Option<u64>,
}

impl Knobs {
    fn overlay(&self) -> Value {
        let mut m = Map::new();
        let mut put = |k: &str, v: Option<Value>| {
            if let Some(v) = v {
                m.insert(k.to_string(), v);
            }
        };
        macro_rules! knob {
            ($($f:ident),*) => { $( put(stringify!($f), self.$f.clone().map(Value::from)); )* };
        }
        knob!(
            query, page_size, max_changes, rate_limit, test_fraction, variant, tokenization, window,
            comment_limit, target_limit, include_insert_at_head, code_vocab_size, comment_vocab_size,
            embed_dim, encoder_hidden, decoder_hidden, dropout, coverage, coverage_weight, optimizer,
            learning_rate, batch_size, steps, clip_norm, lr_decay, eval_every, checkpoint_every,
            valid_fraction, beam_size, n_best, length_normalize, merge_duplicates, seed
        );
        Value::Object(m)
    }
}

fn effective_config(cli: &Cli) -> Result<PipelineConfig, PipelineError> {
    let base = PipelineConfig::default();
    let from_file = match &cli.config {
        Some(p) => load_config_file(p, &base)?,
        None => base,
    };
    merge_config(&from_file, &cli.knobs.overlay())
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    if let Some(n) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
    }
    let cfg = effective_config(&cli)?;
    let mut opts = RunOptions::new(&cli.work_dir);
    opts.force = cli.force;
    if let Some(s) = &cli.source {
        opts.source = Some(Source::parse(s, cli.token.clone())?);
    }
    let stages: Vec<Stage> = match &cli.command {
        Command::Mine => vec![Stage::Mine],
        Command::Extract => vec![Stage::Extract],
        Command::Localize => vec![Stage::Localize],
        Command::BuildVocab => vec![Stage::BuildVocab],
        Command::Prepare => vec![Stage::Prepare],
        Command::Train => vec![Stage::Train],
        Command::Suggest(args) if args.file.is_some() => return adhoc_suggest(&cfg, &opts, args),
        Command::Suggest(_) => vec![Stage::Suggest],
        Command::Evaluate => vec![Stage::Evaluate],
        Command::Report { against } => {
            opts.against = against.clone();
            vec![Stage::Report]
        }
        Command::All => Stage::PIPELINE.to_vec(),
    };
    for stage in stages {
        let out = run_stage(stage, &cfg, &opts)?;
        if stage == Stage::Evaluate {
            let table = std::fs::read_to_string(cli.work_dir.join(revfix::pipeline::REPORT_TABLE)).unwrap_or_default();
            print!("{table}");
        }
        eprintln!("{}: {}", stage, out.stats);
    }
    Ok(())
}

fn adhoc_suggest(cfg: &PipelineConfig, opts: &RunOptions, args: &SuggestArgs) -> Result<(), PipelineError> {
    let path = args.file.as_ref().expect("checked by caller");
    let code = std::fs::read_to_string(path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
    let line = args.line.expect("required with --file");
    let comment = args.comment.as_deref().expect("required with --file");
    let list = suggest_for_file(cfg, opts, &code, line, args.lines, comment)?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("Fixed.java");
    for s in &list {
        println!("#{} score {:.4}", s.rank, s.score);
        println!("{}", s.target_text.trim_end_matches('\n'));
        if let Some(dir) = &args.out {
            let p = dir.join(format!("{}_{name}", s.rank));
            revfix::pipeline::write_atomic(&p, s.fixed_file.as_bytes())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
