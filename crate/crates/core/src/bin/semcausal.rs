//! `semcausal`: generate, validate, train on and evaluate causal-reasoning
//! benchmarks.
//!
//! Exit codes: 0 success, 1 usage error, 2 validation failure, 3 runtime or
//! numeric failure.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use semcausal::dataset::{
    format_jsonl, generate_suite, read_jsonl, validate_file, DatasetError, GenerationSpec, Suite, SuiteParams, Task,
};
use semcausal::eval::{predict_dataset, EvalReport, RunMetadata, SuiteResult};
use semcausal::model::{decode_model, encode_model, ModelConfig, ModelError};
use semcausal::semantic::DsepAlignment;
use semcausal::text::MAX_SEQ_LEN;
use semcausal::trainer::{train, AdamWConfig, TrainConfig, TrainError};

const OUT_DIR_ENV: &str = "SEMCAUSAL_OUT_DIR";
const DEFAULT_SEED: u64 = 0;

#[derive(Parser, Debug)]
#[command(
    name = "semcausal",
    version,
    about = "Causal-reasoning benchmarks with a semantic consistency loss"
)]
#[command(args_override_self = true)]
struct Cli {
    /// key=value file whose entries apply to the subcommand; flags on the
    /// command line take precedence.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Print the fully resolved configuration as JSON and exit.
    #[arg(long, global = true)]
    show_config: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a validated benchmark suite as JSONL.
    Gen(GenArgs),
    /// Train the classifier with cross-entropy plus the semantic loss.
    Train(TrainArgs),
    /// Evaluate a model on one or more suites.
    Eval(EvalArgs),
    /// Re-validate every line of a JSONL dataset.
    Validate(ValidateArgs),
}

impl Command {
    const NAMES: [&'static str; 4] = ["gen", "train", "eval", "validate"];
}

#[derive(Args, Debug, Clone, Serialize)]
struct GenArgs {
    #[arg(long, value_parser = parse_from_str::<Task>)]
    task: Task,
    #[arg(long, value_parser = parse_from_str::<Suite>)]
    suite: Suite,
    #[arg(long)]
    count: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Output JSONL path [default: $SEMCAUSAL_OUT_DIR/<task>-<suite>.jsonl].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Chain length or node count, as N or MIN-MAX.
    #[arg(long, value_parser = parse_range)]
    length: Option<RangeInclusive<usize>>,
    /// Node-name length in characters, as N or MIN-MAX.
    #[arg(long, value_parser = parse_range)]
    name_len: Option<RangeInclusive<usize>>,
    /// Edge density range for DAGs, as MIN-MAX.
    #[arg(long, value_parser = parse_float_range)]
    density: Option<(f64, f64)>,
    /// Comma-separated edge-flip probabilities for chains.
    #[arg(long, value_delimiter = ',')]
    p_flip: Option<Vec<f64>>,
    /// Conditioning-set size, as N or MIN-MAX.
    #[arg(long, value_parser = parse_range)]
    cond_size: Option<RangeInclusive<usize>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Switch {
    On,
    Off,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Alignment {
    Oracle,
    Inverted,
}

#[derive(Args, Debug, Clone, Serialize)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// Optional probe set checked for collapse after every epoch.
    #[arg(long)]
    probe: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Switch::On)]
    semantic: Switch,
    #[arg(long, default_value_t = TrainConfig::default().lambda_start)]
    lambda_start: f64,
    #[arg(long, default_value_t = TrainConfig::default().lambda_end)]
    lambda_end: f64,
    #[arg(long, default_value_t = TrainConfig::default().epochs)]
    epochs: usize,
    #[arg(long, default_value_t = TrainConfig::default().batch_size)]
    batch_size: usize,
    #[arg(long, default_value_t = TrainConfig::default().optimizer.learning_rate)]
    lr: f64,
    #[arg(long, default_value_t = TrainConfig::default().optimizer.weight_decay)]
    weight_decay: f64,
    #[arg(long, default_value_t = TrainConfig::default().warmup_steps)]
    warmup_steps: u64,
    #[arg(long, default_value_t = ModelConfig::default().d_embed)]
    d_embed: usize,
    #[arg(long, default_value_t = ModelConfig::default().d_hidden)]
    d_hidden: usize,
    #[arg(long, default_value_t = MAX_SEQ_LEN)]
    max_seq_len: usize,
    /// How a "Yes" answer maps onto d-separation when scoring consistency.
    #[arg(long, value_enum, default_value_t = Alignment::Oracle)]
    dsep_alignment: Alignment,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Model path [default: $SEMCAUSAL_OUT_DIR/model.bin]; the step log,
    /// summary and manifest are written next to it.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Json,
    Csv,
}

#[derive(Args, Debug, Clone, Serialize)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    /// One or more comma-separated suite files; each file stem names its suite.
    #[arg(long, value_delimiter = ',', required = true)]
    data: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    /// Report path [default: $SEMCAUSAL_OUT_DIR/eval.<format>].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
struct ValidateArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Report path [default: $SEMCAUSAL_OUT_DIR/validation.json].
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_from_str<T: std::str::FromStr<Err = String>>(s: &str) -> Result<T, String> {
    s.parse()
}

fn parse_range(s: &str) -> Result<RangeInclusive<usize>, String> {
    let num = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("{t:?}: {e}"));
    let (lo, hi) = match s.split_once('-') {
        Some((a, b)) => (num(a)?, num(b)?),
        None => (num(s)?, num(s)?),
    };
    if lo > hi {
        return Err(format!("empty range {s:?}"));
    }
    Ok(lo..=hi)
}

fn parse_float_range(s: &str) -> Result<(f64, f64), String> {
    let num = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}"));
    let (lo, hi) = match s.split_once('-') {
        Some((a, b)) => (num(a)?, num(b)?),
        None => (num(s)?, num(s)?),
    };
    if lo > hi {
        return Err(format!("empty range {s:?}"));
    }
    Ok((lo, hi))
}

/// A failure carrying its exit code.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Validation(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Validation(_) => 2,
            Failure::Runtime(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Validation(m) | Failure::Runtime(m) => m,
        }
    }
}

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(format!("{}: {e}", path.display()))
}

fn dataset_failure(path: &Path, e: DatasetError) -> Failure {
    match e {
        DatasetError::Io(e) => io_failure(path, e),
        DatasetError::InvalidSpec(m) => Failure::Usage(m),
        other => Failure::Validation(format!("{}: {other}", path.display())),
    }
}

#[derive(Debug, Serialize)]
struct FileHash {
    path: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct RunManifest<'a, A: Serialize> {
    subcommand: &'a str,
    flags: &'a A,
    seed: Option<u64>,
    inputs: Vec<FileHash>,
    outputs: Vec<FileHash>,
    version: &'static str,
    duration_seconds: f64,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn hash_file(path: &Path) -> Result<FileHash, Failure> {
    let bytes = fs::read(path).map_err(|e| io_failure(path, e))?;
    Ok(FileHash {
        path: path.display().to_string(),
        sha256: sha256_hex(&bytes),
    })
}

/// Writes through a temporary file in the destination directory, then renames.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<FileHash, Failure> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| io_failure(dir, e))?;
    tmp.write_all(bytes).map_err(|e| io_failure(path, e))?;
    tmp.as_file().sync_all().map_err(|e| io_failure(path, e))?;
    tmp.persist(path).map_err(|e| io_failure(path, e.error))?;
    Ok(FileHash {
        path: path.display().to_string(),
        sha256: sha256_hex(bytes),
    })
}

fn to_json<T: Serialize + ?Sized>(value: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s.into_bytes()
}

/// `base` with `suffix` appended to its file name.
fn sibling(base: &Path, suffix: &str) -> PathBuf {
    let mut name = base.file_name().map(OsString::from).unwrap_or_default();
    name.push(suffix);
    base.with_file_name(name)
}

fn default_out(out: &Option<PathBuf>, name: &str) -> PathBuf {
    out.clone().unwrap_or_else(|| {
        let dir = std::env::var_os(OUT_DIR_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("."));
        dir.join(name)
    })
}

fn write_manifest<A: Serialize>(
    out: &Path,
    subcommand: &str,
    flags: &A,
    seed: Option<u64>,
    inputs: Vec<FileHash>,
    outputs: Vec<FileHash>,
    started: Instant,
) -> Result<(), Failure> {
    let manifest = RunManifest {
        subcommand,
        flags,
        seed,
        inputs,
        outputs,
        version: env!("CARGO_PKG_VERSION"),
        duration_seconds: started.elapsed().as_secs_f64(),
    };
    write_atomic(&sibling(out, ".manifest.json"), &to_json(&manifest))?;
    Ok(())
}

// ---------------------------------------------------------------- gen

fn generation_spec(args: &GenArgs) -> Result<GenerationSpec, Failure> {
    if args.suite == Suite::Adversarial && args.task == Task::DSeparation {
        return Err(Failure::Usage(
            "the adversarial suite is defined only for --task transitivity".into(),
        ));
    }
    let mut spec = GenerationSpec::new(args.task, args.suite, args.count, args.seed);
    let p: &mut SuiteParams = &mut spec.params;
    if let Some(r) = &args.length {
        p.chain_len = r.clone();
        p.num_nodes = r.clone();
    }
    if let Some(r) = &args.name_len {
        p.name_len = r.clone();
    }
    if let Some(d) = args.density {
        p.density = d;
    }
    if let Some(v) = &args.p_flip {
        p.p_flip = v.clone();
    }
    if let Some(r) = &args.cond_size {
        p.cond_size = r.clone();
    }
    spec.params.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    if spec.count == 0 {
        return Err(Failure::Usage("--count must be at least 1".into()));
    }
    Ok(spec)
}

fn cmd_gen(args: &GenArgs) -> Result<(), Failure> {
    let started = Instant::now();
    let spec = generation_spec(args)?;
    let out = default_out(&args.out, &format!("{}-{}.jsonl", args.task, args.suite));
    let (examples, report) = generate_suite(&spec).map_err(|e| dataset_failure(&out, e))?;
    let data = write_atomic(&out, format_jsonl(&examples).as_bytes())?;
    let rep = write_atomic(&sibling(&out, ".report.json"), &to_json(&report))?;
    write_manifest(&out, "gen", args, Some(args.seed), vec![], vec![data, rep], started)?;
    eprintln!(
        "wrote {} examples to {} (acceptance rate {:.3})",
        examples.len(),
        out.display(),
        report.acceptance_rate
    );
    Ok(())
}

// ---------------------------------------------------------------- train

fn train_config(args: &TrainArgs) -> Result<TrainConfig, Failure> {
    let cfg = TrainConfig {
        epochs: args.epochs,
        batch_size: args.batch_size,
        optimizer: AdamWConfig {
            learning_rate: args.lr,
            weight_decay: args.weight_decay,
            ..AdamWConfig::default()
        },
        warmup_steps: args.warmup_steps,
        lambda_start: args.lambda_start,
        lambda_end: args.lambda_end,
        semantic_enabled: args.semantic == Switch::On,
        dsep_alignment: match args.dsep_alignment {
            Alignment::Oracle => DsepAlignment::Oracle,
            Alignment::Inverted => DsepAlignment::Inverted,
        },
        seed: args.seed,
        model: ModelConfig {
            d_embed: args.d_embed,
            d_hidden: args.d_hidden,
            max_seq_len: args.max_seq_len,
            ..ModelConfig::default()
        },
    };
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(cfg)
}

fn cmd_train(args: &TrainArgs) -> Result<(), Failure> {
    let started = Instant::now();
    let cfg = train_config(args)?;
    let data = read_jsonl(&args.data).map_err(|e| dataset_failure(&args.data, e))?;
    let probe = match &args.probe {
        Some(p) => Some(read_jsonl(p).map_err(|e| dataset_failure(p, e))?),
        None => None,
    };
    let (model, log) = train(&data, &cfg, probe.as_deref()).map_err(|e| match e {
        TrainError::EmptyDataset | TrainError::Tokenize { .. } => {
            Failure::Validation(format!("{}: {e}", args.data.display()))
        }
        TrainError::Config(m) => Failure::Usage(m),
        other => Failure::Runtime(other.to_string()),
    })?;
    let out = default_out(&args.out, "model.bin");
    let mut csv_bytes = Vec::new();
    log.write_csv(&mut csv_bytes)
        .map_err(|e| Failure::Runtime(e.to_string()))?;
    let outputs = vec![
        write_atomic(&out, &encode_model(&model))?,
        write_atomic(&sibling(&out, ".log.csv"), &csv_bytes)?,
        write_atomic(
            &sibling(&out, ".summary.json"),
            &to_json(&log.summary(&cfg, data.len())),
        )?,
    ];
    let mut inputs = vec![hash_file(&args.data)?];
    if let Some(p) = &args.probe {
        inputs.push(hash_file(p)?);
    }
    write_manifest(&out, "train", args, Some(args.seed), inputs, outputs, started)?;
    eprintln!("trained {} steps; model written to {}", log.steps.len(), out.display());
    Ok(())
}

// ---------------------------------------------------------------- eval

fn suite_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn cmd_eval(args: &EvalArgs) -> Result<(), Failure> {
    let started = Instant::now();
    let model_bytes = fs::read(&args.model).map_err(|e| io_failure(&args.model, e))?;
    let model = decode_model(&model_bytes).map_err(|e| match e {
        ModelError::VocabMismatch => Failure::Validation(format!(
            "{}: model vocabulary is incompatible with this tokenizer (vocabulary hash mismatch)",
            args.model.display()
        )),
        other => Failure::Validation(format!("{}: {other}", args.model.display())),
    })?;
    let mut suites = Vec::new();
    let mut inputs = vec![FileHash {
        path: args.model.display().to_string(),
        sha256: sha256_hex(&model_bytes),
    }];
    for path in &args.data {
        let examples = read_jsonl(path).map_err(|e| dataset_failure(path, e))?;
        let preds = predict_dataset(&model, &examples);
        if preds.unpredictable > 0 {
            return Err(Failure::Validation(format!(
                "{}: {} examples contain characters outside the model vocabulary; data and model are incompatible",
                path.display(),
                preds.unpredictable
            )));
        }
        let result = SuiteResult::from_predictions(&suite_name(path), &examples, &preds)
            .map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))?;
        suites.push(result);
        inputs.push(hash_file(path)?);
    }
    let metadata = RunMetadata {
        model_sha256: inputs[0].sha256.clone(),
        dataset_sha256: inputs[1..].iter().map(|h| h.sha256.clone()).collect(),
        seed: args.seed,
    };
    let report = EvalReport::new(suites, metadata).map_err(|e| Failure::Validation(e.to_string()))?;
    let (ext, bytes) = match args.format {
        Format::Json => (
            "json",
            report
                .to_json()
                .map_err(|e| Failure::Runtime(e.to_string()))?
                .into_bytes(),
        ),
        Format::Csv => {
            let mut buf = Vec::new();
            report
                .write_csv(&mut buf)
                .map_err(|e| Failure::Runtime(e.to_string()))?;
            ("csv", buf)
        }
    };
    let out = default_out(&args.out, &format!("eval.{ext}"));
    let written = write_atomic(&out, &bytes)?;
    write_manifest(&out, "eval", args, Some(args.seed), inputs, vec![written], started)?;
    for s in &report.suites {
        eprintln!(
            "{}: accuracy {:.3} f1 {:.3} collapsed {}",
            s.suite, s.metrics.accuracy, s.metrics.f1, s.collapse.collapsed
        );
    }
    Ok(())
}

// ---------------------------------------------------------------- validate

fn cmd_validate(args: &ValidateArgs) -> Result<(), Failure> {
    let started = Instant::now();
    let report = validate_file(&args.input).map_err(|e| dataset_failure(&args.input, e))?;
    let out = default_out(&args.out, "validation.json");
    let written = write_atomic(&out, &to_json(&report))?;
    write_manifest(
        &out,
        "validate",
        args,
        None,
        vec![hash_file(&args.input)?],
        vec![written],
        started,
    )?;
    if report.attempted == 0 {
        return Err(Failure::Validation(format!(
            "{}: no lines to validate",
            args.input.display()
        )));
    }
    if report.total_rejections() > 0 {
        let mut msg = format!(
            "{}: {} of {} lines rejected",
            args.input.display(),
            report.total_rejections(),
            report.attempted
        );
        for f in &report.failures {
            msg.push_str(&format!("\n  line {}: {} ({})", f.line, f.reason, f.detail));
        }
        return Err(Failure::Validation(msg));
    }
    eprintln!("{}: {} lines valid", args.input.display(), report.accepted);
    Ok(())
}

// ---------------------------------------------------------------- config

/// Parses `key=value` lines; blank lines and `#` comments are ignored.
fn read_config(path: &Path) -> Result<Vec<(String, String)>, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Failure::Usage(format!("{}:{}: expected key=value", path.display(), i + 1)))?;
        out.push((k.trim().replace('_', "-"), v.trim().to_string()));
    }
    Ok(out)
}

/// Inserts config entries right after the subcommand name, so that any
/// explicit flag (which comes later) overrides them.
fn merge_config(argv: &[OsString], entries: &[(String, String)]) -> Vec<OsString> {
    let pos = argv
        .iter()
        .position(|a| Command::NAMES.iter().any(|n| a == n))
        .map_or(argv.len(), |p| p + 1);
    let mut merged = argv[..pos].to_vec();
    merged.extend(entries.iter().map(|(k, v)| OsString::from(format!("--{k}={v}"))));
    merged.extend_from_slice(&argv[pos..]);
    merged
}

fn parse_cli(argv: Vec<OsString>) -> Result<Cli, clap::Error> {
    let matches = Cli::command().try_get_matches_from(&argv)?;
    Cli::from_arg_matches(&matches)
}

#[derive(Serialize)]
struct AllDefaults {
    gen: BTreeMap<String, BTreeMap<String, SuiteParams>>,
    train: TrainConfig,
}

fn show_config(command: &Option<Command>) -> Result<(), Failure> {
    let json = match command {
        Some(Command::Gen(a)) => to_json(&generation_spec(a)?),
        Some(Command::Train(a)) => to_json(&train_config(a)?),
        Some(Command::Eval(a)) => to_json(a),
        Some(Command::Validate(a)) => to_json(a),
        None => {
            let mut gen = BTreeMap::new();
            for task in [Task::Transitivity, Task::DSeparation] {
                let per_suite = Suite::ALL
                    .iter()
                    .filter(|&&s| !(task == Task::DSeparation && s == Suite::Adversarial))
                    .map(|&s| (s.to_string(), SuiteParams::defaults(task, s)))
                    .collect();
                gen.insert(task.to_string(), per_suite);
            }
            to_json(&AllDefaults {
                gen,
                train: TrainConfig::default(),
            })
        }
    };
    std::io::stdout()
        .write_all(&json)
        .map_err(|e| Failure::Runtime(e.to_string()))
}

fn run(cli: Cli) -> Result<(), Failure> {
    if cli.show_config {
        return show_config(&cli.command);
    }
    match &cli.command {
        Some(Command::Gen(a)) => cmd_gen(a),
        Some(Command::Train(a)) => cmd_train(a),
        Some(Command::Eval(a)) => cmd_eval(a),
        Some(Command::Validate(a)) => cmd_validate(a),
        None => Err(Failure::Usage("a subcommand is required (see --help)".into())),
    }
}

fn clap_exit(e: clap::Error) -> ExitCode {
    let _ = e.print();
    if e.use_stderr() {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    }
}

fn main() -> ExitCode {
    let argv: Vec<OsString> = std::env::args_os().collect();
    let mut cli = match parse_cli(argv.clone()) {
        Ok(c) => c,
        Err(e) => return clap_exit(e),
    };
    if let Some(path) = cli.config.clone() {
        let entries = match read_config(&path) {
            Ok(e) => e,
            Err(f) => {
                eprintln!("error: {}", f.message());
                return ExitCode::from(f.code());
            }
        };
        cli = match parse_cli(merge_config(&argv, &entries)) {
            Ok(c) => c,
            Err(e) => return clap_exit(e),
        };
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
