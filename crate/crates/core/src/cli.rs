//! The `mixtag` command-line tool.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use log::info;
use serde::Serialize;

use crate::corpus::{
    generate_synthetic, load_corpus, relations_of, save_corpus, Sentence, SynthConfig,
};
use crate::embed::{load_word_vectors, WordLexicon};
use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::tagging::{Position, Role, Span, Tag, TagScheme, Triple};
use crate::training::{
    evaluate, run_gradcheck, train, write_metrics_csv, Checkpoint, GradcheckConfig, ModelConfig,
    TrainConfig,
};

/// Label written next to every confidence so readers know how it was produced.
pub const SCORING_LABEL: &str = "geometric-mean-span-tag-probability";

#[derive(Debug, Parser)]
#[command(name = "mixtag", version, about = "Joint entity-relation extraction by sequence tagging")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write a checkpoint plus a per-epoch metrics CSV.
    Train(TrainArgs),
    /// Score a checkpoint against a JSONL corpus.
    Eval(EvalArgs),
    /// Extract triples with ranked relation confidences as JSON lines.
    Extract(ExtractArgs),
    /// Train one model per bias weight and tabulate P/R/F1.
    SweepAlpha(SweepArgs),
    /// Compare backpropagated and finite-difference gradients on a toy model.
    Gradcheck(GradcheckArgs),
    /// Write a synthetic train/test corpus and matching word vectors.
    GenSynth(GenSynthArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Word vectors in text format; required unless --no-mixing.
    #[arg(long)]
    pub vectors: Option<PathBuf>,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 16)]
    pub batch: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub no_mixing: bool,
    #[arg(long)]
    pub no_attention: bool,
    /// Embedding, encoder and decoder sizes.
    #[arg(long, default_value = "300,300,600", value_name = "M,D_ENC,D_DEC")]
    pub dims: String,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Metrics CSV path; defaults to `<out>.metrics.csv`.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    /// Bias weight on non-O tags (default 3).
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub no_bias: bool,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Sentence to analyse; may be repeated.
    #[arg(long, conflicts_with = "data", required_unless_present = "data")]
    pub text: Vec<String>,
    /// JSONL corpus whose texts are analysed.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    pub top_k: usize,
    /// Include the full tag probability matrix of each sentence.
    #[arg(long)]
    pub dump_probs: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Training corpus.
    #[arg(long)]
    pub data: PathBuf,
    /// Held-out corpus to score; the training corpus is scored when absent.
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long, default_value = "1,2,3,4,5")]
    pub alphas: String,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value = "4,4,8", value_name = "M,D_ENC,D_DEC")]
    pub dims: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-4)]
    pub tolerance: f64,
    /// Negate the analytic gradient of one tensor (fault injection).
    #[arg(long, hide = true, value_name = "GROUP")]
    pub inject_sign_bug: Option<String>,
}

#[derive(Debug, Args)]
pub struct GenSynthArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 4)]
    pub relations: usize,
    #[arg(long, default_value_t = 250)]
    pub sentences: usize,
    #[arg(long, default_value_t = 0.8)]
    pub train_fraction: f64,
    #[arg(long, default_value_t = 300)]
    pub word_dim: usize,
    #[arg(long)]
    pub out_train: PathBuf,
    #[arg(long)]
    pub out_test: PathBuf,
    #[arg(long)]
    pub out_vectors: Option<PathBuf>,
}

/// Failure of a command, split by exit status.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error(transparent)]
    Run(#[from] Error),
    /// Already reported on stdout.
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Run(e.into())
    }
}

type CliResult<T = ()> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

pub fn parse_dims(s: &str) -> CliResult<(usize, usize, usize)> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| usage(format!("--dims expects three integers, got `{s}`")))?;
    match parts[..] {
        [m, e, d] if m > 0 && e > 0 && d > 0 => Ok((m, e, d)),
        _ => Err(usage(format!("--dims expects three positive integers, got `{s}`"))),
    }
}

pub fn parse_alphas(s: &str) -> CliResult<Vec<f64>> {
    let alphas: Vec<f64> = s
        .split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| p.parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| usage(format!("--alphas expects comma-separated numbers, got `{s}`")))?;
    if alphas.is_empty() {
        return Err(usage("--alphas must list at least one value"));
    }
    if let Some(a) = alphas.iter().find(|a| !(a.is_finite() && **a >= 1.0)) {
        return Err(usage(format!("bias weight must be at least 1, got {a}")));
    }
    Ok(alphas)
}

fn base_config(args: &ModelArgs) -> CliResult<(TrainConfig, Option<WordLexicon>)> {
    let (char_dim, encoder_dim, decoder_dim) = parse_dims(&args.dims)?;
    let lexicon = match (&args.vectors, args.no_mixing) {
        (None, false) => return Err(usage("--vectors is required unless --no-mixing is given")),
        (Some(_), true) => {
            return Err(usage("--vectors has no effect with --no-mixing; drop one of them"))
        }
        (Some(path), false) => Some(load_word_vectors(path)?),
        (None, true) => None,
    };
    if args.batch == 0 {
        return Err(usage("--batch must be at least 1"));
    }
    let cfg = TrainConfig {
        epochs: args.epochs,
        batch_size: args.batch,
        learning_rate: args.lr,
        seed: args.seed,
        model: ModelConfig {
            char_dim,
            encoder_dim,
            decoder_dim,
            use_word_mixing: !args.no_mixing,
            use_attention: !args.no_attention,
        },
        ..TrainConfig::default()
    };
    Ok((cfg, lexicon))
}

fn load_sentences(path: &Path) -> Result<Vec<Sentence>> {
    let loaded = load_corpus(path)?;
    if loaded.rejected_overlapping > 0 {
        eprintln!(
            "note: {} sentences with overlapping entities were excluded from {}",
            loaded.rejected_overlapping,
            path.display()
        );
    }
    Ok(loaded.sentences)
}

fn check_relations(scheme: &TagScheme, corpus: &[Sentence]) -> Result<()> {
    let unknown: Vec<String> = relations_of(corpus)
        .into_iter()
        .filter(|r| scheme.relation_index(r).is_none())
        .collect();
    if unknown.is_empty() {
        Ok(())
    } else {
        Err(Error::Mismatch(format!(
            "corpus uses relations the model was not trained on: {} (model knows: {})",
            unknown.join(", "),
            scheme.relations().join(", ")
        )))
    }
}

fn cmd_train(args: TrainArgs, out: &mut dyn Write) -> CliResult {
    if args.no_bias && args.alpha.is_some() {
        return Err(usage("--alpha cannot be combined with --no-bias"));
    }
    let (mut cfg, lexicon) = base_config(&args.model)?;
    cfg.alpha = args.alpha.unwrap_or(cfg.alpha);
    cfg.use_bias = !args.no_bias;
    if !(cfg.alpha.is_finite() && cfg.alpha >= 1.0) {
        return Err(usage(format!("--alpha must be at least 1, got {}", cfg.alpha)));
    }
    let corpus = load_sentences(&args.data)?;
    let relations = relations_of(&corpus);
    let outcome = train(&corpus, relations, lexicon, &cfg)?;
    outcome.checkpoint.save(&args.out)?;
    let metrics_path = args.metrics.unwrap_or_else(|| {
        let mut p = args.out.clone().into_os_string();
        p.push(".metrics.csv");
        PathBuf::from(p)
    });
    write_metrics_csv(BufWriter::new(File::create(&metrics_path)?), &outcome.history)?;
    writeln!(out, "checkpoint: {}", args.out.display())?;
    writeln!(out, "metrics: {}", metrics_path.display())?;
    Ok(())
}

fn cmd_eval(args: EvalArgs, out: &mut dyn Write) -> CliResult {
    let ckpt = Checkpoint::load(&args.model)?;
    let corpus = load_sentences(&args.data)?;
    check_relations(&ckpt.model.scheme, &corpus)?;
    let s = evaluate(&ckpt.model, &corpus)?;
    writeln!(
        out,
        "precision {:.4}\nrecall {:.4}\nf1 {:.4}\npredicted {}\ngold {}\ncorrect {}",
        s.precision, s.recall, s.f1, s.predicted, s.gold, s.correct
    )
    ?;
    Ok(())
}

/// Confidence of `relation` for a head/tail pair: the geometric mean, over
/// every character of both spans, of the probability of the tag with that
/// character's position letter, the relation and the matching role.
pub fn relation_confidence(
    probs: &Tensor,
    scheme: &TagScheme,
    head: Span,
    tail: Span,
    relation: usize,
) -> f64 {
    let mut log_sum = 0.0;
    let mut count = 0usize;
    for (span, role) in [(head, Role::Head), (tail, Role::Tail)] {
        for i in span.start..span.end {
            let tag = Tag::Entity {
                position: Position::within(i - span.start, span.len()),
                relation,
                role,
            };
            log_sum += probs.get(i, scheme.id(tag)).ln();
            count += 1;
        }
    }
    (log_sum / count as f64).exp()
}

#[derive(Debug, Serialize)]
pub struct Candidate {
    pub relation: String,
    pub confidence: f64,
}

#[derive(Debug, Serialize)]
pub struct PairReport {
    #[serde(flatten)]
    pub triple: Triple,
    /// Best-scoring relations for this head/tail pair, highest first.
    pub candidates: Vec<Candidate>,
}

/// One output line of `extract`.
#[derive(Debug, Serialize)]
pub struct ExtractReport {
    pub text: String,
    pub scoring: &'static str,
    pub triples: Vec<PairReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tags: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub probs: Option<Vec<Vec<f64>>>,
}

/// Ranks all relations for every decoded pair of a sentence.
pub fn extract_report(
    ckpt: &Checkpoint,
    text: &str,
    top_k: usize,
    dump_probs: bool,
) -> Result<ExtractReport> {
    let chars: Vec<char> = text.chars().collect();
    let pred = ckpt.model.predict(&chars)?;
    let scheme = &ckpt.model.scheme;
    let mut triples = Vec::with_capacity(pred.triples.len());
    for mut t in pred.triples {
        let mut candidates: Vec<Candidate> = scheme
            .relations()
            .iter()
            .enumerate()
            .map(|(r, name)| Candidate {
                relation: name.clone(),
                confidence: relation_confidence(&pred.probs, scheme, t.head_span, t.tail_span, r),
            })
            .collect();
        // stable sort keeps relation order among equal scores
        candidates.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));
        let own = scheme.relation_index(&t.relation).expect("decoded relation");
        t.confidence = Some(relation_confidence(
            &pred.probs,
            scheme,
            t.head_span,
            t.tail_span,
            own,
        ));
        candidates.truncate(top_k);
        triples.push(PairReport {
            triple: t,
            candidates,
        });
    }
    Ok(ExtractReport {
        text: text.to_string(),
        scoring: SCORING_LABEL,
        triples,
        tags: dump_probs.then(|| (0..scheme.len()).map(|i| scheme.name(i)).collect()),
        probs: dump_probs.then(|| {
            (0..pred.probs.rows())
                .map(|i| pred.probs.row_slice(i).to_vec())
                .collect()
        }),
    })
}

fn cmd_extract(args: ExtractArgs, out: &mut dyn Write) -> CliResult {
    let ckpt = Checkpoint::load(&args.model)?;
    if args.top_k == 0 {
        return Err(usage("--top-k must be at least 1"));
    }
    let texts = match &args.data {
        Some(path) => load_sentences(path)?.into_iter().map(|s| s.text).collect(),
        None => args.text.clone(),
    };
    for text in texts {
        if text.is_empty() {
            return Err(usage("cannot extract from an empty sentence"));
        }
        let report = extract_report(&ckpt, &text, args.top_k, args.dump_probs)?;
        serde_json::to_writer(&mut *out, &report).map_err(Error::from)?;
        writeln!(out)?;
    }
    Ok(())
}

fn cmd_sweep(args: SweepArgs, out: &mut dyn Write) -> CliResult {
    let alphas = parse_alphas(&args.alphas)?;
    let (base, lexicon) = base_config(&args.model)?;
    let corpus = load_sentences(&args.data)?;
    let held_out = match &args.test {
        Some(p) => load_sentences(p)?,
        None => corpus.clone(),
    };
    let relations = relations_of(&corpus);
    let mut rows = Vec::with_capacity(alphas.len());
    for &alpha in &alphas {
        let cfg = TrainConfig { alpha, ..base.clone() };
        let outcome = train(&corpus, relations.clone(), lexicon.clone(), &cfg)?;
        check_relations(&outcome.checkpoint.model.scheme, &held_out)?;
        let s = evaluate(&outcome.checkpoint.model, &held_out)?;
        info!("alpha {alpha}: F1 {:.4}", s.f1);
        rows.push((alpha, s));
    }
    let mut csv = BufWriter::new(File::create(&args.out)?);
    writeln!(csv, "alpha,precision,recall,f1")?;
    for (a, s) in &rows {
        writeln!(csv, "{a:.6},{:.6},{:.6},{:.6}", s.precision, s.recall, s.f1)
            ?;
    }
    csv.flush()?;
    let (best_alpha, best) = best_alpha(&rows);
    writeln!(
        out,
        "best alpha {best_alpha} with F1 {:.4} over {} values",
        best,
        rows.len()
    )
    ?;
    Ok(())
}

/// The α with the highest F1; ties go to the smallest α.
pub fn best_alpha(rows: &[(f64, crate::tagging::ExtractionScore)]) -> (f64, f64) {
    let mut best = (rows[0].0, rows[0].1.f1);
    for (a, s) in &rows[1..] {
        if s.f1 > best.1 || (s.f1 == best.1 && *a < best.0) {
            best = (*a, s.f1);
        }
    }
    best
}

fn cmd_gradcheck(args: GradcheckArgs, out: &mut dyn Write) -> CliResult {
    let (char_dim, encoder_dim, decoder_dim) = parse_dims(&args.dims)?;
    let cfg = GradcheckConfig {
        char_dim,
        encoder_dim,
        decoder_dim,
        seed: args.seed,
        tolerance: args.tolerance,
        ..GradcheckConfig::default()
    };
    let report = run_gradcheck(&cfg, args.inject_sign_bug.as_deref())?;
    if let Some(name) = &args.inject_sign_bug {
        if !report.iter().any(|g| &g.name == name) {
            return Err(usage(format!("no parameter group named `{name}`")));
        }
    }
    let mut failed = Vec::new();
    for g in &report {
        let ok = g.passes(cfg.tolerance);
        writeln!(
            out,
            "{:<20} {:>6} {:.3e} {}",
            g.name,
            g.count,
            g.max_relative_error,
            if ok { "ok" } else { "FAIL" }
        )
        ?;
        if !ok {
            failed.push(g.name.clone());
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Failed(format!(
            "gradient check failed for: {}",
            failed.join(", ")
        )))
    }
}

fn cmd_gen_synth(args: GenSynthArgs, out: &mut dyn Write) -> CliResult {
    let cfg = SynthConfig {
        seed: args.seed,
        n_relations: args.relations,
        n_sentences: args.sentences,
        train_fraction: args.train_fraction,
        word_dim: args.word_dim,
        ..SynthConfig::default()
    };
    let synth = generate_synthetic(&cfg).map_err(|e| usage(e.to_string()))?;
    save_corpus(&args.out_train, &synth.train)?;
    save_corpus(&args.out_test, &synth.test)?;
    if let Some(path) = &args.out_vectors {
        synth
            .lexicon
            .write(BufWriter::new(File::create(path)?))?;
    }
    writeln!(
        out,
        "train {} sentences, test {} sentences, {} relations",
        synth.train.len(),
        synth.test.len(),
        synth.relations.len()
    )
    ?;
    Ok(())
}

/// Runs one parsed command, writing its normal output to `out`.
pub fn execute(cli: Cli, out: &mut dyn Write) -> CliResult {
    match cli.command {
        Command::Train(a) => cmd_train(a, out),
        Command::Eval(a) => cmd_eval(a, out),
        Command::Extract(a) => cmd_extract(a, out),
        Command::SweepAlpha(a) => cmd_sweep(a, out),
        Command::Gradcheck(a) => cmd_gradcheck(a, out),
        Command::GenSynth(a) => cmd_gen_synth(a, out),
    }
}

/// Entry point used by the binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let stdout = io::stdout();
    let mut lock = stdout.lock();
    match execute(cli, &mut lock) {
        Ok(()) => 0,
        Err(e) => {
            let _ = lock.flush();
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
