//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{
    build_vocabulary, encode_corpus, load_split, load_vocabulary, read_raw_documents, save_split,
    save_vocabulary, Corpus, RawDocument, Split, Vocabulary, DEFAULT_MAX_SENTENCE_LEN, VOCAB_FILE,
};
use crate::error::{Error, Result};
use crate::generation::{topic_report, GenerateOptions, DEFAULT_BEAM_WIDTH, DEFAULT_MAX_LEN};
use crate::model::checkpoint::Checkpoint;
use crate::objective::{gradient_check, perplexity, GRADCHECK_TOLERANCE};
use crate::oracle::{make_synthetic_corpus, SyntheticSpec};
use crate::params::DecoderCell;
use crate::trainer::{train, TrainConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "sengen", version, about = "Sentence-level neural topic model")]
struct Cli {
    /// Worker threads for evaluation (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Segment, tokenize and encode raw text into a corpus directory.
    Preprocess(PreprocessArgs),
    /// Train a model on a corpus directory.
    Train(TrainArgs),
    /// Print the bound-based perplexity report of a checkpoint.
    Eval(EvalArgs),
    /// Print representative sentences per topic.
    Generate(GenerateArgs),
    /// Write a synthetic corpus with known sentence topics.
    Synth(SynthArgs),
    /// Check analytic gradients against finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
struct PreprocessArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    vocab_size: usize,
    /// Relative sizes, e.g. `8:1:1`.
    #[arg(long, default_value = "8:1:1")]
    split: String,
    /// Shuffle documents with this seed before splitting (input order otherwise).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = DEFAULT_MAX_SENTENCE_LEN)]
    max_sentence_len: usize,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value = "test")]
    split: Split,
    #[arg(long, default_value_t = 1)]
    eps_samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Vocabulary file; defaults to `vocab.txt` beside the checkpoint.
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Comma-separated topic ids; all topics when omitted.
    #[arg(long, value_delimiter = ',')]
    topics: Option<Vec<usize>>,
    #[arg(long, default_value_t = DEFAULT_BEAM_WIDTH)]
    beam: usize,
    #[arg(long, default_value_t = 3)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_MAX_LEN)]
    max_len: usize,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

/// Runs the command line `argv` (program name first) against the process's
/// standard streams.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(argv, &mut stdout.lock(), &mut stderr.lock())
}

pub fn run_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    let result = configure_threads(cli.threads).and_then(|()| dispatch(cli.command, out));
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            match e {
                Error::InvalidArgument(_) => EXIT_USAGE,
                e if e.is_numerical() => EXIT_NUMERICAL,
                _ => EXIT_DATA,
            }
        }
    }
}

/// The global pool can be configured once per process; later requests are
/// logged and ignored.
fn configure_threads(threads: Option<usize>) -> Result<()> {
    match threads {
        Some(0) => Err(Error::InvalidArgument("--threads must be positive".into())),
        Some(n) => {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                log::warn!("--threads {n} ignored: {e}");
            }
            Ok(())
        }
        None => Ok(()),
    }
}

fn io_err(e: std::io::Error) -> Error {
    Error::io("<stdout>", e)
}

fn dispatch(command: Command, out: &mut dyn Write) -> Result<i32> {
    match command {
        Command::Preprocess(a) => preprocess(a, out),
        Command::Train(a) => train_cmd(a, out),
        Command::Eval(a) => eval(a, out),
        Command::Generate(a) => generate(a, out),
        Command::Synth(a) => synth(a, out),
        Command::Gradcheck(a) => gradcheck(a, out),
    }
}

fn parse_ratios(s: &str) -> Result<[f64; 3]> {
    let parts: Vec<f64> = s
        .split(':')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::InvalidArgument(format!("bad --split {s:?}")))?;
    match parts[..] {
        [a, b, c] if [a, b, c].iter().all(|x| *x >= 0.0 && x.is_finite()) && a > 0.0 => Ok([a, b, c]),
        _ => Err(Error::InvalidArgument(format!(
            "--split expects train:valid:test with a positive train share, got {s:?}"
        ))),
    }
}

fn write_stats(out: &mut dyn Write, corpora: &[&Corpus]) -> Result<()> {
    for c in corpora {
        writeln!(out, "{}\t{}", c.split, c.stats()).map_err(io_err)?;
    }
    Ok(())
}

fn preprocess(a: PreprocessArgs, out: &mut dyn Write) -> Result<i32> {
    let [rt, rv, rs] = parse_ratios(&a.split)?;
    let mut docs: Vec<RawDocument> = read_raw_documents(&a.input)?
        .into_iter()
        .map(|(id, text)| RawDocument::from_text(id, &text))
        .collect();
    if let Some(seed) = a.seed {
        docs.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    let total = rt + rv + rs;
    let n = docs.len();
    let n_valid = (n as f64 * rv / total).floor() as usize;
    let n_test = (n as f64 * rs / total).floor() as usize;
    let n_train = n - n_valid - n_test;
    let (train_raw, rest) = docs.split_at(n_train);
    let (valid_raw, test_raw) = rest.split_at(n_valid);

    let vocab = Arc::new(build_vocabulary(train_raw, a.vocab_size)?);
    fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    save_vocabulary(&a.out, &vocab)?;
    let corpora = [
        encode_corpus(train_raw, &vocab, Split::Train, a.max_sentence_len),
        encode_corpus(valid_raw, &vocab, Split::Valid, a.max_sentence_len),
        encode_corpus(test_raw, &vocab, Split::Test, a.max_sentence_len),
    ];
    for c in &corpora {
        save_split(&a.out, c)?;
    }
    writeln!(out, "vocabulary\t{}", vocab.len()).map_err(io_err)?;
    write_stats(out, &corpora.iter().collect::<Vec<_>>())?;
    Ok(EXIT_OK)
}

fn load_corpus_split(dir: &Path, split: Split) -> Result<Corpus> {
    let vocab = Arc::new(load_vocabulary(dir)?);
    load_split(dir, vocab, split)
}

fn train_cmd(a: TrainArgs, out: &mut dyn Write) -> Result<i32> {
    let config = TrainConfig::load(&a.config)?;
    let vocab = Arc::new(load_vocabulary(&a.corpus)?);
    let train_c = load_split(&a.corpus, vocab.clone(), Split::Train)?;
    let valid_c = load_split(&a.corpus, vocab, Split::Valid)?;
    let outcome = train(&train_c, &valid_c, &config, &a.out)?;
    writeln!(
        out,
        "best_epoch\t{}\nbest_valid\t{}\ncheckpoint\t{}\nlog\t{}",
        outcome.best_epoch,
        outcome.best_valid,
        outcome.checkpoint.display(),
        outcome.log.display()
    )
    .map_err(io_err)?;
    Ok(EXIT_OK)
}

fn eval(a: EvalArgs, out: &mut dyn Write) -> Result<i32> {
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    let corpus = load_corpus_split(&a.corpus, a.split)?;
    let v = ckpt.params.model.emb.rows();
    if corpus.vocabulary.len() != v {
        return Err(Error::parse(
            a.corpus.display().to_string(),
            format!("vocabulary has {} entries, checkpoint expects {v}", corpus.vocabulary.len()),
        ));
    }
    let report = perplexity(&corpus, &ckpt.params, a.eps_samples, a.seed)?;
    report.write(&mut *out).map_err(io_err)?;
    Ok(EXIT_OK)
}

fn generate(a: GenerateArgs, out: &mut dyn Write) -> Result<i32> {
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    let vocab_path = a.vocab.clone().unwrap_or_else(|| {
        a.checkpoint
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .join(VOCAB_FILE)
    });
    let f = fs::File::open(&vocab_path).map_err(|e| Error::io(&vocab_path, e))?;
    let vocab: Vocabulary =
        crate::corpus::read_vocabulary(std::io::BufReader::new(f), &vocab_path.display().to_string())?;
    if let Some(bad) = a.topics.iter().flatten().find(|&&k| k >= ckpt.params.model.n_topics()) {
        return Err(Error::InvalidArgument(format!(
            "topic {bad} out of range for {} topics",
            ckpt.params.model.n_topics()
        )));
    }
    let opts = GenerateOptions {
        topics: a.topics,
        beam_width: a.beam,
        samples: a.samples,
        max_len: a.max_len,
        seed: a.seed,
    };
    if opts.beam_width == 0 || opts.max_len == 0 {
        return Err(Error::InvalidArgument("--beam and --max-len must be positive".into()));
    }
    let text = topic_report(&ckpt.params.model, &vocab, &opts)?;
    out.write_all(text.as_bytes()).map_err(io_err)?;
    Ok(EXIT_OK)
}

fn synth(a: SynthArgs, out: &mut dyn Write) -> Result<i32> {
    let spec = SyntheticSpec::load(&a.spec)?;
    let corpus = make_synthetic_corpus(&spec)?;
    corpus.save(&a.out)?;
    writeln!(out, "vocabulary\t{}", corpus.vocabulary.len()).map_err(io_err)?;
    write_stats(out, &corpus.splits().map(|s| &s.corpus))?;
    Ok(EXIT_OK)
}

fn gradcheck(a: GradcheckArgs, out: &mut dyn Write) -> Result<i32> {
    let mut worst = 0.0f64;
    for cell in [DecoderCell::Elman, DecoderCell::Gru] {
        for check in gradient_check(a.seed, cell)? {
            writeln!(out, "{cell}\t{}\t{:e}", check.name, check.max_rel_error).map_err(io_err)?;
            worst = worst.max(check.max_rel_error);
        }
    }
    writeln!(out, "max_relative_error\t{worst:e}").map_err(io_err)?;
    if worst < GRADCHECK_TOLERANCE {
        Ok(EXIT_OK)
    } else {
        writeln!(out, "FAILED: tolerance {GRADCHECK_TOLERANCE:e}").map_err(io_err)?;
        Ok(EXIT_NUMERICAL)
    }
}
