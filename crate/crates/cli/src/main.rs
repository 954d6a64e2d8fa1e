//! `discner` command-line tool.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::{info, warn};
use serde_json::json;

use discner::bench::{bench_types, BenchConfig, BenchError};
use discner::corpus::{read_corpus_with, sentence_to_json, write_corpus_to, CorpusError};
use discner::counting::{
    count_combinations, count_grid_dags, count_linear_canonical, dominant_growth, grid_matrix_f64,
    CountError, CountStateSpace, LINEAR_MAX_N,
};
use discner::decode::Heuristic;
use discner::eval::evaluate;
use discner::experiment::ambiguity_experiment;
use discner::features::default_templates;
use discner::hypergraph::{encode_mentions, EncodedSubgraph, HyperDecoder, Schema, Variant};
use discner::mention::{AnnotatedSentence, Corpus};
use discner::model::{GraphCache, Model, ModelError, ModelKind, ModelSpec};
use discner::synth::{generate_synthetic, SynthConfig, SynthError};
use discner::tagging::{encode_linear, LinearDecoder, TagSequence};
use discner::train::{score, select_lambda, train, TrainConfig, TrainError, LAMBDA_GRID};

#[derive(Debug, Parser)]
#[command(
    name = "discner",
    version,
    about = "Discontiguous and overlapping mention recognition"
)]
struct Cli {
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CountSchema {
    All,
    Linear,
    Shared,
    Split,
    Combinations,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SpectrumSchema {
    Shared,
    Split,
    Grid,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model; with --dev and no --lambda, lambda is chosen on dev.
    Train {
        #[arg(long, value_parser = parse_kind)]
        model: ModelKind,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        dev: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 500)]
        max_iters: u64,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Remove transitions into incompatible inside tags (linear only).
        #[arg(long)]
        forbid_invalid_transitions: bool,
    },
    /// Tag a corpus with a trained model.
    Predict {
        #[arg(long)]
        model_file: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "enough", value_parser = parse_heuristic)]
        heuristic: Heuristic,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Exact-match precision, recall and F1 of predictions against gold.
    Eval {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long, default_value_t = 3)]
        k: usize,
    },
    /// Print the gold encoding of each sentence.
    Encode {
        #[arg(long, value_parser = parse_kind)]
        model: ModelKind,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long)]
        input: PathBuf,
    },
    /// Turn `encode` output back into mentions.
    Decode {
        #[arg(long, value_parser = parse_kind)]
        model: ModelKind,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value = "enough", value_parser = parse_heuristic)]
        heuristic: Heuristic,
        #[arg(long)]
        input: PathBuf,
    },
    /// Canonical-encoding counts per sentence length, as TSV.
    Count {
        #[arg(long, value_enum, default_value = "all")]
        schema: CountSchema,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value_t = 5)]
        n_max: usize,
        /// Enumerate linear encodings exactly up to this length; longer
        /// lengths report the 2^(3n) bound.
        #[arg(long, default_value_t = 3)]
        linear_exact: usize,
    },
    /// Dominant growth rate of the encoding counts, as JSON.
    Spectrum {
        #[arg(long, value_enum)]
        schema: SpectrumSchema,
        #[arg(long, default_value_t = 3)]
        k: usize,
    },
    /// Generate a synthetic corpus.
    Synth {
        /// JSON generator config; missing keys take default values.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        sentences: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time gradient passes as the number of entity types grows.
    Bench {
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16")]
        types: Vec<usize>,
        #[arg(long, default_value_t = 50)]
        sentences: usize,
        #[arg(long, default_value_t = 3)]
        passes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Decode every model's gold encoding and report the errors.
    Ambiguity {
        /// Corpus to analyze; a synthetic corpus when absent.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 500)]
        sentences: usize,
    },
}

fn parse_kind(s: &str) -> Result<ModelKind, String> {
    s.parse()
}

fn parse_heuristic(s: &str) -> Result<Heuristic, String> {
    s.parse()
}

/// Failure classes, mapped to exit codes 1, 2 and 3.
#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(String),
    Numerical(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Data(m) | Failure::Numerical(m) => m,
        }
    }
}

/// Closed downstream pipe; not an error for a command-line filter.
const PIPE_CLOSED: &str = "broken pipe";

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        if e.kind() == io::ErrorKind::BrokenPipe {
            return Failure::Data(PIPE_CLOSED.into());
        }
        Failure::Data(e.to_string())
    }
}

impl From<CorpusError> for Failure {
    fn from(e: CorpusError) -> Self {
        Failure::Data(e.to_string())
    }
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        Failure::Data(e.to_string())
    }
}

impl From<SynthError> for Failure {
    fn from(e: SynthError) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<CountError> for Failure {
    fn from(e: CountError) -> Self {
        match e {
            CountError::InstanceTooLarge { .. } => Failure::Usage(e.to_string()),
            CountError::NonConvergence { .. } => Failure::Numerical(e.to_string()),
        }
    }
}

impl From<TrainError> for Failure {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::NonFinite | TrainError::Optimizer(_) => Failure::Numerical(e.to_string()),
            TrainError::NegativeLambda(_) => Failure::Usage(e.to_string()),
            TrainError::NoEncodableInstances | TrainError::Model(_) => Failure::Data(e.to_string()),
        }
    }
}

impl From<BenchError> for Failure {
    fn from(e: BenchError) -> Self {
        Failure::Data(e.to_string())
    }
}

fn output(path: Option<&Path>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn print_json(value: &impl serde::Serialize) -> io::Result<()> {
    let mut w = output(None)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()
}

fn read(path: &Path, k: usize) -> Result<Corpus, Failure> {
    read_corpus_with(path, k).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn check_k(k: usize) -> Result<(), Failure> {
    if k == 0 || k > 8 {
        return Err(Failure::Usage(format!(
            "--k must be between 1 and 8, got {k}"
        )));
    }
    Ok(())
}

fn variant(kind: ModelKind) -> Option<Variant> {
    kind.variant()
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Train {
            model,
            k,
            lambda,
            train: train_path,
            dev,
            out,
            max_iters,
            workers,
            seed,
            forbid_invalid_transitions,
        } => {
            check_k(k)?;
            let corpus = read(&train_path, k)?;
            if corpus.is_empty() {
                return Err(Failure::Data(format!(
                    "{} has no sentences",
                    train_path.display()
                )));
            }
            let templates = default_templates(&corpus);
            let mut spec = ModelSpec::new(model, k, corpus.labels());
            spec.forbid_invalid = forbid_invalid_transitions;
            let config = TrainConfig {
                lambda: lambda.unwrap_or(TrainConfig::default().lambda),
                max_iters,
                workers,
                seed,
                ..TrainConfig::default()
            };
            let trained = match (&dev, lambda) {
                (Some(dev_path), None) => {
                    let dev = read(dev_path, k)?;
                    let (m, report) =
                        select_lambda(&corpus, &dev, &spec, &templates, &config, &LAMBDA_GRID)?;
                    for (l, prf) in report {
                        eprintln!("lambda {l}\tdev F1 {:.4}", prf.f1);
                    }
                    m
                }
                _ => {
                    let m = train(&corpus, &spec, &templates, &config)?;
                    if let Some(dev_path) = &dev {
                        let prf = score(&m, &read(dev_path, k)?, Heuristic::Enough)?;
                        eprintln!("dev F1 {:.4}", prf.f1);
                    }
                    m
                }
            };
            if trained.meta.skipped > 0 {
                warn!(
                    "{} training sentences could not be encoded and were skipped",
                    trained.meta.skipped
                );
            }
            trained.save(&out)?;
            info!("wrote {}", out.display());
            eprintln!(
                "lambda {}\titerations {}\tobjective {:.6}\tfeatures {}\tskipped {}",
                trained.meta.lambda,
                trained.meta.iterations,
                trained.meta.objective,
                trained.weights.len(),
                trained.meta.skipped
            );
        }
        Command::Predict {
            model_file,
            input,
            heuristic,
            output: out,
        } => {
            let model = Model::load(&model_file)?;
            let corpus = read(&input, model.spec.max_components)?;
            let cache = GraphCache::new(&model.spec);
            let mut w = output(out.as_deref())?;
            for (i, s) in corpus.sentences.iter().enumerate() {
                let p = model.predict(&cache, s, heuristic)?;
                for d in &p.decoded.diagnostics {
                    warn!("sentence {}: {d}", i + 1);
                }
                writeln!(
                    w,
                    "{}",
                    sentence_to_json(&s.with_mention_set(p.decoded.mentions))
                )?;
            }
            w.flush()?;
        }
        Command::Eval { gold, pred, k } => {
            check_k(k)?;
            let gold = read(&gold, k)?;
            let pred = read(&pred, k)?;
            let prf = evaluate(
                gold.sentences.iter().map(|s| &s.mentions),
                pred.sentences.iter().map(|s| &s.mentions),
            )
            .map_err(|e| Failure::Data(e.to_string()))?;
            print_json(&prf)?;
        }
        Command::Encode { model, k, input } => {
            check_k(k)?;
            let corpus = read(&input, k)?;
            let labels = corpus.labels();
            let mut w = output(None)?;
            for (i, s) in corpus.sentences.iter().enumerate() {
                let unencodable = |e: String| Failure::Data(format!("sentence {}: {e}", i + 1));
                match variant(model) {
                    None => {
                        let seq = encode_linear(s).map_err(|e| unencodable(e.to_string()))?;
                        writeln!(w, "{}", seq.to_line(&s.tokens, true))?;
                    }
                    Some(v) => {
                        let schema = Schema::new(v, k, labels.clone());
                        let g =
                            encode_mentions(&schema, s).map_err(|e| unencodable(e.to_string()))?;
                        writeln!(w, "# {}", json!({"tokens": s.tokens, "labels": labels}))?;
                        write!(w, "{}", g.to_debug_string())?;
                        writeln!(w)?;
                    }
                }
            }
            w.flush()?;
        }
        Command::Decode {
            model,
            k,
            heuristic,
            input,
        } => {
            check_k(k)?;
            let reader = BufReader::new(File::open(&input)?);
            let mut w = output(None)?;
            let emit = |s: AnnotatedSentence, w: &mut Box<dyn Write>| -> io::Result<()> {
                writeln!(w, "{}", sentence_to_json(&s))
            };
            match variant(model) {
                None => {
                    let decoder = LinearDecoder {
                        max_components: k,
                        ..LinearDecoder::default()
                    };
                    for (i, line) in reader.lines().enumerate() {
                        let line = line?;
                        if line.trim().is_empty() {
                            continue;
                        }
                        let (tokens, seq): (Vec<String>, TagSequence) =
                            TagSequence::parse_line(&line, "ENT")
                                .map_err(|e| Failure::Data(format!("line {}: {e}", i + 1)))?;
                        let d = decoder.decode(&seq, heuristic);
                        emit(
                            AnnotatedSentence::new(tokens).with_mentions(d.mentions),
                            &mut w,
                        )?;
                    }
                }
                Some(v) => {
                    let text = std::io::read_to_string(reader)?;
                    for block in text.split("\n\n").filter(|b| !b.trim().is_empty()) {
                        let (header, body) = block
                            .trim_start()
                            .split_once('\n')
                            .unwrap_or((block.trim(), ""));
                        let bad =
                            |m: String| Failure::Data(format!("bad block header '{header}': {m}"));
                        let meta: serde_json::Value = serde_json::from_str(
                            header
                                .strip_prefix("# ")
                                .ok_or_else(|| bad("expected '# ' prefix".into()))?,
                        )
                        .map_err(|e| bad(e.to_string()))?;
                        let tokens: Vec<String> = serde_json::from_value(meta["tokens"].clone())
                            .map_err(|e| bad(e.to_string()))?;
                        let labels: Vec<String> = serde_json::from_value(meta["labels"].clone())
                            .map_err(|e| bad(e.to_string()))?;
                        let schema = Schema::new(v, k, labels);
                        let g = EncodedSubgraph::from_debug_string(&schema, tokens.len(), body)
                            .map_err(|e| Failure::Data(e.to_string()))?;
                        let d = HyperDecoder::default().decode(&g, heuristic);
                        emit(
                            AnnotatedSentence::new(tokens).with_mentions(d.mentions),
                            &mut w,
                        )?;
                    }
                }
            }
            w.flush()?;
        }
        Command::Count {
            schema,
            k,
            n_max,
            linear_exact,
        } => {
            check_k(k)?;
            if linear_exact > LINEAR_MAX_N {
                return Err(Failure::Usage(format!(
                    "--linear-exact is at most {LINEAR_MAX_N}"
                )));
            }
            let want = |s: CountSchema| {
                matches!(schema, CountSchema::All)
                    || std::mem::discriminant(&schema) == std::mem::discriminant(&s)
            };
            let shared = want(CountSchema::Shared)
                .then(|| CountStateSpace::new(Variant::Shared, k).counts(n_max));
            let split = want(CountSchema::Split)
                .then(|| CountStateSpace::new(Variant::Split, k).counts(n_max));
            let mut w = output(None)?;
            let mut header = vec!["n"];
            for (s, name) in [
                (CountSchema::Linear, "M_Li"),
                (CountSchema::Shared, "M_Sh"),
                (CountSchema::Split, "M_Sp"),
                (CountSchema::Combinations, "N"),
            ] {
                if want(s) {
                    header.push(name);
                }
            }
            writeln!(w, "{}", header.join("\t"))?;
            for n in 1..=n_max {
                let mut row = vec![n.to_string()];
                if want(CountSchema::Linear) {
                    row.push(if n <= linear_exact {
                        count_linear_canonical(n, k)?.to_string()
                    } else {
                        format!("<={}", num_bigint::BigUint::from(1u8) << (3 * n))
                    });
                }
                if let Some(c) = &shared {
                    row.push(c[n - 1].to_string());
                }
                if let Some(c) = &split {
                    row.push(c[n - 1].to_string());
                }
                if want(CountSchema::Combinations) {
                    row.push(count_combinations(n, k).to_string());
                }
                writeln!(w, "{}", row.join("\t"))?;
            }
            w.flush()?;
        }
        Command::Spectrum { schema, k } => {
            check_k(k)?;
            let report = match schema {
                SpectrumSchema::Grid => {
                    let rate = dominant_growth(&grid_matrix_f64())?;
                    let counts: Vec<String> =
                        (1..=8).map(|n| count_grid_dags(n).to_string()).collect();
                    json!({"schema": "grid", "states": 8, "growth_rate": rate,
                           "closed_form_rate": 3.0 + 5f64.sqrt(), "counts": counts})
                }
                SpectrumSchema::Shared | SpectrumSchema::Split => {
                    let v = if matches!(schema, SpectrumSchema::Shared) {
                        Variant::Shared
                    } else {
                        Variant::Split
                    };
                    let space = CountStateSpace::new(v, k);
                    let rate = dominant_growth(&space.matrix())?;
                    json!({"schema": v.to_string(), "k": k, "states": space.num_states(),
                           "growth_rate": rate, "log2_growth_rate": rate.log2()})
                }
            };
            print_json(&report)?;
        }
        Command::Synth {
            config,
            seed,
            sentences,
            out,
        } => {
            let mut cfg: SynthConfig = match &config {
                Some(p) => serde_json::from_reader(BufReader::new(File::open(p)?))
                    .map_err(|e| Failure::Data(format!("{}: {e}", p.display())))?,
                None => SynthConfig::default(),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(n) = sentences {
                cfg.sentences = n;
            }
            let corpus = generate_synthetic(&cfg)?;
            info!(
                "{} sentences, {} mentions, {:.3} discontiguous",
                corpus.len(),
                corpus.num_mentions(),
                corpus.discontiguous_fraction()
            );
            write_corpus_to(&corpus, output(out.as_deref())?)?;
        }
        Command::Bench {
            types,
            sentences,
            passes,
            seed,
        } => {
            if types.is_empty() || types.contains(&0) {
                return Err(Failure::Usage("--types needs positive type counts".into()));
            }
            let cfg = BenchConfig {
                types,
                sentences,
                passes,
                seed,
                ..BenchConfig::default()
            };
            let mut w = output(None)?;
            writeln!(w, "model\ttypes\tseconds\trelative\tnodes\tedges")?;
            for r in bench_types(&cfg)? {
                writeln!(
                    w,
                    "{}\t{}\t{:.6}\t{:.3}\t{}\t{}",
                    r.model, r.types, r.seconds, r.relative, r.nodes, r.edges
                )?;
            }
            w.flush()?;
        }
        Command::Ambiguity {
            input,
            k,
            seed,
            sentences,
        } => {
            check_k(k)?;
            let corpus = match &input {
                Some(p) => read(p, k)?,
                None => generate_synthetic(&SynthConfig {
                    seed,
                    sentences,
                    max_components: k,
                    ..SynthConfig::default()
                })?,
            };
            let report = ambiguity_experiment(
                &corpus,
                &[ModelKind::Linear, ModelKind::Shared, ModelKind::Split],
                k,
            );
            print_json(&report)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Data(m)) if m == PIPE_CLOSED => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
