//! Command-line entry point. Exit codes: 0 success, 2 usage error, 3 data
//! error, 4 runtime error. `LEMMA_NAMER_SEED` overrides the default seed.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use lemma_namer::corpus::{
    self, corpus_report, filter_outliers, load_dataset, save_dataset, split_by_document,
    DatasetSplit, LemmaRecord, SplitPart,
};
use lemma_namer::metrics;
use lemma_namer::retrieval;
use lemma_namer::seq2seq::{
    self, beam, checkpoint, prepare_example, Example, ModelConfig, Seq2SeqModel, TrainConfig,
};
use lemma_namer::subtok::Lexicon;
use lemma_namer::synth::{self, GeneratorSpec, NamingRule};
use lemma_namer::tree::{trim, TrimConfig};

#[derive(Parser)]
#[command(name = "lemma-namer", version, about = "Suggests names for Coq lemmas")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonOpts {
    /// Key=value config file; flags override file entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed; defaults to LEMMA_NAMER_SEED or 1.
    #[arg(long)]
    seed: Option<u64>,
    /// Lexicon file (components/suffixes/infixes); defaults built in.
    #[arg(long)]
    lexicon: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a deterministic synthetic corpus.
    Synth {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        docs: usize,
        #[arg(long, default_value_t = 20)]
        lemmas_per_doc: usize,
        /// op-subject (copyable names) or ktree-op (suffix only in the k-tree).
        #[arg(long, default_value = "op-subject")]
        naming_rule: String,
        #[arg(long, default_value = "mul,add,inv,opp")]
        ops: String,
        #[arg(long, default_value_t = 1)]
        extra_depth: usize,
    },
    /// Filter outliers, trim trees, split by document.
    Preprocess {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Fraction of deepest-k-tree lemmas to drop.
        #[arg(long, default_value_t = 0.25)]
        filter_quantile: f64,
        /// train,val,test document fractions.
        #[arg(long, default_value = "0.8,0.1,0.1")]
        fractions: String,
    },
    /// Corpus statistics report (JSON to stdout).
    Stats {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long)]
        data: PathBuf,
    },
    /// Train a model named by its input combination, e.g. ln-s+bsexpl1+attn+copy.
    Train {
        #[command(flatten)]
        common: CommonOpts,
        #[command(flatten)]
        train_opts: TrainOpts,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        split: PathBuf,
        #[arg(long)]
        model: String,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Decode top-k name suggestions from a checkpoint.
    Suggest {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Restrict to one part of a split manifest.
        #[arg(long)]
        split: Option<PathBuf>,
        #[arg(long, default_value = "test")]
        part: String,
        #[arg(short, long, default_value_t = 5)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score suggestion files against reference names; averages multiple
    /// runs; optional paired-bootstrap comparison against a second system.
    Evaluate {
        #[command(flatten)]
        common: CommonOpts,
        /// One or more suggestion files (runs of the same system).
        #[arg(long, required = true)]
        suggestions: Vec<PathBuf>,
        #[arg(long)]
        references: PathBuf,
        /// Suggestion files of a second system for significance testing.
        #[arg(long)]
        compare: Vec<PathBuf>,
        #[arg(long, default_value_t = 10_000)]
        resamples: usize,
    },
    /// tf-idf nearest-neighbor retrieval baseline.
    Baseline {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        split: PathBuf,
        #[arg(short, long, default_value_t = 5)]
        k: usize,
        /// Index raw statement tokens instead of sub-tokens.
        #[arg(long)]
        raw_tokens: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Continue training from a checkpoint on a new dataset.
    Finetune {
        #[command(flatten)]
        common: CommonOpts,
        #[command(flatten)]
        train_opts: TrainOpts,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        split: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Train on one named tier of documents, evaluate on another.
    Crossset {
        #[command(flatten)]
        common: CommonOpts,
        #[command(flatten)]
        train_opts: TrainOpts,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        split: PathBuf,
        #[arg(long)]
        model: String,
        #[arg(long)]
        train_tier: String,
        #[arg(long)]
        test_tier: String,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(short, long, default_value_t = 5)]
        k: usize,
    },
}

#[derive(Args, Clone)]
struct TrainOpts {
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    checkpoint_interval: Option<usize>,
    #[arg(long)]
    early_stop_patience: Option<usize>,
    #[arg(long)]
    embedding_dim: Option<usize>,
    #[arg(long)]
    hidden_units: Option<usize>,
    #[arg(long)]
    num_layers: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    beam_size: Option<usize>,
    #[arg(long)]
    max_decode_len: Option<usize>,
}

enum AppError {
    Usage(String),
    Data(String),
    Runtime(String),
}

impl AppError {
    fn code(&self) -> u8 {
        match self {
            AppError::Usage(_) => 2,
            AppError::Data(_) => 3,
            AppError::Runtime(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            AppError::Usage(m) | AppError::Data(m) | AppError::Runtime(m) => m,
        }
    }
}

fn data_err(e: impl std::fmt::Display) -> AppError {
    AppError::Data(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> AppError {
    AppError::Runtime(e.to_string())
}

fn usage_err(e: impl std::fmt::Display) -> AppError {
    AppError::Usage(e.to_string())
}

type AppResult<T> = Result<T, AppError>;

/// Key=value config file, `#` comments. Precedence: defaults < file < flags.
fn read_config_file(path: &Path) -> AppResult<BTreeMap<String, String>> {
    let text = std::fs::read_to_string(path).map_err(data_err)?;
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| usage_err(format!("{}:{}: expected key = value", path.display(), i + 1)))?;
        map.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(map)
}

fn parse_key<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str) -> AppResult<Option<T>> {
    match map.get(key) {
        None => Ok(None),
        Some(v) => v
            .parse()
            .map(Some)
            .map_err(|_| usage_err(format!("config key {key}: cannot parse {v:?}"))),
    }
}

struct Session {
    seed: u64,
    lexicon: Lexicon,
    trim_config: TrimConfig,
    file_config: BTreeMap<String, String>,
}

impl Session {
    fn open(common: &CommonOpts) -> AppResult<Session> {
        let file_config = match &common.config {
            Some(path) => read_config_file(path)?,
            None => BTreeMap::new(),
        };
        let env_seed = std::env::var("LEMMA_NAMER_SEED")
            .ok()
            .map(|v| v.parse::<u64>().map_err(|_| usage_err("LEMMA_NAMER_SEED must be an integer")))
            .transpose()?;
        let seed = common
            .seed
            .or(parse_key(&file_config, "seed")?)
            .or(env_seed)
            .unwrap_or(1);
        let lexicon = match &common.lexicon {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(data_err)?;
                Lexicon::parse(&text).map_err(data_err)?
            }
            None => Lexicon::default(),
        };
        Ok(Session { seed, lexicon, trim_config: TrimConfig::default(), file_config })
    }

    fn train_config(&self, opts: &TrainOpts) -> AppResult<TrainConfig> {
        let mut tc = TrainConfig { seed: self.seed, ..TrainConfig::default() };
        let f = &self.file_config;
        tc.learning_rate = opts.learning_rate.or(parse_key(f, "learning_rate")?).unwrap_or(tc.learning_rate);
        tc.max_steps = opts.max_steps.or(parse_key(f, "max_steps")?).unwrap_or(tc.max_steps);
        tc.batch_size = opts.batch_size.or(parse_key(f, "batch_size")?).unwrap_or(tc.batch_size);
        tc.checkpoint_interval = opts
            .checkpoint_interval
            .or(parse_key(f, "checkpoint_interval")?)
            .unwrap_or(tc.checkpoint_interval);
        tc.early_stop_patience = opts
            .early_stop_patience
            .or(parse_key(f, "early_stop_patience")?)
            .unwrap_or(tc.early_stop_patience);
        Ok(tc)
    }

    fn model_config(&self, name: &str, opts: &TrainOpts) -> AppResult<ModelConfig> {
        let mut mc = ModelConfig::parse_model_name(name).map_err(usage_err)?;
        let f = &self.file_config;
        mc.embedding_dim = opts.embedding_dim.or(parse_key(f, "embedding_dim")?).unwrap_or(mc.embedding_dim);
        mc.hidden_units = opts.hidden_units.or(parse_key(f, "hidden_units")?).unwrap_or(mc.hidden_units);
        mc.num_layers = opts.num_layers.or(parse_key(f, "num_layers")?).unwrap_or(mc.num_layers);
        mc.dropout = opts.dropout.or(parse_key(f, "dropout")?).unwrap_or(mc.dropout);
        mc.beam_size = opts.beam_size.or(parse_key(f, "beam_size")?).unwrap_or(mc.beam_size);
        mc.max_decode_len = opts.max_decode_len.or(parse_key(f, "max_decode_len")?).unwrap_or(mc.max_decode_len);
        Ok(mc)
    }
}

#[derive(Serialize)]
struct RunManifest {
    command: String,
    version: String,
    seed: u64,
    config: BTreeMap<String, String>,
    inputs: Vec<String>,
    outputs: Vec<String>,
    unix_time: u64,
}

fn write_manifest(
    dir_or_file: &Path,
    command: &str,
    session: &Session,
    config: BTreeMap<String, String>,
    inputs: &[&Path],
    outputs: &[&Path],
) -> AppResult<()> {
    let manifest = RunManifest {
        command: command.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed: session.seed,
        config,
        inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
        unix_time: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    };
    let path = if dir_or_file.is_dir() {
        dir_or_file.join(format!("manifest-{command}.json"))
    } else {
        dir_or_file.with_extension("manifest.json")
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(runtime_err)?;
    std::fs::write(path, json).map_err(runtime_err)
}

fn load_records(path: &Path) -> AppResult<Vec<LemmaRecord>> {
    load_dataset(path).map_err(data_err)
}

fn load_split(path: &Path) -> AppResult<DatasetSplit> {
    let text = std::fs::read_to_string(path).map_err(data_err)?;
    serde_json::from_str(&text).map_err(data_err)
}

fn parse_part(part: &str) -> AppResult<SplitPart> {
    match part {
        "train" => Ok(SplitPart::Train),
        "val" => Ok(SplitPart::Val),
        "test" => Ok(SplitPart::Test),
        other => Err(usage_err(format!("unknown split part {other:?}"))),
    }
}

fn examples_for<'a>(
    records: impl IntoIterator<Item = &'a LemmaRecord>,
    config: &ModelConfig,
    session: &Session,
) -> Vec<Example> {
    records
        .into_iter()
        .map(|r| prepare_example(r, config, &session.lexicon, &session.trim_config))
        .collect()
}

#[derive(Serialize, serde::Deserialize)]
struct SuggestionRecord {
    qname: String,
    suggestions: Vec<beam::Suggestion>,
}

fn write_suggestions(path: &Path, recs: &[SuggestionRecord]) -> AppResult<()> {
    let mut out = String::new();
    for r in recs {
        out.push_str(&serde_json::to_string(r).map_err(runtime_err)?);
        out.push('\n');
    }
    std::fs::write(path, out).map_err(runtime_err)
}

fn read_suggestions(path: &Path) -> AppResult<Vec<SuggestionRecord>> {
    let text = std::fs::read_to_string(path).map_err(data_err)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(data_err))
        .collect()
}

/// Per-lemma (bleu4, frag_acc, top1, top5) for one suggestion run.
fn score_run(
    run: &[SuggestionRecord],
    references: &BTreeMap<String, String>,
) -> AppResult<Vec<(f64, f64, f64, f64)>> {
    let mut rows = Vec::with_capacity(run.len());
    for rec in run {
        let reference = references
            .get(&rec.qname)
            .ok_or_else(|| data_err(format!("no reference name for {}", rec.qname)))?;
        let names: Vec<String> = rec.suggestions.iter().map(|s| s.name.clone()).collect();
        let top1 = names.first().map(String::as_str).unwrap_or("");
        let bleu = metrics::bleu4_char(top1, reference).unwrap_or(0.0);
        let frag = metrics::fragment_accuracy(top1, reference).unwrap_or(0.0);
        let t1 = metrics::topk_accuracy(&names, reference, 1);
        let t5 = metrics::topk_accuracy(&names, reference, 5);
        rows.push((bleu, frag, t1, t5));
    }
    Ok(rows)
}

fn run_suggest_for(model: &Seq2SeqModel, examples: &[Example], k: usize) -> Vec<SuggestionRecord> {
    examples
        .iter()
        .map(|ex| SuggestionRecord {
            qname: ex.qname.clone(),
            suggestions: beam::suggest(model, ex, k),
        })
        .collect()
}

fn train_model(
    model_name: &str,
    records: &[LemmaRecord],
    split: &DatasetSplit,
    session: &Session,
    train_opts: &TrainOpts,
    out_dir: &Path,
) -> AppResult<(Seq2SeqModel, seq2seq::TrainOutcome)> {
    let mc = session.model_config(model_name, train_opts)?;
    let tc = session.train_config(train_opts)?;
    let train_records = split.select(records, SplitPart::Train);
    let val_records = split.select(records, SplitPart::Val);
    if train_records.is_empty() {
        return Err(data_err("training split selects no records"));
    }
    let (name_vocab, input_vocab) =
        corpus::build_vocab(&train_records, &mc.inputs, &session.lexicon, &session.trim_config);
    let mut model = Seq2SeqModel::new(mc.clone(), name_vocab, input_vocab, session.seed);
    let train_examples = examples_for(train_records, &mc, session);
    let val_examples = examples_for(val_records, &mc, session);
    let outcome = seq2seq::train(&mut model, &train_examples, &val_examples, &tc);
    std::fs::create_dir_all(out_dir).map_err(runtime_err)?;
    let ckpt = out_dir.join(format!("{}.ckpt", mc.model_name()));
    checkpoint::save_to_path(&model, &ckpt).map_err(runtime_err)?;
    let log_path = out_dir.join(format!("{}.log.jsonl", mc.model_name()));
    let mut log = String::new();
    for entry in &outcome.log {
        log.push_str(&serde_json::to_string(entry).map_err(runtime_err)?);
        log.push('\n');
    }
    std::fs::write(log_path, log).map_err(runtime_err)?;
    Ok((model, outcome))
}

fn tier_docs<'a>(split: &'a DatasetSplit, tier: &str) -> AppResult<Vec<String>> {
    match tier {
        "train" => Ok(split.train.clone()),
        "val" => Ok(split.val.clone()),
        "test" => Ok(split.test.clone()),
        name => split
            .tiers
            .get(name)
            .cloned()
            .ok_or_else(|| data_err(format!("unknown tier {name:?}"))),
    }
}

fn run(cli: Cli) -> AppResult<()> {
    match cli.command {
        Command::Synth { common, out, docs, lemmas_per_doc, naming_rule, ops, extra_depth } => {
            let session = Session::open(&common)?;
            let naming_rule = match naming_rule.as_str() {
                "op-subject" => NamingRule::OpSubject,
                "ktree-op" => NamingRule::KTreeOp,
                other => return Err(usage_err(format!("unknown naming rule {other:?}"))),
            };
            let spec = GeneratorSpec {
                n_docs: docs,
                lemmas_per_doc,
                ops: ops.split(',').map(str::to_string).collect(),
                naming_rule,
                extra_depth,
                seed: session.seed,
            };
            let records = synth::generate(&spec);
            save_dataset(&records, &out).map_err(runtime_err)?;
            write_manifest(
                &out,
                "synth",
                &session,
                BTreeMap::from([
                    ("docs".into(), docs.to_string()),
                    ("lemmas_per_doc".into(), lemmas_per_doc.to_string()),
                    ("naming_rule".into(), format!("{naming_rule:?}")),
                    ("ops".into(), ops),
                    ("extra_depth".into(), extra_depth.to_string()),
                ]),
                &[],
                &[&out],
            )?;
            eprintln!("wrote {} records to {}", records.len(), out.display());
            Ok(())
        }
        Command::Preprocess { common, data, out_dir, filter_quantile, fractions } => {
            let session = Session::open(&common)?;
            let parts: Vec<f64> = fractions
                .split(',')
                .map(|p| p.trim().parse().map_err(|_| usage_err("fractions must be three numbers")))
                .collect::<AppResult<_>>()?;
            if parts.len() != 3 {
                return Err(usage_err("fractions must be train,val,test"));
            }
            let records = load_records(&data)?;
            let kept = filter_outliers(&records, filter_quantile);
            let trimmed: Vec<LemmaRecord> = kept
                .iter()
                .map(|r| LemmaRecord {
                    stree: trim(&r.stree, &session.trim_config),
                    ktree: trim(&r.ktree, &session.trim_config),
                    ..r.clone()
                })
                .collect();
            let split = split_by_document(&trimmed, (parts[0], parts[1], parts[2]), session.seed)
                .map_err(data_err)?;
            std::fs::create_dir_all(&out_dir).map_err(runtime_err)?;
            let processed = out_dir.join("processed.jsonl");
            save_dataset(&trimmed, &processed).map_err(runtime_err)?;
            let split_path = out_dir.join("split.json");
            let split_json = serde_json::to_string_pretty(&split).map_err(runtime_err)?;
            std::fs::write(&split_path, split_json).map_err(runtime_err)?;
            let lexicon_path = out_dir.join("lexicon.txt");
            std::fs::write(&lexicon_path, session.lexicon.to_text()).map_err(runtime_err)?;
            write_manifest(
                &out_dir,
                "preprocess",
                &session,
                BTreeMap::from([
                    ("filter_quantile".into(), filter_quantile.to_string()),
                    ("fractions".into(), fractions),
                ]),
                &[&data],
                &[&processed, &split_path, &lexicon_path],
            )?;
            eprintln!(
                "kept {} of {} records; {} train / {} val / {} test documents",
                trimmed.len(),
                records.len(),
                split.train.len(),
                split.val.len(),
                split.test.len()
            );
            Ok(())
        }
        Command::Stats { common, data } => {
            let session = Session::open(&common)?;
            let records = load_records(&data)?;
            let report = corpus_report(&records, &session.lexicon, &session.trim_config);
            println!("{}", serde_json::to_string_pretty(&report).map_err(runtime_err)?);
            Ok(())
        }
        Command::Train { common, train_opts, data, split, model, out_dir } => {
            let session = Session::open(&common)?;
            let records = load_records(&data)?;
            let split_manifest = load_split(&split)?;
            let (trained, outcome) =
                train_model(&model, &records, &split_manifest, &session, &train_opts, &out_dir)?;
            write_manifest(
                &out_dir,
                "train",
                &session,
                BTreeMap::from([
                    ("model".into(), trained.config.model_name()),
                    ("steps_taken".into(), outcome.steps_taken.to_string()),
                    ("stopped_early".into(), outcome.stopped_early.to_string()),
                ]),
                &[&data, &split],
                &[&out_dir.join(format!("{}.ckpt", trained.config.model_name()))],
            )?;
            eprintln!(
                "trained {} for {} steps{}",
                trained.config.model_name(),
                outcome.steps_taken,
                if outcome.stopped_early { " (early stop)" } else { "" }
            );
            Ok(())
        }
        Command::Suggest { common, checkpoint: ckpt, data, split, part, k, out } => {
            let session = Session::open(&common)?;
            let model = checkpoint::load_from_path(&ckpt).map_err(runtime_err)?;
            let records = load_records(&data)?;
            let selected: Vec<&LemmaRecord> = match &split {
                Some(split_path) => {
                    let manifest = load_split(split_path)?;
                    manifest.select(&records, parse_part(&part)?)
                }
                None => records.iter().collect(),
            };
            let examples = examples_for(selected, &model.config, &session);
            let suggestions = run_suggest_for(&model, &examples, k);
            write_suggestions(&out, &suggestions)?;
            write_manifest(
                &out,
                "suggest",
                &session,
                BTreeMap::from([
                    ("checkpoint".into(), ckpt.display().to_string()),
                    ("k".into(), k.to_string()),
                    ("part".into(), part),
                ]),
                &[&ckpt, &data],
                &[&out],
            )?;
            eprintln!("wrote suggestions for {} lemmas to {}", suggestions.len(), out.display());
            Ok(())
        }
        Command::Evaluate { common, suggestions, references, compare, resamples } => {
            let session = Session::open(&common)?;
            let records = load_records(&references)?;
            let refs: BTreeMap<String, String> = records
                .iter()
                .map(|r| (r.qualified_name.clone(), r.name.clone()))
                .collect();
            let mut run_reports = Vec::new();
            let mut primary_rows: Vec<Vec<(f64, f64, f64, f64)>> = Vec::new();
            for path in &suggestions {
                let rows = score_run(&read_suggestions(path)?, &refs)?;
                run_reports.push(metrics::aggregate(&rows));
                primary_rows.push(rows);
            }
            let n_runs = run_reports.len() as f64;
            let mean = |f: fn(&metrics::MetricReport) -> f64| {
                run_reports.iter().map(f).sum::<f64>() / n_runs
            };
            #[derive(Serialize)]
            struct EvalReport {
                runs: usize,
                n: usize,
                bleu4: f64,
                frag_acc: f64,
                top1: f64,
                top5: f64,
                #[serde(skip_serializing_if = "Option::is_none")]
                p_bleu4: Option<f64>,
                #[serde(skip_serializing_if = "Option::is_none")]
                p_frag_acc: Option<f64>,
                seed: u64,
            }
            let mut report = EvalReport {
                runs: run_reports.len(),
                n: run_reports.first().map(|r| r.n).unwrap_or(0),
                bleu4: mean(|r| r.bleu4),
                frag_acc: mean(|r| r.frag_acc),
                top1: mean(|r| r.top1),
                top5: mean(|r| r.top5),
                p_bleu4: None,
                p_frag_acc: None,
                seed: session.seed,
            };
            if !compare.is_empty() {
                // Compare first run against first comparison run, paired by
                // lemma order.
                let other_rows = score_run(&read_suggestions(&compare[0])?, &refs)?;
                let a = &primary_rows[0];
                if a.len() != other_rows.len() {
                    return Err(data_err("comparison runs cover different lemma sets"));
                }
                let bleu_a: Vec<f64> = a.iter().map(|r| r.0).collect();
                let bleu_b: Vec<f64> = other_rows.iter().map(|r| r.0).collect();
                let frag_a: Vec<f64> = a.iter().map(|r| r.1).collect();
                let frag_b: Vec<f64> = other_rows.iter().map(|r| r.1).collect();
                report.p_bleu4 = Some(
                    metrics::bootstrap_compare(&bleu_a, &bleu_b, resamples, session.seed)
                        .map_err(data_err)?,
                );
                report.p_frag_acc = Some(
                    metrics::bootstrap_compare(&frag_a, &frag_b, resamples, session.seed)
                        .map_err(data_err)?,
                );
            }
            println!("{}", serde_json::to_string_pretty(&report).map_err(runtime_err)?);
            Ok(())
        }
        Command::Baseline { common, data, split, k, raw_tokens, out } => {
            let session = Session::open(&common)?;
            let records = load_records(&data)?;
            let manifest = load_split(&split)?;
            let train_records = manifest.select(&records, SplitPart::Train);
            let test_records = manifest.select(&records, SplitPart::Test);
            let index = retrieval::build_index(&train_records, &session.lexicon, !raw_tokens)
                .map_err(data_err)?;
            let suggestions: Vec<SuggestionRecord> = test_records
                .iter()
                .map(|r| SuggestionRecord {
                    qname: r.qualified_name.clone(),
                    suggestions: retrieval::retrieve(&index, r, &session.lexicon, k)
                        .into_iter()
                        .map(|(name, score)| beam::Suggestion { name, log_prob: score })
                        .collect(),
                })
                .collect();
            write_suggestions(&out, &suggestions)?;
            write_manifest(
                &out,
                "baseline",
                &session,
                BTreeMap::from([
                    ("k".into(), k.to_string()),
                    ("subtokenized".into(), (!raw_tokens).to_string()),
                ]),
                &[&data, &split],
                &[&out],
            )?;
            eprintln!("wrote baseline suggestions for {} lemmas", suggestions.len());
            Ok(())
        }
        Command::Finetune { common, train_opts, checkpoint: ckpt, data, split, out_dir } => {
            let session = Session::open(&common)?;
            let mut model = checkpoint::load_from_path(&ckpt).map_err(runtime_err)?;
            let tc = session.train_config(&train_opts)?;
            let records = load_records(&data)?;
            let manifest = load_split(&split)?;
            let mc = model.config.clone();
            let train_examples = examples_for(manifest.select(&records, SplitPart::Train), &mc, &session);
            let val_examples = examples_for(manifest.select(&records, SplitPart::Val), &mc, &session);
            let outcome = seq2seq::train(&mut model, &train_examples, &val_examples, &tc);
            std::fs::create_dir_all(&out_dir).map_err(runtime_err)?;
            let out_ckpt = out_dir.join(format!("{}-finetuned.ckpt", mc.model_name()));
            checkpoint::save_to_path(&model, &out_ckpt).map_err(runtime_err)?;
            write_manifest(
                &out_dir,
                "finetune",
                &session,
                BTreeMap::from([
                    ("checkpoint".into(), ckpt.display().to_string()),
                    ("steps_taken".into(), outcome.steps_taken.to_string()),
                ]),
                &[&ckpt, &data, &split],
                &[&out_ckpt],
            )?;
            eprintln!("fine-tuned for {} steps -> {}", outcome.steps_taken, out_ckpt.display());
            Ok(())
        }
        Command::Crossset {
            common,
            train_opts,
            data,
            split,
            model,
            train_tier,
            test_tier,
            out_dir,
            k,
        } => {
            let session = Session::open(&common)?;
            let records = load_records(&data)?;
            let manifest = load_split(&split)?;
            let train_docs = tier_docs(&manifest, &train_tier)?;
            let test_docs = tier_docs(&manifest, &test_tier)?;
            let tier_split = DatasetSplit {
                seed: manifest.seed,
                train: train_docs.clone(),
                val: Vec::new(),
                test: test_docs.clone(),
                tiers: BTreeMap::new(),
            };
            let (trained, _outcome) =
                train_model(&model, &records, &tier_split, &session, &train_opts, &out_dir)?;
            let test_records = tier_split.select(&records, SplitPart::Test);
            let examples = examples_for(test_records.iter().copied(), &trained.config, &session);
            let suggestions = run_suggest_for(&trained, &examples, k);
            let refs: BTreeMap<String, String> = test_records
                .iter()
                .map(|r| (r.qualified_name.clone(), r.name.clone()))
                .collect();
            let rows = score_run(&suggestions, &refs)?;
            let report = metrics::aggregate(&rows);
            let leakage = train_docs.iter().filter(|d| test_docs.contains(d)).count();
            #[derive(Serialize)]
            struct CrossReport {
                model: String,
                train_tier: String,
                test_tier: String,
                shared_docs: usize,
                #[serde(flatten)]
                metrics: metrics::MetricReport,
            }
            let out = CrossReport {
                model: trained.config.model_name(),
                train_tier,
                test_tier,
                shared_docs: leakage,
                metrics: report,
            };
            println!("{}", serde_json::to_string_pretty(&out).map_err(runtime_err)?);
            write_manifest(&out_dir, "crossset", &session, BTreeMap::new(), &[&data, &split], &[])?;
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message());
            ExitCode::from(err.code())
        }
    }
}
