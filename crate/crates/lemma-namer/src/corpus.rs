//! Dataset ingestion, outlier filtering, document-level splitting,
//! vocabulary construction, and corpus statistics.
//!
//! The interchange format is UTF-8 JSON-lines; each line holds one lemma with
//! its document id, name, qualified name, lexed statement tokens, and the two
//! tree views embedded as s-expression strings.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sexp::{parse_sexp, print_sexp, Sexp, SourceToken, TokenKind};
use crate::subtok::{subtokenize_name, subtokenize_statement, Lexicon};
use crate::tree::{flatten_subtokenized, stats, trim, TrimConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct LemmaRecord {
    pub doc_id: String,
    pub name: String,
    pub qualified_name: String,
    pub stmt_tokens: Vec<SourceToken>,
    pub stree: Sexp,
    pub ktree: Sexp,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("schema error at line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("s-expression parse error at line {line} in field {field}: {source}")]
    SexpParse { line: usize, field: &'static str, source: crate::sexp::SexpError },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("split fractions must sum to 1")]
    BadFractions,
    #[error("name {name:?} is not the final component of qualified name {qname:?} (line {line})")]
    NameMismatch { line: usize, name: String, qname: String },
}

#[derive(Debug, Serialize, Deserialize)]
struct RawToken {
    t: String,
    k: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawRecord {
    doc: String,
    name: String,
    qname: String,
    stmt: Vec<RawToken>,
    stree: String,
    ktree: String,
}

impl LemmaRecord {
    fn from_raw(raw: RawRecord, line: usize) -> Result<LemmaRecord, CorpusError> {
        if raw.name.is_empty() {
            return Err(CorpusError::Schema { line, message: "empty name".into() });
        }
        let last = raw.qname.rsplit('.').next().unwrap_or("");
        if last != raw.name {
            return Err(CorpusError::NameMismatch { line, name: raw.name, qname: raw.qname });
        }
        let mut stmt_tokens = Vec::with_capacity(raw.stmt.len());
        for tok in raw.stmt {
            let kind = match tok.k.as_str() {
                "ident" => TokenKind::Identifier,
                "keyword" => TokenKind::Keyword,
                other => {
                    return Err(CorpusError::Schema {
                        line,
                        message: format!("unknown token kind {other:?}"),
                    });
                }
            };
            stmt_tokens.push(SourceToken { text: tok.t, kind });
        }
        let stree = parse_sexp(&raw.stree)
            .map_err(|source| CorpusError::SexpParse { line, field: "stree", source })?;
        let ktree = parse_sexp(&raw.ktree)
            .map_err(|source| CorpusError::SexpParse { line, field: "ktree", source })?;
        Ok(LemmaRecord {
            doc_id: raw.doc,
            name: raw.name,
            qualified_name: raw.qname,
            stmt_tokens,
            stree,
            ktree,
        })
    }

    fn to_raw(&self) -> RawRecord {
        RawRecord {
            doc: self.doc_id.clone(),
            name: self.name.clone(),
            qname: self.qualified_name.clone(),
            stmt: self
                .stmt_tokens
                .iter()
                .map(|t| RawToken {
                    t: t.text.clone(),
                    k: match t.kind {
                        TokenKind::Identifier => "ident".into(),
                        TokenKind::Keyword => "keyword".into(),
                    },
                })
                .collect(),
            stree: print_sexp(&self.stree),
            ktree: print_sexp(&self.ktree),
        }
    }
}

pub fn load_dataset(path: &Path) -> Result<Vec<LemmaRecord>, CorpusError> {
    let file = std::fs::File::open(path)?;
    read_dataset(BufReader::new(file))
}

pub fn read_dataset<R: Read>(reader: BufReader<R>) -> Result<Vec<LemmaRecord>, CorpusError> {
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(&line)
            .map_err(|e| CorpusError::Schema { line: line_no, message: e.to_string() })?;
        records.push(LemmaRecord::from_raw(raw, line_no)?);
    }
    Ok(records)
}

pub fn write_dataset<W: Write>(records: &[LemmaRecord], mut out: W) -> Result<(), CorpusError> {
    for r in records {
        serde_json::to_writer(&mut out, &r.to_raw())
            .map_err(|e| CorpusError::Schema { line: 0, message: e.to_string() })?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn save_dataset(records: &[LemmaRecord], path: &Path) -> Result<(), CorpusError> {
    let mut file = std::fs::File::create(path)?;
    write_dataset(records, &mut file)
}

/// Drop the ceil(quantile * N) records with the deepest kernel trees. Ties at
/// the boundary are broken by stable input order: later records drop first.
/// Remaining records keep their input order.
pub fn filter_outliers(records: &[LemmaRecord], quantile: f64) -> Vec<LemmaRecord> {
    let n = records.len();
    let drop_count = (quantile * n as f64).ceil() as usize;
    if drop_count == 0 {
        return records.to_vec();
    }
    let mut order: Vec<usize> = (0..n).collect();
    // Deepest first; among equal depths, later input positions first.
    order.sort_by(|&a, &b| {
        records[b]
            .ktree
            .depth()
            .cmp(&records[a].ktree.depth())
            .then(b.cmp(&a))
    });
    let dropped: BTreeSet<usize> = order.into_iter().take(drop_count).collect();
    records
        .iter()
        .enumerate()
        .filter(|(i, _)| !dropped.contains(i))
        .map(|(_, r)| r.clone())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub seed: u64,
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
    /// Optional named document subsets for cross-set experiments.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub tiers: BTreeMap<String, Vec<String>>,
}

impl DatasetSplit {
    pub fn contains_doc(&self, doc: &str) -> bool {
        self.train.iter().any(|d| d == doc)
            || self.val.iter().any(|d| d == doc)
            || self.test.iter().any(|d| d == doc)
    }

    pub fn select<'a>(&self, records: &'a [LemmaRecord], part: SplitPart) -> Vec<&'a LemmaRecord> {
        let docs: &[String] = match part {
            SplitPart::Train => &self.train,
            SplitPart::Val => &self.val,
            SplitPart::Test => &self.test,
        };
        let set: BTreeSet<&str> = docs.iter().map(|s| s.as_str()).collect();
        records.iter().filter(|r| set.contains(r.doc_id.as_str())).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitPart {
    Train,
    Val,
    Test,
}

/// Shuffle documents (not lemmas) with the seed and partition them by
/// cumulative fraction of the document count. Fractional remainders go to
/// train, so a single document always lands there.
pub fn split_by_document(
    records: &[LemmaRecord],
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<DatasetSplit, CorpusError> {
    let (f_train, f_val, f_test) = fractions;
    if (f_train + f_val + f_test - 1.0).abs() > 1e-9 {
        return Err(CorpusError::BadFractions);
    }
    let mut docs: Vec<String> = Vec::new();
    let mut seen = BTreeSet::new();
    for r in records {
        if seen.insert(r.doc_id.clone()) {
            docs.push(r.doc_id.clone());
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    docs.shuffle(&mut rng);
    let n = docs.len();
    let n_val = (f_val * n as f64).floor() as usize;
    let n_test = (f_test * n as f64).floor() as usize;
    let n_train = n - n_val - n_test;
    let train = docs[..n_train].to_vec();
    let val = docs[n_train..n_train + n_val].to_vec();
    let test = docs[n_train + n_val..].to_vec();
    Ok(DatasetSplit { seed, train, val, test, tiers: BTreeMap::new() })
}

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;

/// Bidirectional sub-token <-> id map with reserved specials.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    tokens: Vec<String>,
    #[serde(skip)]
    index: BTreeMap<String, usize>,
}

pub const SPECIALS: [&str; 4] = ["<pad>", "<bos>", "<eos>", "<unk>"];

impl Vocab {
    pub fn from_tokens<I: IntoIterator<Item = String>>(iter: I) -> Vocab {
        let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        let mut index: BTreeMap<String, usize> =
            tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        for tok in iter {
            if !index.contains_key(&tok) {
                index.insert(tok.clone(), tokens.len());
                tokens.push(tok);
            }
        }
        Vocab { tokens, index }
    }

    /// Rebuild the lookup index after deserialization.
    pub fn reindex(&mut self) {
        self.index = self.tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id_of(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn lookup(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token_of(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(|s| s.as_str())
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// Which serialized views feed the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InputKind {
    Stmt,
    STree,
    TrimmedSTree,
    KTree,
    TrimmedKTree,
}

impl InputKind {
    pub fn all() -> [InputKind; 5] {
        [
            InputKind::Stmt,
            InputKind::STree,
            InputKind::TrimmedSTree,
            InputKind::KTree,
            InputKind::TrimmedKTree,
        ]
    }
}

/// The input token sequence one view contributes for one record.
pub fn input_sequence(
    record: &LemmaRecord,
    kind: InputKind,
    lexicon: &Lexicon,
    trim_config: &TrimConfig,
) -> Vec<String> {
    match kind {
        InputKind::Stmt => subtokenize_statement(&record.stmt_tokens, lexicon),
        InputKind::STree => flatten_subtokenized(&record.stree, lexicon),
        InputKind::TrimmedSTree => {
            flatten_subtokenized(&trim(&record.stree, trim_config), lexicon)
        }
        InputKind::KTree => flatten_subtokenized(&record.ktree, lexicon),
        InputKind::TrimmedKTree => {
            flatten_subtokenized(&trim(&record.ktree, trim_config), lexicon)
        }
    }
}

/// Name sub-token texts for a record (targets of the decoder).
pub fn name_subtokens(record: &LemmaRecord, lexicon: &Lexicon) -> Vec<String> {
    subtokenize_name(&record.name, lexicon)
        .map(|toks| toks.into_iter().map(|t| t.text).collect())
        .unwrap_or_default()
}

/// Build the name and input vocabularies from the training records only.
/// Tokens unseen at training time later map to UNK.
pub fn build_vocab(
    train_records: &[&LemmaRecord],
    input_kinds: &[InputKind],
    lexicon: &Lexicon,
    trim_config: &TrimConfig,
) -> (Vocab, Vocab) {
    let name_vocab = Vocab::from_tokens(
        train_records.iter().flat_map(|r| name_subtokens(r, lexicon)),
    );
    let input_vocab = Vocab::from_tokens(train_records.iter().flat_map(|r| {
        input_kinds
            .iter()
            .flat_map(move |&k| input_sequence(r, k, lexicon, trim_config))
    }));
    (name_vocab, input_vocab)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusReport {
    pub documents: usize,
    pub lemmas: usize,
    pub avg_name_chars: f64,
    pub avg_name_subtokens: f64,
    pub avg_stmt_chars: f64,
    pub avg_stmt_subtokens: f64,
    pub ktree: TreeStatSummary,
    pub ktree_trimmed: TreeStatSummary,
    pub stree: TreeStatSummary,
    pub stree_trimmed: TreeStatSummary,
    /// 1 - mean_trimmed / mean_raw, over kernel-tree depth.
    pub ktree_depth_reduction: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TreeStatSummary {
    pub mean_depth: f64,
    pub mean_nodes: f64,
    pub mean_flat_subtokens: f64,
}

fn summarize(trees: &[&Sexp], lexicon: &Lexicon) -> TreeStatSummary {
    if trees.is_empty() {
        return TreeStatSummary::default();
    }
    let n = trees.len() as f64;
    let mut sum_depth = 0.0;
    let mut sum_nodes = 0.0;
    let mut sum_flat = 0.0;
    for t in trees {
        let s = stats(t, lexicon);
        sum_depth += s.depth as f64;
        sum_nodes += s.node_count as f64;
        sum_flat += s.flat_subtoken_count as f64;
    }
    TreeStatSummary {
        mean_depth: sum_depth / n,
        mean_nodes: sum_nodes / n,
        mean_flat_subtokens: sum_flat / n,
    }
}

pub fn corpus_report(
    records: &[LemmaRecord],
    lexicon: &Lexicon,
    trim_config: &TrimConfig,
) -> CorpusReport {
    if records.is_empty() {
        return CorpusReport {
            documents: 0,
            lemmas: 0,
            avg_name_chars: 0.0,
            avg_name_subtokens: 0.0,
            avg_stmt_chars: 0.0,
            avg_stmt_subtokens: 0.0,
            ktree: TreeStatSummary::default(),
            ktree_trimmed: TreeStatSummary::default(),
            stree: TreeStatSummary::default(),
            stree_trimmed: TreeStatSummary::default(),
            ktree_depth_reduction: 0.0,
        };
    }
    let n = records.len() as f64;
    let docs: BTreeSet<&str> = records.iter().map(|r| r.doc_id.as_str()).collect();
    let avg_name_chars = records.iter().map(|r| r.name.len()).sum::<usize>() as f64 / n;
    let avg_name_subtokens =
        records.iter().map(|r| name_subtokens(r, lexicon).len()).sum::<usize>() as f64 / n;
    let avg_stmt_chars = records
        .iter()
        .map(|r| r.stmt_tokens.iter().map(|t| t.text.len()).sum::<usize>())
        .sum::<usize>() as f64
        / n;
    let avg_stmt_subtokens = records
        .iter()
        .map(|r| subtokenize_statement(&r.stmt_tokens, lexicon).len())
        .sum::<usize>() as f64
        / n;
    let ktrees: Vec<&Sexp> = records.iter().map(|r| &r.ktree).collect();
    let strees: Vec<&Sexp> = records.iter().map(|r| &r.stree).collect();
    let ktrees_trimmed: Vec<Sexp> = records.iter().map(|r| trim(&r.ktree, trim_config)).collect();
    let strees_trimmed: Vec<Sexp> = records.iter().map(|r| trim(&r.stree, trim_config)).collect();
    let ktree = summarize(&ktrees, lexicon);
    let ktree_trimmed = summarize(&ktrees_trimmed.iter().collect::<Vec<_>>(), lexicon);
    let stree = summarize(&strees, lexicon);
    let stree_trimmed = summarize(&strees_trimmed.iter().collect::<Vec<_>>(), lexicon);
    let ktree_depth_reduction = if ktree.mean_depth > 0.0 {
        1.0 - ktree_trimmed.mean_depth / ktree.mean_depth
    } else {
        0.0
    };
    CorpusReport {
        documents: docs.len(),
        lemmas: records.len(),
        avg_name_chars,
        avg_name_subtokens,
        avg_stmt_chars,
        avg_stmt_subtokens,
        ktree,
        ktree_trimmed,
        stree,
        stree_trimmed,
        ktree_depth_reduction,
    }
}
