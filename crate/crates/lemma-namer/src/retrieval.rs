//! tf-idf k-nearest-neighbors retrieval baseline over statement tokens.
//!
//! tf is the raw count, idf = ln((1+N)/(1+df)) + 1, vectors are
//! L2-normalized, and queries are ranked by cosine similarity with ties
//! broken by training order. The baseline can only ever suggest names that
//! exist in the training set.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::LemmaRecord;
use crate::subtok::{subtokenize_statement, Lexicon};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RetrievalError {
    #[error("empty training set")]
    EmptyTrainSet,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TfIdfIndex {
    /// Document frequency per token over the training lemmas.
    pub df: BTreeMap<String, usize>,
    /// Sparse L2-normalized tf-idf vectors, one per training lemma.
    pub vectors: Vec<BTreeMap<String, f64>>,
    /// Training lemma names aligned with `vectors`.
    pub names: Vec<String>,
    pub n_train: usize,
    /// Whether statements were sub-tokenized before indexing.
    pub subtokenized: bool,
}

fn statement_terms(record: &LemmaRecord, lexicon: &Lexicon, subtokenized: bool) -> Vec<String> {
    if subtokenized {
        subtokenize_statement(&record.stmt_tokens, lexicon)
    } else {
        record.stmt_tokens.iter().map(|t| t.text.clone()).collect()
    }
}

fn idf(n: usize, df: usize) -> f64 {
    ((1.0 + n as f64) / (1.0 + df as f64)).ln() + 1.0
}

fn vectorize(
    terms: &[String],
    df: &BTreeMap<String, usize>,
    n: usize,
) -> BTreeMap<String, f64> {
    let mut tf: HashMap<&str, usize> = HashMap::new();
    for t in terms {
        *tf.entry(t).or_insert(0) += 1;
    }
    let mut vec: BTreeMap<String, f64> = tf
        .into_iter()
        .map(|(t, c)| {
            let d = df.get(t).copied().unwrap_or(0);
            (t.to_string(), c as f64 * idf(n, d))
        })
        .collect();
    let norm = vec.values().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        for v in vec.values_mut() {
            *v /= norm;
        }
    }
    vec
}

pub fn build_index(
    train_records: &[&LemmaRecord],
    lexicon: &Lexicon,
    subtokenized: bool,
) -> Result<TfIdfIndex, RetrievalError> {
    if train_records.is_empty() {
        return Err(RetrievalError::EmptyTrainSet);
    }
    let n = train_records.len();
    let term_lists: Vec<Vec<String>> = train_records
        .iter()
        .map(|r| statement_terms(r, lexicon, subtokenized))
        .collect();
    let mut df: BTreeMap<String, usize> = BTreeMap::new();
    for terms in &term_lists {
        let distinct: BTreeSet<&String> = terms.iter().collect();
        for t in distinct {
            *df.entry(t.clone()).or_insert(0) += 1;
        }
    }
    let vectors = term_lists.iter().map(|terms| vectorize(terms, &df, n)).collect();
    Ok(TfIdfIndex {
        df,
        vectors,
        names: train_records.iter().map(|r| r.name.clone()).collect(),
        n_train: n,
        subtokenized,
    })
}

fn cosine(a: &BTreeMap<String, f64>, b: &BTreeMap<String, f64>) -> f64 {
    // Vectors are unit-norm, so the dot product is the cosine.
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    small
        .iter()
        .filter_map(|(t, &v)| large.get(t).map(|&w| v * w))
        .sum()
}

/// Names of the k nearest training lemmas, ties broken by training order.
pub fn retrieve(
    index: &TfIdfIndex,
    query: &LemmaRecord,
    lexicon: &Lexicon,
    k: usize,
) -> Vec<(String, f64)> {
    let terms = statement_terms(query, lexicon, index.subtokenized);
    let qvec = vectorize(&terms, &index.df, index.n_train);
    let mut scored: Vec<(usize, f64)> = index
        .vectors
        .iter()
        .enumerate()
        .map(|(i, v)| (i, cosine(&qvec, v)))
        .collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal).then(a.0.cmp(&b.0)));
    scored
        .into_iter()
        .take(k)
        .map(|(i, s)| (index.names[i].clone(), s))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sexp::{parse_sexp, SourceToken, TokenKind};

    fn record(name: &str, words: &[&str]) -> LemmaRecord {
        LemmaRecord {
            doc_id: "d".into(),
            name: name.into(),
            qualified_name: format!("Top.d.{name}"),
            stmt_tokens: words
                .iter()
                .map(|w| SourceToken { text: w.to_string(), kind: TokenKind::Identifier })
                .collect(),
            stree: parse_sexp("(x)").unwrap(),
            ktree: parse_sexp("(x)").unwrap(),
        }
    }

    #[test]
    fn empty_train_set_is_an_error() {
        assert!(matches!(
            build_index(&[], &Lexicon::default(), false),
            Err(RetrievalError::EmptyTrainSet)
        ));
    }

    #[test]
    fn single_record_vector_is_unit_norm() {
        let r = record("only", &["foo", "bar"]);
        let idx = build_index(&[&r], &Lexicon::default(), false).unwrap();
        let norm: f64 = idx.vectors[0].values().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ubiquitous_token_gets_minimum_idf() {
        let records =
            vec![record("a", &["shared", "xa"]), record("b", &["shared", "xb"]), record("c", &["shared", "xc"])];
        let refs: Vec<&LemmaRecord> = records.iter().collect();
        let idx = build_index(&refs, &Lexicon::default(), false).unwrap();
        let max_df = *idx.df.values().max().unwrap();
        assert_eq!(idx.df["shared"], max_df);
        let min_idf = idx.df.iter().map(|(_, &d)| idf(3, d)).fold(f64::MAX, f64::min);
        assert!((idf(3, idx.df["shared"]) - min_idf).abs() < 1e-12);
    }

    #[test]
    fn three_document_index_matches_hand_computation() {
        // N=3. Token dfs: foo in 2 docs, bar in 1, baz in 1, shared in 3.
        let records = vec![
            record("r0", &["foo", "shared"]),
            record("r1", &["foo", "bar", "shared"]),
            record("r2", &["baz", "shared"]),
        ];
        let refs: Vec<&LemmaRecord> = records.iter().collect();
        let idx = build_index(&refs, &Lexicon::default(), false).unwrap();
        let idf_foo = (4.0f64 / 3.0).ln() + 1.0;
        let idf_shared = (4.0f64 / 4.0).ln() + 1.0;
        let norm = (idf_foo * idf_foo + idf_shared * idf_shared).sqrt();
        assert!((idx.vectors[0]["foo"] - idf_foo / norm).abs() < 1e-12);
        assert!((idx.vectors[0]["shared"] - idf_shared / norm).abs() < 1e-12);
    }

    #[test]
    fn exact_statement_query_ranks_first() {
        let records = vec![
            record("mul_comm", &["mul", "comm"]),
            record("add_assoc", &["add", "assoc"]),
            record("eq_refl", &["eq", "refl"]),
        ];
        let refs: Vec<&LemmaRecord> = records.iter().collect();
        let idx = build_index(&refs, &Lexicon::default(), false).unwrap();
        let out = retrieve(&idx, &records[1], &Lexicon::default(), 2);
        assert_eq!(out[0].0, "add_assoc");
        assert!((out[0].1 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn orthogonal_query_preserves_training_order() {
        let records = vec![record("a", &["p"]), record("b", &["q"]), record("c", &["r"])];
        let refs: Vec<&LemmaRecord> = records.iter().collect();
        let idx = build_index(&refs, &Lexicon::default(), false).unwrap();
        let q = record("query", &["zz"]);
        let out = retrieve(&idx, &q, &Lexicon::default(), 3);
        let names: Vec<&str> = out.iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(names, vec!["a", "b", "c"]);
        assert!(out.iter().all(|(_, s)| *s == 0.0));
    }

    #[test]
    fn ranking_matches_brute_force_cosine_oracle() {
        let records = vec![
            record("r0", &["mul", "comm", "group"]),
            record("r1", &["mul", "assoc"]),
            record("r2", &["add", "comm"]),
            record("r3", &["set", "mem", "mul"]),
            record("r4", &["eq", "mem"]),
        ];
        let refs: Vec<&LemmaRecord> = records.iter().collect();
        let lex = Lexicon::default();
        let idx = build_index(&refs, &lex, false).unwrap();
        let q = record("q", &["mul", "comm"]);
        let got = retrieve(&idx, &q, &lex, 5);

        // Oracle: dense vectors over the full vocabulary, naive dot product.
        let vocab: Vec<String> = idx.df.keys().cloned().collect();
        let dense = |v: &BTreeMap<String, f64>| -> Vec<f64> {
            vocab.iter().map(|t| v.get(t).copied().unwrap_or(0.0)).collect()
        };
        let qv = dense(&vectorize(
            &q.stmt_tokens.iter().map(|t| t.text.clone()).collect::<Vec<_>>(),
            &idx.df,
            idx.n_train,
        ));
        let mut oracle: Vec<(usize, f64)> = idx
            .vectors
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let dv = dense(v);
                (i, qv.iter().zip(&dv).map(|(a, b)| a * b).sum())
            })
            .collect();
        oracle.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        for (g, o) in got.iter().zip(&oracle) {
            assert_eq!(g.0, idx.names[o.0]);
            assert!((g.1 - o.1).abs() < 1e-12);
        }
        // Only training names are ever suggested.
        assert!(got.iter().all(|(n, _)| idx.names.contains(n)));
    }
}
