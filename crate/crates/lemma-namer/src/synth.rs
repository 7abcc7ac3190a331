//! Deterministic synthetic corpora for exercising the full pipeline at desk
//! scale. Generated trees reuse the head shapes seen in real elaborated
//! terms (Prod, App, Ref, Ser_Qualid, DirPath, Id, loc) so the trimming
//! rewrites fire on them, and the kernel tree always carries the qualified
//! operator name, which the statement tokens may deliberately omit.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::LemmaRecord;
use crate::sexp::{Sexp, SourceToken, TokenKind};

/// How a lemma's name follows from its generated structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NamingRule {
    /// `{op}_{subject}`: the operator appears in the statement tokens, so
    /// every name part is copyable from the statement.
    OpSubject,
    /// `{subject}_{op}`: the statement says only `step`; the operator, and
    /// with it the name suffix, is recoverable only from the kernel tree.
    /// Lemmas come in pairs sharing identical statements but different
    /// operators.
    KTreeOp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub n_docs: usize,
    pub lemmas_per_doc: usize,
    /// Operator pool; entries should be single sub-tokens.
    pub ops: Vec<String>,
    pub naming_rule: NamingRule,
    /// Extra singleton wrappers around each kernel tree, so trimming has
    /// depth to remove.
    pub extra_depth: usize,
    pub seed: u64,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        GeneratorSpec {
            n_docs: 10,
            lemmas_per_doc: 20,
            ops: ["mul", "add", "inv", "opp"].map(String::from).to_vec(),
            naming_rule: NamingRule::OpSubject,
            extra_depth: 1,
            seed: 1,
        }
    }
}

/// Digit-bearing identifiers are never split by the sub-tokenizer, so each
/// subject and object stays a single, globally unique sub-token.
fn subject(i: usize) -> String {
    format!("w{i}x")
}

fn object(i: usize) -> String {
    format!("y{i}z")
}

fn qualid(head: &str, path: &[&str], id: &str) -> Sexp {
    Sexp::list(vec![
        Sexp::atom(head),
        Sexp::list(vec![
            Sexp::atom("DirPath"),
            Sexp::list(
                path.iter()
                    .map(|p| Sexp::list(vec![Sexp::atom("Id"), Sexp::atom(*p)]))
                    .collect(),
            ),
        ]),
        Sexp::list(vec![Sexp::atom("Id"), Sexp::atom(id)]),
    ])
}

fn loc(start: usize, stop: usize) -> Sexp {
    Sexp::list(vec![
        Sexp::atom("loc"),
        Sexp::list(vec![
            Sexp::list(vec![Sexp::atom("bp"), Sexp::atom(start.to_string())]),
            Sexp::list(vec![Sexp::atom("ep"), Sexp::atom(stop.to_string())]),
        ]),
    ])
}

fn ident(text: &str) -> SourceToken {
    SourceToken { text: text.into(), kind: TokenKind::Identifier }
}

fn keyword(text: &str) -> SourceToken {
    SourceToken { text: text.into(), kind: TokenKind::Keyword }
}

fn make_record(
    spec: &GeneratorSpec,
    doc: &str,
    index: usize,
    subj: &str,
    obj: &str,
    op: &str,
) -> LemmaRecord {
    let stmt_op = match spec.naming_rule {
        NamingRule::OpSubject => op,
        NamingRule::KTreeOp => "step",
    };
    let name = match spec.naming_rule {
        NamingRule::OpSubject => format!("{op}_{subj}"),
        NamingRule::KTreeOp => format!("{subj}_{op}"),
    };
    // The object appears twice to tempt decoders into repeating a fragment.
    let stmt_tokens = vec![
        keyword("forall"),
        ident(subj),
        keyword(":"),
        ident("T"),
        keyword(","),
        ident(stmt_op),
        ident(subj),
        ident(obj),
        keyword("="),
        ident(obj),
    ];
    let base = index * 40;
    let stree = Sexp::list(vec![
        Sexp::atom("Prod"),
        loc(base, base + 31),
        Sexp::list(vec![
            Sexp::atom("Name"),
            Sexp::list(vec![Sexp::atom("Id"), Sexp::atom(subj)]),
        ]),
        qualid("Ref", &["Top"], "T"),
        Sexp::list(vec![
            Sexp::atom("App"),
            loc(base + 10, base + 31),
            qualid("Ref", &["Top"], stmt_op),
            qualid("Ref", &["Top"], subj),
            qualid("Ref", &["Top"], obj),
        ]),
    ]);
    let mut ktree = Sexp::list(vec![
        Sexp::atom("Prod"),
        Sexp::list(vec![
            Sexp::atom("Name"),
            Sexp::list(vec![Sexp::atom("Id"), Sexp::atom(subj)]),
        ]),
        qualid("Ser_Qualid", &["Top", doc], "T"),
        Sexp::list(vec![
            Sexp::atom("App"),
            qualid("Ser_Qualid", &["Top", doc, "ops"], op),
            qualid("Ser_Qualid", &["Top", doc], subj),
            qualid("Ser_Qualid", &["Top", doc], obj),
        ]),
    ]);
    for _ in 0..spec.extra_depth {
        ktree = Sexp::list(vec![ktree]);
    }
    LemmaRecord {
        doc_id: doc.to_string(),
        name: name.clone(),
        qualified_name: format!("Top.{doc}.{name}"),
        stmt_tokens,
        stree,
        ktree,
    }
}

/// Generate the corpus. Deterministic per spec; two specs differing only in
/// seed produce different operator assignments.
pub fn generate(spec: &GeneratorSpec) -> Vec<LemmaRecord> {
    assert!(!spec.ops.is_empty(), "operator pool must be non-empty");
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut records = Vec::with_capacity(spec.n_docs * spec.lemmas_per_doc);
    let mut index = 0usize;
    for d in 0..spec.n_docs {
        let doc = format!("synth{d}");
        match spec.naming_rule {
            NamingRule::OpSubject => {
                for _ in 0..spec.lemmas_per_doc {
                    let subj = subject(index);
                    let obj = object(index);
                    let op = &spec.ops[rng.gen_range(0..spec.ops.len())];
                    records.push(make_record(spec, &doc, index, &subj, &obj, op));
                    index += 1;
                }
            }
            NamingRule::KTreeOp => {
                // Pairs share a statement; only the kernel-tree operator and
                // hence the name suffix differ.
                assert!(spec.ops.len() >= 2, "ktree naming needs two operators");
                let mut emitted = 0;
                while emitted < spec.lemmas_per_doc {
                    let subj = subject(index);
                    let obj = object(index);
                    let a = rng.gen_range(0..spec.ops.len());
                    let b = (a + 1 + rng.gen_range(0..spec.ops.len() - 1)) % spec.ops.len();
                    for op_idx in [a, b] {
                        if emitted >= spec.lemmas_per_doc {
                            break;
                        }
                        records.push(make_record(
                            spec,
                            &doc,
                            index,
                            &subj,
                            &obj,
                            &spec.ops[op_idx],
                        ));
                        emitted += 1;
                    }
                    index += 1;
                }
            }
        }
    }
    records
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{read_dataset, write_dataset};
    use crate::subtok::Lexicon;
    use crate::tree::{stats, trim, TrimConfig};
    use std::io::BufReader;

    #[test]
    fn single_record_is_schema_valid() {
        let spec = GeneratorSpec { n_docs: 1, lemmas_per_doc: 1, ..GeneratorSpec::default() };
        let records = generate(&spec);
        assert_eq!(records.len(), 1);
        let mut bytes = Vec::new();
        write_dataset(&records, &mut bytes).unwrap();
        let reloaded = read_dataset(BufReader::new(&bytes[..])).unwrap();
        assert_eq!(reloaded, records);
    }

    #[test]
    fn generation_is_deterministic_and_seed_sensitive() {
        let spec = GeneratorSpec { n_docs: 3, lemmas_per_doc: 10, ..GeneratorSpec::default() };
        let a = generate(&spec);
        let b = generate(&spec);
        assert_eq!(a, b);
        let other = generate(&GeneratorSpec { seed: 2, ..spec });
        assert_ne!(a, other);
    }

    #[test]
    fn names_are_unique_and_derivable() {
        let spec = GeneratorSpec { n_docs: 4, lemmas_per_doc: 6, ..GeneratorSpec::default() };
        let records = generate(&spec);
        let mut names: Vec<&str> = records.iter().map(|r| r.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        assert_eq!(names.len(), records.len());
        for r in &records {
            // OpSubject rule: both name parts occur among statement tokens.
            let (op, subj) = r.name.split_once('_').unwrap();
            assert!(r.stmt_tokens.iter().any(|t| t.text == op));
            assert!(r.stmt_tokens.iter().any(|t| t.text == subj));
        }
    }

    #[test]
    fn ktree_rule_suffix_is_absent_from_statement_tokens() {
        let spec = GeneratorSpec {
            n_docs: 2,
            lemmas_per_doc: 6,
            naming_rule: NamingRule::KTreeOp,
            ..GeneratorSpec::default()
        };
        let records = generate(&spec);
        for r in &records {
            let (subj, op) = r.name.rsplit_once('_').unwrap();
            assert!(!r.stmt_tokens.iter().any(|t| t.text == op), "{op} leaked into stmt");
            assert!(r.stmt_tokens.iter().any(|t| t.text == subj));
            // The kernel tree still carries it.
            let flat = crate::tree::flatten(&r.ktree);
            assert!(flat.iter().any(|t| t == op));
        }
        // Pair structure: identical statements, different names.
        assert_eq!(records[0].stmt_tokens, records[1].stmt_tokens);
        assert_ne!(records[0].name, records[1].name);
    }

    #[test]
    fn trimming_fires_on_generated_trees() {
        let spec = GeneratorSpec { n_docs: 1, lemmas_per_doc: 3, ..GeneratorSpec::default() };
        let config = TrimConfig::default();
        let lexicon = Lexicon::default();
        for r in generate(&spec) {
            for tree in [&r.stree, &r.ktree] {
                let before = stats(tree, &lexicon);
                let after = stats(&trim(tree, &config), &lexicon);
                assert!(after.node_count < before.node_count);
                assert!(after.depth < before.depth);
            }
        }
    }

    #[test]
    fn name_subtokens_align_with_statement_subtokens() {
        let lexicon = Lexicon::default();
        let spec = GeneratorSpec { n_docs: 1, lemmas_per_doc: 5, ..GeneratorSpec::default() };
        for r in generate(&spec) {
            let name_toks = crate::corpus::name_subtokens(&r, &lexicon);
            assert_eq!(name_toks.len(), 3, "{:?}", name_toks);
            let stmt_toks =
                crate::subtok::subtokenize_statement(&r.stmt_tokens, &lexicon);
            for t in name_toks.iter().filter(|t| *t != "_") {
                assert!(stmt_toks.contains(t), "{t} not copyable from {stmt_toks:?}");
            }
        }
    }
}
