//! Sub-tokenization of lemma names and identifiers.
//!
//! Names mix snake_case, CamelCase, abbreviated components, and one-letter
//! suffixes (`extprod_mulgA` splits to `extprod _ mul g A`). Splitting is
//! driven by an editable lexicon of known components so the heuristics stay
//! data, not code. Concatenating the sub-token texts always reproduces the
//! input exactly.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::sexp::{SourceToken, TokenKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubTokenKind {
    Word,
    Underscore,
    Suffix,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubToken {
    pub text: String,
    pub kind: SubTokenKind,
}

impl SubToken {
    fn word(text: impl Into<String>) -> SubToken {
        SubToken { text: text.into(), kind: SubTokenKind::Word }
    }

    fn underscore() -> SubToken {
        SubToken { text: "_".into(), kind: SubTokenKind::Underscore }
    }

    fn suffix(text: impl Into<String>) -> SubToken {
        SubToken { text: text.into(), kind: SubTokenKind::Suffix }
    }
}

impl fmt::Display for SubToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SubtokError {
    #[error("empty name")]
    EmptyName,
    #[error("empty sub-token sequence")]
    EmptySequence,
    #[error("lexicon parse error at line {0}: {1}")]
    LexiconParse(usize, String),
}

/// Known name components and suffix markers, following MathComp conventions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lexicon {
    pub components: BTreeSet<String>,
    pub suffixes: BTreeSet<String>,
    pub single_letter_infixes: BTreeSet<String>,
}

/// Components and suffixes seeded from the MathComp contribution guide.
/// Approximate by necessity; users extend it via the lexicon file format.
const DEFAULT_COMPONENTS: &[&str] = &[
    "add", "and", "app", "big", "bij", "can", "card", "cat", "char", "class", "comm", "conj",
    "cons", "cont", "cycle", "def", "der", "det", "diff", "div", "dot", "dvd", "eq", "ext",
    "extprod", "exp", "fin", "fun", "gen", "group", "hom", "id", "idem", "im", "inj", "inv",
    "iso", "le", "lin", "lt", "map", "mat", "max", "mem", "mg", "min", "mod", "mono", "morph",
    "mul", "mx", "neq", "nerode", "norm", "not", "odd", "opp", "or", "ord", "path", "perm",
    "pow", "prime", "prod", "proof", "quot", "rec", "ring", "root", "scal", "seq", "set",
    "sub", "subset", "sum", "supp", "sym", "trans", "uniq", "val", "vec", "zero",
];

const DEFAULT_SUFFIXES: &[&str] = &["A", "C", "D", "E", "I", "K", "L", "P", "R", "S", "V", "W"];

const DEFAULT_SINGLE_LETTER_INFIXES: &[&str] = &["b", "g", "n", "p", "q", "r", "s", "v", "z"];

impl Default for Lexicon {
    fn default() -> Self {
        Lexicon {
            components: DEFAULT_COMPONENTS.iter().map(|s| s.to_string()).collect(),
            suffixes: DEFAULT_SUFFIXES.iter().map(|s| s.to_string()).collect(),
            single_letter_infixes: DEFAULT_SINGLE_LETTER_INFIXES
                .iter()
                .map(|s| s.to_string())
                .collect(),
        }
    }
}

impl Lexicon {
    /// Parse the plain-text lexicon format: `[components]`, `[suffixes]`,
    /// `[single_letter_infixes]` section headers, one entry per line,
    /// `#` comments.
    pub fn parse(text: &str) -> Result<Lexicon, SubtokError> {
        let mut lex = Lexicon {
            components: BTreeSet::new(),
            suffixes: BTreeSet::new(),
            single_letter_infixes: BTreeSet::new(),
        };
        let mut section: Option<&str> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            match line {
                "[components]" => section = Some("components"),
                "[suffixes]" => section = Some("suffixes"),
                "[single_letter_infixes]" => section = Some("single_letter_infixes"),
                entry if entry.starts_with('[') => {
                    return Err(SubtokError::LexiconParse(i + 1, format!("unknown section {entry}")));
                }
                entry => {
                    if entry.contains('_') {
                        return Err(SubtokError::LexiconParse(
                            i + 1,
                            "entries may not contain underscores".into(),
                        ));
                    }
                    let target = match section {
                        Some("components") => &mut lex.components,
                        Some("suffixes") => &mut lex.suffixes,
                        Some("single_letter_infixes") => &mut lex.single_letter_infixes,
                        _ => {
                            return Err(SubtokError::LexiconParse(
                                i + 1,
                                "entry before any section header".into(),
                            ));
                        }
                    };
                    target.insert(entry.to_string());
                }
            }
        }
        Ok(lex)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("[components]\n");
        for c in &self.components {
            out.push_str(c);
            out.push('\n');
        }
        out.push_str("[suffixes]\n");
        for s in &self.suffixes {
            out.push_str(s);
            out.push('\n');
        }
        out.push_str("[single_letter_infixes]\n");
        for s in &self.single_letter_infixes {
            out.push_str(s);
            out.push('\n');
        }
        out
    }
}

/// Greedy longest-match segmentation of a lowercase run against the known
/// components. Returns None when greedy matching cannot cover the whole run;
/// the caller then keeps the run whole.
fn segment_lowercase(run: &str, lexicon: &Lexicon) -> Option<Vec<String>> {
    let mut parts = Vec::new();
    let mut rest = run;
    while !rest.is_empty() {
        let hit = (1..=rest.len())
            .rev()
            .map(|n| &rest[..n])
            .find(|p| {
                lexicon.components.contains(*p) || lexicon.single_letter_infixes.contains(*p)
            })?;
        parts.push(hit.to_string());
        rest = &rest[hit.len()..];
    }
    Some(parts)
}

/// Trailing-capital chunks that decompose fully into suffix entries.
fn segment_suffixes(chunk: &str, lexicon: &Lexicon) -> Option<Vec<String>> {
    if chunk.is_empty() || chunk.len() > 3 || !chunk.chars().all(|c| c.is_ascii_uppercase()) {
        return None;
    }
    let mut parts = Vec::new();
    let mut rest = chunk;
    while !rest.is_empty() {
        let hit = (1..=rest.len()).rev().map(|n| &rest[..n]).find(|p| lexicon.suffixes.contains(*p))?;
        parts.push(hit.to_string());
        rest = &rest[hit.len()..];
    }
    Some(parts)
}

/// Split one underscore-free segment at CamelCase boundaries
/// (lowercase or digit followed by uppercase).
fn camel_chunks(segment: &str) -> Vec<&str> {
    let mut chunks = Vec::new();
    let bytes = segment.as_bytes();
    let mut start = 0;
    for i in 1..bytes.len() {
        let prev = bytes[i - 1] as char;
        let cur = bytes[i] as char;
        if (prev.is_ascii_lowercase() || prev.is_ascii_digit() || prev == '\'')
            && cur.is_ascii_uppercase()
        {
            chunks.push(&segment[start..i]);
            start = i;
        }
    }
    chunks.push(&segment[start..]);
    chunks
}

fn emit_chunk(chunk: &str, is_last_in_name: bool, lexicon: &Lexicon, out: &mut Vec<SubToken>) {
    // Pure lowercase run (digits and primes bind to the preceding word, so a
    // run with digits is kept atomic, e.g. L1).
    if !chunk.is_empty() && chunk.chars().all(|c| c.is_ascii_lowercase()) {
        match segment_lowercase(chunk, lexicon) {
            Some(parts) => out.extend(parts.into_iter().map(SubToken::word)),
            None => out.push(SubToken::word(chunk)),
        }
        return;
    }
    // A trailing all-caps chunk that decomposes into suffix markers.
    if is_last_in_name {
        if let Some(parts) = segment_suffixes(chunk, lexicon) {
            out.extend(parts.into_iter().map(SubToken::suffix));
            return;
        }
    }
    out.push(SubToken::word(chunk));
}

/// Split an identifier into sub-tokens: underscores are kept as their own
/// tokens, CamelCase boundaries split, lowercase runs are segmented greedily
/// against the lexicon, and trailing capital markers become suffixes.
pub fn subtokenize_name(name: &str, lexicon: &Lexicon) -> Result<Vec<SubToken>, SubtokError> {
    if name.is_empty() {
        return Err(SubtokError::EmptyName);
    }
    let mut out = Vec::new();
    let segments: Vec<&str> = name.split('_').collect();
    let last_seg = segments.len() - 1;
    for (si, segment) in segments.iter().enumerate() {
        if si > 0 {
            out.push(SubToken::underscore());
        }
        if segment.is_empty() {
            continue;
        }
        let chunks = camel_chunks(segment);
        let last_chunk = chunks.len() - 1;
        for (ci, chunk) in chunks.iter().enumerate() {
            emit_chunk(chunk, si == last_seg && ci == last_chunk, lexicon, &mut out);
        }
    }
    debug_assert_eq!(
        out.iter().map(|t| t.text.as_str()).collect::<String>(),
        name,
        "sub-tokenization must be lossless"
    );
    Ok(out)
}

/// Exact concatenation; the inverse of `subtokenize_name`.
pub fn detokenize(tokens: &[SubToken]) -> Result<String, SubtokError> {
    if tokens.is_empty() {
        return Err(SubtokError::EmptySequence);
    }
    Ok(tokens.iter().map(|t| t.text.as_str()).collect())
}

fn is_identifier_like(text: &str) -> bool {
    let mut chars = text.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '\'')
}

/// Sub-tokenize identifiers in a lexed statement; keywords pass through.
pub fn subtokenize_statement(tokens: &[SourceToken], lexicon: &Lexicon) -> Vec<String> {
    let mut out = Vec::new();
    for tok in tokens {
        match tok.kind {
            TokenKind::Keyword => out.push(tok.text.clone()),
            TokenKind::Identifier => match subtokenize_name(&tok.text, lexicon) {
                Ok(subs) => out.extend(subs.into_iter().map(|s| s.text)),
                Err(_) => out.push(tok.text.clone()),
            },
        }
    }
    out
}

/// Sub-tokenize one item of a flattened tree: identifier-shaped atoms split,
/// everything else ("(" , ")", operators, notation strings) stays verbatim.
pub fn subtokenize_flat_token(item: &str, lexicon: &Lexicon, out: &mut Vec<String>) {
    if is_identifier_like(item) {
        match subtokenize_name(item, lexicon) {
            Ok(subs) => out.extend(subs.into_iter().map(|s| s.text)),
            Err(_) => out.push(item.to_string()),
        }
    } else {
        out.push(item.to_string());
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sexp::{SourceToken, TokenKind};
    use proptest::prelude::*;

    fn texts(toks: &[SubToken]) -> Vec<&str> {
        toks.iter().map(|t| t.text.as_str()).collect()
    }

    #[test]
    fn splits_the_reference_example() {
        let lex = Lexicon::default();
        let toks = subtokenize_name("extprod_mulgA", &lex).unwrap();
        assert_eq!(texts(&toks), vec!["extprod", "_", "mul", "g", "A"]);
        assert_eq!(toks[1].kind, SubTokenKind::Underscore);
        assert_eq!(toks.last().unwrap().kind, SubTokenKind::Suffix);
    }

    #[test]
    fn unknown_run_stays_whole() {
        let lex = Lexicon::default();
        assert_eq!(texts(&subtokenize_name("foo", &lex).unwrap()), vec!["foo"]);
    }

    #[test]
    fn characteristic_property_suffix() {
        let lex = Lexicon::default();
        let toks = subtokenize_name("nerodeP", &lex).unwrap();
        assert_eq!(texts(&toks), vec!["nerode", "P"]);
        assert_eq!(toks[1].kind, SubTokenKind::Suffix);
    }

    #[test]
    fn digits_bind_to_preceding_word() {
        let lex = Lexicon::default();
        assert_eq!(texts(&subtokenize_name("L1", &lex).unwrap()), vec!["L1"]);
        assert_eq!(texts(&subtokenize_name("N1", &lex).unwrap()), vec!["N1"]);
    }

    #[test]
    fn camel_case_splits() {
        let lex = Lexicon::default();
        let toks = subtokenize_name("mgClassifier", &lex).unwrap();
        assert_eq!(texts(&toks), vec!["mg", "Classifier"]);
    }

    #[test]
    fn empty_name_is_an_error() {
        assert_eq!(subtokenize_name("", &Lexicon::default()), Err(SubtokError::EmptyName));
        assert_eq!(detokenize(&[]), Err(SubtokError::EmptySequence));
    }

    #[test]
    fn detokenize_reassembles() {
        let toks = vec![
            SubToken::word("mg"),
            SubToken::underscore(),
            SubToken::word("eq"),
            SubToken::underscore(),
            SubToken::word("nerode"),
        ];
        assert_eq!(detokenize(&toks).unwrap(), "mg_eq_nerode");
        assert_eq!(detokenize(&[SubToken::word("x")]).unwrap(), "x");
    }

    #[test]
    fn statement_subtokenization() {
        let lex = Lexicon::default();
        let toks = vec![
            SourceToken { text: "mgClassifier".into(), kind: TokenKind::Identifier },
            SourceToken { text: ":".into(), kind: TokenKind::Keyword },
        ];
        assert_eq!(subtokenize_statement(&toks, &lex), vec!["mg", "Classifier", ":"]);
        let arrow = vec![SourceToken { text: "->".into(), kind: TokenKind::Keyword }];
        assert_eq!(subtokenize_statement(&arrow, &lex), vec!["->"]);
    }

    #[test]
    fn lexicon_round_trips_through_text() {
        let lex = Lexicon::default();
        let parsed = Lexicon::parse(&lex.to_text()).unwrap();
        assert_eq!(parsed, lex);
    }

    #[test]
    fn lexicon_rejects_underscores_and_strays() {
        assert!(Lexicon::parse("[components]\nfoo_bar\n").is_err());
        assert!(Lexicon::parse("dangling\n").is_err());
        assert!(Lexicon::parse("[wat]\n").is_err());
    }

    proptest! {
        #[test]
        fn subtokenization_is_lossless(name in "[a-zA-Z][a-zA-Z0-9_']{0,20}") {
            let lex = Lexicon::default();
            let toks = subtokenize_name(&name, &lex).unwrap();
            prop_assert_eq!(detokenize(&toks).unwrap(), name);
        }

        #[test]
        fn statement_identifiers_concatenate_back(name in "[a-zA-Z][a-zA-Z0-9]{0,12}") {
            let lex = Lexicon::default();
            let toks = vec![SourceToken { text: name.clone(), kind: TokenKind::Identifier }];
            let subs = subtokenize_statement(&toks, &lex);
            prop_assert_eq!(subs.concat(), name);
        }
    }
}
