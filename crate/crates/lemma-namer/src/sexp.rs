//! S-expression parsing, printing, and navigation.
//!
//! The textual format matches what serialization tools for proof assistants
//! emit: bare atoms, double-quoted atoms with `\"` and `\\` escapes, and
//! parenthesized lists. `()` is a legal empty list and distinct from any atom.

use thiserror::Error;

/// Hard limit on nesting depth. Kernel trees are deep; blowing the stack
/// silently is worse than a clear error.
pub const MAX_DEPTH: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Sexp {
    Atom(String),
    List(Vec<Sexp>),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SexpError {
    #[error("unbalanced parenthesis at byte {0}")]
    UnbalancedParen(usize),
    #[error("unexpected trailing input at byte {0}")]
    UnexpectedTrailingInput(usize),
    #[error("unterminated string starting at byte {0}")]
    UnterminatedString(usize),
    #[error("empty input")]
    EmptyInput,
    #[error("nesting depth exceeds {MAX_DEPTH}")]
    TooDeep,
}

impl Sexp {
    pub fn atom(text: impl Into<String>) -> Sexp {
        Sexp::Atom(text.into())
    }

    pub fn list(children: Vec<Sexp>) -> Sexp {
        Sexp::List(children)
    }

    pub fn as_atom(&self) -> Option<&str> {
        match self {
            Sexp::Atom(a) => Some(a),
            Sexp::List(_) => None,
        }
    }

    pub fn as_list(&self) -> Option<&[Sexp]> {
        match self {
            Sexp::Atom(_) => None,
            Sexp::List(cs) => Some(cs),
        }
    }

    /// First child atom of a list, e.g. `App` for `(App f x)`.
    pub fn head(&self) -> Option<&str> {
        self.as_list().and_then(|cs| cs.first()).and_then(Sexp::as_atom)
    }

    /// Atoms count 1; a list counts itself plus all descendants.
    pub fn node_count(&self) -> usize {
        match self {
            Sexp::Atom(_) => 1,
            Sexp::List(cs) => 1 + cs.iter().map(Sexp::node_count).sum::<usize>(),
        }
    }

    /// depth(Atom) == 1; depth(List cs) == 1 + max over children (0 if empty).
    pub fn depth(&self) -> usize {
        match self {
            Sexp::Atom(_) => 1,
            Sexp::List(cs) => 1 + cs.iter().map(Sexp::depth).max().unwrap_or(0),
        }
    }
}

/// A lexed token from the lexing phase of a lemma sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceToken {
    pub text: String,
    pub kind: TokenKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    Identifier,
    Keyword,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TokenError {
    #[error("malformed token at index {0}: expected a two-element IDENT/KEYWORD list")]
    MalformedToken(usize),
    #[error("expected a (Sentence (...)) form")]
    NotASentence,
}

struct Parser<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn parse_value(&mut self, depth: usize) -> Result<Sexp, SexpError> {
        if depth > MAX_DEPTH {
            return Err(SexpError::TooDeep);
        }
        self.skip_ws();
        match self.bytes.get(self.pos) {
            None => Err(SexpError::UnbalancedParen(self.pos)),
            Some(b'(') => {
                self.pos += 1;
                let mut children = Vec::new();
                loop {
                    self.skip_ws();
                    match self.bytes.get(self.pos) {
                        None => return Err(SexpError::UnbalancedParen(self.pos)),
                        Some(b')') => {
                            self.pos += 1;
                            return Ok(Sexp::List(children));
                        }
                        Some(_) => children.push(self.parse_value(depth + 1)?),
                    }
                }
            }
            Some(b')') => Err(SexpError::UnbalancedParen(self.pos)),
            Some(b'"') => self.parse_quoted(),
            Some(_) => self.parse_bare(),
        }
    }

    fn parse_quoted(&mut self) -> Result<Sexp, SexpError> {
        let start = self.pos;
        self.pos += 1; // opening quote
        let mut text = String::new();
        loop {
            match self.bytes.get(self.pos) {
                None => return Err(SexpError::UnterminatedString(start)),
                Some(b'"') => {
                    self.pos += 1;
                    return Ok(Sexp::Atom(text));
                }
                Some(b'\\') => match self.bytes.get(self.pos + 1) {
                    Some(&c @ (b'"' | b'\\')) => {
                        text.push(c as char);
                        self.pos += 2;
                    }
                    Some(&c) => {
                        // Unknown escape: keep both bytes verbatim.
                        text.push('\\');
                        text.push(c as char);
                        self.pos += 2;
                    }
                    None => return Err(SexpError::UnterminatedString(start)),
                },
                Some(&c) => {
                    text.push(c as char);
                    self.pos += 1;
                }
            }
        }
    }

    fn parse_bare(&mut self) -> Result<Sexp, SexpError> {
        let start = self.pos;
        while let Some(&c) = self.bytes.get(self.pos) {
            if c.is_ascii_whitespace() || c == b'(' || c == b')' || c == b'"' {
                break;
            }
            self.pos += 1;
        }
        let text = std::str::from_utf8(&self.bytes[start..self.pos])
            .expect("bare atoms are scanned on ASCII delimiters over valid UTF-8")
            .to_string();
        Ok(Sexp::Atom(text))
    }
}

/// Parse a single s-expression. Whitespace between siblings is insignificant;
/// trailing non-whitespace input is an error.
pub fn parse_sexp(text: &str) -> Result<Sexp, SexpError> {
    let mut parser = Parser { bytes: text.as_bytes(), pos: 0 };
    parser.skip_ws();
    if parser.pos == parser.bytes.len() {
        return Err(SexpError::EmptyInput);
    }
    let value = parser.parse_value(1)?;
    parser.skip_ws();
    if parser.pos != parser.bytes.len() {
        return Err(SexpError::UnexpectedTrailingInput(parser.pos));
    }
    Ok(value)
}

fn atom_needs_quoting(text: &str) -> bool {
    text.is_empty()
        || text
            .chars()
            .any(|c| c.is_whitespace() || c == '(' || c == ')' || c == '"' || c == '\\')
}

fn print_atom(out: &mut String, text: &str) {
    if atom_needs_quoting(text) {
        out.push('"');
        for c in text.chars() {
            if c == '"' || c == '\\' {
                out.push('\\');
            }
            out.push(c);
        }
        out.push('"');
    } else {
        out.push_str(text);
    }
}

/// Canonical printer: one space between siblings, no space adjacent to
/// parentheses, atoms quoted only when they contain whitespace, parens,
/// quotes, or backslashes.
pub fn print_sexp(tree: &Sexp) -> String {
    let mut out = String::new();
    print_into(&mut out, tree);
    out
}

fn print_into(out: &mut String, tree: &Sexp) {
    match tree {
        Sexp::Atom(a) => print_atom(out, a),
        Sexp::List(cs) => {
            out.push('(');
            for (i, c) in cs.iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                print_into(out, c);
            }
            out.push(')');
        }
    }
}

/// Extract the lexed tokens of a `(Sentence ((IDENT x) (KEYWORD y) ...))` form.
/// The lemma-name token and the trailing period are retained; downstream
/// extraction decides what to drop.
pub fn parse_sentence_tokens(tree: &Sexp) -> Result<Vec<SourceToken>, TokenError> {
    let children = match tree.as_list() {
        Some([head, rest]) if head.as_atom() == Some("Sentence") => {
            rest.as_list().ok_or(TokenError::NotASentence)?
        }
        _ => return Err(TokenError::NotASentence),
    };
    let mut tokens = Vec::with_capacity(children.len());
    for (i, child) in children.iter().enumerate() {
        let pair = child.as_list().ok_or(TokenError::MalformedToken(i))?;
        match pair {
            [Sexp::Atom(kind), Sexp::Atom(text)] => {
                let kind = match kind.as_str() {
                    "IDENT" => TokenKind::Identifier,
                    "KEYWORD" => TokenKind::Keyword,
                    _ => return Err(TokenError::MalformedToken(i)),
                };
                tokens.push(SourceToken { text: text.clone(), kind });
            }
            _ => return Err(TokenError::MalformedToken(i)),
        }
    }
    Ok(tokens)
}
