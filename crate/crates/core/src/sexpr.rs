//! S-expression reader and printer shared by the ontology and DSL formats.
//!
//! The concrete syntax is deliberately small: lists in parentheses, symbols,
//! keywords (symbols with a leading colon), double-quoted strings and decimal
//! numbers. `;` starts a comment that runs to the end of the line.

use std::fmt;

use thiserror::Error;

/// 1-based line and column of a token in the source text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Loc {
    pub line: u32,
    pub col: u32,
}

impl Loc {
    pub fn new(line: u32, col: u32) -> Self {
        Self { line, col }
    }
}

impl fmt::Display for Loc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

/// A source location carried by model types. Two spans always compare
/// equal, so structural equality of parsed models ignores positions.
#[derive(Debug, Clone, Copy, Default)]
pub struct Span(pub Loc);

impl PartialEq for Span {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

impl Eq for Span {}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl From<Loc> for Span {
    fn from(l: Loc) -> Self {
        Span(l)
    }
}

#[derive(Debug, Clone)]
pub enum SExprKind {
    Symbol(String),
    Str(String),
    Number(f64),
    /// Stored without the leading colon.
    Keyword(String),
    List(Vec<SExpr>),
}

/// A parsed s-expression. Equality is structural and ignores locations.
#[derive(Debug, Clone)]
pub struct SExpr {
    pub kind: SExprKind,
    pub loc: Loc,
}

impl PartialEq for SExprKind {
    fn eq(&self, other: &Self) -> bool {
        use SExprKind::*;
        match (self, other) {
            (Symbol(a), Symbol(b)) | (Str(a), Str(b)) | (Keyword(a), Keyword(b)) => a == b,
            (Number(a), Number(b)) => a.to_bits() == b.to_bits() || a == b,
            (List(a), List(b)) => a == b,
            _ => false,
        }
    }
}

impl PartialEq for SExpr {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
    }
}

impl SExpr {
    pub fn new(kind: SExprKind, loc: Loc) -> Self {
        Self { kind, loc }
    }

    pub fn symbol(s: impl Into<String>) -> Self {
        Self::new(SExprKind::Symbol(s.into()), Loc::default())
    }

    pub fn keyword(s: impl Into<String>) -> Self {
        Self::new(SExprKind::Keyword(s.into()), Loc::default())
    }

    pub fn string(s: impl Into<String>) -> Self {
        Self::new(SExprKind::Str(s.into()), Loc::default())
    }

    pub fn number(n: f64) -> Self {
        Self::new(SExprKind::Number(n), Loc::default())
    }

    pub fn list(items: Vec<SExpr>) -> Self {
        Self::new(SExprKind::List(items), Loc::default())
    }

    pub fn as_symbol(&self) -> Option<&str> {
        match &self.kind {
            SExprKind::Symbol(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_keyword(&self) -> Option<&str> {
        match &self.kind {
            SExprKind::Keyword(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match &self.kind {
            SExprKind::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_list(&self) -> Option<&[SExpr]> {
        match &self.kind {
            SExprKind::List(items) => Some(items),
            _ => None,
        }
    }

    /// Head symbol of a list form, e.g. `defnode` in `(defnode n1 ...)`.
    pub fn head_symbol(&self) -> Option<&str> {
        self.as_list().and_then(|l| l.first()).and_then(SExpr::as_symbol)
    }

    /// Head keyword of a clause, e.g. `message` in `(:message "hi")`.
    pub fn head_keyword(&self) -> Option<&str> {
        self.as_list().and_then(|l| l.first()).and_then(SExpr::as_keyword)
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            SExprKind::Symbol(_) => "symbol",
            SExprKind::Str(_) => "string",
            SExprKind::Number(_) => "number",
            SExprKind::Keyword(_) => "keyword",
            SExprKind::List(_) => "list",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SExprError {
    #[error("{loc}: unclosed list opened here")]
    UnclosedList { loc: Loc },
    #[error("{loc}: unexpected ')'")]
    UnexpectedClose { loc: Loc },
    #[error("{loc}: unterminated string")]
    UnterminatedString { loc: Loc },
    #[error("{loc}: invalid escape '\\{ch}' in string")]
    InvalidEscape { loc: Loc, ch: char },
}

impl SExprError {
    pub fn loc(&self) -> Loc {
        match self {
            SExprError::UnclosedList { loc }
            | SExprError::UnexpectedClose { loc }
            | SExprError::UnterminatedString { loc }
            | SExprError::InvalidEscape { loc, .. } => *loc,
        }
    }
}

struct Reader<'a> {
    chars: std::iter::Peekable<std::str::Chars<'a>>,
    line: u32,
    col: u32,
}

impl<'a> Reader<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            chars: text.chars().peekable(),
            line: 1,
            col: 1,
        }
    }

    fn loc(&self) -> Loc {
        Loc::new(self.line, self.col)
    }

    fn peek(&mut self) -> Option<char> {
        self.chars.peek().copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn skip_trivia(&mut self) {
        while let Some(c) = self.peek() {
            if c.is_whitespace() {
                self.bump();
            } else if c == ';' {
                while let Some(c) = self.peek() {
                    if c == '\n' {
                        break;
                    }
                    self.bump();
                }
            } else {
                break;
            }
        }
    }

    fn read_all(&mut self) -> Result<Vec<SExpr>, SExprError> {
        let mut out = Vec::new();
        loop {
            self.skip_trivia();
            match self.peek() {
                None => return Ok(out),
                Some(')') => return Err(SExprError::UnexpectedClose { loc: self.loc() }),
                Some(_) => out.push(self.read_one()?),
            }
        }
    }

    fn read_one(&mut self) -> Result<SExpr, SExprError> {
        let loc = self.loc();
        match self.peek() {
            Some('(') => {
                self.bump();
                let mut items = Vec::new();
                loop {
                    self.skip_trivia();
                    match self.peek() {
                        None => return Err(SExprError::UnclosedList { loc }),
                        Some(')') => {
                            self.bump();
                            return Ok(SExpr::new(SExprKind::List(items), loc));
                        }
                        Some(_) => items.push(self.read_one()?),
                    }
                }
            }
            Some('"') => {
                self.bump();
                let mut s = String::new();
                loop {
                    match self.bump() {
                        None => return Err(SExprError::UnterminatedString { loc }),
                        Some('"') => return Ok(SExpr::new(SExprKind::Str(s), loc)),
                        Some('\\') => {
                            let esc_loc = self.loc();
                            match self.bump() {
                                Some('"') => s.push('"'),
                                Some('\\') => s.push('\\'),
                                Some('n') => s.push('\n'),
                                Some('t') => s.push('\t'),
                                Some(ch) => return Err(SExprError::InvalidEscape { loc: esc_loc, ch }),
                                None => return Err(SExprError::UnterminatedString { loc }),
                            }
                        }
                        Some(c) => s.push(c),
                    }
                }
            }
            _ => {
                let mut tok = String::new();
                while let Some(c) = self.peek() {
                    if c.is_whitespace() || matches!(c, '(' | ')' | '"' | ';') {
                        break;
                    }
                    tok.push(c);
                    self.bump();
                }
                Ok(SExpr::new(classify_atom(tok), loc))
            }
        }
    }
}

fn classify_atom(tok: String) -> SExprKind {
    if let Some(kw) = tok.strip_prefix(':') {
        if !kw.is_empty() {
            return SExprKind::Keyword(kw.to_string());
        }
    }
    if is_decimal(&tok) {
        if let Ok(n) = tok.parse::<f64>() {
            return SExprKind::Number(n);
        }
    }
    SExprKind::Symbol(tok)
}

fn is_decimal(tok: &str) -> bool {
    let body = tok.strip_prefix('-').unwrap_or(tok);
    let mut parts = body.splitn(2, '.');
    let int = parts.next().unwrap_or("");
    let frac = parts.next();
    !int.is_empty()
        && int.bytes().all(|b| b.is_ascii_digit())
        && frac.is_none_or(|f| !f.is_empty() && f.bytes().all(|b| b.is_ascii_digit()))
}

/// Parse every top-level form in `text`.
pub fn parse_sexprs(text: &str) -> Result<Vec<SExpr>, SExprError> {
    Reader::new(text).read_all()
}

fn write_string_literal(f: &mut fmt::Formatter<'_>, s: &str) -> fmt::Result {
    f.write_str("\"")?;
    for c in s.chars() {
        match c {
            '"' => f.write_str("\\\"")?,
            '\\' => f.write_str("\\\\")?,
            '\n' => f.write_str("\\n")?,
            '\t' => f.write_str("\\t")?,
            c => write!(f, "{c}")?,
        }
    }
    f.write_str("\"")
}

impl fmt::Display for SExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            SExprKind::Symbol(s) => f.write_str(s),
            SExprKind::Keyword(k) => write!(f, ":{k}"),
            SExprKind::Str(s) => write_string_literal(f, s),
            SExprKind::Number(n) => write!(f, "{n}"),
            SExprKind::List(items) => {
                f.write_str("(")?;
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" ")?;
                    }
                    write!(f, "{item}")?;
                }
                f.write_str(")")
            }
        }
    }
}
