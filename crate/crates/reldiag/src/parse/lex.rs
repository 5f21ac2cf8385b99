//! Shared tokenizer for the four query languages.
//!
//! Tracks 1-based line/column positions for error reporting. `--` starts
//! a line comment in every language.

use crate::error::SourceError;
use crate::model::Value;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TokenKind {
    /// Identifier or keyword; keyword recognition is the parser's job.
    Ident(String),
    Int(i64),
    Str(String),
    /// Punctuation or operator: one of `( ) [ ] { } , . | * _`
    /// `= != <> < <= > >= :- ->`.
    Punct(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub line: usize,
    pub column: usize,
    pub text: String,
}

pub fn tokenize(text: &str) -> Result<Vec<Token>, SourceError> {
    let mut tokens = Vec::new();
    let mut chars = text.chars().peekable();
    let (mut line, mut column) = (1usize, 1usize);
    while let Some(&c) = chars.peek() {
        let (tline, tcol) = (line, column);
        let mut bump = |chars: &mut std::iter::Peekable<std::str::Chars>| {
            let c = chars.next().unwrap();
            if c == '\n' {
                line += 1;
                column = 1;
            } else {
                column += 1;
            }
            c
        };
        if c.is_whitespace() {
            bump(&mut chars);
            continue;
        }
        if c == '-' {
            // `--` comment, `->` arrow, or a negative number.
            bump(&mut chars);
            match chars.peek() {
                Some('-') => {
                    while let Some(&n) = chars.peek() {
                        if n == '\n' {
                            break;
                        }
                        bump(&mut chars);
                    }
                }
                Some('>') => {
                    bump(&mut chars);
                    tokens.push(tok(TokenKind::Punct("->"), tline, tcol, "->"));
                }
                Some(d) if d.is_ascii_digit() => {
                    let n = lex_int(&mut chars, &mut bump, true, tline, tcol)?;
                    tokens.push(n);
                }
                _ => {
                    return Err(err(tline, tcol, "unexpected `-`", Some("-")));
                }
            }
            continue;
        }
        if c.is_ascii_digit() {
            let n = lex_int(&mut chars, &mut bump, false, tline, tcol)?;
            tokens.push(n);
            continue;
        }
        if c.is_ascii_alphabetic() {
            let mut s = String::new();
            while let Some(&n) = chars.peek() {
                if n.is_ascii_alphanumeric() || n == '_' {
                    s.push(bump(&mut chars));
                } else {
                    break;
                }
            }
            tokens.push(tok(TokenKind::Ident(s.clone()), tline, tcol, &s));
            continue;
        }
        if c == '_' {
            bump(&mut chars);
            if chars.peek().is_some_and(|n| n.is_ascii_alphanumeric() || *n == '_') {
                return Err(err(
                    tline,
                    tcol,
                    "names starting with `_` are reserved; `_` alone is the anonymous variable",
                    Some("_"),
                ));
            }
            tokens.push(tok(TokenKind::Punct("_"), tline, tcol, "_"));
            continue;
        }
        if c == '\'' || c == '"' {
            let quote = bump(&mut chars);
            let mut s = String::new();
            loop {
                match chars.peek() {
                    None => return Err(err(tline, tcol, "unterminated string literal", None)),
                    Some('\\') => {
                        bump(&mut chars);
                        match chars.peek() {
                            Some(&e) if e == quote || e == '\\' => s.push(bump(&mut chars)),
                            _ => return Err(err(tline, tcol, "bad escape in string literal", None)),
                        }
                    }
                    Some(&n) if n == quote => {
                        bump(&mut chars);
                        break;
                    }
                    Some(_) => s.push(bump(&mut chars)),
                }
            }
            let text = format!("'{s}'");
            tokens.push(tok(TokenKind::Str(s), tline, tcol, &text));
            continue;
        }
        // Multi-character operators first.
        let two = {
            let mut it = chars.clone();
            let a = it.next();
            let b = it.next();
            match (a, b) {
                (Some(a), Some(b)) => Some([a, b].iter().collect::<String>()),
                _ => None,
            }
        };
        let two_op = two.as_deref().and_then(|t| {
            ["<=", ">=", "!=", "<>", ":-"].iter().find(|op| **op == t).copied()
        });
        if let Some(op) = two_op {
            bump(&mut chars);
            bump(&mut chars);
            tokens.push(tok(TokenKind::Punct(op), tline, tcol, op));
            continue;
        }
        let one_op = ["(", ")", "[", "]", "{", "}", ",", ".", "|", "*", "=", "<", ">"]
            .iter()
            .find(|op| op.chars().next().unwrap() == c)
            .copied();
        if let Some(op) = one_op {
            bump(&mut chars);
            tokens.push(tok(TokenKind::Punct(op), tline, tcol, op));
            continue;
        }
        return Err(err(tline, tcol, "unexpected character", Some(&c.to_string())));
    }
    Ok(tokens)
}

fn lex_int(
    chars: &mut std::iter::Peekable<std::str::Chars>,
    bump: &mut impl FnMut(&mut std::iter::Peekable<std::str::Chars>) -> char,
    negative: bool,
    line: usize,
    col: usize,
) -> Result<Token, SourceError> {
    let mut s = String::new();
    while let Some(&n) = chars.peek() {
        if n.is_ascii_digit() {
            s.push(bump(chars));
        } else {
            break;
        }
    }
    let text = if negative { format!("-{s}") } else { s.clone() };
    let value: i64 = text
        .parse()
        .map_err(|_| err(line, col, "integer literal out of range", Some(&text)))?;
    Ok(tok(TokenKind::Int(value), line, col, &text))
}

fn tok(kind: TokenKind, line: usize, column: usize, text: &str) -> Token {
    Token {
        kind,
        line,
        column,
        text: text.to_string(),
    }
}

fn err(line: usize, column: usize, message: &str, token: Option<&str>) -> SourceError {
    SourceError {
        line,
        column,
        message: message.to_string(),
        token: token.map(|t| t.to_string()),
    }
}

/// A token cursor with the helpers shared by the four parsers.
pub struct Cursor {
    tokens: Vec<Token>,
    pos: usize,
}

impl Cursor {
    pub fn new(text: &str) -> Result<Cursor, SourceError> {
        Ok(Cursor {
            tokens: tokenize(text)?,
            pos: 0,
        })
    }

    pub fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    pub fn peek_at(&self, offset: usize) -> Option<&Token> {
        self.tokens.get(self.pos + offset)
    }

    pub fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    pub fn at_end(&self) -> bool {
        self.pos >= self.tokens.len()
    }

    pub fn mark(&self) -> usize {
        self.pos
    }

    pub fn rewind(&mut self, mark: usize) {
        self.pos = mark;
    }

    /// Error at the current token (or at end of input).
    pub fn error(&self, message: &str) -> SourceError {
        match self.peek() {
            Some(t) => SourceError {
                line: t.line,
                column: t.column,
                message: message.to_string(),
                token: Some(t.text.clone()),
            },
            None => {
                let (line, column) = self
                    .tokens
                    .last()
                    .map(|t| (t.line, t.column + t.text.len()))
                    .unwrap_or((1, 1));
                SourceError {
                    line,
                    column,
                    message: format!("{message} (unexpected end of input)"),
                    token: None,
                }
            }
        }
    }

    /// Is the current token the given punctuation?
    pub fn at_punct(&self, p: &str) -> bool {
        matches!(self.peek(), Some(Token { kind: TokenKind::Punct(q), .. }) if *q == p)
    }

    pub fn eat_punct(&mut self, p: &str) -> bool {
        if self.at_punct(p) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    pub fn expect_punct(&mut self, p: &str) -> Result<(), SourceError> {
        if self.eat_punct(p) {
            Ok(())
        } else {
            Err(self.error(&format!("expected `{p}`")))
        }
    }

    /// Is the current token an identifier equal to `kw` (ASCII
    /// case-insensitive)?
    pub fn at_keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Token { kind: TokenKind::Ident(s), .. }) if s.eq_ignore_ascii_case(kw))
    }

    pub fn eat_keyword(&mut self, kw: &str) -> bool {
        if self.at_keyword(kw) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    pub fn expect_keyword(&mut self, kw: &str) -> Result<(), SourceError> {
        if self.eat_keyword(kw) {
            Ok(())
        } else {
            Err(self.error(&format!("expected `{kw}`")))
        }
    }

    /// Consume an identifier; keywords listed in `reserved` are rejected.
    pub fn expect_ident(&mut self, what: &str, reserved: &[&str]) -> Result<String, SourceError> {
        match self.peek() {
            Some(Token { kind: TokenKind::Ident(s), .. }) => {
                if reserved.iter().any(|k| s.eq_ignore_ascii_case(k)) {
                    return Err(self.error(&format!("expected {what}, found a keyword")));
                }
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => Err(self.error(&format!("expected {what}"))),
        }
    }

    /// Consume a comparison operator.
    pub fn expect_op(&mut self) -> Result<crate::model::CompOp, SourceError> {
        if let Some(Token { kind: TokenKind::Punct(p), .. }) = self.peek() {
            if let Some(op) = crate::model::CompOp::from_symbol(p) {
                self.pos += 1;
                return Ok(op);
            }
        }
        Err(self.error("expected a comparison operator"))
    }

    /// Consume a constant value (integer or string).
    pub fn expect_value(&mut self) -> Result<Value, SourceError> {
        match self.peek() {
            Some(Token { kind: TokenKind::Int(n), .. }) => {
                let n = *n;
                self.pos += 1;
                Ok(Value::Int(n))
            }
            Some(Token { kind: TokenKind::Str(s), .. }) => {
                let s = s.clone();
                self.pos += 1;
                Ok(Value::Str(s))
            }
            _ => Err(self.error("expected a constant")),
        }
    }

    pub fn at_value(&self) -> bool {
        matches!(
            self.peek(),
            Some(Token { kind: TokenKind::Int(_), .. }) | Some(Token { kind: TokenKind::Str(_), .. })
        )
    }

    pub fn expect_end(&self) -> Result<(), SourceError> {
        if self.at_end() {
            Ok(())
        } else {
            Err(self.error("trailing input after the query"))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizes_mixed_input() {
        let toks = tokenize("Q(x, y1) :- R(x), x >= -2, not S('a\\'b').").unwrap();
        let kinds: Vec<String> = toks.iter().map(|t| t.text.clone()).collect();
        assert_eq!(
            kinds,
            vec!["Q", "(", "x", ",", "y1", ")", ":-", "R", "(", "x", ")", ",", "x", ">=", "-2", ",",
                 "not", "S", "(", "'a'b'", ")", "."]
        );
    }

    #[test]
    fn tracks_positions() {
        let toks = tokenize("ab\n  cd").unwrap();
        assert_eq!((toks[0].line, toks[0].column), (1, 1));
        assert_eq!((toks[1].line, toks[1].column), (2, 3));
    }

    #[test]
    fn comments_are_skipped() {
        let toks = tokenize("R -- the base table\nS").unwrap();
        assert_eq!(toks.len(), 2);
    }

    #[test]
    fn reserved_underscore_names() {
        assert!(tokenize("_x").is_err());
        let toks = tokenize("_").unwrap();
        assert_eq!(toks[0].kind, TokenKind::Punct("_"));
    }

    #[test]
    fn angle_inequality_alias() {
        let toks = tokenize("a <> b != c").unwrap();
        assert_eq!(toks[1].kind, TokenKind::Punct("<>"));
        assert_eq!(toks[3].kind, TokenKind::Punct("!="));
    }
}
