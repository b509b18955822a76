//! Tokenizer for the flat key-value text dialect used by model and scenario files.
//!
//! Whitespace separates tokens, `#` starts a comment that runs to end of line.
//! Every token remembers its 1-based source line for error reporting.

use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct SyntaxError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token<'a> {
    pub text: &'a str,
    pub line: usize,
}

pub struct Tokens<'a> {
    tokens: Vec<Token<'a>>,
    pos: usize,
    last_line: usize,
}

impl<'a> Tokens<'a> {
    pub fn new(src: &'a str) -> Self {
        let mut tokens = Vec::new();
        let mut last_line = 1;
        for (idx, raw) in src.lines().enumerate() {
            let line = idx + 1;
            last_line = line;
            let content = raw.split('#').next().unwrap_or("");
            tokens.extend(content.split_whitespace().map(|text| Token { text, line }));
        }
        Self { tokens, pos: 0, last_line }
    }

    pub fn peek(&self) -> Option<&Token<'a>> {
        self.tokens.get(self.pos)
    }

    pub fn is_empty(&self) -> bool {
        self.pos >= self.tokens.len()
    }

    /// Line of the next token, or of the last line when exhausted.
    pub fn line(&self) -> usize {
        self.peek().map_or(self.last_line, |t| t.line)
    }

    pub fn next_token(&mut self, what: &str) -> Result<Token<'a>, SyntaxError> {
        match self.tokens.get(self.pos) {
            Some(t) => {
                self.pos += 1;
                Ok(t.clone())
            }
            None => Err(SyntaxError {
                line: self.last_line,
                message: format!("unexpected end of file, expected {what}"),
            }),
        }
    }

    pub fn parse<V: FromStr>(&mut self, what: &str) -> Result<V, SyntaxError> {
        let tok = self.next_token(what)?;
        tok.text.parse().map_err(|_| SyntaxError {
            line: tok.line,
            message: format!("invalid value `{}` for {what}", tok.text),
        })
    }

    pub fn parse_n<const N: usize>(&mut self, what: &str) -> Result<[f64; N], SyntaxError> {
        let mut out = [0.0; N];
        for v in out.iter_mut() {
            *v = self.parse(what)?;
        }
        Ok(out)
    }
}

/// Groups a token stream into `(line, key, values)` records, one per source line.
///
/// Scenario files use this line-oriented form; model files use the free-form
/// [`Tokens`] cursor since a joint block may wrap across lines.
pub fn records(src: &str) -> impl Iterator<Item = (usize, &str, Vec<&str>)> {
    src.lines().enumerate().filter_map(|(idx, raw)| {
        let content = raw.split('#').next().unwrap_or("");
        let mut parts = content.split_whitespace();
        let key = parts.next()?;
        Some((idx + 1, key, parts.collect()))
    })
}
