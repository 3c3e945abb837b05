//! Shared reader for the versioned line-oriented artifact formats.
//!
//! Every file starts with `<magic> <version>`; the rest are whitespace
//! separated records whose first token names the record. Blank lines and
//! lines starting with `#` are skipped.

use crate::error::{Error, Result};
use std::fmt::Display;
use std::str::FromStr;

pub(crate) struct LineReader<'a> {
    lines: Vec<(usize, &'a str)>,
    pos: usize,
}

impl<'a> LineReader<'a> {
    pub fn new(text: &'a str) -> Self {
        let lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
            .collect();
        Self { lines, pos: 0 }
    }

    /// Line number of the next record, or one past the last line at EOF.
    pub fn line(&self) -> usize {
        self.lines
            .get(self.pos)
            .map(|(n, _)| *n)
            .unwrap_or_else(|| self.lines.last().map(|(n, _)| n + 1).unwrap_or(1))
    }

    pub fn error(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            line: self.line(),
            message: message.into(),
        }
    }

    pub fn header(&mut self, magic: &str, version: u32) -> Result<()> {
        let tokens = self.record(magic)?;
        let line = self.line_of_previous();
        let [found] = tokens.as_slice() else {
            return Err(Error::Parse {
                line,
                message: "malformed header".into(),
            });
        };
        let found: u32 = parse_token(found, line)?;
        if found != version {
            return Err(Error::VersionMismatch {
                expected: version,
                found,
            });
        }
        Ok(())
    }

    pub fn at_end(&self) -> bool {
        self.pos >= self.lines.len()
    }

    /// Next record's name without consuming it.
    pub fn peek_name(&self) -> Option<&'a str> {
        self.lines.get(self.pos).and_then(|(_, l)| l.split_whitespace().next())
    }

    /// Consumes a record named `name` and returns its remaining tokens.
    pub fn record(&mut self, name: &str) -> Result<Vec<&'a str>> {
        let Some(&(line, text)) = self.lines.get(self.pos) else {
            return Err(self.error(format!("unexpected end of file, expected '{name}'")));
        };
        let mut tokens = text.split_whitespace();
        let found = tokens.next().unwrap_or_default();
        if found != name {
            return Err(Error::Parse {
                line,
                message: format!("expected '{name}', found '{found}'"),
            });
        }
        self.pos += 1;
        Ok(tokens.collect())
    }

    /// Record holding exactly one value.
    pub fn scalar<T: FromStr>(&mut self, name: &str) -> Result<T> {
        let tokens = self.record(name)?;
        let line = self.line_of_previous();
        match tokens.as_slice() {
            [value] => parse_token(value, line),
            _ => Err(Error::Parse {
                line,
                message: format!("'{name}' takes one value"),
            }),
        }
    }

    /// Record holding a list of values, optionally of fixed length.
    pub fn list<T: FromStr>(&mut self, name: &str, len: Option<usize>) -> Result<Vec<T>> {
        let tokens = self.record(name)?;
        let line = self.line_of_previous();
        parse_list(&tokens, len, line)
    }

    pub fn line_of_previous(&self) -> usize {
        self.lines[self.pos - 1].0
    }

    pub fn finish(&mut self) -> Result<()> {
        self.record("end")?;
        if !self.at_end() {
            return Err(self.error("content after 'end'"));
        }
        Ok(())
    }
}

pub(crate) fn parse_token<T: FromStr>(token: &str, line: usize) -> Result<T> {
    token.parse().map_err(|_| Error::Parse {
        line,
        message: format!("invalid value '{token}'"),
    })
}

pub(crate) fn parse_list<T: FromStr>(tokens: &[&str], len: Option<usize>, line: usize) -> Result<Vec<T>> {
    if let Some(n) = len {
        if tokens.len() != n {
            return Err(Error::Parse {
                line,
                message: format!("expected {n} values, found {}", tokens.len()),
            });
        }
    }
    tokens.iter().map(|t| parse_token(t, line)).collect()
}

/// Space-separated values using the shortest round-trip formatting.
pub(crate) fn join<T: Display>(values: &[T]) -> String {
    let mut out = String::new();
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(&v.to_string());
    }
    out
}

/// Floats in shortest round-trip form (exponent notation for extremes).
pub(crate) fn join_f64(values: &[f64]) -> String {
    let mut out = String::new();
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(&format!("{v:?}"));
    }
    out
}
