//! The `.pol` policy language: lexer, parser and pretty-printer.
//!
//! `parse(print(b)) == b` for every well-formed bundle.

pub mod ast;
mod lexer;
mod parser;
mod printer;

use std::fmt;

pub use ast::*;
pub use printer::{print, print_formula};

/// A named source text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceFile {
    pub path: String,
    pub text: String,
}

impl SourceFile {
    pub fn new(path: impl Into<String>, text: impl Into<String>) -> Self {
        Self { path: path.into(), text: text.into() }
    }

    pub fn read(path: impl AsRef<std::path::Path>) -> std::io::Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Ok(Self { path: path.display().to_string(), text })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    /// 1-based.
    pub line: usize,
    /// 1-based, in characters.
    pub column: usize,
    pub message: String,
    /// Description of the tokens that would have been accepted.
    pub expected: String,
}

impl ParseError {
    pub fn new(line: usize, column: usize, message: impl Into<String>, expected: impl Into<String>) -> Self {
        Self { line, column, message: message.into(), expected: expected.into() }
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}; expected {}", self.line, self.column, self.message, self.expected)
    }
}

impl std::error::Error for ParseError {}

/// Parses a whole file, reporting every syntax error found.
pub fn parse(src: &SourceFile) -> Result<Bundle, Vec<ParseError>> {
    parser::parse_text(&src.text)
}

pub fn parse_str(text: &str) -> Result<Bundle, Vec<ParseError>> {
    parser::parse_text(text)
}
