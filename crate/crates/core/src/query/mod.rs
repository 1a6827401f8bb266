//! The temporal query language: lexing, parsing, canonical formatting and
//! autocomplete.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

pub mod ast;
mod complete;
mod format;
mod lexer;
mod parser;

pub use ast::Expr;
pub use complete::{suggest_completions, Suggestion, SuggestionKind, TEMPLATES};
pub use format::{format_canonical, format_timestep_def};
pub use parser::{parse, parse_timestep_def};

/// A syntax error. `offset` is a byte offset into the source.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseError {
    pub offset: usize,
    pub message: String,
    pub expected: Vec<String>,
}

impl ParseError {
    pub fn new(offset: usize, message: &str, expected: Vec<String>) -> ParseError {
        ParseError { offset, message: message.to_string(), expected }
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (at offset {})", self.message, self.offset)
    }
}

impl core::error::Error for ParseError {}

/// Parse and re-format, the normal form used for cache keys and persisted
/// specs.
pub fn canonicalize(src: &str) -> Result<String, ParseError> {
    parse(src).map(|e| format_canonical(&e))
}
