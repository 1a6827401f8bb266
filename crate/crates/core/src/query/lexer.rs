use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use super::ParseError;

#[derive(Clone, Debug, PartialEq)]
pub enum Tok {
    Field(String),
    Number(f64),
    Text(String),
    Word(String),
    Now,
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Eof,
}

impl Tok {
    pub fn describe(&self) -> String {
        match self {
            Tok::Field(name) => alloc::format!("field {{{}}}", name),
            Tok::Number(x) => alloc::format!("number {}", x),
            Tok::Text(_) => "string".to_string(),
            Tok::Word(w) => alloc::format!("`{}`", w),
            Tok::Now => "`#now`".to_string(),
            Tok::Eof => "end of input".to_string(),
            other => alloc::format!("`{}`", other.symbol()),
        }
    }

    fn symbol(&self) -> &'static str {
        match self {
            Tok::Plus => "+",
            Tok::Minus => "-",
            Tok::Star => "*",
            Tok::Slash => "/",
            Tok::Caret => "^",
            Tok::Eq => "=",
            Tok::Ne => "!=",
            Tok::Lt => "<",
            Tok::Le => "<=",
            Tok::Gt => ">",
            Tok::Ge => ">=",
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::LBracket => "[",
            Tok::RBracket => "]",
            Tok::Comma => ",",
            _ => "",
        }
    }

    pub fn is_word(&self, w: &str) -> bool {
        matches!(self, Tok::Word(x) if x == w)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Token {
    pub tok: Tok,
    pub start: usize,
    pub end: usize,
}

/// Result of lexing a possibly incomplete source: the tokens read so far
/// and the first error, if any.
pub struct Lexed {
    pub tokens: Vec<Token>,
    pub error: Option<ParseError>,
    /// Byte offset of an unterminated `{`, used by autocomplete.
    pub open_field: Option<usize>,
}

pub fn lex(src: &str) -> Result<Vec<Token>, ParseError> {
    let lexed = lex_partial(src);
    match lexed.error {
        Some(e) => Err(e),
        None => Ok(lexed.tokens),
    }
}

pub fn lex_partial(src: &str) -> Lexed {
    let bytes = src.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    let fail = |tokens: Vec<Token>, offset: usize, message: &str, open_field: Option<usize>| Lexed {
        tokens,
        error: Some(ParseError::new(offset, message, vec![])),
        open_field,
    };
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let simple = match c {
            b'+' => Some(Tok::Plus),
            b'-' => Some(Tok::Minus),
            b'*' => Some(Tok::Star),
            b'/' => Some(Tok::Slash),
            b'^' => Some(Tok::Caret),
            b'=' => Some(Tok::Eq),
            b'(' => Some(Tok::LParen),
            b')' => Some(Tok::RParen),
            b'[' => Some(Tok::LBracket),
            b']' => Some(Tok::RBracket),
            b',' => Some(Tok::Comma),
            _ => None,
        };
        if let Some(tok) = simple {
            tokens.push(Token { tok, start, end: i + 1 });
            i += 1;
            continue;
        }
        match c {
            b'<' | b'>' | b'!' => {
                let followed_by_eq = bytes.get(i + 1) == Some(&b'=');
                let tok = match (c, followed_by_eq) {
                    (b'<', true) => Tok::Le,
                    (b'<', false) => Tok::Lt,
                    (b'>', true) => Tok::Ge,
                    (b'>', false) => Tok::Gt,
                    (b'!', true) => Tok::Ne,
                    _ => return fail(tokens, start, "unexpected `!`; did you mean `!=` or `not`?", None),
                };
                i += if followed_by_eq { 2 } else { 1 };
                tokens.push(Token { tok, start, end: i });
            }
            b'{' => match src[i + 1..].find('}') {
                Some(rel) => {
                    let name = src[i + 1..i + 1 + rel].trim();
                    if name.is_empty() {
                        return fail(tokens, start, "empty field name", None);
                    }
                    i = i + 1 + rel + 1;
                    tokens.push(Token { tok: Tok::Field(name.to_string()), start, end: i });
                }
                None => return fail(tokens, start, "unterminated field reference", Some(start)),
            },
            b'"' => {
                let mut text = String::new();
                let mut j = i + 1;
                let mut closed = false;
                let mut chars = src[j..].char_indices();
                while let Some((off, ch)) = chars.next() {
                    match ch {
                        '"' => {
                            j += off + 1;
                            closed = true;
                            break;
                        }
                        '\\' => match chars.next() {
                            Some((_, 'n')) => text.push('\n'),
                            Some((_, esc)) => text.push(esc),
                            None => break,
                        },
                        _ => text.push(ch),
                    }
                }
                if !closed {
                    return fail(tokens, start, "unterminated string", None);
                }
                i = j;
                tokens.push(Token { tok: Tok::Text(text), start, end: i });
            }
            b'#' => {
                let rest = &src[i + 1..];
                let word_len = rest.bytes().take_while(|b| b.is_ascii_alphanumeric() || *b == b'_').count();
                if &rest[..word_len] == "now" {
                    i += 1 + word_len;
                    tokens.push(Token { tok: Tok::Now, start, end: i });
                } else {
                    return fail(tokens, start, "unknown `#` variable; only `#now` is defined", None);
                }
            }
            b'0'..=b'9' | b'.' => {
                let mut j = i;
                while j < bytes.len() && bytes[j].is_ascii_digit() {
                    j += 1;
                }
                if j < bytes.len() && bytes[j] == b'.' {
                    j += 1;
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                }
                match src[i..j].parse::<f64>() {
                    Ok(x) if x.is_finite() => tokens.push(Token { tok: Tok::Number(x), start, end: j }),
                    _ => return fail(tokens, start, "malformed number", None),
                }
                i = j;
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                let mut j = i;
                while j < bytes.len() && (bytes[j].is_ascii_alphanumeric() || bytes[j] == b'_') {
                    j += 1;
                }
                tokens.push(Token { tok: Tok::Word(src[i..j].to_string()), start, end: j });
                i = j;
            }
            _ => {
                let ch = src[i..].chars().next().unwrap_or('?');
                return fail(tokens, start, &alloc::format!("unexpected character `{}`", ch), None);
            }
        }
    }
    tokens.push(Token { tok: Tok::Eof, start: src.len(), end: src.len() });
    Lexed { tokens, error: None, open_field: None }
}
