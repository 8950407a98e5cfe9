//! Tokenizer for the expression grammar. Every token carries the 0-based byte
//! offset of its first character so parse errors can point into the input.

use crate::error::ParseError;

#[derive(Debug, Clone, PartialEq)]
pub(super) enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
    Semi,
}

impl Tok {
    pub(super) fn describe(&self) -> String {
        match self {
            Tok::Num(v) => format!("number `{v}`"),
            Tok::Ident(s) => format!("identifier `{s}`"),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Star => "`*`".into(),
            Tok::Slash => "`/`".into(),
            Tok::Caret => "`^`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Semi => "`;`".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub(super) struct Spanned {
    pub tok: Tok,
    pub offset: usize,
}

pub(super) fn tokenize(text: &str) -> Result<Vec<Spanned>, ParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let b = bytes[i];
        match b {
            b' ' | b'\t' | b'\r' | b'\n' => {
                i += 1;
            }
            b'+' => {
                out.push(Spanned { tok: Tok::Plus, offset: i });
                i += 1;
            }
            b'-' => {
                out.push(Spanned { tok: Tok::Minus, offset: i });
                i += 1;
            }
            b'*' => {
                out.push(Spanned { tok: Tok::Star, offset: i });
                i += 1;
            }
            b'/' => {
                out.push(Spanned { tok: Tok::Slash, offset: i });
                i += 1;
            }
            b'^' => {
                out.push(Spanned { tok: Tok::Caret, offset: i });
                i += 1;
            }
            b'(' => {
                out.push(Spanned { tok: Tok::LParen, offset: i });
                i += 1;
            }
            b')' => {
                out.push(Spanned { tok: Tok::RParen, offset: i });
                i += 1;
            }
            b',' => {
                out.push(Spanned { tok: Tok::Comma, offset: i });
                i += 1;
            }
            b';' => {
                out.push(Spanned { tok: Tok::Semi, offset: i });
                i += 1;
            }
            b'0'..=b'9' => {
                let (tok, len) = lex_number(text, i)?;
                out.push(Spanned { tok, offset: i });
                i += len;
            }
            b'.' if i + 1 < bytes.len() && bytes[i + 1].is_ascii_digit() => {
                let (tok, len) = lex_number(text, i)?;
                out.push(Spanned { tok, offset: i });
                i += len;
            }
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                let start = i;
                while i < bytes.len()
                    && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_')
                {
                    i += 1;
                }
                out.push(Spanned {
                    tok: Tok::Ident(text[start..i].to_string()),
                    offset: start,
                });
            }
            _ => {
                let ch = text[i..].chars().next().unwrap();
                return Err(ParseError::Syntax {
                    offset: i,
                    expected: "a token".into(),
                    found: format!("`{ch}`"),
                });
            }
        }
    }
    Ok(out)
}

/// Decimal literal: digits, optional fraction, optional exponent. A leading
/// dot is accepted (`.5`). The exponent marker is only consumed when followed
/// by a digit (optionally signed) so `2e` lexes as `2` then the constant `e`.
fn lex_number(text: &str, start: usize) -> Result<(Tok, usize), ParseError> {
    let bytes = text.as_bytes();
    let mut i = start;
    while i < bytes.len() && bytes[i].is_ascii_digit() {
        i += 1;
    }
    if i < bytes.len() && bytes[i] == b'.' {
        i += 1;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
    }
    if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
        let mut j = i + 1;
        if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
            j += 1;
        }
        if j < bytes.len() && bytes[j].is_ascii_digit() {
            i = j;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
        }
    }
    let lit = &text[start..i];
    match lit.parse::<f64>() {
        Ok(v) => Ok((Tok::Num(v), i - start)),
        Err(_) => Err(ParseError::Syntax {
            offset: start,
            expected: "a decimal literal".into(),
            found: format!("`{lit}`"),
        }),
    }
}
