//! Recursive-descent parser.
//!
//! Grammar (whitespace insignificant):
//!
//! ```text
//! field  := expr (';' expr)*
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' unary)?            // right-associative
//! atom   := NUMBER | IDENT | IDENT '(' expr (',' expr)* ')' | '(' expr ')'
//! ```
//!
//! `^` binds tighter than unary minus on the left (`-x^2` is `-(x^2)`) and
//! looser on the right (`x^-2` is `x^(-2)`). There is no implicit
//! multiplication: `2x` is a syntax error.

use super::lexer::{tokenize, Spanned, Tok};
use super::{BinOp, Func, Node, VarEnv};
use crate::error::ParseError;

pub(super) struct Parser<'a> {
    toks: Vec<Spanned>,
    pos: usize,
    env: &'a VarEnv,
    input_len: usize,
}

impl<'a> Parser<'a> {
    pub(super) fn new(text: &str, env: &'a VarEnv) -> Result<Self, ParseError> {
        Ok(Parser {
            toks: tokenize(text)?,
            pos: 0,
            env,
            input_len: text.len(),
        })
    }

    fn peek(&self) -> Option<&Spanned> {
        self.toks.get(self.pos)
    }

    fn advance(&mut self) -> Option<Spanned> {
        let t = self.toks.get(self.pos).cloned();
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn err_here(&self, expected: &str) -> ParseError {
        match self.peek() {
            Some(s) => ParseError::Syntax {
                offset: s.offset,
                expected: expected.into(),
                found: s.tok.describe(),
            },
            None => ParseError::Syntax {
                offset: self.input_len,
                expected: expected.into(),
                found: "end of input".into(),
            },
        }
    }

    /// Parse a semicolon-separated component list until end of input.
    pub(super) fn parse_components(&mut self) -> Result<Vec<Node>, ParseError> {
        let mut comps = vec![self.parse_expr()?];
        while let Some(s) = self.peek() {
            match s.tok {
                Tok::Semi => {
                    self.pos += 1;
                    comps.push(self.parse_expr()?);
                }
                _ => return Err(self.err_here("`;` or end of input")),
            }
        }
        Ok(comps)
    }

    fn parse_expr(&mut self) -> Result<Node, ParseError> {
        let mut node = self.parse_term()?;
        while let Some(s) = self.peek() {
            let op = match s.tok {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => break,
            };
            self.pos += 1;
            let rhs = self.parse_term()?;
            node = Node::Bin(op, Box::new(node), Box::new(rhs));
        }
        Ok(node)
    }

    fn parse_term(&mut self) -> Result<Node, ParseError> {
        let mut node = self.parse_unary()?;
        while let Some(s) = self.peek() {
            let op = match s.tok {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => break,
            };
            self.pos += 1;
            let rhs = self.parse_unary()?;
            node = Node::Bin(op, Box::new(node), Box::new(rhs));
        }
        Ok(node)
    }

    fn parse_unary(&mut self) -> Result<Node, ParseError> {
        if let Some(s) = self.peek() {
            if s.tok == Tok::Minus {
                self.pos += 1;
                let inner = self.parse_unary()?;
                return Ok(Node::Neg(Box::new(inner)));
            }
        }
        self.parse_power()
    }

    fn parse_power(&mut self) -> Result<Node, ParseError> {
        let base = self.parse_atom()?;
        if let Some(s) = self.peek() {
            if s.tok == Tok::Caret {
                self.pos += 1;
                let expo = self.parse_unary()?;
                return Ok(Node::Bin(BinOp::Pow, Box::new(base), Box::new(expo)));
            }
        }
        Ok(base)
    }

    fn parse_atom(&mut self) -> Result<Node, ParseError> {
        let s = match self.advance() {
            Some(s) => s,
            None => {
                return Err(ParseError::Syntax {
                    offset: self.input_len,
                    expected: "a number, identifier, or `(`".into(),
                    found: "end of input".into(),
                })
            }
        };
        match s.tok {
            Tok::Num(v) => Ok(Node::Num(v)),
            Tok::LParen => {
                let inner = self.parse_expr()?;
                match self.advance() {
                    Some(Spanned { tok: Tok::RParen, .. }) => Ok(inner),
                    _ => {
                        self.pos = self.pos.saturating_sub(1);
                        Err(self.err_here("`)`"))
                    }
                }
            }
            Tok::Ident(name) => {
                let is_call = matches!(self.peek(), Some(Spanned { tok: Tok::LParen, .. }));
                if is_call {
                    self.pos += 1; // consume '('
                    let func = Func::from_name(&name).ok_or(ParseError::UnknownIdentifier {
                        name: name.clone(),
                        offset: s.offset,
                    })?;
                    let mut args = vec![self.parse_expr()?];
                    loop {
                        match self.advance() {
                            Some(Spanned { tok: Tok::Comma, .. }) => {
                                args.push(self.parse_expr()?);
                            }
                            Some(Spanned { tok: Tok::RParen, .. }) => break,
                            _ => {
                                self.pos = self.pos.saturating_sub(1);
                                return Err(self.err_here("`,` or `)`"));
                            }
                        }
                    }
                    if args.len() != func.arity() {
                        return Err(ParseError::ArityMismatch {
                            function: func.name(),
                            offset: s.offset,
                            expected: func.arity(),
                            got: args.len(),
                        });
                    }
                    Ok(Node::Call(func, args))
                } else {
                    match name.as_str() {
                        "pi" => Ok(Node::Num(std::f64::consts::PI)),
                        "e" => Ok(Node::Num(std::f64::consts::E)),
                        _ => match self.env.slot_of(&name) {
                            Some(slot) => Ok(Node::Var { name, slot }),
                            None => Err(ParseError::UnknownIdentifier {
                                name,
                                offset: s.offset,
                            }),
                        },
                    }
                }
            }
            other => Err(ParseError::Syntax {
                offset: s.offset,
                expected: "a number, identifier, or `(`".into(),
                found: other.describe(),
            }),
        }
    }
}
