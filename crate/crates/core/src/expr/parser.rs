//! Recursive-descent parser.
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := ('-' | '+') unary | power
//! power   := primary ('^' unary)?
//! primary := number | variable | function '(' expr ')' | '(' expr ')'
//! ```

use std::fmt;

use thiserror::Error;

use super::{BinaryOp, Expr, UnaryOp, Var};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ParseErrorKind {
    Syntax(String),
    UnknownIdentifier(String),
    Arity { function: String, found: usize },
}

/// Parse failure; `position` is a byte offset into the source.
#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub struct ParseError {
    pub position: usize,
    pub kind: ParseErrorKind,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            ParseErrorKind::Syntax(msg) => write!(f, "syntax error at position {}: {msg}", self.position),
            ParseErrorKind::UnknownIdentifier(name) => {
                write!(f, "unknown identifier `{name}` at position {}", self.position)
            }
            ParseErrorKind::Arity { function, found } => write!(
                f,
                "function `{function}` takes 1 argument but {found} were given (position {})",
                self.position
            ),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Token {
    Number(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
}

fn tokenize(src: &str) -> Result<Vec<(usize, Token)>, ParseError> {
    let bytes = src.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let token = match c {
            '+' | '-' | '*' | '/' | '^' => {
                i += 1;
                Token::Op(c)
            }
            '(' => {
                i += 1;
                Token::LParen
            }
            ')' => {
                i += 1;
                Token::RParen
            }
            ',' => {
                i += 1;
                Token::Comma
            }
            '0'..='9' | '.' => {
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                // exponent only when a digit follows, so `2e` stays a number then an identifier
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        while j < bytes.len() && bytes[j].is_ascii_digit() {
                            j += 1;
                        }
                        i = j;
                    }
                }
                let text = &src[start..i];
                let value: f64 = text.parse().map_err(|_| ParseError {
                    position: start,
                    kind: ParseErrorKind::Syntax(format!("malformed number `{text}`")),
                })?;
                Token::Number(value)
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                Token::Ident(src[start..i].to_string())
            }
            _ => {
                let ch = src[start..].chars().next().unwrap_or('?');
                return Err(ParseError {
                    position: start,
                    kind: ParseErrorKind::Syntax(format!("unexpected character `{ch}`")),
                });
            }
        };
        tokens.push((start, token));
    }
    Ok(tokens)
}

struct Parser {
    tokens: Vec<(usize, Token)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.tokens.get(self.pos).map_or(self.end, |(o, _)| *o)
    }

    fn syntax<T>(&self, msg: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError {
            position: self.offset(),
            kind: ParseErrorKind::Syntax(msg.into()),
        })
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).map(|(_, t)| t.clone());
        self.pos += 1;
        t
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        while let Some(Token::Op(c @ ('+' | '-'))) = self.peek() {
            let op = if *c == '+' { BinaryOp::Add } else { BinaryOp::Sub };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        while let Some(Token::Op(c @ ('*' | '/'))) = self.peek() {
            let op = if *c == '*' { BinaryOp::Mul } else { BinaryOp::Div };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            Some(Token::Op('-')) => {
                self.pos += 1;
                let inner = self.unary()?;
                Ok(Expr::Unary(UnaryOp::Neg, Box::new(inner)))
            }
            Some(Token::Op('+')) => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.primary()?;
        if let Some(Token::Op('^')) = self.peek() {
            self.pos += 1;
            let exponent = self.unary()?;
            return Ok(Expr::Binary(BinaryOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let start = self.offset();
        match self.next() {
            Some(Token::Number(v)) => Ok(Expr::Const(v)),
            Some(Token::LParen) => {
                let inner = self.expr()?;
                match self.next() {
                    Some(Token::RParen) => Ok(inner),
                    _ => {
                        self.pos -= 1;
                        self.syntax("expected `)`")
                    }
                }
            }
            Some(Token::Ident(name)) => {
                let is_call = matches!(self.peek(), Some(Token::LParen));
                if let Some(op) = UnaryOp::from_function_name(&name) {
                    if !is_call {
                        return Err(ParseError {
                            position: start,
                            kind: ParseErrorKind::Syntax(format!("function `{name}` must be called as `{name}(...)`")),
                        });
                    }
                    self.pos += 1;
                    let args = self.arguments()?;
                    if args.len() != 1 {
                        return Err(ParseError {
                            position: start,
                            kind: ParseErrorKind::Arity {
                                function: name,
                                found: args.len(),
                            },
                        });
                    }
                    let arg = args.into_iter().next().expect("one argument");
                    Ok(Expr::Unary(op, Box::new(arg)))
                } else if let Some(var) = Var::from_name(&name) {
                    if is_call {
                        return Err(ParseError {
                            position: start,
                            kind: ParseErrorKind::Syntax(format!("variable `{name}` cannot be called")),
                        });
                    }
                    Ok(Expr::Var(var))
                } else {
                    Err(ParseError {
                        position: start,
                        kind: ParseErrorKind::UnknownIdentifier(name),
                    })
                }
            }
            Some(_) => {
                self.pos -= 1;
                self.syntax("expected a number, variable, function call or `(`")
            }
            None => self.syntax("unexpected end of input"),
        }
    }

    /// Parses a comma-separated argument list after the opening parenthesis.
    fn arguments(&mut self) -> Result<Vec<Expr>, ParseError> {
        let mut args = Vec::new();
        if let Some(Token::RParen) = self.peek() {
            self.pos += 1;
            return Ok(args);
        }
        loop {
            args.push(self.expr()?);
            match self.next() {
                Some(Token::Comma) => continue,
                Some(Token::RParen) => return Ok(args),
                _ => {
                    self.pos -= 1;
                    return self.syntax("expected `,` or `)` in argument list");
                }
            }
        }
    }
}

pub fn parse(src: &str) -> Result<Expr, ParseError> {
    let tokens = tokenize(src)?;
    let mut parser = Parser {
        tokens,
        pos: 0,
        end: src.len(),
    };
    if parser.peek().is_none() {
        return parser.syntax("empty expression");
    }
    let e = parser.expr()?;
    if parser.peek().is_some() {
        return parser.syntax("unexpected trailing input");
    }
    Ok(e)
}
