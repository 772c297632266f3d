//! Recursive-descent parser for expression text.
//!
//! ```text
//! expr     := or
//! or       := and ('or' and)*
//! and      := not ('and' not)*
//! not      := 'not' not | cmp
//! cmp      := additive (cmp_op additive | 'is' 'null' | 'is' 'not' 'null')?
//! additive := term (('+' | '-') term)*
//! term     := unary (('*' | '/') unary)*
//! unary    := '-' unary | primary
//! primary  := ident | int | decimal | 'string' | true | false | null | '(' expr ')'
//! ```
//!
//! Keywords are lowercase. Comparisons do not chain.

use super::{ArithOp, CmpOp, Expr};
use crate::error::EngineError;
use crate::value::Value;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    // magnitude only; the sign is applied by the parser so that i64::MIN parses
    Int(u64),
    Float(f64),
    Str(String),
    Kw(Kw),
    Op(&'static str),
    LParen,
    RParen,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kw {
    And,
    Or,
    Not,
    Is,
    Null,
    True,
    False,
}

fn syntax(offset: usize, message: impl Into<String>) -> EngineError {
    EngineError::Syntax {
        offset,
        message: message.into(),
    }
}

fn lex(text: &str) -> Result<Vec<(usize, Tok)>, EngineError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        match c {
            b' ' | b'\t' | b'\n' | b'\r' => i += 1,
            b'(' => {
                out.push((start, Tok::LParen));
                i += 1;
            }
            b')' => {
                out.push((start, Tok::RParen));
                i += 1;
            }
            b'+' | b'-' | b'*' | b'/' => {
                let op = match c {
                    b'+' => "+",
                    b'-' => "-",
                    b'*' => "*",
                    _ => "/",
                };
                out.push((start, Tok::Op(op)));
                i += 1;
            }
            b'=' | b'!' | b'<' | b'>' => {
                let two = bytes.get(i + 1) == Some(&b'=');
                let op = match (c, two) {
                    (b'=', true) => "==",
                    (b'!', true) => "!=",
                    (b'<', true) => "<=",
                    (b'>', true) => ">=",
                    (b'<', false) => "<",
                    (b'>', false) => ">",
                    (b'=', false) => return Err(syntax(start, "`=` is not an operator; use `==`")),
                    _ => return Err(syntax(start, "expected `!=`")),
                };
                out.push((start, Tok::Op(op)));
                i += if two { 2 } else { 1 };
            }
            b'\'' => {
                let mut s = String::new();
                i += 1;
                loop {
                    let Some(rest) = text.get(i..) else {
                        return Err(syntax(start, "unterminated string literal"));
                    };
                    let Some(q) = rest.find('\'') else {
                        return Err(syntax(start, "unterminated string literal"));
                    };
                    s.push_str(&rest[..q]);
                    i += q + 1;
                    if bytes.get(i) == Some(&b'\'') {
                        s.push('\'');
                        i += 1;
                    } else {
                        break;
                    }
                }
                out.push((start, Tok::Str(s)));
            }
            b'0'..=b'9' | b'.' => {
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                let mut is_float = false;
                if bytes.get(i) == Some(&b'.') {
                    is_float = true;
                    i += 1;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                if matches!(bytes.get(i), Some(b'e' | b'E')) {
                    is_float = true;
                    i += 1;
                    if matches!(bytes.get(i), Some(b'+' | b'-')) {
                        i += 1;
                    }
                    let digits = i;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                    if digits == i {
                        return Err(syntax(start, "malformed exponent"));
                    }
                }
                let lexeme = &text[start..i];
                let tok =
                    if is_float {
                        Tok::Float(
                            lexeme.parse().map_err(|_| {
                                syntax(start, format!("malformed number `{lexeme}`"))
                            })?,
                        )
                    } else {
                        Tok::Int(lexeme.parse().map_err(|_| {
                            syntax(start, format!("integer `{lexeme}` out of range"))
                        })?)
                    };
                out.push((start, tok));
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                let word = &text[start..i];
                let tok = match word {
                    "and" => Tok::Kw(Kw::And),
                    "or" => Tok::Kw(Kw::Or),
                    "not" => Tok::Kw(Kw::Not),
                    "is" => Tok::Kw(Kw::Is),
                    "null" => Tok::Kw(Kw::Null),
                    "true" => Tok::Kw(Kw::True),
                    "false" => Tok::Kw(Kw::False),
                    _ => Tok::Ident(word.to_owned()),
                };
                out.push((start, tok));
            }
            _ => {
                let ch = text[start..].chars().next().unwrap_or('?');
                return Err(syntax(start, format!("unexpected character `{ch}`")));
            }
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |(o, _)| *o)
    }

    fn eat_kw(&mut self, kw: Kw) -> bool {
        if self.peek() == Some(&Tok::Kw(kw)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn eat_op(&mut self, ops: &[&'static str]) -> Option<&'static str> {
        match self.peek() {
            Some(Tok::Op(op)) if ops.contains(op) => {
                let op = *op;
                self.pos += 1;
                Some(op)
            }
            _ => None,
        }
    }

    fn or(&mut self) -> Result<Expr, EngineError> {
        let mut left = self.and()?;
        while self.eat_kw(Kw::Or) {
            let right = self.and()?;
            left = Expr::Or(Box::new(left), Box::new(right));
        }
        Ok(left)
    }

    fn and(&mut self) -> Result<Expr, EngineError> {
        let mut left = self.not()?;
        while self.eat_kw(Kw::And) {
            let right = self.not()?;
            left = Expr::And(Box::new(left), Box::new(right));
        }
        Ok(left)
    }

    fn not(&mut self) -> Result<Expr, EngineError> {
        if self.eat_kw(Kw::Not) {
            return Ok(Expr::Not(Box::new(self.not()?)));
        }
        self.cmp()
    }

    fn cmp(&mut self) -> Result<Expr, EngineError> {
        let left = self.additive()?;
        if let Some(op) = self.eat_op(&["==", "!=", "<", "<=", ">", ">="]) {
            let op = match op {
                "==" => CmpOp::Eq,
                "!=" => CmpOp::Ne,
                "<" => CmpOp::Lt,
                "<=" => CmpOp::Le,
                ">" => CmpOp::Gt,
                _ => CmpOp::Ge,
            };
            let right = self.additive()?;
            return Ok(Expr::cmp(op, left, right));
        }
        if self.eat_kw(Kw::Is) {
            let negated = self.eat_kw(Kw::Not);
            if !self.eat_kw(Kw::Null) {
                return Err(syntax(self.offset(), "expected `null` after `is`"));
            }
            let inner = Box::new(left);
            return Ok(if negated {
                Expr::IsNotNull(inner)
            } else {
                Expr::IsNull(inner)
            });
        }
        Ok(left)
    }

    fn additive(&mut self) -> Result<Expr, EngineError> {
        let mut left = self.term()?;
        while let Some(op) = self.eat_op(&["+", "-"]) {
            let op = if op == "+" {
                ArithOp::Add
            } else {
                ArithOp::Sub
            };
            let right = self.term()?;
            left = Expr::arith(op, left, right);
        }
        Ok(left)
    }

    fn term(&mut self) -> Result<Expr, EngineError> {
        let mut left = self.unary()?;
        while let Some(op) = self.eat_op(&["*", "/"]) {
            let op = if op == "*" {
                ArithOp::Mul
            } else {
                ArithOp::Div
            };
            let right = self.unary()?;
            left = Expr::arith(op, left, right);
        }
        Ok(left)
    }

    fn unary(&mut self) -> Result<Expr, EngineError> {
        let start = self.offset();
        if self.eat_op(&["-"]).is_none() {
            return self.primary();
        }
        // fold the sign into numeric literals
        match self.peek().cloned() {
            Some(Tok::Int(m)) => {
                self.pos += 1;
                let v = if m == 1u64 << 63 {
                    i64::MIN
                } else {
                    i64::try_from(m)
                        .map(|v| -v)
                        .map_err(|_| syntax(start, "integer out of range"))?
                };
                Ok(Expr::Literal(Value::Int(v)))
            }
            Some(Tok::Float(f)) => {
                self.pos += 1;
                Ok(Expr::Literal(Value::Float(-f)))
            }
            _ => {
                let operand = self.unary()?;
                Ok(Expr::arith(
                    ArithOp::Sub,
                    Expr::Literal(Value::Int(0)),
                    operand,
                ))
            }
        }
    }

    fn primary(&mut self) -> Result<Expr, EngineError> {
        let offset = self.offset();
        let Some(tok) = self.peek().cloned() else {
            return Err(syntax(offset, "unexpected end of expression"));
        };
        self.pos += 1;
        match tok {
            Tok::Ident(name) => Ok(Expr::Column(name)),
            Tok::Int(m) => i64::try_from(m)
                .map(|v| Expr::Literal(Value::Int(v)))
                .map_err(|_| syntax(offset, "integer out of range")),
            Tok::Float(f) => Ok(Expr::Literal(Value::Float(f))),
            Tok::Str(s) => Ok(Expr::Literal(Value::Str(s))),
            Tok::Kw(Kw::True) => Ok(Expr::Literal(Value::Bool(true))),
            Tok::Kw(Kw::False) => Ok(Expr::Literal(Value::Bool(false))),
            Tok::Kw(Kw::Null) => Ok(Expr::Literal(Value::Null)),
            Tok::LParen => {
                let inner = self.or()?;
                if self.peek() != Some(&Tok::RParen) {
                    return Err(syntax(self.offset(), "expected `)`"));
                }
                self.pos += 1;
                Ok(inner)
            }
            other => Err(syntax(offset, format!("unexpected token {other:?}"))),
        }
    }
}

pub fn parse_expr(text: &str) -> Result<Expr, EngineError> {
    let toks = lex(text)?;
    let mut p = Parser {
        toks,
        pos: 0,
        end: text.len(),
    };
    let expr = p.or()?;
    if p.pos != p.toks.len() {
        return Err(syntax(p.offset(), "unexpected trailing input"));
    }
    Ok(expr)
}
