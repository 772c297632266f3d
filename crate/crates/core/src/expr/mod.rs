//! Column expressions: the textual predicate and derived-column language.
//!
//! Text is parsed into an [`Expr`], bound against a [`Schema`] (which
//! resolves columns to positions and checks operand types), and the
//! resulting [`BoundExpr`] is evaluated row by row. Evaluation never fails:
//! every type error surfaces at bind time.

mod eval;
mod parse;

use std::fmt;

pub use eval::BoundExpr;
pub use parse::parse_expr;

use crate::dataset::Row;
use crate::error::EngineError;
use crate::schema::Schema;
use crate::value::{DataType, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl ArithOp {
    pub fn symbol(self) -> &'static str {
        match self {
            ArithOp::Add => "+",
            ArithOp::Sub => "-",
            ArithOp::Mul => "*",
            ArithOp::Div => "/",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Column(String),
    Literal(Value),
    Arith {
        op: ArithOp,
        left: Box<Expr>,
        right: Box<Expr>,
    },
    Cmp {
        op: CmpOp,
        left: Box<Expr>,
        right: Box<Expr>,
    },
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
    Not(Box<Expr>),
    IsNull(Box<Expr>),
    IsNotNull(Box<Expr>),
}

impl Expr {
    pub fn col(name: &str) -> Self {
        Expr::Column(name.to_owned())
    }

    pub fn lit(value: impl Into<Value>) -> Self {
        Expr::Literal(value.into())
    }

    pub fn arith(op: ArithOp, left: Expr, right: Expr) -> Self {
        Expr::Arith {
            op,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    pub fn cmp(op: CmpOp, left: Expr, right: Expr) -> Self {
        Expr::Cmp {
            op,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    /// Every column name the expression mentions, first-mention order,
    /// without repeats.
    pub fn columns(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_columns(&mut out);
        out
    }

    fn collect_columns<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Expr::Column(name) => {
                if !out.contains(&name.as_str()) {
                    out.push(name);
                }
            }
            Expr::Literal(_) => {}
            Expr::Arith { left, right, .. } | Expr::Cmp { left, right, .. } => {
                left.collect_columns(out);
                right.collect_columns(out);
            }
            Expr::And(l, r) | Expr::Or(l, r) => {
                l.collect_columns(out);
                r.collect_columns(out);
            }
            Expr::Not(e) | Expr::IsNull(e) | Expr::IsNotNull(e) => e.collect_columns(out),
        }
    }

    /// Static result type; `None` for an expression that is always null
    /// (a bare `null` literal or arithmetic on it).
    pub fn data_type(&self, schema: &Schema) -> Result<Option<DataType>, EngineError> {
        Ok(self.bind(schema)?.data_type())
    }

    pub fn bind(&self, schema: &Schema) -> Result<BoundExpr, EngineError> {
        BoundExpr::bind(self, schema)
    }
}

/// Bind and evaluate in one go. Prefer [`Expr::bind`] when evaluating the
/// same expression over many rows.
pub fn eval_expr(expr: &Expr, row: &Row, schema: &Schema) -> Result<Value, EngineError> {
    Ok(expr.bind(schema)?.eval(row))
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Column(name) => f.write_str(name),
            Expr::Literal(v) => match v {
                Value::Null => f.write_str("null"),
                Value::Str(s) => write!(f, "'{}'", s.replace('\'', "''")),
                Value::Float(x) => write!(f, "{x:?}"),
                other => write!(f, "{other}"),
            },
            Expr::Arith { op, left, right } => write!(f, "({left} {} {right})", op.symbol()),
            Expr::Cmp { op, left, right } => write!(f, "({left} {} {right})", op.symbol()),
            Expr::And(l, r) => write!(f, "({l} and {r})"),
            Expr::Or(l, r) => write!(f, "({l} or {r})"),
            Expr::Not(e) => write!(f, "(not {e})"),
            Expr::IsNull(e) => write!(f, "({e} is null)"),
            Expr::IsNotNull(e) => write!(f, "({e} is not null)"),
        }
    }
}
