use super::{ArithOp, CmpOp, Expr};
use crate::error::EngineError;
use crate::schema::Schema;
use crate::value::{DataType, Value};
use std::cmp::Ordering;

/// An expression whose columns are resolved to row positions and whose
/// operand types have been checked.
#[derive(Debug, Clone)]
pub struct BoundExpr {
    node: Node,
    dtype: Option<DataType>,
}

#[derive(Debug, Clone)]
enum Node {
    Column(usize),
    Literal(Value),
    Arith(ArithOp, Box<BoundExpr>, Box<BoundExpr>),
    Cmp(CmpOp, Box<BoundExpr>, Box<BoundExpr>),
    And(Box<BoundExpr>, Box<BoundExpr>),
    Or(Box<BoundExpr>, Box<BoundExpr>),
    Not(Box<BoundExpr>),
    IsNull(Box<BoundExpr>),
    IsNotNull(Box<BoundExpr>),
}

fn type_name(t: Option<DataType>) -> &'static str {
    t.map_or("null", DataType::name)
}

fn require_bool(e: &BoundExpr, what: &str) -> Result<(), EngineError> {
    match e.dtype {
        None | Some(DataType::Bool) => Ok(()),
        Some(t) => Err(EngineError::Type(format!(
            "`{what}` needs bool operands, found {t}"
        ))),
    }
}

impl BoundExpr {
    pub(super) fn bind(expr: &Expr, schema: &Schema) -> Result<Self, EngineError> {
        let bound = match expr {
            Expr::Column(name) => {
                let idx = schema.require(name)?;
                BoundExpr {
                    node: Node::Column(idx),
                    dtype: Some(schema.fields()[idx].dtype),
                }
            }
            Expr::Literal(v) => BoundExpr {
                node: Node::Literal(v.clone()),
                dtype: v.data_type(),
            },
            Expr::Arith { op, left, right } => {
                let l = Self::bind(left, schema)?;
                let r = Self::bind(right, schema)?;
                let numeric = |t: Option<DataType>| t.is_none_or(DataType::is_numeric);
                if !numeric(l.dtype) || !numeric(r.dtype) {
                    return Err(EngineError::Type(format!(
                        "cannot apply `{}` to {} and {}",
                        op.symbol(),
                        type_name(l.dtype),
                        type_name(r.dtype)
                    )));
                }
                let dtype = if *op == ArithOp::Div
                    || l.dtype == Some(DataType::Float)
                    || r.dtype == Some(DataType::Float)
                {
                    DataType::Float
                } else {
                    DataType::Int
                };
                BoundExpr {
                    node: Node::Arith(*op, Box::new(l), Box::new(r)),
                    dtype: Some(dtype),
                }
            }
            Expr::Cmp { op, left, right } => {
                let l = Self::bind(left, schema)?;
                let r = Self::bind(right, schema)?;
                let ok = match (l.dtype, r.dtype) {
                    (None, _) | (_, None) => true,
                    (Some(a), Some(b)) if a.is_numeric() && b.is_numeric() => true,
                    (Some(DataType::Str), Some(DataType::Str)) => true,
                    (Some(DataType::Bool), Some(DataType::Bool)) => {
                        matches!(op, CmpOp::Eq | CmpOp::Ne)
                    }
                    _ => false,
                };
                if !ok {
                    return Err(EngineError::Type(format!(
                        "cannot compare {} {} {}",
                        type_name(l.dtype),
                        op.symbol(),
                        type_name(r.dtype)
                    )));
                }
                BoundExpr {
                    node: Node::Cmp(*op, Box::new(l), Box::new(r)),
                    dtype: Some(DataType::Bool),
                }
            }
            Expr::And(a, b) | Expr::Or(a, b) => {
                let is_and = matches!(expr, Expr::And(..));
                let l = Self::bind(a, schema)?;
                let r = Self::bind(b, schema)?;
                let word = if is_and { "and" } else { "or" };
                require_bool(&l, word)?;
                require_bool(&r, word)?;
                let node = if is_and {
                    Node::And(Box::new(l), Box::new(r))
                } else {
                    Node::Or(Box::new(l), Box::new(r))
                };
                BoundExpr {
                    node,
                    dtype: Some(DataType::Bool),
                }
            }
            Expr::Not(e) => {
                let inner = Self::bind(e, schema)?;
                require_bool(&inner, "not")?;
                BoundExpr {
                    node: Node::Not(Box::new(inner)),
                    dtype: Some(DataType::Bool),
                }
            }
            Expr::IsNull(e) => BoundExpr {
                node: Node::IsNull(Box::new(Self::bind(e, schema)?)),
                dtype: Some(DataType::Bool),
            },
            Expr::IsNotNull(e) => BoundExpr {
                node: Node::IsNotNull(Box::new(Self::bind(e, schema)?)),
                dtype: Some(DataType::Bool),
            },
        };
        Ok(bound)
    }

    pub fn data_type(&self) -> Option<DataType> {
        self.dtype
    }

    pub fn eval(&self, row: &[Value]) -> Value {
        match &self.node {
            Node::Column(i) => row[*i].clone(),
            Node::Literal(v) => v.clone(),
            Node::Arith(op, l, r) => arith(*op, &l.eval(row), &r.eval(row)),
            Node::Cmp(op, l, r) => Value::Bool(compare(*op, &l.eval_ref(row), &r.eval_ref(row))),
            Node::And(l, r) => Value::Bool(l.test(row) && r.test(row)),
            Node::Or(l, r) => Value::Bool(l.test(row) || r.test(row)),
            Node::Not(e) => Value::Bool(!e.test(row)),
            Node::IsNull(e) => Value::Bool(e.eval_ref(row).is_null()),
            Node::IsNotNull(e) => Value::Bool(!e.eval_ref(row).is_null()),
        }
    }

    /// Evaluate as a predicate: only `Bool(true)` passes.
    pub fn test(&self, row: &[Value]) -> bool {
        match &self.node {
            Node::Cmp(op, l, r) => compare(*op, &l.eval_ref(row), &r.eval_ref(row)),
            Node::And(l, r) => l.test(row) && r.test(row),
            Node::Or(l, r) => l.test(row) || r.test(row),
            Node::Not(e) => !e.test(row),
            Node::IsNull(e) => e.eval_ref(row).is_null(),
            Node::IsNotNull(e) => !e.eval_ref(row).is_null(),
            _ => self.eval_ref(row).is_true(),
        }
    }

    /// Column references and literals borrow instead of cloning.
    fn eval_ref<'a>(&'a self, row: &'a [Value]) -> std::borrow::Cow<'a, Value> {
        use std::borrow::Cow;
        match &self.node {
            Node::Column(i) => Cow::Borrowed(&row[*i]),
            Node::Literal(v) => Cow::Borrowed(v),
            _ => Cow::Owned(self.eval(row)),
        }
    }
}

fn arith(op: ArithOp, l: &Value, r: &Value) -> Value {
    match (l, r) {
        (Value::Null, _) | (_, Value::Null) => Value::Null,
        (Value::Int(a), Value::Int(b)) if op != ArithOp::Div => {
            let out = match op {
                ArithOp::Add => a.checked_add(*b),
                ArithOp::Sub => a.checked_sub(*b),
                ArithOp::Mul => a.checked_mul(*b),
                ArithOp::Div => unreachable!(),
            };
            out.map_or(Value::Null, Value::Int)
        }
        _ => {
            let (Some(a), Some(b)) = (to_f64(l), to_f64(r)) else {
                return Value::Null;
            };
            match op {
                ArithOp::Add => Value::Float(a + b),
                ArithOp::Sub => Value::Float(a - b),
                ArithOp::Mul => Value::Float(a * b),
                ArithOp::Div if b == 0.0 => Value::Null,
                ArithOp::Div => Value::Float(a / b),
            }
        }
    }
}

fn to_f64(v: &Value) -> Option<f64> {
    match v {
        Value::Int(i) => Some(*i as f64),
        Value::Float(f) => Some(*f),
        _ => None,
    }
}

fn compare(op: CmpOp, l: &Value, r: &Value) -> bool {
    if l.is_null() || r.is_null() {
        return false;
    }
    match l.sql_cmp(r) {
        Some(ord) => match op {
            CmpOp::Eq => ord == Ordering::Equal,
            CmpOp::Ne => ord != Ordering::Equal,
            CmpOp::Lt => ord == Ordering::Less,
            CmpOp::Le => ord != Ordering::Greater,
            CmpOp::Gt => ord == Ordering::Greater,
            CmpOp::Ge => ord != Ordering::Less,
        },
        // NaN is unordered: unequal to everything, comparable to nothing
        None => op == CmpOp::Ne,
    }
}
