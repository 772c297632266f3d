//! The relational operators pipelines are built from.
//!
//! Each operator has a `*_schema` companion that computes its output schema
//! (and performs all validation) without looking at any rows; the pipeline
//! uses those for static plan checking. The operator functions themselves
//! validate the same way before running, so they are safe to call directly.

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Row};
use crate::error::{EngineError, Side};
use crate::expr::Expr;
use crate::schema::{Field, Schema};
use crate::value::{DataType, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JoinType {
    Inner,
    Left,
}

impl JoinType {
    pub fn as_str(self) -> &'static str {
        match self {
            JoinType::Inner => "inner",
            JoinType::Left => "left",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggFunc {
    Count,
    Sum,
    Min,
    Max,
    Avg,
}

impl AggFunc {
    pub fn as_str(self) -> &'static str {
        match self {
            AggFunc::Count => "count",
            AggFunc::Sum => "sum",
            AggFunc::Min => "min",
            AggFunc::Max => "max",
            AggFunc::Avg => "avg",
        }
    }
}

/// One aggregate output column. `column` may be `*` for `count`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Aggregate {
    pub func: AggFunc,
    pub column: String,
    #[serde(rename = "as")]
    pub output: String,
}

impl Aggregate {
    pub fn new(func: AggFunc, column: &str, output: &str) -> Self {
        Self {
            func,
            column: column.to_owned(),
            output: output.to_owned(),
        }
    }
}

/// Sort direction: one flag broadcast to every column, or one per column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Ascending {
    All(bool),
    Each(Vec<bool>),
}

impl Ascending {
    fn resolve(&self, columns: usize) -> Result<Vec<bool>, EngineError> {
        match self {
            Ascending::All(flag) => Ok(vec![*flag; columns]),
            Ascending::Each(flags) if flags.len() == columns => Ok(flags.clone()),
            Ascending::Each(flags) => Err(EngineError::SortArity {
                columns,
                flags: flags.len(),
            }),
        }
    }
}

fn unique_names<'a>(names: impl IntoIterator<Item = &'a String>) -> Result<(), EngineError> {
    let mut seen = HashSet::new();
    for n in names {
        if !seen.insert(n.as_str()) {
            return Err(EngineError::DuplicateColumn(n.clone()));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- filter

pub fn filter_schema(schema: &Schema, predicate: &Expr) -> Result<Schema, EngineError> {
    match predicate.data_type(schema)? {
        None | Some(DataType::Bool) => Ok(schema.clone()),
        Some(t) => Err(EngineError::NotBoolean(t.to_string())),
    }
}

pub fn filter(data: &Dataset, predicate: &Expr) -> Result<Dataset, EngineError> {
    let schema = filter_schema(data.schema(), predicate)?;
    let bound = predicate.bind(&schema)?;
    let rows = data
        .rows()
        .iter()
        .filter(|r| bound.test(r))
        .cloned()
        .collect();
    Ok(Dataset::from_parts(schema, rows))
}

// ---------------------------------------------------------------- select

pub fn select_schema(schema: &Schema, columns: &[String]) -> Result<Schema, EngineError> {
    unique_names(columns)?;
    let fields = columns
        .iter()
        .map(|c| schema.require(c).map(|i| schema.fields()[i].clone()))
        .collect::<Result<Vec<_>, _>>()?;
    Schema::new(fields)
}

pub fn select(data: &Dataset, columns: &[String]) -> Result<Dataset, EngineError> {
    let schema = select_schema(data.schema(), columns)?;
    let idx: Vec<usize> = columns
        .iter()
        .map(|c| data.schema().require(c))
        .collect::<Result<_, _>>()?;
    let rows = data
        .rows()
        .iter()
        .map(|r| idx.iter().map(|&i| r[i].clone()).collect())
        .collect();
    Ok(Dataset::from_parts(schema, rows))
}

// ----------------------------------------------------------- with_column

pub fn with_column_schema(schema: &Schema, name: &str, expr: &Expr) -> Result<Schema, EngineError> {
    // an always-null expression has no type of its own; store it as str
    let dtype = expr.data_type(schema)?.unwrap_or(DataType::Str);
    let mut fields = schema.fields().to_vec();
    match schema.index_of(name) {
        Some(i) => fields[i].dtype = dtype,
        None => fields.push(Field::new(name, dtype)),
    }
    Schema::new(fields)
}

pub fn with_column(data: &Dataset, name: &str, expr: &Expr) -> Result<Dataset, EngineError> {
    let schema = with_column_schema(data.schema(), name, expr)?;
    let bound = expr.bind(data.schema())?;
    let target = data.schema().index_of(name);
    let rows = data
        .rows()
        .iter()
        .map(|r| {
            let v = bound.eval(r);
            let mut out = r.clone();
            match target {
                Some(i) => out[i] = v,
                None => out.push(v),
            }
            out
        })
        .collect();
    Ok(Dataset::from_parts(schema, rows))
}

// ------------------------------------------------------------------ join

/// Key tuple compared with SQL equality. Only built for rows whose key
/// values are all non-null and non-NaN, where SQL equality is an
/// equivalence relation.
struct JoinKey<'a> {
    row: &'a [Value],
    cols: &'a [usize],
}

impl JoinKey<'_> {
    fn matchable(&self) -> bool {
        self.cols.iter().all(|&c| match &self.row[c] {
            Value::Null => false,
            Value::Float(f) => !f.is_nan(),
            _ => true,
        })
    }
}

impl Hash for JoinKey<'_> {
    fn hash<H: Hasher>(&self, state: &mut H) {
        for &c in self.cols {
            match &self.row[c] {
                // fold -0.0 into 0.0 so they hash alike
                Value::Float(f) => (f + 0.0).to_bits().hash(state),
                v => v.hash(state),
            }
        }
    }
}

impl PartialEq for JoinKey<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.cols
            .iter()
            .zip(other.cols)
            .all(|(&a, &b)| self.row[a].sql_eq(&other.row[b]))
    }
}

impl Eq for JoinKey<'_> {}

pub fn join_schema(left: &Schema, right: &Schema, on: &[String]) -> Result<Schema, EngineError> {
    if on.is_empty() {
        return Err(EngineError::NoJoinKeys);
    }
    unique_names(on)?;
    for key in on {
        let l = left.field(key).ok_or_else(|| EngineError::JoinKeyMissing {
            key: key.clone(),
            side: Side::Left,
        })?;
        let r = right
            .field(key)
            .ok_or_else(|| EngineError::JoinKeyMissing {
                key: key.clone(),
                side: Side::Right,
            })?;
        if l.dtype != r.dtype {
            return Err(EngineError::JoinKeyType {
                key: key.clone(),
                left: l.dtype,
                right: r.dtype,
            });
        }
    }
    let mut fields = left.fields().to_vec();
    for f in right.fields() {
        if on.contains(&f.name) {
            continue;
        }
        if left.index_of(&f.name).is_some() {
            return Err(EngineError::JoinColumnConflict(f.name.clone()));
        }
        fields.push(f.clone());
    }
    Schema::new(fields)
}

pub fn join(
    left: &Dataset,
    right: &Dataset,
    on: &[String],
    how: JoinType,
) -> Result<Dataset, EngineError> {
    let schema = join_schema(left.schema(), right.schema(), on)?;
    let lkeys: Vec<usize> = on
        .iter()
        .map(|k| left.schema().require(k))
        .collect::<Result<_, _>>()?;
    let rkeys: Vec<usize> = on
        .iter()
        .map(|k| right.schema().require(k))
        .collect::<Result<_, _>>()?;
    let rkeep: Vec<usize> = (0..right.schema().len())
        .filter(|i| !rkeys.contains(i))
        .collect();

    let mut table: HashMap<JoinKey<'_>, Vec<usize>> = HashMap::new();
    for (i, row) in right.rows().iter().enumerate() {
        let key = JoinKey { row, cols: &rkeys };
        if key.matchable() {
            table.entry(key).or_default().push(i);
        }
    }

    let mut rows = Vec::new();
    for lrow in left.rows() {
        let key = JoinKey {
            row: lrow,
            cols: &lkeys,
        };
        let matches = if key.matchable() {
            table.get(&key)
        } else {
            None
        };
        match matches {
            Some(ms) => {
                for &m in ms {
                    let rrow = &right.rows()[m];
                    let mut out = Vec::with_capacity(schema.len());
                    out.extend_from_slice(lrow);
                    out.extend(rkeep.iter().map(|&c| rrow[c].clone()));
                    rows.push(out);
                }
            }
            None if how == JoinType::Left => {
                let mut out = Vec::with_capacity(schema.len());
                out.extend_from_slice(lrow);
                out.resize(schema.len(), Value::Null);
                rows.push(out);
            }
            None => {}
        }
    }
    Ok(Dataset::from_parts(schema, rows))
}

// ---------------------------------------------------------- group_by_agg

pub fn group_by_agg_schema(
    schema: &Schema,
    keys: &[String],
    aggs: &[Aggregate],
) -> Result<Schema, EngineError> {
    unique_names(keys)?;
    let mut fields = Vec::with_capacity(keys.len() + aggs.len());
    for k in keys {
        fields.push(schema.fields()[schema.require(k)?].clone());
    }
    for agg in aggs {
        let dtype = if agg.func == AggFunc::Count && agg.column == "*" {
            DataType::Int
        } else {
            let input = schema.fields()[schema.require(&agg.column)?].dtype;
            match agg.func {
                AggFunc::Count => DataType::Int,
                AggFunc::Sum | AggFunc::Avg if !input.is_numeric() => {
                    return Err(EngineError::AggNonNumeric {
                        func: agg.func.as_str(),
                        column: agg.column.clone(),
                        dtype: input,
                    })
                }
                AggFunc::Sum => input,
                AggFunc::Avg => DataType::Float,
                AggFunc::Min | AggFunc::Max if input == DataType::Bool => {
                    return Err(EngineError::AggUnsupported {
                        func: agg.func.as_str(),
                        column: agg.column.clone(),
                        dtype: input,
                    })
                }
                AggFunc::Min | AggFunc::Max => input,
            }
        };
        fields.push(Field::new(agg.output.clone(), dtype));
    }
    Schema::new(fields)
}

/// Key tuple compared by row identity (null matches null).
struct GroupKey<'a> {
    row: &'a [Value],
    cols: &'a [usize],
}

impl Hash for GroupKey<'_> {
    fn hash<H: Hasher>(&self, state: &mut H) {
        for &c in self.cols {
            self.row[c].hash(state);
        }
    }
}

impl PartialEq for GroupKey<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.cols
            .iter()
            .zip(other.cols)
            .all(|(&a, &b)| self.row[a].identical(&other.row[b]))
    }
}

impl Eq for GroupKey<'_> {}

#[derive(Debug, Clone)]
enum Acc {
    Count(i64),
    SumInt { sum: Option<i64>, overflow: bool },
    SumFloat(Option<f64>),
    Min(Option<Value>),
    Max(Option<Value>),
    AvgInt { sum: i128, n: u64 },
    AvgFloat { sum: f64, n: u64 },
}

impl Acc {
    fn new(func: AggFunc, dtype: Option<DataType>) -> Self {
        let float = dtype == Some(DataType::Float);
        match func {
            AggFunc::Count => Acc::Count(0),
            AggFunc::Sum if float => Acc::SumFloat(None),
            AggFunc::Sum => Acc::SumInt {
                sum: None,
                overflow: false,
            },
            AggFunc::Min => Acc::Min(None),
            AggFunc::Max => Acc::Max(None),
            AggFunc::Avg if float => Acc::AvgFloat { sum: 0.0, n: 0 },
            AggFunc::Avg => Acc::AvgInt { sum: 0, n: 0 },
        }
    }

    fn update(&mut self, v: Option<&Value>) {
        if let Acc::Count(n) = self {
            *n += 1;
            return;
        }
        let Some(v) = v.filter(|v| !v.is_null()) else {
            return;
        };
        match (self, v) {
            (Acc::SumInt { sum, overflow }, Value::Int(x)) => match sum {
                None => *sum = Some(*x),
                Some(s) => match s.checked_add(*x) {
                    Some(t) => *s = t,
                    None => *overflow = true,
                },
            },
            (Acc::SumFloat(sum), Value::Float(x)) => *sum = Some(sum.unwrap_or(0.0) + x),
            (Acc::Min(m), v) => {
                if m.as_ref()
                    .is_none_or(|cur| v.total_cmp(cur) == Ordering::Less)
                {
                    *m = Some(v.clone());
                }
            }
            (Acc::Max(m), v) => {
                if m.as_ref()
                    .is_none_or(|cur| v.total_cmp(cur) == Ordering::Greater)
                {
                    *m = Some(v.clone());
                }
            }
            (Acc::AvgInt { sum, n }, Value::Int(x)) => {
                *sum += i128::from(*x);
                *n += 1;
            }
            (Acc::AvgFloat { sum, n }, Value::Float(x)) => {
                *sum += x;
                *n += 1;
            }
            _ => unreachable!("aggregate input type checked at validation"),
        }
    }

    fn finish(self) -> Value {
        match self {
            Acc::Count(n) => Value::Int(n),
            Acc::SumInt { overflow: true, .. } => Value::Null,
            Acc::SumInt { sum, .. } => sum.map_or(Value::Null, Value::Int),
            Acc::SumFloat(sum) => sum.map_or(Value::Null, Value::Float),
            Acc::Min(v) | Acc::Max(v) => v.unwrap_or(Value::Null),
            Acc::AvgInt { n: 0, .. } | Acc::AvgFloat { n: 0, .. } => Value::Null,
            Acc::AvgInt { sum, n } => Value::Float(sum as f64 / n as f64),
            Acc::AvgFloat { sum, n } => Value::Float(sum / n as f64),
        }
    }
}

pub fn group_by_agg(
    data: &Dataset,
    keys: &[String],
    aggs: &[Aggregate],
) -> Result<Dataset, EngineError> {
    let schema = group_by_agg_schema(data.schema(), keys, aggs)?;
    let in_schema = data.schema();
    let key_idx: Vec<usize> = keys
        .iter()
        .map(|k| in_schema.require(k))
        .collect::<Result<_, _>>()?;
    let agg_idx: Vec<Option<usize>> = aggs.iter().map(|a| in_schema.index_of(&a.column)).collect();
    let fresh: Vec<Acc> = aggs
        .iter()
        .zip(&agg_idx)
        .map(|(a, i)| Acc::new(a.func, i.map(|i| in_schema.fields()[i].dtype)))
        .collect();

    let mut index: HashMap<GroupKey<'_>, usize> = HashMap::new();
    let mut groups: Vec<(&Row, Vec<Acc>)> = Vec::new();
    for row in data.rows() {
        let g = *index
            .entry(GroupKey {
                row,
                cols: &key_idx,
            })
            .or_insert_with(|| {
                groups.push((row, fresh.clone()));
                groups.len() - 1
            });
        for (acc, col) in groups[g].1.iter_mut().zip(&agg_idx) {
            acc.update(col.map(|c| &row[c]));
        }
    }

    let rows = groups
        .into_iter()
        .map(|(first, accs)| {
            let mut out: Row = key_idx.iter().map(|&k| first[k].clone()).collect();
            out.extend(accs.into_iter().map(Acc::finish));
            out
        })
        .collect();
    Ok(Dataset::from_parts(schema, rows))
}

// ------------------------------------------------------------------ sort

pub fn sort_schema(
    schema: &Schema,
    columns: &[String],
    ascending: &Ascending,
) -> Result<Schema, EngineError> {
    for c in columns {
        schema.require(c)?;
    }
    ascending.resolve(columns.len())?;
    Ok(schema.clone())
}

/// Compare two values of one column. Nulls go last and NaN goes right
/// before them, whichever the direction.
pub fn sort_cmp(a: &Value, b: &Value, ascending: bool) -> Ordering {
    fn tail_rank(v: &Value) -> u8 {
        match v {
            Value::Null => 2,
            Value::Float(f) if f.is_nan() => 1,
            _ => 0,
        }
    }
    let (ra, rb) = (tail_rank(a), tail_rank(b));
    if ra != 0 || rb != 0 {
        return ra.cmp(&rb);
    }
    let ord = a.total_cmp(b);
    if ascending {
        ord
    } else {
        ord.reverse()
    }
}

pub fn sort(
    data: &Dataset,
    columns: &[String],
    ascending: &Ascending,
) -> Result<Dataset, EngineError> {
    let schema = sort_schema(data.schema(), columns, ascending)?;
    let flags = ascending.resolve(columns.len())?;
    let keys: Vec<(usize, bool)> = columns
        .iter()
        .map(|c| schema.require(c))
        .zip(flags)
        .map(|(i, f)| i.map(|i| (i, f)))
        .collect::<Result<_, _>>()?;
    let rows = data.rows();
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by(|&a, &b| {
        keys.iter()
            .map(|&(c, asc)| sort_cmp(&rows[a][c], &rows[b][c], asc))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    });
    let sorted = order.into_iter().map(|i| rows[i].clone()).collect();
    Ok(Dataset::from_parts(schema, sorted))
}

// -------------------------------------------------------------- distinct

pub fn distinct(data: &Dataset) -> Dataset {
    let mut seen: HashSet<&[Value]> = HashSet::with_capacity(data.row_count());
    let rows = data
        .rows()
        .iter()
        .filter(|r| seen.insert(r.as_slice()))
        .cloned()
        .collect();
    Dataset::from_parts(data.schema().clone(), rows)
}

// ---------------------------------------------------------- union, limit

pub fn union_schema(a: &Schema, b: &Schema) -> Result<Schema, EngineError> {
    if a != b {
        return Err(EngineError::UnionSchemaMismatch {
            left: a.to_string(),
            right: b.to_string(),
        });
    }
    Ok(a.clone())
}

pub fn union(a: &Dataset, b: &Dataset) -> Result<Dataset, EngineError> {
    let schema = union_schema(a.schema(), b.schema())?;
    let mut rows = Vec::with_capacity(a.row_count() + b.row_count());
    rows.extend_from_slice(a.rows());
    rows.extend_from_slice(b.rows());
    Ok(Dataset::from_parts(schema, rows))
}

pub fn limit(data: &Dataset, n: usize) -> Dataset {
    let keep = n.min(data.row_count());
    Dataset::from_parts(data.schema().clone(), data.rows()[..keep].to_vec())
}
