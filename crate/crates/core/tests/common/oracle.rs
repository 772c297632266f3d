//! Brute-force reference implementations of every operator, and a random
//! instance generator to compare them against the engine.
//!
//! Nothing here calls into the engine's operators or its value ordering;
//! the oracle re-derives each rule from the written semantics.

use pipetrace_core::ops::{self, AggFunc, Aggregate, Ascending, JoinType};
use pipetrace_core::{parse_expr, DataType, Dataset, Field, Prng, Schema, Value};

pub type Rows = Vec<Vec<Value>>;

/// Exact equality for test outputs: same variant, floats bit-equal or both NaN.
pub fn same_value(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Null, Value::Null) => true,
        (Value::Bool(x), Value::Bool(y)) => x == y,
        (Value::Int(x), Value::Int(y)) => x == y,
        (Value::Float(x), Value::Float(y)) => {
            (x.is_nan() && y.is_nan()) || x.to_bits() == y.to_bits()
        }
        (Value::Str(x), Value::Str(y)) => x == y,
        _ => false,
    }
}

pub fn same_rows(a: &[Vec<Value>], b: &[Vec<Value>]) -> bool {
    a.len() == b.len()
        && a.iter()
            .zip(b)
            .all(|(r, s)| r.len() == s.len() && r.iter().zip(s).all(|(x, y)| same_value(x, y)))
}

// ---------------------------------------------------------------- values

fn as_f64(v: &Value) -> Option<f64> {
    match v {
        Value::Int(i) => Some(*i as f64),
        Value::Float(f) => Some(*f),
        _ => None,
    }
}

/// SQL comparison: None when either side is null or the pair is unordered.
fn sql_order(a: &Value, b: &Value) -> Option<std::cmp::Ordering> {
    match (a, b) {
        (Value::Int(x), Value::Int(y)) => Some(x.cmp(y)),
        (Value::Str(x), Value::Str(y)) => Some(x.cmp(y)),
        (Value::Bool(x), Value::Bool(y)) => Some(x.cmp(y)),
        _ => {
            let (x, y) = (as_f64(a)?, as_f64(b)?);
            x.partial_cmp(&y)
        }
    }
}

/// Grouping / distinct identity.
fn same_key(a: &Value, b: &Value) -> bool {
    same_value(a, b)
}

fn join_match(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Float(x), Value::Float(y)) => x == y,
        (Value::Int(x), Value::Int(y)) => x == y,
        (Value::Str(x), Value::Str(y)) => x == y,
        (Value::Bool(x), Value::Bool(y)) => x == y,
        _ => false,
    }
}

// ----------------------------------------------------------- predicates

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cmp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl Cmp {
    const ALL: [Cmp; 6] = [Cmp::Eq, Cmp::Ne, Cmp::Lt, Cmp::Le, Cmp::Gt, Cmp::Ge];

    fn text(self) -> &'static str {
        match self {
            Cmp::Eq => "==",
            Cmp::Ne => "!=",
            Cmp::Lt => "<",
            Cmp::Le => "<=",
            Cmp::Gt => ">",
            Cmp::Ge => ">=",
        }
    }
}

#[derive(Debug, Clone)]
pub enum Pred {
    Cmp(String, Cmp, Value),
    IsNull(String),
    IsNotNull(String),
    Not(Box<Pred>),
    And(Box<Pred>, Box<Pred>),
    Or(Box<Pred>, Box<Pred>),
}

pub fn literal_text(v: &Value) -> String {
    match v {
        Value::Null => "null".into(),
        Value::Bool(b) => b.to_string(),
        Value::Int(i) => i.to_string(),
        Value::Float(f) => format!("{f:?}"),
        Value::Str(s) => format!("'{}'", s.replace('\'', "''")),
    }
}

impl Pred {
    pub fn text(&self) -> String {
        match self {
            Pred::Cmp(c, op, lit) => format!("{c} {} {}", op.text(), literal_text(lit)),
            Pred::IsNull(c) => format!("{c} is null"),
            Pred::IsNotNull(c) => format!("{c} is not null"),
            Pred::Not(p) => format!("not ({})", p.text()),
            Pred::And(a, b) => format!("({}) and ({})", a.text(), b.text()),
            Pred::Or(a, b) => format!("({}) or ({})", a.text(), b.text()),
        }
    }

    pub fn eval(&self, schema: &[(String, DataType)], row: &[Value]) -> bool {
        let col = |c: &str| &row[schema.iter().position(|(n, _)| n == c).unwrap()];
        match self {
            Pred::Cmp(c, op, lit) => {
                let v = col(c);
                if matches!(v, Value::Null) {
                    return false;
                }
                match sql_order(v, lit) {
                    None => *op == Cmp::Ne,
                    Some(o) => match op {
                        Cmp::Eq => o.is_eq(),
                        Cmp::Ne => o.is_ne(),
                        Cmp::Lt => o.is_lt(),
                        Cmp::Le => o.is_le(),
                        Cmp::Gt => o.is_gt(),
                        Cmp::Ge => o.is_ge(),
                    },
                }
            }
            Pred::IsNull(c) => matches!(col(c), Value::Null),
            Pred::IsNotNull(c) => !matches!(col(c), Value::Null),
            Pred::Not(p) => !p.eval(schema, row),
            Pred::And(a, b) => a.eval(schema, row) && b.eval(schema, row),
            Pred::Or(a, b) => a.eval(schema, row) || b.eval(schema, row),
        }
    }
}

// ------------------------------------------------------------ operators

pub fn filter(schema: &[(String, DataType)], rows: &Rows, p: &Pred) -> Rows {
    rows.iter().filter(|r| p.eval(schema, r)).cloned().collect()
}

pub fn select(names: &[String], rows: &Rows, columns: &[String]) -> Rows {
    let idx: Vec<usize> = columns
        .iter()
        .map(|c| names.iter().position(|n| n == c).unwrap())
        .collect();
    rows.iter()
        .map(|r| idx.iter().map(|&i| r[i].clone()).collect())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Arith {
    Add,
    Sub,
    Mul,
    Div,
}

impl Arith {
    const ALL: [Arith; 4] = [Arith::Add, Arith::Sub, Arith::Mul, Arith::Div];

    fn text(self) -> &'static str {
        match self {
            Arith::Add => "+",
            Arith::Sub => "-",
            Arith::Mul => "*",
            Arith::Div => "/",
        }
    }
}

pub fn arith(a: &Value, op: Arith, b: &Value) -> Value {
    if matches!(a, Value::Null) || matches!(b, Value::Null) {
        return Value::Null;
    }
    if op == Arith::Div {
        let (x, y) = (as_f64(a).unwrap(), as_f64(b).unwrap());
        return if y == 0.0 {
            Value::Null
        } else {
            Value::Float(x / y)
        };
    }
    if let (Value::Int(x), Value::Int(y)) = (a, b) {
        let r = match op {
            Arith::Add => x.checked_add(*y),
            Arith::Sub => x.checked_sub(*y),
            Arith::Mul => x.checked_mul(*y),
            Arith::Div => unreachable!(),
        };
        return r.map_or(Value::Null, Value::Int);
    }
    let (x, y) = (as_f64(a).unwrap(), as_f64(b).unwrap());
    Value::Float(match op {
        Arith::Add => x + y,
        Arith::Sub => x - y,
        Arith::Mul => x * y,
        Arith::Div => unreachable!(),
    })
}

pub fn with_column(
    names: &[String],
    rows: &Rows,
    name: &str,
    column: &str,
    op: Arith,
    lit: &Value,
) -> Rows {
    let src = names.iter().position(|n| n == column).unwrap();
    let at = names.iter().position(|n| n == name);
    rows.iter()
        .map(|r| {
            let v = arith(&r[src], op, lit);
            let mut out = r.clone();
            match at {
                Some(i) => out[i] = v,
                None => out.push(v),
            }
            out
        })
        .collect()
}

pub fn nested_loop_join(
    lnames: &[String],
    left: &Rows,
    rnames: &[String],
    right: &Rows,
    on: &[String],
    how: JoinType,
) -> Rows {
    let lk: Vec<usize> = on
        .iter()
        .map(|k| lnames.iter().position(|n| n == k).unwrap())
        .collect();
    let rk: Vec<usize> = on
        .iter()
        .map(|k| rnames.iter().position(|n| n == k).unwrap())
        .collect();
    let rest: Vec<usize> = (0..rnames.len()).filter(|i| !rk.contains(i)).collect();
    let mut out = Vec::new();
    for l in left {
        let mut matched = false;
        for r in right {
            if lk.iter().zip(&rk).all(|(&a, &b)| join_match(&l[a], &r[b])) {
                matched = true;
                let mut row = l.clone();
                row.extend(rest.iter().map(|&i| r[i].clone()));
                out.push(row);
            }
        }
        if !matched && how == JoinType::Left {
            let mut row = l.clone();
            row.extend(rest.iter().map(|_| Value::Null));
            out.push(row);
        }
    }
    out
}

/// Ordering for min/max: nulls are skipped by the caller, NaN ranks above
/// every other float.
fn agg_less(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Float(x), Value::Float(y)) if x.is_nan() || y.is_nan() => !x.is_nan() && y.is_nan(),
        _ => sql_order(a, b).is_some_and(|o| o.is_lt()),
    }
}

pub fn aggregate(values: &[&Value], func: AggFunc, dtype: DataType) -> Value {
    let present: Vec<&Value> = values
        .iter()
        .copied()
        .filter(|v| !matches!(v, Value::Null))
        .collect();
    match func {
        AggFunc::Count => Value::Int(values.len() as i64),
        _ if present.is_empty() => Value::Null,
        AggFunc::Sum if dtype == DataType::Int => {
            let mut s: Option<i64> = Some(0);
            for v in &present {
                if let Value::Int(x) = v {
                    s = s.and_then(|s| s.checked_add(*x));
                }
            }
            s.map_or(Value::Null, Value::Int)
        }
        AggFunc::Sum => Value::Float(present.iter().fold(0.0, |s, v| s + as_f64(v).unwrap())),
        AggFunc::Avg if dtype == DataType::Int => {
            let s: i128 = present.iter().map(|v| as_f64(v).unwrap() as i128).sum();
            Value::Float(s as f64 / present.len() as f64)
        }
        AggFunc::Avg => Value::Float(
            present.iter().fold(0.0, |s, v| s + as_f64(v).unwrap()) / present.len() as f64,
        ),
        AggFunc::Min | AggFunc::Max => {
            let mut best = present[0];
            for v in &present[1..] {
                let better = if func == AggFunc::Min {
                    agg_less(v, best)
                } else {
                    agg_less(best, v)
                };
                if better {
                    best = v;
                }
            }
            best.clone()
        }
    }
}

pub fn group_by(
    schema: &[(String, DataType)],
    rows: &Rows,
    keys: &[String],
    aggs: &[Aggregate],
) -> Rows {
    let pos = |c: &str| schema.iter().position(|(n, _)| n == c).unwrap();
    let kidx: Vec<usize> = keys.iter().map(|k| pos(k)).collect();
    let mut groups: Vec<(Vec<Value>, Vec<usize>)> = Vec::new();
    for (i, r) in rows.iter().enumerate() {
        let key: Vec<Value> = kidx.iter().map(|&k| r[k].clone()).collect();
        match groups
            .iter_mut()
            .find(|(g, _)| g.iter().zip(&key).all(|(a, b)| same_key(a, b)))
        {
            Some((_, members)) => members.push(i),
            None => groups.push((key, vec![i])),
        }
    }
    groups
        .into_iter()
        .map(|(key, members)| {
            let mut out = key;
            for a in aggs {
                if a.column == "*" {
                    out.push(Value::Int(members.len() as i64));
                    continue;
                }
                let c = pos(&a.column);
                let vals: Vec<&Value> = members.iter().map(|&m| &rows[m][c]).collect();
                out.push(aggregate(&vals, a.func, schema[c].1));
            }
            out
        })
        .collect()
}

fn sort_key_cmp(a: &Value, b: &Value, asc: bool) -> std::cmp::Ordering {
    use std::cmp::Ordering::*;
    let tail = |v: &Value| match v {
        Value::Null => 2,
        Value::Float(f) if f.is_nan() => 1,
        _ => 0,
    };
    match (tail(a), tail(b)) {
        (0, 0) => {
            let o = sql_order(a, b).unwrap_or(Equal);
            if asc {
                o
            } else {
                o.reverse()
            }
        }
        (x, y) => x.cmp(&y),
    }
}

/// Stable insertion sort.
pub fn insertion_sort(names: &[String], rows: &Rows, columns: &[String], flags: &[bool]) -> Rows {
    let idx: Vec<usize> = columns
        .iter()
        .map(|c| names.iter().position(|n| n == c).unwrap())
        .collect();
    let mut out: Rows = Vec::with_capacity(rows.len());
    for r in rows {
        let mut at = out.len();
        while at > 0 {
            let prev = &out[at - 1];
            let o = idx
                .iter()
                .zip(flags)
                .map(|(&c, &asc)| sort_key_cmp(&prev[c], &r[c], asc))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal);
            if o.is_gt() {
                at -= 1;
            } else {
                break;
            }
        }
        out.insert(at, r.clone());
    }
    out
}

pub fn distinct(rows: &Rows) -> Rows {
    let mut out: Rows = Vec::new();
    for r in rows {
        if !out
            .iter()
            .any(|o| o.iter().zip(r).all(|(a, b)| same_key(a, b)))
        {
            out.push(r.clone());
        }
    }
    out
}

// ------------------------------------------------------------ generator

pub struct Gen(Prng);

impl Gen {
    pub fn new(seed: u64) -> Self {
        Gen(Prng::new(seed ^ 0x0A11_CE5E_ED00_0000))
    }

    pub fn below(&mut self, n: u64) -> u64 {
        self.0.below(n)
    }

    pub fn chance(&mut self, num: u64, den: u64) -> bool {
        self.0.below(den) < num
    }

    pub fn pick<'a, T>(&mut self, items: &'a [T]) -> &'a T {
        &items[self.0.below(items.len() as u64) as usize]
    }

    pub fn dtype(&mut self) -> DataType {
        *self.pick(&[
            DataType::Int,
            DataType::Float,
            DataType::Str,
            DataType::Bool,
        ])
    }

    pub fn value(&mut self, t: DataType) -> Value {
        if self.chance(1, 6) {
            return Value::Null;
        }
        self.non_null(t)
    }

    pub fn non_null(&mut self, t: DataType) -> Value {
        match t {
            DataType::Int => Value::Int(self.below(7) as i64 - 3),
            DataType::Float => {
                Value::Float(*self.pick(&[-1.5, -0.0, 0.0, 0.5, 1.0, 2.5, f64::NAN]))
            }
            DataType::Str => Value::Str(self.pick(&["a", "b", "c", "", "it's"]).to_string()),
            DataType::Bool => Value::Bool(self.chance(1, 2)),
        }
    }

    pub fn rows(&mut self, types: &[DataType], max: u64) -> Rows {
        let n = self.below(max + 1);
        (0..n)
            .map(|_| types.iter().map(|t| self.value(*t)).collect())
            .collect()
    }

    fn literal_for(&mut self, t: DataType) -> Value {
        match t {
            DataType::Int | DataType::Float => {
                if self.chance(1, 2) {
                    Value::Int(self.below(7) as i64 - 3)
                } else {
                    Value::Float(*self.pick(&[-1.5, -0.0, 0.5, 1.0, 2.5]))
                }
            }
            other => self.non_null(other),
        }
    }

    pub fn pred(&mut self, schema: &[(String, DataType)], depth: u32) -> Pred {
        let roll = if depth == 0 {
            self.below(3)
        } else {
            self.below(6)
        };
        match roll {
            0 | 1 => {
                let (c, t) = self.pick(schema).clone();
                let op = if t == DataType::Bool {
                    *self.pick(&[Cmp::Eq, Cmp::Ne])
                } else {
                    *self.pick(&Cmp::ALL)
                };
                let lit = self.literal_for(t);
                Pred::Cmp(c, op, lit)
            }
            2 => {
                let (c, _) = self.pick(schema).clone();
                if self.chance(1, 2) {
                    Pred::IsNull(c)
                } else {
                    Pred::IsNotNull(c)
                }
            }
            3 => Pred::Not(Box::new(self.pred(schema, depth - 1))),
            4 => Pred::And(
                Box::new(self.pred(schema, depth - 1)),
                Box::new(self.pred(schema, depth - 1)),
            ),
            _ => Pred::Or(
                Box::new(self.pred(schema, depth - 1)),
                Box::new(self.pred(schema, depth - 1)),
            ),
        }
    }
}

// ---------------------------------------------------------- comparison

fn dataset(schema: &[(String, DataType)], rows: Rows) -> Dataset {
    let s = Schema::new(schema.iter().map(|(n, t)| Field::new(n, *t)).collect()).unwrap();
    Dataset::new(s, rows).unwrap()
}

fn check(
    op: &str,
    seed: u64,
    engine: &Dataset,
    expected: &Rows,
    detail: &str,
) -> Result<(), String> {
    if same_rows(engine.rows(), expected) {
        Ok(())
    } else {
        Err(format!(
            "seed {seed}: {op} {detail} differs\n engine: {:?}\n oracle: {:?}",
            engine.rows(),
            expected
        ))
    }
}

/// One random instance: a table of up to 100 rows and 4 columns, run
/// through every operator and compared with the oracle.
pub fn check_instance(seed: u64) -> Result<usize, String> {
    let mut g = Gen::new(seed);
    let ncols = 1 + g.below(4) as usize;
    let schema: Vec<(String, DataType)> =
        (0..ncols).map(|i| (format!("c{i}"), g.dtype())).collect();
    let names: Vec<String> = schema.iter().map(|(n, _)| n.clone()).collect();
    let types: Vec<DataType> = schema.iter().map(|(_, t)| *t).collect();
    let rows = g.rows(&types, 100);
    let data = dataset(&schema, rows.clone());
    let mut checks = 0;
    let err = |e: pipetrace_core::EngineError| format!("seed {seed}: engine error {e}");

    // filter
    for _ in 0..3 {
        let p = g.pred(&schema, 2);
        let text = p.text();
        let e = parse_expr(&text).map_err(err)?;
        let out = ops::filter(&data, &e).map_err(err)?;
        check("filter", seed, &out, &filter(&schema, &rows, &p), &text)?;
        checks += 1;
    }

    // select: a random non-empty ordered subset
    let mut pool = names.clone();
    let mut cols = Vec::new();
    let take = 1 + g.below(ncols as u64) as usize;
    for _ in 0..take {
        let i = g.below(pool.len() as u64) as usize;
        cols.push(pool.remove(i));
    }
    let out = ops::select(&data, &cols).map_err(err)?;
    check(
        "select",
        seed,
        &out,
        &select(&names, &rows, &cols),
        &format!("{cols:?}"),
    )?;
    checks += 1;

    // with_column over a numeric column
    if let Some((c, t)) = schema
        .iter()
        .find(|(_, t)| matches!(t, DataType::Int | DataType::Float))
        .cloned()
    {
        let op = *g.pick(&Arith::ALL);
        let lit = g.literal_for(t);
        let lit = if g.chance(1, 4) { Value::Int(0) } else { lit };
        let target = if g.chance(1, 2) {
            c.clone()
        } else {
            "w".to_string()
        };
        let text = format!("{c} {} {}", op.text(), literal_text(&lit));
        let e = parse_expr(&text).map_err(err)?;
        let out = ops::with_column(&data, &target, &e).map_err(err)?;
        check(
            "with_column",
            seed,
            &out,
            &with_column(&names, &rows, &target, &c, op, &lit),
            &text,
        )?;
        checks += 1;
    }

    // join against a second table sharing one or two key columns
    let nkeys = 1 + g.below(ncols.min(2) as u64) as usize;
    let keys: Vec<String> = names[..nkeys].to_vec();
    let mut rschema: Vec<(String, DataType)> = schema[..nkeys].to_vec();
    for i in 0..(1 + g.below(2)) {
        rschema.push((format!("r{i}"), g.dtype()));
    }
    let rtypes: Vec<DataType> = rschema.iter().map(|(_, t)| *t).collect();
    let rnames: Vec<String> = rschema.iter().map(|(n, _)| n.clone()).collect();
    let rrows = g.rows(&rtypes, 30);
    let right = dataset(&rschema, rrows.clone());
    for how in [JoinType::Inner, JoinType::Left] {
        let out = ops::join(&data, &right, &keys, how).map_err(err)?;
        let expected = nested_loop_join(&names, &rows, &rnames, &rrows, &keys, how);
        check("join", seed, &out, &expected, how.as_str())?;
        checks += 1;
    }

    // group_by_agg
    let nk = g.below(ncols.min(2) as u64 + 1) as usize;
    let gkeys: Vec<String> = names[ncols - nk..].to_vec();
    let mut aggs = vec![Aggregate::new(AggFunc::Count, "*", "n")];
    for (i, (c, t)) in schema.iter().enumerate() {
        let funcs: &[AggFunc] = match t {
            DataType::Int | DataType::Float => &[
                AggFunc::Count,
                AggFunc::Sum,
                AggFunc::Min,
                AggFunc::Max,
                AggFunc::Avg,
            ],
            DataType::Str => &[AggFunc::Count, AggFunc::Min, AggFunc::Max],
            DataType::Bool => &[AggFunc::Count],
        };
        let f = *g.pick(funcs);
        aggs.push(Aggregate::new(f, c, &format!("a{i}")));
    }
    let out = ops::group_by_agg(&data, &gkeys, &aggs).map_err(err)?;
    check(
        "group_by_agg",
        seed,
        &out,
        &group_by(&schema, &rows, &gkeys, &aggs),
        &format!("{gkeys:?} {aggs:?}"),
    )?;
    checks += 1;

    // sort: scalar or per-column flags
    let nsort = 1 + g.below(ncols.min(3) as u64) as usize;
    let mut pool = names.clone();
    let scols: Vec<String> = (0..nsort)
        .map(|_| pool.remove(g.below(pool.len() as u64) as usize))
        .collect();
    let (asc, flags) = if g.chance(1, 2) {
        let f = g.chance(1, 2);
        (Ascending::All(f), vec![f; nsort])
    } else {
        let fs: Vec<bool> = (0..nsort).map(|_| g.chance(1, 2)).collect();
        (Ascending::Each(fs.clone()), fs)
    };
    let out = ops::sort(&data, &scols, &asc).map_err(err)?;
    check(
        "sort",
        seed,
        &out,
        &insertion_sort(&names, &rows, &scols, &flags),
        &format!("{scols:?} {flags:?}"),
    )?;
    checks += 1;

    // distinct, on a table with forced repeats
    let mut dup = rows.clone();
    let extra = g.below(rows.len() as u64 + 1);
    for _ in 0..extra {
        let i = g.below(rows.len() as u64) as usize;
        dup.push(rows[i].clone());
    }
    let dd = dataset(&schema, dup.clone());
    check("distinct", seed, &ops::distinct(&dd), &distinct(&dup), "")?;
    checks += 1;

    // union
    let other = g.rows(&types, 40);
    let out = ops::union(&data, &dataset(&schema, other.clone())).map_err(err)?;
    let mut expected = rows.clone();
    expected.extend(other);
    check("union", seed, &out, &expected, "")?;
    checks += 1;

    // limit
    let n = g.below(121) as usize;
    check(
        "limit",
        seed,
        &ops::limit(&data, n),
        &rows.iter().take(n).cloned().collect(),
        &n.to_string(),
    )?;
    checks += 1;

    Ok(checks)
}
