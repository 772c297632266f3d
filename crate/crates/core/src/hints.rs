//! Hint rules.
//!
//! Parameter hints (`P*`) look only at a step's parameters and the schema
//! flowing into it, so they run before any data is read. Anomaly hints
//! (`A*`) look at a traced step's exact row counts and samples.
//!
//! | code | name                 | severity |
//! |------|----------------------|----------|
//! | P1   | SORT_FLAG_BROADCAST  | info     |
//! | P2   | SORT_FLAG_ARITY      | error    |
//! | P3   | JOIN_KEY_MISSING     | error    |
//! | P4   | AGG_NON_NUMERIC      | error    |
//! | P5   | LIMIT_NONPOSITIVE    | warn     |
//! | P6   | UNKNOWN_COLUMN       | error    |
//! | P7   | JOIN_TYPE_MISMATCH   | error    |
//! | A1   | EMPTY_RESULT         | warn     |
//! | A2   | NOOP_FILTER          | info     |
//! | A3   | JOIN_EXPLOSION       | warn     |
//! | A4   | NULL_GROWTH          | info     |
//! | A5   | HEAVY_DEDUP          | info     |
//! | A6   | SAMPLE_KEY_DISJOINT  | info     |

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use serde::{Serialize, Serializer};
use serde_json::json;
use thiserror::Error;

use crate::expr::parse_expr;
use crate::ops::{AggFunc, Ascending};
use crate::pipeline::Step;
use crate::schema::Schema;
use crate::tracer::StepTrace;
use crate::value::{DataType, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum HintCode {
    P1,
    P2,
    P3,
    P4,
    P5,
    P6,
    P7,
    A1,
    A2,
    A3,
    A4,
    A5,
    A6,
}

impl HintCode {
    pub const ALL: [HintCode; 13] = [
        HintCode::P1,
        HintCode::P2,
        HintCode::P3,
        HintCode::P4,
        HintCode::P5,
        HintCode::P6,
        HintCode::P7,
        HintCode::A1,
        HintCode::A2,
        HintCode::A3,
        HintCode::A4,
        HintCode::A5,
        HintCode::A6,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            HintCode::P1 => "P1",
            HintCode::P2 => "P2",
            HintCode::P3 => "P3",
            HintCode::P4 => "P4",
            HintCode::P5 => "P5",
            HintCode::P6 => "P6",
            HintCode::P7 => "P7",
            HintCode::A1 => "A1",
            HintCode::A2 => "A2",
            HintCode::A3 => "A3",
            HintCode::A4 => "A4",
            HintCode::A5 => "A5",
            HintCode::A6 => "A6",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            HintCode::P1 => "SORT_FLAG_BROADCAST",
            HintCode::P2 => "SORT_FLAG_ARITY",
            HintCode::P3 => "JOIN_KEY_MISSING",
            HintCode::P4 => "AGG_NON_NUMERIC",
            HintCode::P5 => "LIMIT_NONPOSITIVE",
            HintCode::P6 => "UNKNOWN_COLUMN",
            HintCode::P7 => "JOIN_TYPE_MISMATCH",
            HintCode::A1 => "EMPTY_RESULT",
            HintCode::A2 => "NOOP_FILTER",
            HintCode::A3 => "JOIN_EXPLOSION",
            HintCode::A4 => "NULL_GROWTH",
            HintCode::A5 => "HEAVY_DEDUP",
            HintCode::A6 => "SAMPLE_KEY_DISJOINT",
        }
    }

    pub fn severity(self) -> Severity {
        match self {
            HintCode::P2 | HintCode::P3 | HintCode::P4 | HintCode::P6 | HintCode::P7 => {
                Severity::Error
            }
            HintCode::P5 | HintCode::A1 | HintCode::A3 => Severity::Warn,
            HintCode::P1 | HintCode::A2 | HintCode::A4 | HintCode::A5 | HintCode::A6 => {
                Severity::Info
            }
        }
    }

    /// Accepts either the short code (`P1`) or the name (`SORT_FLAG_BROADCAST`).
    pub fn parse(s: &str) -> Option<HintCode> {
        HintCode::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s) || c.name().eq_ignore_ascii_case(s))
    }
}

impl fmt::Display for HintCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for HintCode {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Info,
    Warn,
    Error,
}

impl Severity {
    pub fn tag(self) -> &'static str {
        match self {
            Severity::Info => "INFO",
            Severity::Warn => "WARN",
            Severity::Error => "ERROR",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Hint {
    pub code: HintCode,
    pub name: &'static str,
    pub severity: Severity,
    #[serde(rename = "step")]
    pub step_index: usize,
    pub message: String,
    pub evidence: BTreeMap<&'static str, serde_json::Value>,
}

impl Hint {
    fn new(code: HintCode, step_index: usize, message: String) -> Self {
        Self {
            code,
            name: code.name(),
            severity: code.severity(),
            step_index,
            message,
            evidence: BTreeMap::new(),
        }
    }

    fn with(mut self, key: &'static str, value: impl Into<serde_json::Value>) -> Self {
        self.evidence.insert(key, value.into());
        self
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Hint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} [step {}]: {}",
            self.severity.tag(),
            self.name,
            self.step_index,
            self.message
        )
    }
}

#[derive(Debug, Error, PartialEq)]
#[error("invalid hint threshold: {0}")]
pub struct HintConfigError(String);

#[derive(Debug, Clone, PartialEq)]
pub struct HintConfig {
    pub join_explosion_factor: f64,
    pub null_growth_delta: f64,
    pub dedup_ratio: f64,
    pub disabled: BTreeSet<HintCode>,
}

impl Default for HintConfig {
    fn default() -> Self {
        Self {
            join_explosion_factor: 10.0,
            null_growth_delta: 0.5,
            dedup_ratio: 0.9,
            disabled: BTreeSet::new(),
        }
    }
}

impl HintConfig {
    /// Every rule switched off.
    pub fn silent() -> Self {
        Self {
            disabled: HintCode::ALL.into_iter().collect(),
            ..Self::default()
        }
    }

    pub fn enabled(&self, code: HintCode) -> bool {
        !self.disabled.contains(&code)
    }

    pub fn validate(&self) -> Result<(), HintConfigError> {
        if self.join_explosion_factor.is_nan() || self.join_explosion_factor <= 0.0 {
            return Err(HintConfigError(format!(
                "join_explosion_factor must be > 0, got {}",
                self.join_explosion_factor
            )));
        }
        for (name, v) in [
            ("null_growth_delta", self.null_growth_delta),
            ("dedup_ratio", self.dedup_ratio),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(HintConfigError(format!(
                    "{name} must be in (0, 1], got {v}"
                )));
            }
        }
        Ok(())
    }

    fn keep(&self, mut hints: Vec<Hint>) -> Vec<Hint> {
        hints.retain(|h| self.enabled(h.code));
        hints.sort_by_key(|h| h.code);
        hints
    }
}

fn unknown_column(step_index: usize, column: &str, schema: &Schema) -> Hint {
    let available: Vec<&str> = schema.names().collect();
    Hint::new(
        HintCode::P6,
        step_index,
        format!(
            "column `{column}` does not exist at this step (available: {})",
            available.join(", ")
        ),
    )
    .with("column", column)
}

/// Parameter rules for one step given the schema flowing into it and, for
/// joins and unions, the right-hand schema. Unfiltered, in code order.
pub fn check_step(
    step_index: usize,
    step: &Step,
    input: &Schema,
    right: Option<&Schema>,
) -> Vec<Hint> {
    let mut out = Vec::new();
    let missing = |out: &mut Vec<Hint>, names: &mut dyn Iterator<Item = &str>| {
        let mut seen = HashSet::new();
        for n in names {
            if input.index_of(n).is_none() && seen.insert(n.to_owned()) {
                out.push(unknown_column(step_index, n, input));
            }
        }
    };
    match step {
        Step::Filter { predicate: text } | Step::WithColumn { expr: text, .. } => {
            if let Ok(e) = parse_expr(text) {
                missing(&mut out, &mut e.columns().into_iter());
            }
        }
        Step::Select { columns } => missing(&mut out, &mut columns.iter().map(String::as_str)),
        Step::Join { on, .. } => {
            for key in on {
                let l = input.field(key);
                let r = right.and_then(|r| r.field(key));
                for (side, present) in [
                    ("left", l.is_some()),
                    ("right", r.is_some() || right.is_none()),
                ] {
                    if !present {
                        out.push(
                            Hint::new(
                                HintCode::P3,
                                step_index,
                                format!("join key `{key}` is missing from the {side} input"),
                            )
                            .with("key", key.as_str())
                            .with("side", side),
                        );
                    }
                }
                if let (Some(l), Some(r)) = (l, r) {
                    if l.dtype != r.dtype {
                        out.push(
                            Hint::new(
                                HintCode::P7,
                                step_index,
                                format!(
                                    "join key `{key}` is {} on the left but {} on the right; keys are never converted implicitly",
                                    l.dtype, r.dtype
                                ),
                            )
                            .with("key", key.as_str())
                            .with("left_type", l.dtype.name())
                            .with("right_type", r.dtype.name()),
                        );
                    }
                }
            }
        }
        Step::GroupByAgg { keys, aggs } => {
            let agg_cols = aggs
                .iter()
                .filter(|a| !(a.func == AggFunc::Count && a.column == "*"))
                .map(|a| a.column.as_str());
            missing(
                &mut out,
                &mut keys.iter().map(String::as_str).chain(agg_cols),
            );
            for a in aggs {
                if !matches!(a.func, AggFunc::Sum | AggFunc::Avg) {
                    continue;
                }
                if let Some(f) = input.field(&a.column) {
                    if matches!(f.dtype, DataType::Str | DataType::Bool) {
                        out.push(
                            Hint::new(
                                HintCode::P4,
                                step_index,
                                format!(
                                    "{} over `{}` needs a numeric column, but it is {}",
                                    a.func.as_str(),
                                    a.column,
                                    f.dtype
                                ),
                            )
                            .with("func", a.func.as_str())
                            .with("column", a.column.as_str())
                            .with("type", f.dtype.name()),
                        );
                    }
                }
            }
        }
        Step::Sort { columns, ascending } => {
            missing(&mut out, &mut columns.iter().map(String::as_str));
            match ascending {
                Ascending::All(flag) if columns.len() > 1 => out.push(
                    Hint::new(
                        HintCode::P1,
                        step_index,
                        format!(
                            "ascending={flag} applies to every sort column ({}); pass one flag per column to mix directions",
                            columns.join(", ")
                        ),
                    )
                    .with("ascending", *flag)
                    .with("columns", columns.clone()),
                ),
                Ascending::Each(flags) if flags.len() != columns.len() => out.push(
                    Hint::new(
                        HintCode::P2,
                        step_index,
                        format!(
                            "ascending lists {} flags for {} sort columns",
                            flags.len(),
                            columns.len()
                        ),
                    )
                    .with("flags", flags.len())
                    .with("columns", columns.len()),
                ),
                _ => {}
            }
        }
        Step::Limit { n } if *n <= 0 => out.push(
            Hint::new(
                HintCode::P5,
                step_index,
                format!("limit n={n} is not positive; the result will be empty"),
            )
            .with("n", *n),
        ),
        Step::Limit { .. } | Step::Distinct | Step::Union { .. } => {}
    }
    out.sort_by_key(|h| h.code);
    out
}

/// Parameter rules over a whole plan. `schema_chain[i]` is the schema
/// flowing into step `i`; `right_schemas[i]` is step `i`'s right-hand
/// schema, if any. Steps beyond the end of the chain are not checked.
/// Ordered by code, then step.
pub fn check_parameters(
    steps: &[Step],
    schema_chain: &[Schema],
    right_schemas: &[Option<Schema>],
    config: &HintConfig,
) -> Vec<Hint> {
    let hints = steps
        .iter()
        .zip(schema_chain)
        .enumerate()
        .flat_map(|(i, (step, schema))| {
            check_step(
                i,
                step,
                schema,
                right_schemas.get(i).and_then(Option::as_ref),
            )
        })
        .collect();
    config.keep(hints)
}

fn ratio(x: f64) -> serde_json::Value {
    json!((x * 1e6).round() / 1e6)
}

/// Anomaly rules for one traced step, in code order.
pub fn detect_anomalies(trace: &StepTrace, config: &HintConfig) -> Vec<Hint> {
    let i = trace.step_index;
    let rows_in = trace.rows_in();
    let rows_out = trace.rows_out();
    let mut out = Vec::new();

    if rows_out == 0 && rows_in > 0 {
        out.push(
            Hint::new(
                HintCode::A1,
                i,
                format!(
                    "{} produced no rows from {rows_in} input rows",
                    trace.step.op_name()
                ),
            )
            .with("rows_in", rows_in)
            .with("rows_out", rows_out),
        );
    }

    if let Step::Filter { predicate } = &trace.step {
        if rows_in > 0 && rows_out == rows_in {
            out.push(
                Hint::new(
                    HintCode::A2,
                    i,
                    format!("filter `{predicate}` kept all {rows_in} rows"),
                )
                .with("rows_in", rows_in)
                .with("rows_out", rows_out),
            );
        }
    }

    if let (Step::Join { on, .. }, Some(right)) = (&trace.step, &trace.right) {
        let right_rows = right.state.row_count;
        let bound = config.join_explosion_factor * rows_in.max(right_rows) as f64;
        if rows_out as f64 > bound {
            out.push(
                Hint::new(
                    HintCode::A3,
                    i,
                    format!(
                        "join produced {rows_out} rows, more than {} x the larger input ({} rows); check key multiplicity",
                        config.join_explosion_factor,
                        rows_in.max(right_rows)
                    ),
                )
                .with("rows_out", rows_out)
                .with("left_rows", rows_in)
                .with("right_rows", right_rows)
                .with("factor", config.join_explosion_factor),
            );
        }

        if !trace.before.sample.is_empty() && !right.sample.is_empty() {
            if let Some(shared) = shared_sample_keys(trace, right, on) {
                if shared == 0 {
                    out.push(
                        Hint::new(
                            HintCode::A6,
                            i,
                            format!(
                                "sampled left and right rows share no value of key ({}); this is sample-based and advisory, the full inputs may still overlap",
                                on.join(", ")
                            ),
                        )
                        .with("left_sample", trace.before.sample.len())
                        .with("right_sample", right.sample.len())
                        .with("shared_keys", 0),
                    );
                }
            }
        }
    }

    for col in &trace.after.state.column_stats {
        if col.sample_size == 0 {
            continue;
        }
        let before = trace
            .before
            .state
            .column(&col.name)
            .or_else(|| trace.right.as_ref().and_then(|r| r.state.column(&col.name)))
            .map_or(0.0, |c| c.null_fraction());
        let after = col.null_fraction();
        if after - before > config.null_growth_delta {
            out.push(
                Hint::new(
                    HintCode::A4,
                    i,
                    format!(
                        "sampled null fraction of `{}` rose from {:.2} to {:.2}",
                        col.name, before, after
                    ),
                )
                .with("column", col.name.as_str())
                .with("before_fraction", ratio(before))
                .with("after_fraction", ratio(after))
                .with("delta", config.null_growth_delta),
            );
        }
    }

    if matches!(trace.step, Step::Distinct)
        && (rows_out as f64) < (1.0 - config.dedup_ratio) * rows_in as f64
    {
        out.push(
            Hint::new(
                HintCode::A5,
                i,
                format!("distinct kept {rows_out} of {rows_in} rows"),
            )
            .with("rows_in", rows_in)
            .with("rows_out", rows_out)
            .with("dedup_ratio", config.dedup_ratio),
        );
    }

    config.keep(out)
}

/// Count of distinct key tuples present in both samples. `None` when a key
/// column cannot be located. Null or NaN keys never count as shared.
fn shared_sample_keys(
    trace: &StepTrace,
    right: &crate::tracer::Capture,
    on: &[String],
) -> Option<usize> {
    let lidx: Vec<usize> = on
        .iter()
        .map(|k| trace.before.state.schema.index_of(k))
        .collect::<Option<_>>()?;
    let ridx: Vec<usize> = on
        .iter()
        .map(|k| right.state.schema.index_of(k))
        .collect::<Option<_>>()?;
    let matchable = |v: &Value| match v {
        Value::Null => false,
        Value::Float(f) => !f.is_nan(),
        _ => true,
    };
    let right_keys: Vec<Vec<&Value>> = right
        .sample
        .iter()
        .map(|r| ridx.iter().map(|&c| &r[c]).collect::<Vec<_>>())
        .filter(|k| k.iter().all(|v| matchable(v)))
        .collect();
    let mut shared: Vec<Vec<&Value>> = Vec::new();
    for row in &trace.before.sample {
        let key: Vec<&Value> = lidx.iter().map(|&c| &row[c]).collect();
        let hit = right_keys
            .iter()
            .any(|rk| rk.iter().zip(&key).all(|(a, b)| a.sql_eq(b)));
        if hit
            && !shared
                .iter()
                .any(|s| s.iter().zip(&key).all(|(a, b)| a.identical(b)))
        {
            shared.push(key);
        }
    }
    Some(shared.len())
}
