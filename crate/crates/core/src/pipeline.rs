//! Pipeline specs: parsing, static validation, and execution.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Dataset;
use crate::error::EngineError;
use crate::expr::{parse_expr, Expr};
use crate::hints::{check_step, detect_anomalies, Hint, HintConfig, HintConfigError};
use crate::ingest::{IngestError, SourceSpec};
use crate::ops::{self, Aggregate, Ascending, JoinType};
use crate::report::{Totals, Trace};
use crate::schema::Schema;
use crate::tracer::{trace_step, DataState, StepFailure, TraceConfig};

pub const OPS: [&str; 9] = [
    "filter",
    "select",
    "with_column",
    "join",
    "group_by_agg",
    "sort",
    "distinct",
    "union",
    "limit",
];

fn ascending_default() -> Ascending {
    Ascending::All(true)
}

fn how_default() -> JoinType {
    JoinType::Inner
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum Step {
    Filter {
        predicate: String,
    },
    Select {
        columns: Vec<String>,
    },
    WithColumn {
        name: String,
        expr: String,
    },
    Join {
        right: SourceSpec,
        on: Vec<String>,
        #[serde(default = "how_default")]
        how: JoinType,
    },
    GroupByAgg {
        keys: Vec<String>,
        aggs: Vec<Aggregate>,
    },
    Sort {
        columns: Vec<String>,
        #[serde(default = "ascending_default")]
        ascending: Ascending,
    },
    Distinct,
    Union {
        right: SourceSpec,
    },
    Limit {
        n: i64,
    },
}

impl Step {
    pub fn op_name(&self) -> &'static str {
        match self {
            Step::Filter { .. } => "filter",
            Step::Select { .. } => "select",
            Step::WithColumn { .. } => "with_column",
            Step::Join { .. } => "join",
            Step::GroupByAgg { .. } => "group_by_agg",
            Step::Sort { .. } => "sort",
            Step::Distinct => "distinct",
            Step::Union { .. } => "union",
            Step::Limit { .. } => "limit",
        }
    }

    pub fn right_source(&self) -> Option<&SourceSpec> {
        match self {
            Step::Join { right, .. } | Step::Union { right } => Some(right),
            _ => None,
        }
    }

    fn right_source_mut(&mut self) -> Option<&mut SourceSpec> {
        match self {
            Step::Join { right, .. } | Step::Union { right } => Some(right),
            _ => None,
        }
    }

    /// Short parameter summary, e.g. `age > 18` or `on=[age], how=inner`.
    pub fn params(&self) -> String {
        let list = |v: &[String]| v.join(", ");
        match self {
            Step::Filter { predicate } => predicate.clone(),
            Step::Select { columns } => list(columns),
            Step::WithColumn { name, expr } => format!("{name} = {expr}"),
            Step::Join { right, on, how } => {
                format!(
                    "{}, on=[{}], how={}",
                    right.describe(),
                    list(on),
                    how.as_str()
                )
            }
            Step::GroupByAgg { keys, aggs } => {
                let aggs: Vec<String> = aggs
                    .iter()
                    .map(|a| format!("{}({}) as {}", a.func.as_str(), a.column, a.output))
                    .collect();
                format!("keys=[{}], aggs=[{}]", list(keys), aggs.join(", "))
            }
            Step::Sort { columns, ascending } => {
                let asc = match ascending {
                    Ascending::All(f) => f.to_string(),
                    Ascending::Each(fs) => {
                        let fs: Vec<String> = fs.iter().map(bool::to_string).collect();
                        format!("[{}]", fs.join(", "))
                    }
                };
                format!("[{}], ascending={asc}", list(columns))
            }
            Step::Distinct => String::new(),
            Step::Union { right } => right.describe(),
            Step::Limit { n } => n.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineSpec {
    pub source: SourceSpec,
    #[serde(default)]
    pub steps: Vec<Step>,
}

impl PipelineSpec {
    pub fn new(source: SourceSpec, steps: Vec<Step>) -> Self {
        Self { source, steps }
    }

    /// Make relative source paths relative to `base` (normally the directory
    /// holding the spec file).
    pub fn resolve_paths(&mut self, base: &Path) {
        self.source.resolve_path(base);
        for step in &mut self.steps {
            if let Some(r) = step.right_source_mut() {
                r.resolve_path(base);
            }
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SpecError {
    #[error("spec syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("step {step}: unknown op `{op}` (expected one of: {})", OPS.join(", "))]
    UnknownOp { step: usize, op: String },
    #[error("step {step} ({op}): missing required parameter `{param}`")]
    MissingParam {
        step: usize,
        op: String,
        param: String,
    },
    #[error("step {step}: {message}")]
    BadStep { step: usize, message: String },
    #[error("invalid spec: {0}")]
    Invalid(String),
}

fn missing_field(message: &str) -> Option<String> {
    let rest = message.strip_prefix("missing field `")?;
    Some(rest[..rest.find('`')?].to_owned())
}

/// Strict parse of a pipeline document. Unknown ops, unknown fields, and
/// missing parameters are all errors.
pub fn parse_spec(document: &str) -> Result<PipelineSpec, SpecError> {
    let doc: serde_json::Value = serde_json::from_str(document).map_err(|e| SpecError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let serde_json::Value::Object(mut top) = doc else {
        return Err(SpecError::Invalid(
            "the document must be a JSON object".into(),
        ));
    };
    let steps = match top.remove("steps") {
        None => Vec::new(),
        Some(serde_json::Value::Array(items)) => items,
        Some(_) => return Err(SpecError::Invalid("`steps` must be an array".into())),
    };
    let mut parsed = Vec::with_capacity(steps.len());
    for (i, raw) in steps.into_iter().enumerate() {
        let op = match raw.get("op") {
            Some(serde_json::Value::String(op)) => op.clone(),
            Some(other) => {
                return Err(SpecError::UnknownOp {
                    step: i,
                    op: other.to_string(),
                })
            }
            None => {
                return Err(SpecError::MissingParam {
                    step: i,
                    op: "?".into(),
                    param: "op".into(),
                })
            }
        };
        if !OPS.contains(&op.as_str()) {
            return Err(SpecError::UnknownOp { step: i, op });
        }
        // serde lets unit variants of a tagged enum ignore extra keys.
        if op == "distinct" {
            if let Some(key) = raw.as_object().and_then(|o| o.keys().find(|k| *k != "op")) {
                return Err(SpecError::BadStep {
                    step: i,
                    message: format!("unknown field `{key}`, distinct takes no parameters"),
                });
            }
        }
        let step: Step = serde_json::from_value(raw).map_err(|e| {
            let message = e.to_string();
            match missing_field(&message) {
                Some(param) => SpecError::MissingParam {
                    step: i,
                    op: op.clone(),
                    param,
                },
                None => SpecError::BadStep { step: i, message },
            }
        })?;
        parsed.push(step);
    }
    let source = top
        .remove("source")
        .ok_or_else(|| SpecError::Invalid("missing field `source`".into()))?;
    if let Some(key) = top.keys().next() {
        return Err(SpecError::Invalid(format!("unknown field `{key}`")));
    }
    let source: SourceSpec =
        serde_json::from_value(source).map_err(|e| SpecError::Invalid(format!("source: {e}")))?;
    Ok(PipelineSpec::new(source, parsed))
}

/// A step with its expressions parsed.
#[derive(Debug, Clone)]
enum Compiled {
    Filter(Expr),
    WithColumn(String, Expr),
    Other,
}

/// A validated spec: the schema flowing out of every step, plus the
/// parameter hints.
#[derive(Debug, Clone)]
pub struct Plan {
    pub spec: PipelineSpec,
    /// `schemas[0]` is the source schema, `schemas[i + 1]` the output of
    /// step `i`.
    pub schemas: Vec<Schema>,
    pub right_schemas: Vec<Option<Schema>>,
    pub hints: Vec<Hint>,
    compiled: Vec<Compiled>,
}

impl Plan {
    pub fn output_schema(&self) -> &Schema {
        self.schemas
            .last()
            .expect("plan always holds the source schema")
    }

    pub fn step_hints(&self, step_index: usize) -> impl Iterator<Item = &Hint> {
        self.hints
            .iter()
            .filter(move |h| h.step_index == step_index)
    }
}

#[derive(Debug, Error)]
pub enum PlanError {
    #[error(transparent)]
    Config(#[from] HintConfigError),
    #[error("source: {0}")]
    Source(#[source] IngestError),
    #[error("step {step_index} ({op}): right-hand source: {error}")]
    RightSource {
        step_index: usize,
        op: &'static str,
        #[source]
        error: IngestError,
    },
    #[error("step {step_index} ({op}): {error}")]
    Step {
        step_index: usize,
        op: &'static str,
        #[source]
        error: EngineError,
        /// Parameter hints gathered up to and including the failing step.
        hints: Vec<Hint>,
    },
}

impl PlanError {
    pub fn hints(&self) -> &[Hint] {
        match self {
            PlanError::Step { hints, .. } => hints,
            _ => &[],
        }
    }

    pub fn step_index(&self) -> Option<usize> {
        match self {
            PlanError::RightSource { step_index, .. } | PlanError::Step { step_index, .. } => {
                Some(*step_index)
            }
            _ => None,
        }
    }
}

fn step_schema(
    step: &Step,
    input: &Schema,
    right: Option<&Schema>,
) -> Result<(Schema, Compiled), EngineError> {
    Ok(match step {
        Step::Filter { predicate } => {
            let e = parse_expr(predicate)?;
            (ops::filter_schema(input, &e)?, Compiled::Filter(e))
        }
        Step::WithColumn { name, expr } => {
            let e = parse_expr(expr)?;
            (
                ops::with_column_schema(input, name, &e)?,
                Compiled::WithColumn(name.clone(), e),
            )
        }
        Step::Select { columns } => (ops::select_schema(input, columns)?, Compiled::Other),
        Step::Join { on, .. } => (
            ops::join_schema(input, right.expect("join has a right schema"), on)?,
            Compiled::Other,
        ),
        Step::GroupByAgg { keys, aggs } => (
            ops::group_by_agg_schema(input, keys, aggs)?,
            Compiled::Other,
        ),
        Step::Sort { columns, ascending } => (
            ops::sort_schema(input, columns, ascending)?,
            Compiled::Other,
        ),
        Step::Distinct | Step::Limit { .. } => (input.clone(), Compiled::Other),
        Step::Union { .. } => (
            ops::union_schema(input, right.expect("union has a right schema"))?,
            Compiled::Other,
        ),
    })
}

/// Propagate schemas through every step without reading data (except a
/// JSONL source with no declared schema, which must be read to learn its
/// types). Stops at the first step that cannot be typed.
pub fn validate_plan(spec: &PipelineSpec, config: &HintConfig) -> Result<Plan, PlanError> {
    config.validate()?;
    let mut schemas = vec![spec.source.schema().map_err(PlanError::Source)?];
    let mut right_schemas = Vec::with_capacity(spec.steps.len());
    let mut hints = Vec::new();
    let mut compiled = Vec::with_capacity(spec.steps.len());

    for (i, step) in spec.steps.iter().enumerate() {
        let input = schemas.last().expect("non-empty").clone();
        let right = match step.right_source() {
            Some(src) => Some(src.schema().map_err(|error| PlanError::RightSource {
                step_index: i,
                op: step.op_name(),
                error,
            })?),
            None => None,
        };
        let step_hints: Vec<Hint> = check_step(i, step, &input, right.as_ref())
            .into_iter()
            .filter(|h| config.enabled(h.code))
            .collect();
        let blocking = step_hints.iter().any(Hint::is_error);
        hints.extend(step_hints);
        let result = step_schema(step, &input, right.as_ref());
        let fail = |error: EngineError, hints: Vec<Hint>| PlanError::Step {
            step_index: i,
            op: step.op_name(),
            error,
            hints: sorted(hints),
        };
        match result {
            Err(error) => return Err(fail(error, hints)),
            Ok(_) if blocking => {
                let first = hints.iter().find(|h| h.is_error()).expect("blocking");
                return Err(fail(EngineError::Type(first.message.clone()), hints));
            }
            Ok((out, c)) => {
                schemas.push(out);
                compiled.push(c);
            }
        }
        right_schemas.push(right);
    }

    Ok(Plan {
        spec: spec.clone(),
        schemas,
        right_schemas,
        hints: sorted(hints),
        compiled,
    })
}

/// Code order, then step order.
fn sorted(mut hints: Vec<Hint>) -> Vec<Hint> {
    hints.sort_by_key(|h| (h.code, h.step_index));
    hints
}

/// Source data for a plan, loaded ahead of execution so that timing can
/// leave it out.
#[derive(Debug, Clone)]
pub struct LoadedSources {
    pub source: Dataset,
    pub rights: Vec<Option<Dataset>>,
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error("source: {0}")]
    Source(#[source] IngestError),
    #[error("step {step_index}: right-hand source: {error}")]
    RightSource {
        step_index: usize,
        #[source]
        error: IngestError,
    },
    #[error(transparent)]
    Step(#[from] Box<StepFailure>),
    #[error(
        "step {step_index}: output schema {found} differs from the validated schema {expected}"
    )]
    SchemaDrift {
        step_index: usize,
        expected: Schema,
        found: Schema,
    },
    #[error("loaded sources do not match the plan: {0}")]
    SourceMismatch(String),
}

pub fn load_sources(plan: &Plan) -> Result<LoadedSources, PipelineError> {
    let source = plan.spec.source.load().map_err(PipelineError::Source)?;
    let rights = plan
        .spec
        .steps
        .iter()
        .enumerate()
        .map(|(i, step)| {
            step.right_source()
                .map(|r| {
                    r.load().map_err(|error| PipelineError::RightSource {
                        step_index: i,
                        error,
                    })
                })
                .transpose()
        })
        .collect::<Result<_, _>>()?;
    Ok(LoadedSources { source, rights })
}

fn run_step(
    step: &Step,
    compiled: &Compiled,
    input: &Dataset,
    right: Option<&Dataset>,
) -> Result<Dataset, EngineError> {
    match (step, compiled) {
        (Step::Filter { .. }, Compiled::Filter(e)) => ops::filter(input, e),
        (Step::WithColumn { .. }, Compiled::WithColumn(name, e)) => {
            ops::with_column(input, name, e)
        }
        (Step::Select { columns }, _) => ops::select(input, columns),
        (Step::Join { on, how, .. }, _) => ops::join(input, right.expect("join input"), on, *how),
        (Step::GroupByAgg { keys, aggs }, _) => ops::group_by_agg(input, keys, aggs),
        (Step::Sort { columns, ascending }, _) => ops::sort(input, columns, ascending),
        (Step::Distinct, _) => Ok(ops::distinct(input)),
        (Step::Union { .. }, _) => ops::union(input, right.expect("union input")),
        (Step::Limit { n }, _) => Ok(ops::limit(input, (*n).max(0) as usize)),
        (step, _) => unreachable!("{} compiled inconsistently", step.op_name()),
    }
}

fn elapsed_ns(start: Instant) -> u64 {
    start.elapsed().as_nanos().try_into().unwrap_or(u64::MAX)
}

/// Run a validated plan over already-loaded data.
pub fn execute_plan(
    plan: &Plan,
    sources: &LoadedSources,
    trace_config: &TraceConfig,
    hint_config: &HintConfig,
) -> Result<(Dataset, Trace), PipelineError> {
    let steps = &plan.spec.steps;
    if sources.rights.len() != steps.len() {
        return Err(PipelineError::SourceMismatch(format!(
            "{} right-hand slots for {} steps",
            sources.rights.len(),
            steps.len()
        )));
    }
    let mut data = sources.source.clone();
    let mut traces = Vec::new();
    let mut duration_ns = 0u64;
    let mut instrumentation_ns = 0u64;

    for (i, step) in steps.iter().enumerate() {
        let right = sources.rights[i].as_ref();
        let compiled = &plan.compiled[i];
        let output = if trace_config.enabled {
            let (output, mut trace) = trace_step(
                i,
                step,
                &data,
                right,
                || run_step(step, compiled, &data, right),
                trace_config,
            )?;
            let mut hints: Vec<Hint> = plan.step_hints(i).cloned().collect();
            hints.extend(detect_anomalies(&trace, hint_config));
            hints.sort_by_key(|h| h.code);
            trace.hints = hints;
            duration_ns += trace.duration_ns;
            instrumentation_ns += trace.instrumentation_ns;
            traces.push(trace);
            output
        } else {
            let t = Instant::now();
            let output = run_step(step, compiled, &data, right).map_err(|error| {
                Box::new(StepFailure {
                    step_index: i,
                    op: step.op_name(),
                    state_before: DataState::unsampled(&data),
                    error,
                })
            })?;
            duration_ns += elapsed_ns(t);
            output
        };
        if output.schema() != &plan.schemas[i + 1] {
            return Err(PipelineError::SchemaDrift {
                step_index: i,
                expected: plan.schemas[i + 1].clone(),
                found: output.schema().clone(),
            });
        }
        data = output;
    }

    let trace = Trace {
        version: crate::report::TRACE_VERSION,
        spec: plan.spec.clone(),
        seed: trace_config.seed,
        sample_size: trace_config.sample_size,
        tracing: trace_config.enabled,
        steps: traces,
        totals: Totals {
            rows_out: data.row_count(),
            duration_ns,
            instrumentation_ns,
        },
    };
    Ok((data, trace))
}

/// Validate, load, and run.
pub fn execute(
    spec: &PipelineSpec,
    trace_config: &TraceConfig,
    hint_config: &HintConfig,
) -> Result<(Dataset, Trace), PipelineError> {
    let plan = validate_plan(spec, hint_config)?;
    let sources = load_sources(&plan)?;
    execute_plan(&plan, &sources, trace_config, hint_config)
}
