//! In-memory dataframe pipelines with per-step tracing.
//!
//! A pipeline is a source plus a chain of relational steps. Running it with
//! tracing on records, for every step, the exact row counts and a small
//! reservoir sample of the rows going in and coming out, and runs a set of
//! hint rules over the plan and over each step's result.

pub mod bench;
pub mod dataset;
pub mod error;
pub mod expr;
pub mod hints;
pub mod ingest;
pub mod ops;
pub mod pipeline;
pub mod prng;
pub mod report;
pub mod schema;
pub mod tracer;
pub mod value;

pub use dataset::{Dataset, Row};
pub use error::{EngineError, Side};
pub use expr::{eval_expr, parse_expr, Expr};
pub use hints::{Hint, HintCode, HintConfig, Severity};
pub use pipeline::{execute, parse_spec, validate_plan, PipelineSpec, Step};
pub use prng::Prng;
pub use report::{emit_json, emit_text, Trace};
pub use schema::{Field, Schema};
pub use tracer::TraceConfig;
pub use value::{DataType, Value};
