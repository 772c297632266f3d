//! Per-step data capture.
//!
//! Around each step the tracer records the exact row count and schema of
//! the data going in and coming out, plus a reservoir sample of at most `k`
//! rows and column statistics computed from that sample alone. The only
//! full-data cost is one PRNG draw per row past the k-th.

use std::cmp::Ordering;
use std::time::Instant;

use serde::Serialize;
use thiserror::Error;

use crate::dataset::{Dataset, Row};
use crate::error::EngineError;
use crate::hints::Hint;
use crate::pipeline::Step;
use crate::prng::Prng;
use crate::schema::Schema;
use crate::value::{DataType, Value};

pub const DEFAULT_SAMPLE_SIZE: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceConfig {
    pub enabled: bool,
    pub sample_size: usize,
    pub seed: u64,
}

impl Default for TraceConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            sample_size: DEFAULT_SAMPLE_SIZE,
            seed: 0,
        }
    }
}

impl TraceConfig {
    pub fn disabled() -> Self {
        Self {
            enabled: false,
            ..Self::default()
        }
    }

    /// The generator for one step. Seeding per step keeps a step's samples
    /// reproducible on their own, whatever earlier steps drew.
    pub fn step_prng(&self, step_index: usize) -> Prng {
        Prng::new(self.seed ^ step_index as u64)
    }
}

/// Algorithm R over positions `0..n`: the first `k` fill the reservoir in
/// order, then position `i` draws `j = next() mod (i + 1)` and replaces
/// slot `j` when `j < k`.
pub fn reservoir_indices(n: usize, k: usize, prng: &mut Prng) -> Vec<usize> {
    let mut slots: Vec<usize> = (0..n.min(k)).collect();
    for i in k..n {
        let j = prng.below(i as u64 + 1);
        if j < k as u64 {
            slots[j as usize] = i;
        }
    }
    slots
}

/// Streaming Algorithm R over any sequence. Picks the same items as
/// [`reservoir_indices`] for the same length, `k`, and generator state.
pub fn reservoir_sample<I: IntoIterator>(items: I, k: usize, prng: &mut Prng) -> Vec<I::Item> {
    let mut slots = Vec::with_capacity(k);
    for (i, item) in items.into_iter().enumerate() {
        if i < k {
            slots.push(item);
        } else {
            let j = prng.below(i as u64 + 1);
            if j < k as u64 {
                slots[j as usize] = item;
            }
        }
    }
    slots
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ColumnStats {
    pub name: String,
    pub nulls_in_sample: usize,
    pub sample_size: usize,
    /// Sample minimum; null for bool columns or when nothing non-null was
    /// sampled.
    pub min: Value,
    pub max: Value,
}

impl ColumnStats {
    pub fn null_fraction(&self) -> f64 {
        if self.sample_size == 0 {
            0.0
        } else {
            self.nulls_in_sample as f64 / self.sample_size as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DataState {
    /// Exact, never sampled.
    pub row_count: usize,
    pub schema: Schema,
    pub column_stats: Vec<ColumnStats>,
}

impl DataState {
    /// Exact count and schema with empty sample statistics, for when no
    /// capture ran.
    pub fn unsampled(data: &Dataset) -> Self {
        Self {
            row_count: data.row_count(),
            schema: data.schema().clone(),
            column_stats: sample_stats(data.schema(), &[]),
        }
    }

    pub fn column(&self, name: &str) -> Option<&ColumnStats> {
        self.column_stats.iter().find(|c| c.name == name)
    }
}

fn sample_stats(schema: &Schema, sample: &[Row]) -> Vec<ColumnStats> {
    schema
        .fields()
        .iter()
        .enumerate()
        .map(|(c, field)| {
            let mut nulls = 0;
            let mut min: Option<&Value> = None;
            let mut max: Option<&Value> = None;
            for row in sample {
                let v = &row[c];
                if v.is_null() {
                    nulls += 1;
                    continue;
                }
                if field.dtype == DataType::Bool {
                    continue;
                }
                if min.is_none_or(|m| v.total_cmp(m) == Ordering::Less) {
                    min = Some(v);
                }
                if max.is_none_or(|m| v.total_cmp(m) == Ordering::Greater) {
                    max = Some(v);
                }
            }
            ColumnStats {
                name: field.name.clone(),
                nulls_in_sample: nulls,
                sample_size: sample.len(),
                min: min.cloned().unwrap_or(Value::Null),
                max: max.cloned().unwrap_or(Value::Null),
            }
        })
        .collect()
}

/// Snapshot of one dataset: its state plus the sampled rows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Capture {
    pub state: DataState,
    pub sample: Vec<Row>,
}

pub fn capture_state(data: &Dataset, k: usize, prng: &mut Prng) -> Capture {
    let sample: Vec<Row> = reservoir_indices(data.row_count(), k, prng)
        .into_iter()
        .map(|i| data.rows()[i].clone())
        .collect();
    Capture {
        state: DataState {
            row_count: data.row_count(),
            schema: data.schema().clone(),
            column_stats: sample_stats(data.schema(), &sample),
        },
        sample,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepTrace {
    pub step_index: usize,
    pub step: Step,
    pub before: Capture,
    /// The right-hand input of a join or union.
    pub right: Option<Capture>,
    pub after: Capture,
    pub hints: Vec<Hint>,
    /// Time spent running the step itself.
    pub duration_ns: u64,
    /// Time spent capturing, excluded from `duration_ns`.
    pub instrumentation_ns: u64,
}

impl StepTrace {
    pub fn rows_in(&self) -> usize {
        self.before.state.row_count
    }

    pub fn rows_out(&self) -> usize {
        self.after.state.row_count
    }
}

#[derive(Debug, Error)]
#[error("step {step_index} ({op}) failed on {} input rows: {error}", state_before.row_count)]
pub struct StepFailure {
    pub step_index: usize,
    pub op: &'static str,
    pub state_before: DataState,
    #[source]
    pub error: EngineError,
}

fn elapsed_ns(start: Instant) -> u64 {
    start.elapsed().as_nanos().try_into().unwrap_or(u64::MAX)
}

/// Run one step with capture around it.
pub fn trace_step<F>(
    step_index: usize,
    step: &Step,
    input: &Dataset,
    right: Option<&Dataset>,
    run: F,
    config: &TraceConfig,
) -> Result<(Dataset, StepTrace), Box<StepFailure>>
where
    F: FnOnce() -> Result<Dataset, EngineError>,
{
    let mut prng = config.step_prng(step_index);
    let k = config.sample_size;

    let t0 = Instant::now();
    let before = capture_state(input, k, &mut prng);
    let right = right.map(|r| capture_state(r, k, &mut prng));
    let mut instrumentation_ns = elapsed_ns(t0);

    let t1 = Instant::now();
    let output = run();
    let duration_ns = elapsed_ns(t1);
    let output = output.map_err(|error| {
        Box::new(StepFailure {
            step_index,
            op: step.op_name(),
            state_before: before.state.clone(),
            error,
        })
    })?;

    let t2 = Instant::now();
    let after = capture_state(&output, k, &mut prng);
    instrumentation_ns += elapsed_ns(t2);

    let trace = StepTrace {
        step_index,
        step: step.clone(),
        before,
        right,
        after,
        hints: Vec::new(),
        duration_ns,
        instrumentation_ns,
    };
    Ok((output, trace))
}
