//! Trace documents: JSON for tools, text for people.
//!
//! JSON key order is fixed:
//!
//! ```text
//! version, spec, seed, sample_size, tracing, steps, totals
//! step:   index, op, params, rows_in, rows_out, state_before, sample_before,
//!         right (join/union only), state_after, sample_after, hints,
//!         duration_ns, instrumentation_ns
//! totals: rows_out, duration_ns, instrumentation_ns
//! ```

use std::fmt::Write as _;

use serde::Serialize;

use crate::dataset::Row;
use crate::hints::Hint;
use crate::pipeline::PipelineSpec;
use crate::schema::Schema;
use crate::tracer::{Capture, DataState, StepTrace};

pub const TRACE_VERSION: u32 = 1;
pub const MIN_TEXT_WIDTH: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Totals {
    pub rows_out: usize,
    pub duration_ns: u64,
    pub instrumentation_ns: u64,
}

/// Everything one execution recorded. With tracing off, `steps` is empty
/// and only the totals are filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub version: u32,
    pub spec: PipelineSpec,
    pub seed: u64,
    pub sample_size: usize,
    pub tracing: bool,
    pub steps: Vec<StepTrace>,
    pub totals: Totals,
}

impl Trace {
    /// Zero every timing field, leaving only what is deterministic.
    pub fn zero_timing(&mut self) {
        for s in &mut self.steps {
            s.duration_ns = 0;
            s.instrumentation_ns = 0;
        }
        self.totals.duration_ns = 0;
        self.totals.instrumentation_ns = 0;
    }

    /// instrumentation / (instrumentation + step time), or 0 for no time.
    pub fn overhead_share(&self) -> f64 {
        let instr = self.totals.instrumentation_ns as f64;
        let total = instr + self.totals.duration_ns as f64;
        if total > 0.0 {
            instr / total
        } else {
            0.0
        }
    }

    pub fn hints(&self) -> impl Iterator<Item = &Hint> {
        self.steps.iter().flat_map(|s| s.hints.iter())
    }
}

#[derive(Serialize)]
struct TraceDoc<'a> {
    version: u32,
    spec: &'a PipelineSpec,
    seed: u64,
    sample_size: usize,
    tracing: bool,
    steps: Vec<StepDoc<'a>>,
    totals: &'a Totals,
}

#[derive(Serialize)]
struct StepDoc<'a> {
    index: usize,
    op: &'static str,
    params: &'a crate::pipeline::Step,
    rows_in: usize,
    rows_out: usize,
    state_before: &'a DataState,
    sample_before: &'a [Row],
    #[serde(skip_serializing_if = "Option::is_none")]
    right: Option<&'a Capture>,
    state_after: &'a DataState,
    sample_after: &'a [Row],
    hints: &'a [Hint],
    duration_ns: u64,
    instrumentation_ns: u64,
}

pub fn emit_json(trace: &Trace) -> String {
    let doc = TraceDoc {
        version: trace.version,
        spec: &trace.spec,
        seed: trace.seed,
        sample_size: trace.sample_size,
        tracing: trace.tracing,
        steps: trace
            .steps
            .iter()
            .map(|s| StepDoc {
                index: s.step_index,
                op: s.step.op_name(),
                params: &s.step,
                rows_in: s.rows_in(),
                rows_out: s.rows_out(),
                state_before: &s.before.state,
                sample_before: &s.before.sample,
                right: s.right.as_ref(),
                state_after: &s.after.state,
                sample_after: &s.after.sample,
                hints: &s.hints,
                duration_ns: s.duration_ns,
                instrumentation_ns: s.instrumentation_ns,
            })
            .collect(),
        totals: &trace.totals,
    };
    let mut out = serde_json::to_string_pretty(&doc).expect("trace serializes");
    out.push('\n');
    out
}

fn ms(ns: u64) -> String {
    format!("{:.3} ms", ns as f64 / 1e6)
}

fn clip(line: &str, width: usize) -> String {
    if line.chars().count() <= width {
        return line.to_owned();
    }
    let mut s: String = line.chars().take(width.saturating_sub(3)).collect();
    s.push_str("...");
    s
}

const CELL_MAX: usize = 18;

fn sample_table(out: &mut String, label: &str, capture: &Capture, width: usize) {
    let state = &capture.state;
    let _ = writeln!(
        out,
        "{label} (sample {} of {} rows):",
        capture.sample.len(),
        state.row_count
    );
    if capture.sample.is_empty() {
        return;
    }
    let schema: &Schema = &state.schema;
    let cells: Vec<Vec<String>> = capture
        .sample
        .iter()
        .map(|r| r.iter().map(|v| clip(&v.to_string(), CELL_MAX)).collect())
        .collect();
    let header: Vec<String> = schema.names().map(|n| clip(n, CELL_MAX)).collect();
    let widths: Vec<usize> = (0..header.len())
        .map(|c| {
            cells
                .iter()
                .map(|r| r[c].chars().count())
                .chain([header[c].chars().count()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let render = |row: &[String]| {
        let parts: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect();
        clip(format!("  {}", parts.join(" | ")).trim_end(), width)
    };
    let _ = writeln!(out, "{}", render(&header));
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    let _ = writeln!(out, "{}", clip(&format!("  {}", rule.join("-+-")), width));
    for row in &cells {
        let _ = writeln!(out, "{}", render(row));
    }
}

/// Human-readable report. `width` below 40 is raised to 40.
pub fn emit_text(trace: &Trace, width: usize) -> String {
    let width = width.max(MIN_TEXT_WIDTH);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{}",
        clip(
            &format!(
                "pipeline trace v{}: source {}, {} steps, seed {}, sample size {}{}",
                trace.version,
                trace.spec.source.describe(),
                trace.spec.steps.len(),
                trace.seed,
                trace.sample_size,
                if trace.tracing { "" } else { ", tracing off" }
            ),
            width
        )
    );

    for s in &trace.steps {
        out.push('\n');
        let _ = writeln!(
            out,
            "{}",
            clip(
                &format!(
                    "[{}] {}({})",
                    s.step_index,
                    s.step.op_name(),
                    s.step.params()
                ),
                width
            )
        );
        let delta = s.rows_out() as i128 - s.rows_in() as i128;
        let _ = writeln!(out, "rows: {} -> {} ({delta:+})", s.rows_in(), s.rows_out());
        let _ = writeln!(
            out,
            "time: {} (capture {})",
            ms(s.duration_ns),
            ms(s.instrumentation_ns)
        );
        sample_table(&mut out, "before", &s.before, width);
        if let Some(r) = &s.right {
            sample_table(&mut out, "right", r, width);
        }
        sample_table(&mut out, "after", &s.after, width);
        for h in &s.hints {
            let _ = writeln!(
                out,
                "{} {} ({}): {}",
                h.severity.tag(),
                h.name,
                h.code,
                h.message
            );
        }
    }

    out.push('\n');
    let _ = writeln!(
        out,
        "totals: rows out {}, step time {}, capture time {}, overhead share {:.1}%",
        trace.totals.rows_out,
        ms(trace.totals.duration_ns),
        ms(trace.totals.instrumentation_ns),
        trace.overhead_share() * 100.0
    );
    out
}
