//! Overhead benchmark: six fixed programs run with and without tracing.

use std::fmt;
use std::fmt::Write as _;
use std::time::Instant;

use thiserror::Error;

use crate::dataset::Dataset;
use crate::hints::HintConfig;
use crate::ingest::SourceSpec;
use crate::ops::{AggFunc, Aggregate, Ascending, JoinType};
use crate::pipeline::{
    execute_plan, load_sources, validate_plan, LoadedSources, PipelineError, PipelineSpec, Plan,
    Step,
};
use crate::tracer::{TraceConfig, DEFAULT_SAMPLE_SIZE};

pub const DEFAULT_SCALES: [u64; 3] = [10_000, 100_000, 1_000_000];
pub const DEFAULT_REPS: usize = 20;

/// Rows in the right-hand table of the join programs.
pub const DIMENSION_ROWS: u64 = 100;

pub const CSV_HEADER: &str =
    "program,scale_rows,rep_count,baseline_median_ns,instrumented_median_ns,overhead_ns,overhead_ratio";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BenchProgram {
    B1,
    B2,
    B3,
    B4,
    B5,
    B6,
}

impl BenchProgram {
    pub const ALL: [BenchProgram; 6] = [
        BenchProgram::B1,
        BenchProgram::B2,
        BenchProgram::B3,
        BenchProgram::B4,
        BenchProgram::B5,
        BenchProgram::B6,
    ];

    pub fn id(self) -> &'static str {
        match self {
            BenchProgram::B1 => "B1",
            BenchProgram::B2 => "B2",
            BenchProgram::B3 => "B3",
            BenchProgram::B4 => "B4",
            BenchProgram::B5 => "B5",
            BenchProgram::B6 => "B6",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            BenchProgram::B1 => "filter-chain",
            BenchProgram::B2 => "join",
            BenchProgram::B3 => "group-agg",
            BenchProgram::B4 => "sort",
            BenchProgram::B5 => "mixed ETL",
            BenchProgram::B6 => "dedup-union",
        }
    }

    pub fn parse(s: &str) -> Option<BenchProgram> {
        BenchProgram::ALL
            .into_iter()
            .find(|p| p.id().eq_ignore_ascii_case(s.trim()))
    }

    /// The pipeline this program runs over `rows` synthetic rows.
    pub fn spec(self, rows: u64, seed: u64) -> PipelineSpec {
        let source = SourceSpec::synthetic(rows, seed);
        let s = |v: &[&str]| -> Vec<String> { v.iter().map(|x| x.to_string()).collect() };
        let filter = |p: &str| Step::Filter {
            predicate: p.into(),
        };
        let dimension = || Step::Join {
            right: dimension_table(seed),
            on: s(&["age"]),
            how: JoinType::Inner,
        };
        let steps = match self {
            BenchProgram::B1 => vec![
                filter("age > 18"),
                filter("score < 0.9"),
                filter("ts >= 100000000"),
            ],
            BenchProgram::B2 => vec![filter("age > 18"), dimension()],
            BenchProgram::B3 => vec![Step::GroupByAgg {
                keys: s(&["city"]),
                aggs: vec![
                    Aggregate::new(AggFunc::Count, "*", "n"),
                    Aggregate::new(AggFunc::Sum, "score", "total_score"),
                    Aggregate::new(AggFunc::Avg, "age", "mean_age"),
                ],
            }],
            BenchProgram::B4 => vec![Step::Sort {
                columns: s(&["city", "score"]),
                ascending: Ascending::Each(vec![true, false]),
            }],
            BenchProgram::B5 => vec![
                filter("score > 0.1"),
                Step::WithColumn {
                    name: "weighted".into(),
                    expr: "score * age".into(),
                },
                dimension(),
                Step::GroupByAgg {
                    keys: s(&["city"]),
                    aggs: vec![
                        Aggregate::new(AggFunc::Count, "*", "n"),
                        Aggregate::new(AggFunc::Sum, "weighted", "weighted_total"),
                        Aggregate::new(AggFunc::Avg, "r_score", "mean_r_score"),
                    ],
                },
                Step::Sort {
                    columns: s(&["n", "city"]),
                    ascending: Ascending::Each(vec![false, true]),
                },
            ],
            BenchProgram::B6 => vec![
                Step::Union {
                    right: SourceSpec::synthetic(rows, seed),
                },
                Step::Distinct,
                Step::Limit { n: 1000 },
            ],
        };
        PipelineSpec::new(source, steps)
    }
}

impl fmt::Display for BenchProgram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

/// A 100-row synthetic table whose non-key columns are renamed so it can
/// be joined to the main table on `age`.
fn dimension_table(seed: u64) -> SourceSpec {
    SourceSpec::synthetic(DIMENSION_ROWS, seed.wrapping_add(1)).with_rename(&[
        ("id", "r_id"),
        ("score", "r_score"),
        ("city", "r_city"),
        ("ts", "r_ts"),
    ])
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("{program} at {scale} rows: {source}")]
    Pipeline {
        program: BenchProgram,
        scale: u64,
        #[source]
        source: PipelineError,
    },
    #[error("{program} at {scale} rows: traced and untraced runs produced different output")]
    Interference { program: BenchProgram, scale: u64 },
    #[error("invalid benchmark settings: {0}")]
    Settings(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchResult {
    pub program: BenchProgram,
    pub scale_rows: u64,
    pub rep_count: usize,
    pub baseline_median_ns: u64,
    pub instrumented_median_ns: u64,
    /// instrumented minus baseline; negative when noise wins.
    pub overhead_ns: i64,
    pub overhead_ratio: f64,
    /// Raw timings in run order.
    pub baseline_ns: Vec<u64>,
    pub instrumented_ns: Vec<u64>,
}

impl BenchResult {
    pub fn from_timings(
        program: BenchProgram,
        scale_rows: u64,
        baseline_ns: Vec<u64>,
        instrumented_ns: Vec<u64>,
    ) -> Self {
        let b = median(&baseline_ns);
        let i = median(&instrumented_ns);
        let overhead_ns = i as i64 - b as i64;
        Self {
            program,
            scale_rows,
            rep_count: baseline_ns.len(),
            baseline_median_ns: b,
            instrumented_median_ns: i,
            overhead_ns,
            overhead_ratio: if b == 0 {
                0.0
            } else {
                overhead_ns as f64 / b as f64
            },
            baseline_ns,
            instrumented_ns,
        }
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{:.6}",
            self.program,
            self.scale_rows,
            self.rep_count,
            self.baseline_median_ns,
            self.instrumented_median_ns,
            self.overhead_ns,
            self.overhead_ratio
        )
    }
}

/// Median of the samples; the lower-middle mean for even counts.
/// Empty input gives 0.
pub fn median(samples: &[u64]) -> u64 {
    if samples.is_empty() {
        return 0;
    }
    let mut v = samples.to_vec();
    v.sort_unstable();
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        ((v[n / 2 - 1] as u128 + v[n / 2] as u128) / 2) as u64
    }
}

struct Prepared {
    program: BenchProgram,
    scale: u64,
    plan: Plan,
    sources: LoadedSources,
    hints: HintConfig,
}

impl Prepared {
    fn new(program: BenchProgram, scale: u64, seed: u64) -> Result<Self, BenchError> {
        let wrap = |source| BenchError::Pipeline {
            program,
            scale,
            source,
        };
        let hints = HintConfig::default();
        let plan = validate_plan(&program.spec(scale, seed), &hints).map_err(|e| wrap(e.into()))?;
        let sources = load_sources(&plan).map_err(wrap)?;
        Ok(Self {
            program,
            scale,
            plan,
            sources,
            hints,
        })
    }

    /// Runs once and returns the elapsed time and the output. The output is
    /// dropped by the caller, outside the timed region.
    fn run(&self, trace: &TraceConfig) -> Result<(u64, Dataset), BenchError> {
        let start = Instant::now();
        let result = execute_plan(&self.plan, &self.sources, trace, &self.hints);
        let ns = start.elapsed().as_nanos().try_into().unwrap_or(u64::MAX);
        let (data, _trace) = result.map_err(|source| BenchError::Pipeline {
            program: self.program,
            scale: self.scale,
            source,
        })?;
        Ok((ns, data))
    }
}

/// Time one program at one scale. Data is generated once up front; one
/// untimed warm-up of each mode runs first and its outputs are compared;
/// then `reps` baseline and `reps` instrumented runs alternate, with the
/// mode that goes first swapping on every repetition.
pub fn run_benchmark(
    program: BenchProgram,
    scale_rows: u64,
    reps: usize,
    seed: u64,
) -> Result<BenchResult, BenchError> {
    if scale_rows == 0 || reps == 0 {
        return Err(BenchError::Settings(format!(
            "scale and reps must be positive (got scale {scale_rows}, reps {reps})"
        )));
    }
    let prepared = Prepared::new(program, scale_rows, seed)?;
    let baseline = TraceConfig::disabled();
    let instrumented = TraceConfig {
        enabled: true,
        sample_size: DEFAULT_SAMPLE_SIZE,
        seed,
    };

    let (_, warm_b) = prepared.run(&baseline)?;
    let (_, warm_i) = prepared.run(&instrumented)?;
    if !warm_b.identical(&warm_i) {
        return Err(BenchError::Interference {
            program,
            scale: scale_rows,
        });
    }
    drop((warm_b, warm_i));

    let mut b_ns = Vec::with_capacity(reps);
    let mut i_ns = Vec::with_capacity(reps);
    for rep in 0..reps {
        // Alternate which mode goes first so slow drift in machine speed
        // does not always favour the same mode.
        let order = if rep % 2 == 0 {
            [false, true]
        } else {
            [true, false]
        };
        for traced in order {
            let (ns, out) = prepared.run(if traced { &instrumented } else { &baseline })?;
            if traced {
                i_ns.push(ns)
            } else {
                b_ns.push(ns)
            }
            drop(out);
        }
    }
    Ok(BenchResult::from_timings(program, scale_rows, b_ns, i_ns))
}

/// Every program at every scale, in program-major order. `progress` sees
/// each result as it completes.
pub fn run_suite(
    programs: &[BenchProgram],
    scales: &[u64],
    reps: usize,
    seed: u64,
    mut progress: impl FnMut(&BenchResult),
) -> Result<Vec<BenchResult>, BenchError> {
    let mut out = Vec::with_capacity(programs.len() * scales.len());
    for &p in programs {
        for &scale in scales {
            let r = run_benchmark(p, scale, reps, seed)?;
            progress(&r);
            out.push(r);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub csv: String,
    pub table: String,
    /// Programs whose overhead ratio strictly rises with every scale step.
    pub flagged: Vec<BenchProgram>,
}

pub fn results_csv(results: &[BenchResult]) -> String {
    let mut csv = String::from(CSV_HEADER);
    csv.push('\n');
    for r in results {
        csv.push_str(&r.csv_row());
        csv.push('\n');
    }
    csv
}

/// Programs measured at two or more scales whose ratio increases at every
/// step up in scale.
pub fn rising_ratios(results: &[BenchResult]) -> Vec<BenchProgram> {
    let mut programs: Vec<BenchProgram> = results.iter().map(|r| r.program).collect();
    programs.sort();
    programs.dedup();
    programs
        .into_iter()
        .filter(|p| {
            let mut rows: Vec<&BenchResult> = results.iter().filter(|r| r.program == *p).collect();
            rows.sort_by_key(|r| r.scale_rows);
            rows.len() >= 2
                && rows
                    .windows(2)
                    .all(|w| w[1].overhead_ratio > w[0].overhead_ratio)
        })
        .collect()
}

pub fn summarize(results: &[BenchResult]) -> Summary {
    let flagged = rising_ratios(results);
    let mut table = String::new();
    let _ = writeln!(
        table,
        "{:<8} {:<13} {:>10} {:>5} {:>14} {:>14} {:>12} {:>8}",
        "program", "kind", "rows", "reps", "baseline ms", "traced ms", "overhead ms", "ratio"
    );
    for r in results {
        let _ = writeln!(
            table,
            "{:<8} {:<13} {:>10} {:>5} {:>14.3} {:>14.3} {:>12.3} {:>7.1}%",
            r.program.id(),
            r.program.title(),
            r.scale_rows,
            r.rep_count,
            r.baseline_median_ns as f64 / 1e6,
            r.instrumented_median_ns as f64 / 1e6,
            r.overhead_ns as f64 / 1e6,
            r.overhead_ratio.max(0.0) * 100.0
        );
    }
    for p in &flagged {
        let _ = writeln!(
            table,
            "FLAG {p}: overhead ratio rises with every increase in scale"
        );
    }
    Summary {
        csv: results_csv(results),
        table,
        flagged,
    }
}
