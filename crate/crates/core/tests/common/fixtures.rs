//! One minimal pipeline per hint code. Each fixture triggers its own code
//! and nothing else under the default hint thresholds, sample size 20 and
//! seed 0.

use std::fs;
use std::path::Path;

use pipetrace_core::hints::{HintCode, HintConfig};
use pipetrace_core::ingest::SourceSpec;
use pipetrace_core::ops::{AggFunc, Aggregate, Ascending, JoinType};
use pipetrace_core::pipeline::{execute, validate_plan, PipelineSpec, Step};
use pipetrace_core::tracer::{reservoir_indices, TraceConfig};
use pipetrace_core::{DataType, Dataset, Field, Prng, Schema};

fn csv(
    dir: &Path,
    name: &str,
    header: &str,
    lines: impl IntoIterator<Item = String>,
    schema: &[(&str, DataType)],
) -> SourceSpec {
    let mut text = format!("{header}\n");
    for l in lines {
        text.push_str(&l);
        text.push('\n');
    }
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    SourceSpec::Csv {
        path,
        schema: Schema::new(schema.iter().map(|(n, t)| Field::new(*n, *t)).collect()).unwrap(),
        rename: Default::default(),
    }
}

fn s(v: &[&str]) -> Vec<String> {
    v.iter().map(|x| x.to_string()).collect()
}

/// Synthetic table renamed so that none of its columns survive except
/// (optionally) `keep`.
fn disjoint_synthetic(rows: u64, seed: u64, keep: Option<&str>) -> SourceSpec {
    let all = ["id", "age", "score", "city", "ts"];
    let renames: Vec<(&str, String)> = all
        .iter()
        .filter(|c| Some(**c) != keep)
        .map(|c| (*c, format!("r_{c}")))
        .collect();
    let pairs: Vec<(&str, &str)> = renames.iter().map(|(a, b)| (*a, b.as_str())).collect();
    SourceSpec::synthetic(rows, seed).with_rename(&pairs)
}

/// The scenario of a user asking for two columns descending with a single
/// flag: both columns sort descending and P1 explains the broadcast.
pub fn sort_scenario() -> PipelineSpec {
    PipelineSpec::new(
        SourceSpec::synthetic(60, 11),
        vec![Step::Sort {
            columns: s(&["age", "score"]),
            ascending: Ascending::All(false),
        }],
    )
}

pub fn fixtures(dir: &Path) -> Vec<(HintCode, PipelineSpec)> {
    let synth = |n| SourceSpec::synthetic(n, 5);
    let filter = |p: &str| Step::Filter {
        predicate: p.into(),
    };

    // A3: 11 x 11 rows on one key value gives 121 > 10 x 11.
    let k_left = csv(
        dir,
        "a3_left.csv",
        "k,v",
        (0..11).map(|i| format!("1,{i}")),
        &[("k", DataType::Int), ("v", DataType::Int)],
    );
    let k_right = csv(
        dir,
        "a3_right.csv",
        "k,w",
        (0..11).map(|i| format!("1,{i}")),
        &[("k", DataType::Int), ("w", DataType::Int)],
    );

    // A5: 100 copies of one row.
    let dupes = csv(
        dir,
        "a5.csv",
        "x,y",
        (0..100).map(|_| "7,same".to_string()),
        &[("x", DataType::Int), ("y", DataType::Str)],
    );

    // A6: the one left row whose key has a partner on the right sits
    // outside the left sample, so the samples share no key even though the
    // full inputs do.
    let n = 400;
    let sampled = reservoir_indices(n, 20, &mut Prng::new(0));
    let hidden = (0..n).rev().find(|i| !sampled.contains(i)).unwrap();
    let a6_left = csv(
        dir,
        "a6_left.csv",
        "k,v",
        (0..n).map(|i| format!("{},{i}", if i == hidden { 2 } else { 1 })),
        &[("k", DataType::Int), ("v", DataType::Int)],
    );
    let a6_right = csv(
        dir,
        "a6_right.csv",
        "k,w",
        ["2,9".to_string()],
        &[("k", DataType::Int), ("w", DataType::Int)],
    );

    // P7: `age` is text on the right.
    let p7_right = csv(
        dir,
        "p7_right.csv",
        "age,label",
        ["20,x".to_string()],
        &[("age", DataType::Str), ("label", DataType::Str)],
    );

    vec![
        (HintCode::P1, sort_scenario()),
        (
            HintCode::P2,
            PipelineSpec::new(
                synth(50),
                vec![Step::Sort {
                    columns: s(&["age", "score"]),
                    ascending: Ascending::Each(vec![false]),
                }],
            ),
        ),
        (
            HintCode::P3,
            PipelineSpec::new(
                synth(50),
                vec![Step::Join {
                    right: disjoint_synthetic(10, 6, None),
                    on: s(&["age"]),
                    how: JoinType::Inner,
                }],
            ),
        ),
        (
            HintCode::P4,
            PipelineSpec::new(
                synth(50),
                vec![Step::GroupByAgg {
                    keys: s(&["age"]),
                    aggs: vec![Aggregate::new(AggFunc::Sum, "city", "total")],
                }],
            ),
        ),
        (
            HintCode::P5,
            PipelineSpec::new(synth(0), vec![Step::Limit { n: 0 }]),
        ),
        (
            HintCode::P6,
            PipelineSpec::new(synth(50), vec![filter("salary > 3")]),
        ),
        (
            HintCode::P7,
            PipelineSpec::new(
                synth(50),
                vec![Step::Join {
                    right: p7_right,
                    on: s(&["age"]),
                    how: JoinType::Inner,
                }],
            ),
        ),
        (
            HintCode::A1,
            PipelineSpec::new(synth(100), vec![filter("age > 200")]),
        ),
        (
            HintCode::A2,
            PipelineSpec::new(synth(100), vec![filter("age >= 1")]),
        ),
        (
            HintCode::A3,
            PipelineSpec::new(
                k_left,
                vec![Step::Join {
                    right: k_right,
                    on: s(&["k"]),
                    how: JoinType::Inner,
                }],
            ),
        ),
        (
            HintCode::A4,
            PipelineSpec::new(
                synth(40),
                vec![Step::WithColumn {
                    name: "bonus".into(),
                    expr: "score / 0".into(),
                }],
            ),
        ),
        (HintCode::A5, PipelineSpec::new(dupes, vec![Step::Distinct])),
        (
            HintCode::A6,
            PipelineSpec::new(
                a6_left,
                vec![Step::Join {
                    right: a6_right,
                    on: s(&["k"]),
                    how: JoinType::Inner,
                }],
            ),
        ),
    ]
}

/// Every hint a spec produces, validation failures included, plus the
/// output when execution happened.
pub fn run_fixture(spec: &PipelineSpec) -> (Vec<HintCode>, Option<Dataset>) {
    let cfg = HintConfig::default();
    match validate_plan(spec, &cfg) {
        Err(e) => (e.hints().iter().map(|h| h.code).collect(), None),
        Ok(_) => {
            let (out, trace) = execute(spec, &TraceConfig::default(), &cfg).unwrap();
            (trace.hints().map(|h| h.code).collect(), Some(out))
        }
    }
}
