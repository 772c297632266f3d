//! Random valid pipelines over synthetic data.

use pipetrace_core::hints::HintConfig;
use pipetrace_core::ingest::{synthetic_schema, SourceSpec};
use pipetrace_core::ops::{AggFunc, Aggregate, Ascending, JoinType};
use pipetrace_core::pipeline::{validate_plan, PipelineSpec, Step};
use pipetrace_core::{DataType, Schema};

use super::oracle::Gen;

fn numeric(schema: &Schema) -> Vec<String> {
    schema
        .fields()
        .iter()
        .filter(|f| matches!(f.dtype, DataType::Int | DataType::Float))
        .map(|f| f.name.clone())
        .collect()
}

fn candidate(g: &mut Gen, schema: &Schema, i: usize, seed: u64) -> Option<Step> {
    let names: Vec<String> = schema.names().map(str::to_owned).collect();
    let nums = numeric(schema);
    Some(match g.below(9) {
        0 => {
            let c = g.pick(&nums).clone();
            let op = *g.pick(&[">", "<", ">=", "!="]);
            let lit = match schema.field(&c)?.dtype {
                DataType::Float => format!("{:?}", g.below(100) as f64 / 100.0),
                _ => g.below(120).to_string(),
            };
            Step::Filter {
                predicate: format!("{c} {op} {lit}"),
            }
        }
        1 => {
            let mut cols: Vec<String> = names.iter().filter(|_| g.chance(2, 3)).cloned().collect();
            if cols.is_empty() {
                cols.push(names[0].clone());
            }
            Step::Select { columns: cols }
        }
        2 => {
            let c = g.pick(&nums).clone();
            let op = *g.pick(&["+", "*", "/", "-"]);
            Step::WithColumn {
                name: format!("w{i}"),
                expr: format!("{c} {op} {}", 1 + g.below(5)),
            }
        }
        3 => {
            if schema.field("age")?.dtype != DataType::Int {
                return None;
            }
            let renames: Vec<(&str, String)> = ["id", "score", "city", "ts"]
                .iter()
                .map(|c| (*c, format!("j{i}_{c}")))
                .collect();
            let pairs: Vec<(&str, &str)> = renames.iter().map(|(a, b)| (*a, b.as_str())).collect();
            Step::Join {
                right: SourceSpec::synthetic(20 + g.below(150), seed ^ (i as u64 + 1))
                    .with_rename(&pairs),
                on: vec!["age".into()],
                how: *g.pick(&[JoinType::Inner, JoinType::Left]),
            }
        }
        4 => {
            let key = g.pick(&names).clone();
            let mut aggs = vec![Aggregate::new(AggFunc::Count, "*", &format!("g{i}_n"))];
            if let Some(c) = nums.iter().find(|c| **c != key) {
                let f = *g.pick(&[AggFunc::Sum, AggFunc::Avg, AggFunc::Min, AggFunc::Max]);
                aggs.push(Aggregate::new(f, c, &format!("g{i}_v")));
            }
            Step::GroupByAgg {
                keys: vec![key],
                aggs,
            }
        }
        5 => {
            let a = g.pick(&names).clone();
            let b = g.pick(&names).clone();
            let cols = if a == b { vec![a] } else { vec![a, b] };
            let flags: Vec<bool> = cols.iter().map(|_| g.chance(1, 2)).collect();
            Step::Sort {
                columns: cols,
                ascending: Ascending::Each(flags),
            }
        }
        6 => Step::Distinct,
        7 => {
            if *schema != synthetic_schema() {
                return None;
            }
            Step::Union {
                right: SourceSpec::synthetic(g.below(300), seed.wrapping_add(i as u64)),
            }
        }
        _ => Step::Limit {
            n: g.below(400) as i64,
        },
    })
}

/// A pipeline of 1 to 6 steps over up to 2000 synthetic rows. Every step is
/// checked with `validate_plan` as it is added.
pub fn random_spec(seed: u64) -> PipelineSpec {
    let mut g = Gen::new(seed.wrapping_mul(0x9E37_79B9));
    let source = SourceSpec::synthetic(g.below(2001), seed);
    let mut spec = PipelineSpec::new(source, vec![]);
    let mut schema = synthetic_schema();
    let target = 1 + g.below(6) as usize;
    let mut attempts = 0;
    while spec.steps.len() < target && attempts < 200 {
        attempts += 1;
        let i = spec.steps.len();
        if numeric(&schema).is_empty() {
            break;
        }
        let Some(step) = candidate(&mut g, &schema, i, seed) else {
            continue;
        };
        spec.steps.push(step);
        match validate_plan(&spec, &HintConfig::default()) {
            Ok(plan) => schema = plan.output_schema().clone(),
            Err(_) => {
                spec.steps.pop();
            }
        }
    }
    spec
}
