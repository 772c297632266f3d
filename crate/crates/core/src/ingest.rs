//! Dataset sources: CSV with an explicit schema, JSONL with an inferred (or
//! declared) schema, and seeded synthetic data for benchmarks.
//!
//! CSV dialect: comma separated, `"` quoting with `""` as the escape,
//! `\n` or `\r\n` line ends, UTF-8. An empty unquoted field is null. A
//! quoted empty field is the empty string in a `str` column and null
//! elsewhere, which lets [`write_csv`] output read back unchanged.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, Row};
use crate::error::EngineError;
use crate::prng::Prng;
use crate::schema::{Field, Schema};
use crate::value::{DataType, Value};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("header mismatch: schema expects [{}], file has [{}]", expected.join(","), found.join(","))]
    HeaderMismatch {
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("line {line}: column `{column}` expects {expected}, got {raw:?}")]
    BadField {
        line: usize,
        column: String,
        expected: DataType,
        raw: String,
    },
    #[error("line {line}: expected {expected} fields, found {found}")]
    Ragged {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: {message}")]
    Csv { line: usize, message: String },
    #[error("line {line}: malformed JSON: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: key `{key}` holds a nested value")]
    Nested { line: usize, key: String },
    #[error("line {line}: key `{key}` is not in the schema")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key `{key}` was {expected}, now {found}")]
    TypeConflict {
        line: usize,
        key: String,
        expected: DataType,
        found: DataType,
    },
    #[error("rename: {0}")]
    Rename(EngineError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Where a dataset comes from. Any source may rename columns after
/// loading, which is how two synthetic tables are made joinable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "format", rename_all = "lowercase", deny_unknown_fields)]
pub enum SourceSpec {
    Csv {
        path: PathBuf,
        schema: Schema,
        #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
        rename: BTreeMap<String, String>,
    },
    Jsonl {
        path: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        schema: Option<Schema>,
        #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
        rename: BTreeMap<String, String>,
    },
    Synthetic {
        rows: u64,
        seed: u64,
        #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
        rename: BTreeMap<String, String>,
    },
}

impl SourceSpec {
    pub fn synthetic(rows: u64, seed: u64) -> Self {
        SourceSpec::Synthetic {
            rows,
            seed,
            rename: BTreeMap::new(),
        }
    }

    pub fn with_rename(mut self, pairs: &[(&str, &str)]) -> Self {
        let map = match &mut self {
            SourceSpec::Csv { rename, .. }
            | SourceSpec::Jsonl { rename, .. }
            | SourceSpec::Synthetic { rename, .. } => rename,
        };
        map.extend(pairs.iter().map(|(a, b)| (a.to_string(), b.to_string())));
        self
    }

    fn rename(&self) -> &BTreeMap<String, String> {
        match self {
            SourceSpec::Csv { rename, .. }
            | SourceSpec::Jsonl { rename, .. }
            | SourceSpec::Synthetic { rename, .. } => rename,
        }
    }

    /// The schema this source will produce. Reads nothing except for a
    /// JSONL source without a declared schema, whose types come from its
    /// contents.
    pub fn schema(&self) -> Result<Schema, IngestError> {
        let raw = match self {
            SourceSpec::Csv { schema, .. } => schema.clone(),
            SourceSpec::Jsonl {
                schema: Some(s), ..
            } => s.clone(),
            SourceSpec::Jsonl {
                path, schema: None, ..
            } => read_jsonl(path)?.schema().clone(),
            SourceSpec::Synthetic { .. } => synthetic_schema(),
        };
        rename_schema(&raw, self.rename())
    }

    pub fn load(&self) -> Result<Dataset, IngestError> {
        let data = match self {
            SourceSpec::Csv { path, schema, .. } => read_csv(path, schema)?,
            SourceSpec::Jsonl {
                path, schema: None, ..
            } => read_jsonl(path)?,
            SourceSpec::Jsonl {
                path,
                schema: Some(s),
                ..
            } => read_jsonl_with_schema(path, s)?,
            SourceSpec::Synthetic { rows, seed, .. } => generate_synthetic(*rows, *seed),
        };
        if self.rename().is_empty() {
            return Ok(data);
        }
        let schema = rename_schema(data.schema(), self.rename())?;
        Ok(Dataset::from_parts(schema, data.rows().to_vec()))
    }

    /// Resolve a relative path against `base`.
    pub fn resolve_path(&mut self, base: &Path) {
        if let SourceSpec::Csv { path, .. } | SourceSpec::Jsonl { path, .. } = self {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
    }

    pub fn describe(&self) -> String {
        match self {
            SourceSpec::Csv { path, .. } => format!("csv:{}", path.display()),
            SourceSpec::Jsonl { path, .. } => format!("jsonl:{}", path.display()),
            SourceSpec::Synthetic { rows, seed, .. } => {
                format!("synthetic(rows={rows}, seed={seed})")
            }
        }
    }
}

fn rename_schema(
    schema: &Schema,
    rename: &BTreeMap<String, String>,
) -> Result<Schema, IngestError> {
    if rename.is_empty() {
        return Ok(schema.clone());
    }
    for old in rename.keys() {
        schema.require(old).map_err(IngestError::Rename)?;
    }
    let fields = schema
        .fields()
        .iter()
        .map(|f| Field::new(rename.get(&f.name).unwrap_or(&f.name).clone(), f.dtype))
        .collect();
    Schema::new(fields).map_err(IngestError::Rename)
}

fn read_to_string(path: &Path) -> Result<String, IngestError> {
    fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.to_owned(),
        source,
    })
}

// ------------------------------------------------------------------- csv

struct CsvField {
    text: String,
    quoted: bool,
}

/// Split CSV text into records, each tagged with its 1-based start line.
fn csv_records(text: &str) -> Result<Vec<(usize, Vec<CsvField>)>, IngestError> {
    let mut records = Vec::new();
    let mut chars = text.chars().peekable();
    let mut line = 1;
    while chars.peek().is_some() {
        let start = line;
        let mut fields = Vec::new();
        loop {
            let mut field = CsvField {
                text: String::new(),
                quoted: false,
            };
            if chars.peek() == Some(&'"') {
                chars.next();
                field.quoted = true;
                loop {
                    match chars.next() {
                        None => {
                            return Err(IngestError::Csv {
                                line: start,
                                message: "unterminated quoted field".into(),
                            })
                        }
                        Some('"') if chars.peek() == Some(&'"') => {
                            chars.next();
                            field.text.push('"');
                        }
                        Some('"') => break,
                        Some(c) => {
                            if c == '\n' {
                                line += 1;
                            }
                            field.text.push(c);
                        }
                    }
                }
                if !matches!(chars.peek(), None | Some(',' | '\n' | '\r')) {
                    return Err(IngestError::Csv {
                        line,
                        message: "text after closing quote".into(),
                    });
                }
            } else {
                while let Some(&c) = chars.peek() {
                    match c {
                        ',' | '\n' | '\r' => break,
                        '"' => {
                            return Err(IngestError::Csv {
                                line,
                                message: "quote inside unquoted field".into(),
                            })
                        }
                        _ => {
                            field.text.push(c);
                            chars.next();
                        }
                    }
                }
            }
            fields.push(field);
            match chars.next() {
                Some(',') => continue,
                Some('\r') => {
                    if chars.next() != Some('\n') {
                        return Err(IngestError::Csv {
                            line,
                            message: "bare carriage return".into(),
                        });
                    }
                    line += 1;
                    break;
                }
                Some('\n') => {
                    line += 1;
                    break;
                }
                None => break,
                Some(_) => unreachable!(),
            }
        }
        records.push((start, fields));
    }
    Ok(records)
}

fn parse_field(field: &CsvField, dtype: DataType) -> Option<Value> {
    if field.text.is_empty() {
        return Some(if field.quoted && dtype == DataType::Str {
            Value::Str(String::new())
        } else {
            Value::Null
        });
    }
    let t = field.text.as_str();
    match dtype {
        DataType::Str => Some(Value::Str(field.text.clone())),
        DataType::Int => t.parse().ok().map(Value::Int),
        DataType::Float => t.parse().ok().map(Value::Float),
        DataType::Bool => match t {
            "true" | "True" | "TRUE" => Some(Value::Bool(true)),
            "false" | "False" | "FALSE" => Some(Value::Bool(false)),
            _ => None,
        },
    }
}

pub fn parse_csv(text: &str, schema: &Schema) -> Result<Dataset, IngestError> {
    let mut records = csv_records(text)?.into_iter();
    let header: Vec<String> = records
        .next()
        .map(|(_, f)| f.into_iter().map(|f| f.text).collect())
        .unwrap_or_default();
    let expected: Vec<String> = schema.names().map(str::to_owned).collect();
    if header != expected {
        return Err(IngestError::HeaderMismatch {
            expected,
            found: header,
        });
    }
    let mut rows = Vec::new();
    for (line, fields) in records {
        if fields.len() != schema.len() {
            return Err(IngestError::Ragged {
                line,
                expected: schema.len(),
                found: fields.len(),
            });
        }
        let row = fields
            .iter()
            .zip(schema.fields())
            .map(|(f, col)| {
                parse_field(f, col.dtype).ok_or_else(|| IngestError::BadField {
                    line,
                    column: col.name.clone(),
                    expected: col.dtype,
                    raw: f.text.clone(),
                })
            })
            .collect::<Result<Row, _>>()?;
        rows.push(row);
    }
    Ok(Dataset::from_parts(schema.clone(), rows))
}

pub fn read_csv(path: &Path, schema: &Schema) -> Result<Dataset, IngestError> {
    parse_csv(&read_to_string(path)?, schema)
}

fn csv_escape(out: &mut String, s: &str) {
    if s.is_empty() || s.contains([',', '"', '\n', '\r']) {
        out.push('"');
        out.push_str(&s.replace('"', "\"\""));
        out.push('"');
    } else {
        out.push_str(s);
    }
}

/// Render rows in the CSV dialect [`parse_csv`] reads.
pub fn write_csv(schema: &Schema, rows: &[Row]) -> String {
    let mut out = String::new();
    for (i, name) in schema.names().enumerate() {
        if i > 0 {
            out.push(',');
        }
        csv_escape(&mut out, name);
    }
    out.push('\n');
    for row in rows {
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            match v {
                Value::Null => {}
                Value::Str(s) => csv_escape(&mut out, s),
                Value::Float(x) => {
                    let _ = write!(out, "{x:?}");
                }
                other => {
                    let _ = write!(out, "{other}");
                }
            }
        }
        out.push('\n');
    }
    out
}

// ----------------------------------------------------------------- jsonl

fn json_type(
    line: usize,
    key: &str,
    v: &serde_json::Value,
) -> Result<Option<DataType>, IngestError> {
    use serde_json::Value as J;
    Ok(match v {
        J::Null => None,
        J::Bool(_) => Some(DataType::Bool),
        J::Number(n) if n.is_f64() => Some(DataType::Float),
        J::Number(n) if n.is_i64() => Some(DataType::Int),
        J::Number(_) => {
            return Err(IngestError::Malformed {
                line,
                message: format!("integer for `{key}` exceeds 64-bit range"),
            })
        }
        J::String(_) => Some(DataType::Str),
        J::Array(_) | J::Object(_) => {
            return Err(IngestError::Nested {
                line,
                key: key.to_owned(),
            })
        }
    })
}

fn json_value(v: &serde_json::Value, dtype: DataType) -> Value {
    use serde_json::Value as J;
    match (v, dtype) {
        (J::Bool(b), _) => Value::Bool(*b),
        (J::Number(n), DataType::Float) => n.as_f64().map_or(Value::Null, Value::Float),
        (J::Number(n), _) => n.as_i64().map_or(Value::Null, Value::Int),
        (J::String(s), _) => Value::Str(s.clone()),
        _ => Value::Null,
    }
}

fn json_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| !l.trim().is_empty())
}

fn json_object(
    line: usize,
    text: &str,
) -> Result<serde_json::Map<String, serde_json::Value>, IngestError> {
    match serde_json::from_str::<serde_json::Value>(text) {
        Ok(serde_json::Value::Object(m)) => Ok(m),
        Ok(_) => Err(IngestError::Malformed {
            line,
            message: "expected a JSON object".into(),
        }),
        Err(e) => Err(IngestError::Malformed {
            line,
            message: e.to_string(),
        }),
    }
}

/// Accept `found` into a column declared `expected`? Integers widen into
/// float columns; nothing else converts.
fn fits(expected: DataType, found: DataType) -> bool {
    expected == found || (expected == DataType::Float && found == DataType::Int)
}

/// Parse JSONL, inferring the schema. Columns and their order come from
/// the first object; a column whose first value is null takes its type
/// from the first later non-null value (`str` if there is none).
pub fn parse_jsonl(text: &str) -> Result<Dataset, IngestError> {
    let mut names: Vec<String> = Vec::new();
    let mut types: Vec<Option<DataType>> = Vec::new();
    let mut raw_rows: Vec<Vec<Option<serde_json::Value>>> = Vec::new();
    for (n, (line, text)) in json_lines(text).enumerate() {
        let obj = json_object(line, text)?;
        if n == 0 {
            names = obj.keys().cloned().collect();
            types = vec![None; names.len()];
        }
        let mut row = vec![None; names.len()];
        for (key, v) in obj {
            let Some(c) = names.iter().position(|k| *k == key) else {
                return Err(IngestError::UnknownKey { line, key });
            };
            if let Some(t) = json_type(line, &key, &v)? {
                match types[c] {
                    None => types[c] = Some(t),
                    Some(e) if fits(e, t) => {}
                    Some(e) => {
                        return Err(IngestError::TypeConflict {
                            line,
                            key,
                            expected: e,
                            found: t,
                        })
                    }
                }
            }
            row[c] = Some(v);
        }
        raw_rows.push(row);
    }
    let schema = Schema::new(
        names
            .iter()
            .zip(&types)
            .map(|(n, t)| Field::new(n.clone(), t.unwrap_or(DataType::Str)))
            .collect(),
    )?;
    let rows = raw_rows
        .into_iter()
        .map(|r| {
            r.iter()
                .zip(schema.fields())
                .map(|(v, f)| v.as_ref().map_or(Value::Null, |v| json_value(v, f.dtype)))
                .collect()
        })
        .collect();
    Ok(Dataset::from_parts(schema, rows))
}

/// Parse JSONL against a declared schema.
pub fn parse_jsonl_with_schema(text: &str, schema: &Schema) -> Result<Dataset, IngestError> {
    let mut rows = Vec::new();
    for (line, text) in json_lines(text) {
        let obj = json_object(line, text)?;
        let mut row = vec![Value::Null; schema.len()];
        for (key, v) in obj {
            let Some(c) = schema.index_of(&key) else {
                return Err(IngestError::UnknownKey { line, key });
            };
            let expected = schema.fields()[c].dtype;
            if let Some(t) = json_type(line, &key, &v)? {
                if !fits(expected, t) {
                    return Err(IngestError::TypeConflict {
                        line,
                        key,
                        expected,
                        found: t,
                    });
                }
            }
            row[c] = json_value(&v, expected);
        }
        rows.push(row);
    }
    Ok(Dataset::from_parts(schema.clone(), rows))
}

pub fn read_jsonl(path: &Path) -> Result<Dataset, IngestError> {
    parse_jsonl(&read_to_string(path)?)
}

pub fn read_jsonl_with_schema(path: &Path, schema: &Schema) -> Result<Dataset, IngestError> {
    parse_jsonl_with_schema(&read_to_string(path)?, schema)
}

// ------------------------------------------------------------- synthetic

pub const SYNTHETIC_CITIES: u64 = 50;

pub fn synthetic_schema() -> Schema {
    Schema::new(vec![
        Field::new("id", DataType::Int),
        Field::new("age", DataType::Int),
        Field::new("score", DataType::Float),
        Field::new("city", DataType::Str),
        Field::new("ts", DataType::Int),
    ])
    .expect("static schema")
}

/// Deterministic benchmark data: `id` counts up from 0, `age` is uniform
/// in 1..=100, `score` uniform in [0, 1), `city` one of `city00`..`city49`,
/// `ts` uniform in [0, 10^9). Draws come from one splitmix64 stream seeded
/// with `seed`, taken in column order row by row.
pub fn generate_synthetic(row_count: u64, seed: u64) -> Dataset {
    let cities: Vec<String> = (0..SYNTHETIC_CITIES)
        .map(|i| format!("city{i:02}"))
        .collect();
    let mut prng = Prng::new(seed);
    let rows = (0..row_count)
        .map(|id| {
            let age = 1 + prng.below(100) as i64;
            let score = prng.next_f64();
            let city = cities[prng.below(SYNTHETIC_CITIES) as usize].clone();
            let ts = prng.below(1_000_000_000) as i64;
            vec![
                Value::Int(id as i64),
                Value::Int(age),
                Value::Float(score),
                Value::Str(city),
                Value::Int(ts),
            ]
        })
        .collect();
    Dataset::from_parts(synthetic_schema(), rows)
}
