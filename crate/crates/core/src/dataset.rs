use std::sync::Arc;

use crate::error::EngineError;
use crate::schema::Schema;
use crate::value::Value;

pub type Row = Vec<Value>;

/// A typed, ordered, immutable table. Operators never mutate their inputs;
/// they build a new `Dataset`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: Arc<Schema>,
    rows: Arc<Vec<Row>>,
}

impl Dataset {
    /// Build a dataset, checking every row against the schema.
    pub fn new(schema: Schema, rows: Vec<Row>) -> Result<Self, EngineError> {
        for (r, row) in rows.iter().enumerate() {
            if row.len() != schema.len() {
                return Err(EngineError::RowArity {
                    row: r,
                    expected: schema.len(),
                    found: row.len(),
                });
            }
            for (value, field) in row.iter().zip(schema.fields()) {
                if let Some(t) = value.data_type() {
                    if t != field.dtype {
                        return Err(EngineError::RowType {
                            row: r,
                            column: field.name.clone(),
                            expected: field.dtype,
                        });
                    }
                }
            }
        }
        Ok(Self::from_parts(schema, rows))
    }

    /// Rows must already conform to the schema.
    pub(crate) fn from_parts(schema: Schema, rows: Vec<Row>) -> Self {
        debug_assert!(rows.iter().all(|r| r.len() == schema.len()));
        Self {
            schema: Arc::new(schema),
            rows: Arc::new(rows),
        }
    }

    pub fn empty(schema: Schema) -> Self {
        Self::from_parts(schema, Vec::new())
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn row_count(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Values of one column, in row order.
    pub fn column(&self, name: &str) -> Option<impl Iterator<Item = &Value> + '_> {
        let idx = self.schema.index_of(name)?;
        Some(self.rows.iter().map(move |r| &r[idx]))
    }

    /// Row-identity equality: same schema and every value identical,
    /// floats compared bitwise (any NaN matches any NaN).
    pub fn identical(&self, other: &Dataset) -> bool {
        self == other
    }
}
