//! Dense numeric encoding of a [`FeatureTable`] shared by all learners.
//!
//! Nominal cells hold the index of their level in the attribute's sorted
//! level list; a value never seen when the schema was built encodes as
//! `levels.len()`. Missing cells are `NaN` for both kinds.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::LearnerError;
use crate::table::{ColumnKind, ColumnValues, FeatureTable};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    pub kind: ColumnKind,
    /// Sorted distinct values, nominal attributes only.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub levels: Vec<String>,
}

impl Attribute {
    pub fn is_nominal(&self) -> bool {
        self.kind == ColumnKind::Nominal
    }

    /// Number of codes a nominal cell can take, counting the unseen slot.
    pub fn code_count(&self) -> usize {
        self.levels.len() + 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub attributes: Vec<Attribute>,
    pub classes: Vec<String>,
}

impl Schema {
    pub fn from_table(table: &FeatureTable) -> Result<Schema, LearnerError> {
        let class = table.require_class()?;
        let attributes = table
            .columns()
            .iter()
            .map(|c| match &c.values {
                ColumnValues::Nominal(v) => {
                    let levels: BTreeSet<&str> = v.iter().flatten().map(|s| s.as_ref()).collect();
                    Attribute {
                        name: c.name.clone(),
                        kind: ColumnKind::Nominal,
                        levels: levels.into_iter().map(str::to_string).collect(),
                    }
                }
                ColumnValues::Numeric(_) => Attribute {
                    name: c.name.clone(),
                    kind: ColumnKind::Numeric,
                    levels: Vec::new(),
                },
            })
            .collect();
        Ok(Schema {
            attributes,
            classes: class.order.clone(),
        })
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    /// Checks that `table` has the same predictor names and kinds, in order.
    pub fn check(&self, table: &FeatureTable) -> Result<(), LearnerError> {
        let cols = table.columns();
        if cols.len() != self.attributes.len() {
            return Err(LearnerError::SchemaMismatch(format!(
                "expected {} columns, found {}",
                self.attributes.len(),
                cols.len()
            )));
        }
        for (a, c) in self.attributes.iter().zip(cols) {
            if a.name != c.name || a.kind != c.kind() {
                return Err(LearnerError::SchemaMismatch(format!(
                    "expected {} column {:?}, found {} column {:?}",
                    kind_name(a.kind),
                    a.name,
                    kind_name(c.kind()),
                    c.name
                )));
            }
        }
        Ok(())
    }

    /// Encodes every row of `table` against this schema.
    pub fn encode(&self, table: &FeatureTable) -> Result<Vec<f64>, LearnerError> {
        self.check(table)?;
        let n = table.row_count();
        let m = self.attributes.len();
        let mut x = vec![f64::NAN; n * m];
        for (j, (a, c)) in self.attributes.iter().zip(table.columns()).enumerate() {
            match &c.values {
                ColumnValues::Nominal(v) => {
                    let index: HashMap<&str, usize> =
                        a.levels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
                    for (i, cell) in v.iter().enumerate() {
                        if let Some(s) = cell {
                            x[i * m + j] = *index.get(s.as_ref()).unwrap_or(&a.levels.len()) as f64;
                        }
                    }
                }
                ColumnValues::Numeric(v) => {
                    for (i, cell) in v.iter().enumerate() {
                        if let Some(f) = cell {
                            x[i * m + j] = *f;
                        }
                    }
                }
            }
        }
        Ok(x)
    }

    /// Encodes one row of loosely typed values.
    pub fn encode_row(&self, row: &[Value]) -> Result<Vec<f64>, LearnerError> {
        if row.len() != self.attributes.len() {
            return Err(LearnerError::SchemaMismatch(format!(
                "expected {} values, found {}",
                self.attributes.len(),
                row.len()
            )));
        }
        self.attributes
            .iter()
            .zip(row)
            .map(|(a, v)| match (a.kind, v) {
                (_, Value::Missing) => Ok(f64::NAN),
                (ColumnKind::Nominal, Value::Nominal(s)) => Ok(a
                    .levels
                    .binary_search_by(|l| l.as_str().cmp(s))
                    .unwrap_or(a.levels.len()) as f64),
                (ColumnKind::Numeric, Value::Numeric(f)) => Ok(*f),
                (kind, _) => Err(LearnerError::SchemaMismatch(format!(
                    "column {:?} expects a {} value",
                    a.name,
                    kind_name(kind)
                ))),
            })
            .collect()
    }
}

fn kind_name(k: ColumnKind) -> &'static str {
    match k {
        ColumnKind::Nominal => "nominal",
        ColumnKind::Numeric => "numeric",
    }
}

/// One cell of a row handed to `predict`.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Missing,
    Nominal(String),
    Numeric(f64),
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub schema: Schema,
    /// Row-major cells.
    pub x: Vec<f64>,
    pub y: Vec<usize>,
}

impl Dataset {
    pub fn from_table(table: &FeatureTable) -> Result<Dataset, LearnerError> {
        let schema = Schema::from_table(table)?;
        Dataset::with_schema(schema, table)
    }

    pub fn with_schema(schema: Schema, table: &FeatureTable) -> Result<Dataset, LearnerError> {
        let class = table.require_class()?;
        let index: HashMap<&str, usize> = schema
            .classes
            .iter()
            .enumerate()
            .map(|(i, c)| (c.as_str(), i))
            .collect();
        let y = class
            .labels
            .iter()
            .map(|l| {
                index
                    .get(l.as_ref())
                    .copied()
                    .ok_or_else(|| LearnerError::SchemaMismatch(format!("unknown class label {l:?}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let x = schema.encode(table)?;
        Ok(Dataset { schema, x, y })
    }

    /// Builds a dataset from already encoded cells.
    pub fn from_parts(schema: Schema, x: Vec<f64>, y: Vec<usize>) -> Dataset {
        assert_eq!(x.len(), y.len() * schema.attributes.len(), "cell count mismatch");
        Dataset { schema, x, y }
    }

    pub fn n_rows(&self) -> usize {
        self.y.len()
    }

    pub fn n_attrs(&self) -> usize {
        self.schema.attributes.len()
    }

    pub fn n_classes(&self) -> usize {
        self.schema.n_classes()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let m = self.n_attrs();
        &self.x[i * m..(i + 1) * m]
    }

    pub fn value(&self, i: usize, attr: usize) -> f64 {
        self.x[i * self.n_attrs() + attr]
    }

    pub fn subset(&self, rows: &[usize]) -> Dataset {
        let m = self.n_attrs();
        let mut x = Vec::with_capacity(rows.len() * m);
        for &r in rows {
            x.extend_from_slice(self.row(r));
        }
        Dataset {
            schema: self.schema.clone(),
            x,
            y: rows.iter().map(|&r| self.y[r]).collect(),
        }
    }

    pub fn class_counts(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.n_classes()];
        for &y in &self.y {
            c[y] += 1.0;
        }
        c
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::{ClassColumn, Column};

    fn table() -> FeatureTable {
        FeatureTable::new(
            vec![
                Column::nominal("color", [Some("red"), None, Some("blue")]),
                Column::numeric("size", [Some(1.5), Some(2.0), None]),
            ],
            Some(ClassColumn::new("y", ["a", "b", "a"])),
        )
        .unwrap()
    }

    #[test]
    fn encodes_levels_and_missing() {
        let d = Dataset::from_table(&table()).unwrap();
        assert_eq!(d.schema.attributes[0].levels, vec!["blue", "red"]);
        assert_eq!(d.row(0), &[1.0, 1.5]);
        assert!(d.value(1, 0).is_nan());
        assert!(d.value(2, 1).is_nan());
        assert_eq!(d.y, vec![0, 1, 0]);
    }

    #[test]
    fn unseen_levels_get_the_extra_code() {
        let d = Dataset::from_table(&table()).unwrap();
        let row = d
            .schema
            .encode_row(&[Value::Nominal("green".into()), Value::Missing])
            .unwrap();
        assert_eq!(row[0], 2.0);
        assert!(row[1].is_nan());
    }

    #[test]
    fn schema_mismatch_is_reported() {
        let d = Dataset::from_table(&table()).unwrap();
        let other = FeatureTable::new(
            vec![
                Column::numeric("color", [Some(1.0)]),
                Column::numeric("size", [Some(1.0)]),
            ],
            None,
        )
        .unwrap();
        assert!(matches!(d.schema.encode(&other), Err(LearnerError::SchemaMismatch(_))));
        assert!(d.schema.encode_row(&[Value::Missing]).is_err());
    }
}
