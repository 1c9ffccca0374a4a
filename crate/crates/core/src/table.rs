//! Columnar feature tables with typed predictor columns and a nominal class.

use std::collections::{BTreeSet, HashSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::util::Sym;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TableError {
    #[error("column {name:?} has {found} rows, expected {expected}")]
    RowCountMismatch {
        name: String,
        expected: usize,
        found: usize,
    },
    #[error("duplicate column {0:?}")]
    DuplicateColumn(String),
    #[error("unknown column {0:?}")]
    UnknownColumn(String),
    #[error("table has no class column")]
    NoClass,
    #[error("table is empty")]
    EmptyTable,
    #[error("class label {0:?} is not in the declared class order")]
    UnknownLabel(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Nominal,
    Numeric,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnValues {
    Nominal(Vec<Option<Sym>>),
    Numeric(Vec<Option<f64>>),
}

impl ColumnValues {
    pub fn len(&self) -> usize {
        match self {
            ColumnValues::Nominal(v) => v.len(),
            ColumnValues::Numeric(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind(&self) -> ColumnKind {
        match self {
            ColumnValues::Nominal(_) => ColumnKind::Nominal,
            ColumnValues::Numeric(_) => ColumnKind::Numeric,
        }
    }

    fn take_rows(&self, rows: &[usize]) -> ColumnValues {
        match self {
            ColumnValues::Nominal(v) => ColumnValues::Nominal(rows.iter().map(|&r| v[r].clone()).collect()),
            ColumnValues::Numeric(v) => ColumnValues::Numeric(rows.iter().map(|&r| v[r]).collect()),
        }
    }

    /// True when every row holds the same value (missing counts as a value).
    pub fn is_constant(&self) -> bool {
        match self {
            ColumnValues::Nominal(v) => v.windows(2).all(|w| w[0] == w[1]),
            ColumnValues::Numeric(v) => v.windows(2).all(|w| same_numeric(w[0], w[1])),
        }
    }

    /// Row-by-row equality, kinds must match.
    pub fn same_values(&self, other: &ColumnValues) -> bool {
        match (self, other) {
            (ColumnValues::Nominal(a), ColumnValues::Nominal(b)) => a == b,
            (ColumnValues::Numeric(a), ColumnValues::Numeric(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| same_numeric(*x, *y))
            }
            _ => false,
        }
    }
}

fn same_numeric(a: Option<f64>, b: Option<f64>) -> bool {
    match (a, b) {
        (None, None) => true,
        (Some(x), Some(y)) => x.to_bits() == y.to_bits() || x == y,
        _ => false,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub values: ColumnValues,
}

impl Column {
    pub fn nominal<I, S>(name: impl Into<String>, values: I) -> Self
    where
        I: IntoIterator<Item = Option<S>>,
        S: AsRef<str>,
    {
        Column {
            name: name.into(),
            values: ColumnValues::Nominal(values.into_iter().map(|v| v.map(|s| Arc::from(s.as_ref()))).collect()),
        }
    }

    pub fn numeric(name: impl Into<String>, values: impl IntoIterator<Item = Option<f64>>) -> Self {
        Column {
            name: name.into(),
            values: ColumnValues::Numeric(values.into_iter().collect()),
        }
    }

    pub fn kind(&self) -> ColumnKind {
        self.values.kind()
    }
}

/// The nominal target column. `order` fixes the class index order used by
/// learners and reports; every label must appear in it.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassColumn {
    pub name: String,
    pub labels: Vec<Sym>,
    pub order: Vec<String>,
}

impl ClassColumn {
    /// Class order defaults to the sorted distinct labels.
    pub fn new<S: AsRef<str>>(name: impl Into<String>, labels: impl IntoIterator<Item = S>) -> Self {
        let labels: Vec<Sym> = labels.into_iter().map(|s| Arc::from(s.as_ref())).collect();
        let order: BTreeSet<String> = labels.iter().map(|s| s.to_string()).collect();
        ClassColumn {
            name: name.into(),
            labels,
            order: order.into_iter().collect(),
        }
    }

    pub fn with_order<S: AsRef<str>>(
        name: impl Into<String>,
        labels: impl IntoIterator<Item = S>,
        order: Vec<String>,
    ) -> Result<Self, TableError> {
        let labels: Vec<Sym> = labels.into_iter().map(|s| Arc::from(s.as_ref())).collect();
        let known: HashSet<&str> = order.iter().map(String::as_str).collect();
        if let Some(bad) = labels.iter().find(|l| !known.contains(l.as_ref())) {
            return Err(TableError::UnknownLabel(bad.to_string()));
        }
        Ok(ClassColumn {
            name: name.into(),
            labels,
            order,
        })
    }

    /// Number of distinct labels actually observed.
    pub fn observed_classes(&self) -> usize {
        self.labels.iter().collect::<HashSet<_>>().len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    columns: Vec<Column>,
    class: Option<ClassColumn>,
    row_count: usize,
}

impl FeatureTable {
    pub fn new(columns: Vec<Column>, class: Option<ClassColumn>) -> Result<Self, TableError> {
        let row_count = columns
            .first()
            .map(|c| c.values.len())
            .or_else(|| class.as_ref().map(|c| c.labels.len()))
            .unwrap_or(0);
        let mut seen = HashSet::new();
        for c in &columns {
            if !seen.insert(c.name.as_str()) {
                return Err(TableError::DuplicateColumn(c.name.clone()));
            }
            if c.values.len() != row_count {
                return Err(TableError::RowCountMismatch {
                    name: c.name.clone(),
                    expected: row_count,
                    found: c.values.len(),
                });
            }
        }
        if let Some(cls) = &class {
            if seen.contains(cls.name.as_str()) {
                return Err(TableError::DuplicateColumn(cls.name.clone()));
            }
            if cls.labels.len() != row_count {
                return Err(TableError::RowCountMismatch {
                    name: cls.name.clone(),
                    expected: row_count,
                    found: cls.labels.len(),
                });
            }
        }
        Ok(FeatureTable {
            columns,
            class,
            row_count,
        })
    }

    pub fn row_count(&self) -> usize {
        self.row_count
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn column_names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn class(&self) -> Option<&ClassColumn> {
        self.class.as_ref()
    }

    pub fn require_class(&self) -> Result<&ClassColumn, TableError> {
        self.class.as_ref().ok_or(TableError::NoClass)
    }

    pub fn into_parts(self) -> (Vec<Column>, Option<ClassColumn>) {
        (self.columns, self.class)
    }

    /// Keeps only the named predictor columns, in the given order.
    pub fn select(&self, names: &[&str]) -> Result<FeatureTable, TableError> {
        let mut columns = Vec::with_capacity(names.len());
        for name in names {
            let c = self
                .column(name)
                .ok_or_else(|| TableError::UnknownColumn(name.to_string()))?;
            columns.push(c.clone());
        }
        FeatureTable::new(columns, self.class.clone())
    }

    /// Subset of rows, in the given order.
    pub fn take_rows(&self, rows: &[usize]) -> FeatureTable {
        FeatureTable {
            columns: self
                .columns
                .iter()
                .map(|c| Column {
                    name: c.name.clone(),
                    values: c.values.take_rows(rows),
                })
                .collect(),
            class: self.class.as_ref().map(|c| ClassColumn {
                name: c.name.clone(),
                labels: rows.iter().map(|&r| c.labels[r].clone()).collect(),
                order: c.order.clone(),
            }),
            row_count: rows.len(),
        }
    }

    pub fn with_class(self, class: ClassColumn) -> Result<FeatureTable, TableError> {
        FeatureTable::new(self.columns, Some(class))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mismatched_lengths_are_rejected() {
        let err = FeatureTable::new(
            vec![
                Column::nominal("a", [Some("x"), Some("y")]),
                Column::numeric("b", [Some(1.0)]),
            ],
            None,
        )
        .unwrap_err();
        assert!(matches!(err, TableError::RowCountMismatch { .. }));
    }

    #[test]
    fn class_order_must_cover_labels() {
        let err = ClassColumn::with_order("y", ["a", "z"], vec!["a".into(), "b".into()]).unwrap_err();
        assert_eq!(err, TableError::UnknownLabel("z".into()));
        let ok = ClassColumn::new("y", ["b", "a", "b"]);
        assert_eq!(ok.order, vec!["a".to_string(), "b".to_string()]);
        assert_eq!(ok.observed_classes(), 2);
    }

    #[test]
    fn duplicate_names_are_rejected() {
        let err = FeatureTable::new(
            vec![Column::numeric("a", [Some(1.0)]), Column::numeric("a", [Some(2.0)])],
            None,
        )
        .unwrap_err();
        assert_eq!(err, TableError::DuplicateColumn("a".into()));
    }

    #[test]
    fn constant_detection_treats_missing_as_value() {
        assert!(ColumnValues::Numeric(vec![None, None]).is_constant());
        assert!(!ColumnValues::Numeric(vec![None, Some(0.0)]).is_constant());
        let a = ColumnValues::Numeric(vec![Some(1.0), None]);
        assert!(a.same_values(&ColumnValues::Numeric(vec![Some(1.0), None])));
        assert!(!a.same_values(&ColumnValues::Nominal(vec![Some("1".into()), None])));
    }
}
