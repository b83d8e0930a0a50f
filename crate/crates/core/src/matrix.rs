//! Named, group-tagged dense feature matrix shared by featurisation and the learners.

use std::collections::HashSet;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::artifact::sha256_hex;

#[derive(Debug, Error)]
pub enum MatrixError {
    #[error("duplicate column name `{0}`")]
    DuplicateColumn(String),
    #[error("row {row} has {got} values, expected {expected}")]
    RowWidth { row: usize, got: usize, expected: usize },
    #[error("non-finite value in row {row}, column `{column}`")]
    NonFinite { row: usize, column: String },
    #[error("schema mismatch: expected fingerprint {expected}, got {found}")]
    SchemaMismatch { expected: String, found: String },
    #[error("unknown feature group `{0}`")]
    UnknownGroup(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("parse error: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FeatureGroup {
    Demographics,
    DateTime,
    WordCounts,
    SpatialAggregates,
    TemporalAggregates,
    LspStats,
    Weather,
    LdaTopics,
    ManualTopics,
    Platform,
    Duplicate,
}

impl FeatureGroup {
    pub const ALL: [FeatureGroup; 11] = [
        FeatureGroup::Demographics,
        FeatureGroup::DateTime,
        FeatureGroup::WordCounts,
        FeatureGroup::SpatialAggregates,
        FeatureGroup::TemporalAggregates,
        FeatureGroup::LspStats,
        FeatureGroup::Weather,
        FeatureGroup::LdaTopics,
        FeatureGroup::ManualTopics,
        FeatureGroup::Platform,
        FeatureGroup::Duplicate,
    ];
}

impl fmt::Display for FeatureGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for FeatureGroup {
    type Err = MatrixError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FeatureGroup::ALL
            .into_iter()
            .find(|g| g.to_string().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| MatrixError::UnknownGroup(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub group: FeatureGroup,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSchema {
    columns: Vec<Column>,
}

impl FeatureSchema {
    pub fn new(columns: Vec<Column>) -> Result<Self, MatrixError> {
        let mut seen = HashSet::new();
        for c in &columns {
            if !seen.insert(c.name.as_str()) {
                return Err(MatrixError::DuplicateColumn(c.name.clone()));
            }
        }
        Ok(Self { columns })
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn group_of(&self, j: usize) -> FeatureGroup {
        self.columns[j].group
    }

    /// Stable identity of the ordered (name, group) list.
    pub fn fingerprint(&self) -> String {
        let mut text = String::new();
        for c in &self.columns {
            text.push_str(&c.name);
            text.push('\t');
            text.push_str(&c.group.to_string());
            text.push('\n');
        }
        sha256_hex(text.as_bytes())[..16].to_string()
    }

    /// Sidecar file: one `name,group` line per column.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), MatrixError> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["name", "group"])?;
        for c in &self.columns {
            wtr.write_record([c.name.as_str(), &c.group.to_string()])?;
        }
        wtr.flush().map_err(|e| MatrixError::Parse(e.to_string()))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self, MatrixError> {
        let mut rdr = csv::Reader::from_reader(r);
        let mut cols = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            cols.push(Column { name: rec[0].to_string(), group: rec[1].parse()? });
        }
        Self::new(cols)
    }
}

/// Dense row-major matrix with one row per alert.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    alert_ids: Vec<String>,
    schema: Arc<FeatureSchema>,
    values: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(schema: Arc<FeatureSchema>, alert_ids: Vec<String>, values: Vec<f64>) -> Result<Self, MatrixError> {
        let p = schema.len();
        if values.len() != alert_ids.len() * p {
            return Err(MatrixError::RowWidth {
                row: alert_ids.len(),
                got: values.len(),
                expected: alert_ids.len() * p,
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(MatrixError::NonFinite { row: pos / p.max(1), column: schema.columns[pos % p].name.clone() });
        }
        Ok(Self { alert_ids, schema, values })
    }

    pub fn empty(schema: Arc<FeatureSchema>) -> Self {
        Self { alert_ids: Vec::new(), schema, values: Vec::new() }
    }

    pub fn n_rows(&self) -> usize {
        self.alert_ids.len()
    }

    pub fn n_cols(&self) -> usize {
        self.schema.len()
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn schema_arc(&self) -> Arc<FeatureSchema> {
        Arc::clone(&self.schema)
    }

    pub fn alert_ids(&self) -> &[String] {
        &self.alert_ids
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.n_cols();
        &self.values[i * p..(i + 1) * p]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n_cols() + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows()).map(|i| self.get(i, j)).collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn select_rows(&self, rows: &[usize]) -> FeatureMatrix {
        let p = self.n_cols();
        let mut values = Vec::with_capacity(rows.len() * p);
        for &i in rows {
            values.extend_from_slice(self.row(i));
        }
        FeatureMatrix {
            alert_ids: rows.iter().map(|&i| self.alert_ids[i].clone()).collect(),
            schema: Arc::clone(&self.schema),
            values,
        }
    }

    /// Applies `f` to every value of column `j`.
    pub fn map_column(&mut self, j: usize, f: impl Fn(f64) -> f64) {
        let p = self.n_cols();
        for i in 0..self.n_rows() {
            self.values[i * p + j] = f(self.values[i * p + j]);
        }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), MatrixError> {
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["alert_id".to_string()];
        header.extend(self.schema.columns.iter().map(|c| c.name.clone()));
        wtr.write_record(&header)?;
        for i in 0..self.n_rows() {
            let mut rec = vec![self.alert_ids[i].clone()];
            rec.extend(self.row(i).iter().map(|v| v.to_string()));
            wtr.write_record(&rec)?;
        }
        wtr.flush().map_err(|e| MatrixError::Parse(e.to_string()))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R, schema: Arc<FeatureSchema>) -> Result<Self, MatrixError> {
        let mut rdr = csv::Reader::from_reader(r);
        let header = rdr.headers()?.clone();
        let names: Vec<&str> = header.iter().skip(1).collect();
        let expected: Vec<&str> = schema.columns.iter().map(|c| c.name.as_str()).collect();
        if names != expected {
            return Err(MatrixError::Parse("matrix header does not match schema".into()));
        }
        let mut ids = Vec::new();
        let mut values = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != expected.len() + 1 {
                return Err(MatrixError::RowWidth { row, got: rec.len() - 1, expected: expected.len() });
            }
            ids.push(rec[0].to_string());
            for v in rec.iter().skip(1) {
                values.push(v.parse::<f64>().map_err(|e| MatrixError::Parse(e.to_string()))?);
            }
        }
        Self::new(schema, ids, values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> Arc<FeatureSchema> {
        Arc::new(
            FeatureSchema::new(vec![
                Column { name: "a".into(), group: FeatureGroup::Weather },
                Column { name: "b".into(), group: FeatureGroup::Platform },
            ])
            .unwrap(),
        )
    }

    #[test]
    fn rejects_duplicates_and_nan() {
        let dup = vec![
            Column { name: "a".into(), group: FeatureGroup::Weather },
            Column { name: "a".into(), group: FeatureGroup::Weather },
        ];
        assert!(matches!(FeatureSchema::new(dup), Err(MatrixError::DuplicateColumn(_))));
        let err = FeatureMatrix::new(schema(), vec!["x".into()], vec![1.0, f64::NAN]).unwrap_err();
        assert!(matches!(err, MatrixError::NonFinite { row: 0, .. }));
    }

    #[test]
    fn csv_round_trip_with_sidecar() {
        let m = FeatureMatrix::new(schema(), vec!["x".into(), "y".into()], vec![1.5, 0.0, -2.25, 1.0]).unwrap();
        let mut side = Vec::new();
        m.schema().write_csv(&mut side).unwrap();
        let s = Arc::new(FeatureSchema::read_csv(side.as_slice()).unwrap());
        assert_eq!(s.fingerprint(), m.schema().fingerprint());
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        assert_eq!(FeatureMatrix::read_csv(buf.as_slice(), s).unwrap(), m);
    }

    #[test]
    fn fingerprint_tracks_order_and_groups() {
        let a = schema();
        let b = FeatureSchema::new(vec![
            Column { name: "a".into(), group: FeatureGroup::Weather },
            Column { name: "b".into(), group: FeatureGroup::Duplicate },
        ])
        .unwrap();
        assert_ne!(a.fingerprint(), b.fingerprint());
    }
}
