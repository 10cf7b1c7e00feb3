use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One CSV field. Non-finite numbers become `null` in JSON and read back
/// as NaN.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged, from = "CellRepr")]
pub enum Cell {
    Int(i64),
    Num(f64),
    Text(String),
}

#[derive(Deserialize)]
#[serde(untagged)]
enum CellRepr {
    Int(i64),
    Num(f64),
    Text(String),
    Null(()),
}

impl From<CellRepr> for Cell {
    fn from(r: CellRepr) -> Self {
        match r {
            CellRepr::Int(i) => Cell::Int(i),
            CellRepr::Num(x) => Cell::Num(x),
            CellRepr::Text(s) => Cell::Text(s),
            CellRepr::Null(()) => Cell::Num(f64::NAN),
        }
    }
}

impl Cell {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Int(i) => Some(*i as f64),
            Cell::Num(x) => Some(*x),
            Cell::Text(_) => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Cell::Text(s) => Some(s),
            _ => None,
        }
    }

    fn render(&self) -> String {
        match self {
            Cell::Int(i) => i.to_string(),
            // `Display` for f64 is the shortest round-trip form, so output is
            // both exact and stable across runs.
            Cell::Num(x) => x.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<u64> for Cell {
    fn from(x: u64) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::Text(x.to_string())
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Text(x.to_string())
    }
}

impl From<String> for Cell {
    fn from(x: String) -> Self {
        Cell::Text(x)
    }
}

/// Rows under fixed column names.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    /// Appends a row; panics if its length differs from the header, which is
    /// a bug in the calling runner.
    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width must match the header");
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    }

    /// Numeric column by name.
    pub fn numbers(&self, name: &str) -> Result<Vec<f64>> {
        let i = self.column_index(name)?;
        self.rows
            .iter()
            .map(|r| r[i].as_f64().ok_or_else(|| Error::Parse(format!("column {name} is not numeric"))))
            .collect()
    }

    /// Rows whose text column `name` equals `value`.
    pub fn filter(&self, name: &str, value: &str) -> Result<Table> {
        let i = self.column_index(name)?;
        Ok(Table {
            columns: self.columns.clone(),
            rows: self.rows.iter().filter(|r| r[i].as_str() == Some(value)).cloned().collect(),
        })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.columns)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::render))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Everything one experiment run produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub experiment: String,
    pub version: String,
    pub config: serde_json::Value,
    pub tables: BTreeMap<String, Table>,
    /// Non-tabular outputs such as trained models or distributions.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub artifacts: BTreeMap<String, serde_json::Value>,
}

impl Report {
    pub fn new(experiment: &str, config: &impl Serialize) -> Result<Self> {
        Ok(Report {
            experiment: experiment.to_string(),
            version: super::VERSION.to_string(),
            config: serde_json::to_value(config)?,
            tables: BTreeMap::new(),
            artifacts: BTreeMap::new(),
        })
    }

    pub fn table(&self, name: &str) -> Result<&Table> {
        self.tables.get(name).ok_or_else(|| Error::MissingColumn(format!("table {name}")))
    }

    /// Writes `<name>.csv` per table, `<name>.json` per artifact and
    /// `report.json` (which repeats everything) into `dir`, creating it if
    /// needed. Returns the written paths in a fixed order.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        for (name, table) in &self.tables {
            let p = dir.join(format!("{name}.csv"));
            table.write_csv(&p)?;
            written.push(p);
        }
        for (name, value) in &self.artifacts {
            let p = dir.join(format!("{name}.json"));
            std::fs::write(&p, serde_json::to_string_pretty(value)? + "\n")?;
            written.push(p);
        }
        let p = dir.join("report.json");
        let mut json = serde_json::to_string_pretty(self)?;
        json.push('\n');
        std::fs::write(&p, json)?;
        written.push(p);
        Ok(written)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_and_json_roundtrip() {
        let mut t = Table::new(&["method", "n", "value"]);
        t.push(vec!["a".into(), 3usize.into(), 0.1.into()]);
        t.push(vec!["b".into(), 4usize.into(), f64::NAN.into()]);
        let mut r = Report::new("demo", &serde_json::json!({"seed": 1})).unwrap();
        r.tables.insert("summary".into(), t.clone());
        let dir = tempfile::tempdir().unwrap();
        let files = r.write(dir.path()).unwrap();
        assert_eq!(files.len(), 2);
        let csv = std::fs::read_to_string(&files[0]).unwrap();
        assert_eq!(csv, "method,n,value\na,3,0.1\nb,4,NaN\n");
        let back: Report = serde_json::from_str(&std::fs::read_to_string(&files[1]).unwrap()).unwrap();
        assert_eq!(back.experiment, "demo");
        assert!(back.table("summary").unwrap().numbers("value").unwrap()[1].is_nan());
        assert_eq!(back.table("summary").unwrap().filter("method", "a").unwrap().numbers("value").unwrap(), vec![0.1]);
    }

    #[test]
    #[should_panic(expected = "row width")]
    fn ragged_rows_are_bugs() {
        Table::new(&["a", "b"]).push(vec![1usize.into()]);
    }
}
