//! Tabular results and their CSV/JSON serialization.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use crate::config::Format;
use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
}

impl Cell {
    /// Round-trip decimal form, 17 significant digits.
    fn csv(&self) -> String {
        match self {
            Cell::Num(x) if x.is_nan() => "NaN".into(),
            Cell::Num(x) if x.is_infinite() => if *x > 0.0 { "inf" } else { "-inf" }.into(),
            Cell::Num(x) => format!("{x:.16e}"),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Num(x) if x.is_finite() => json!(x),
            Cell::Num(_) => Value::Null,
            Cell::Int(i) => json!(i),
            Cell::Text(s) => json!(s),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<Option<f64>> for Cell {
    fn from(x: Option<f64>) -> Self {
        Cell::Num(x.unwrap_or(f64::NAN))
    }
}

impl From<usize> for Cell {
    fn from(i: usize) -> Self {
        Cell::Int(i as i64)
    }
}

impl From<bool> for Cell {
    fn from(b: bool) -> Self {
        Cell::Int(b as i64)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

#[derive(Debug, Clone)]
pub struct Provenance {
    pub experiment: String,
    pub config_hash: String,
    pub version: String,
    pub timestamp: String,
}

#[derive(Debug, Clone)]
pub struct ResultTable {
    /// Suffix appended to the output stem; empty for the primary table.
    pub name: String,
    pub columns: Vec<(String, String)>,
    pub rows: Vec<Vec<Cell>>,
}

impl ResultTable {
    pub fn new(name: &str, columns: &[(&str, &str)]) -> Self {
        ResultTable {
            name: name.to_string(),
            columns: columns.iter().map(|(n, u)| (n.to_string(), u.to_string())).collect(),
            rows: Vec::new(),
        }
    }

    pub fn add_column(&mut self, name: impl Into<String>, unit: &str) {
        self.columns.push((name.into(), unit.to_string()));
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width does not match table `{}`", self.name);
        self.rows.push(row);
    }

    pub fn to_csv(&self, prov: &Provenance) -> String {
        let mut out = String::new();
        out.push_str(&format!("# experiment: {}\n", prov.experiment));
        if !self.name.is_empty() {
            out.push_str(&format!("# table: {}\n", self.name));
        }
        out.push_str(&format!("# config_sha256: {}\n", prov.config_hash));
        out.push_str(&format!("# version: {}\n", prov.version));
        out.push_str(&format!("# generated: {}\n", prov.timestamp));
        let units: Vec<String> = self.columns.iter().map(|(n, u)| format!("{n}[{u}]")).collect();
        out.push_str(&format!("# units: {}\n", units.join(" ")));
        let names: Vec<&str> = self.columns.iter().map(|(n, _)| n.as_str()).collect();
        out.push_str(&names.join(","));
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::csv).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self, prov: &Provenance) -> String {
        let doc = json!({
            "experiment": prov.experiment,
            "table": self.name,
            "provenance": {
                "config_sha256": prov.config_hash,
                "version": prov.version,
                "generated": prov.timestamp,
            },
            "columns": self.columns.iter().map(|(n, u)| json!({"name": n, "unit": u})).collect::<Vec<_>>(),
            "rows": self.rows.iter().map(|r| r.iter().map(Cell::json).collect::<Vec<_>>()).collect::<Vec<_>>(),
        });
        let mut s = serde_json::to_string_pretty(&doc).expect("table serializes");
        s.push('\n');
        s
    }
}

/// `out.csv` + table `s_x` -> `out_s_x.csv`.
pub fn table_path(base: &Path, name: &str) -> PathBuf {
    if name.is_empty() {
        return base.to_path_buf();
    }
    let stem = base.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    let file = match base.extension().and_then(|e| e.to_str()) {
        Some(ext) => format!("{stem}_{name}.{ext}"),
        None => format!("{stem}_{name}"),
    };
    base.with_file_name(file)
}

pub fn write_tables(
    tables: &[ResultTable],
    base: &Path,
    format: Format,
    prov: &Provenance,
) -> Result<Vec<PathBuf>, CliError> {
    let mut written = Vec::new();
    for t in tables {
        let path = table_path(base, &t.name);
        let text = match format {
            Format::Csv => t.to_csv(prov),
            Format::Json => t.to_json(prov),
        };
        fs::write(&path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prov() -> Provenance {
        Provenance { experiment: "sweep".into(), config_hash: "ab".into(), version: "v0".into(), timestamp: "t".into() }
    }

    #[test]
    fn csv_round_trips_doubles() {
        let mut t = ResultTable::new("", &[("x", "1"), ("y", "1")]);
        let x = 0.1 + 0.2;
        t.push(vec![x.into(), f64::NAN.into()]);
        let csv = t.to_csv(&prov());
        let last = csv.lines().last().unwrap();
        let back: f64 = last.split(',').next().unwrap().parse().unwrap();
        assert_eq!(back, x);
        assert!(last.ends_with("NaN"));
        assert!(csv.lines().filter(|l| l.starts_with('#')).count() >= 4);
    }

    #[test]
    #[should_panic]
    fn ragged_rows_are_rejected() {
        let mut t = ResultTable::new("", &[("x", "1")]);
        t.push(vec![1.0.into(), 2.0.into()]);
    }

    #[test]
    fn json_nulls_missing_values() {
        let mut t = ResultTable::new("a", &[("x", "1")]);
        t.push(vec![None.into()]);
        let v: Value = serde_json::from_str(&t.to_json(&prov())).unwrap();
        assert!(v["rows"][0][0].is_null());
    }

    #[test]
    fn suffixed_paths() {
        assert_eq!(table_path(Path::new("/a/out.csv"), "s_x"), PathBuf::from("/a/out_s_x.csv"));
        assert_eq!(table_path(Path::new("out"), "p"), PathBuf::from("out_p"));
        assert_eq!(table_path(Path::new("o.json"), ""), PathBuf::from("o.json"));
    }
}
