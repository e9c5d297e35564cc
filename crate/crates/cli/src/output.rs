//! Tabular artifacts: CSV with `#` metadata lines, or a JSON document.

use std::path::Path;

use serde_json::{json, Value};

use emech_core::estimation::DataSeries;
use emech_core::DataSeriesF64;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Bool(bool),
    Text(String),
    Empty,
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Self::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Self::Int(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Self::Bool(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Self::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Self::Text(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Self::Empty, Self::Num)
    }
}

impl Cell {
    /// 17 significant digits, so values re-parse to the same `f64`.
    fn csv_text(&self) -> String {
        match self {
            Self::Num(v) => format_float(*v),
            Self::Int(v) => v.to_string(),
            Self::Bool(v) => v.to_string(),
            Self::Text(s) => s.clone(),
            Self::Empty => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Self::Num(v) if v.is_finite() => json!(v),
            Self::Num(_) | Self::Empty => Value::Null,
            Self::Int(v) => json!(v),
            Self::Bool(v) => json!(v),
            Self::Text(s) => json!(s),
        }
    }
}

/// Negative zero prints as `0`.
pub fn format_float(v: f64) -> String {
    let v = if v == 0.0 { 0.0 } else { v };
    format!("{v:.16e}")
}

/// Column names carry their unit as a suffix (`delta_hz`, `time_s`).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub metadata: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self { metadata: Vec::new(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn meta(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.metadata.push((key.to_string(), value.to_string()));
        self
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// Values of a numeric column; non-numeric cells become NaN.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(
            self.rows
                .iter()
                .map(|r| match r[j] {
                    Cell::Num(v) => v,
                    Cell::Int(v) => v as f64,
                    _ => f64::NAN,
                })
                .collect(),
        )
    }
}

/// Fixed header written ahead of a table's own metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub command: String,
    pub config_sha256: Option<String>,
    pub seed: u64,
}

pub fn render_csv(table: &Table, prov: &Provenance) -> Result<Vec<u8>, CliError> {
    let mut out = Vec::new();
    out.extend_from_slice(format!("# command: {}\n", prov.command).as_bytes());
    out.extend_from_slice(format!("# config_sha256: {}\n", prov.config_sha256.as_deref().unwrap_or("none")).as_bytes());
    out.extend_from_slice(format!("# seed: {}\n", prov.seed).as_bytes());
    for (k, v) in &table.metadata {
        out.extend_from_slice(format!("# {k}: {}\n", v.replace('\n', " ")).as_bytes());
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(&table.columns)?;
    for row in &table.rows {
        w.write_record(row.iter().map(Cell::csv_text))?;
    }
    w.into_inner().map_err(|e| CliError::Io(e.to_string()))
}

pub fn render_json(table: &Table, prov: &Provenance) -> Result<Vec<u8>, CliError> {
    let metadata: serde_json::Map<String, Value> =
        table.metadata.iter().map(|(k, v)| (k.clone(), json!(v))).collect();
    let rows: Vec<Value> = table.rows.iter().map(|r| Value::Array(r.iter().map(Cell::json).collect())).collect();
    let doc = json!({
        "command": prov.command,
        "config_sha256": prov.config_sha256,
        "seed": prov.seed,
        "metadata": metadata,
        "columns": table.columns,
        "rows": rows,
    });
    let mut out = serde_json::to_vec_pretty(&doc).map_err(|e| CliError::Io(e.to_string()))?;
    out.push(b'\n');
    Ok(out)
}

/// Reads `x, y[, y_sigma]` from the first columns of a CSV written by
/// `synth` or any file with one header row and `#` comment lines.
pub fn read_series(path: &Path) -> Result<DataSeriesF64, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .has_headers(true)
        .from_path(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let (mut x, mut y, mut s) = (Vec::new(), Vec::new(), Vec::new());
    let mut with_sigma = None;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let num = |j: usize| -> Result<f64, CliError> {
            let text = rec.get(j).ok_or_else(|| CliError::Config(format!("row {}: missing column {}", i + 1, j + 1)))?;
            text.trim().parse().map_err(|_| CliError::Config(format!("row {}: `{text}` is not a number", i + 1)))
        };
        x.push(num(0)?);
        y.push(num(1)?);
        let has = rec.len() > 2 && !rec[2].trim().is_empty();
        if *with_sigma.get_or_insert(has) != has {
            return Err(CliError::Config(format!("row {}: y_sigma present on some rows only", i + 1)));
        }
        if has {
            s.push(num(2)?);
        }
    }
    DataSeries::new(x, y, with_sigma.unwrap_or(false).then_some(s)).map_err(CliError::from)
}

pub fn write_artifact(bytes: &[u8], out: Option<&Path>) -> Result<(), CliError> {
    use std::io::Write;
    match out {
        Some(p) => std::fs::write(p, bytes).map_err(|e| CliError::Io(format!("{}: {e}", p.display()))),
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            lock.write_all(bytes)?;
            lock.flush()?;
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prov() -> Provenance {
        Provenance { command: "test".into(), config_sha256: None, seed: 3 }
    }

    #[test]
    fn floats_survive_a_csv_round_trip() {
        let vals = [0.1, 1.0 / 3.0, -2.5e-300, 5.343e9 + 0.123, f64::MIN_POSITIVE, 123_456_789.123_456_79];
        for v in vals {
            assert_eq!(format_float(v).parse::<f64>().unwrap(), v);
        }
        let dir = tempfile::tempdir().unwrap();
        let mut t = Table::new(&["x_hz", "y"]);
        for (i, v) in vals.iter().enumerate() {
            t.push(vec![Cell::Num(i as f64), Cell::Num(*v)]);
        }
        let path = dir.path().join("t.csv");
        std::fs::write(&path, render_csv(&t, &prov()).unwrap()).unwrap();
        let back = read_series(&path).unwrap();
        assert_eq!(back.y, vals.to_vec());
        assert!(back.y_sigma.is_none());
    }

    #[test]
    fn csv_starts_with_metadata() {
        let mut t = Table::new(&["a"]);
        t.meta("note", "x");
        t.push(vec![Cell::Bool(true)]);
        let text = String::from_utf8(render_csv(&t, &prov()).unwrap()).unwrap();
        assert_eq!(text, "# command: test\n# config_sha256: none\n# seed: 3\n# note: x\na\ntrue\n");
    }

    #[test]
    fn json_maps_missing_values_to_null() {
        let mut t = Table::new(&["a", "b"]);
        t.push(vec![Cell::Num(f64::NAN), Cell::Empty]);
        let doc: Value = serde_json::from_slice(&render_json(&t, &prov()).unwrap()).unwrap();
        assert_eq!(doc["rows"][0], json!([null, null]));
        assert_eq!(doc["seed"], json!(3));
    }
}
