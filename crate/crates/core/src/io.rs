//! CSV readers, deterministic CSV/JSON writers and the flat `key = value` config format.
//!
//! Reals are written in the shortest form that parses back to the same `f64`; `-0` is
//! written as `0`. Indices in written files are 1-based.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use serde_value::Value;

use crate::error::{Error, Result};
use crate::model::{CoefficientVector, DesignMatrix};

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io { path: path.to_path_buf(), source }
}

fn parse_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Parse { path: path.to_path_buf(), message: message.into() }
}

/// Numeric table with an optional header row of labels.
#[derive(Debug, Clone)]
pub struct NumericTable {
    pub header: Option<Vec<String>>,
    pub rows: Vec<Vec<f64>>,
}

pub fn parse_numeric_csv(text: &str, path: &Path) -> Result<NumericTable> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut header: Option<Vec<String>> = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| parse_err(path, e.to_string()))?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(values) => {
                if let Some(col) = values.iter().position(|v| !v.is_finite()) {
                    return Err(parse_err(path, format!("non-finite value at line {}, column {}", line + 1, col + 1)));
                }
                if let Some(first) = rows.first() {
                    if first.len() != values.len() {
                        return Err(parse_err(
                            path,
                            format!("line {} has {} fields, expected {}", line + 1, values.len(), first.len()),
                        ));
                    }
                }
                rows.push(values);
            }
            Err(_) if line == 0 => header = Some(record.iter().map(str::to_string).collect()),
            Err(_) => {
                let bad = record.iter().position(|f| f.parse::<f64>().is_err()).unwrap_or(0);
                return Err(parse_err(
                    path,
                    format!("line {}, column {}: not a number: {:?}", line + 1, bad + 1, &record[bad]),
                ));
            }
        }
    }
    if rows.is_empty() {
        return Err(parse_err(path, "no data rows"));
    }
    if let Some(h) = &header {
        if h.len() != rows[0].len() {
            return Err(parse_err(
                path,
                format!("header has {} labels but rows have {} fields", h.len(), rows[0].len()),
            ));
        }
    }
    Ok(NumericTable { header, rows })
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| io_err(path, e))
}

pub fn read_design_csv(path: &Path) -> Result<DesignMatrix> {
    let table = parse_numeric_csv(&read_text(path)?, path)?;
    let (n, p) = (table.rows.len(), table.rows[0].len());
    let x = DMatrix::from_fn(n, p, |i, j| table.rows[i][j]);
    let design = DesignMatrix::new(x).map_err(|e| parse_err(path, e.to_string()))?;
    match table.header {
        Some(labels) => design.with_labels(labels),
        None => Ok(design),
    }
}

/// Single-column CSV, optional header.
pub fn read_vector_csv(path: &Path) -> Result<DVector<f64>> {
    let table = parse_numeric_csv(&read_text(path)?, path)?;
    if table.rows[0].len() != 1 {
        return Err(parse_err(path, format!("expected one column, found {}", table.rows[0].len())));
    }
    Ok(DVector::from_iterator(table.rows.len(), table.rows.iter().map(|r| r[0])))
}

/// Shortest round-trip decimal form of a finite real.
pub fn format_real(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if (1e-5..1e16).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// Rows of already formatted CSV cells under a header.
#[derive(Debug, Clone, Default)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn to_csv_string(&self) -> String {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 cells")
    }
}

/// `index,value` rows with 1-based indices.
pub fn coefficient_table(beta: &CoefficientVector) -> Result<CsvTable> {
    let mut t = CsvTable::new(&["index", "value"]);
    for (k, v) in beta.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NonFiniteReport(format!("value[{}]", k + 1)));
        }
        t.push(vec![(k + 1).to_string(), format_real(*v)]);
    }
    Ok(t)
}

/// Rejects NaN and infinities and rewrites `-0` as `0`, naming the first offending field.
fn sanitize(value: Value, at: &str) -> Result<Value> {
    Ok(match value {
        Value::F64(v) if !v.is_finite() => return Err(Error::NonFiniteReport(at.to_string())),
        Value::F32(v) if !v.is_finite() => return Err(Error::NonFiniteReport(at.to_string())),
        // x + 0.0 maps -0 to +0 and leaves everything else alone
        Value::F64(v) => Value::F64(v + 0.0),
        Value::F32(v) => Value::F32(v + 0.0),
        Value::Option(Some(inner)) => Value::Option(Some(Box::new(sanitize(*inner, at)?))),
        Value::Newtype(inner) => Value::Newtype(Box::new(sanitize(*inner, at)?)),
        Value::Seq(items) => Value::Seq(
            items.into_iter().enumerate().map(|(i, v)| sanitize(v, &format!("{at}[{i}]"))).collect::<Result<_>>()?,
        ),
        Value::Map(map) => {
            let mut out = BTreeMap::new();
            for (k, v) in map {
                let name = match &k {
                    Value::String(s) => s.clone(),
                    other => format!("{other:?}"),
                };
                let path = if at.is_empty() { name } else { format!("{at}.{name}") };
                out.insert(k, sanitize(v, &path)?);
            }
            Value::Map(out)
        }
        other => other,
    })
}

/// Pretty JSON with a trailing newline and keys sorted at every level.
pub fn to_json_string<T: Serialize>(report: &T) -> Result<String> {
    let value = serde_value::to_value(report).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let clean = sanitize(value, "")?;
    let mut s = serde_json::to_string_pretty(&clean).map_err(|e| Error::InvalidInput(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn write_text(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| io_err(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, report: &T) -> Result<()> {
    write_text(path, &to_json_string(report)?)
}

pub fn write_csv(path: &Path, table: &CsvTable) -> Result<()> {
    write_text(path, &table.to_csv_string())
}

/// Flat `key = value` lines; `#` starts a comment, blank lines are ignored.
/// Duplicate keys are an error.
pub fn parse_key_values(text: &str, path: &Path) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) =
            line.split_once('=').ok_or_else(|| parse_err(path, format!("line {}: expected `key = value`", i + 1)))?;
        let key = key.trim();
        if key.is_empty() {
            return Err(parse_err(path, format!("line {}: empty key", i + 1)));
        }
        if out.insert(key.to_string(), value.trim().to_string()).is_some() {
            return Err(parse_err(path, format!("line {}: duplicate key `{key}`", i + 1)));
        }
    }
    Ok(out)
}

pub fn read_key_values(path: &Path) -> Result<BTreeMap<String, String>> {
    parse_key_values(&read_text(path)?, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;

    fn p() -> PathBuf {
        PathBuf::from("mem.csv")
    }

    #[test]
    fn coefficient_csv_layout() {
        let beta = CoefficientVector::from_vec(vec![2.0, 0.0, -0.5]);
        assert_eq!(coefficient_table(&beta).unwrap().to_csv_string(), "index,value\n1,2\n2,0\n3,-0.5\n");
    }

    #[test]
    fn reals_round_trip() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02e23, 1e16, 123456.789, f64::MIN_POSITIVE, -1e-5] {
            assert_eq!(format_real(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(format_real(-0.0), "0");
        assert_eq!(format_real(2.0), "2");
        assert_eq!(format_real(1e-7), "1e-7");
    }

    #[test]
    fn header_is_optional() {
        let t = parse_numeric_csv("a,b\n1,2\n3,4\n", &p()).unwrap();
        assert_eq!(t.header.unwrap(), vec!["a", "b"]);
        assert_eq!(t.rows, vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
        let t = parse_numeric_csv("1, 2\n3,4", &p()).unwrap();
        assert!(t.header.is_none());
        assert_eq!(t.rows.len(), 2);
    }

    #[test]
    fn rejects_non_finite_and_ragged() {
        assert!(parse_numeric_csv("1,NaN\n", &p()).is_err());
        assert!(parse_numeric_csv("1,inf\n", &p()).is_err());
        assert!(parse_numeric_csv("1,2\n3\n", &p()).is_err());
        assert!(parse_numeric_csv("1,2\nx,3\n", &p()).is_err());
        assert!(parse_numeric_csv("a,b\n", &p()).is_err());
    }

    #[derive(Serialize)]
    struct Report {
        name: &'static str,
        values: Vec<f64>,
        nested: Option<f64>,
    }

    #[test]
    fn json_refuses_nan_and_normalizes_zero() {
        let ok = Report { name: "x", values: vec![-0.0, 1.5], nested: None };
        let s = to_json_string(&ok).unwrap();
        assert!(s.contains("0.0") && !s.contains("-0"));
        assert_eq!(s, to_json_string(&ok).unwrap());
        let bad = Report { name: "x", values: vec![1.0, f64::NAN], nested: None };
        match to_json_string(&bad) {
            Err(Error::NonFiniteReport(at)) => assert_eq!(at, "values[1]"),
            other => panic!("{other:?}"),
        }
        let bad = Report { name: "x", values: vec![], nested: Some(f64::INFINITY) };
        assert!(matches!(to_json_string(&bad), Err(Error::NonFiniteReport(_))));
    }

    #[test]
    fn key_values() {
        let m = parse_key_values("# comment\nseed = 7\n n=200 # trailing\n\n", &p()).unwrap();
        assert_eq!(m["seed"], "7");
        assert_eq!(m["n"], "200");
        assert!(parse_key_values("seed 7", &p()).is_err());
        assert!(parse_key_values("a=1\na=2", &p()).is_err());
    }

    #[test]
    fn files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub/x.csv");
        write_text(&path, "c1,c2\n1,0\n0,2\n3,1\n").unwrap();
        let d = read_design_csv(&path).unwrap();
        assert_eq!((d.n(), d.p()), (3, 2));
        assert_eq!(d.labels().unwrap(), &["c1".to_string(), "c2".to_string()]);
        write_text(&path, "y\n1\n2\n").unwrap();
        assert_eq!(read_vector_csv(&path).unwrap().as_slice(), &[1.0, 2.0]);
        assert!(matches!(read_vector_csv(&dir.path().join("missing.csv")), Err(Error::Io { .. })));
    }
}
