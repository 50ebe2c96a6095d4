//! CSV plumbing and number formatting shared by the CLI and the library.

use std::fs::File;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Formats `x` with 12 significant digits in plain decimal notation, falling
/// back to scientific notation outside `1e-6 ..= 1e15`.
pub fn fmt_num(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.11e}");
    let exp: i32 = sci
        .rsplit_once('e')
        .and_then(|(_, e)| e.parse().ok())
        .unwrap_or(0);
    if !(-6..=15).contains(&exp) {
        return sci;
    }
    let decimals = (11 - exp).max(0) as usize;
    let mut s = format!("{x:.decimals$}");
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    s
}

/// Pretty JSON with every non-integer number rounded to the 12 significant
/// digits of [`fmt_num`].
pub fn to_json_rounded<T: serde::Serialize>(value: &T) -> Result<String> {
    fn round(v: &mut serde_json::Value) {
        match v {
            serde_json::Value::Number(num) if num.is_f64() => {
                let x = num.as_f64().unwrap_or(f64::NAN);
                if let Some(r) = fmt_num(x).parse().ok().and_then(serde_json::Number::from_f64) {
                    *num = r;
                }
            }
            serde_json::Value::Array(items) => items.iter_mut().for_each(round),
            serde_json::Value::Object(map) => map.values_mut().for_each(round),
            _ => {}
        }
    }
    let mut v = serde_json::to_value(value)?;
    round(&mut v);
    let mut text = serde_json::to_string_pretty(&v)?;
    text.push('\n');
    Ok(text)
}

/// A numeric table read from a CSV file with a header row.
#[derive(Clone, Debug)]
pub struct NumericTable {
    pub path: PathBuf,
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl NumericTable {
    pub fn ncols(&self) -> usize {
        self.header.len()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h.eq_ignore_ascii_case(name))
    }
}

pub(crate) fn parse_error(path: &Path, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// Reads a CSV whose cells are all numeric. Errors carry the 1-based line and
/// column of the first bad cell.
pub fn read_numeric_csv(path: &Path) -> Result<NumericTable> {
    let file = File::open(path).map_err(|e| parse_error(path, format!("cannot open: {e}")))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| parse_error(path, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.is_empty() {
        return Err(parse_error(path, "missing header row"));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| parse_error(path, format!("line {line}: {e}")))?;
        if rec.len() != header.len() {
            return Err(parse_error(
                path,
                format!("line {line}: expected {} fields, found {}", header.len(), rec.len()),
            ));
        }
        let mut row = Vec::with_capacity(rec.len());
        for (c, cell) in rec.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| {
                parse_error(
                    path,
                    format!("line {line}, column {} ({}): non-numeric cell {cell:?}", c + 1, header[c]),
                )
            })?;
            if !v.is_finite() {
                return Err(parse_error(
                    path,
                    format!("line {line}, column {} ({}): non-finite value", c + 1, header[c]),
                ));
            }
            row.push(v);
        }
        rows.push(row);
    }
    Ok(NumericTable {
        path: path.to_path_buf(),
        header,
        rows,
    })
}
