//! CSV ingestion and emission: one point per row, optional header row.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;

use crate::data::{DataMatrix, LabelVector};
use crate::error::{Error, Result};

fn read_records(path: &Path) -> Result<Vec<csv::StringRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut records = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            row: row + 1,
            message: e.to_string(),
        })?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        records.push(rec);
    }
    Ok(records)
}

fn is_numeric_row(rec: &csv::StringRecord) -> bool {
    rec.iter().all(|f| f.parse::<f64>().is_ok())
}

fn parse_numeric_rows(path: &Path) -> Result<Vec<Vec<f64>>> {
    let records = read_records(path)?;
    let parse_err = |row: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        row,
        message,
    };
    let skip = usize::from(records.first().is_some_and(|r| !is_numeric_row(r)));
    let mut rows = Vec::with_capacity(records.len());
    let mut width = None;
    for (idx, rec) in records.iter().enumerate().skip(skip) {
        let row_no = idx + 1;
        let w = *width.get_or_insert(rec.len());
        if rec.len() != w {
            return Err(parse_err(
                row_no,
                format!("expected {w} fields, found {}", rec.len()),
            ));
        }
        let values = rec
            .iter()
            .enumerate()
            .map(|(c, f)| {
                let v: f64 = f
                    .parse()
                    .map_err(|_| parse_err(row_no, format!("field {} is not numeric: {f:?}", c + 1)))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(parse_err(row_no, format!("field {} is not finite", c + 1)))
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(values);
    }
    if rows.is_empty() {
        return Err(parse_err(0, "no data rows".into()));
    }
    Ok(rows)
}

/// Reads a point set with one point per row.
pub fn load_csv(path: impl AsRef<Path>) -> Result<DataMatrix> {
    let rows = parse_numeric_rows(path.as_ref())?;
    DataMatrix::from_points(&rows)
}

/// Writes a point set with one point per row. Values use the shortest
/// representation that parses back to the same `f64`.
pub fn save_csv(path: impl AsRef<Path>, x: &DataMatrix) -> Result<()> {
    save_columns(path, x.as_matrix())
}

/// Writes each column of `m` as one CSV row.
pub fn save_columns(path: impl AsRef<Path>, m: &DMatrix<f64>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for col in m.column_iter() {
        let line: Vec<String> = col.iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

/// Reads one integer label per row; a non-numeric first row is a header.
pub fn load_labels(path: impl AsRef<Path>) -> Result<LabelVector> {
    let path = path.as_ref();
    let rows = parse_numeric_rows(path)?;
    let mut labels = Vec::with_capacity(rows.len());
    for (idx, row) in rows.iter().enumerate() {
        let v = row[0];
        if row.len() != 1 || v < 0.0 || v.fract() != 0.0 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                row: idx + 1,
                message: format!("expected a single non-negative integer label, got {row:?}"),
            });
        }
        labels.push(v as usize);
    }
    Ok(LabelVector::from_vec(labels))
}

pub fn save_labels(path: impl AsRef<Path>, labels: &LabelVector) -> Result<()> {
    let mut out = String::with_capacity(labels.len() * 3);
    for l in labels.as_slice() {
        out.push_str(&l.to_string());
        out.push('\n');
    }
    write_atomic(path.as_ref(), out.as_bytes())
}

/// Writes through a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    let mut f = File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}
