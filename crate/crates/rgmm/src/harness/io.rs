//! CSV dataset ingestion and emission.
//!
//! Format: comma-separated numeric rows with a decimal point, an optional
//! non-numeric header line, and an optional trailing integer label column.

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Parses a CSV file into a sample matrix, splitting off the trailing
/// integer label column when `has_labels` is set. A first line that fails
/// numeric parsing is treated as a header and skipped. Row and column
/// numbers in errors are 1-based.
pub fn load_dataset(
    path: impl AsRef<Path>,
    has_labels: bool,
) -> Result<(DMatrix<f64>, Option<Vec<usize>>)> {
    let text = std::fs::read_to_string(path.as_ref())?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    let mut width: Option<usize> = None;

    for (line_idx, line) in text.lines().enumerate() {
        let row_no = line_idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed: std::result::Result<Vec<f64>, (usize, String)> = cells
            .iter()
            .enumerate()
            .map(|(c, cell)| {
                cell.parse::<f64>()
                    .map_err(|_| (c + 1, format!("not a number: {cell:?}")))
            })
            .collect();
        let values = match parsed {
            Ok(values) => values,
            Err((column, message)) => {
                // only the first line may be a non-numeric header
                if rows.is_empty() && line_idx == 0 {
                    continue;
                }
                return Err(Error::Parse {
                    row: row_no,
                    column,
                    message,
                });
            }
        };

        match width {
            None => width = Some(values.len()),
            Some(w) if w != values.len() => {
                return Err(Error::Parse {
                    row: row_no,
                    column: values.len(),
                    message: format!("ragged row: expected {w} cells, got {}", values.len()),
                });
            }
            _ => {}
        }

        if has_labels {
            let label = *values.last().ok_or_else(|| Error::Parse {
                row: row_no,
                column: 1,
                message: "empty row".into(),
            })?;
            if label.fract() != 0.0 || label < 0.0 {
                return Err(Error::Parse {
                    row: row_no,
                    column: values.len(),
                    message: format!("label must be a nonnegative integer, got {label}"),
                });
            }
            labels.push(label as usize);
            rows.push(values[..values.len() - 1].to_vec());
        } else {
            rows.push(values);
        }
    }

    if rows.is_empty() {
        return Err(Error::Parse {
            row: 0,
            column: 0,
            message: "no data rows".into(),
        });
    }
    let d = rows[0].len();
    if d == 0 {
        return Err(Error::Parse {
            row: 1,
            column: 1,
            message: "rows have no feature columns".into(),
        });
    }
    let n = rows.len();
    let data = DMatrix::from_fn(n, d, |i, j| rows[i][j]);
    Ok((data, has_labels.then_some(labels)))
}

/// Writes a dataset as CSV, with labels as a trailing integer column.
/// Feature values use the shortest round-trip representation.
pub fn write_dataset(
    path: impl AsRef<Path>,
    data: &DMatrix<f64>,
    labels: Option<&[usize]>,
) -> Result<()> {
    if let Some(labels) = labels {
        if labels.len() != data.nrows() {
            return Err(Error::InvalidParameter(
                "label count does not match rows".into(),
            ));
        }
    }
    let mut file = std::io::BufWriter::new(std::fs::File::create(path.as_ref())?);
    for i in 0..data.nrows() {
        let mut cells: Vec<String> = (0..data.ncols())
            .map(|j| data[(i, j)].to_string())
            .collect();
        if let Some(labels) = labels {
            cells.push(labels[i].to_string());
        }
        writeln!(file, "{}", cells.join(","))?;
    }
    Ok(())
}

/// Z-scores each feature in place: subtract the column mean and divide by the
/// population standard deviation; constant columns are centered only.
pub fn standardize(data: &mut DMatrix<f64>) {
    let (n, d) = data.shape();
    if n == 0 {
        return;
    }
    for c in 0..d {
        let mut col = data.column_mut(c);
        let mean = col.iter().sum::<f64>() / n as f64;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let std = var.sqrt();
        for v in col.iter_mut() {
            *v -= mean;
            if std > 0.0 {
                *v /= std;
            }
        }
    }
}
