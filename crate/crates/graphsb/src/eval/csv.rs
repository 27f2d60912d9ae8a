//! Dense row-major CSV persistence for operators and embeddings.
//! Values are written with enough digits to round-trip f64 exactly.

use std::path::Path;

use ndarray::Array2;

use crate::error::{Result, SbError};

pub fn write_matrix_csv(m: &Array2<f64>, path: &Path) -> Result<()> {
    let mut text = String::with_capacity(m.len() * 8);
    for row in m.rows() {
        let mut first = true;
        for &v in row {
            if !first {
                text.push(',');
            }
            first = false;
            // {:?} on f64 prints the shortest representation that
            // parses back to the identical bits
            text.push_str(&format!("{v:?}"));
        }
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_matrix_csv(path: &Path) -> Result<Array2<f64>> {
    let text = std::fs::read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| SbError::Parse {
                path: path.display().to_string(),
                line: lineno + 1,
                msg: e.to_string(),
            })?;
        if let Some(prev) = rows.first() {
            if row.len() != prev.len() {
                return Err(SbError::Parse {
                    path: path.display().to_string(),
                    line: lineno + 1,
                    msg: format!("expected {} columns, found {}", prev.len(), row.len()),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(SbError::Parse {
            path: path.display().to_string(),
            line: 0,
            msg: "empty matrix".into(),
        });
    }
    let (nr, nc) = (rows.len(), rows[0].len());
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Array2::from_shape_vec((nr, nc), flat).map_err(|e| SbError::Shape(e.to_string()))
}
