//! Plain-text loaders: edge list ("u v" per line), feature rows
//! (comma-separated reals) and label file (one class id per line).
//! Lines starting with '#' are treated as headers and skipped.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use ndarray::Array2;

use super::Graph;
use crate::error::{Result, SbError};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub self_loops_dropped: usize,
    pub duplicate_edges_dropped: usize,
}

fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let file = File::open(path)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        out.push((i + 1, trimmed.to_string()));
    }
    Ok(out)
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> SbError {
    SbError::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

pub fn load_graph(
    edge_path: &Path,
    feature_path: &Path,
    label_path: &Path,
) -> Result<(Graph, LoadReport)> {
    let mut labels = Vec::new();
    for (lineno, line) in read_lines(label_path)? {
        let label: usize = line
            .parse()
            .map_err(|e| parse_err(label_path, lineno, format!("bad label: {e}")))?;
        labels.push(label);
    }
    let n = labels.len();

    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in read_lines(feature_path)? {
        let row: std::result::Result<Vec<f64>, _> =
            line.split(',').map(|t| t.trim().parse::<f64>()).collect();
        let row = row.map_err(|e| parse_err(feature_path, lineno, format!("bad feature: {e}")))?;
        rows.push(row);
    }
    if rows.len() != n {
        return Err(SbError::Shape(format!(
            "{} feature rows but {} labels",
            rows.len(),
            n
        )));
    }
    let p0 = rows.first().map_or(0, |r| r.len());
    let mut features = Array2::zeros((n, p0));
    for (i, row) in rows.iter().enumerate() {
        if row.len() != p0 {
            return Err(SbError::Shape(format!(
                "feature row {i} has {} columns, expected {p0}",
                row.len()
            )));
        }
        for (j, &x) in row.iter().enumerate() {
            features[[i, j]] = x;
        }
    }

    let mut report = LoadReport::default();
    let mut edges = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (lineno, line) in read_lines(edge_path)? {
        let mut it = line.split_whitespace();
        let (u, v) = match (it.next(), it.next()) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(parse_err(edge_path, lineno, "expected two node ids")),
        };
        let u: usize = u
            .parse()
            .map_err(|e| parse_err(edge_path, lineno, format!("bad node id: {e}")))?;
        let v: usize = v
            .parse()
            .map_err(|e| parse_err(edge_path, lineno, format!("bad node id: {e}")))?;
        if u >= n {
            return Err(SbError::NodeOutOfRange { id: u, n });
        }
        if v >= n {
            return Err(SbError::NodeOutOfRange { id: v, n });
        }
        if u == v {
            report.self_loops_dropped += 1;
            continue;
        }
        let key = (u.min(v), u.max(v));
        if !seen.insert(key) {
            report.duplicate_edges_dropped += 1;
            continue;
        }
        edges.push(key);
    }

    let graph = Graph::new(n, &edges, features, labels)?;
    Ok((graph, report))
}
