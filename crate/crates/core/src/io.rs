//! Dataset file formats.
//!
//! - Edge list: UTF-8 text, one `src dst` pair per line, 0-based ids.
//! - Features: CSV (one node per row, F floats) or binary with magic
//!   `E2NF`, u64 LE node count, u64 LE feature count, then N x F float32
//!   row-major.
//! - Labels: text, one integer per line.
//!
//! Embedding exports reuse the binary feature layout.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::graph::{Graph, IngestReport};

pub const FEATURE_MAGIC: &[u8; 4] = b"E2NF";

/// On-disk representation for the feature matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureFormat {
    Csv,
    Binary,
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Parse an edge list. Blank lines are ignored; anything else must be two
/// whitespace-separated non-negative integers.
pub fn read_edge_list(path: &Path) -> Result<Vec<(usize, usize)>> {
    let text = read_to_string(path)?;
    let mut edges = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut it = line.split_whitespace();
        let parse = |tok: Option<&str>| -> Result<usize> {
            tok.ok_or_else(|| Error::MalformedLine {
                path: path.display().to_string(),
                line: i + 1,
                reason: "expected two node ids".into(),
            })?
            .parse::<usize>()
            .map_err(|_| Error::MalformedLine {
                path: path.display().to_string(),
                line: i + 1,
                reason: format!("not a node id: {line:?}"),
            })
        };
        let a = parse(it.next())?;
        let b = parse(it.next())?;
        if it.next().is_some() {
            return Err(Error::MalformedLine {
                path: path.display().to_string(),
                line: i + 1,
                reason: "more than two fields".into(),
            });
        }
        edges.push((a, b));
    }
    Ok(edges)
}

/// Read features, auto-detecting binary (magic `E2NF`) vs CSV.
pub fn read_features(path: &Path) -> Result<Array2<f64>> {
    let bytes = read_bytes(path)?;
    if bytes.len() >= 4 && &bytes[..4] == FEATURE_MAGIC {
        read_features_binary(&bytes, path)
    } else {
        read_features_csv(
            std::str::from_utf8(&bytes).map_err(|_| Error::MalformedLine {
                path: path.display().to_string(),
                line: 1,
                reason: "file is neither E2NF binary nor UTF-8 CSV".into(),
            })?,
            path,
        )
    }
}

fn read_features_csv(text: &str, path: &Path) -> Result<Array2<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|tok| {
                tok.trim().parse::<f64>().map_err(|_| Error::MalformedLine {
                    path: path.display().to_string(),
                    line: i + 1,
                    reason: format!("not a float: {:?}", tok.trim()),
                })
            })
            .collect::<Result<_>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(Error::MalformedLine {
                    path: path.display().to_string(),
                    line: i + 1,
                    reason: format!("expected {} columns, found {}", first.len(), row.len()),
                });
            }
        }
        rows.push(row);
    }
    let n = rows.len();
    let f = rows.first().map_or(0, Vec::len);
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Array2::from_shape_vec((n, f), flat).map_err(|e| Error::Msg(e.to_string()))
}

fn read_features_binary(bytes: &[u8], path: &Path) -> Result<Array2<f64>> {
    let corrupt = |reason: &str| Error::MalformedLine {
        path: path.display().to_string(),
        line: 0,
        reason: reason.into(),
    };
    if bytes.len() < 20 {
        return Err(corrupt("binary header truncated"));
    }
    let n = u64::from_le_bytes(bytes[4..12].try_into().unwrap()) as usize;
    let f = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let expected = 20 + n * f * 4;
    if bytes.len() != expected {
        return Err(corrupt(&format!(
            "expected {expected} bytes for {n}x{f} float32, found {}",
            bytes.len()
        )));
    }
    let mut flat = Vec::with_capacity(n * f);
    for chunk in bytes[20..].chunks_exact(4) {
        flat.push(f32::from_le_bytes(chunk.try_into().unwrap()) as f64);
    }
    Array2::from_shape_vec((n, f), flat).map_err(|e| Error::Msg(e.to_string()))
}

/// Read labels: one integer per line, `expected` lines.
pub fn read_labels(path: &Path, expected: usize) -> Result<Vec<usize>> {
    let text = read_to_string(path)?;
    let mut labels = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        labels.push(line.parse::<usize>().map_err(|_| Error::MalformedLine {
            path: path.display().to_string(),
            line: i + 1,
            reason: format!("not a class id: {line:?}"),
        })?);
    }
    if labels.len() != expected {
        return Err(Error::LabelCountMismatch {
            labels: labels.len(),
            num_nodes: expected,
        });
    }
    Ok(labels)
}

/// Load a graph from its three files. Input edges are symmetrized and
/// deduplicated; self-loops are dropped with counts in the report.
pub fn load_graph_with_report(
    edge_path: &Path,
    feature_path: &Path,
    label_path: Option<&Path>,
) -> Result<(Graph, IngestReport)> {
    let edges = read_edge_list(edge_path)?;
    let features = read_features(feature_path)?;
    let labels = match label_path {
        Some(p) => Some(read_labels(p, features.nrows())?),
        None => None,
    };
    Graph::from_edges(&edges, features, labels)
}

pub fn load_graph(
    edge_path: &Path,
    feature_path: &Path,
    label_path: Option<&Path>,
) -> Result<Graph> {
    load_graph_with_report(edge_path, feature_path, label_path).map(|(g, _)| g)
}

/// Write the canonical edge list: each undirected edge once, `min max`,
/// lexicographic order.
pub fn write_edge_list(path: &Path, g: &Graph) -> Result<()> {
    let mut out = String::new();
    for (a, b) in g.edge_list() {
        out.push_str(&format!("{a} {b}\n"));
    }
    fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Write a dense matrix in the requested feature format. Binary narrows to
/// float32 as the format mandates.
pub fn write_matrix(path: &Path, m: &Array2<f64>, format: FeatureFormat) -> Result<()> {
    match format {
        FeatureFormat::Csv => {
            let mut out = String::new();
            for row in m.rows() {
                let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
                out.push_str(&cells.join(","));
                out.push('\n');
            }
            fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
        }
        FeatureFormat::Binary => {
            let file = fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
            let mut w = std::io::BufWriter::new(file);
            let io_err = |e: std::io::Error| Error::io(path.display().to_string(), e);
            w.write_all(FEATURE_MAGIC).map_err(io_err)?;
            w.write_all(&(m.nrows() as u64).to_le_bytes()).map_err(io_err)?;
            w.write_all(&(m.ncols() as u64).to_le_bytes()).map_err(io_err)?;
            for v in m.iter() {
                w.write_all(&(*v as f32).to_le_bytes()).map_err(io_err)?;
            }
            w.flush().map_err(io_err)
        }
    }
}

pub fn write_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let mut out = String::new();
    for l in labels {
        out.push_str(&format!("{l}\n"));
    }
    fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Save all graph files into a directory, returning the three paths
/// (edges, features, labels-if-present).
pub fn save_graph(
    dir: &Path,
    g: &Graph,
    format: FeatureFormat,
) -> Result<(std::path::PathBuf, std::path::PathBuf, Option<std::path::PathBuf>)> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let edge_path = dir.join("edges.txt");
    let feat_path = match format {
        FeatureFormat::Csv => dir.join("features.csv"),
        FeatureFormat::Binary => dir.join("features.e2nf"),
    };
    write_edge_list(&edge_path, g)?;
    write_matrix(&feat_path, g.features(), format)?;
    let label_path = match g.labels() {
        Some(labels) => {
            let p = dir.join("labels.txt");
            write_labels(&p, labels)?;
            Some(p)
        }
        None => None,
    };
    Ok((edge_path, feat_path, label_path))
}

/// Read an exported embedding matrix (binary feature layout).
pub fn read_embeddings(path: &Path) -> Result<Array2<f64>> {
    let mut file = fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes)
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    if bytes.len() < 4 || &bytes[..4] != FEATURE_MAGIC {
        return Err(Error::MalformedLine {
            path: path.display().to_string(),
            line: 0,
            reason: "missing E2NF magic".into(),
        });
    }
    read_features_binary(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn load_minimal_graph() {
        let dir = tempdir().unwrap();
        let edges = dir.path().join("edges.txt");
        let feats = dir.path().join("features.csv");
        fs::write(&edges, "0 1\n").unwrap();
        fs::write(&feats, "1.0,2.0,3.0\n4.0,5.0,6.0\n").unwrap();
        let g = load_graph(&edges, &feats, None).unwrap();
        assert_eq!(g.num_nodes(), 2);
        assert_eq!(g.num_edges(), 1);
        assert_eq!(g.feature_dim(), 3);
    }

    #[test]
    fn malformed_line_reports_number() {
        let dir = tempdir().unwrap();
        let edges = dir.path().join("edges.txt");
        fs::write(&edges, "0 1\n0 x\n").unwrap();
        match read_edge_list(&edges).unwrap_err() {
            Error::MalformedLine { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn binary_feature_roundtrip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("f.e2nf");
        let m = ndarray::array![[1.0, 2.5], [3.25, -4.0], [0.0, 1e-3]];
        write_matrix(&path, &m, FeatureFormat::Binary).unwrap();
        let back = read_features(&path).unwrap();
        // values are float32 on disk
        for (a, b) in m.iter().zip(back.iter()) {
            assert_eq!(*a as f32, *b as f32);
        }
    }

    #[test]
    fn save_then_load_is_identity() {
        let dir = tempdir().unwrap();
        let m = ndarray::array![[0.5, 1.5], [2.5, 3.5], [4.5, 5.5]];
        let (g, _) = Graph::from_edges(&[(0, 1), (1, 2)], m, Some(vec![0, 1, 0])).unwrap();
        let (e, f, l) = save_graph(dir.path(), &g, FeatureFormat::Binary).unwrap();
        let g2 = load_graph(&e, &f, l.as_deref()).unwrap();
        assert_eq!(g, g2);
    }
}
