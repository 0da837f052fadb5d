//! On-disk formats: TSV edge and label lists, dense matrices as text or
//! little-endian `f32` binary.
//!
//! The binary layout is two `u32` values (rows, cols) followed by
//! `rows · cols` row-major `f32` values. Matrices are `f64` in memory, so
//! writing narrows to `f32`; a loaded matrix written again is byte-identical.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use m2hgcl_core::Matrix;

use crate::error::{DataError, Result};

const HEADER_BYTES: usize = 8;

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| DataError::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| DataError::io(path, e))
}

fn finish(path: &Path, mut out: BufWriter<fs::File>) -> Result<()> {
    out.flush().map_err(|e| DataError::io(path, e))
}

fn parse_index(path: &Path, line: usize, field: &str, what: &str) -> Result<usize> {
    field
        .parse()
        .map_err(|_| DataError::parse(path, line, format!("{what} {field:?} is not a non-negative integer")))
}

/// Reads a matrix, dispatching on the `.txt` / `.bin` extension.
pub fn read_matrix(path: &Path) -> Result<Matrix> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("txt") => read_matrix_txt(path),
        Some("bin") => read_matrix_bin(path),
        _ => Err(DataError::format(path, "matrix files must end in .txt or .bin")),
    }
}

/// Writes a matrix in the format named by the extension.
pub fn write_matrix(path: &Path, m: &Matrix) -> Result<()> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("txt") => write_matrix_txt(path, m),
        Some("bin") => write_matrix_bin(path, m),
        _ => Err(DataError::format(path, "matrix files must end in .txt or .bin")),
    }
}

/// `rows cols` header, then one line of space-separated values per row.
pub fn read_matrix_txt(path: &Path) -> Result<Matrix> {
    let text = read_text(path)?;
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines
        .next()
        .ok_or_else(|| DataError::parse(path, 1, "missing `rows cols` header"))?;
    let dims: Vec<&str> = header.split_whitespace().collect();
    if dims.len() != 2 {
        return Err(DataError::parse(path, 1, format!("header {header:?} is not `rows cols`")));
    }
    let rows = parse_index(path, 1, dims[0], "row count")?;
    let cols = parse_index(path, 1, dims[1], "column count")?;
    let mut data = Vec::with_capacity(rows * cols);
    let mut seen = 0;
    for (line, text) in lines {
        if seen == rows {
            if text.trim().is_empty() {
                continue;
            }
            return Err(DataError::parse(path, line, format!("more rows than the {rows} in the header")));
        }
        let before = data.len();
        for field in text.split_whitespace() {
            let v: f64 = field
                .parse()
                .map_err(|_| DataError::parse(path, line, format!("{field:?} is not a number")))?;
            data.push(v);
        }
        if data.len() - before != cols {
            return Err(DataError::parse(
                path,
                line,
                format!("{} values, header says {cols}", data.len() - before),
            ));
        }
        seen += 1;
    }
    if seen != rows {
        return Err(DataError::format(path, format!("{seen} rows, header says {rows}")));
    }
    Ok(Matrix::from_vec(rows, cols, data)?)
}

pub fn write_matrix_txt(path: &Path, m: &Matrix) -> Result<()> {
    let mut out = create(path)?;
    let mut body = format!("{} {}\n", m.rows(), m.cols());
    for r in 0..m.rows() {
        let row: Vec<String> = m.row(r).iter().map(|v| v.to_string()).collect();
        body.push_str(&row.join(" "));
        body.push('\n');
    }
    out.write_all(body.as_bytes()).map_err(|e| DataError::io(path, e))?;
    finish(path, out)
}

pub fn read_matrix_bin(path: &Path) -> Result<Matrix> {
    let bytes = fs::read(path).map_err(|e| DataError::io(path, e))?;
    decode_matrix_bin(&bytes).map_err(|message| DataError::format(path, message))
}

pub fn write_matrix_bin(path: &Path, m: &Matrix) -> Result<()> {
    let bytes = encode_matrix_bin(m).map_err(|message| DataError::format(path, message))?;
    fs::write(path, bytes).map_err(|e| DataError::io(path, e))
}

pub fn encode_matrix_bin(m: &Matrix) -> std::result::Result<Vec<u8>, String> {
    let dim = |n: usize| u32::try_from(n).map_err(|_| format!("dimension {n} does not fit in u32"));
    let mut bytes = Vec::with_capacity(HEADER_BYTES + 4 * m.len());
    bytes.extend_from_slice(&dim(m.rows())?.to_le_bytes());
    bytes.extend_from_slice(&dim(m.cols())?.to_le_bytes());
    for &v in m.as_slice() {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(bytes)
}

pub fn decode_matrix_bin(bytes: &[u8]) -> std::result::Result<Matrix, String> {
    if bytes.len() < HEADER_BYTES {
        return Err(format!("{} bytes is shorter than the 8-byte shape header", bytes.len()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4-byte slice")) as usize;
    let (rows, cols) = (word(0), word(4));
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(HEADER_BYTES))
        .ok_or_else(|| format!("shape {rows}x{cols} overflows"))?;
    if bytes.len() != expected {
        return Err(format!(
            "header says {rows}x{cols} ({expected} bytes), file has {} bytes",
            bytes.len()
        ));
    }
    let data = bytes[HEADER_BYTES..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")) as f64)
        .collect();
    Matrix::from_vec(rows, cols, data).map_err(|e| e.to_string())
}

pub fn save_embeddings(path: &Path, z: &Matrix) -> Result<()> {
    write_matrix_bin(path, z)
}

pub fn load_embeddings(path: &Path) -> Result<Matrix> {
    read_matrix_bin(path)
}

/// Reads `src<TAB>dst` lines, checking each endpoint against `shape`.
pub fn read_edges(path: &Path, shape: (usize, usize)) -> Result<Vec<(usize, usize)>> {
    let text = read_text(path)?;
    let mut edges = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 2 {
            return Err(DataError::parse(path, n, format!("expected `src<TAB>dst`, got {line:?}")));
        }
        let src = parse_index(path, n, fields[0], "source index")?;
        let dst = parse_index(path, n, fields[1], "destination index")?;
        if src >= shape.0 {
            return Err(DataError::parse(path, n, format!("source {src} out of range for {} nodes", shape.0)));
        }
        if dst >= shape.1 {
            return Err(DataError::parse(
                path,
                n,
                format!("destination {dst} out of range for {} nodes", shape.1),
            ));
        }
        edges.push((src, dst));
    }
    Ok(edges)
}

pub fn write_edges(path: &Path, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<()> {
    let mut out = create(path)?;
    for (s, d) in edges {
        writeln!(out, "{s}\t{d}").map_err(|e| DataError::io(path, e))?;
    }
    finish(path, out)
}

/// Reads `node_index<TAB>class_id` lines; every node in `0..n` needs
/// exactly one label below `classes`.
pub fn read_labels(path: &Path, n: usize, classes: usize) -> Result<Vec<usize>> {
    let text = read_text(path)?;
    let mut labels = vec![None; n];
    for (i, line) in text.lines().enumerate() {
        let ln = i + 1;
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 2 {
            return Err(DataError::parse(path, ln, format!("expected `node<TAB>class`, got {line:?}")));
        }
        let node = parse_index(path, ln, fields[0], "node index")?;
        let class = parse_index(path, ln, fields[1], "class id")?;
        if node >= n {
            return Err(DataError::parse(path, ln, format!("node {node} out of range for {n} nodes")));
        }
        if class >= classes {
            return Err(DataError::parse(path, ln, format!("class {class} outside 0..{classes}")));
        }
        if labels[node].replace(class).is_some() {
            return Err(DataError::parse(path, ln, format!("node {node} labelled twice")));
        }
    }
    labels
        .iter()
        .enumerate()
        .map(|(node, l)| l.ok_or_else(|| DataError::format(path, format!("node {node} has no label"))))
        .collect()
}

/// Reads a label file whose `n` lines label nodes `0..n`.
pub fn read_label_file(path: &Path) -> Result<Vec<usize>> {
    let text = read_text(path)?;
    let n = text.lines().count();
    read_labels(path, n, usize::MAX)
}

pub fn write_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let mut out = create(path)?;
    for (i, c) in labels.iter().enumerate() {
        writeln!(out, "{i}\t{c}").map_err(|e| DataError::io(path, e))?;
    }
    finish(path, out)
}
