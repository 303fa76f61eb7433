//! Plain-text tensor and matrix files.
//!
//! A tensor file starts with `T3 n1 n2 n3` followed by `n1*n2*n3` values in
//! storage order (first index fastest). A matrix file starts with
//! `M rows cols` followed by the values row by row. Values are written with
//! 17 significant digits.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::{Matrix, Tensor3};

fn parse_header<'a>(
    tokens: &mut impl Iterator<Item = &'a str>,
    tag: &str,
    count: usize,
) -> Result<Vec<usize>> {
    match tokens.next() {
        Some(t) if t == tag => {}
        Some(t) => return Err(Error::Parse(format!("expected header `{tag}`, found `{t}`"))),
        None => return Err(Error::Parse("empty input".into())),
    }
    (0..count)
        .map(|i| {
            let t = tokens
                .next()
                .ok_or_else(|| Error::Parse(format!("header `{tag}` is missing dimension {}", i + 1)))?;
            t.parse::<usize>()
                .map_err(|_| Error::Parse(format!("bad dimension `{t}` in `{tag}` header")))
        })
        .collect()
}

fn parse_values<'a>(tokens: impl Iterator<Item = &'a str>, expected: usize) -> Result<Vec<f64>> {
    let values = tokens
        .map(|t| t.parse::<f64>().map_err(|_| Error::Parse(format!("bad value `{t}`"))))
        .collect::<Result<Vec<_>>>()?;
    if values.len() != expected {
        return Err(Error::Parse(format!("expected {expected} values, found {}", values.len())));
    }
    Ok(values)
}

fn write_values(out: &mut String, values: impl Iterator<Item = f64>, per_line: usize) {
    for (i, v) in values.enumerate() {
        if i > 0 {
            out.push(if i % per_line == 0 { '\n' } else { ' ' });
        }
        write!(out, "{v:.16e}").unwrap();
    }
    out.push('\n');
}

pub fn tensor_to_string(t: &Tensor3) -> String {
    let [n1, n2, n3] = t.dims();
    let mut out = format!("T3 {n1} {n2} {n3}\n");
    if !t.is_empty() {
        write_values(&mut out, t.values().iter().copied(), n1);
    }
    out
}

pub fn tensor_from_str(s: &str) -> Result<Tensor3> {
    let mut tokens = s.split_whitespace();
    let d = parse_header(&mut tokens, "T3", 3)?;
    let dims = [d[0], d[1], d[2]];
    let values = parse_values(tokens, dims.iter().product())?;
    Tensor3::new(dims, values)
}

pub fn matrix_to_string(m: &Matrix) -> String {
    let mut out = format!("M {} {}\n", m.nrows(), m.ncols());
    if !m.is_empty() {
        let values = (0..m.nrows()).flat_map(|i| (0..m.ncols()).map(move |j| m[(i, j)]));
        write_values(&mut out, values, m.ncols());
    }
    out
}

pub fn matrix_from_str(s: &str) -> Result<Matrix> {
    let mut tokens = s.split_whitespace();
    let d = parse_header(&mut tokens, "M", 2)?;
    let values = parse_values(tokens, d[0] * d[1])?;
    Ok(Matrix::from_row_slice(d[0], d[1], &values))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn with_path<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor3> {
    let path = path.as_ref();
    with_path(path, tensor_from_str(&read(path)?))
}

pub fn write_tensor(path: impl AsRef<Path>, t: &Tensor3) -> Result<()> {
    write(path.as_ref(), &tensor_to_string(t))
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<Matrix> {
    let path = path.as_ref();
    with_path(path, matrix_from_str(&read(path)?))
}

pub fn write_matrix(path: impl AsRef<Path>, m: &Matrix) -> Result<()> {
    write(path.as_ref(), &matrix_to_string(m))
}
