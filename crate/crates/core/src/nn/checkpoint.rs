//! Parameter checkpoints and loss histories as CSV.
//!
//! A checkpoint lists one entry per row: `tensor,rows,cols,index,value`, so
//! every row carries its tensor's shape and the file can be read back
//! without a separate manifest.

use std::io::{Read, Write};

use crate::io::{fmt_real, read_columns, write_columns};
use crate::{Error, Result};

use super::mlp::MlpSpec;

pub const CHECKPOINT_HEADER: [&str; 5] = ["tensor", "rows", "cols", "index", "value"];

#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

pub fn write_checkpoint<W: Write>(w: W, tensors: &[NamedTensor]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CHECKPOINT_HEADER)?;
    for t in tensors {
        if t.values.len() != t.rows * t.cols {
            return Err(Error::Format(format!("tensor {} has {} values for shape {}x{}", t.name, t.values.len(), t.rows, t.cols)));
        }
        for (i, v) in t.values.iter().enumerate() {
            out.write_record([t.name.clone(), t.rows.to_string(), t.cols.to_string(), i.to_string(), fmt_real(*v)])?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(r: R) -> Result<Vec<NamedTensor>> {
    let mut rd = csv::Reader::from_reader(r);
    let header: Vec<String> = rd.headers()?.iter().map(str::to_owned).collect();
    if header != CHECKPOINT_HEADER {
        return Err(Error::Format(format!("unexpected checkpoint header {header:?}")));
    }
    let mut out: Vec<NamedTensor> = Vec::new();
    for (line, rec) in rd.records().enumerate() {
        let rec = rec?;
        let bad = || Error::Format(format!("checkpoint row {}", line + 1));
        let name = rec.get(0).ok_or_else(bad)?.to_owned();
        let rows: usize = rec.get(1).and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        let cols: usize = rec.get(2).and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        let index: usize = rec.get(3).and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        let value: f64 = rec.get(4).and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        if out.last().map(|t| t.name != name).unwrap_or(true) {
            out.push(NamedTensor { name: name.clone(), rows, cols, values: Vec::with_capacity(rows * cols) });
        }
        let t = out.last_mut().unwrap();
        if t.rows != rows || t.cols != cols || t.values.len() != index {
            return Err(bad());
        }
        t.values.push(value);
    }
    if let Some(t) = out.iter().find(|t| t.values.len() != t.rows * t.cols) {
        return Err(Error::Format(format!("tensor {} is truncated", t.name)));
    }
    Ok(out)
}

/// Splits a flat parameter vector into named layer tensors.
pub fn to_named(spec: &MlpSpec, theta: &[f64], prefix: &str) -> Vec<NamedTensor> {
    let mut off = 0;
    spec.tensor_names()
        .into_iter()
        .map(|(name, rows, cols)| {
            let values = theta[off..off + rows * cols].to_vec();
            off += rows * cols;
            NamedTensor { name: format!("{prefix}{name}"), rows, cols, values }
        })
        .collect()
}

/// Reassembles a flat parameter vector, checking names and shapes.
pub fn from_named(spec: &MlpSpec, tensors: &[NamedTensor], prefix: &str) -> Result<Vec<f64>> {
    let mut theta = Vec::with_capacity(spec.n_params());
    for (name, rows, cols) in spec.tensor_names() {
        let full = format!("{prefix}{name}");
        let t = tensors
            .iter()
            .find(|t| t.name == full)
            .ok_or_else(|| Error::Format(format!("checkpoint lacks tensor {full}")))?;
        if (t.rows, t.cols) != (rows, cols) {
            return Err(Error::Format(format!("tensor {full} is {}x{}, expected {rows}x{cols}", t.rows, t.cols)));
        }
        theta.extend_from_slice(&t.values);
    }
    Ok(theta)
}

pub fn write_history<W: Write>(w: W, history: &[f64]) -> Result<()> {
    let iters: Vec<f64> = (0..history.len()).map(|i| i as f64).collect();
    write_columns(w, &["iter", "loss"], &[&iters, history])
}

pub fn read_history<R: Read>(r: R) -> Result<Vec<f64>> {
    let mut cols = read_columns(r, &["iter", "loss"])?;
    Ok(cols.pop().unwrap_or_default())
}
