//! Column-oriented CSV helpers shared by every exporter.
//!
//! Reals are written with Rust's shortest round-trip formatting, which
//! re-parses to the identical `f64` and is byte-stable across runs.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::{Error, Result};

pub fn fmt_real(x: f64) -> String {
    format!("{x}")
}

/// Writes equal-length columns under `header`.
pub fn write_columns<W: Write>(w: W, header: &[&str], cols: &[&[f64]]) -> Result<()> {
    if header.len() != cols.len() {
        return Err(Error::Format(format!("{} header fields for {} columns", header.len(), cols.len())));
    }
    let n = cols.first().map_or(0, |c| c.len());
    if cols.iter().any(|c| c.len() != n) {
        return Err(Error::Format("columns of unequal length".into()));
    }
    let mut out = csv::Writer::from_writer(w);
    out.write_record(header)?;
    let mut rec = Vec::with_capacity(cols.len());
    for i in 0..n {
        rec.clear();
        rec.extend(cols.iter().map(|c| fmt_real(c[i])));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_columns_to(path: &Path, header: &[&str], cols: &[&[f64]]) -> Result<()> {
    write_columns(File::create(path)?, header, cols)
}

/// Reads a numeric CSV whose header must equal `header`; returns columns.
pub fn read_columns<R: Read>(r: R, header: &[&str]) -> Result<Vec<Vec<f64>>> {
    let mut rd = csv::Reader::from_reader(r);
    let found: Vec<String> = rd.headers()?.iter().map(str::to_owned).collect();
    if found != header {
        return Err(Error::Format(format!("expected header {:?}, found {:?}", header.join(","), found.join(","))));
    }
    let mut cols = vec![Vec::new(); header.len()];
    for (line, rec) in rd.records().enumerate() {
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(Error::Format(format!("row {} has {} fields", line + 1, rec.len())));
        }
        for (c, field) in cols.iter_mut().zip(rec.iter()) {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("row {}: `{field}` is not a number", line + 1)))?;
            c.push(v);
        }
    }
    Ok(cols)
}

pub fn read_columns_from(path: &Path, header: &[&str]) -> Result<Vec<Vec<f64>>> {
    read_columns(File::open(path)?, header)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_is_exact() {
        let a = [0.1, -1.0 / 3.0, 1e-300, f64::MAX, 123456.789];
        let b = [1.0, 2.0, 3.0, 4.0, 5.0];
        let mut buf = Vec::new();
        write_columns(&mut buf, &["a", "b"], &[&a, &b]).unwrap();
        let cols = read_columns(buf.as_slice(), &["a", "b"]).unwrap();
        assert_eq!(cols[0], a);
        assert_eq!(cols[1], b);
    }

    #[test]
    fn wrong_header_rejected() {
        let buf = b"x,y\n1,2\n";
        assert!(read_columns(&buf[..], &["a", "b"]).is_err());
    }
}
