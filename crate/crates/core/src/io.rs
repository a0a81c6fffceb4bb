//! Matrix and vector interchange.
//!
//! Binary layout (little endian): magic `RUQM`, `u32` version 1, `u64` rows,
//! `u64` cols, then `rows * cols` `f64` values in column-major order. A
//! vector is stored as an `n x 1` matrix.
//!
//! CSV layout: one matrix row per line, comma separated, `.` decimal point,
//! shortest round-trip formatting. Lines starting with `#` are skipped.

use std::io::{BufRead, Read, Write};

use crate::error::{Error, Result};
use crate::kernels::Matrix;

pub const MAGIC: &[u8; 4] = b"RUQM";
pub const VERSION: u32 = 1;

/// Shortest decimal that parses back to the same `f64`.
pub fn fmt_real(x: f64) -> String {
    format!("{x:?}")
}

pub fn write_binary<W: Write>(mut w: W, m: &Matrix) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(m.rows() as u64).to_le_bytes())?;
    w.write_all(&(m.cols() as u64).to_le_bytes())?;
    for v in m.as_col_major() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_binary<R: Read>(mut r: R) -> Result<Matrix> {
    let mut head = [0u8; 24];
    r.read_exact(&mut head)?;
    if &head[..4] != MAGIC {
        return Err(Error::Parse("bad magic".into()));
    }
    let version = u32::from_le_bytes(head[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::Parse(format!("unsupported version {version}")));
    }
    let rows = u64::from_le_bytes(head[8..16].try_into().unwrap()) as usize;
    let cols = u64::from_le_bytes(head[16..24].try_into().unwrap()) as usize;
    let len = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::Parse("dimensions overflow".into()))?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != 8 * len {
        return Err(Error::Parse(format!("expected {} data bytes, found {}", 8 * len, bytes.len())));
    }
    let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Matrix::from_col_major(rows, cols, data)
}

pub fn write_csv<W: Write>(mut w: W, m: &Matrix) -> Result<()> {
    for i in 0..m.rows() {
        let line: Vec<String> = m.row(i).into_iter().map(fmt_real).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}

pub fn read_csv<R: BufRead>(r: R) -> Result<Matrix> {
    let mut rows = Vec::new();
    for (k, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split(',')
            .map(|f| f.trim().parse::<f64>().map_err(|e| Error::Parse(format!("line {}: {e}: {f:?}", k + 1))))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::EmptyInput);
    }
    Matrix::from_rows(&rows)
}

/// Vector as a single column, or as a single row.
pub fn read_vector_csv<R: BufRead>(r: R) -> Result<Vec<f64>> {
    let m = read_csv(r)?;
    match (m.rows(), m.cols()) {
        (_, 1) => Ok(m.column(0).to_vec()),
        (1, _) => Ok(m.row(0)),
        (a, b) => Err(Error::ShapeMismatch(format!("expected a vector, got {a}x{b}"))),
    }
}

pub fn write_vector_csv<W: Write>(mut w: W, v: &[f64]) -> Result<()> {
    for x in v {
        writeln!(w, "{}", fmt_real(*x))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_round_trip() {
        let m = Matrix::from_fn(3, 2, |i, j| (i as f64 + 0.1) / (j as f64 + 3.0));
        let mut buf = Vec::new();
        write_binary(&mut buf, &m).unwrap();
        assert_eq!(buf.len(), 24 + 48);
        assert_eq!(read_binary(&buf[..]).unwrap(), m);
        assert!(read_binary(&buf[..30]).is_err());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let m = Matrix::from_fn(2, 3, |i, j| 1.0 / (1.0 + i as f64 * 7.0 + j as f64));
        let mut buf = Vec::new();
        write_csv(&mut buf, &m).unwrap();
        assert_eq!(read_csv(&buf[..]).unwrap(), m);
    }

    #[test]
    fn csv_vectors_and_comments() {
        let v = read_vector_csv("# header\n1.5\n-2\n".as_bytes()).unwrap();
        assert_eq!(v, vec![1.5, -2.0]);
        assert_eq!(read_vector_csv("1,2,3\n".as_bytes()).unwrap(), vec![1.0, 2.0, 3.0]);
        assert!(read_csv("1,x\n".as_bytes()).is_err());
        assert!(read_vector_csv("1,2\n3,4\n".as_bytes()).is_err());
    }
}
