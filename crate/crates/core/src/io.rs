//! File formats.
//!
//! * Vectors and matrices as CSV: dense, row-major, optional header row.
//! * Matrices in the `SLP1` binary format: the 4 magic bytes `SLP1`, then
//!   `rows` and `cols` as little-endian `u64`, then `rows * cols`
//!   little-endian `f64` in row-major order.
//! * Weight tables as CSV `k,w_hat,samples`; sequences as CSV `i,lambda`
//!   with 1-based `i`.
//!
//! Floats are written with 17 significant digits so they round-trip.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Result, SlopeError};
use crate::lambda_seq::{WeightEntry, WeightTable};
use crate::sorted_l1::LambdaSequence;

pub const BINARY_MAGIC: &[u8; 4] = b"SLP1";

/// Scientific notation with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_err(path: &Path, msg: impl std::fmt::Display) -> SlopeError {
    SlopeError::Parse(format!("{}: {msg}", path.display()))
}

/// Rows of numbers from a CSV file. A first row that does not parse as
/// numbers is taken as a header and skipped.
fn read_numeric_rows(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut rows = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(v) => rows.push(v),
            Err(_) if line == 0 => continue,
            Err(e) => return Err(parse_err(path, format!("line {}: {e}", line + 1))),
        }
    }
    Ok(rows)
}

/// A vector stored one value per line or as a single row.
pub fn read_vector_csv(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let rows = read_numeric_rows(path)?;
    match rows.as_slice() {
        [] => Err(parse_err(path, "no numeric data")),
        [row] => Ok(row.clone()),
        _ if rows.iter().all(|r| r.len() == 1) => Ok(rows.into_iter().map(|r| r[0]).collect()),
        _ => Err(parse_err(path, "expected a single column or a single row")),
    }
}

pub fn read_matrix_csv(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let path = path.as_ref();
    let rows = read_numeric_rows(path)?;
    let ncols = rows.first().map_or(0, Vec::len);
    if ncols == 0 {
        return Err(parse_err(path, "no numeric data"));
    }
    if let Some(i) = rows.iter().position(|r| r.len() != ncols) {
        return Err(parse_err(path, format!("row {} has {} fields, expected {ncols}", i + 1, rows[i].len())));
    }
    Ok(DMatrix::from_row_iterator(rows.len(), ncols, rows.into_iter().flatten()))
}

pub fn write_vector_csv<W: Write>(out: W, header: &str, values: &[f64]) -> Result<()> {
    let mut w = BufWriter::new(out);
    writeln!(w, "{header}")?;
    for v in values {
        writeln!(w, "{}", fmt_f64(*v))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_matrix_csv<W: Write>(out: W, m: &DMatrix<f64>) -> Result<()> {
    let mut w = BufWriter::new(out);
    for i in 0..m.nrows() {
        let row: Vec<String> = m.row(i).iter().map(|v| fmt_f64(*v)).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_matrix_binary<W: Write>(out: W, m: &DMatrix<f64>) -> Result<()> {
    let mut w = BufWriter::new(out);
    w.write_all(BINARY_MAGIC)?;
    w.write_all(&(m.nrows() as u64).to_le_bytes())?;
    w.write_all(&(m.ncols() as u64).to_le_bytes())?;
    for i in 0..m.nrows() {
        for v in m.row(i).iter() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix_binary(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let path = path.as_ref();
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| parse_err(path, "missing SLP1 header"))?;
    if &magic != BINARY_MAGIC {
        return Err(parse_err(path, "bad magic bytes"));
    }
    let mut word = [0u8; 8];
    let mut dims = [0usize; 2];
    for d in &mut dims {
        r.read_exact(&mut word).map_err(|_| parse_err(path, "truncated header"))?;
        *d = usize::try_from(u64::from_le_bytes(word)).map_err(|_| parse_err(path, "dimension overflow"))?;
    }
    let [rows, cols] = dims;
    let count = rows
        .checked_mul(cols)
        .ok_or_else(|| parse_err(path, "dimension overflow"))?;
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() != count * 8 {
        return Err(parse_err(
            path,
            format!("declared {rows}x{cols} needs {} bytes of data, found {}", count * 8, bytes.len()),
        ));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")));
    Ok(DMatrix::from_row_iterator(rows, cols, values))
}

/// Reads a matrix in either format, chosen by the leading magic bytes.
pub fn read_matrix(path: impl AsRef<Path>) -> Result<DMatrix<f64>> {
    let path = path.as_ref();
    let mut head = [0u8; 4];
    let is_binary = File::open(path)?.read_exact(&mut head).is_ok() && &head == BINARY_MAGIC;
    if is_binary {
        read_matrix_binary(path)
    } else {
        read_matrix_csv(path)
    }
}

pub fn write_weight_table<W: Write>(out: W, table: &WeightTable) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["k", "w_hat", "samples"])?;
    for e in table.entries() {
        w.write_record([e.k.to_string(), fmt_f64(e.w_hat), e.samples.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_weight_table(path: impl AsRef<Path>) -> Result<WeightTable> {
    #[derive(serde::Deserialize)]
    struct Row {
        k: usize,
        w_hat: f64,
        samples: usize,
    }
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let entries = rdr
        .deserialize::<Row>()
        .map(|r| {
            let r = r.map_err(|e| parse_err(path, e))?;
            Ok(WeightEntry {
                k: r.k,
                w_hat: r.w_hat,
                samples: r.samples,
                std_err: None,
                resampled: 0,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    WeightTable::new(entries)
}

pub fn write_sequence<W: Write>(out: W, lambda: &LambdaSequence) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["i", "lambda"])?;
    for (i, v) in lambda.as_slice().iter().enumerate() {
        w.write_record([(i + 1).to_string(), fmt_f64(*v)])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a sequence either as `i,lambda` rows or as a plain vector.
pub fn read_sequence(path: impl AsRef<Path>) -> Result<LambdaSequence> {
    let path = path.as_ref();
    let rows = read_numeric_rows(path)?;
    let values: Vec<f64> = if !rows.is_empty() && rows.iter().all(|r| r.len() == 2) {
        rows.iter().map(|r| r[1]).collect()
    } else {
        read_vector_csv(path)?
    };
    LambdaSequence::new(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_round_trips() {
        for x in [0.1, -1.0 / 3.0, 1e-300, 6.02214076e23, 0.0] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt_f64(0.5), "5.0000000000000000e-1");
    }

    #[test]
    fn matrix_formats_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = DMatrix::from_row_slice(2, 3, &[1.0, -2.5, 1e-17, 4.0, 5.0, f64::MAX]);
        let csv_path = dir.path().join("m.csv");
        write_matrix_csv(File::create(&csv_path).unwrap(), &m).unwrap();
        assert_eq!(read_matrix(&csv_path).unwrap(), m);
        let bin_path = dir.path().join("m.slp");
        write_matrix_binary(File::create(&bin_path).unwrap(), &m).unwrap();
        assert_eq!(read_matrix(&bin_path).unwrap(), m);
    }

    #[test]
    fn truncated_binary_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let m = DMatrix::from_element(3, 3, 1.0);
        let path = dir.path().join("m.slp");
        let mut bytes = Vec::new();
        write_matrix_binary(&mut bytes, &m).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 8]).unwrap();
        assert!(matches!(read_matrix(&path), Err(SlopeError::Parse(_))));
    }

    #[test]
    fn vectors_with_and_without_header() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.csv");
        std::fs::write(&a, "y\n1\n2.5\n-3\n").unwrap();
        assert_eq!(read_vector_csv(&a).unwrap(), vec![1.0, 2.5, -3.0]);
        let b = dir.path().join("b.csv");
        std::fs::write(&b, "1, 2, 3\n").unwrap();
        assert_eq!(read_vector_csv(&b).unwrap(), vec![1.0, 2.0, 3.0]);
        let c = dir.path().join("c.csv");
        std::fs::write(&c, "1\nfoo\n").unwrap();
        assert!(matches!(read_vector_csv(&c), Err(SlopeError::Parse(_))));
    }

    #[test]
    fn ragged_matrix_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        std::fs::write(&p, "1,2\n3\n").unwrap();
        assert!(matches!(read_matrix_csv(&p), Err(SlopeError::Parse(_))));
    }

    #[test]
    fn weight_table_and_sequence_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let table = WeightTable::from_fn(&[1, 5, 9], |k| 1.0 / (100 - k) as f64).unwrap();
        let p = dir.path().join("w.csv");
        write_weight_table(File::create(&p).unwrap(), &table).unwrap();
        let back = read_weight_table(&p).unwrap();
        let w: Vec<f64> = back.entries().iter().map(|e| e.w_hat).collect();
        let want: Vec<f64> = table.entries().iter().map(|e| e.w_hat).collect();
        assert_eq!(w, want);
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("k,w_hat,samples\n"));

        let lambda = LambdaSequence::new(vec![3.0, 2.0, 2.0]).unwrap();
        let s = dir.path().join("l.csv");
        write_sequence(File::create(&s).unwrap(), &lambda).unwrap();
        assert_eq!(read_sequence(&s).unwrap(), lambda);
    }
}
