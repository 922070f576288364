//! CSV input and output.

use std::io::{Read, Write};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// 17 significant digits, enough to round-trip any finite `f64`.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// A numeric table with named columns, one row per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    /// `rows × headers.len()`.
    pub values: DMatrix<f64>,
}

/// Reads a headed CSV whose cells all parse as numbers. Empty cells and
/// short rows are rejected with the offending line number.
pub fn read_table<R: Read>(input: R) -> Result<Table> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(input);
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if headers.is_empty() || headers.iter().all(|h| h.is_empty()) {
        return Err(Error::invalid("CSV has no header"));
    }
    let width = headers.len();
    let mut data = Vec::new();
    let mut rows = 0;
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(rows + 2, |p| p.line() as usize);
        if record.len() != width {
            return Err(Error::invalid(format!(
                "line {line}: expected {width} fields, found {}",
                record.len()
            )));
        }
        for (j, cell) in record.iter().enumerate() {
            let cell = cell.trim();
            if cell.is_empty() {
                return Err(Error::invalid(format!(
                    "line {line}: missing value in column '{}'",
                    headers[j]
                )));
            }
            let v: f64 = cell.parse().map_err(|_| {
                Error::invalid(format!("line {line}: cannot parse '{cell}' in column '{}'", headers[j]))
            })?;
            if !v.is_finite() {
                return Err(Error::invalid(format!(
                    "line {line}: non-finite value in column '{}'",
                    headers[j]
                )));
            }
            data.push(v);
        }
        rows += 1;
    }
    Ok(Table {
        headers,
        values: DMatrix::from_row_slice(rows, width, &data),
    })
}

impl Table {
    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::invalid(format!("column '{name}' not found")))
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        Ok(self.values.column(self.index_of(name)?).iter().copied().collect())
    }

    pub fn label_column(&self, name: &str) -> Result<Vec<usize>> {
        self.column(name)?
            .into_iter()
            .map(|v| {
                if v >= 0.0 && v.fract() == 0.0 {
                    Ok(v as usize)
                } else {
                    Err(Error::invalid(format!(
                        "column '{name}' must hold nonnegative integers, found {v}"
                    )))
                }
            })
            .collect()
    }

    pub fn select(&self, names: &[String]) -> Result<DMatrix<f64>> {
        let idx = names.iter().map(|n| self.index_of(n)).collect::<Result<Vec<_>>>()?;
        Ok(DMatrix::from_fn(self.values.nrows(), idx.len(), |i, j| {
            self.values[(i, idx[j])]
        }))
    }

    /// Columns whose name starts with `prefix`, in file order.
    pub fn prefixed(&self, prefix: &str) -> Vec<String> {
        self.headers.iter().filter(|h| h.starts_with(prefix)).cloned().collect()
    }
}

pub fn write_matrix_csv<W: Write>(out: W, headers: &[String], m: &DMatrix<f64>) -> Result<()> {
    if headers.len() != m.ncols() {
        return Err(Error::invalid("header count does not match matrix width"));
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(headers)?;
    for row in m.row_iter() {
        w.write_record(row.iter().map(|&v| format_f64(v)))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_named_columns() {
        let t = read_table("a,b\n1,2\n3.5,-4e-1\n".as_bytes()).unwrap();
        assert_eq!(t.column("b").unwrap(), vec![2.0, -0.4]);
        assert!(t.column("c").is_err());
    }

    #[test]
    fn reports_line_numbers() {
        let err = read_table("a,b\n1,2\n3\n".as_bytes()).unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
        let err = read_table("a,b\n1,2\n3,\n".as_bytes()).unwrap_err().to_string();
        assert!(err.contains("line 3") && err.contains("missing"), "{err}");
        let err = read_table("a,b\n1,x\n".as_bytes()).unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
    }

    #[test]
    fn float_format_round_trips() {
        for v in [0.1, -1.0 / 3.0, 1e-300, 123456789.12345679, f64::MAX] {
            assert_eq!(format_f64(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
    }
}
