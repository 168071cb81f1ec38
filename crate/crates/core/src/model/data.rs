use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

/// Covariates `x` (samples x columns) and one target per sample.
///
/// CSV form: a header row `x1,...,xD,y`, one sample per line.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Array2<f64>,
    pub y: Vec<f64>,
}

impl Dataset {
    pub fn new(x: Array2<f64>, y: Vec<f64>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::InvalidData(format!(
                "{} covariate rows but {} targets",
                x.nrows(),
                y.len()
            )));
        }
        if y.is_empty() {
            return Err(Error::InvalidData("dataset has no samples".into()));
        }
        Ok(Self { x, y })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.x.ncols()
    }

    /// Columns whose values are all 0 or 1.
    pub fn binary_columns(&self) -> Vec<bool> {
        self.x
            .columns()
            .into_iter()
            .map(|c| c.iter().all(|&v| v == 0.0 || v == 1.0))
            .collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (1..=self.dims()).map(|k| format!("x{k}")).collect();
        header.push("y".into());
        w.write_record(&header)?;
        for (row, y) in self.x.rows().into_iter().zip(&self.y) {
            let mut rec: Vec<String> = row.iter().map(|v| format_float(*v)).collect();
            rec.push(format_float(*y));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(input);
        let header = r.headers()?.clone();
        let cols = header.len();
        if cols < 2 {
            return Err(Error::InvalidData(
                "expected header x1,...,xD,y with at least one covariate".into(),
            ));
        }
        for (k, name) in header.iter().take(cols - 1).enumerate() {
            if name.trim() != format!("x{}", k + 1) {
                return Err(Error::InvalidData(format!(
                    "column {} is named '{name}', expected 'x{}'",
                    k + 1,
                    k + 1
                )));
            }
        }
        if header[cols - 1].trim() != "y" {
            return Err(Error::InvalidData(format!(
                "last column is named '{}', expected 'y'",
                &header[cols - 1]
            )));
        }
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            if rec.len() != cols {
                return Err(Error::InvalidData(format!(
                    "row {} has {} fields, expected {cols}",
                    line + 2,
                    rec.len()
                )));
            }
            for (k, field) in rec.iter().enumerate() {
                let v: f64 = field.trim().parse().map_err(|_| {
                    Error::InvalidData(format!("row {}: cannot parse '{field}' as a number", line + 2))
                })?;
                if k + 1 == cols {
                    ys.push(v);
                } else {
                    xs.push(v);
                }
            }
        }
        let n = ys.len();
        let x = Array2::from_shape_vec((n, cols - 1), xs)
            .map_err(|e| Error::InvalidData(e.to_string()))?;
        Self::new(x, ys)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(file))
    }
}

/// Shortest representation that round-trips exactly.
fn format_float(v: f64) -> String {
    format!("{v:?}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn csv_round_trip_is_exact() {
        let d = Dataset::new(array![[0.1, -2.5e-7], [1.0 / 3.0, 4.0]], vec![1.0, -1.0]).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x1,x2,y\n"));
        let back = Dataset::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn schema_mismatch_is_descriptive() {
        let err = Dataset::read_csv("a,b,y\n1,2,3\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("expected 'x1'"), "{err}");
        let err = Dataset::read_csv("x1,x2,label\n1,2,3\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("expected 'y'"), "{err}");
        let err = Dataset::read_csv("x1,y\n1,abc\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("row 2"), "{err}");
    }

    #[test]
    fn detects_binary_columns() {
        let d = Dataset::new(array![[0.0, 0.3], [1.0, 0.0], [1.0, 1.0]], vec![0.0; 3]).unwrap();
        assert_eq!(d.binary_columns(), vec![true, false]);
    }
}
