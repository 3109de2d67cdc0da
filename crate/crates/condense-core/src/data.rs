//! Paired covariate/response records and their CSV representation.
//!
//! The on-disk format is plain comma-separated text with header
//! `x1,...,xd_x,y1,...,yd_y` and a decimal point, no locale handling.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};

/// `n` paired records with covariates in `[0,1]^{d_x}` and responses in
/// `R^{d_y}`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    d_x: usize,
    d_y: usize,
    x: Vec<f64>,
    y: Vec<f64>,
}

impl Dataset {
    pub fn new(d_x: usize, d_y: usize) -> Self {
        Dataset {
            d_x,
            d_y,
            x: Vec::new(),
            y: Vec::new(),
        }
    }

    pub fn d_x(&self) -> usize {
        self.d_x
    }

    pub fn d_y(&self) -> usize {
        self.d_y
    }

    pub fn len(&self) -> usize {
        if self.d_x == 0 {
            0
        } else {
            self.x.len() / self.d_x
        }
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn push(&mut self, x: &[f64], y: &[f64]) -> Result<()> {
        if x.len() != self.d_x || y.len() != self.d_y {
            return Err(Error::domain(format!(
                "record dims ({}, {}) do not match dataset dims ({}, {})",
                x.len(),
                y.len(),
                self.d_x,
                self.d_y
            )));
        }
        self.x.extend_from_slice(x);
        self.y.extend_from_slice(y);
        Ok(())
    }

    pub fn x_row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d_x..(i + 1) * self.d_x]
    }

    pub fn y_row(&self, i: usize) -> &[f64] {
        &self.y[i * self.d_y..(i + 1) * self.d_y]
    }

    /// k-th response coordinate across all records.
    pub fn y_column(&self, k: usize) -> Vec<f64> {
        (0..self.len()).map(|i| self.y_row(i)[k]).collect()
    }

    pub fn x_column(&self, k: usize) -> Vec<f64> {
        (0..self.len()).map(|i| self.x_row(i)[k]).collect()
    }

    pub fn expected_header(d_x: usize, d_y: usize) -> String {
        let mut cols = Vec::with_capacity(d_x + d_y);
        for k in 1..=d_x {
            cols.push(format!("x{k}"));
        }
        for k in 1..=d_y {
            cols.push(format!("y{k}"));
        }
        cols.join(",")
    }

    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "{}", Self::expected_header(self.d_x, self.d_y))?;
        for i in 0..self.len() {
            let row: Vec<String> = self
                .x_row(i)
                .iter()
                .chain(self.y_row(i))
                .map(|v| format!("{v}"))
                .collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// Parse a data CSV. Column counts are inferred from the header, which
    /// must follow the `x1..xd_x,y1..yd_y` pattern.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Dataset> {
        let mut lines = r.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::Parse {
                line: 1,
                msg: "empty file, expected a header".into(),
            })
            .and_then(|(i, l)| l.map(|l| (i, l)).map_err(Error::Io))?;

        let cols: Vec<&str> = header.trim().split(',').collect();
        let d_x = cols.iter().take_while(|c| c.starts_with('x')).count();
        let d_y = cols.len() - d_x;
        if d_x == 0 || d_y == 0 || header.trim() != Self::expected_header(d_x, d_y) {
            return Err(Error::Parse {
                line: 1,
                msg: format!("header must be x1..xD,y1..yD, got '{}'", header.trim()),
            });
        }

        let mut data = Dataset::new(d_x, d_y);
        for (idx, line) in lines {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != d_x + d_y {
                return Err(Error::Parse {
                    line: idx + 1,
                    msg: format!("expected {} fields, found {}", d_x + d_y, fields.len()),
                });
            }
            let mut vals = Vec::with_capacity(fields.len());
            for f in &fields {
                let v: f64 = f.trim().parse().map_err(|_| Error::Parse {
                    line: idx + 1,
                    msg: format!("'{f}' is not a number"),
                })?;
                if !v.is_finite() {
                    return Err(Error::Parse {
                        line: idx + 1,
                        msg: format!("non-finite value '{f}'"),
                    });
                }
                vals.push(v);
            }
            data.push(&vals[..d_x], &vals[d_x..])?;
        }
        Ok(data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::BufReader;

    #[test]
    fn csv_roundtrip() {
        let mut data = Dataset::new(2, 1);
        data.push(&[0.25, 0.5], &[1.75]).unwrap();
        data.push(&[0.1, 0.9], &[-0.333]).unwrap();
        let mut buf = Vec::new();
        data.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x1,x2,y1\n"));
        let back = Dataset::read_csv(BufReader::new(&buf[..])).unwrap();
        assert_eq!(back, data);
    }

    #[test]
    fn csv_reports_bad_line() {
        let text = "x1,y1\n0.1,0.2\n0.3,oops\n";
        let err = Dataset::read_csv(BufReader::new(text.as_bytes())).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn csv_rejects_bad_header() {
        let text = "a,b\n1,2\n";
        assert!(Dataset::read_csv(BufReader::new(text.as_bytes())).is_err());
    }

    #[test]
    fn csv_rejects_ragged_rows() {
        let text = "x1,y1\n0.1\n";
        let err = Dataset::read_csv(BufReader::new(text.as_bytes())).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other}"),
        }
    }
}
