//! Observations in R^d and their delimiter-separated text form.
//!
//! Data files hold one observation per row with `d` numeric columns separated
//! by commas, tabs, semicolons or spaces. A single non-numeric header row is
//! allowed at the top, blank lines and lines starting with `#` are skipped.
//! Values are written with Rust's shortest round-trip float formatting, so a
//! write followed by a read reproduces every coordinate bit for bit.

use std::io::{BufRead, Write};

use crate::error::{invalid, Result, SpadesError};

/// `n` points in R^d stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    dim: usize,
    data: Vec<f64>,
}

impl SampleSet {
    pub fn new(points: &[Vec<f64>]) -> Result<Self> {
        let first = points.first().ok_or(SpadesError::EmptySample)?;
        let dim = first.len();
        let mut data = Vec::with_capacity(dim * points.len());
        for p in points {
            if p.len() != dim {
                return Err(SpadesError::DimensionMismatch {
                    expected: dim,
                    got: p.len(),
                });
            }
            data.extend_from_slice(p);
        }
        Self::from_flat(dim, data)
    }

    /// Builds a sample from row-major coordinates.
    pub fn from_flat(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dim", "must be at least 1"));
        }
        if data.is_empty() {
            return Err(SpadesError::EmptySample);
        }
        if !data.len().is_multiple_of(dim) {
            return Err(SpadesError::DimensionMismatch {
                expected: dim,
                got: data.len() % dim,
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(invalid("points", "all coordinates must be finite"));
        }
        Ok(Self { dim, data })
    }

    /// A sample with no points. Only simulation code produces these (a draw
    /// of size zero); moment computations reject them.
    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            data: Vec::new(),
        }
    }

    pub(crate) fn from_flat_unchecked(dim: usize, data: Vec<f64>) -> Self {
        debug_assert!(dim > 0 && data.len().is_multiple_of(dim));
        Self { dim, data }
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    /// The points at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> SampleSet {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.point(i));
        }
        SampleSet {
            dim: self.dim,
            data,
        }
    }
}

fn split_fields(line: &str) -> impl Iterator<Item = &str> {
    line.split([',', ';', '\t', ' '])
        .map(str::trim)
        .filter(|f| !f.is_empty())
}

/// Reads a delimiter-separated sample. Errors carry the 1-based line number.
pub fn read_samples<R: BufRead>(reader: R) -> Result<SampleSet> {
    let mut dim = None;
    let mut data = Vec::new();
    let mut seen_row = false;
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = split_fields(trimmed).collect();
        let parsed: std::result::Result<Vec<f64>, _> =
            fields.iter().map(|f| f.parse::<f64>()).collect();
        let row = match parsed {
            Ok(row) => row,
            Err(_) if !seen_row && fields.iter().all(|f| f.parse::<f64>().is_err()) => {
                // header
                seen_row = true;
                continue;
            }
            Err(e) => {
                return Err(SpadesError::Parse {
                    line: lineno,
                    reason: format!("non-numeric field ({e})"),
                })
            }
        };
        seen_row = true;
        if let Some(bad) = row.iter().find(|v| !v.is_finite()) {
            return Err(SpadesError::Parse {
                line: lineno,
                reason: format!("non-finite value {bad}"),
            });
        }
        match dim {
            None => dim = Some(row.len()),
            Some(d) if d != row.len() => {
                return Err(SpadesError::Parse {
                    line: lineno,
                    reason: format!("expected {d} columns, found {}", row.len()),
                })
            }
            _ => {}
        }
        data.extend(row);
    }
    let dim = dim.ok_or(SpadesError::EmptySample)?;
    SampleSet::from_flat(dim, data)
}

/// Writes one observation per row, comma separated, without a header.
pub fn write_samples<W: Write>(sample: &SampleSet, mut out: W) -> Result<()> {
    for p in sample.iter() {
        let row: Vec<String> = p.iter().map(|v| format!("{v:?}")).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reads_header_and_mixed_delimiters() {
        let text = "x,y\n1.0, 2.5\n# comment\n\n3\t4\n";
        let s = read_samples(text.as_bytes()).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.dim(), 2);
        assert_eq!(s.point(1), &[3.0, 4.0]);
    }

    #[test]
    fn malformed_row_reports_line_number() {
        let text = "1.0\n2.0\nabc\n";
        match read_samples(text.as_bytes()) {
            Err(SpadesError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ragged_rows_are_rejected() {
        let text = "1,2\n3\n";
        assert!(matches!(
            read_samples(text.as_bytes()),
            Err(SpadesError::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(
            read_samples("".as_bytes()),
            Err(SpadesError::EmptySample)
        ));
        assert!(SampleSet::new(&[]).is_err());
    }

    proptest! {
        #[test]
        fn write_then_read_is_lossless(
            rows in prop::collection::vec(prop::collection::vec(-1e6f64..1e6, 2), 1..40)
        ) {
            let s = SampleSet::new(&rows).unwrap();
            let mut buf = Vec::new();
            write_samples(&s, &mut buf).unwrap();
            let back = read_samples(buf.as_slice()).unwrap();
            prop_assert_eq!(back, s);
        }
    }
}
