//! Coordinate-form sparse tensors and the `.tns` text format.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::{Error, Result, ORDER};

/// A third-order sparse tensor in coordinate (COO) form.
///
/// Indices are stored 0-based, one array per mode, so that the sort can
/// permute whole columns by swapping vectors instead of copying them.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseTensor {
    pub dims: [usize; ORDER],
    pub inds: [Vec<usize>; ORDER],
    pub vals: Vec<f64>,
}

impl SparseTensor {
    /// Builds a tensor from coordinate tuples, checking every index against `dims`.
    pub fn new(dims: [usize; ORDER], coords: &[[usize; ORDER]], vals: Vec<f64>) -> Result<Self> {
        if coords.len() != vals.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} coordinates but {} values",
                coords.len(),
                vals.len()
            )));
        }
        let mut inds: [Vec<usize>; ORDER] = Default::default();
        for ind in inds.iter_mut() {
            ind.reserve_exact(coords.len());
        }
        for c in coords {
            for m in 0..ORDER {
                inds[m].push(c[m]);
            }
        }
        let t = SparseTensor { dims, inds, vals };
        t.validate()?;
        Ok(t)
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn coord(&self, p: usize) -> [usize; ORDER] {
        [self.inds[0][p], self.inds[1][p], self.inds[2][p]]
    }

    pub fn coords(&self) -> impl Iterator<Item = [usize; ORDER]> + '_ {
        (0..self.nnz()).map(move |p| self.coord(p))
    }

    /// Squared Frobenius norm.
    pub fn norm_sq(&self) -> f64 {
        self.vals.iter().map(|v| v * v).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.contains(&0) {
            return Err(Error::DimensionMismatch(format!("zero-length mode in {:?}", self.dims)));
        }
        for m in 0..ORDER {
            if self.inds[m].len() != self.vals.len() {
                return Err(Error::DimensionMismatch(format!(
                    "mode {m} has {} indices for {} values",
                    self.inds[m].len(),
                    self.vals.len()
                )));
            }
            if let Some(&bad) = self.inds[m].iter().find(|&&i| i >= self.dims[m]) {
                return Err(Error::DimensionMismatch(format!(
                    "index {bad} out of range for mode {m} of length {}",
                    self.dims[m]
                )));
            }
        }
        Ok(())
    }
}

/// Dataset summary: dimensions, nonzero count and density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TensorStats {
    pub dims: [usize; ORDER],
    pub nnz: usize,
    pub density: f64,
}

impl TensorStats {
    pub fn from_counts(dims: [usize; ORDER], nnz: usize) -> Self {
        let cells: f64 = dims.iter().map(|&d| d as f64).product();
        TensorStats {
            dims,
            nnz,
            density: nnz as f64 / cells,
        }
    }
}

pub fn stats(t: &SparseTensor) -> TensorStats {
    TensorStats::from_counts(t.dims, t.nnz())
}

/// Parses FROSTT-style `.tns` text: one `i j k v` nonzero per line with
/// 1-based indices. Blank lines and lines starting with `#` are skipped.
/// Dimensions are the largest index seen in each mode.
pub fn parse_tns<R: BufRead>(reader: R) -> Result<SparseTensor> {
    let mut inds: [Vec<usize>; ORDER] = Default::default();
    let mut vals = Vec::new();
    let mut dims = [0usize; ORDER];

    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let body = line.trim();
        if body.is_empty() || body.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = body.split_whitespace().collect();
        if fields.len() != ORDER + 1 {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected {} fields, found {}", ORDER + 1, fields.len()),
            });
        }
        for m in 0..ORDER {
            let idx: usize = fields[m].parse().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("bad index {:?}", fields[m]),
            })?;
            if idx < 1 {
                return Err(Error::Parse {
                    line: lineno,
                    msg: "indices are 1-based".into(),
                });
            }
            dims[m] = dims[m].max(idx);
            inds[m].push(idx - 1);
        }
        let v: f64 = fields[ORDER].parse().map_err(|_| Error::Parse {
            line: lineno,
            msg: format!("bad value {:?}", fields[ORDER]),
        })?;
        vals.push(v);
    }

    if vals.is_empty() {
        return Err(Error::NoNonzeros);
    }
    Ok(SparseTensor { dims, inds, vals })
}

pub fn read_tns(path: impl AsRef<Path>) -> Result<SparseTensor> {
    parse_tns(BufReader::new(File::open(path)?))
}

/// Writes `t` in `.tns` form. Values use the shortest decimal that
/// round-trips, so `parse_tns` recovers them bit for bit.
pub fn write_tns<W: Write>(t: &SparseTensor, writer: W) -> Result<()> {
    let mut w = BufWriter::new(writer);
    for p in 0..t.nnz() {
        let [i, j, k] = t.coord(p);
        writeln!(w, "{} {} {} {}", i + 1, j + 1, k + 1, t.vals[p])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_two_nonzeros() {
        let t = parse_tns("1 1 1 2.0\n2 2 2 3.0".as_bytes()).unwrap();
        assert_eq!(t.dims, [2, 2, 2]);
        assert_eq!(t.nnz(), 2);
        assert_eq!(t.vals, vec![2.0, 3.0]);
        assert_eq!(t.coord(1), [1, 1, 1]);
    }

    #[test]
    fn skips_comments_and_blanks() {
        let t = parse_tns("# header\n\n3 1 2 -1.5e2\n   \n".as_bytes()).unwrap();
        assert_eq!(t.dims, [3, 1, 2]);
        assert_eq!(t.vals, vec![-150.0]);
    }

    #[test]
    fn missing_index_is_line_error() {
        match parse_tns("1 1 2.0".as_bytes()) {
            Err(Error::Parse { line: 1, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        match parse_tns("1 1 1 1\n1 x 1 1".as_bytes()) {
            Err(Error::Parse { line: 2, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        match parse_tns("1 0 1 1".as_bytes()) {
            Err(Error::Parse { line: 1, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_tns("1 1 1 abc".as_bytes()), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn empty_input_has_no_nonzeros() {
        let err = parse_tns("".as_bytes()).unwrap_err();
        assert_eq!(err.to_string(), "no nonzeros");
        assert!(matches!(parse_tns("# only\n".as_bytes()), Err(Error::NoNonzeros)));
    }

    #[test]
    fn duplicates_are_kept() {
        let t = parse_tns("1 1 1 1\n1 1 1 2\n".as_bytes()).unwrap();
        assert_eq!(t.nnz(), 2);
    }

    #[test]
    fn density() {
        let full: Vec<[usize; 3]> = (0..8).map(|x| [x & 1, (x >> 1) & 1, x >> 2]).collect();
        let t = SparseTensor::new([2, 2, 2], &full, vec![1.0; 8]).unwrap();
        assert_eq!(stats(&t).density, 1.0);
        let t = parse_tns("1 1 1 2.0\n2 2 2 3.0".as_bytes()).unwrap();
        let s = stats(&t);
        assert_eq!((s.dims, s.nnz, s.density), ([2, 2, 2], 2, 0.25));
    }

    #[test]
    fn density_at_dataset_scale() {
        // NELL-2: 12k x 9k x 29k with 77M nonzeros.
        let s = TensorStats::from_counts([12_000, 9_000, 29_000], 77_000_000);
        assert!((s.density - 2.4e-5).abs() < 0.1e-5, "{}", s.density);
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(SparseTensor::new([2, 2, 2], &[[2, 0, 0]], vec![1.0]).is_err());
        assert!(SparseTensor::new([2, 2, 2], &[[1, 0, 0]], vec![]).is_err());
    }
}
