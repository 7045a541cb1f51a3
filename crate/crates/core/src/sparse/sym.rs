use std::io::{self, Write};

use crate::scalar::Real;

use super::LinalgError;

/// Symmetric sparse matrix stored as its lower triangle in compressed
/// column form. Row indices within each column are strictly increasing, so a
/// present diagonal entry is always the first entry of its column.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSymMatrix<T> {
    dim: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<T>,
}

impl<T: Real> SparseSymMatrix<T> {
    /// Builds the canonical lower-triangular storage from coordinate triplets.
    ///
    /// Upper-triangle entries are mirrored into the lower triangle and
    /// duplicate coordinates are summed. Explicit zeros are kept, so the
    /// pattern only depends on which coordinates were supplied.
    pub fn assemble<I>(dim: usize, triplets: I) -> Result<Self, LinalgError>
    where
        I: IntoIterator<Item = (usize, usize, T)>,
    {
        let mut entries: Vec<(usize, usize, T)> = Vec::new();
        for (r, c, v) in triplets {
            if r >= dim || c >= dim {
                return Err(LinalgError::IndexOutOfRange { row: r, col: c, dim });
            }
            if !v.is_finite() {
                return Err(LinalgError::NonFinite { row: r, col: c });
            }
            let (r, c) = if r >= c { (r, c) } else { (c, r) };
            entries.push((c, r, v));
        }
        entries.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));

        let mut col_ptr = vec![0usize; dim + 1];
        let mut row_idx = Vec::with_capacity(entries.len());
        let mut values: Vec<T> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (c, r, v) in entries {
            if last == Some((c, r)) {
                *values.last_mut().expect("previous entry") += v;
                continue;
            }
            last = Some((c, r));
            row_idx.push(r);
            values.push(v);
            col_ptr[c + 1] += 1;
        }
        for c in 0..dim {
            col_ptr[c + 1] += col_ptr[c];
        }
        Ok(Self {
            dim,
            col_ptr,
            row_idx,
            values,
        })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            dim,
            col_ptr: (0..=dim).collect(),
            row_idx: (0..dim).collect(),
            values: vec![T::one(); dim],
        }
    }

    /// Matrix with the same pattern as `self` but different stored values.
    pub fn with_values(&self, values: Vec<T>) -> Result<Self, LinalgError> {
        if values.len() != self.values.len() {
            return Err(LinalgError::DimensionMismatch {
                expected: self.values.len(),
                found: values.len(),
            });
        }
        Ok(Self {
            dim: self.dim,
            col_ptr: self.col_ptr.clone(),
            row_idx: self.row_idx.clone(),
            values,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of stored lower-triangle entries.
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn col_ptr(&self) -> &[usize] {
        &self.col_ptr
    }

    pub fn row_indices(&self) -> &[usize] {
        &self.row_idx
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn same_pattern(&self, other: &Self) -> bool {
        self.dim == other.dim && self.col_ptr == other.col_ptr && self.row_idx == other.row_idx
    }

    /// Position of the stored entry `(row, col)` (either triangle), if any.
    pub fn position(&self, row: usize, col: usize) -> Option<usize> {
        let (r, c) = if row >= col { (row, col) } else { (col, row) };
        if c >= self.dim {
            return None;
        }
        let range = self.col_ptr[c]..self.col_ptr[c + 1];
        self.row_idx[range.clone()]
            .binary_search(&r)
            .ok()
            .map(|k| range.start + k)
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        self.position(row, col)
            .map_or(T::zero(), |k| self.values[k])
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn max_diagonal(&self) -> T {
        (0..self.dim)
            .filter_map(|c| {
                let k = self.col_ptr[c];
                (k < self.col_ptr[c + 1] && self.row_idx[k] == c).then(|| self.values[k])
            })
            .fold(T::zero(), T::max)
    }

    /// Iterates over stored lower-triangle entries as `(row, col, value)`.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.dim).flat_map(move |c| {
            (self.col_ptr[c]..self.col_ptr[c + 1]).map(move |k| (self.row_idx[k], c, self.values[k]))
        })
    }

    /// Symmetric product `A x`.
    pub fn mul_vec(&self, x: &[T]) -> Result<Vec<T>, LinalgError> {
        if x.len() != self.dim {
            return Err(LinalgError::DimensionMismatch {
                expected: self.dim,
                found: x.len(),
            });
        }
        let mut y = vec![T::zero(); self.dim];
        for (r, c, v) in self.iter() {
            y[r] += v * x[c];
            if r != c {
                y[c] += v * x[r];
            }
        }
        Ok(y)
    }

    /// `x' A x`.
    pub fn quad_form(&self, x: &[T]) -> Result<T, LinalgError> {
        if x.len() != self.dim {
            return Err(LinalgError::DimensionMismatch {
                expected: self.dim,
                found: x.len(),
            });
        }
        let two = T::c(2.0);
        Ok(self
            .iter()
            .map(|(r, c, v)| if r == c { v * x[r] * x[r] } else { two * v * x[r] * x[c] })
            .sum())
    }

    /// Dense symmetric completion, row-major.
    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let mut d = vec![vec![T::zero(); self.dim]; self.dim];
        for (r, c, v) in self.iter() {
            d[r][c] = v;
            d[c][r] = v;
        }
        d
    }

    /// Writes the stored entries as `row col value` lines.
    pub fn write_coordinates<W: Write>(&self, mut w: W) -> io::Result<()> {
        for (r, c, v) in self.iter() {
            writeln!(w, "{r} {c} {v:e}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_from_triplets() {
        let a = SparseSymMatrix::assemble(2, [(0, 0, 1.0), (1, 1, 1.0)]).unwrap();
        assert_eq!(a.to_dense(), vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert_eq!(a, SparseSymMatrix::identity(2));
    }

    #[test]
    fn symmetric_completion() {
        let a = SparseSymMatrix::assemble(2, [(0, 0, 2.0), (1, 0, -1.0), (1, 1, 2.0)]).unwrap();
        assert_eq!(a.to_dense(), vec![vec![2.0, -1.0], vec![-1.0, 2.0]]);
        assert_eq!(a.nnz(), 3);
    }

    #[test]
    fn upper_entries_are_mirrored() {
        let a = SparseSymMatrix::assemble(2, [(0, 1, -1.0), (1, 0, -1.0)]).unwrap();
        assert_eq!(a.nnz(), 1);
        assert_eq!(a.get(0, 1), -2.0);
        assert_eq!(a.get(1, 0), -2.0);
    }

    #[test]
    fn duplicates_summed() {
        let a = SparseSymMatrix::assemble(2, [(0, 0, 1.0), (0, 0, 1.0)]).unwrap();
        assert_eq!(a.get(0, 0), 2.0);
        assert_eq!(a.nnz(), 1);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            SparseSymMatrix::assemble(2, [(2, 0, 1.0)]),
            Err(LinalgError::IndexOutOfRange { .. })
        ));
        assert!(matches!(
            SparseSymMatrix::assemble(2, [(1, 0, f64::NAN)]),
            Err(LinalgError::NonFinite { .. })
        ));
    }

    #[test]
    fn products() {
        let a = SparseSymMatrix::assemble(2, [(0, 0, 4.0), (1, 0, 2.0), (1, 1, 3.0)]).unwrap();
        assert_eq!(a.mul_vec(&[1.0, 1.0]).unwrap(), vec![6.0, 5.0]);
        assert_eq!(a.quad_form(&[1.0, 1.0]).unwrap(), 11.0);
        assert_eq!(a.max_diagonal(), 4.0);
    }

    #[test]
    fn coordinate_dump() {
        let a = SparseSymMatrix::assemble(2, [(0, 0, 4.0), (1, 0, 2.0)]).unwrap();
        let mut buf = Vec::new();
        a.write_coordinates(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.starts_with("0 0 4e0"));
    }
}
