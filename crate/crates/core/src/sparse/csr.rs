use crate::scalar::Real;

use super::{LinalgError, SparseSymMatrix};

/// General rectangular sparse matrix in compressed row form.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix<T> {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<T>,
}

impl<T: Real> SparseMatrix<T> {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            row_ptr: vec![0; nrows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Builds from coordinate triplets; duplicates are summed.
    pub fn from_triplets<I>(nrows: usize, ncols: usize, triplets: I) -> Result<Self, LinalgError>
    where
        I: IntoIterator<Item = (usize, usize, T)>,
    {
        let mut entries: Vec<(usize, usize, T)> = Vec::new();
        for (r, c, v) in triplets {
            if r >= nrows || c >= ncols {
                return Err(LinalgError::IndexOutOfRange {
                    row: r,
                    col: c,
                    dim: nrows.max(ncols),
                });
            }
            if !v.is_finite() {
                return Err(LinalgError::NonFinite { row: r, col: c });
            }
            entries.push((r, c, v));
        }
        entries.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut m = Self::zeros(nrows, ncols);
        let mut last = None;
        for (r, c, v) in entries {
            if last == Some((r, c)) {
                *m.values.last_mut().expect("previous entry") += v;
                continue;
            }
            last = Some((r, c));
            m.col_idx.push(c);
            m.values.push(v);
            m.row_ptr[r + 1] += 1;
        }
        for r in 0..nrows {
            m.row_ptr[r + 1] += m.row_ptr[r];
        }
        Ok(m)
    }

    /// Builds from explicit sorted sparse rows `(columns, values)`.
    pub fn from_rows(ncols: usize, rows: Vec<(Vec<usize>, Vec<T>)>) -> Result<Self, LinalgError> {
        let triplets = rows
            .into_iter()
            .enumerate()
            .flat_map(|(r, (cols, vals))| cols.into_iter().zip(vals).map(move |(c, v)| (r, c, v)))
            .collect::<Vec<_>>();
        let nrows = triplets.iter().map(|t| t.0 + 1).max().unwrap_or(0);
        Self::from_triplets(nrows, ncols, triplets)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> (&[usize], &[T]) {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        (&self.col_idx[range.clone()], &self.values[range])
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.nrows).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (r, self.col_idx[k], self.values[k]))
        })
    }

    /// `X v`.
    pub fn mul_vec(&self, v: &[T]) -> Result<Vec<T>, LinalgError> {
        if v.len() != self.ncols {
            return Err(LinalgError::DimensionMismatch {
                expected: self.ncols,
                found: v.len(),
            });
        }
        Ok((0..self.nrows)
            .map(|r| {
                let (cols, vals) = self.row(r);
                cols.iter().zip(vals).map(|(&c, &x)| x * v[c]).sum()
            })
            .collect())
    }

    /// `X' u`.
    pub fn tr_mul_vec(&self, u: &[T]) -> Result<Vec<T>, LinalgError> {
        if u.len() != self.nrows {
            return Err(LinalgError::DimensionMismatch {
                expected: self.nrows,
                found: u.len(),
            });
        }
        let mut out = vec![T::zero(); self.ncols];
        for (r, c, x) in self.iter() {
            out[c] += x * u[r];
        }
        Ok(out)
    }

    /// Horizontal concatenation `[self | other]`.
    pub fn hstack(&self, other: &Self) -> Result<Self, LinalgError> {
        if self.nrows != other.nrows {
            return Err(LinalgError::DimensionMismatch {
                expected: self.nrows,
                found: other.nrows,
            });
        }
        let shift = self.ncols;
        Self::from_triplets(
            self.nrows,
            self.ncols + other.ncols,
            self.iter()
                .chain(other.iter().map(|(r, c, v)| (r, c + shift, v))),
        )
    }

    /// Gram matrix `X' X` as a symmetric sparse matrix.
    pub fn gram(&self) -> SparseSymMatrix<T> {
        let mut triplets = Vec::new();
        for r in 0..self.nrows {
            let (cols, vals) = self.row(r);
            for a in 0..cols.len() {
                for b in 0..=a {
                    triplets.push((cols[a], cols[b], vals[a] * vals[b]));
                }
            }
        }
        SparseSymMatrix::assemble(self.ncols, triplets).expect("entries valid by construction")
    }

    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let mut d = vec![vec![T::zero(); self.ncols]; self.nrows];
        for (r, c, v) in self.iter() {
            d[r][c] = v;
        }
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> SparseMatrix<f64> {
        SparseMatrix::from_triplets(3, 2, [(0, 0, 1.0), (1, 1, 2.0), (2, 0, 3.0), (2, 1, 4.0), (2, 1, 1.0)])
            .unwrap()
    }

    #[test]
    fn products_match_dense() {
        let x = sample();
        assert_eq!(x.nnz(), 4);
        assert_eq!(x.mul_vec(&[1.0, 1.0]).unwrap(), vec![1.0, 2.0, 8.0]);
        assert_eq!(x.tr_mul_vec(&[1.0, 1.0, 1.0]).unwrap(), vec![4.0, 7.0]);
    }

    #[test]
    fn gram_is_xtx() {
        let g = sample().gram();
        // columns: [1,0,3], [0,2,5]
        assert_eq!(g.to_dense(), vec![vec![10.0, 15.0], vec![15.0, 29.0]]);
    }

    #[test]
    fn hstack_shifts_columns() {
        let x = sample();
        let y = SparseMatrix::from_triplets(3, 1, [(1, 0, 7.0)]).unwrap();
        let z = x.hstack(&y).unwrap();
        assert_eq!(z.ncols(), 3);
        assert_eq!(z.to_dense()[1], vec![0.0, 2.0, 7.0]);
    }
}
