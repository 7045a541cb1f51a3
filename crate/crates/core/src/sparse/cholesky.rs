//! Up-looking sparse Cholesky with a reusable symbolic analysis.
//!
//! [`SymbolicCholesky::analyze`] permutes the pattern, builds the elimination
//! tree and the column counts of `L`. [`SymbolicCholesky::factor`] then runs
//! the numeric pass for any matrix sharing that pattern, which is what an
//! MCMC loop needs when only the values change between iterations.

use std::io::{self, Write};
use std::sync::Arc;

use rand::Rng;

use crate::random::standard_normal;
use crate::scalar::Real;

use super::{amd_order, LinalgError, Permutation, SparseSymMatrix};

const NONE: usize = usize::MAX;

/// Relative pivot threshold: a pivot `<= PIVOT_TOL * max(diag A)` is rejected.
pub const PIVOT_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct SymbolicCholesky {
    dim: usize,
    perm: Permutation,
    // pattern of the matrix this analysis was built from
    a_col_ptr: Vec<usize>,
    a_row_idx: Vec<usize>,
    // upper triangle of C = P A P' in compressed columns
    c_col_ptr: Vec<usize>,
    c_row_idx: Vec<usize>,
    a_to_c: Vec<usize>,
    parent: Vec<usize>,
    l_col_ptr: Vec<usize>,
}

impl SymbolicCholesky {
    pub fn analyze<T: Real>(a: &SparseSymMatrix<T>, perm: Permutation) -> Result<Self, LinalgError> {
        let n = a.dim();
        if perm.len() != n {
            return Err(LinalgError::DimensionMismatch {
                expected: n,
                found: perm.len(),
            });
        }
        let pinv = perm.inverse();

        let mut counts = vec![0usize; n + 1];
        for (r, c, _) in a.iter() {
            let (i, j) = (pinv[r], pinv[c]);
            counts[i.max(j) + 1] += 1;
        }
        for k in 0..n {
            counts[k + 1] += counts[k];
        }
        let c_col_ptr = counts.clone();
        let mut next = counts;
        let mut c_row_idx = vec![0usize; a.nnz()];
        let mut a_to_c = vec![0usize; a.nnz()];
        for (k, (r, c, _)) in a.iter().enumerate() {
            let (i, j) = (pinv[r], pinv[c]);
            let col = i.max(j);
            let dst = next[col];
            next[col] += 1;
            c_row_idx[dst] = i.min(j);
            a_to_c[k] = dst;
        }

        let parent = etree(n, &c_col_ptr, &c_row_idx);

        // column counts from the row subtrees
        let mut col_count = vec![1usize; n];
        let mut flag = vec![NONE; n];
        let mut stack = Vec::new();
        for k in 0..n {
            ereach(k, &c_col_ptr, &c_row_idx, &parent, &mut flag, &mut stack);
            for &j in &stack {
                col_count[j] += 1;
            }
        }
        let mut l_col_ptr = vec![0usize; n + 1];
        for k in 0..n {
            l_col_ptr[k + 1] = l_col_ptr[k] + col_count[k];
        }

        Ok(Self {
            dim: n,
            perm,
            a_col_ptr: a.col_ptr().to_vec(),
            a_row_idx: a.row_indices().to_vec(),
            c_col_ptr,
            c_row_idx,
            a_to_c,
            parent,
            l_col_ptr,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn permutation(&self) -> &Permutation {
        &self.perm
    }

    /// Number of nonzeros of `L`, diagonal included.
    pub fn nnz_l(&self) -> usize {
        self.l_col_ptr[self.dim]
    }

    /// Elimination tree parent of each permuted column (`None` for roots).
    pub fn elimination_tree(&self) -> Vec<Option<usize>> {
        self.parent.iter().map(|&p| (p != NONE).then_some(p)).collect()
    }

    pub fn matches_pattern<T: Real>(&self, a: &SparseSymMatrix<T>) -> bool {
        a.dim() == self.dim && a.col_ptr() == self.a_col_ptr && a.row_indices() == self.a_row_idx
    }

    /// Numeric factorization of a matrix sharing the analyzed pattern.
    pub fn factor<T: Real>(self: &Arc<Self>, a: &SparseSymMatrix<T>) -> Result<CholeskyFactor<T>, LinalgError> {
        if !self.matches_pattern(a) {
            return Err(LinalgError::PatternMismatch);
        }
        let n = self.dim;
        let mut c_values = vec![T::zero(); a.nnz()];
        for (k, &v) in a.values().iter().enumerate() {
            c_values[self.a_to_c[k]] = v;
        }
        let tol = T::c(PIVOT_TOL) * a.max_diagonal();

        let lp = &self.l_col_ptr;
        let nnz = lp[n];
        let mut li = vec![0usize; nnz];
        let mut lx = vec![T::zero(); nnz];
        let mut next: Vec<usize> = lp[..n].to_vec();
        let mut x = vec![T::zero(); n];
        let mut flag = vec![NONE; n];
        let mut stack = Vec::new();

        for k in 0..n {
            ereach(k, &self.c_col_ptr, &self.c_row_idx, &self.parent, &mut flag, &mut stack);
            for p in self.c_col_ptr[k]..self.c_col_ptr[k + 1] {
                x[self.c_row_idx[p]] += c_values[p];
            }
            let mut d = x[k];
            x[k] = T::zero();
            for &i in stack.iter() {
                let lki = x[i] / lx[lp[i]];
                x[i] = T::zero();
                for p in lp[i] + 1..next[i] {
                    x[li[p]] -= lx[p] * lki;
                }
                d -= lki * lki;
                let p = next[i];
                next[i] += 1;
                li[p] = k;
                lx[p] = lki;
            }
            if !(d > tol) {
                return Err(LinalgError::NotPositiveDefinite {
                    column: self.perm.forward()[k],
                    pivot: d.to_f64_lossy(),
                });
            }
            let p = next[k];
            next[k] += 1;
            li[p] = k;
            lx[p] = d.sqrt();
        }

        Ok(CholeskyFactor {
            symbolic: Arc::clone(self),
            row_idx: li,
            values: lx,
        })
    }
}

/// Elimination tree of the matrix whose upper triangle is given by columns.
fn etree(n: usize, col_ptr: &[usize], row_idx: &[usize]) -> Vec<usize> {
    let mut parent = vec![NONE; n];
    let mut ancestor = vec![NONE; n];
    for k in 0..n {
        for p in col_ptr[k]..col_ptr[k + 1] {
            let mut i = row_idx[p];
            while i != NONE && i < k {
                let next = ancestor[i];
                ancestor[i] = k;
                if next == NONE {
                    parent[i] = k;
                }
                i = next;
            }
        }
    }
    parent
}

/// Pattern of row `k` of `L` (excluding the diagonal), written to `stack` in
/// topological order: every column precedes its ancestors.
fn ereach(
    k: usize,
    col_ptr: &[usize],
    row_idx: &[usize],
    parent: &[usize],
    flag: &mut [usize],
    stack: &mut Vec<usize>,
) {
    stack.clear();
    flag[k] = k;
    for p in col_ptr[k]..col_ptr[k + 1] {
        let mut i = row_idx[p];
        if i > k {
            continue;
        }
        let start = stack.len();
        while flag[i] != k {
            stack.push(i);
            flag[i] = k;
            i = parent[i];
        }
        stack[start..].reverse();
    }
    // later paths first, each path leaf-to-root
    stack.reverse();
}

/// Numeric Cholesky factor `P A P' = L L'`.
#[derive(Debug, Clone)]
pub struct CholeskyFactor<T> {
    symbolic: Arc<SymbolicCholesky>,
    row_idx: Vec<usize>,
    values: Vec<T>,
}

impl<T: Real> CholeskyFactor<T> {
    pub fn dim(&self) -> usize {
        self.symbolic.dim
    }

    pub fn symbolic(&self) -> &Arc<SymbolicCholesky> {
        &self.symbolic
    }

    pub fn permutation(&self) -> &Permutation {
        &self.symbolic.perm
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    fn col(&self, j: usize) -> std::ops::Range<usize> {
        self.symbolic.l_col_ptr[j]..self.symbolic.l_col_ptr[j + 1]
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.dim()).map(|j| self.values[self.col(j).start]).collect()
    }

    /// Entries of `L` as `(row, col, value)` in permuted coordinates.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.dim()).flat_map(move |j| self.col(j).map(move |p| (self.row_idx[p], j, self.values[p])))
    }

    /// In-place `L x = b`.
    pub fn solve_lower_in_place(&self, x: &mut [T]) {
        for j in 0..self.dim() {
            let r = self.col(j);
            x[j] /= self.values[r.start];
            let xj = x[j];
            for p in r.start + 1..r.end {
                x[self.row_idx[p]] -= self.values[p] * xj;
            }
        }
    }

    /// In-place `L' x = b`.
    pub fn solve_upper_in_place(&self, x: &mut [T]) {
        for j in (0..self.dim()).rev() {
            let r = self.col(j);
            let mut s = x[j];
            for p in r.start + 1..r.end {
                s -= self.values[p] * x[self.row_idx[p]];
            }
            x[j] = s / self.values[r.start];
        }
    }

    fn check_len(&self, n: usize) -> Result<(), LinalgError> {
        if n != self.dim() {
            return Err(LinalgError::DimensionMismatch {
                expected: self.dim(),
                found: n,
            });
        }
        Ok(())
    }

    /// Solves `A x = b` as `x = P' L'^{-1} L^{-1} P b`.
    pub fn solve(&self, b: &[T]) -> Result<Vec<T>, LinalgError> {
        self.check_len(b.len())?;
        let mut y = self.permutation().apply(b);
        self.solve_lower_in_place(&mut y);
        self.solve_upper_in_place(&mut y);
        Ok(self.permutation().apply_inverse(&y))
    }

    /// `log |A| = 2 sum log L_ii`.
    pub fn log_det(&self) -> T {
        T::c(2.0) * (0..self.dim()).map(|j| self.values[self.col(j).start].ln()).sum::<T>()
    }

    /// One draw from `N(A^{-1} xi, A^{-1})` where `A` is the factored
    /// precision: `v = L'^{-1}(L^{-1} P xi + z)` with `z` standard normal,
    /// returned as `P' v`.
    pub fn sample_by_precision<R: Rng + ?Sized>(&self, xi: &[T], rng: &mut R) -> Result<Vec<T>, LinalgError> {
        self.check_len(xi.len())?;
        let mut v = self.permutation().apply(xi);
        self.solve_lower_in_place(&mut v);
        for vi in v.iter_mut() {
            *vi += standard_normal::<T, _>(rng);
        }
        self.solve_upper_in_place(&mut v);
        Ok(self.permutation().apply_inverse(&v))
    }

    /// Writes `L` as `row col value` lines (permuted coordinates).
    pub fn write_coordinates<W: Write>(&self, mut w: W) -> io::Result<()> {
        for (r, c, v) in self.entries() {
            writeln!(w, "{r} {c} {v:e}")?;
        }
        Ok(())
    }
}

/// Symbolic analysis plus numeric factorization under `perm`.
pub fn cholesky<T: Real>(a: &SparseSymMatrix<T>, perm: Permutation) -> Result<CholeskyFactor<T>, LinalgError> {
    Arc::new(SymbolicCholesky::analyze(a, perm)?).factor(a)
}

/// Exact draw from `N(omega^{-1} xi, omega^{-1})` using a fill-reducing
/// permutation of the precision matrix.
pub fn sample_gaussian_by_precision<T: Real, R: Rng + ?Sized>(
    omega: &SparseSymMatrix<T>,
    xi: &[T],
    rng: &mut R,
) -> Result<Vec<T>, LinalgError> {
    if xi.len() != omega.dim() {
        return Err(LinalgError::DimensionMismatch {
            expected: omega.dim(),
            found: xi.len(),
        });
    }
    let factor = cholesky(omega, amd_order(omega))?;
    factor.sample_by_precision(xi, rng)
}
