//! Ordering selection.
//!
//! Minimum degree is cheap but can be a poor fill predictor on the nearly
//! dense patterns produced by ray-path Gram matrices. For those we also try
//! an approximate minimum-fill score and, below [`MIN_FILL_MAX_DIM`], exact
//! greedy minimum fill, and keep whichever ordering yields the sparsest
//! factor. Symbolic analysis is cheap next to the numeric factorizations the
//! ordering is reused for.

use crate::scalar::Real;

use super::amd::{amd_order, quotient_order, Score};
use super::{LinalgError, Permutation, SparseSymMatrix, SymbolicCholesky};

/// Largest dimension for which exact greedy minimum fill is attempted.
pub const MIN_FILL_MAX_DIM: usize = 1_000;

fn adjacency<T: Real>(a: &SparseSymMatrix<T>) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); a.dim()];
    for (r, c, _) in a.iter() {
        if r != c {
            adj[r].push(c);
            adj[c].push(r);
        }
    }
    adj
}

struct Bits {
    words: usize,
    data: Vec<u64>,
}

impl Bits {
    fn new(rows: usize, cols: usize) -> Self {
        let words = cols.div_ceil(64);
        Self {
            words,
            data: vec![0; rows * words],
        }
    }

    fn row(&self, i: usize) -> &[u64] {
        &self.data[i * self.words..(i + 1) * self.words]
    }

    fn row_mut(&mut self, i: usize) -> &mut [u64] {
        &mut self.data[i * self.words..(i + 1) * self.words]
    }

    fn set(&mut self, i: usize, j: usize) {
        self.row_mut(i)[j / 64] |= 1 << (j % 64);
    }

    fn clear(&mut self, i: usize, j: usize) {
        self.row_mut(i)[j / 64] &= !(1 << (j % 64));
    }
}

fn ones(words: &[u64]) -> impl Iterator<Item = usize> + '_ {
    words.iter().enumerate().flat_map(|(k, &w)| {
        let mut bits = w;
        std::iter::from_fn(move || {
            (bits != 0).then(|| {
                let b = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                k * 64 + b
            })
        })
    })
}

/// Greedy elimination of the vertex whose elimination adds the fewest new
/// edges (ties: smaller degree, then lower index). `O(n^2 d / 64)` with
/// dense bit rows, so only for moderate `n`.
pub fn min_fill_order(adj: &[Vec<usize>]) -> Permutation {
    let n = adj.len();
    let mut g = Bits::new(n, n);
    for (i, list) in adj.iter().enumerate() {
        for &j in list {
            if i != j {
                g.set(i, j);
                g.set(j, i);
            }
        }
    }
    let mut alive = vec![true; n];
    let mut score = vec![(0usize, 0usize); n];
    let eval = |g: &Bits, u: usize| {
        let nb = g.row(u);
        let deg: usize = nb.iter().map(|w| w.count_ones() as usize).sum();
        let inner: usize = ones(nb)
            .map(|a| g.row(a).iter().zip(nb).map(|(x, y)| (x & y).count_ones() as usize).sum::<usize>())
            .sum();
        (deg * deg.saturating_sub(1) / 2 - inner / 2, deg)
    };
    for u in 0..n {
        score[u] = eval(&g, u);
    }
    let mut order = Vec::with_capacity(n);
    let mut touched = vec![0u64; g.words];
    for _ in 0..n {
        let v = (0..n)
            .filter(|&u| alive[u])
            .min_by_key(|&u| (score[u], u))
            .expect("a vertex remains");
        order.push(v);
        alive[v] = false;
        let nb: Vec<u64> = g.row(v).to_vec();
        // make N(v) a clique and drop v
        touched.iter_mut().for_each(|w| *w = 0);
        for u in ones(&nb) {
            for (t, w) in g.row_mut(u).iter_mut().zip(&nb) {
                *t |= w;
            }
            g.clear(u, u);
            g.clear(u, v);
            for (t, w) in touched.iter_mut().zip(g.row(u)) {
                *t |= w;
            }
        }
        for u in ones(&touched) {
            if alive[u] {
                score[u] = eval(&g, u);
            }
        }
        for u in ones(&nb) {
            score[u] = eval(&g, u);
        }
    }
    Permutation::new(order).expect("every vertex eliminated once")
}

/// Symbolic analysis under the best of the candidate orderings.
pub fn analyze_fill_reducing<T: Real>(a: &SparseSymMatrix<T>) -> Result<SymbolicCholesky, LinalgError> {
    let adj = adjacency(a);
    let mut best = SymbolicCholesky::analyze(a, amd_order(a))?;
    let mut candidates = vec![quotient_order(adj.clone(), None, Score::Fill)];
    if a.dim() <= MIN_FILL_MAX_DIM {
        candidates.push(min_fill_order(&adj));
    }
    for perm in candidates {
        let s = SymbolicCholesky::analyze(a, perm)?;
        if s.nnz_l() < best.nnz_l() {
            best = s;
        }
    }
    Ok(best)
}

/// Best ordering found by [`analyze_fill_reducing`].
pub fn fill_reducing_order<T: Real>(a: &SparseSymMatrix<T>) -> Permutation {
    analyze_fill_reducing(a)
        .expect("own permutation has matching length")
        .permutation()
        .clone()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn min_fill_on_cycle_adds_n_minus_3_edges() {
        // eliminating a cycle of n vertices fills exactly n - 3 edges
        let n = 8;
        let t = (0..n).flat_map(|i| [(i, i, 4.0), ((i + 1) % n, i, -1.0)]);
        let a = SparseSymMatrix::assemble(n, t).unwrap();
        let s = SymbolicCholesky::analyze(&a, min_fill_order(&adjacency(&a))).unwrap();
        assert_eq!(s.nnz_l(), n + n + (n - 3));
    }

    #[test]
    fn never_worse_than_amd() {
        let mut rng = crate::random::seeded(9);
        use rand::Rng;
        for _ in 0..5 {
            let n = 60;
            let t: Vec<_> = (0..n)
                .map(|i| (i, i, 10.0))
                .chain((0..150).map(|_| {
                    let (i, j) = (rng.random_range(0..n), rng.random_range(0..n));
                    (i.max(j), i.min(j), 0.1)
                }))
                .collect();
            let a = SparseSymMatrix::assemble(n, t).unwrap();
            let amd = SymbolicCholesky::analyze(&a, amd_order(&a)).unwrap().nnz_l();
            assert!(analyze_fill_reducing(&a).unwrap().nnz_l() <= amd);
        }
    }
}
