//! Approximate minimum degree ordering on the quotient graph.
//!
//! Eliminated variables become elements; a variable's adjacency is split into
//! its remaining variable neighbours and the elements it touches. Degrees are
//! the usual AMD upper bound
//! `min(n_left - 1, d_old + |Lp \ i|, |Ai \ i| + |Lp \ i| + sum |Le \ Lp|)`,
//! elements whose variable set is covered by the new element are absorbed,
//! and ties are broken by the lowest variable index.

use std::collections::BTreeSet;

use crate::scalar::Real;

use super::{Permutation, SparseSymMatrix, SymbolicCholesky};

#[derive(Clone, Copy, PartialEq, Eq)]
enum Status {
    Variable,
    Element,
    Absorbed,
}

/// Fill-reducing ordering for the symmetric pattern of `a`: minimum degree,
/// unless the natural or reversed order already gives a sparser factor
/// (wide ellipsoidal neighbourhoods on a grid are nearly banded).
pub fn amd_order<T: Real>(a: &SparseSymMatrix<T>) -> Permutation {
    let n = a.dim();
    let mut adj = vec![Vec::new(); n];
    for (r, c, _) in a.iter() {
        if r != c {
            adj[r].push(c);
            adj[c].push(r);
        }
    }
    let fill = |p: &Permutation| SymbolicCholesky::analyze(a, p.clone()).map_or(usize::MAX, |s| s.nnz_l());
    let mut best = amd_order_pattern(adj);
    let mut best_fill = fill(&best);
    for p in [Permutation::identity(n), Permutation::reverse(n)] {
        let f = fill(&p);
        if f < best_fill {
            (best, best_fill) = (p, f);
        }
    }
    best
}

/// Same as [`amd_order`], starting from symmetric adjacency lists (no self loops).
pub fn amd_order_pattern(adj_vars: Vec<Vec<usize>>) -> Permutation {
    quotient_order(adj_vars, None, Score::Degree)
}

/// Minimum degree where every variable of constraint set `k` is eliminated
/// before any of set `k + 1`.
pub fn amd_order_constrained(adj_vars: Vec<Vec<usize>>, constraints: Option<&[usize]>) -> Permutation {
    quotient_order(adj_vars, constraints, Score::Degree)
}

/// Greedy pivot selection key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Score {
    /// Approximate external degree.
    Degree,
    /// Approximate fill `d(d-1)/2 - c(c-1)/2`, where `c` is the part of
    /// the variable's neighbourhood already forming a clique with it
    /// through the most recent element.
    Fill,
}

fn score(kind: Score, d: usize, clique: usize) -> usize {
    match kind {
        Score::Degree => d,
        Score::Fill => {
            let c = clique.min(d);
            d * d.saturating_sub(1) / 2 - c * c.saturating_sub(1) / 2
        }
    }
}

pub fn quotient_order(mut adj_vars: Vec<Vec<usize>>, constraints: Option<&[usize]>, kind: Score) -> Permutation {
    let n = adj_vars.len();
    let set = |i: usize| constraints.map_or(0, |c| c[i]);
    for list in adj_vars.iter_mut() {
        list.sort_unstable();
        list.dedup();
    }
    let mut adj_elems: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut elem_vars: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut status = vec![Status::Variable; n];
    let mut degree: Vec<usize> = adj_vars.iter().map(Vec::len).collect();
    let mut key: Vec<usize> = degree.iter().map(|&d| score(kind, d, 0)).collect();
    let mut queue: BTreeSet<(usize, usize, usize)> = (0..n).map(|i| (set(i), key[i], i)).collect();

    // mark[i] == stamp means "i is in the current pivot element"
    let mut mark = vec![0usize; n];
    let mut stamp = 0usize;
    // |Le \ Lp| scratch, valid when w_stamp[e] == stamp
    let mut w = vec![0usize; n];
    let mut w_stamp = vec![0usize; n];

    let mut order = Vec::with_capacity(n);
    while let Some(&(_, _, p)) = queue.iter().next() {
        queue.remove(&(set(p), key[p], p));
        order.push(p);
        stamp += 1;
        mark[p] = stamp;

        // Lp = (Ap ∪ Le for e in Ep) \ {p}
        let mut lp = Vec::new();
        for &j in &adj_vars[p] {
            if status[j] == Status::Variable && mark[j] != stamp {
                mark[j] = stamp;
                lp.push(j);
            }
        }
        for &e in &adj_elems[p] {
            if status[e] != Status::Element {
                continue;
            }
            for &j in &elem_vars[e] {
                if status[j] == Status::Variable && mark[j] != stamp {
                    mark[j] = stamp;
                    lp.push(j);
                }
            }
            status[e] = Status::Absorbed;
            elem_vars[e] = Vec::new();
        }
        lp.sort_unstable();
        status[p] = Status::Element;
        adj_vars[p] = Vec::new();
        adj_elems[p] = Vec::new();

        // prune adjacency of every variable in Lp
        for &i in &lp {
            adj_elems[i].retain(|&e| status[e] == Status::Element);
            adj_elems[i].push(p);
            adj_vars[i].retain(|&j| status[j] == Status::Variable && mark[j] != stamp);
        }

        // w(e) = |Le \ Lp| for elements adjacent to Lp
        for &i in &lp {
            for &e in &adj_elems[i] {
                if e == p {
                    continue;
                }
                if w_stamp[e] != stamp {
                    w_stamp[e] = stamp;
                    w[e] = elem_vars[e].len();
                }
                w[e] -= 1;
            }
        }
        // absorb elements covered by Lp
        for &i in &lp {
            for &e in &adj_elems[i] {
                if e != p && w_stamp[e] == stamp && w[e] == 0 && status[e] == Status::Element {
                    status[e] = Status::Absorbed;
                    elem_vars[e] = Vec::new();
                }
            }
        }

        let remaining = n - order.len();
        let lp_len = lp.len();
        for &i in &lp {
            adj_elems[i].retain(|&e| status[e] == Status::Element);
            let external: usize = adj_elems[i]
                .iter()
                .filter(|&&e| e != p)
                .map(|&e| w[e])
                .sum();
            let bound = adj_vars[i].len() + (lp_len - 1) + external;
            let d = bound
                .min(remaining.saturating_sub(1))
                .min(degree[i] + lp_len - 1);
            degree[i] = d;
            let k = score(kind, d, lp_len - 1);
            if k != key[i] {
                queue.remove(&(set(i), key[i], i));
                key[i] = k;
                queue.insert((set(i), k, i));
            }
        }
        elem_vars[p] = lp;
    }
    Permutation::new(order).expect("every variable eliminated exactly once")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_gives_identity() {
        let a = SparseSymMatrix::<f64>::identity(5);
        assert_eq!(amd_order(&a), Permutation::identity(5));
    }

    #[test]
    fn arrowhead_hub_goes_last() {
        let mut t = vec![(0, 0, 10.0)];
        for i in 1..6 {
            t.push((i, i, 2.0));
            t.push((i, 0, 1.0));
        }
        let a = SparseSymMatrix::assemble(6, t).unwrap();
        let p = amd_order(&a);
        // hub among the last two: no fill either way
        assert!(p.forward()[4..].contains(&0));
        let s = crate::sparse::SymbolicCholesky::analyze(&a, p).unwrap();
        assert_eq!(s.nnz_l(), 11);
    }

    #[test]
    fn path_graph_eliminates_leaves_first() {
        let adj = vec![vec![1], vec![0, 2], vec![1, 3], vec![2]];
        let p = amd_order_pattern(adj);
        assert_eq!(p.forward()[0], 0);
    }
}
