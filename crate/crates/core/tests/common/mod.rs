#![allow(dead_code)]

use gmrf_tomo::random::{seeded, SeededRng};
use gmrf_tomo::sparse::{cholesky, Permutation, SparseMatrix, SparseSymMatrix};
use gmrf_tomo::spatial::{Edge, NeighborGraph};
use nalgebra::DMatrix;
use rand::Rng;

pub fn rng(seed: u64) -> SeededRng {
    seeded(seed)
}

pub fn dense_sym(a: &SparseSymMatrix<f64>) -> DMatrix<f64> {
    let n = a.dim();
    let d = a.to_dense();
    DMatrix::from_fn(n, n, |i, j| d[i][j])
}

pub fn dense(a: &SparseMatrix<f64>) -> DMatrix<f64> {
    let d = a.to_dense();
    DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| d[i][j])
}

/// `L L'` in original indices.
pub fn reconstruct(a: &SparseSymMatrix<f64>, perm: Permutation) -> DMatrix<f64> {
    let f = cholesky(a, perm).unwrap();
    let n = a.dim();
    let mut l = DMatrix::zeros(n, n);
    for (i, j, v) in f.entries() {
        l[(i, j)] = v;
    }
    let pll = &l * l.transpose();
    let inv = f.permutation().inverse();
    DMatrix::from_fn(n, n, |i, j| pll[(inv[i], inv[j])])
}

/// Sparse SPD matrix: random symmetric off-diagonal pattern, diagonal made
/// strictly dominant.
pub fn random_spd<R: Rng>(n: usize, density: f64, rng: &mut R) -> SparseSymMatrix<f64> {
    let mut trip = Vec::new();
    let mut rowsum = vec![0.0; n];
    for i in 0..n {
        for j in 0..i {
            if rng.random::<f64>() < density {
                let v = rng.random_range(-1.0..1.0);
                trip.push((i, j, v));
                rowsum[i] += f64::abs(v);
                rowsum[j] += f64::abs(v);
            }
        }
    }
    for (i, s) in rowsum.into_iter().enumerate() {
        trip.push((i, i, s + rng.random_range(0.1..2.0)));
    }
    SparseSymMatrix::assemble(n, trip).unwrap()
}

/// Random graph with positive weights; every pair is an edge with probability `p`.
pub fn random_graph<R: Rng>(n: usize, p: f64, rng: &mut R) -> NeighborGraph<f64> {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..i {
            if rng.random::<f64>() < p {
                edges.push(Edge {
                    i,
                    j,
                    distance: rng.random_range(1.0..150.0),
                    weight: rng.random_range(0.01..3.0),
                });
            }
        }
    }
    NeighborGraph::from_edges(n, &edges).unwrap()
}

pub fn edge(i: usize, j: usize, weight: f64) -> Edge<f64> {
    Edge { i, j, distance: 1.0, weight }
}

pub fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Sample mean and covariance of equally long rows.
pub fn moments(draws: &[Vec<f64>]) -> (Vec<f64>, DMatrix<f64>) {
    let n = draws.len() as f64;
    let d = draws[0].len();
    let mut mean = vec![0.0; d];
    for x in draws {
        for (m, v) in mean.iter_mut().zip(x) {
            *m += v / n;
        }
    }
    let mut cov = DMatrix::zeros(d, d);
    for x in draws {
        for i in 0..d {
            for j in 0..d {
                cov[(i, j)] += (x[i] - mean[i]) * (x[j] - mean[j]) / (n - 1.0);
            }
        }
    }
    (mean, cov)
}

pub fn mean_sd(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
    (m, v.sqrt())
}

/// One-sample Kolmogorov-Smirnov p-value (asymptotic, with the usual
/// small-sample correction of the statistic).
pub fn ks_pvalue(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut x = sample.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    let d = x.iter().enumerate().fold(0.0f64, |m, (i, &v)| {
        let f = cdf(v);
        m.max(f - i as f64 / n).max((i + 1) as f64 / n - f)
    });
    let lambda = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
    if lambda < 0.2 {
        return 1.0;
    }
    let p: f64 = (1..=100)
        .map(|k| {
            let k = k as f64;
            2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp()
        })
        .sum();
    p.clamp(0.0, 1.0)
}
