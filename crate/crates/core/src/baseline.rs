//! Damped least-squares baselines.
//!
//! Two damping conventions coexist: [`lsqr`] minimises
//! `|X b - y|^2 + lambda^2 |b|^2`, while [`modified_ridge`] solves
//! `(X'X + lambda I) b = X'y + lambda b0`. The same estimator is obtained
//! with `lambda_ridge = lambda_lsqr^2` and `b0 = 0`.

use crate::scalar::{norm2 as norm, Real};
use crate::sparse::{amd_order, cholesky, LinalgError, SparseMatrix, SparseSymMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct RidgeSolution<T> {
    pub beta: Vec<T>,
    pub lambda: T,
    pub iterations: usize,
    /// `sqrt(|y - X b|^2 + lambda^2 |b|^2)` at the returned iterate.
    pub residual_norm: T,
    pub converged: bool,
}

fn scale<T: Real>(v: &mut [T], s: T) {
    v.iter_mut().for_each(|x| *x *= s);
}

/// Paige-Saunders LSQR with damping `lambda`. Stops when either the damped
/// residual is small relative to `y` or the normal-equation residual is
/// small relative to `|X| |r|` (both tested against `tol`), returning the
/// last iterate with `converged = false` after `max_iter` steps.
pub fn lsqr<T: Real>(x: &SparseMatrix<T>, y: &[T], lambda: T, tol: T, max_iter: usize) -> Result<RidgeSolution<T>, LinalgError> {
    if y.len() != x.nrows() {
        return Err(LinalgError::DimensionMismatch { expected: x.nrows(), found: y.len() });
    }
    let n = x.ncols();
    let mut beta_sol = vec![T::zero(); n];
    let mut u = y.to_vec();
    let mut beta = norm(&u);
    let done = |beta_sol: Vec<T>, iterations, residual_norm, converged| RidgeSolution {
        beta: beta_sol,
        lambda,
        iterations,
        residual_norm,
        converged,
    };
    if beta == T::zero() {
        return Ok(done(beta_sol, 0, T::zero(), true));
    }
    scale(&mut u, T::one() / beta);
    let mut v = x.tr_mul_vec(&u)?;
    let mut alpha = norm(&v);
    if alpha == T::zero() {
        return Ok(done(beta_sol, 0, beta, true));
    }
    scale(&mut v, T::one() / alpha);
    let mut w = v.clone();
    let mut phibar = beta;
    let mut rhobar = alpha;
    let bnorm = beta;
    let mut anorm2 = T::zero();
    let mut res2 = T::zero();
    let mut rnorm = beta;
    let lambda2 = lambda * lambda;

    for it in 1..=max_iter {
        // bidiagonalisation step
        let mut xv = x.mul_vec(&v)?;
        for (a, b) in xv.iter_mut().zip(&u) {
            *a -= alpha * *b;
        }
        u = xv;
        beta = norm(&u);
        if beta > T::zero() {
            scale(&mut u, T::one() / beta);
        }
        anorm2 += alpha * alpha + beta * beta + lambda2;
        let mut xu = x.tr_mul_vec(&u)?;
        for (a, b) in xu.iter_mut().zip(&v) {
            *a -= beta * *b;
        }
        v = xu;
        alpha = norm(&v);
        if alpha > T::zero() {
            scale(&mut v, T::one() / alpha);
        }

        // eliminate the damping term
        let rhobar1 = (rhobar * rhobar + lambda2).sqrt();
        let cs1 = rhobar / rhobar1;
        let sn1 = lambda / rhobar1;
        let psi = sn1 * phibar;
        phibar *= cs1;

        // plane rotation on the lower bidiagonal
        let rho = (rhobar1 * rhobar1 + beta * beta).sqrt();
        let cs = rhobar1 / rho;
        let sn = beta / rho;
        let theta = sn * alpha;
        rhobar = -cs * alpha;
        let phi = cs * phibar;
        phibar *= sn;
        let tau = sn * phi;

        let t1 = phi / rho;
        let t2 = -theta / rho;
        for k in 0..n {
            beta_sol[k] += t1 * w[k];
            w[k] = v[k] + t2 * w[k];
        }

        res2 += psi * psi;
        rnorm = (phibar * phibar + res2).sqrt();
        let anorm = anorm2.sqrt();
        let arnorm = alpha * tau.abs();
        let xnorm = norm(&beta_sol);
        let test1 = rnorm / bnorm;
        let test2 = if rnorm > T::zero() { arnorm / (anorm * rnorm) } else { T::zero() };
        let rtol = tol + tol * anorm * xnorm / bnorm;
        if test1 <= rtol || test2 <= tol || alpha == T::zero() {
            return Ok(done(beta_sol, it, rnorm, true));
        }
    }
    log::warn!("lsqr: no convergence after {max_iter} iterations");
    Ok(done(beta_sol, max_iter, rnorm, false))
}

/// `(X'X + lambda I)^{-1} (X'y + lambda b0)` by sparse Cholesky.
pub fn modified_ridge<T: Real>(x: &SparseMatrix<T>, y: &[T], lambda: T, beta0: &[T]) -> Result<Vec<T>, LinalgError> {
    if beta0.len() != x.ncols() {
        return Err(LinalgError::DimensionMismatch { expected: x.ncols(), found: beta0.len() });
    }
    let n = x.ncols();
    let gram = x.gram();
    let a = SparseSymMatrix::assemble(n, gram.iter().chain((0..n).map(|i| (i, i, lambda))))?;
    let mut rhs = x.tr_mul_vec(y)?;
    for (r, &b) in rhs.iter_mut().zip(beta0) {
        *r += lambda * b;
    }
    cholesky(&a, amd_order(&a))?.solve(&rhs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eye(n: usize) -> SparseMatrix<f64> {
        SparseMatrix::from_triplets(n, n, (0..n).map(|i| (i, i, 1.0))).unwrap()
    }

    #[test]
    fn identity_cases() {
        let y = vec![1.0, -2.0, 3.0];
        let s = lsqr(&eye(3), &y, 0.0, 1e-12, 50).unwrap();
        assert!(s.converged);
        for (a, b) in s.beta.iter().zip(&y) {
            assert!((a - b).abs() < 1e-12);
        }
        let s = lsqr(&eye(3), &y, 1.0, 1e-12, 50).unwrap();
        for (a, b) in s.beta.iter().zip(&y) {
            assert!((a - b / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_rhs() {
        let s = lsqr(&eye(2), &[0.0, 0.0], 0.3, 1e-10, 10).unwrap();
        assert_eq!(s.beta, vec![0.0, 0.0]);
        assert_eq!(s.iterations, 0);
    }

    #[test]
    fn ridge_reduces_to_target() {
        let x = SparseMatrix::from_triplets(3, 2, [(0, 0, 1.0), (1, 1, 2.0), (2, 0, 1.0), (2, 1, 1.0)]).unwrap();
        let b0: Vec<f64> = vec![0.5, -1.0];
        let y = x.mul_vec(&b0).unwrap();
        for lambda in [1e-3, 1.0, 1e6] {
            let b = modified_ridge(&x, &y, lambda, &b0).unwrap();
            for (a, t) in b.iter().zip(&b0) {
                assert!((a - t).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn rank_deficient_without_damping() {
        let x = SparseMatrix::from_triplets(2, 2, [(0, 0, 1.0), (1, 0, 1.0)]).unwrap();
        assert!(modified_ridge(&x, &[1.0, 1.0], 0.0, &[0.0, 0.0]).is_err());
    }
}
