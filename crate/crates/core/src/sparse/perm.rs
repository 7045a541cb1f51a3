use crate::scalar::Real;

use super::LinalgError;

/// Symmetric permutation. `forward[k]` is the original index placed at
/// position `k`, so `(P x)[k] = x[forward[k]]` and `(P A P')[i][j] =
/// A[forward[i]][forward[j]]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Permutation {
    forward: Vec<usize>,
    inverse: Vec<usize>,
}

impl Permutation {
    pub fn identity(n: usize) -> Self {
        Self {
            forward: (0..n).collect(),
            inverse: (0..n).collect(),
        }
    }

    pub fn reverse(n: usize) -> Self {
        Self::new((0..n).rev().collect()).expect("reverse order is a permutation")
    }

    pub fn new(forward: Vec<usize>) -> Result<Self, LinalgError> {
        let n = forward.len();
        let mut inverse = vec![usize::MAX; n];
        for (k, &i) in forward.iter().enumerate() {
            if i >= n {
                return Err(LinalgError::InvalidPermutation(format!("index {i} out of range {n}")));
            }
            if inverse[i] != usize::MAX {
                return Err(LinalgError::InvalidPermutation(format!("index {i} repeated")));
            }
            inverse[i] = k;
        }
        Ok(Self { forward, inverse })
    }

    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }

    pub fn forward(&self) -> &[usize] {
        &self.forward
    }

    pub fn inverse(&self) -> &[usize] {
        &self.inverse
    }

    /// `P x`.
    pub fn apply<T: Real>(&self, x: &[T]) -> Vec<T> {
        self.forward.iter().map(|&i| x[i]).collect()
    }

    /// `P' x`.
    pub fn apply_inverse<T: Real>(&self, x: &[T]) -> Vec<T> {
        self.inverse.iter().map(|&k| x[k]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_invalid() {
        assert!(Permutation::new(vec![0, 0]).is_err());
        assert!(Permutation::new(vec![0, 2]).is_err());
    }

    proptest! {
        #[test]
        fn inverse_composes_to_identity(seed in 0u64..1000, n in 1usize..40) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut f: Vec<usize> = (0..n).collect();
            f.shuffle(&mut rng);
            let p = Permutation::new(f).unwrap();
            for k in 0..n {
                prop_assert_eq!(p.inverse()[p.forward()[k]], k);
                prop_assert_eq!(p.forward()[p.inverse()[k]], k);
            }
            let x: Vec<f64> = (0..n).map(|i| i as f64).collect();
            prop_assert_eq!(p.apply_inverse(&p.apply(&x)), x);
        }
    }
}
