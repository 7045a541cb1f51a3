use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::forward::{BlockSizes, ForwardProblem};
use crate::scalar::Real;
use crate::sparse::{analyze_fill_reducing, CholeskyFactor, SparseMatrix, SparseSymMatrix, SymbolicCholesky};
use crate::spatial::{PrecisionModel, QuadParts};

use super::{ChainState, HyperPriors, SamplerError};

/// Assembler for the Gaussian full conditional of `beta`:
/// `Omega = Sigma^{-1} + phi X'X`, `xi = Sigma^{-1} beta0 + phi X'y`.
///
/// `Omega` always lives on the union of the `X'X`, `Q` and diagonal
/// patterns, so one symbolic factorization serves the whole run.
#[derive(Debug, Clone)]
pub struct ConditionalBeta<T> {
    x: SparseMatrix<T>,
    y: Vec<T>,
    blocks: BlockSizes,
    precision: PrecisionModel<T>,
    xtx: SparseSymMatrix<T>,
    xty: Vec<T>,
    pattern: SparseSymMatrix<T>,
    from_xtx: Vec<usize>,
    from_q: Vec<usize>,
    diag: Vec<usize>,
    symbolic: Arc<SymbolicCholesky>,
    q_symbolic: Arc<SymbolicCholesky>,
}

impl<T: Real> ConditionalBeta<T> {
    pub fn new(problem: &ForwardProblem<T>, precision: &PrecisionModel<T>) -> Result<Self, SamplerError> {
        let blocks = problem.blocks();
        if precision.dim() != blocks.usa {
            return Err(SamplerError::Dimension(format!(
                "prior has {} nodes, velocity block has {} columns",
                precision.dim(),
                blocks.usa
            )));
        }
        if problem.y.len() != problem.n_obs() {
            return Err(SamplerError::Dimension("observation count differs from design rows".into()));
        }
        let x = problem.design();
        let d = blocks.total();
        let xtx = x.gram();
        let xty = x.tr_mul_vec(&problem.y)?;
        let q = precision.pattern();
        let triplets = xtx
            .iter()
            .chain(q.iter())
            .chain((0..d).map(|i| (i, i, T::one())))
            .map(|(r, c, _)| (r, c, T::zero()));
        let pattern = SparseSymMatrix::assemble(d, triplets)?;
        let locate = |r, c| pattern.position(r, c).expect("entry is in the union pattern");
        let from_xtx = xtx.iter().map(|(r, c, _)| locate(r, c)).collect();
        let from_q = q.iter().map(|(r, c, _)| locate(r, c)).collect();
        let diag = (0..d).map(|i| locate(i, i)).collect();
        let symbolic = Arc::new(analyze_fill_reducing(&pattern)?);
        let q_symbolic = Arc::new(analyze_fill_reducing(q)?);
        log::debug!("beta conditional: dim {d}, nnz(Omega) {}, nnz(L) {}", pattern.nnz(), symbolic.nnz_l());
        Ok(Self {
            x,
            y: problem.y.clone(),
            blocks,
            precision: precision.clone(),
            xtx,
            xty,
            pattern,
            from_xtx,
            from_q,
            diag,
            symbolic,
            q_symbolic,
        })
    }

    /// Same design and prior with new observations; the symbolic analysis
    /// is shared.
    pub fn with_observations(&self, y: &[T]) -> Result<Self, SamplerError> {
        if y.len() != self.y.len() {
            return Err(SamplerError::Dimension("observation count differs from design rows".into()));
        }
        Ok(Self {
            xty: self.x.tr_mul_vec(y)?,
            y: y.to_vec(),
            ..self.clone()
        })
    }

    pub fn blocks(&self) -> BlockSizes {
        self.blocks
    }

    pub fn design(&self) -> &SparseMatrix<T> {
        &self.x
    }

    pub fn observations(&self) -> &[T] {
        &self.y
    }

    pub fn precision(&self) -> &PrecisionModel<T> {
        &self.precision
    }

    pub fn symbolic(&self) -> &Arc<SymbolicCholesky> {
        &self.symbolic
    }

    /// Symbolic analysis of the prior precision `Q`.
    pub fn q_symbolic(&self) -> &Arc<SymbolicCholesky> {
        &self.q_symbolic
    }

    /// `(Omega, xi)` at the current hyperparameters.
    pub fn assemble(&self, state: &ChainState<T>, prior: &HyperPriors<T>) -> Result<(SparseSymMatrix<T>, Vec<T>), SamplerError> {
        let BlockSizes { usa, hyp, .. } = self.blocks;
        let mut vals = vec![T::zero(); self.pattern.nnz()];
        for (&p, &v) in self.from_xtx.iter().zip(self.xtx.values()) {
            vals[p] += state.phi * v;
        }
        let qv = self.precision.values(state.psi);
        for (&p, &v) in self.from_q.iter().zip(&qv) {
            vals[p] += state.eta_usa * v;
        }
        for (i, &p) in self.diag.iter().enumerate().skip(usa) {
            vals[p] += if i < usa + hyp { state.eta_hyp } else { state.eta_time };
        }
        let omega = self.pattern.with_values(vals)?;

        let q = self.precision.pattern().with_values(qv)?;
        let q_beta0 = q.mul_vec(&prior.beta0[..usa])?;
        let mut xi: Vec<T> = self.xty.iter().map(|&v| state.phi * v).collect();
        for (i, x) in xi.iter_mut().enumerate() {
            *x += if i < usa {
                state.eta_usa * q_beta0[i]
            } else if i < usa + hyp {
                state.eta_hyp * prior.beta0[i]
            } else {
                state.eta_time * prior.beta0[i]
            };
        }
        Ok((omega, xi))
    }

    pub fn factor(&self, state: &ChainState<T>, prior: &HyperPriors<T>) -> Result<(CholeskyFactor<T>, Vec<T>), SamplerError> {
        let (omega, xi) = self.assemble(state, prior)?;
        Ok((self.symbolic.factor(&omega)?, xi))
    }

    /// `E[beta | rest] = Omega^{-1} xi`.
    pub fn mean(&self, state: &ChainState<T>, prior: &HyperPriors<T>) -> Result<Vec<T>, SamplerError> {
        let (f, xi) = self.factor(state, prior)?;
        Ok(f.solve(&xi)?)
    }

    pub fn sample<R: Rng + ?Sized>(&self, state: &ChainState<T>, prior: &HyperPriors<T>, rng: &mut R) -> Result<Vec<T>, SamplerError> {
        let (f, xi) = self.factor(state, prior)?;
        Ok(f.sample_by_precision(&xi, rng)?)
    }

    /// `|y - X beta|^2`.
    pub fn residual_sq(&self, beta: &[T]) -> Result<T, SamplerError> {
        let fit = self.x.mul_vec(beta)?;
        Ok(fit.iter().zip(&self.y).map(|(&f, &y)| (y - f) * (y - f)).sum())
    }
}

/// Builds `(Omega_beta, xi_beta)` from scratch; see [`ConditionalBeta`].
pub fn full_conditional_beta<T: Real>(
    state: &ChainState<T>,
    problem: &ForwardProblem<T>,
    prior: &HyperPriors<T>,
    precision: &PrecisionModel<T>,
) -> Result<(SparseSymMatrix<T>, Vec<T>), SamplerError> {
    ConditionalBeta::new(problem, precision)?.assemble(state, prior)
}

/// Sufficient statistics seen by the precision updates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrecisionStats<T> {
    pub residual_sq: T,
    /// Parts of `(beta_usa - beta0_usa)' Q(psi) (beta_usa - beta0_usa)`.
    pub usa_parts: QuadParts<T>,
    pub hyp_sq: T,
    pub time_sq: T,
}

fn gamma_draw<T: Real, R: Rng + ?Sized>(shape: T, rate: T, rng: &mut R, what: &'static str) -> Result<T, SamplerError> {
    let (a, b) = (shape.to_f64_lossy(), rate.to_f64_lossy());
    if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
        return Err(SamplerError::NonFinite(what));
    }
    let g = Gamma::new(a, 1.0 / b).map_err(|_| SamplerError::NonFinite(what))?;
    Ok(T::c(g.sample(rng)))
}

/// Conjugate Gamma draws of `phi`, `eta_usa` and, when the source blocks
/// are present, `eta_hyp` and `eta_time`:
///
/// ```text
/// phi     ~ Gamma(a + N/2,      b + |y - X beta|^2 / 2)
/// eta_usa ~ Gamma(a + d_usa/2,  b + r' Q(psi) r / 2),  r = beta_usa - beta0_usa
/// ```
pub fn gibbs_update_precisions<T: Real, R: Rng + ?Sized>(
    state: &mut ChainState<T>,
    conditional: &ConditionalBeta<T>,
    prior: &HyperPriors<T>,
    rng: &mut R,
) -> Result<PrecisionStats<T>, SamplerError> {
    let BlockSizes { usa, hyp, time } = conditional.blocks();
    let half = T::c(0.5);
    let residual_sq = conditional.residual_sq(&state.beta)?;
    let r: Vec<T> = state.beta.iter().zip(&prior.beta0).map(|(&b, &b0)| b - b0).collect();
    let usa_parts = conditional.precision().quad_parts(&r[..usa]);
    let hyp_sq: T = r[usa..usa + hyp].iter().map(|&v| v * v).sum();
    let time_sq: T = r[usa + hyp..].iter().map(|&v| v * v).sum();
    let quad = usa_parts.at(state.psi);
    if !residual_sq.is_finite() || !quad.is_finite() {
        return Err(SamplerError::NonFinite("quadratic form"));
    }
    let n = T::from_usize_lossy(conditional.observations().len());
    state.phi = gamma_draw(prior.phi.shape + half * n, prior.phi.rate + half * residual_sq, rng, "phi")?;
    state.eta_usa = gamma_draw(
        prior.eta_usa.shape + half * T::from_usize_lossy(usa),
        prior.eta_usa.rate + half * quad,
        rng,
        "eta_usa",
    )?;
    if hyp > 0 {
        state.eta_hyp = gamma_draw(
            prior.eta_hyp.shape + half * T::from_usize_lossy(hyp),
            prior.eta_hyp.rate + half * hyp_sq,
            rng,
            "eta_hyp",
        )?;
    }
    if time > 0 {
        state.eta_time = gamma_draw(
            prior.eta_time.shape + half * T::from_usize_lossy(time),
            prior.eta_time.rate + half * time_sq,
            rng,
            "eta_time",
        )?;
    }
    Ok(PrecisionStats {
        residual_sq,
        usa_parts,
        hyp_sq,
        time_sq,
    })
}

/// Gaussian log-likelihood `N/2 log(phi / 2pi) - phi/2 |y - X beta|^2`.
pub fn log_likelihood<T: Real>(residual_sq: T, n_obs: usize, phi: T) -> T {
    let n = T::from_usize_lossy(n_obs);
    T::c(0.5) * n * (phi / T::c(2.0 * std::f64::consts::PI)).ln() - T::c(0.5) * phi * residual_sq
}

/// Unnormalised log full conditional of `psi`:
/// `1/2 log|Q(psi)| - eta/2 r'Q(psi)r - (psi - mu)^2 / (2 sd^2)`.
pub fn psi_log_target<T: Real>(log_det_q: T, eta_usa: T, quad: T, psi: T, prior: &HyperPriors<T>) -> T {
    let z = (psi - prior.psi.mean) / prior.psi.sd;
    T::c(0.5) * log_det_q - T::c(0.5) * eta_usa * quad - T::c(0.5) * z * z
}
