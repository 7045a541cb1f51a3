//! Posterior summaries, misfit norms, DIC and effective sample size.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;
use crate::sampler::ChainSamples;
use crate::sparse::{amd_order, cholesky, CholeskyFactor, LinalgError, SparseMatrix, SparseSymMatrix};
use crate::spatial::PrecisionModel;

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("need at least {needed} values, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },
    #[error("quantiles must satisfy 0 <= lower <= upper <= 1")]
    InvalidQuantiles,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Something that can evaluate `r' Sigma^{-1} r`.
pub trait InverseCovariance<T> {
    fn dim(&self) -> usize;
    fn quad_inverse(&self, r: &[T]) -> Result<T, DiagnosticsError>;
}

/// `Sigma = diag(variances)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalCovariance<T>(pub Vec<T>);

impl<T: Real> InverseCovariance<T> for DiagonalCovariance<T> {
    fn dim(&self) -> usize {
        self.0.len()
    }

    fn quad_inverse(&self, r: &[T]) -> Result<T, DiagnosticsError> {
        if self.0.iter().any(|&v| !(v > T::zero())) {
            return Err(LinalgError::NotPositiveDefinite { column: 0, pivot: 0.0 }.into());
        }
        Ok(r.iter().zip(&self.0).map(|(&x, &v)| x * x / v).sum())
    }
}

/// `Sigma = variance * I` of any dimension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledIdentity<T> {
    pub dim: usize,
    pub variance: T,
}

impl<T: Real> InverseCovariance<T> for ScaledIdentity<T> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn quad_inverse(&self, r: &[T]) -> Result<T, DiagnosticsError> {
        if !(self.variance > T::zero()) {
            return Err(LinalgError::NotPositiveDefinite { column: 0, pivot: 0.0 }.into());
        }
        Ok(r.iter().map(|&x| x * x).sum::<T>() / self.variance)
    }
}

/// Sparse `Sigma`, applied through its Cholesky factor:
/// `r' Sigma^{-1} r = |L^{-1} P r|^2`.
#[derive(Debug, Clone)]
pub struct FactoredCovariance<T>(CholeskyFactor<T>);

impl<T: Real> FactoredCovariance<T> {
    pub fn new(sigma: &SparseSymMatrix<T>) -> Result<Self, DiagnosticsError> {
        Ok(Self(cholesky(sigma, amd_order(sigma))?))
    }
}

impl<T: Real> InverseCovariance<T> for FactoredCovariance<T> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn quad_inverse(&self, r: &[T]) -> Result<T, DiagnosticsError> {
        let mut v = self.0.permutation().apply(r);
        self.0.solve_lower_in_place(&mut v);
        Ok(v.iter().map(|&x| x * x).sum())
    }
}

/// Sparse `Sigma^{-1}` supplied directly.
#[derive(Debug, Clone)]
pub struct PrecisionOperator<T>(pub SparseSymMatrix<T>);

impl<T: Real> InverseCovariance<T> for PrecisionOperator<T> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn quad_inverse(&self, r: &[T]) -> Result<T, DiagnosticsError> {
        Ok(self.0.quad_form(r)?)
    }
}

/// `sqrt((x - mu)' Sigma^{-1} (x - mu))`.
pub fn mahalanobis<T: Real, S: InverseCovariance<T> + ?Sized>(x: &[T], mu: &[T], sigma: &S) -> Result<T, DiagnosticsError> {
    for len in [x.len(), mu.len()] {
        if len != sigma.dim() {
            return Err(DiagnosticsError::Dimension {
                expected: sigma.dim(),
                found: len,
            });
        }
    }
    let r: Vec<T> = x.iter().zip(mu).map(|(&a, &b)| a - b).collect();
    Ok(sigma.quad_inverse(&r)?.max(T::zero()).sqrt())
}

/// Autocorrelation cut-off for [`ess`].
pub const ESS_RHO_CUTOFF: f64 = 0.05;

/// `n / (1 + 2 sum rho_k)`, summing sample autocorrelations from lag 1 up
/// to (excluding) the first lag with `rho_k < 0.05`. A constant series is
/// reported as fully efficient.
pub fn ess<T: Real>(series: &[T]) -> Result<f64, DiagnosticsError> {
    let n = series.len();
    if n < 10 {
        return Err(DiagnosticsError::TooShort { needed: 10, got: n });
    }
    let x: Vec<f64> = series.iter().map(|v| v.to_f64_lossy()).collect();
    let mean = x.iter().sum::<f64>() / n as f64;
    let c: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let c0 = c.iter().map(|v| v * v).sum::<f64>();
    if c0 <= 0.0 {
        log::warn!("ess: constant series, reporting n");
        return Ok(n as f64);
    }
    let mut sum = 0.0;
    for k in 1..n {
        let rho = c[..n - k].iter().zip(&c[k..]).map(|(a, b)| a * b).sum::<f64>() / c0;
        if rho < ESS_RHO_CUTOFF {
            break;
        }
        sum += rho;
    }
    Ok((n as f64 / (1.0 + 2.0 * sum)).min(n as f64))
}

/// Inverse empirical CDF: the smallest sample value `v` with
/// `#{x <= v} >= p n`.
pub fn quantile_sorted<T: Real>(sorted: &[T], p: f64) -> T {
    assert!(!sorted.is_empty(), "quantile of empty sample");
    let n = sorted.len();
    let k = ((p * n as f64).ceil() as usize).clamp(1, n);
    sorted[k - 1]
}

/// Running mean `x0 + sum (x_i - x0) / n`: exact for constant input.
fn stable_mean(x: &[f64]) -> f64 {
    let Some(&x0) = x.first() else {
        return f64::NAN;
    };
    x0 + x.iter().map(|v| v - x0).sum::<f64>() / x.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dic {
    pub dic: f64,
    pub p_d: f64,
    pub mean_deviance: f64,
    pub deviance_at_mean: f64,
}

fn posterior_mean_beta<T: Real>(samples: &ChainSamples<T>) -> Vec<T> {
    (0..samples.dim())
        .map(|i| {
            let c: Vec<f64> = samples.draws().map(|b| b[i].to_f64_lossy()).collect();
            T::c(stable_mean(&c))
        })
        .collect()
}

/// Gaussian deviance `-2 log l(y | beta, phi)`.
pub fn deviance<T: Real>(x: &SparseMatrix<T>, y: &[T], beta: &[T], phi: T) -> Result<f64, DiagnosticsError> {
    let fit = x.mul_vec(beta)?;
    let rss: T = fit.iter().zip(y).map(|(&f, &v)| (v - f) * (v - f)).sum();
    Ok(-2.0 * crate::sampler::log_likelihood(rss, y.len(), phi).to_f64_lossy())
}

/// `DIC = mean deviance + p_D`, `p_D = mean deviance - D(beta_bar, phi_bar)`.
pub fn dic<T: Real>(samples: &ChainSamples<T>, x: &SparseMatrix<T>, y: &[T]) -> Result<Dic, DiagnosticsError> {
    if samples.len() < 10 {
        return Err(DiagnosticsError::TooShort {
            needed: 10,
            got: samples.len(),
        });
    }
    dic_unchecked(samples, x, y)
}

/// [`dic`] without the minimum-length requirement (at least one draw).
pub fn dic_unchecked<T: Real>(samples: &ChainSamples<T>, x: &SparseMatrix<T>, y: &[T]) -> Result<Dic, DiagnosticsError> {
    if samples.is_empty() {
        return Err(DiagnosticsError::TooShort { needed: 1, got: 0 });
    }
    if x.ncols() != samples.dim() || x.nrows() != y.len() {
        return Err(DiagnosticsError::Dimension {
            expected: samples.dim(),
            found: x.ncols(),
        });
    }
    let dev: Vec<f64> = samples.scalars.iter().map(|s| -2.0 * s.log_likelihood.to_f64_lossy()).collect();
    let phi: Vec<f64> = samples.scalars.iter().map(|s| s.phi.to_f64_lossy()).collect();
    let mean_deviance = stable_mean(&dev);
    let phi_bar = T::c(stable_mean(&phi));
    let deviance_at_mean = deviance(x, y, &posterior_mean_beta(samples), phi_bar)?;
    let p_d = mean_deviance - deviance_at_mean;
    Ok(Dic {
        dic: mean_deviance + p_d,
        p_d,
        mean_deviance,
        deviance_at_mean,
    })
}

/// Posterior mean / mode / interval / ESS of one scalar.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarSummary {
    pub mean: f64,
    pub mode: f64,
    pub lower: f64,
    pub upper: f64,
    pub ess: Option<f64>,
}

fn scalar_summary(values: &[f64], mode: f64, q: (f64, f64)) -> ScalarSummary {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    ScalarSummary {
        mean: stable_mean(values),
        mode,
        lower: quantile_sorted(&sorted, q.0),
        upper: quantile_sorted(&sorted, q.1),
        ess: ess(values).ok(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub n_draws: usize,
    pub quantiles: (f64, f64),
    pub mean: Vec<f64>,
    /// Stored draw with the highest joint log-posterior.
    pub mode: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// `None` when fewer than 10 draws are stored.
    pub ess: Vec<Option<f64>>,
    /// `0` outside `[lower, upper]`.
    pub significant: Vec<bool>,
    pub mode_index: usize,
    pub phi: ScalarSummary,
    pub eta_usa: ScalarSummary,
    pub eta_hyp: Option<ScalarSummary>,
    pub eta_time: Option<ScalarSummary>,
    pub psi: Option<ScalarSummary>,
    pub dic: Dic,
    /// `true` when fewer than 10 draws were available for DIC.
    pub dic_short_chain: bool,
    /// `|y - X b|` under `Sigma_y = I / phi_mode` for `b` = mode, lower, upper.
    pub data_misfit_mode: f64,
    pub data_misfit_lower: f64,
    pub data_misfit_upper: f64,
    /// Velocity-block misfit of the mode against a known truth, in the prior
    /// precision at the mode.
    pub model_misfit: Option<f64>,
    /// Fraction of velocity components whose interval contains the truth.
    pub coverage: Option<f64>,
    pub psi_acceptance: Option<f64>,
}

impl PosteriorSummary {
    pub fn significant_count(&self) -> usize {
        self.significant.iter().filter(|&&s| s).count()
    }

    /// Mean interval width over the first `n` components.
    pub fn mean_interval_width(&self, n: usize) -> f64 {
        let n = n.min(self.lower.len());
        self.lower[..n].iter().zip(&self.upper[..n]).map(|(l, u)| u - l).sum::<f64>() / n as f64
    }
}

/// Componentwise summaries, misfits and DIC of a chain.
///
/// `reference` is a known velocity-block truth; `precision` is the prior
/// precision model used to measure the model misfit against it.
pub fn summarize<T: Real>(
    samples: &ChainSamples<T>,
    x: &SparseMatrix<T>,
    y: &[T],
    quantiles: (f64, f64),
    precision: Option<&PrecisionModel<T>>,
    reference: Option<&[T]>,
) -> Result<PosteriorSummary, DiagnosticsError> {
    let (ql, qu) = quantiles;
    if !(0.0..=1.0).contains(&ql) || !(0.0..=1.0).contains(&qu) || ql > qu {
        return Err(DiagnosticsError::InvalidQuantiles);
    }
    let n = samples.len();
    if n == 0 {
        return Err(DiagnosticsError::TooShort { needed: 1, got: 0 });
    }
    let d = samples.dim();
    let mode_index = samples
        .scalars
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.log_posterior.to_f64_lossy().total_cmp(&b.1.log_posterior.to_f64_lossy()))
        .map(|(k, _)| k)
        .expect("nonempty");
    let mode_beta = samples.draw(mode_index);
    let mode_scalars = samples.scalars[mode_index];

    let mut mean = Vec::with_capacity(d);
    let mut lower = Vec::with_capacity(d);
    let mut upper = Vec::with_capacity(d);
    let mut ess_v = Vec::with_capacity(d);
    let mut buf = vec![0.0; n];
    for i in 0..d {
        for (slot, b) in buf.iter_mut().zip(samples.draws()) {
            *slot = b[i].to_f64_lossy();
        }
        mean.push(stable_mean(&buf));
        ess_v.push(ess(&buf).ok());
        buf.sort_by(f64::total_cmp);
        lower.push(quantile_sorted(&buf, ql));
        upper.push(quantile_sorted(&buf, qu));
    }
    let significant = lower.iter().zip(&upper).map(|(&l, &u)| l > 0.0 || u < 0.0).collect();

    let trace = |f: fn(&crate::sampler::DrawScalars<T>) -> T| -> Vec<f64> {
        samples.scalars.iter().map(|s| f(s).to_f64_lossy()).collect()
    };
    let summary_of = |f: fn(&crate::sampler::DrawScalars<T>) -> T| {
        scalar_summary(&trace(f), f(&mode_scalars).to_f64_lossy(), quantiles)
    };
    let blocks = samples.blocks;

    let (dic_v, short) = if n >= 10 {
        (dic(samples, x, y)?, false)
    } else {
        log::warn!("summarize: only {n} draws; DIC computed without the length check");
        (dic_unchecked(samples, x, y)?, true)
    };

    let sigma_y = ScaledIdentity {
        dim: y.len(),
        variance: T::one() / mode_scalars.phi,
    };
    let zeros = vec![T::zero(); y.len()];
    let misfit = |b: &[T]| -> Result<f64, DiagnosticsError> {
        let fit = x.mul_vec(b)?;
        let r: Vec<T> = y.iter().zip(&fit).map(|(&a, &f)| a - f).collect();
        Ok(mahalanobis(&r, &zeros, &sigma_y)?.to_f64_lossy())
    };
    let to_t = |v: &[f64]| v.iter().map(|&a| T::c(a)).collect::<Vec<T>>();

    let (model_misfit, coverage) = match reference {
        None => (None, None),
        Some(truth) => {
            let m = truth.len().min(blocks.usa);
            if truth.len() != blocks.usa {
                return Err(DiagnosticsError::Dimension {
                    expected: blocks.usa,
                    found: truth.len(),
                });
            }
            let covered = (0..m).filter(|&i| {
                let t = truth[i].to_f64_lossy();
                lower[i] <= t && t <= upper[i]
            });
            let coverage = covered.count() as f64 / m as f64;
            let misfit = match precision {
                Some(pm) => {
                    let q = pm.assemble(mode_scalars.psi);
                    let vals = q.values().iter().map(|&v| v * mode_scalars.eta_usa).collect();
                    let op = PrecisionOperator(q.with_values(vals)?);
                    Some(mahalanobis(&mode_beta[..m], truth, &op)?.to_f64_lossy())
                }
                None => None,
            };
            (misfit, Some(coverage))
        }
    };

    Ok(PosteriorSummary {
        n_draws: n,
        quantiles,
        data_misfit_mode: misfit(mode_beta)?,
        data_misfit_lower: misfit(&to_t(&lower))?,
        data_misfit_upper: misfit(&to_t(&upper))?,
        mean,
        mode: mode_beta.iter().map(|v| v.to_f64_lossy()).collect(),
        lower,
        upper,
        ess: ess_v,
        significant,
        mode_index,
        phi: summary_of(|s| s.phi),
        eta_usa: summary_of(|s| s.eta_usa),
        eta_hyp: (blocks.hyp > 0).then(|| summary_of(|s| s.eta_hyp)),
        eta_time: (blocks.time > 0).then(|| summary_of(|s| s.eta_time)),
        psi: (!samples.structure.is_independent()).then(|| summary_of(|s| s.psi)),
        dic: dic_v,
        dic_short_chain: short,
        model_misfit,
        coverage,
        psi_acceptance: samples.psi_acceptance.is_finite().then_some(samples.psi_acceptance),
    })
}
