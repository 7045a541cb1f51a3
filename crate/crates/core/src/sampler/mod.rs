//! Metropolis-within-Gibbs sampler for the hierarchical GMRF model
//!
//! ```text
//! y | beta, phi        ~ N(X beta, phi^{-1} I)
//! beta | eta, psi      ~ N(beta0, blockdiag(eta_usa Q(psi), eta_hyp I, eta_time I)^{-1})
//! eta_*, phi           ~ Gamma(shape, rate)
//! psi                  ~ N(mu, sd^2) truncated to psi > 0
//! ```
//!
//! One sweep draws `beta` from its Gaussian full conditional, then the
//! precisions from their Gamma conditionals, then `psi` by a truncated
//! random-walk Metropolis step.

mod chain;
mod conditional;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forward::{BlockSizes, ModelKind};
use crate::scalar::Real;
use crate::sparse::LinalgError;
use crate::spatial::{
    build_neighbor_graph, NeighborhoodSpec, NodeSet, PrecisionModel, PriorError, WeightKind,
};

pub use chain::{mh_update_psi, run_chain, run_chain_observed, run_chain_prepared, ChainSamples, DrawScalars, PsiUpdater};
pub use conditional::{
    full_conditional_beta, gibbs_update_precisions, log_likelihood, psi_log_target, ConditionalBeta, PrecisionStats,
};

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("invalid chain configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid prior: {0}")]
    InvalidPrior(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("{0} consecutive factorization failures")]
    RepeatedFactorizationFailure(usize),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Prior(#[from] PriorError),
    #[error("chain stopped: {0}")]
    Aborted(String),
}

/// `Gamma(shape, rate)` with density `b^a / Gamma(a) x^(a-1) exp(-b x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GammaPrior<T> {
    pub shape: T,
    pub rate: T,
}

impl<T: Real> GammaPrior<T> {
    pub fn new(shape: T, rate: T) -> Self {
        Self { shape, rate }
    }

    pub fn mean(&self) -> T {
        self.shape / self.rate
    }

    pub fn log_density(&self, x: T) -> T {
        let (a, b) = (self.shape.to_f64_lossy(), self.rate.to_f64_lossy());
        let xf = x.to_f64_lossy();
        T::c(a * b.ln() - statrs::function::gamma::ln_gamma(a) + (a - 1.0) * xf.ln() - b * xf)
    }

    fn validate(&self, name: &str) -> Result<(), SamplerError> {
        if self.shape > T::zero() && self.rate > T::zero() && self.shape.is_finite() && self.rate.is_finite() {
            Ok(())
        } else {
            Err(SamplerError::InvalidPrior(format!("{name}: shape and rate must be positive")))
        }
    }
}

/// `N(mean, sd^2)` restricted to `psi > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PsiPrior<T> {
    pub mean: T,
    pub sd: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HyperPriors<T> {
    pub phi: GammaPrior<T>,
    pub eta_usa: GammaPrior<T>,
    pub eta_hyp: GammaPrior<T>,
    pub eta_time: GammaPrior<T>,
    pub psi: PsiPrior<T>,
    /// Prior mean of `beta`, laid out `usa | hyp | time`.
    pub beta0: Vec<T>,
}

impl<T: Real> HyperPriors<T> {
    /// Simulation-study settings: `phi ~ Gamma(1, 0.1)`, `eta_usa ~ Gamma(10, 2)`,
    /// `eta_hyp ~ Gamma(1, 5)`, `eta_time ~ Gamma(10, 2)`, `psi ~ N(10, 0.2^2)`.
    pub fn simulation_defaults(beta0: Vec<T>) -> Self {
        Self {
            phi: GammaPrior::new(T::one(), T::c(0.1)),
            eta_usa: GammaPrior::new(T::c(10.0), T::c(2.0)),
            eta_hyp: GammaPrior::new(T::one(), T::c(5.0)),
            eta_time: GammaPrior::new(T::c(10.0), T::c(2.0)),
            psi: PsiPrior {
                mean: T::c(10.0),
                sd: T::c(0.2),
            },
            beta0,
        }
    }

    pub fn validate(&self, blocks: &BlockSizes) -> Result<(), SamplerError> {
        self.phi.validate("phi")?;
        self.eta_usa.validate("eta_usa")?;
        self.eta_hyp.validate("eta_hyp")?;
        self.eta_time.validate("eta_time")?;
        if !(self.psi.sd > T::zero()) || !self.psi.mean.is_finite() || !self.psi.sd.is_finite() {
            return Err(SamplerError::InvalidPrior("psi: sd must be positive".into()));
        }
        if self.beta0.len() != blocks.total() {
            return Err(SamplerError::Dimension(format!(
                "beta0 has {} entries, design has {} columns",
                self.beta0.len(),
                blocks.total()
            )));
        }
        if self.beta0.iter().any(|b| !b.is_finite()) {
            return Err(SamplerError::NonFinite("beta0"));
        }
        Ok(())
    }
}

/// The five prior structures compared in the study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum PriorStructure {
    /// `Q = I`, `psi = 0` fixed.
    Independent,
    SphericalReciprocal,
    EllipsoidalReciprocal,
    SphericalExponential,
    EllipsoidalExponential,
}

impl PriorStructure {
    pub const ALL: [PriorStructure; 5] = [
        Self::Independent,
        Self::SphericalReciprocal,
        Self::EllipsoidalReciprocal,
        Self::SphericalExponential,
        Self::EllipsoidalExponential,
    ];

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn is_independent(self) -> bool {
        self == Self::Independent
    }

    pub fn weight_kind(self) -> Option<WeightKind> {
        match self {
            Self::Independent => None,
            Self::SphericalReciprocal | Self::EllipsoidalReciprocal => Some(WeightKind::Reciprocal),
            Self::SphericalExponential | Self::EllipsoidalExponential => Some(WeightKind::Exponential),
        }
    }

    pub fn neighborhood<T: Real>(self, geometry: &NeighborhoodGeometry<T>) -> Result<Option<NeighborhoodSpec<T>>, PriorError> {
        let Some(kind) = self.weight_kind() else {
            return Ok(None);
        };
        let spec = match self {
            Self::SphericalReciprocal | Self::SphericalExponential => NeighborhoodSpec::spherical(geometry.radius, kind)?,
            _ => {
                let [ax, ay, az] = geometry.euler_angles;
                NeighborhoodSpec::ellipsoidal(geometry.semi_axes, kind)?.with_euler_angles(ax, ay, az)?
            }
        };
        Ok(Some(spec))
    }

    /// Prior precision model on `nodes` for this structure.
    pub fn precision_model<T: Real>(
        self,
        nodes: &NodeSet<T>,
        geometry: &NeighborhoodGeometry<T>,
    ) -> Result<PrecisionModel<T>, PriorError> {
        match self.neighborhood(geometry)? {
            None => Ok(PrecisionModel::independent(nodes.len())),
            Some(spec) => Ok(PrecisionModel::new(build_neighbor_graph(nodes, &spec)?)),
        }
    }
}

impl TryFrom<u8> for PriorStructure {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, String> {
        Self::ALL
            .get(v as usize)
            .copied()
            .ok_or_else(|| format!("prior structure must be 0..=4, got {v}"))
    }
}

impl From<PriorStructure> for u8 {
    fn from(s: PriorStructure) -> u8 {
        s.id()
    }
}

/// Neighbourhood sizes shared by the spherical and ellipsoidal structures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NeighborhoodGeometry<T> {
    pub radius: T,
    pub semi_axes: [T; 3],
    pub euler_angles: [T; 3],
}

impl<T: Real> Default for NeighborhoodGeometry<T> {
    /// Spherical radius 150 km; ellipsoid 300 x 300 x 150 km, unrotated.
    fn default() -> Self {
        Self {
            radius: T::c(150.0),
            semi_axes: [T::c(300.0), T::c(300.0), T::c(150.0)],
            euler_angles: [T::zero(); 3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub iterations: usize,
    /// Raw (unthinned) iterations discarded before storing.
    pub burn_in: usize,
    pub thinning: usize,
    pub seed: u64,
    pub model: ModelKind,
    pub structure: PriorStructure,
    /// Number of leading iterations during which the `psi` proposal scale
    /// adapts; clipped to the burn-in.
    pub adaptation_window: usize,
    /// Starting `psi` proposal scale; defaults to the prior SD.
    #[serde(default)]
    pub initial_proposal_sd: Option<f64>,
}

impl ChainConfig {
    pub fn new(iterations: usize, burn_in: usize, thinning: usize, seed: u64, model: ModelKind, structure: PriorStructure) -> Self {
        Self {
            iterations,
            burn_in,
            thinning,
            seed,
            model,
            structure,
            adaptation_window: burn_in,
            initial_proposal_sd: None,
        }
    }

    /// Schedule given as burn-in counted in stored (thinned) draws.
    pub fn with_thinned_burn_in(
        iterations: usize,
        thinning: usize,
        burn_in_thinned: usize,
        seed: u64,
        model: ModelKind,
        structure: PriorStructure,
    ) -> Self {
        Self::new(iterations, burn_in_thinned * thinning, thinning, seed, model, structure)
    }

    pub fn stored_count(&self) -> usize {
        self.iterations.saturating_sub(self.burn_in) / self.thinning.max(1)
    }

    pub fn validate(&self) -> Result<(), SamplerError> {
        if self.thinning == 0 {
            return Err(SamplerError::InvalidConfig("thinning must be at least 1".into()));
        }
        if self.burn_in >= self.iterations {
            return Err(SamplerError::InvalidConfig(format!(
                "burn-in {} must be below iterations {}",
                self.burn_in, self.iterations
            )));
        }
        if let Some(s) = self.initial_proposal_sd {
            if !(s > 0.0 && s.is_finite()) {
                return Err(SamplerError::InvalidConfig("initial proposal sd must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Current Gibbs state.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState<T> {
    pub beta: Vec<T>,
    pub eta_usa: T,
    pub eta_hyp: T,
    pub eta_time: T,
    pub phi: T,
    pub psi: T,
    pub iteration: usize,
    pub psi_accepted: usize,
    pub psi_proposed: usize,
}

impl<T: Real> ChainState<T> {
    /// `beta = beta0`, precisions at their prior means, `psi` at the prior
    /// mean (0 for the independent structure).
    pub fn initial(prior: &HyperPriors<T>, structure: PriorStructure) -> Self {
        Self {
            beta: prior.beta0.clone(),
            eta_usa: prior.eta_usa.mean(),
            eta_hyp: prior.eta_hyp.mean(),
            eta_time: prior.eta_time.mean(),
            phi: prior.phi.mean(),
            psi: if structure.is_independent() { T::zero() } else { prior.psi.mean.max(T::c(1e-6)) },
            iteration: 0,
            psi_accepted: 0,
            psi_proposed: 0,
        }
    }
}
