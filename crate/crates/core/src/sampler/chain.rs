use std::sync::Arc;

use rand::Rng;

use crate::forward::{BlockSizes, ForwardProblem, ModelKind};
use crate::random::{seeded, standard_normal};
use crate::scalar::Real;
use crate::sparse::{analyze_fill_reducing, SymbolicCholesky};
use crate::spatial::{PrecisionModel, QuadParts};

use super::conditional::{gibbs_update_precisions, log_likelihood, psi_log_target, ConditionalBeta, PrecisionStats};
use super::{ChainConfig, ChainState, HyperPriors, PriorStructure, SamplerError};

/// More consecutive failed factorizations than this abort the chain.
const MAX_FAILURE_STREAK: usize = 10;
const TARGET_ACCEPTANCE: f64 = 0.35;

/// `log Phi(x)` for the standard normal CDF.
fn log_norm_cdf(x: f64) -> f64 {
    (0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)).ln()
}

/// `psi* ~ N(psi, s^2)` restricted to `(0, inf)`, by rejection.
fn propose<T: Real, R: Rng + ?Sized>(psi: T, sd: f64, rng: &mut R) -> T {
    loop {
        let cand = psi + T::c(sd) * standard_normal::<T, _>(rng);
        if cand > T::zero() {
            return cand;
        }
    }
}

/// Truncated random-walk Metropolis step for `psi` with a reusable symbolic
/// factorization of `Q` and a Robbins-Monro adapted log proposal scale.
#[derive(Debug, Clone)]
pub struct PsiUpdater<T> {
    symbolic: Arc<SymbolicCholesky>,
    log_sd: f64,
    log_det: T,
    psi: T,
    failure_streak: usize,
}

impl<T: Real> PsiUpdater<T> {
    pub fn new(precision: &PrecisionModel<T>, psi: T, proposal_sd: f64) -> Result<Self, SamplerError> {
        let symbolic = Arc::new(analyze_fill_reducing(precision.pattern())?);
        Self::with_symbolic(symbolic, precision, psi, proposal_sd)
    }

    /// Reuses an existing symbolic analysis of `precision.pattern()`.
    pub fn with_symbolic(
        symbolic: Arc<SymbolicCholesky>,
        precision: &PrecisionModel<T>,
        psi: T,
        proposal_sd: f64,
    ) -> Result<Self, SamplerError> {
        if !symbolic.matches_pattern(precision.pattern()) {
            return Err(SamplerError::Dimension("symbolic analysis does not match Q".into()));
        }
        if !(proposal_sd > 0.0 && proposal_sd.is_finite()) {
            return Err(SamplerError::InvalidConfig("proposal sd must be positive".into()));
        }
        let log_det = symbolic.factor(&precision.assemble(psi))?.log_det();
        Ok(Self {
            symbolic,
            log_sd: proposal_sd.ln(),
            log_det,
            psi,
            failure_streak: 0,
        })
    }

    pub fn proposal_sd(&self) -> f64 {
        self.log_sd.exp()
    }

    /// `log |Q(psi)|` at the last accepted value.
    pub fn log_det(&self) -> T {
        self.log_det
    }

    pub fn failure_streak(&self) -> usize {
        self.failure_streak
    }

    /// One MH step given the current quadratic-form parts of
    /// `beta_usa - beta0_usa`. Returns whether the proposal was accepted.
    pub fn step<R: Rng + ?Sized>(
        &mut self,
        state: &mut ChainState<T>,
        prior: &HyperPriors<T>,
        precision: &PrecisionModel<T>,
        parts: &QuadParts<T>,
        rng: &mut R,
    ) -> bool {
        if state.psi != self.psi {
            // state moved externally; refresh the cached determinant
            match self.symbolic.factor(&precision.assemble(state.psi)) {
                Ok(f) => {
                    self.log_det = f.log_det();
                    self.psi = state.psi;
                }
                Err(e) => {
                    log::warn!("psi update: current state not factorizable: {e}");
                    self.failure_streak += 1;
                    return false;
                }
            }
        }
        let sd = self.proposal_sd();
        let cand = propose(state.psi, sd, rng);
        state.psi_proposed += 1;
        let log_det_cand = match self.symbolic.factor(&precision.assemble(cand)) {
            Ok(f) => f.log_det(),
            Err(e) => {
                log::warn!("psi proposal {cand} rejected: {e}");
                self.failure_streak += 1;
                return false;
            }
        };
        self.failure_streak = 0;
        let cur = psi_log_target(self.log_det, state.eta_usa, parts.at(state.psi), state.psi, prior);
        let new = psi_log_target(log_det_cand, state.eta_usa, parts.at(cand), cand, prior);
        let hastings = log_norm_cdf(state.psi.to_f64_lossy() / sd) - log_norm_cdf(cand.to_f64_lossy() / sd);
        let log_ratio = (new - cur).to_f64_lossy() + hastings;
        let accept = log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio;
        if accept {
            state.psi = cand;
            state.psi_accepted += 1;
            self.psi = cand;
            self.log_det = log_det_cand;
        }
        accept
    }

    /// Robbins-Monro move of the log proposal scale toward the target rate.
    pub fn adapt(&mut self, accepted: bool, iteration: usize) {
        let gain = (iteration as f64 + 1.0).powf(-0.6);
        let a = if accepted { 1.0 } else { 0.0 };
        self.log_sd = (self.log_sd + gain * (a - TARGET_ACCEPTANCE)).clamp(-12.0, 6.0);
    }
}

/// Single MH update of `psi` with fresh factorizations.
pub fn mh_update_psi<T: Real, R: Rng + ?Sized>(
    state: &mut ChainState<T>,
    prior: &HyperPriors<T>,
    precision: &PrecisionModel<T>,
    proposal_sd: f64,
    rng: &mut R,
) -> Result<bool, SamplerError> {
    let usa = precision.dim();
    let r: Vec<T> = state.beta[..usa].iter().zip(&prior.beta0).map(|(&b, &b0)| b - b0).collect();
    let parts = precision.quad_parts(&r);
    let mut up = PsiUpdater::new(precision, state.psi, proposal_sd)?;
    Ok(up.step(state, prior, precision, &parts, rng))
}

/// Scalars recorded with every stored draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DrawScalars<T> {
    pub iteration: usize,
    pub eta_usa: T,
    pub eta_hyp: T,
    pub eta_time: T,
    pub phi: T,
    pub psi: T,
    pub log_likelihood: T,
    pub log_posterior: T,
}

/// Stored post-burn-in, thinned draws.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainSamples<T> {
    pub blocks: BlockSizes,
    pub model: ModelKind,
    pub structure: PriorStructure,
    pub scalars: Vec<DrawScalars<T>>,
    /// Row-major `len() x blocks.total()`.
    pub beta: Vec<T>,
    /// `psi` acceptance rate over post-burn-in iterations (NaN without a `psi` step).
    pub psi_acceptance: f64,
    pub psi_proposal_sd: f64,
}

impl<T: Real> ChainSamples<T> {
    pub fn empty(blocks: BlockSizes, model: ModelKind, structure: PriorStructure) -> Self {
        Self {
            blocks,
            model,
            structure,
            scalars: Vec::new(),
            beta: Vec::new(),
            psi_acceptance: f64::NAN,
            psi_proposal_sd: f64::NAN,
        }
    }

    pub fn len(&self) -> usize {
        self.scalars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scalars.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.blocks.total()
    }

    pub fn push(&mut self, scalars: DrawScalars<T>, beta: &[T]) {
        assert_eq!(beta.len(), self.dim(), "draw length");
        self.scalars.push(scalars);
        self.beta.extend_from_slice(beta);
    }

    pub fn draw(&self, k: usize) -> &[T] {
        let d = self.dim();
        &self.beta[k * d..(k + 1) * d]
    }

    pub fn draws(&self) -> impl Iterator<Item = &[T]> + '_ {
        self.beta.chunks_exact(self.dim().max(1)).take(self.len())
    }

    /// Trace of `beta_i` across stored draws.
    pub fn component(&self, i: usize) -> Vec<T> {
        self.draws().map(|b| b[i]).collect()
    }

    pub fn scalar_trace(&self, f: impl Fn(&DrawScalars<T>) -> T) -> Vec<T> {
        self.scalars.iter().map(f).collect()
    }
}

fn log_posterior<T: Real>(
    state: &ChainState<T>,
    stats: &PrecisionStats<T>,
    log_lik: T,
    log_det_q: T,
    prior: &HyperPriors<T>,
    blocks: BlockSizes,
    structure: PriorStructure,
) -> T {
    let half = T::c(0.5);
    let d = |n: usize| T::from_usize_lossy(n);
    let mut lp = log_lik + prior.phi.log_density(state.phi) + prior.eta_usa.log_density(state.eta_usa);
    lp += half * d(blocks.usa) * state.eta_usa.ln() + half * log_det_q - half * state.eta_usa * stats.usa_parts.at(state.psi);
    if blocks.hyp > 0 {
        lp += prior.eta_hyp.log_density(state.eta_hyp) + half * d(blocks.hyp) * state.eta_hyp.ln() - half * state.eta_hyp * stats.hyp_sq;
    }
    if blocks.time > 0 {
        lp += prior.eta_time.log_density(state.eta_time) + half * d(blocks.time) * state.eta_time.ln()
            - half * state.eta_time * stats.time_sq;
    }
    if !structure.is_independent() {
        let z = (state.psi - prior.psi.mean) / prior.psi.sd;
        lp -= half * z * z;
    }
    lp
}

/// Runs one chain; deterministic in `config.seed`.
pub fn run_chain<T: Real>(
    config: &ChainConfig,
    problem: &ForwardProblem<T>,
    prior: &HyperPriors<T>,
    precision: &PrecisionModel<T>,
) -> Result<ChainSamples<T>, SamplerError> {
    config.validate()?;
    if config.model != problem.model() {
        return Err(SamplerError::InvalidConfig(format!(
            "chain configured for {:?} but the problem is {:?}",
            config.model,
            problem.model()
        )));
    }
    prior.validate(&problem.blocks())?;
    let conditional = ConditionalBeta::new(problem, precision)?;
    run_chain_prepared(config, &conditional, prior)
}

/// [`run_chain`] on a prebuilt conditional (shared symbolic analysis).
pub fn run_chain_prepared<T: Real>(
    config: &ChainConfig,
    conditional: &ConditionalBeta<T>,
    prior: &HyperPriors<T>,
) -> Result<ChainSamples<T>, SamplerError> {
    run_chain_observed(config, conditional, prior, &mut |_, _| Ok(()))
}

/// [`run_chain_prepared`], handing every stored draw to `observer` as it is
/// produced (e.g. to stream a trace to disk). An observer error stops the chain.
pub fn run_chain_observed<T: Real>(
    config: &ChainConfig,
    conditional: &ConditionalBeta<T>,
    prior: &HyperPriors<T>,
    observer: &mut dyn FnMut(&DrawScalars<T>, &[T]) -> Result<(), SamplerError>,
) -> Result<ChainSamples<T>, SamplerError> {
    config.validate()?;
    let blocks = conditional.blocks();
    let model = if blocks.hyp > 0 { ModelKind::Model2 } else { ModelKind::Model1 };
    if config.model != model {
        return Err(SamplerError::InvalidConfig(format!(
            "chain configured for {:?} but the problem is {model:?}",
            config.model
        )));
    }
    prior.validate(&blocks)?;
    let precision = conditional.precision();
    let mut rng = seeded(config.seed);
    let mut state = ChainState::initial(prior, config.structure);
    let mut psi_up = if config.structure.is_independent() {
        None
    } else {
        let sd = config.initial_proposal_sd.unwrap_or(prior.psi.sd.to_f64_lossy());
        Some(PsiUpdater::with_symbolic(conditional.q_symbolic().clone(), precision, state.psi, sd)?)
    };
    let adapt_until = config.adaptation_window.min(config.burn_in);
    let n_obs = conditional.observations().len();
    let mut out = ChainSamples::empty(blocks, config.model, config.structure);
    out.scalars.reserve(config.stored_count());
    out.beta.reserve(config.stored_count() * blocks.total());
    let mut beta_failures = 0usize;
    let (mut acc_after, mut prop_after) = (0usize, 0usize);

    for t in 1..=config.iterations {
        match conditional.sample(&state, prior, &mut rng) {
            Ok(b) => {
                state.beta = b;
                beta_failures = 0;
            }
            Err(e) => {
                beta_failures += 1;
                log::warn!("iteration {t}: beta draw failed: {e}");
                if beta_failures > MAX_FAILURE_STREAK {
                    return Err(SamplerError::RepeatedFactorizationFailure(beta_failures));
                }
            }
        }
        let stats = gibbs_update_precisions(&mut state, &conditional, prior, &mut rng)?;
        if let Some(up) = psi_up.as_mut() {
            let accepted = up.step(&mut state, prior, precision, &stats.usa_parts, &mut rng);
            if up.failure_streak() > MAX_FAILURE_STREAK {
                return Err(SamplerError::RepeatedFactorizationFailure(up.failure_streak()));
            }
            if t <= adapt_until {
                up.adapt(accepted, t);
            }
            if t > config.burn_in {
                prop_after += 1;
                acc_after += accepted as usize;
            }
        }
        state.iteration = t;

        if t > config.burn_in && (t - config.burn_in) % config.thinning == 0 {
            let log_lik = log_likelihood(stats.residual_sq, n_obs, state.phi);
            let log_det_q = psi_up.as_ref().map_or(T::zero(), |u| u.log_det());
            let log_post = log_posterior(&state, &stats, log_lik, log_det_q, prior, blocks, config.structure);
            if !log_post.is_finite() || state.beta.iter().any(|b| !b.is_finite()) {
                return Err(SamplerError::NonFinite("draw"));
            }
            let scalars = DrawScalars {
                iteration: t,
                eta_usa: state.eta_usa,
                eta_hyp: state.eta_hyp,
                eta_time: state.eta_time,
                phi: state.phi,
                psi: state.psi,
                log_likelihood: log_lik,
                log_posterior: log_post,
            };
            observer(&scalars, &state.beta)?;
            out.push(scalars, &state.beta);
        }
    }
    if let Some(up) = &psi_up {
        out.psi_proposal_sd = up.proposal_sd();
        out.psi_acceptance = acc_after as f64 / prop_after.max(1) as f64;
    }
    Ok(out)
}
