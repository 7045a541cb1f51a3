//! Synthetic scenario drivers: desk-scale geometry, the damped-LSQR
//! reference model, Setup I/II data and the structure-by-seed study matrix.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::RngCore;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baseline::lsqr;
use crate::diagnostics::{summarize, DiagnosticsError, PosteriorSummary};
use crate::forward::{
    assemble_forward, draw_beta_true, synthesize_data, EventStationGeometry, ForwardError, ForwardProblem, ModelKind, NoiseKind,
    NoiseSpec, VoxelGrid, DEFAULT_REFERENCE_VELOCITY,
};
use crate::random::substream;
use crate::sampler::{run_chain_prepared, ChainConfig, ConditionalBeta, HyperPriors, NeighborhoodGeometry, PriorStructure, SamplerError};
use crate::sparse::LinalgError;
use crate::spatial::{NodeSet, PriorError};

#[derive(Debug, Error)]
pub enum StudyError {
    #[error("invalid study: {0}")]
    Invalid(String),
    #[error(transparent)]
    Forward(#[from] ForwardError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Prior(#[from] PriorError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Independent 64-bit seed for sub-task `tag` of `seed`.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    substream(seed, tag).next_u64()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub origin: [f64; 3],
    pub counts: [usize; 3],
    pub cell_size: [f64; 3],
}

impl Default for GridSpec {
    /// 12 x 12 x 6 cells of 100 km (864 nodes).
    fn default() -> Self {
        Self {
            origin: [0.0; 3],
            counts: [12, 12, 6],
            cell_size: [100.0; 3],
        }
    }
}

impl GridSpec {
    pub fn build(&self) -> Result<VoxelGrid<f64>, ForwardError> {
        VoxelGrid::new(self.origin, self.counts, self.cell_size)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub events: usize,
    pub stations: usize,
    pub paths: usize,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        Self {
            events: 40,
            stations: 60,
            paths: 2000,
        }
    }
}

/// Smooth checkerboard used to manufacture the LSQR reference model.
pub fn reference_anomaly(grid: &VoxelGrid<f64>, amplitude: f64) -> Vec<f64> {
    let (o, up) = (grid.origin(), grid.upper());
    let tau = std::f64::consts::TAU;
    (0..grid.len())
        .map(|i| {
            let c = grid.cell_center(i);
            let u: Vec<f64> = (0..3).map(|k| (c[k] - o[k]) / (up[k] - o[k])).collect();
            amplitude * (tau * u[0]).sin() * (tau * u[1]).sin() * (std::f64::consts::PI * u[2]).cos()
        })
        .collect()
}

/// Parameters of the synthetic scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SetupParams {
    /// Generating `eta_usa` for Setup II truths.
    pub eta_true: f64,
    /// Generating `psi` for Setup II truths.
    pub psi_true: f64,
    /// Gaussian noise precision.
    pub phi_true: f64,
    /// Student-t degrees of freedom.
    pub t_dof: f64,
    /// SD of the perturbation added to the LSQR model for informative prior means.
    pub prior_mean_sd: f64,
    /// Amplitude of the anomaly behind the LSQR reference.
    pub reference_amplitude: f64,
    /// LSQR damping (`lambda^2 |beta|^2` convention) for the reference.
    pub lsqr_damping: f64,
    /// SD (km) of true hypocenter shifts, Model 2 only.
    pub source_shift_sd: f64,
    /// SD (s) of true origin-time errors, Model 2 only.
    pub origin_time_sd: f64,
}

impl Default for SetupParams {
    fn default() -> Self {
        Self {
            eta_true: 0.18,
            psi_true: 10.0,
            phi_true: 0.4,
            t_dof: 3.0,
            prior_mean_sd: 0.32,
            reference_amplitude: 1.0,
            lsqr_damping: 100.0,
            source_shift_sd: 2.0,
            origin_time_sd: 0.5,
        }
    }
}

/// Damped-LSQR solution on data generated from [`reference_anomaly`] with
/// Gaussian noise; stands in for a published tomographic model.
pub fn lsqr_reference(problem: &ForwardProblem<f64>, grid: &VoxelGrid<f64>, params: &SetupParams, seed: u64) -> Result<Vec<f64>, StudyError> {
    let truth = reference_anomaly(grid, params.reference_amplitude);
    let noise = NoiseSpec {
        kind: NoiseKind::Gaussian {
            precision: params.phi_true,
        },
        seed,
    };
    let y = synthesize_data(&problem.x_usa, &truth, &noise)?;
    let sol = lsqr(&problem.x_usa, &y, params.lsqr_damping, 1e-10, 20 * grid.len())?;
    Ok(sol.beta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Setup {
    /// Truth = LSQR model; prior mean = LSQR model + N(0, sd^2).
    #[serde(rename = "I_a")]
    IA,
    /// Truth = LSQR model; prior mean 0.
    #[serde(rename = "I_b")]
    IB,
    /// Truth drawn around the LSQR model with a spherical reciprocal prior.
    #[serde(rename = "II_a")]
    IIA,
    /// Truth drawn around the LSQR model with an ellipsoidal reciprocal prior.
    #[serde(rename = "II_b")]
    IIB,
}

impl Setup {
    pub const ALL: [Setup; 4] = [Setup::IA, Setup::IB, Setup::IIA, Setup::IIB];

    pub fn name(self) -> &'static str {
        match self {
            Setup::IA => "I_a",
            Setup::IB => "I_b",
            Setup::IIA => "II_a",
            Setup::IIB => "II_b",
        }
    }

    /// Structure the Setup II truth is drawn from.
    pub fn truth_structure(self) -> Option<PriorStructure> {
        match self {
            Setup::IA | Setup::IB => None,
            Setup::IIA => Some(PriorStructure::SphericalReciprocal),
            Setup::IIB => Some(PriorStructure::EllipsoidalReciprocal),
        }
    }

    /// Setup II only uses Gaussian noise.
    pub fn allows(self, noise: NoiseLabel) -> bool {
        self.truth_structure().is_none() || noise == NoiseLabel::Gaussian
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseLabel {
    Gaussian,
    StudentT,
}

impl NoiseLabel {
    pub fn kind(self, params: &SetupParams) -> NoiseKind {
        match self {
            NoiseLabel::Gaussian => NoiseKind::Gaussian {
                precision: params.phi_true,
            },
            NoiseLabel::StudentT => NoiseKind::StudentT { dof: params.t_dof },
        }
    }
}

/// Truth, prior mean and observations of one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    /// Full-length truth (source blocks zero).
    pub beta_true: Vec<f64>,
    pub beta0: Vec<f64>,
    pub y: Vec<f64>,
}

/// Builds scenario data for `setup` on `problem`'s design.
#[allow(clippy::too_many_arguments)]
pub fn synthesize_setup(
    setup: Setup,
    noise: NoiseKind,
    params: &SetupParams,
    problem: &ForwardProblem<f64>,
    nodes: &NodeSet<f64>,
    geometry: &NeighborhoodGeometry<f64>,
    beta_lsqr: &[f64],
    seed: u64,
    noise_seed: u64,
) -> Result<SyntheticData, StudyError> {
    let blocks = problem.blocks();
    if beta_lsqr.len() != blocks.usa || nodes.len() != blocks.usa {
        return Err(StudyError::Invalid("reference model / node count does not match the velocity block".into()));
    }
    let truth_usa = match setup.truth_structure() {
        None => beta_lsqr.to_vec(),
        Some(s) => {
            let pm = s.precision_model(nodes, geometry)?;
            draw_beta_true(&pm, params.eta_true, params.psi_true, beta_lsqr, &mut substream(seed, 1))?
        }
    };
    let beta0_usa = match setup {
        Setup::IA => {
            let n = Normal::new(0.0, params.prior_mean_sd).map_err(|e| StudyError::Invalid(e.to_string()))?;
            let mut rng = substream(seed, 2);
            beta_lsqr.iter().map(|&b| b + n.sample(&mut rng)).collect()
        }
        Setup::IB => vec![0.0; blocks.usa],
        Setup::IIA | Setup::IIB => beta_lsqr.to_vec(),
    };
    let pad = |mut v: Vec<f64>| {
        v.resize(blocks.total(), 0.0);
        v
    };
    let mut beta_true = pad(truth_usa);
    if blocks.hyp + blocks.time > 0 {
        let mut rng = substream(seed, 4);
        let (hyp, time) = beta_true[blocks.usa..].split_at_mut(blocks.hyp);
        for (v, sd) in hyp.iter_mut().map(|v| (v, params.source_shift_sd)).chain(time.iter_mut().map(|v| (v, params.origin_time_sd))) {
            let z: f64 = rand_distr::StandardNormal.sample(&mut rng);
            *v = sd * z;
        }
    }
    let y = synthesize_data(
        &problem.design(),
        &beta_true,
        &NoiseSpec {
            kind: noise,
            seed: noise_seed,
        },
    )?;
    Ok(SyntheticData {
        beta_true,
        beta0: pad(beta0_usa),
        y,
    })
}

/// Chain schedule shared by all cells (seed and structure are per cell).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    pub iterations: usize,
    /// Raw iterations.
    pub burn_in: usize,
    pub thinning: usize,
}

impl Default for Schedule {
    /// 3000 iterations, thinning 15, burn-in of 100 thinned draws.
    fn default() -> Self {
        Self {
            iterations: 3000,
            burn_in: 1500,
            thinning: 15,
        }
    }
}

impl Schedule {
    pub fn chain(&self, seed: u64, structure: PriorStructure) -> ChainConfig {
        ChainConfig::new(self.iterations, self.burn_in, self.thinning, seed, ModelKind::Model1, structure)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySpec {
    pub setups: Vec<Setup>,
    pub seeds: Vec<u64>,
    #[serde(default = "all_structures")]
    pub structures: Vec<PriorStructure>,
    #[serde(default = "both_noises")]
    pub noises: Vec<NoiseLabel>,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub generator: GeneratorSpec,
    #[serde(default)]
    pub schedule: Schedule,
    #[serde(default)]
    pub params: SetupParams,
    #[serde(default)]
    pub neighborhood: NeighborhoodGeometry<f64>,
    #[serde(default = "default_quantiles")]
    pub quantiles: (f64, f64),
}

fn all_structures() -> Vec<PriorStructure> {
    PriorStructure::ALL.to_vec()
}

fn both_noises() -> Vec<NoiseLabel> {
    vec![NoiseLabel::Gaussian, NoiseLabel::StudentT]
}

fn default_quantiles() -> (f64, f64) {
    (0.05, 0.95)
}

impl StudySpec {
    /// Full desk-scale matrix for the given setups and seeds.
    pub fn desk(setups: Vec<Setup>, seeds: Vec<u64>) -> Self {
        Self {
            setups,
            seeds,
            structures: all_structures(),
            noises: both_noises(),
            grid: GridSpec::default(),
            generator: GeneratorSpec::default(),
            schedule: Schedule::default(),
            params: SetupParams::default(),
            neighborhood: NeighborhoodGeometry::default(),
            quantiles: default_quantiles(),
        }
    }

    pub fn validate(&self) -> Result<(), StudyError> {
        if self.seeds.is_empty() {
            return Err(StudyError::Invalid("seed list is empty".into()));
        }
        if self.setups.is_empty() || self.structures.is_empty() || self.noises.is_empty() {
            return Err(StudyError::Invalid("setups, structures and noises must be non-empty".into()));
        }
        self.schedule.chain(0, PriorStructure::Independent).validate()?;
        Ok(())
    }

    /// `(setup, noise, structure)` combinations run for every seed.
    pub fn cells(&self) -> Vec<(Setup, NoiseLabel, PriorStructure)> {
        let mut out = Vec::new();
        for &setup in &self.setups {
            for &noise in self.noises.iter().filter(|&&n| setup.allows(n)) {
                for &s in &self.structures {
                    out.push((setup, noise, s));
                }
            }
        }
        out
    }
}

/// Everything shared by the cells of one seed: geometry, design, reference
/// model and one prepared conditional per prior structure.
pub struct SeedContext {
    pub seed: u64,
    pub grid: VoxelGrid<f64>,
    pub nodes: NodeSet<f64>,
    pub geometry: EventStationGeometry<f64>,
    pub problem: ForwardProblem<f64>,
    pub beta_lsqr: Vec<f64>,
    conditionals: BTreeMap<PriorStructure, ConditionalBeta<f64>>,
}

impl SeedContext {
    pub fn new(spec: &StudySpec, seed: u64) -> Result<Self, StudyError> {
        let grid = spec.grid.build()?;
        let g = spec.generator;
        let geometry = EventStationGeometry::generate(&grid, g.events, g.stations, g.paths, &mut substream(seed, 10))?;
        let problem = assemble_forward(&grid, &geometry, ModelKind::Model1, DEFAULT_REFERENCE_VELOCITY)?;
        let beta_lsqr = lsqr_reference(&problem, &grid, &spec.params, derive_seed(seed, 11))?;
        Ok(Self {
            seed,
            nodes: grid.node_set(),
            grid,
            geometry,
            problem,
            beta_lsqr,
            conditionals: BTreeMap::new(),
        })
    }

    /// Symbolic analysis for `structure`, computed on first use.
    pub fn conditional(&mut self, structure: PriorStructure, spec: &StudySpec) -> Result<&ConditionalBeta<f64>, StudyError> {
        if !self.conditionals.contains_key(&structure) {
            let pm = structure.precision_model(&self.nodes, &spec.neighborhood)?;
            let c = ConditionalBeta::new(&self.problem, &pm)?;
            self.conditionals.insert(structure, c);
        }
        Ok(&self.conditionals[&structure])
    }

    pub fn synthesize(&self, spec: &StudySpec, setup: Setup, noise: NoiseLabel) -> Result<SyntheticData, StudyError> {
        // model seed depends on the setup only and the noise seed on the label
        // only, so I_a/I_b share y and the Gaussian/t runs share truth and mean
        let idx = Setup::ALL.iter().position(|&s| s == setup).expect("listed") as u64;
        synthesize_setup(
            setup,
            noise.kind(&spec.params),
            &spec.params,
            &self.problem,
            &self.nodes,
            &spec.neighborhood,
            &self.beta_lsqr,
            derive_seed(self.seed, 100 + idx),
            derive_seed(self.seed, 200 + noise as u64),
        )
    }

    /// Runs one chain on `data` and summarizes it against the truth.
    pub fn run(&mut self, spec: &StudySpec, data: &SyntheticData, structure: PriorStructure, chain_seed: u64) -> Result<PosteriorSummary, StudyError> {
        let conditional = self.conditional(structure, spec)?.with_observations(&data.y)?;
        let prior = HyperPriors::simulation_defaults(data.beta0.clone());
        let samples = run_chain_prepared(&spec.schedule.chain(chain_seed, structure), &conditional, &prior)?;
        let usa = conditional.blocks().usa;
        Ok(summarize(
            &samples,
            conditional.design(),
            &data.y,
            spec.quantiles,
            Some(conditional.precision()),
            Some(&data.beta_true[..usa]),
        )?)
    }
}

/// One row of the study report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub seed: u64,
    pub setup: Setup,
    pub noise: NoiseLabel,
    pub structure: PriorStructure,
    pub n_draws: Option<usize>,
    pub dic: Option<f64>,
    pub p_d: Option<f64>,
    pub mean_deviance: Option<f64>,
    pub data_misfit_mode: Option<f64>,
    pub data_misfit_lower: Option<f64>,
    pub data_misfit_upper: Option<f64>,
    pub model_misfit: Option<f64>,
    pub coverage: Option<f64>,
    pub mean_ci_width: Option<f64>,
    pub significant_count: Option<usize>,
    pub eta_usa_mode: Option<f64>,
    pub phi_mode: Option<f64>,
    pub psi_mode: Option<f64>,
    pub psi_acceptance: Option<f64>,
    pub seconds: f64,
    pub error: Option<String>,
}

impl CellResult {
    fn new(seed: u64, setup: Setup, noise: NoiseLabel, structure: PriorStructure, seconds: f64, r: Result<PosteriorSummary, StudyError>) -> Self {
        let mut out = Self {
            seed,
            setup,
            noise,
            structure,
            n_draws: None,
            dic: None,
            p_d: None,
            mean_deviance: None,
            data_misfit_mode: None,
            data_misfit_lower: None,
            data_misfit_upper: None,
            model_misfit: None,
            coverage: None,
            mean_ci_width: None,
            significant_count: None,
            eta_usa_mode: None,
            phi_mode: None,
            psi_mode: None,
            psi_acceptance: None,
            seconds,
            error: None,
        };
        match r {
            Err(e) => out.error = Some(e.to_string()),
            Ok(s) => {
                out.n_draws = Some(s.n_draws);
                out.dic = Some(s.dic.dic);
                out.p_d = Some(s.dic.p_d);
                out.mean_deviance = Some(s.dic.mean_deviance);
                out.data_misfit_mode = Some(s.data_misfit_mode);
                out.data_misfit_lower = Some(s.data_misfit_lower);
                out.data_misfit_upper = Some(s.data_misfit_upper);
                out.model_misfit = s.model_misfit;
                out.coverage = s.coverage;
                out.mean_ci_width = Some(s.mean_interval_width(s.mean.len()));
                out.significant_count = Some(s.significant_count());
                out.eta_usa_mode = Some(s.eta_usa.mode);
                out.phi_mode = Some(s.phi.mode);
                out.psi_mode = s.psi.map(|p| p.mode);
                out.psi_acceptance = s.psi_acceptance;
            }
        }
        out
    }
}

fn run_seed(spec: &StudySpec, seed: u64) -> Vec<CellResult> {
    let cells = spec.cells();
    let mut ctx = match SeedContext::new(spec, seed) {
        Ok(c) => c,
        Err(e) => {
            let msg = e.to_string();
            log::error!("seed {seed}: setup failed: {msg}");
            return cells
                .into_iter()
                .map(|(setup, noise, s)| CellResult::new(seed, setup, noise, s, 0.0, Err(StudyError::Invalid(msg.clone()))))
                .collect();
        }
    };
    let mut data: BTreeMap<(Setup, NoiseLabel), Result<SyntheticData, String>> = BTreeMap::new();
    let mut out = Vec::with_capacity(cells.len());
    for (k, (setup, noise, structure)) in cells.into_iter().enumerate() {
        let start = Instant::now();
        let d = data
            .entry((setup, noise))
            .or_insert_with(|| ctx.synthesize(spec, setup, noise).map_err(|e| e.to_string()))
            .clone();
        let r = match d {
            Ok(d) => ctx.run(spec, &d, structure, derive_seed(seed, 1000 + k as u64)),
            Err(e) => Err(StudyError::Invalid(e)),
        };
        if let Err(e) = &r {
            log::error!("seed {seed} {} {noise:?} structure {}: {e}", setup.name(), structure.id());
        }
        out.push(CellResult::new(seed, setup, noise, structure, start.elapsed().as_secs_f64(), r));
    }
    out
}

/// Runs every cell of `spec` for every seed. Seeds run concurrently on up
/// to `workers` threads; a failing cell is recorded and the study goes on.
pub fn run_study(spec: &StudySpec, workers: usize) -> Result<Vec<CellResult>, StudyError> {
    spec.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| StudyError::Invalid(e.to_string()))?;
    let per_seed: Vec<Vec<CellResult>> = pool.install(|| spec.seeds.par_iter().map(|&s| run_seed(spec, s)).collect());
    Ok(per_seed.into_iter().flatten().collect())
}
