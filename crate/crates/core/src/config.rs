//! Versioned JSON run configuration. Unknown keys are rejected and every
//! numeric constraint is checked at load time.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forward::{ModelKind, NoiseKind, NoiseSpec, DEFAULT_REFERENCE_VELOCITY};
use crate::io::sha256_hex;
use crate::sampler::{ChainConfig, GammaPrior, HyperPriors, NeighborhoodGeometry, PriorStructure, PsiPrior};
use crate::study::{derive_seed, GeneratorSpec, GridSpec, NoiseLabel, Schedule, Setup, SetupParams, StudySpec};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn invalid<E: std::fmt::Display>(e: E) -> ConfigError {
    ConfigError::Invalid(e.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum GeometrySource {
    /// Random layout; the seed defaults to one derived from the run seed.
    Generate {
        #[serde(flatten)]
        counts: GeneratorSpec,
        #[serde(default)]
        seed: Option<u64>,
    },
    /// `id,x,y,z` events, `id,x,y` stations, `event_id,station_id` paths.
    Files { events: PathBuf, stations: PathBuf, paths: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// Scenario data generated on the run's design.
    Synthetic {
        setup: Setup,
        noise: NoiseKind,
        #[serde(default)]
        params: SetupParams,
    },
    /// Observed travel times (`index,value` CSV), optionally with a known truth.
    Files {
        observations: PathBuf,
        #[serde(default)]
        beta_true: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PriorMean {
    Zero,
    /// The scenario's own prior mean (synthetic data only).
    Setup,
    /// Full-length `index,value` CSV.
    File(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperPriorConfig {
    pub phi: GammaPrior<f64>,
    pub eta_usa: GammaPrior<f64>,
    pub eta_hyp: GammaPrior<f64>,
    pub eta_time: GammaPrior<f64>,
    pub psi: PsiPrior<f64>,
}

impl Default for HyperPriorConfig {
    fn default() -> Self {
        let d = HyperPriors::<f64>::simulation_defaults(Vec::new());
        Self {
            phi: d.phi,
            eta_usa: d.eta_usa,
            eta_hyp: d.eta_hyp,
            eta_time: d.eta_time,
            psi: d.psi,
        }
    }
}

impl HyperPriorConfig {
    pub fn with_mean(&self, beta0: Vec<f64>) -> HyperPriors<f64> {
        HyperPriors {
            phi: self.phi,
            eta_usa: self.eta_usa,
            eta_hyp: self.eta_hyp,
            eta_time: self.eta_time,
            psi: self.psi,
            beta0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSettings {
    pub iterations: usize,
    /// Raw iterations.
    pub burn_in: usize,
    pub thinning: usize,
    #[serde(default)]
    pub adaptation_window: Option<usize>,
    #[serde(default)]
    pub initial_proposal_sd: Option<f64>,
}

impl Default for ChainSettings {
    fn default() -> Self {
        let s = Schedule::default();
        Self {
            iterations: s.iterations,
            burn_in: s.burn_in,
            thinning: s.thinning,
            adaptation_window: None,
            initial_proposal_sd: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LsqrSettings {
    /// `lambda` in `|X b - y|^2 + lambda^2 |b|^2`.
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LsqrSettings {
    fn default() -> Self {
        Self {
            damping: SetupParams::default().lsqr_damping,
            tol: 1e-10,
            max_iter: 20_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudySettings {
    pub setups: Vec<Setup>,
    pub seeds: Vec<u64>,
    #[serde(default = "all_structures")]
    pub structures: Vec<PriorStructure>,
    #[serde(default = "both_noises")]
    pub noises: Vec<NoiseLabel>,
}

fn all_structures() -> Vec<PriorStructure> {
    PriorStructure::ALL.to_vec()
}

fn both_noises() -> Vec<NoiseLabel> {
    vec![NoiseLabel::Gaussian, NoiseLabel::StudentT]
}

fn default_model() -> ModelKind {
    ModelKind::Model1
}

fn default_velocity() -> f64 {
    DEFAULT_REFERENCE_VELOCITY
}

fn default_quantiles() -> (f64, f64) {
    (0.05, 0.95)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub experiment: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub grid: GridSpec,
    pub geometry: GeometrySource,
    #[serde(default = "default_model")]
    pub model: ModelKind,
    #[serde(default = "default_velocity")]
    pub reference_velocity: f64,
    pub structure: PriorStructure,
    #[serde(default)]
    pub neighborhood: NeighborhoodGeometry<f64>,
    #[serde(default)]
    pub hyperpriors: HyperPriorConfig,
    #[serde(default)]
    pub prior_mean: Option<PriorMean>,
    #[serde(default)]
    pub chain: ChainSettings,
    pub data: DataSource,
    #[serde(default)]
    pub lsqr: LsqrSettings,
    #[serde(default)]
    pub study: Option<StudySettings>,
    #[serde(default = "default_quantiles")]
    pub quantiles: (f64, f64),
    #[serde(default)]
    pub output: Option<PathBuf>,
}

/// The part of a configuration that determines the problem files.
#[derive(Serialize)]
struct DataKey<'a> {
    schema_version: u32,
    seed: u64,
    grid: &'a GridSpec,
    geometry: &'a GeometrySource,
    model: ModelKind,
    reference_velocity: f64,
    neighborhood: &'a NeighborhoodGeometry<f64>,
    data: &'a DataSource,
}

impl RunConfig {
    /// Parses, resolves relative paths against the file's directory and validates.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_owned(),
            source,
        })?;
        let mut cfg = Self::from_json(&text)?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses without touching the file system.
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(text)?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(ConfigError::Invalid(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let GeometrySource::Files { events, stations, paths } = &mut self.geometry {
            fix(events);
            fix(stations);
            fix(paths);
        }
        if let DataSource::Files { observations, beta_true } = &mut self.data {
            fix(observations);
            if let Some(b) = beta_true {
                fix(b);
            }
        }
        if let Some(PriorMean::File(p)) = &mut self.prior_mean {
            fix(p);
        }
        if let Some(o) = &mut self.output {
            fix(o);
        }
    }

    fn files(&self) -> Vec<&Path> {
        let mut out: Vec<&Path> = Vec::new();
        if let GeometrySource::Files { events, stations, paths } = &self.geometry {
            out.extend([events.as_path(), stations.as_path(), paths.as_path()]);
        }
        if let DataSource::Files { observations, beta_true } = &self.data {
            out.push(observations);
            out.extend(beta_true.as_deref());
        }
        if let Some(PriorMean::File(p)) = &self.prior_mean {
            out.push(p);
        }
        out
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.experiment.trim().is_empty() {
            return Err(invalid("experiment name is empty"));
        }
        self.grid.build().map_err(invalid)?;
        if let GeometrySource::Generate { counts, .. } = &self.geometry {
            if counts.events == 0 || counts.stations == 0 || counts.paths == 0 {
                return Err(invalid("generator needs at least one event, station and path"));
            }
            if counts.paths > counts.events * counts.stations {
                return Err(invalid(format!(
                    "{} paths requested but only {} event-station pairs exist",
                    counts.paths,
                    counts.events * counts.stations
                )));
            }
        }
        if !(self.reference_velocity > 0.0 && self.reference_velocity.is_finite()) {
            return Err(invalid("reference_velocity must be positive"));
        }
        self.structure.neighborhood(&self.neighborhood).map_err(invalid)?;
        let hp = self.hyperpriors.with_mean(Vec::new());
        for (name, g) in [("phi", hp.phi), ("eta_usa", hp.eta_usa), ("eta_hyp", hp.eta_hyp), ("eta_time", hp.eta_time)] {
            if !(g.shape > 0.0 && g.rate > 0.0 && g.shape.is_finite() && g.rate.is_finite()) {
                return Err(invalid(format!("{name} prior needs positive shape and rate")));
            }
        }
        if !(hp.psi.sd > 0.0 && hp.psi.sd.is_finite() && hp.psi.mean.is_finite()) {
            return Err(invalid("psi prior needs a positive sd"));
        }
        self.chain_config().validate().map_err(invalid)?;
        match &self.data {
            DataSource::Synthetic { noise, params, .. } => {
                NoiseSpec { kind: *noise, seed: 0 }.validate().map_err(invalid)?;
                let p = params;
                if !(p.eta_true > 0.0 && p.psi_true >= 0.0 && p.phi_true > 0.0 && p.t_dof > 2.0 && p.prior_mean_sd >= 0.0 && p.lsqr_damping >= 0.0 && p.source_shift_sd >= 0.0 && p.origin_time_sd >= 0.0) {
                    return Err(invalid("synthetic parameters out of range"));
                }
            }
            DataSource::Files { .. } => {
                if self.prior_mean == Some(PriorMean::Setup) {
                    return Err(invalid("prior_mean \"setup\" requires synthetic data"));
                }
            }
        }
        let (lo, hi) = self.quantiles;
        if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
            return Err(invalid("quantiles must satisfy 0 <= lower <= upper <= 1"));
        }
        if !(self.lsqr.damping >= 0.0 && self.lsqr.tol > 0.0 && self.lsqr.max_iter > 0) {
            return Err(invalid("lsqr settings out of range"));
        }
        if let Some(s) = &self.study {
            if s.seeds.is_empty() {
                return Err(invalid("study seed list is empty"));
            }
            if s.setups.is_empty() || s.structures.is_empty() || s.noises.is_empty() {
                return Err(invalid("study setups, structures and noises must be non-empty"));
            }
        }
        for f in self.files() {
            if !f.is_file() {
                return Err(invalid(format!("referenced file {} does not exist", f.display())));
            }
        }
        Ok(())
    }

    pub fn chain_config(&self) -> ChainConfig {
        let c = &self.chain;
        let mut cc = ChainConfig::new(c.iterations, c.burn_in, c.thinning, self.chain_seed(), self.model, self.structure);
        if let Some(w) = c.adaptation_window {
            cc.adaptation_window = w;
        }
        cc.initial_proposal_sd = c.initial_proposal_sd;
        cc
    }

    pub fn geometry_seed(&self) -> u64 {
        match &self.geometry {
            GeometrySource::Generate { seed: Some(s), .. } => *s,
            _ => derive_seed(self.seed, 1),
        }
    }

    pub fn data_seed(&self) -> u64 {
        derive_seed(self.seed, 2)
    }

    pub fn chain_seed(&self) -> u64 {
        derive_seed(self.seed, 3)
    }

    /// SHA-256 of the canonical serialization (output location excluded).
    pub fn config_hash(&self) -> String {
        let mut c = self.clone();
        c.output = None;
        sha256_hex(&serde_json::to_vec(&c).expect("config serializes"))
    }

    /// SHA-256 of the fields that determine the generated problem files.
    pub fn data_hash(&self) -> String {
        let key = DataKey {
            schema_version: self.schema_version,
            seed: self.seed,
            grid: &self.grid,
            geometry: &self.geometry,
            model: self.model,
            reference_velocity: self.reference_velocity,
            neighborhood: &self.neighborhood,
            data: &self.data,
        };
        sha256_hex(&serde_json::to_vec(&key).expect("key serializes"))
    }

    /// Study matrix on this configuration's grid, generator, schedule and priors.
    pub fn study_spec(&self) -> Result<StudySpec, ConfigError> {
        let s = self.study.as_ref().ok_or_else(|| invalid("config has no \"study\" section"))?;
        let generator = match &self.geometry {
            GeometrySource::Generate { counts, .. } => *counts,
            GeometrySource::Files { .. } => return Err(invalid("studies generate their own geometry")),
        };
        let params = match &self.data {
            DataSource::Synthetic { params, .. } => *params,
            DataSource::Files { .. } => SetupParams::default(),
        };
        Ok(StudySpec {
            setups: s.setups.clone(),
            seeds: s.seeds.clone(),
            structures: s.structures.clone(),
            noises: s.noises.clone(),
            grid: self.grid.clone(),
            generator,
            schedule: Schedule {
                iterations: self.chain.iterations,
                burn_in: self.chain.burn_in,
                thinning: self.chain.thinning,
            },
            params,
            neighborhood: self.neighborhood,
            quantiles: self.quantiles,
        })
    }
}
