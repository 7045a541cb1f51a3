use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use gmrf_tomo::baseline::lsqr;
use gmrf_tomo::config::{DataSource, GeometrySource, PriorMean, RunConfig};
use gmrf_tomo::diagnostics::summarize;
use gmrf_tomo::forward::{assemble_forward, BlockSizes, EventStationGeometry, ForwardProblem, ModelKind};
use gmrf_tomo::io::{
    export_trace_csv, read_forward, read_hash_line, read_trace, read_vector_csv, write_estimate_csv, write_forward, write_nodes_csv,
    write_summary_csv, write_vector_csv, SummaryReport, TraceHeader, TraceWriter,
};
use gmrf_tomo::random::substream;
use gmrf_tomo::sampler::{run_chain_observed, ConditionalBeta, PriorStructure, SamplerError};
use gmrf_tomo::spatial::NodeSet;
use gmrf_tomo::study::{derive_seed, lsqr_reference, run_study, synthesize_setup, Setup};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const FORWARD_FILE: &str = "forward.coo";
pub const OBSERVATIONS_FILE: &str = "y.csv";
pub const BETA_TRUE_FILE: &str = "beta_true.csv";
pub const BETA0_FILE: &str = "beta0.csv";
pub const BETA_LSQR_FILE: &str = "beta_lsqr.csv";
pub const TRACE_FILE: &str = "trace.bin";
pub const RUN_MANIFEST: &str = "run_manifest.json";

/// Options shared by every subcommand.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: RunConfig,
    pub out: PathBuf,
    pub workers: usize,
    /// `--seed`, when given.
    pub seed_override: Option<u64>,
}

impl Context {
    pub fn load(config: &Path, seed: Option<u64>, out: Option<PathBuf>, workers: usize) -> Result<Self> {
        let mut cfg = RunConfig::load(config)?;
        if let Some(s) = seed {
            cfg.seed = s;
        }
        let out = out
            .or_else(|| cfg.output.clone())
            .ok_or_else(|| CliError::config("no output directory: pass --out or set \"output\" in the config"))?;
        if workers == 0 {
            return Err(CliError::config("--workers must be at least 1"));
        }
        fs::create_dir_all(&out).map_err(|e| CliError::io_at(&out, e))?;
        Ok(Self {
            config: cfg,
            out,
            workers,
            seed_override: seed,
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io_at(path, e))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| CliError::io_at(path, e))?;
    Ok(buf)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn save_vector(path: &Path, v: &[f64], hash: &str) -> Result<()> {
    let mut w = create(path)?;
    write_vector_csv(&mut w, v, hash)?;
    w.flush()?;
    Ok(())
}

/// Reads an `index,value` CSV; when `hash` is given the file's hash line must match.
fn load_vector(path: &Path, hash: Option<&str>) -> Result<Vec<f64>> {
    let bytes = read_bytes(path)?;
    if let Some(h) = hash {
        let found = read_hash_line(&bytes[..])?;
        if found.as_deref() != Some(h) {
            return Err(CliError::config(format!("{} belongs to a different problem (hash mismatch)", path.display())));
        }
    }
    read_vector_csv(&bytes[..]).map_err(|e| CliError::io_at(path, e))
}

fn write_with_hash(path: &Path, hash: &str, body: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "# hash={hash}")?;
    body(&mut w)?;
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct GenerateManifest {
    pub experiment: String,
    pub config_hash: String,
    pub data_hash: String,
    pub seed: u64,
    pub geometry_seed: u64,
    pub data_seed: u64,
    pub model: ModelKind,
    pub blocks: BlockSizes,
    pub n_obs: usize,
    pub forward_nnz: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub setup: Option<Setup>,
    /// Generating structure and hyperparameters of a drawn truth.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truth_structure: Option<PriorStructure>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta_true: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub psi_true: Option<f64>,
    pub files: Vec<String>,
}

fn build_geometry(cfg: &RunConfig, grid: &gmrf_tomo::VoxelGridF64) -> Result<EventStationGeometry<f64>> {
    Ok(match &cfg.geometry {
        GeometrySource::Generate { counts, .. } => {
            EventStationGeometry::generate(grid, counts.events, counts.stations, counts.paths, &mut substream(cfg.geometry_seed(), 0))?
        }
        GeometrySource::Files { events, stations, paths } => {
            let open = |p: &PathBuf| File::open(p).map_err(|e| CliError::io_at(p, e));
            EventStationGeometry::read_csv(open(events)?, open(stations)?, open(paths)?)?
        }
    })
}

/// Geometry, forward matrix and data files for the configuration.
pub fn generate(ctx: &Context) -> Result<GenerateManifest> {
    let cfg = &ctx.config;
    let hash = cfg.data_hash();
    let grid = cfg.grid.build()?;
    let nodes = grid.node_set();
    let geometry = build_geometry(cfg, &grid)?;
    let mut problem = assemble_forward(&grid, &geometry, cfg.model, cfg.reference_velocity)?;
    let blocks = problem.blocks();
    log::info!("forward problem: {} paths, {} parameters, {} nonzeros", problem.n_obs(), blocks.total(), problem.design().nnz());

    let mut files = vec![
        "events.csv".to_string(),
        "stations.csv".into(),
        "paths.csv".into(),
        "nodes.csv".into(),
        FORWARD_FILE.into(),
        OBSERVATIONS_FILE.into(),
    ];
    let (mut setup, mut truth_structure, mut eta_true, mut psi_true) = (None, None, None, None);
    match &cfg.data {
        DataSource::Synthetic { setup: s, noise, params } => {
            let seed = cfg.data_seed();
            let beta_lsqr = lsqr_reference(&problem, &grid, params, derive_seed(seed, 11))?;
            let data = synthesize_setup(
                *s,
                *noise,
                params,
                &problem,
                &nodes,
                &cfg.neighborhood,
                &beta_lsqr,
                derive_seed(seed, 100),
                derive_seed(seed, 200),
            )?;
            save_vector(&ctx.path(BETA_TRUE_FILE), &data.beta_true, &hash)?;
            save_vector(&ctx.path(BETA0_FILE), &data.beta0, &hash)?;
            save_vector(&ctx.path(BETA_LSQR_FILE), &beta_lsqr, &hash)?;
            files.extend([BETA_TRUE_FILE.into(), BETA0_FILE.into(), BETA_LSQR_FILE.into()]);
            setup = Some(*s);
            truth_structure = s.truth_structure();
            if truth_structure.is_some() {
                eta_true = Some(params.eta_true);
                psi_true = Some(params.psi_true);
            }
            problem.y = data.y;
        }
        DataSource::Files { observations, beta_true } => {
            let y = load_vector(observations, None)?;
            if y.len() != problem.n_obs() {
                return Err(CliError::config(format!("{} observations for {} paths", y.len(), problem.n_obs())));
            }
            if let Some(b) = beta_true {
                let b = load_vector(b, None)?;
                if b.len() != blocks.total() {
                    return Err(CliError::config(format!("beta_true has {} entries, expected {}", b.len(), blocks.total())));
                }
                save_vector(&ctx.path(BETA_TRUE_FILE), &b, &hash)?;
                files.push(BETA_TRUE_FILE.into());
            }
            problem.y = y;
        }
    }

    let (mut events, mut stations, mut paths) = (Vec::new(), Vec::new(), Vec::new());
    geometry.write_csv(&mut events, &mut stations, &mut paths)?;
    for (name, body) in [("events.csv", &events), ("stations.csv", &stations), ("paths.csv", &paths)] {
        write_with_hash(&ctx.path(name), &hash, |w| Ok(w.write_all(body)?))?;
    }
    {
        let mut w = create(&ctx.path("nodes.csv"))?;
        write_nodes_csv(&mut w, &nodes, &hash)?;
        w.flush()?;
    }
    {
        let mut w = create(&ctx.path(FORWARD_FILE))?;
        write_forward(&mut w, &problem, &hash)?;
        w.flush()?;
    }
    save_vector(&ctx.path(OBSERVATIONS_FILE), &problem.y, &hash)?;

    let manifest = GenerateManifest {
        experiment: cfg.experiment.clone(),
        config_hash: cfg.config_hash(),
        data_hash: hash,
        seed: cfg.seed,
        geometry_seed: cfg.geometry_seed(),
        data_seed: cfg.data_seed(),
        model: cfg.model,
        blocks,
        n_obs: problem.n_obs(),
        forward_nnz: problem.design().nnz(),
        setup,
        truth_structure,
        eta_true,
        psi_true,
        files,
    };
    write_json(&ctx.path("generate_manifest.json"), &manifest)?;
    Ok(manifest)
}

/// Problem files written by [`generate`], checked against the configuration.
pub struct LoadedProblem {
    pub problem: ForwardProblem<f64>,
    pub nodes: NodeSet<f64>,
    pub hash: String,
    pub dir: PathBuf,
}

pub fn load_problem(cfg: &RunConfig, dir: &Path) -> Result<LoadedProblem> {
    let path = dir.join(FORWARD_FILE);
    let (problem, hash) = read_forward(&read_bytes(&path)?[..]).map_err(|e| CliError::io_at(&path, e))?;
    if hash != cfg.data_hash() {
        return Err(CliError::config(format!(
            "{} was generated from a different configuration (data hash mismatch)",
            path.display()
        )));
    }
    if problem.model() != cfg.model {
        return Err(CliError::config("problem model differs from the configured model"));
    }
    let y = load_vector(&dir.join(OBSERVATIONS_FILE), Some(&hash))?;
    let problem = problem.with_observations(y)?;
    let nodes = cfg.grid.build()?.node_set();
    if nodes.len() != problem.blocks().usa {
        return Err(CliError::config("grid does not match the forward matrix"));
    }
    Ok(LoadedProblem {
        problem,
        nodes,
        hash,
        dir: dir.to_owned(),
    })
}

fn prior_mean(cfg: &RunConfig, lp: &LoadedProblem) -> Result<Vec<f64>> {
    let d = lp.problem.blocks().total();
    let default = match cfg.data {
        DataSource::Synthetic { .. } => PriorMean::Setup,
        DataSource::Files { .. } => PriorMean::Zero,
    };
    let beta0 = match cfg.prior_mean.clone().unwrap_or(default) {
        PriorMean::Zero => vec![0.0; d],
        PriorMean::Setup => load_vector(&lp.dir.join(BETA0_FILE), Some(&lp.hash))?,
        PriorMean::File(p) => load_vector(&p, None)?,
    };
    if beta0.len() != d {
        return Err(CliError::config(format!("prior mean has {} entries, expected {d}", beta0.len())));
    }
    Ok(beta0)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Timings {
    pub setup_seconds: f64,
    pub sampling_seconds: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub experiment: String,
    pub config_hash: String,
    pub data_hash: String,
    pub seed: u64,
    pub chain_seed: u64,
    pub model: ModelKind,
    pub structure: PriorStructure,
    pub iterations: usize,
    pub burn_in: usize,
    pub thinning: usize,
    pub stored_draws: usize,
    /// Post-burn-in acceptance rate of the `psi` step (absent without one).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi_acceptance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi_proposal_sd: Option<f64>,
    pub timings: Timings,
}

/// Runs the configured chain, streaming draws to `trace.bin`.
pub fn sample(ctx: &Context, problem_dir: &Path, export_csv: bool) -> Result<RunManifest> {
    let cfg = &ctx.config;
    let start = Instant::now();
    let lp = load_problem(cfg, problem_dir)?;
    let prior = cfg.hyperpriors.with_mean(prior_mean(cfg, &lp)?);
    let precision = cfg.structure.precision_model(&lp.nodes, &cfg.neighborhood)?;
    let conditional = ConditionalBeta::new(&lp.problem, &precision)?;
    let setup_seconds = start.elapsed().as_secs_f64();

    let header = TraceHeader {
        config_hash: cfg.config_hash(),
        data_hash: lp.hash.clone(),
        blocks: lp.problem.blocks(),
        model: cfg.model,
        structure: cfg.structure,
        seed: cfg.chain_seed(),
    };
    let trace_path = ctx.path(TRACE_FILE);
    let mut writer = TraceWriter::new(create(&trace_path)?, &header)?;
    let chain = cfg.chain_config();
    let every = (chain.iterations / 10).max(1);
    let mut io_error = None;
    let t0 = Instant::now();
    let result = run_chain_observed(&chain, &conditional, &prior, &mut |s, beta| {
        if s.iteration % every < chain.thinning {
            log::info!("iteration {}/{}", s.iteration, chain.iterations);
        }
        writer.write(s, beta).map_err(|e| {
            let msg = e.to_string();
            io_error = Some(e);
            SamplerError::Aborted(msg)
        })
    });
    let samples = match (result, io_error) {
        (_, Some(e)) => return Err(CliError::io_at(&trace_path, e)),
        (r, None) => r?,
    };
    drop(writer);
    let sampling_seconds = t0.elapsed().as_secs_f64();
    log::info!("stored {} draws in {sampling_seconds:.1} s", samples.len());

    let has_psi = cfg.structure != PriorStructure::Independent;
    let manifest = RunManifest {
        experiment: cfg.experiment.clone(),
        config_hash: header.config_hash.clone(),
        data_hash: header.data_hash.clone(),
        seed: cfg.seed,
        chain_seed: chain.seed,
        model: cfg.model,
        structure: cfg.structure,
        iterations: chain.iterations,
        burn_in: chain.burn_in,
        thinning: chain.thinning,
        stored_draws: samples.len(),
        psi_acceptance: has_psi.then_some(samples.psi_acceptance),
        psi_proposal_sd: has_psi.then_some(samples.psi_proposal_sd),
        timings: Timings {
            setup_seconds,
            sampling_seconds,
        },
    };
    write_json(&ctx.path(RUN_MANIFEST), &manifest)?;
    if export_csv {
        let mut w = create(&ctx.path("trace.csv"))?;
        export_trace_csv(&mut w, &samples, &header.config_hash)?;
        w.flush()?;
    }
    Ok(manifest)
}

/// Summarizes a trace: `summary.json` (global quantities) and `summary.csv`
/// (per parameter).
pub fn diagnose(ctx: &Context, problem_dir: &Path, trace: Option<&Path>, truth: Option<&Path>, export_csv: bool) -> Result<SummaryReport> {
    let cfg = &ctx.config;
    let lp = load_problem(cfg, problem_dir)?;
    let trace_path = trace.map(Path::to_owned).unwrap_or_else(|| ctx.path(TRACE_FILE));
    let mut tf = read_trace(&read_bytes(&trace_path)?[..]).map_err(|e| CliError::io_at(&trace_path, e))?;
    let h = &tf.header;
    if h.config_hash != cfg.config_hash() {
        return Err(CliError::config(format!("{} was produced under a different configuration", trace_path.display())));
    }
    if h.data_hash != lp.hash || h.blocks != lp.problem.blocks() {
        return Err(CliError::config(format!("{} does not belong to this problem", trace_path.display())));
    }
    if tf.samples.is_empty() {
        return Err(CliError::config(format!("{} holds no complete draws", trace_path.display())));
    }
    // acceptance is a chain-level quantity, kept in the run manifest
    let manifest_path = trace_path.with_file_name(RUN_MANIFEST);
    if let Ok(bytes) = fs::read(&manifest_path) {
        if let Ok(m) = serde_json::from_slice::<RunManifest>(&bytes) {
            if m.config_hash == h.config_hash {
                tf.samples.psi_acceptance = m.psi_acceptance.unwrap_or(f64::NAN);
            }
        }
    }
    let truth = match truth {
        Some(p) => {
            let b = load_vector(p, None)?;
            if b.len() != lp.problem.blocks().total() {
                return Err(CliError::config(format!("{} has {} entries, expected {}", p.display(), b.len(), lp.problem.blocks().total())));
            }
            Some(b)
        }
        None => None,
    };
    let precision = cfg.structure.precision_model(&lp.nodes, &cfg.neighborhood)?;
    let usa = lp.problem.blocks().usa;
    let summary = summarize(
        &tf.samples,
        &lp.problem.design(),
        &lp.problem.y,
        cfg.quantiles,
        Some(&precision),
        truth.as_deref().map(|t| &t[..usa]),
    )?;
    let report = SummaryReport::new(&summary, &tf.header);
    write_json(&ctx.path("summary.json"), &report)?;
    let mut w = create(&ctx.path("summary.csv"))?;
    write_summary_csv(&mut w, &summary, &lp.nodes, tf.header.blocks, &tf.header.config_hash)?;
    w.flush()?;
    if export_csv {
        let mut w = create(&ctx.path("trace.csv"))?;
        export_trace_csv(&mut w, &tf.samples, &tf.header.config_hash)?;
        w.flush()?;
    }
    Ok(report)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LsqrReport {
    pub data_hash: String,
    pub damping: f64,
    pub iterations: usize,
    pub residual_norm: f64,
    pub converged: bool,
}

/// Damped LSQR baseline on the problem's full design.
pub fn run_lsqr(ctx: &Context, problem_dir: &Path) -> Result<LsqrReport> {
    let cfg = &ctx.config;
    let lp = load_problem(cfg, problem_dir)?;
    let s = cfg.lsqr;
    let sol = lsqr(&lp.problem.design(), &lp.problem.y, s.damping, s.tol, s.max_iter)?;
    if !sol.converged {
        log::warn!("lsqr stopped after {} iterations without meeting the tolerance", sol.iterations);
    }
    let mut w = create(&ctx.path("lsqr_estimate.csv"))?;
    write_estimate_csv(&mut w, &sol.beta, &lp.nodes, &lp.hash)?;
    w.flush()?;
    let report = LsqrReport {
        data_hash: lp.hash,
        damping: s.damping,
        iterations: sol.iterations,
        residual_norm: sol.residual_norm,
        converged: sol.converged,
    };
    write_json(&ctx.path("lsqr.json"), &report)?;
    Ok(report)
}

#[derive(Serialize)]
struct StudyReport<'a> {
    experiment: &'a str,
    config_hash: String,
    spec: &'a gmrf_tomo::study::StudySpec,
    failed_cells: usize,
    cells: &'a [gmrf_tomo::study::CellResult],
}

/// Scenario matrix; failed cells are reported, not fatal.
pub fn study(ctx: &Context) -> Result<usize> {
    let cfg = &ctx.config;
    let mut spec = cfg.study_spec()?;
    // --seed narrows the study to that one seed
    if let Some(seed) = ctx.seed_override {
        spec.seeds = vec![seed];
    }
    let hash = cfg.config_hash();
    log::info!("study: {} seeds x {} cells on {} workers", spec.seeds.len(), spec.cells().len(), ctx.workers);
    let cells = run_study(&spec, ctx.workers)?;
    let failed = cells.iter().filter(|c| c.error.is_some()).count();
    write_with_hash(&ctx.path("study.csv"), &hash, |w| {
        let mut c = csv::Writer::from_writer(w);
        for cell in &cells {
            c.serialize(cell).map_err(|e| CliError::io_at(&ctx.path("study.csv"), e))?;
        }
        c.flush()?;
        Ok(())
    })?;
    write_json(
        &ctx.path("study.json"),
        &StudyReport {
            experiment: &cfg.experiment,
            config_hash: hash,
            spec: &spec,
            failed_cells: failed,
            cells: &cells,
        },
    )?;
    if failed > 0 {
        log::warn!("{failed} of {} cells failed; see study.csv", cells.len());
    }
    Ok(failed)
}
