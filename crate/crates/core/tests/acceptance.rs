//! Acceptance suite. Prints one PASS/FAIL line per criterion.
//!
//! Criteria 1-5 and 10 are exact or calibrated checks and make the binary
//! exit non-zero when they fail. Criterion 6 (fill on the desk problems) and
//! 7-9 (directional findings of the desk-scale simulation study) depend on
//! the generated instances; their lines are reported but do not change the
//! exit status.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{dense, dense_sym, edge, ks_pvalue, max_abs, mean_sd, moments, random_graph, reconstruct, rng};
use gmrf_tomo::baseline::modified_ridge;
use gmrf_tomo::diagnostics::ess;
use gmrf_tomo::forward::{ForwardProblem, VoxelGrid};
use gmrf_tomo::random::standard_normal;
use gmrf_tomo::sampler::{
    gibbs_update_precisions, ChainState, ConditionalBeta, HyperPriors, PriorStructure, PsiPrior, PsiUpdater,
};
use gmrf_tomo::sparse::{analyze_fill_reducing, Permutation, SparseMatrix, SymbolicCholesky};
use gmrf_tomo::spatial::{assemble_q, build_neighbor_graph, NeighborGraph, NeighborhoodSpec, PrecisionModel, WeightKind};
use gmrf_tomo::study::{NoiseLabel, Schedule, SeedContext, Setup, StudySpec};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use statrs::distribution::{ContinuousCDF, Gamma};

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(id: usize, name: &str, limit: Option<Duration>, run: impl FnOnce() -> Outcome) -> bool {
    let t = Instant::now();
    let mut o = run();
    let dt = t.elapsed();
    if let Some(l) = limit {
        if dt > l {
            o.pass = false;
            o.detail += &format!("; runtime over {l:?}");
        }
    }
    println!("criterion {id:>2} {} {name}: {} [{:.1}s]", if o.pass { "PASS" } else { "FAIL" }, o.detail, dt.as_secs_f64());
    o.pass
}

fn problem(n: usize, d: usize, density: f64, seed: u64) -> ForwardProblem<f64> {
    let mut r = rng(seed);
    let mut t = Vec::new();
    for i in 0..n {
        for j in 0..d {
            if r.random::<f64>() < density {
                t.push((i, j, r.random_range(0.0..2.0)));
            }
        }
    }
    let y = (0..n).map(|_| r.random_range(-3.0..3.0)).collect();
    ForwardProblem { x_usa: SparseMatrix::from_triplets(n, d, t).unwrap(), x_hyp: None, x_time: None, y }
}

fn state(prior: &HyperPriors<f64>, phi: f64, eta: f64, psi: f64) -> ChainState<f64> {
    let mut s = ChainState::initial(prior, PriorStructure::SphericalReciprocal);
    s.phi = phi;
    s.eta_usa = eta;
    s.psi = psi;
    s
}

fn grid_model(counts: [usize; 3]) -> PrecisionModel<f64> {
    let g = VoxelGrid::new([0.0; 3], counts, [100.0; 3]).unwrap();
    let spec = NeighborhoodSpec::spherical(150.0, WeightKind::Reciprocal).unwrap();
    PrecisionModel::new(build_neighbor_graph(&g.node_set(), &spec).unwrap())
}

fn prior_algebra() -> Outcome {
    let mut r = rng(101);
    let mut identity_ok = 0;
    for _ in 0..100 {
        let n = r.random_range(1..=200);
        let g = random_graph(n, r.random_range(0.0..6.0 / n as f64), &mut r);
        identity_ok += usize::from(dense_sym(&assemble_q(&g, 0.0)) == DMatrix::identity(n, n));
    }
    let mut worst = 0.0f64;
    let mut factored = 0;
    for psi in [0.1, 1.0, 10.0] {
        for _ in 0..30 {
            let n = r.random_range(1..=200);
            let g = random_graph(n, r.random_range(0.0..6.0 / n as f64), &mut r);
            let q = assemble_q(&g, psi);
            let Ok(sym) = analyze_fill_reducing(&q) else { continue };
            factored += 1;
            worst = worst.max(max_abs(&(reconstruct(&q, sym.permutation().clone()) - dense_sym(&q))));
        }
    }
    Outcome {
        pass: identity_ok == 100 && factored == 90 && worst <= 1e-10,
        detail: format!("identity at psi=0 on {identity_ok}/100 graphs; {factored}/90 factorized, max |LL'-Q| = {worst:.1e}"),
    }
}

fn sampler_distribution() -> Outcome {
    let p = problem(30, 10, 0.4, 102);
    let pm = grid_model([5, 2, 1]);
    let beta0: Vec<f64> = (0..10).map(|i| 0.1 * i as f64).collect();
    let prior = HyperPriors::simulation_defaults(beta0);
    let s = state(&prior, 0.7, 2.0, 3.0);
    let cond = ConditionalBeta::new(&p, &pm).unwrap();
    let (omega, xi) = cond.assemble(&s, &prior).unwrap();
    let cov = dense_sym(&omega).try_inverse().unwrap();
    let mean = &cov * DVector::from_column_slice(&xi);
    let mut r = rng(103);
    let draws: Vec<Vec<f64>> = (0..50_000).map(|_| cond.sample(&s, &prior, &mut r).unwrap()).collect();
    let (m, c) = moments(&draws);
    let mean_err = (0..10).map(|i| (m[i] - mean[i]).abs() / cov[(i, i)].sqrt()).fold(0.0, f64::max);
    let cov_err = DMatrix::from_fn(10, 10, |i, j| (c[(i, j)] - cov[(i, j)]).abs() / (cov[(i, i)] * cov[(j, j)]).sqrt()).max();
    Outcome {
        pass: mean_err <= 0.02 && cov_err <= 0.05,
        detail: format!("max mean error {:.2}% of SD, max covariance error {:.2}% (correlation scale)", 100.0 * mean_err, 100.0 * cov_err),
    }
}

/// Mean of the density proportional to `exp(log_f)` on `(0, hi)` by the trapezoid rule.
fn quadrature_mean(log_f: impl Fn(f64) -> f64, hi: f64) -> f64 {
    let k = 200_000;
    let h = hi / k as f64;
    let xs: Vec<f64> = (1..=k).map(|i| i as f64 * h).collect();
    let lf: Vec<f64> = xs.iter().map(|&x| log_f(x)).collect();
    let top = lf.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (mut z, mut m) = (0.0, 0.0);
    for (i, (&x, &l)) in xs.iter().zip(&lf).enumerate() {
        let w = if i + 1 == k { 0.5 } else { 1.0 } * (l - top).exp();
        z += w;
        m += w * x;
    }
    m / z
}

fn conjugate_updates() -> Outcome {
    let pm = grid_model([4, 3, 1]);
    let (mut min_p, mut worst_quad) = (1.0f64, 0.0f64);
    for seed in 0..20u64 {
        let p = problem(40, 12, 0.3, 200 + seed);
        let mut r = rng(300 + seed);
        let beta0: Vec<f64> = (0..12).map(|_| r.random_range(-1.0..1.0)).collect();
        let prior = HyperPriors::simulation_defaults(beta0.clone());
        let cond = ConditionalBeta::new(&p, &pm).unwrap();
        let mut s = state(&prior, 1.0, 1.0, r.random_range(0.5..15.0));
        s.beta = (0..12).map(|_| r.random_range(-1.0..1.0)).collect();

        // derived laws from independent dense algebra
        let x = dense(&p.x_usa);
        let b = DVector::from_column_slice(&s.beta);
        let rss = (DVector::from_column_slice(&p.y) - &x * &b).norm_squared();
        let rv = &b - DVector::from_column_slice(&beta0);
        let quad = (rv.transpose() * dense_sym(&pm.assemble(s.psi)) * &rv)[(0, 0)];
        let (n, d) = (40.0, 12.0);
        let phi_law = (prior.phi.shape + n / 2.0, prior.phi.rate + rss / 2.0);
        let eta_law = (prior.eta_usa.shape + d / 2.0, prior.eta_usa.rate + quad / 2.0);

        let (mut phis, mut etas) = (Vec::new(), Vec::new());
        for _ in 0..4000 {
            gibbs_update_precisions(&mut s, &cond, &prior, &mut r).unwrap();
            phis.push(s.phi);
            etas.push(s.eta_usa);
        }
        for (draws, (a, rate)) in [(&phis, phi_law), (&etas, eta_law)] {
            let g = Gamma::new(a, rate).unwrap();
            min_p = min_p.min(ks_pvalue(draws, |v| g.cdf(v)));
        }

        // the Gamma laws against quadrature of prior x likelihood in each precision
        let phi_q = quadrature_mean(|v| prior.phi.log_density(v) + n / 2.0 * v.ln() - v * rss / 2.0, 40.0 * phi_law.0 / phi_law.1);
        let eta_q = quadrature_mean(|v| prior.eta_usa.log_density(v) + d / 2.0 * v.ln() - v * quad / 2.0, 40.0 * eta_law.0 / eta_law.1);
        worst_quad = worst_quad.max((phi_q / (phi_law.0 / phi_law.1) - 1.0).abs());
        worst_quad = worst_quad.max((eta_q / (eta_law.0 / eta_law.1) - 1.0).abs());
    }
    Outcome {
        pass: min_p > 0.01 && worst_quad <= 1e-3,
        detail: format!("min KS p-value {min_p:.3} over 20 seeds x (phi, eta_usa); max quadrature mean error {:.1e}", worst_quad),
    }
}

fn ridge_identity() -> Outcome {
    let mut r = rng(104);
    let mut worst = 0.0f64;
    for k in 0..10 {
        let d = r.random_range(5..=100);
        let p = problem(d + r.random_range(0..80), d, 0.15, 400 + k);
        let g = random_graph(d, 4.0 / d as f64, &mut r);
        let pm = PrecisionModel::new(g);
        let beta0: Vec<f64> = (0..d).map(|_| r.random_range(-1.0..1.0)).collect();
        let prior = HyperPriors::simulation_defaults(beta0.clone());
        let (phi, eta) = (r.random_range(0.05..5.0), r.random_range(0.05..5.0));
        let mean = ConditionalBeta::new(&p, &pm).unwrap().mean(&state(&prior, phi, eta, 0.0), &prior).unwrap();
        let ridge = modified_ridge(&p.x_usa, &p.y, eta / phi, &beta0).unwrap();
        let scale = ridge.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let err = mean.iter().zip(&ridge).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        worst = worst.max(err / scale);
    }
    Outcome { pass: worst <= 1e-8, detail: format!("max relative deviation {worst:.1e} on 10 instances") }
}

/// Mean and SD of `exp(log_f)` on `(0, hi)`.
fn quadrature_moments(log_f: impl Fn(f64) -> f64, hi: f64) -> (f64, f64) {
    let m = quadrature_mean(&log_f, hi);
    let m2 = quadrature_mean(|x| log_f(x) + x.ln(), hi);
    // E[x^2] = E[x] * (mean of x under x f(x))
    (m, (m * m2 - m * m).sqrt())
}

fn psi_target() -> Outcome {
    let graph = NeighborGraph::from_edges(2, &[edge(1, 0, 1.0)]).unwrap();
    let pm = PrecisionModel::new(graph);
    let beta0 = vec![0.2, -0.1];
    let r = [0.6, -0.4];
    let eta = 1.0;
    let mut details = Vec::new();
    let mut pass = true;
    for (idx, psi_prior) in [PsiPrior { mean: 10.0, sd: 0.2 }, PsiPrior { mean: 1.0, sd: 2.0 }].into_iter().enumerate() {
        let prior = HyperPriors { psi: psi_prior, ..HyperPriors::simulation_defaults(beta0.clone()) };
        let mut s = state(&prior, 1.0, eta, psi_prior.mean.max(0.5));
        s.beta = beta0.iter().zip(&r).map(|(b, d)| b + d).collect();
        let parts = pm.quad_parts(&r);
        let mut up = PsiUpdater::new(&pm, s.psi, psi_prior.sd).unwrap();
        let mut g = rng(105 + idx as u64);
        for t in 0..5000 {
            let a = up.step(&mut s, &prior, &pm, &parts, &mut g);
            up.adapt(a, t);
        }
        let draws: Vec<f64> = (0..200_000)
            .map(|_| {
                up.step(&mut s, &prior, &pm, &parts, &mut g);
                s.psi
            })
            .collect();
        let (m, sd) = mean_sd(&draws);
        let rr = r[0] * r[0] + r[1] * r[1];
        let dd = (r[0] - r[1]) * (r[0] - r[1]);
        let log_target = |psi: f64| {
            let z = (psi - psi_prior.mean) / psi_prior.sd;
            0.5 * (1.0 + 2.0 * psi).ln() - 0.5 * eta * (rr + psi * dd) - 0.5 * z * z
        };
        let (qm, qsd) = quadrature_moments(log_target, psi_prior.mean + 15.0 * psi_prior.sd);
        let (em, esd) = ((m / qm - 1.0).abs(), (sd / qsd - 1.0).abs());
        pass &= em <= 0.03 && esd <= 0.03;
        details.push(format!(
            "N({}, {}^2) prior: mean {m:.4} vs {qm:.4}, sd {sd:.4} vs {qsd:.4}",
            psi_prior.mean, psi_prior.sd
        ));
    }
    Outcome { pass, detail: details.join("; ") }
}

fn ordering_benefit(contexts: &mut [SeedContext], spec: &StudySpec) -> Outcome {
    let mut worst = f64::INFINITY;
    let mut lines = Vec::new();
    for ctx in contexts.iter_mut() {
        let n = ctx.problem.blocks().usa;
        let prior = HyperPriors::simulation_defaults(vec![0.0; n]);
        for structure in [PriorStructure::EllipsoidalReciprocal, PriorStructure::EllipsoidalExponential] {
            let s = ChainState::initial(&prior, structure);
            let cond = ctx.conditional(structure, spec).unwrap();
            let (omega, _) = cond.assemble(&s, &prior).unwrap();
            let natural = SymbolicCholesky::analyze(&omega, Permutation::identity(n)).unwrap().nnz_l();
            let ours = cond.symbolic().nnz_l();
            let red = 1.0 - ours as f64 / natural as f64;
            worst = worst.min(red);
            lines.push(format!("{:.1}%", 100.0 * red));
        }
    }
    Outcome {
        pass: worst >= 0.2,
        detail: format!(
            "nnz(L) reduction vs natural order over seeds x ellipsoidal structures: [{}], min {:.1}% (needs 20%; 50% reached: {})",
            lines.join(", "),
            100.0 * worst,
            if worst >= 0.5 { "yes" } else { "no" }
        ),
    }
}

struct StudyRow {
    dic0: f64,
    dic1: f64,
    coverage: f64,
    width_gauss: f64,
    width_t: f64,
    sig_a: usize,
    sig_b: usize,
    acceptance: Vec<f64>,
}

fn study_rows(contexts: &mut [SeedContext], spec: &StudySpec) -> Vec<StudyRow> {
    let s0 = PriorStructure::Independent;
    let s1 = PriorStructure::SphericalReciprocal;
    contexts
        .iter_mut()
        .map(|ctx| {
            let n = ctx.problem.blocks().usa;
            let ii = ctx.synthesize(spec, Setup::IIA, NoiseLabel::Gaussian).unwrap();
            let r0 = ctx.run(spec, &ii, s0, 7).unwrap();
            let r1 = ctx.run(spec, &ii, s1, 7).unwrap();
            let ia = ctx.synthesize(spec, Setup::IA, NoiseLabel::Gaussian).unwrap();
            let it = ctx.synthesize(spec, Setup::IA, NoiseLabel::StudentT).unwrap();
            let ib = ctx.synthesize(spec, Setup::IB, NoiseLabel::Gaussian).unwrap();
            let ra = ctx.run(spec, &ia, s1, 9).unwrap();
            let rt = ctx.run(spec, &it, s1, 9).unwrap();
            let rb = ctx.run(spec, &ib, s1, 9).unwrap();
            StudyRow {
                dic0: r0.dic.dic,
                dic1: r1.dic.dic,
                coverage: r1.coverage.unwrap(),
                width_gauss: ra.mean_interval_width(n),
                width_t: rt.mean_interval_width(n),
                sig_a: ra.significant_count(),
                sig_b: rb.significant_count(),
                acceptance: [&r1, &ra, &rt, &rb].iter().filter_map(|r| r.psi_acceptance).collect(),
            }
        })
        .collect()
}

fn ess_calibration() -> Outcome {
    let ar1 = |rho: f64, n: usize, seed: u64| {
        let mut r = rng(seed);
        let mut x = 0.0;
        (0..n)
            .map(|_| {
                x = rho * x + standard_normal::<f64, _>(&mut r);
                x
            })
            .collect::<Vec<f64>>()
    };
    let n = 100_000;
    let target = n as f64 * 0.5 / 1.5;
    let e_ar = ess(&ar1(0.5, n, 106)).unwrap();
    let e_iid = ess(&ar1(0.0, n, 107)).unwrap();
    let (a, b) = ((e_ar / target - 1.0).abs(), (e_iid / n as f64 - 1.0).abs());
    Outcome {
        pass: a <= 0.1 && b <= 0.1,
        detail: format!("AR(1) rho=0.5: {e_ar:.0} vs {target:.0}; iid: {e_iid:.0} vs {n}"),
    }
}

fn main() -> ExitCode {
    let mut hard = true;
    hard &= report(1, "prior algebra", Some(Duration::from_secs(10)), prior_algebra);
    hard &= report(2, "sampler distribution", Some(Duration::from_secs(60)), sampler_distribution);
    hard &= report(3, "conjugate updates", None, conjugate_updates);
    hard &= report(4, "ridge identity", Some(Duration::from_secs(5)), ridge_identity);
    hard &= report(5, "psi target", Some(Duration::from_secs(60)), psi_target);

    let seeds: Vec<u64> = (1..=5).collect();
    let mut spec = StudySpec::desk(vec![Setup::IA, Setup::IB, Setup::IIA], seeds.clone());
    spec.schedule = Schedule { iterations: 1000, burn_in: 100, thinning: 1 };
    let setup = Instant::now();
    let mut contexts: Vec<SeedContext> = seeds.iter().map(|&s| SeedContext::new(&spec, s).unwrap()).collect();
    println!("desk study: 5 seeds, 12x12x6 grid, schedule 1000/100/1 (contexts built in {:.1}s)", setup.elapsed().as_secs_f64());
    report(6, "ordering benefit", None, || ordering_benefit(&mut contexts, &spec));

    let study_start = Instant::now();
    let rows = study_rows(&mut contexts, &spec);
    let study_time = study_start.elapsed();
    for (seed, r) in seeds.iter().zip(&rows) {
        println!(
            "  seed {seed}: DIC s0 {:.1} s1 {:.1} | coverage {:.3} | CI width gauss {:.3} t {:.3} | significant I_a {} I_b {} | psi acceptance {:?}",
            r.dic0,
            r.dic1,
            r.coverage,
            r.width_gauss,
            r.width_t,
            r.sig_a,
            r.sig_b,
            r.acceptance.iter().map(|a| format!("{a:.2}")).collect::<Vec<_>>()
        );
    }
    let wins = rows.iter().filter(|r| r.dic1 < r.dic0).count();
    report(7, "Setup II model selection", None, || Outcome {
        pass: wins >= 4 && study_time < Duration::from_secs(1800),
        detail: format!("DIC(structure 1) < DIC(structure 0) in {wins}/5 seeds; study runtime {:.0}s", study_time.as_secs_f64()),
    });
    let coverage = rows.iter().map(|r| r.coverage).sum::<f64>() / rows.len() as f64;
    report(8, "coverage", None, || Outcome {
        pass: (0.85..=0.95).contains(&coverage),
        detail: format!("aggregated 90% interval coverage {coverage:.3}"),
    });
    let wider = rows.iter().filter(|r| r.width_t > r.width_gauss).count();
    let fewer = rows.iter().filter(|r| r.sig_b < r.sig_a).count();
    report(9, "directional robustness", None, || Outcome {
        pass: wider >= 4 && fewer >= 4,
        detail: format!("(a) t-noise wider in {wider}/5 seeds; (b) beta0 = 0 fewer significant in {fewer}/5 seeds"),
    });

    hard &= report(10, "ESS calibration", None, ess_calibration);
    println!("exit status reflects criteria 1-5 and 10: {}", if hard { "all pass" } else { "failure" });
    if hard {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
