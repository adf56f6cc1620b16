use std::time::Instant;

use anyhow::{Context, Result};
use manpg::problems::{build_fe_hamiltonian, gen_spca, sparsity, SPARSITY_THRESHOLD};
use manpg::soc::{run_soc_cm, run_soc_spca, SocConfig};
use manpg::solvers::{manpg, manpg_ada, riemannian_subgradient, riemannian_subgradient_until, SolverConfig};
use manpg::{subspace_distance, CmProblem, Mat, McpSpcaProblem, ProblemOracle, SpcaProblem, StiefelPoint};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::output::{Agreement, RunRecord};
use crate::spec::{ExperimentSpec, ProblemKind, SolverKind};

/// Solutions with `dist^2` to the ManPG solution at most this are counted as the same.
pub const AGREEMENT_DIST2: f64 = 0.1;
/// SOC also stops only once `F <= F_M + SOC_TARGET_SLACK`.
pub const SOC_TARGET_SLACK: f64 = 1e-7;
/// The subgradient method stops once `F < F_M + SUBGRAD_TARGET_SLACK`.
pub const SUBGRAD_TARGET_SLACK: f64 = 1e-3;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of one instance at one grid point; independent of thread scheduling.
pub fn instance_seed(base: u64, n: usize, r: usize, mu: f64, instance: usize) -> u64 {
    [n as u64, r as u64, mu.to_bits(), instance as u64]
        .into_iter()
        .fold(splitmix(base), |acc, v| splitmix(acc ^ v))
}

enum Instance {
    Spca(SpcaProblem),
    Cm(CmProblem),
    Mcp(McpSpcaProblem),
}

impl Instance {
    fn oracle(&self) -> &dyn ProblemOracle {
        match self {
            Instance::Spca(p) => p,
            Instance::Cm(p) => p,
            Instance::Mcp(p) => p,
        }
    }
}

fn load_or_generate(spec: &ExperimentSpec, n: usize, seed: u64) -> Result<Mat> {
    let mat = match (&spec.matrix, spec.problem) {
        (Some(path), _) => manpg::matio::load_matrix(path).with_context(|| format!("loading {}", path.display()))?,
        (None, ProblemKind::Cm) => build_fe_hamiltonian(n)?,
        (None, _) => gen_spca(spec.m, n, seed)?,
    };
    anyhow::ensure!(
        mat.ncols() == n,
        "data matrix has {} columns but the grid asks for n = {n}",
        mat.ncols()
    );
    Ok(mat)
}

fn build(spec: &ExperimentSpec, n: usize, mu: f64, seed: u64) -> Result<Instance> {
    let data = load_or_generate(spec, n, splitmix(seed ^ 1))?;
    Ok(match spec.problem {
        ProblemKind::Spca => Instance::Spca(SpcaProblem::new(data, mu)?),
        ProblemKind::Cm => Instance::Cm(CmProblem::from_hamiltonian(data, mu)?),
        ProblemKind::McpSpca => Instance::Mcp(McpSpcaProblem::new(
            data,
            mu,
            spec.mcp_lambda,
            spec.mcp_gamma,
            Default::default(),
        )?),
    })
}

struct Outcome {
    x: StiefelPoint,
    objective: f64,
    iters: usize,
    linesearch: usize,
    ssn_mean: f64,
    cpu_s: f64,
}

fn timed<T>(timing: bool, f: impl FnOnce() -> manpg::Result<T>) -> (manpg::Result<T>, f64) {
    let start = Instant::now();
    let out = f();
    (out, if timing { start.elapsed().as_secs_f64() } else { 0.0 })
}

fn from_manpg(res: manpg::Result<manpg::solvers::SolverResult>, cpu_s: f64) -> manpg::Result<Outcome> {
    res.map(|r| Outcome {
        objective: r.objective,
        iters: r.iterations,
        linesearch: r.linesearch_total,
        ssn_mean: r.ssn_mean,
        x: r.x,
        cpu_s,
    })
}

fn run_solver(
    solver: SolverKind,
    inst: &Instance,
    x0: &StiefelPoint,
    spec: &ExperimentSpec,
    cfg: &SolverConfig,
    f_ref: f64,
) -> manpg::Result<Outcome> {
    let p = inst.oracle();
    match solver {
        SolverKind::Manpg => {
            let (res, cpu_s) = timed(spec.timing, || manpg(p, x0, cfg));
            from_manpg(res, cpu_s)
        }
        SolverKind::ManpgAda => {
            let (res, cpu_s) = timed(spec.timing, || manpg_ada(p, x0, cfg));
            from_manpg(res, cpu_s)
        }
        SolverKind::Soc => {
            let soc_cfg = SocConfig {
                max_iter: spec.max_iter,
                f_ref: Some(f_ref),
                target_slack: SOC_TARGET_SLACK,
                ..Default::default()
            };
            let (res, cpu_s) = timed(spec.timing, || match inst {
                Instance::Spca(q) => run_soc_spca(q, x0, &soc_cfg),
                Instance::Cm(q) => run_soc_cm(q, x0, &soc_cfg),
                Instance::Mcp(_) => Err(manpg::Error::InvalidParameter("soc needs an l1 problem".into())),
            });
            res.map(|r| Outcome {
                objective: r.objective,
                iters: r.iterations,
                linesearch: 0,
                ssn_mean: 0.0,
                x: r.x,
                cpu_s,
            })
        }
        SolverKind::Subgrad => {
            let target = Some(f_ref + SUBGRAD_TARGET_SLACK);
            let (res, cpu_s) = timed(spec.timing, || {
                riemannian_subgradient_until(p, x0, spec.max_iter, target, spec.retraction)
            });
            res.map(|r| Outcome {
                objective: r.objective,
                iters: r.iterations,
                linesearch: 0,
                ssn_mean: 0.0,
                x: r.x,
                cpu_s,
            })
        }
    }
}

/// Seeded random point of St(n, r) refined by the subgradient warm start.
fn warm_start(spec: &ExperimentSpec, p: &dyn ProblemOracle, n: usize, r: usize, seed: u64) -> manpg::Result<StiefelPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x_rand = StiefelPoint::random(n, r, &mut rng)?;
    riemannian_subgradient(p, &x_rand, spec.warm_start_iters, spec.retraction)
}

/// The common starting point every solver receives on one instance.
pub fn initial_point(spec: &ExperimentSpec, n: usize, r: usize, mu: f64, instance: usize) -> Result<StiefelPoint> {
    let seed = instance_seed(spec.seed, n, r, mu, instance);
    let inst = build(spec, n, mu, seed)?;
    Ok(warm_start(spec, inst.oracle(), n, r, seed)?)
}

/// All solver records of one instance, in the order of `spec.solvers`.
///
/// ManPG runs first as the reference even when it is not listed. Solver
/// errors become `failed` rows; if the reference itself fails, the other
/// solvers have no target and are recorded as failed without running.
pub fn run_instance(spec: &ExperimentSpec, n: usize, r: usize, mu: f64, instance: usize) -> Result<Vec<RunRecord>> {
    let seed = instance_seed(spec.seed, n, r, mu, instance);
    let inst = build(spec, n, mu, seed)?;
    let p = inst.oracle();
    let record = |solver: SolverKind, out: Option<&Outcome>, dist2: f64, agreement: Agreement| RunRecord {
        problem: spec.problem.name().to_string(),
        n,
        r,
        mu,
        instance,
        solver: solver.name().to_string(),
        cpu_s: out.map_or(f64::NAN, |o| o.cpu_s),
        iters: out.map_or(0, |o| o.iters),
        f: out.map_or(f64::NAN, |o| o.objective),
        sparsity: out.map_or(f64::NAN, |o| sparsity(o.x.as_matrix(), SPARSITY_THRESHOLD)),
        dist2,
        agreement,
        linesearch: out.map_or(0, |o| o.linesearch),
        ssn_mean: out.map_or(0.0, |o| o.ssn_mean),
    };
    let failed_all = || {
        spec.solvers
            .iter()
            .map(|&s| record(s, None, f64::NAN, Agreement::Failed))
            .collect()
    };

    let Ok(x_init) = warm_start(spec, p, n, r, seed) else {
        return Ok(failed_all());
    };

    let base = SolverConfig::default();
    let cfg = SolverConfig {
        eps_tol: Some(base.eps_for(n, r) * spec.tol_scale),
        max_iter: spec.max_iter,
        retraction: spec.retraction,
        ..base
    };
    let Ok(reference) = run_solver(SolverKind::Manpg, &inst, &x_init, spec, &cfg, f64::NAN) else {
        return Ok(failed_all());
    };

    let mut out = Vec::with_capacity(spec.solvers.len());
    for &solver in &spec.solvers {
        if solver == SolverKind::Manpg {
            out.push(record(solver, Some(&reference), 0.0, Agreement::Same));
            continue;
        }
        match run_solver(solver, &inst, &x_init, spec, &cfg, reference.objective) {
            Ok(o) => {
                let dist2 = subspace_distance(&o.x, &reference.x)?.powi(2);
                let agreement = if dist2 <= AGREEMENT_DIST2 { Agreement::Same } else { Agreement::Different };
                out.push(record(solver, Some(&o), dist2, agreement));
            }
            Err(_) => out.push(record(solver, None, f64::NAN, Agreement::Failed)),
        }
    }
    Ok(out)
}

/// Runs every `(grid point, instance)` pair, in parallel across instances.
///
/// Records are returned sorted by grid position, instance and solver order,
/// so the result does not depend on scheduling.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<RunRecord>> {
    spec.validate()?;
    let jobs: Vec<(usize, (usize, usize, f64), usize)> = spec
        .grid()
        .into_iter()
        .enumerate()
        .flat_map(|(g, point)| (0..spec.instances).map(move |i| (g, point, i)))
        .collect();
    let work = || -> Result<Vec<(usize, usize, Vec<RunRecord>)>> {
        jobs.par_iter()
            .map(|&(g, (n, r, mu), i)| Ok((g, i, run_instance(spec, n, r, mu, i)?)))
            .collect()
    };
    let mut results = match spec.threads {
        Some(k) => rayon::ThreadPoolBuilder::new().num_threads(k).build()?.install(work)?,
        None => work()?,
    };
    results.sort_by_key(|&(g, i, _)| (g, i));
    Ok(results.into_iter().flat_map(|(_, _, recs)| recs).collect())
}
