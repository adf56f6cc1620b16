use manpg::solvers::{manpg, SolverConfig};
use manpg::{CmProblem, ProblemOracle};
use manpg_bench::*;

fn small_cm(instances: usize, solvers: Vec<SolverKind>) -> ExperimentSpec {
    ExperimentSpec {
        problem: ProblemKind::Cm,
        n: vec![32],
        r: vec![2],
        mu: vec![0.1],
        instances,
        solvers,
        seed: 5,
        timing: false,
        ..Default::default()
    }
}

fn record(solver: &str, instance: usize, agreement: Agreement, f: f64) -> RunRecord {
    RunRecord {
        problem: "cm".into(),
        n: 8,
        r: 2,
        mu: 0.1,
        instance,
        solver: solver.into(),
        cpu_s: 0.5,
        iters: 10 * (instance + 1),
        f,
        sparsity: 0.25,
        dist2: 0.01,
        agreement,
        linesearch: 3,
        ssn_mean: 1.5,
    }
}

#[test]
fn single_manpg_instance_gives_one_same_record() {
    let recs = run_experiment(&small_cm(1, vec![SolverKind::Manpg])).unwrap();
    assert_eq!(recs.len(), 1);
    assert_eq!(recs[0].agreement, Agreement::Same);
    assert_eq!(recs[0].dist2, 0.0);
    assert_eq!(recs[0].cpu_s, 0.0);
}

#[test]
fn repeated_runs_write_identical_bytes() {
    let spec = small_cm(3, vec![SolverKind::Manpg, SolverKind::ManpgAda, SolverKind::Soc]);
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut raw = Vec::new();
    let mut agg = Vec::new();
    for (k, dir) in dirs.iter().enumerate() {
        let spec = ExperimentSpec { threads: Some(k + 1), ..spec.clone() };
        let paths = emit_csv(&run_experiment(&spec).unwrap(), dir.path()).unwrap();
        raw.push(std::fs::read(&paths.raw).unwrap());
        agg.push(std::fs::read(&paths.aggregate).unwrap());
    }
    assert_eq!(raw[0], raw[1]);
    assert_eq!(agg[0], agg[1]);
}

#[test]
fn every_solver_starts_from_the_shared_point() {
    let spec = small_cm(2, vec![SolverKind::Manpg]);
    let recs = run_experiment(&spec).unwrap();
    let a = initial_point(&spec, 32, 2, 0.1, 1).unwrap();
    let b = initial_point(&spec, 32, 2, 0.1, 1).unwrap();
    assert_eq!(a.as_matrix().as_slice(), b.as_matrix().as_slice());
    assert_ne!(a, initial_point(&spec, 32, 2, 0.1, 0).unwrap());
    // ManPG from that point reproduces the recorded objective exactly.
    let p = CmProblem::free_electron(32, 0.1).unwrap();
    let res = manpg(&p, &a, &SolverConfig::default()).unwrap();
    assert_eq!(res.objective, recs[1].f);
    assert_eq!(res.iterations, recs[1].iters);
    assert!(p.objective(a.as_matrix()) >= res.objective);
}

#[test]
fn sweep_emits_one_aggregate_row_per_grid_point_and_solver() {
    let spec = ExperimentSpec {
        n: vec![64, 128, 256, 512],
        r: vec![4],
        mu: vec![0.1],
        instances: 1,
        max_iter: 20,
        warm_start_iters: 20,
        timing: false,
        ..Default::default()
    };
    let recs = run_experiment(&spec).unwrap();
    assert_eq!(recs.len(), 4 * 3);
    let agg = aggregate(&recs);
    let keys: Vec<(usize, &str)> = agg.iter().map(|a| (a.n, a.solver.as_str())).collect();
    let mut want = Vec::new();
    for n in [64, 128, 256, 512] {
        for s in ["manpg", "manpg-ada", "soc"] {
            want.push((n, s));
        }
    }
    assert_eq!(keys, want);
    for a in &agg {
        assert_eq!(a.same + a.different + a.failed, 1);
    }
}

#[test]
fn single_record_writes_two_one_row_files() {
    let dir = tempfile::tempdir().unwrap();
    let paths = emit_csv(&[record("manpg", 0, Agreement::Same, 1.0)], dir.path()).unwrap();
    let raw = std::fs::read_to_string(&paths.raw).unwrap();
    let agg = std::fs::read_to_string(&paths.aggregate).unwrap();
    assert_eq!(raw.lines().count(), 2);
    assert_eq!(agg.lines().count(), 2);
    assert_eq!(
        raw.lines().next().unwrap(),
        "problem,n,r,mu,instance,solver,cpu_s,iters,F,sparsity,dist2,agreement,linesearch,ssn_mean"
    );
    assert!(emit_csv(&[], dir.path()).is_err());
}

#[test]
fn emitted_records_parse_back_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let mut recs = vec![
        record("manpg", 0, Agreement::Same, -2.036017929120123),
        record("soc", 0, Agreement::Different, 1.0 / 3.0),
        record("soc", 1, Agreement::Failed, 1e-300),
    ];
    recs[1].mu = 0.1 + 0.2;
    let paths = emit_csv(&recs, dir.path()).unwrap();
    assert_eq!(parse_csv(&paths.raw).unwrap(), recs);
    // Empty groups have NaN means, so compare through Debug, where NaN equals NaN.
    assert_eq!(format!("{:?}", read_aggregate(&paths.aggregate).unwrap()), format!("{:?}", aggregate(&recs)));
}

#[test]
fn aggregates_average_only_same_runs() {
    let recs = vec![
        record("soc", 0, Agreement::Same, 1.0),
        record("soc", 1, Agreement::Same, 3.0),
        record("soc", 2, Agreement::Different, 100.0),
        record("soc", 3, Agreement::Failed, f64::NAN),
    ];
    let agg = aggregate(&recs);
    assert_eq!(agg.len(), 1);
    let a = &agg[0];
    assert_eq!((a.same, a.different, a.failed), (2, 1, 1));
    assert_eq!(a.f, 2.0);
    assert_eq!(a.iters, 15.0);
    let none = aggregate(&recs[2..]);
    assert!(none[0].f.is_nan());
}

#[test]
fn spca_and_mcp_sweeps_run() {
    let spec = ExperimentSpec {
        problem: ProblemKind::Spca,
        n: vec![30],
        r: vec![2],
        mu: vec![0.5],
        instances: 2,
        solvers: vec![SolverKind::Manpg, SolverKind::Soc, SolverKind::Subgrad],
        m: 20,
        timing: false,
        ..Default::default()
    };
    let recs = run_experiment(&spec).unwrap();
    assert_eq!(recs.len(), 6);
    assert!(recs.iter().all(|r| r.agreement != Agreement::Failed));
    let mcp = ExperimentSpec {
        problem: ProblemKind::McpSpca,
        solvers: vec![SolverKind::Manpg, SolverKind::ManpgAda],
        ..spec
    };
    let recs = run_experiment(&mcp).unwrap();
    assert!(recs.iter().all(|r| r.f.is_finite()));
}

#[test]
fn instance_seeds_differ_across_the_grid() {
    let s = instance_seed(0, 64, 4, 0.1, 0);
    assert_eq!(s, instance_seed(0, 64, 4, 0.1, 0));
    assert_ne!(s, instance_seed(0, 64, 4, 0.1, 1));
    assert_ne!(s, instance_seed(0, 64, 4, 0.2, 0));
    assert_ne!(s, instance_seed(1, 64, 4, 0.1, 0));
}
