use manpg::manifold::{subspace_distance, RetractionKind, StiefelPoint};
use manpg::problems::{build_fe_hamiltonian, gen_spca, CmProblem, ProblemOracle, SpcaProblem};
use manpg::soc::*;
use manpg::solvers::{manpg, riemannian_subgradient, SolverConfig};
use manpg::Mat;
use manpg_testkit as tk;

fn point(n: usize, r: usize, seed: u64) -> StiefelPoint {
    StiefelPoint::from_matrix(tk::random_stiefel(n, r, &mut tk::rng(seed))).unwrap()
}

/// A state with nonzero duals and P, Q off the manifold.
fn perturbed_state(n: usize, r: usize, beta: f64, seed: u64) -> SocState {
    let mut rng = tk::rng(seed);
    let mut s = SocState::new(&point(n, r, seed), beta).unwrap();
    s.q = tk::randn(n, r, &mut rng) * 0.3;
    s.lambda = tk::randn(n, r, &mut rng) * 0.1;
    s.gamma = tk::randn(n, r, &mut rng) * 0.1;
    s
}

fn p_step_residual(m: &Mat, prev: &SocState, next: &SocState) -> f64 {
    let n = m.nrows();
    let b = prev.beta;
    let lhs = (m * 2.0 + Mat::identity(n, n) * (2.0 * b)) * &next.p;
    let rhs = (&prev.q - &prev.lambda + prev.x.as_matrix() - &prev.gamma) * b;
    (lhs - &rhs).norm() / rhs.norm()
}

#[test]
fn p_step_solves_normal_equations() {
    let h = build_fe_hamiltonian(24).unwrap();
    let beta = cm_beta(24, 3, 0.2);
    let s = perturbed_state(24, 3, beta, 1);
    let next = soc_step_cm(&s, &h, 0.2).unwrap();
    assert!(p_step_residual(&h, &s, &next) <= 1e-10);
    let dense = soc_step(&s, &SocSystem::dense(&h, beta).unwrap(), 0.2).unwrap();
    assert!((&dense.p - &next.p).norm() <= 1e-10 * next.p.norm());

    let a = gen_spca(15, 24, 2).unwrap();
    let spca = SpcaProblem::new(a.clone(), 0.3).unwrap();
    let beta = spca_beta(&spca);
    let s = perturbed_state(24, 3, beta, 2);
    let next = soc_step_spca(&s, &a, 0.3).unwrap();
    let m = -(a.transpose() * &a);
    assert!(p_step_residual(&m, &s, &next) <= 1e-10);
}

#[test]
fn x_step_is_the_nearest_stiefel_point() {
    let h = build_fe_hamiltonian(12).unwrap();
    let s = perturbed_state(12, 3, 2.0, 3);
    let next = soc_step_cm(&s, &h, 0.1).unwrap();
    let target = &next.p + &s.gamma;
    let best = (next.x.as_matrix() - &target).norm();
    assert!(next.x.feasibility_error() <= 1e-10);
    let mut rng = tk::rng(33);
    for _ in 0..200 {
        let y = tk::random_stiefel(12, 3, &mut rng);
        assert!(best <= (&y - &target).norm() + 1e-12);
    }
    // Small perturbations along the manifold cannot do better either.
    for k in 0..50 {
        let xi = tk::random_tangent(next.x.as_matrix(), &mut rng) * 1e-3;
        let y = manpg::retract(&next.x, &manpg::TangentVector::new(&next.x, xi).unwrap(), RetractionKind::Polar).unwrap();
        assert!(best <= (y.as_matrix() - &target).norm() + 1e-12, "perturbation {k}");
    }
}

#[test]
fn q_step_satisfies_prox_optimality() {
    let mu = 0.4;
    let h = build_fe_hamiltonian(10).unwrap();
    let s = perturbed_state(10, 2, 1.5, 4);
    let next = soc_step_cm(&s, &h, mu).unwrap();
    // beta (P + Lambda - Q) must lie in mu * d||Q||_1.
    let g = (&next.p + &s.lambda - &next.q) * s.beta;
    for (gi, qi) in g.iter().zip(next.q.iter()) {
        if *qi != 0.0 {
            assert!((gi - mu * qi.signum()).abs() <= 1e-12);
        } else {
            assert!(gi.abs() <= mu + 1e-12);
        }
    }
}

#[test]
fn dual_updates_accumulate_constraint_gaps() {
    let h = build_fe_hamiltonian(10).unwrap();
    let s = perturbed_state(10, 2, 1.5, 5);
    let next = soc_step_cm(&s, &h, 0.3).unwrap();
    assert!((&next.lambda - (&s.lambda + &next.p - &next.q)).norm() <= 1e-14);
    assert!((&next.gamma - (&s.gamma + &next.p - next.x.as_matrix())).norm() <= 1e-14);
}

#[test]
fn zero_data_averages_the_two_copies() {
    let a = Mat::zeros(4, 8);
    let s = perturbed_state(8, 2, 3.0, 6);
    let next = soc_step_spca(&s, &a, 0.0).unwrap();
    let avg = (&s.q - &s.lambda + s.x.as_matrix() - &s.gamma) * 0.5;
    assert!((&next.p - &avg).norm() <= 1e-14);
    assert_eq!(next.q, &next.p + &s.lambda);
}

#[test]
fn square_case_without_penalty_gives_orthogonal_x() {
    let h = build_fe_hamiltonian(6).unwrap();
    let mut s = SocState::new(&point(6, 6, 7), 2.0).unwrap();
    for _ in 0..20 {
        s = soc_step_cm(&s, &h, 0.0).unwrap();
        let x = s.x.as_matrix();
        assert!((x.transpose() * x - Mat::identity(6, 6)).norm() <= 1e-12);
    }
}

#[test]
fn feasibility_residual_formula() {
    let s = perturbed_state(9, 3, 1.0, 8);
    let (p, q, x) = (&s.p, &s.q, s.x.as_matrix());
    let d1 = (q - p).norm() / [1.0, q.norm(), p.norm()].into_iter().fold(0.0, f64::max);
    let d2 = (x - p).norm() / [1.0, x.norm(), p.norm()].into_iter().fold(0.0, f64::max);
    assert!((feasibility_residual(&s) - (d1 + d2)).abs() <= 1e-15);
    assert_eq!(feasibility_residual(&SocState::new(&point(9, 3, 9), 1.0).unwrap()), 0.0);
}

#[test]
fn invalid_inputs_are_rejected() {
    assert!(SocState::new(&point(5, 2, 1), 0.0).is_err());
    assert!(SocState::new(&point(5, 2, 1), f64::NAN).is_err());
    let s = SocState::new(&point(5, 2, 1), 1.0).unwrap();
    assert!(soc_step_cm(&s, &Mat::identity(4, 4), 0.1).is_err());
    assert!(soc_step_spca(&s, &Mat::zeros(3, 4), 0.1).is_err());
    // 2M + 2 beta I indefinite.
    assert!(SocSystem::dense(&(-Mat::identity(5, 5) * 2.0), 1.0).is_err());
}

#[test]
fn paired_cm_run_matches_manpg() {
    let p = CmProblem::free_electron(64, 0.1).unwrap();
    let x0 = riemannian_subgradient(&p, &point(64, 4, 10), 500, RetractionKind::Polar).unwrap();
    let reference = manpg(&p, &x0, &SolverConfig::default()).unwrap();
    let cfg = SocConfig {
        f_ref: Some(reference.objective),
        ..Default::default()
    };
    let res = run_soc_cm(&p, &x0, &cfg).unwrap();
    assert_eq!(res.status, SocStatus::Converged);
    assert!(res.feasibility <= cfg.feas_tol);
    assert!(res.objective <= reference.objective + cfg.target_slack);
    assert!(subspace_distance(&res.x, &reference.x).unwrap().powi(2) <= 0.1);
    assert_eq!(res.objective, p.objective(res.x.as_matrix()));
}

#[test]
fn standalone_spca_runs_reach_feasibility() {
    for seed in 0..3 {
        let p = SpcaProblem::new(gen_spca(30, 40, seed).unwrap(), 0.5).unwrap();
        let res = run_soc_spca(&p, &point(40, 3, seed), &SocConfig::default()).unwrap();
        assert_eq!(res.status, SocStatus::Standalone, "seed {seed}");
        assert!(res.feasibility <= 1e-4);
        assert!(res.x.feasibility_error() <= 1e-10);
    }
}

#[test]
fn iteration_cap_is_reported() {
    let p = CmProblem::free_electron(32, 0.1).unwrap();
    let cfg = SocConfig {
        max_iter: 3,
        f_ref: Some(f64::NEG_INFINITY),
        ..Default::default()
    };
    let res = run_soc_cm(&p, &point(32, 2, 11), &cfg).unwrap();
    assert_eq!((res.status, res.iterations), (SocStatus::MaxIter, 3));
}
