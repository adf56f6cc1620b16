use manpg::manifold::{retract, riemannian_gradient, RetractionKind, StiefelPoint, TangentVector};
use manpg::matio::{load_matrix, save_matrix};
use manpg::problems::*;
use manpg::prox::McpForm;
use manpg::Mat;
use manpg_testkit as tk;

fn oracles() -> Vec<(&'static str, Box<dyn ProblemOracle>)> {
    let a = gen_spca(12, 9, 5).unwrap();
    vec![
        ("spca", Box::new(SpcaProblem::new(a.clone(), 0.4).unwrap())),
        ("cm", Box::new(CmProblem::free_electron(9, 0.2).unwrap())),
        ("mcp", Box::new(McpSpcaProblem::new(a.clone(), 0.5, 1.2, 0.8, McpForm::Standard).unwrap())),
        ("mcp-literal", Box::new(McpSpcaProblem::new(a, 0.5, 1.2, 1.2, McpForm::Literal).unwrap())),
    ]
}

#[test]
fn gradients_match_finite_differences() {
    let mut rng = tk::rng(1);
    for (name, p) in oracles() {
        for _ in 0..5 {
            let x = tk::randn(9, 3, &mut rng);
            let fd = tk::fd_gradient(|y| p.f(y), &x, 1e-6);
            let g = p.grad_f(&x);
            assert!((&g - &fd).norm() <= 1e-5 * g.norm().max(1.0), "{name}");
        }
    }
}

#[test]
fn lipschitz_bound_holds_along_retractions() {
    let mut rng = tk::rng(2);
    for (name, p) in oracles() {
        for k in 0..50 {
            let x = StiefelPoint::from_matrix(tk::random_stiefel(9, 3, &mut rng)).unwrap();
            let xi = tk::random_tangent(x.as_matrix(), &mut rng) * (0.1 * (1 + k % 10) as f64);
            let y = retract(&x, &TangentVector::new(&x, xi).unwrap(), RetractionKind::Polar).unwrap();
            let d = y.as_matrix() - x.as_matrix();
            let lhs = (p.f(y.as_matrix()) - p.f(x.as_matrix()) - p.grad_f(x.as_matrix()).dot(&d)).abs();
            assert!(lhs <= p.lipschitz() / 2.0 * d.norm_squared() + 1e-12, "{name}");
        }
    }
}

#[test]
fn fe_eigenvalues_match_closed_form() {
    for n in [3usize, 8, 33, 64, 128] {
        let h = build_fe_hamiltonian(n).unwrap();
        let mut got: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
        let mut want = tk::fe_eigenvalues(n, 50.0);
        got.sort_by(f64::total_cmp);
        want.sort_by(f64::total_cmp);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() <= 1e-12, "n={n}: {g} vs {w}");
        }
        let cm = CmProblem::free_electron(n, 0.1).unwrap();
        let top = *want.last().unwrap();
        if n % 2 == 0 {
            assert!((cm.lambda_max() - top).abs() <= 1e-12);
        } else {
            assert!(cm.lambda_max() >= top);
        }
        assert_eq!(cm.lipschitz(), 4.0 * (n * n) as f64 / 2500.0);
    }
}

#[test]
fn fe_hamiltonian_rows_are_cyclic_shifts() {
    let n = 17;
    let h = build_fe_hamiltonian(n).unwrap();
    for i in 0..n {
        for j in 0..n {
            assert_eq!(h[(i, j)], h[(0, (j + n - i) % n)]);
        }
    }
}

#[test]
fn eigenvector_sets_are_stationary_for_smooth_cm() {
    let p = CmProblem::free_electron(16, 0.0).unwrap();
    let x = StiefelPoint::from_matrix(tk::top_eigenvectors(&(-p.hamiltonian()), 3)).unwrap();
    let rg = riemannian_gradient(&x, &p.grad_f(x.as_matrix())).unwrap();
    assert!(rg.norm() <= 1e-12);
}

#[test]
fn spca_data_is_centered_normalized_and_deterministic() {
    for seed in 0..5 {
        let a = gen_spca(50, 100, seed).unwrap();
        for col in a.column_iter() {
            assert!(col.mean().abs() <= 1e-14);
            assert!((col.norm() - 1.0).abs() <= 1e-14);
        }
        let b = gen_spca(50, 100, seed).unwrap();
        let bytes = |m: &Mat| m.iter().flat_map(|v| v.to_bits().to_le_bytes()).collect::<Vec<u8>>();
        assert_eq!(bytes(&a), bytes(&b));
    }
    assert_ne!(gen_spca(5, 5, 1).unwrap(), gen_spca(5, 5, 2).unwrap());
}

#[test]
fn mcp_forms_coincide_at_unit_gamma_and_lambda() {
    let a = gen_spca(10, 6, 9).unwrap();
    let std = McpSpcaProblem::new(a.clone(), 0.7, 1.0, 1.0, McpForm::Standard).unwrap();
    let lit = McpSpcaProblem::new(a, 0.7, 1.0, 1.0, McpForm::Literal).unwrap();
    let x = tk::randn(6, 2, &mut tk::rng(4));
    assert_eq!(std.f(&x), lit.f(&x));
    assert_eq!(std.grad_f(&x), lit.grad_f(&x));
    assert_eq!(std.lipschitz(), lit.lipschitz());
}

#[test]
fn mcp_objective_is_the_penalty() {
    // f1 + h reproduces -||AX||^2 + mu sum P(x) with the standard MCP.
    let a = gen_spca(10, 6, 10).unwrap();
    let (mu, lambda, gamma) = (0.7, 0.9, 1.5);
    let p = McpSpcaProblem::new(a.clone(), mu, lambda, gamma, McpForm::Standard).unwrap();
    let x = tk::randn(6, 2, &mut tk::rng(5)) * 0.8;
    let pen: f64 = x
        .iter()
        .map(|&v| {
            let av = v.abs();
            if av <= gamma * lambda { lambda * av - v * v / (2.0 * gamma) } else { 0.5 * gamma * lambda * lambda }
        })
        .sum();
    let expect = -(&a * &x).norm_squared() + mu * pen;
    assert!((p.objective(&x) - expect).abs() <= 1e-12);
}

#[test]
fn trace_form_rotation_identity() {
    let mut rng = tk::rng(6);
    let a = gen_spca(8, 7, 1).unwrap();
    let m = a.transpose() * &a;
    let x = tk::randn(7, 3, &mut rng);
    let q = tk::random_stiefel(3, 3, &mut rng);
    let lhs = ((&x * &q).transpose() * &m * (&x * &q)).trace();
    let rhs = (x.transpose() * &m * &x * &q * q.transpose()).trace();
    assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
    let p = SpcaProblem::new(a, 0.0).unwrap();
    assert!((p.f(&(&x * &q)) - p.f(&x)).abs() <= 1e-12 * lhs.abs().max(1.0));
}

#[test]
fn matrices_round_trip_through_files() {
    let dir = std::env::temp_dir().join(format!("manpg-matio-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("a.csv");
    let a = gen_spca(7, 4, 3).unwrap();
    save_matrix(&a, &path).unwrap();
    assert_eq!(load_matrix(&path).unwrap(), a);
    let h = build_fe_hamiltonian(6).unwrap();
    save_matrix(&h, &path).unwrap();
    let cm = CmProblem::from_hamiltonian(load_matrix(&path).unwrap(), 0.1).unwrap();
    assert!(cm.circulant_column().is_some());
    std::fs::remove_dir_all(&dir).unwrap();
}
