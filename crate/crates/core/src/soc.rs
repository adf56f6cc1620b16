//! SOC: three-block ADMM on `min f(P) + mu ||Q||_1  s.t.  Q = P, X = P, X in St(n, r)`.
//!
//! With scaled duals L, G and penalty beta one sweep is
//!
//! ```text
//! P <- argmin f(P) + beta/2 ||P - Q + L||^2 + beta/2 ||P - X + G||^2
//! Q <- soft(P + L, mu / beta)
//! X <- nearest Stiefel point to P + G
//! L <- L + P - Q,   G <- G + P - X
//! ```
//!
//! For quadratic `f(P) = Tr(P^T M P)` the P-step is the linear system
//! `(2M + 2 beta I) P = beta (Q - L) + beta (X - G)`.

use std::sync::Arc;

use nalgebra::DVector;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{check_shape, Error, Result};
use crate::manifold::{Mat, StiefelPoint};
use crate::problems::{CmProblem, ProblemOracle, SpcaProblem};
use crate::prox::soft_threshold;

#[derive(Clone, Debug, PartialEq)]
pub struct SocState {
    pub p: Mat,
    pub q: Mat,
    /// Always on the Stiefel manifold.
    pub x: StiefelPoint,
    pub lambda: Mat,
    pub gamma: Mat,
    pub beta: f64,
}

impl SocState {
    /// `P = Q = X = X0` and zero duals.
    pub fn new(x0: &StiefelPoint, beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidParameter(format!("penalty must be positive, got {beta}")));
        }
        let (n, r) = x0.shape();
        Ok(Self {
            p: x0.as_matrix().clone(),
            q: x0.as_matrix().clone(),
            x: x0.clone(),
            lambda: Mat::zeros(n, r),
            gamma: Mat::zeros(n, r),
            beta,
        })
    }
}

/// Factorized `2M + 2 beta I` for the P-step.
#[derive(Clone)]
pub enum SocSystem {
    /// Circulant M: eigenvalues of the system matrix in DFT order.
    Circulant {
        eig: Vec<f64>,
        forward: Arc<dyn Fft<f64>>,
        inverse: Arc<dyn Fft<f64>>,
    },
    /// `M = U diag(s) U^T`; stores U and the system eigenvalues `2 s + 2 beta`.
    Eigen { u: Mat, d: DVector<f64> },
    Dense(nalgebra::Cholesky<f64, nalgebra::Dyn>),
}

impl std::fmt::Debug for SocSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Circulant { eig, .. } => f.debug_struct("Circulant").field("n", &eig.len()).finish(),
            Self::Eigen { d, .. } => f.debug_struct("Eigen").field("n", &d.len()).finish(),
            Self::Dense(c) => f.debug_struct("Dense").field("n", &c.l_dirty().nrows()).finish(),
        }
    }
}

impl SocSystem {
    /// `M` circulant with first column `c`.
    pub fn circulant(c: &[f64], beta: f64) -> Result<Self> {
        let n = c.len();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let mut buf: Vec<Complex<f64>> = c.iter().map(|&v| Complex::new(v, 0.0)).collect();
        forward.process(&mut buf);
        let eig: Vec<f64> = buf.iter().map(|z| 2.0 * z.re + 2.0 * beta).collect();
        if eig.iter().any(|&e| !(e > 0.0)) {
            return Err(Error::LinearSolve("P-step system is not positive definite"));
        }
        Ok(Self::Circulant { eig, forward, inverse })
    }

    /// `M` given by its symmetric eigendecomposition.
    pub fn eigen(u: Mat, s: &DVector<f64>, beta: f64) -> Result<Self> {
        let d = s.map(|v| 2.0 * v + 2.0 * beta);
        if d.iter().any(|&e| !(e > 0.0)) {
            return Err(Error::LinearSolve("P-step system is not positive definite"));
        }
        Ok(Self::Eigen { u, d })
    }

    pub fn dense(m: &Mat, beta: f64) -> Result<Self> {
        let n = m.nrows();
        let sys = m * 2.0 + Mat::identity(n, n) * (2.0 * beta);
        sys.cholesky()
            .map(Self::Dense)
            .ok_or(Error::LinearSolve("P-step system is not positive definite"))
    }

    /// FFT for circulant Hamiltonians, Cholesky otherwise.
    pub fn for_cm(problem: &CmProblem, beta: f64) -> Result<Self> {
        match problem.circulant_column() {
            Some(c) => Self::circulant(c, beta),
            None => Self::dense(problem.hamiltonian(), beta),
        }
    }

    /// `M = -A^T A` through one eigendecomposition of `A^T A`.
    pub fn for_spca(problem: &SpcaProblem, beta: f64) -> Result<Self> {
        let a = problem.data();
        let eig = a.tr_mul(a).symmetric_eigen();
        Self::eigen(eig.eigenvectors, &(-eig.eigenvalues), beta)
    }

    pub fn solve(&self, rhs: &Mat) -> Mat {
        match self {
            Self::Circulant { eig, forward, inverse } => {
                let n = eig.len();
                let mut out = Mat::zeros(n, rhs.ncols());
                let mut buf = vec![Complex::new(0.0, 0.0); n];
                for (j, col) in rhs.column_iter().enumerate() {
                    for (b, &v) in buf.iter_mut().zip(col.iter()) {
                        *b = Complex::new(v, 0.0);
                    }
                    forward.process(&mut buf);
                    for (b, &e) in buf.iter_mut().zip(eig) {
                        *b /= e;
                    }
                    inverse.process(&mut buf);
                    for i in 0..n {
                        out[(i, j)] = buf[i].re / n as f64;
                    }
                }
                out
            }
            Self::Eigen { u, d } => {
                let mut w = u.tr_mul(rhs);
                for (i, mut row) in w.row_iter_mut().enumerate() {
                    row.scale_mut(1.0 / d[i]);
                }
                u * w
            }
            Self::Dense(chol) => chol.solve(rhs),
        }
    }
}

/// One SOC sweep with a prepared P-step system.
pub fn soc_step(state: &SocState, system: &SocSystem, mu: f64) -> Result<SocState> {
    let beta = state.beta;
    let rhs = (&state.q - &state.lambda + state.x.as_matrix() - &state.gamma) * beta;
    let p = system.solve(&rhs);
    if p.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("SOC P-update"));
    }
    let thr = mu / beta;
    let q = (&p + &state.lambda).map(|v| soft_threshold(v, thr));
    let x = StiefelPoint::project(&(&p + &state.gamma))?;
    let lambda = &state.lambda + &p - &q;
    let gamma = &state.gamma + &p - x.as_matrix();
    Ok(SocState {
        p,
        q,
        x,
        lambda,
        gamma,
        beta,
    })
}

/// One sweep for `f(P) = Tr(P^T H P)`.
pub fn soc_step_cm(state: &SocState, h: &Mat, mu: f64) -> Result<SocState> {
    check_shape((state.p.nrows(), state.p.nrows()), h.shape())?;
    let problem = CmProblem::from_hamiltonian(h.clone(), mu)?;
    soc_step(state, &SocSystem::for_cm(&problem, state.beta)?, mu)
}

/// One sweep for `f(P) = -||A P||^2`.
pub fn soc_step_spca(state: &SocState, a: &Mat, mu: f64) -> Result<SocState> {
    if a.ncols() != state.p.nrows() {
        return Err(Error::ShapeMismatch {
            expected: (a.nrows(), state.p.nrows()),
            got: a.shape(),
        });
    }
    let problem = SpcaProblem::new(a.clone(), mu)?;
    soc_step(state, &SocSystem::for_spca(&problem, state.beta)?, mu)
}

/// `||Q - P|| / max{1, ||Q||, ||P||} + ||X - P|| / max{1, ||X||, ||P||}`.
pub fn feasibility_residual(state: &SocState) -> f64 {
    let (p, q, x) = (&state.p, &state.q, state.x.as_matrix());
    let np = p.norm();
    (q - p).norm() / 1f64.max(q.norm()).max(np) + (x - p).norm() / 1f64.max(x.norm()).max(np)
}

/// Default CM penalty `n r mu / 25 + 1`.
pub fn cm_beta(n: usize, r: usize, mu: f64) -> f64 {
    (n * r) as f64 * mu / 25.0 + 1.0
}

/// Default SPCA penalty `2 sigma_max(A)^2`, nudged up by a relative `1e-8`.
pub fn spca_beta(problem: &SpcaProblem) -> f64 {
    2.0 * problem.sigma_max_sq() * (1.0 + 1e-8)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SocConfig {
    pub max_iter: usize,
    pub feas_tol: f64,
    /// Reference objective; SOC also waits for `F(X_k) <= f_ref + target_slack`.
    /// Without it the run stops on feasibility alone.
    pub f_ref: Option<f64>,
    pub target_slack: f64,
}

impl Default for SocConfig {
    fn default() -> Self {
        Self {
            max_iter: 30000,
            feas_tol: 1e-4,
            f_ref: None,
            target_slack: 1e-7,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SocStatus {
    /// Feasibility and objective target both met.
    Converged,
    /// Feasibility met with no reference objective supplied.
    Standalone,
    MaxIter,
}

#[derive(Clone, Debug)]
pub struct SocResult {
    pub x: StiefelPoint,
    pub objective: f64,
    pub iterations: usize,
    pub feasibility: f64,
    pub status: SocStatus,
}

/// Runs SOC from `P = Q = X = X0`.
pub fn run_soc<P: ProblemOracle + ?Sized>(
    problem: &P,
    system: &SocSystem,
    x0: &StiefelPoint,
    beta: f64,
    cfg: &SocConfig,
) -> Result<SocResult> {
    let mu = problem.term().weight();
    let mut state = SocState::new(x0, beta)?;
    let target = cfg.f_ref.map(|f| f + cfg.target_slack);
    let mut status = SocStatus::MaxIter;
    let mut feas = f64::INFINITY;
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        state = soc_step(&state, system, mu)?;
        iterations += 1;
        feas = feasibility_residual(&state);
        if feas <= cfg.feas_tol {
            match target {
                None => {
                    status = SocStatus::Standalone;
                    break;
                }
                Some(t) if problem.objective(state.x.as_matrix()) <= t => {
                    status = SocStatus::Converged;
                    break;
                }
                Some(_) => {}
            }
        }
    }
    Ok(SocResult {
        objective: problem.objective(state.x.as_matrix()),
        x: state.x,
        iterations,
        feasibility: feas,
        status,
    })
}

/// SOC on a compressed-modes problem with the default penalty.
pub fn run_soc_cm(problem: &CmProblem, x0: &StiefelPoint, cfg: &SocConfig) -> Result<SocResult> {
    let beta = cm_beta(x0.n(), x0.r(), problem.mu());
    run_soc(problem, &SocSystem::for_cm(problem, beta)?, x0, beta, cfg)
}

/// SOC on a sparse PCA problem with the default penalty.
pub fn run_soc_spca(problem: &SpcaProblem, x0: &StiefelPoint, cfg: &SocConfig) -> Result<SocResult> {
    let beta = spca_beta(problem);
    run_soc(problem, &SocSystem::for_spca(problem, beta)?, x0, beta, cfg)
}
