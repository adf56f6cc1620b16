//! Outer methods: ManPG, ManPG-Ada and the Riemannian subgradient method.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::manifold::{retract, riemannian_gradient, tangent_project, Mat, RetractionKind, StiefelPoint, TangentVector};
use crate::problems::ProblemOracle;
use crate::ssn::{ssn_solve, PackedMultiplier, SsnConfig, SsnResult, SubproblemInstance};

/// Inner residuals above this make an unconverged subproblem solution unusable.
const INNER_FALLBACK_TOL: f64 = 1e-6;

/// Each retry divides the inner tolerance by this factor.
const INNER_TIGHTEN: f64 = 1e-4;
/// Tightest inner tolerance a retry may request.
const INNER_TOL_FLOOR: f64 = 1e-26;

/// How the inner tolerance `||E||_F^2 <= tol` is chosen at each iteration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InnerTolerance {
    /// `max{1e-13, min{1e-11, 1e-3 t^2 eps_tol}}`.
    Coupled,
    Fixed(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverConfig {
    /// Initial stepsize; `None` means `1 / L`.
    pub t0: Option<f64>,
    pub gamma: f64,
    pub tau: f64,
    /// Stop once `||V_k / t||_F^2 <= eps_tol`; `None` means `1e-8 n r`.
    pub eps_tol: Option<f64>,
    pub max_iter: usize,
    pub retraction: RetractionKind,
    pub max_backtracks: usize,
    /// Stop as soon as `F(X_k) <= f_target`.
    pub f_target: Option<f64>,
    pub inner_tol: InnerTolerance,
    pub ssn: SsnConfig,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            t0: None,
            gamma: 0.5,
            tau: 1.01,
            eps_tol: None,
            max_iter: 30000,
            retraction: RetractionKind::Polar,
            max_backtracks: 40,
            f_target: None,
            inner_tol: InnerTolerance::Coupled,
            ssn: SsnConfig::default(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad(format!("gamma must lie in (0, 1), got {}", self.gamma));
        }
        if !(self.tau > 1.0) {
            return bad(format!("tau must exceed 1, got {}", self.tau));
        }
        if let Some(t) = self.t0 {
            if !(t > 0.0 && t.is_finite()) {
                return bad(format!("t0 must be positive, got {t}"));
            }
        }
        if let Some(e) = self.eps_tol {
            if !(e > 0.0) {
                return bad(format!("eps_tol must be positive, got {e}"));
            }
        }
        if let InnerTolerance::Fixed(v) = self.inner_tol {
            if !(v > 0.0) {
                return bad(format!("inner tolerance must be positive, got {v}"));
            }
        }
        self.ssn.validate()
    }

    pub fn eps_for(&self, n: usize, r: usize) -> f64 {
        self.eps_tol.unwrap_or(1e-8 * (n * r) as f64)
    }

    fn inner_cfg(&self, t: f64, eps: f64) -> SsnConfig {
        let tol = match self.inner_tol {
            InnerTolerance::Coupled => SsnConfig::coupled_tol(t, eps),
            InnerTolerance::Fixed(v) => v,
        };
        SsnConfig { tol, ..self.ssn }
    }
}

/// One accepted outer step `X_k -> X_{k+1}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterateStats {
    /// Zero-based index k.
    pub iter: usize,
    /// `F(X_k)`.
    pub objective: f64,
    /// `F(X_{k+1})`.
    pub objective_next: f64,
    /// `||V_k||_F`.
    pub v_norm: f64,
    pub alpha: f64,
    pub backtracks: usize,
    pub ssn_iters: usize,
    pub ssn_residual: f64,
    /// Stepsize used for the subproblem.
    pub t: f64,
    /// `||X_{k+1}^T X_{k+1} - I||_F`.
    pub feasibility: f64,
    pub elapsed_s: f64,
}

/// What an observer sees after each accepted step.
pub struct IterationView<'a> {
    pub stats: &'a IterateStats,
    pub x: &'a StiefelPoint,
    pub egrad: &'a Mat,
    pub v: &'a TangentVector,
    pub x_next: &'a StiefelPoint,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Converged,
    TargetReached,
    MaxIter,
}

#[derive(Clone, Debug)]
pub struct SolverResult {
    pub x: StiefelPoint,
    pub objective: f64,
    pub stats: Vec<IterateStats>,
    pub status: Status,
    /// Outer iterations performed (accepted steps).
    pub iterations: usize,
    /// Total backtracking steps.
    pub linesearch_total: usize,
    /// Mean SSN iterations per subproblem solved.
    pub ssn_mean: f64,
    /// `||V/t||_F^2` of the last subproblem solved.
    pub final_criterion: f64,
    /// Stepsize in effect at termination.
    pub final_t: f64,
}

pub fn manpg<P: ProblemOracle + ?Sized>(problem: &P, x0: &StiefelPoint, cfg: &SolverConfig) -> Result<SolverResult> {
    run_outer(problem, x0, cfg, false, &mut |_| {})
}

pub fn manpg_with_observer<P: ProblemOracle + ?Sized>(
    problem: &P,
    x0: &StiefelPoint,
    cfg: &SolverConfig,
    observer: &mut dyn FnMut(&IterationView<'_>),
) -> Result<SolverResult> {
    run_outer(problem, x0, cfg, false, observer)
}

/// ManPG with the adaptive stepsize: after a step that needed no
/// backtracking `t <- tau t`, otherwise `t <- max{1/L, t / tau}`.
pub fn manpg_ada<P: ProblemOracle + ?Sized>(problem: &P, x0: &StiefelPoint, cfg: &SolverConfig) -> Result<SolverResult> {
    run_outer(problem, x0, cfg, true, &mut |_| {})
}

pub fn manpg_ada_with_observer<P: ProblemOracle + ?Sized>(
    problem: &P,
    x0: &StiefelPoint,
    cfg: &SolverConfig,
    observer: &mut dyn FnMut(&IterationView<'_>),
) -> Result<SolverResult> {
    run_outer(problem, x0, cfg, true, observer)
}

fn run_outer<P: ProblemOracle + ?Sized>(
    problem: &P,
    x0: &StiefelPoint,
    cfg: &SolverConfig,
    adaptive: bool,
    observer: &mut dyn FnMut(&IterationView<'_>),
) -> Result<SolverResult> {
    cfg.validate()?;
    if x0.n() != problem.dim() {
        return Err(Error::ShapeMismatch {
            expected: (problem.dim(), x0.r()),
            got: x0.shape(),
        });
    }
    let lip = problem.lipschitz();
    if !(lip > 0.0 && lip.is_finite()) {
        return Err(Error::InvalidParameter(format!("Lipschitz constant must be positive, got {lip}")));
    }
    let t_min = 1.0 / lip;
    let mut t = cfg.t0.unwrap_or(t_min);
    let eps = cfg.eps_for(x0.n(), x0.r());
    let term = problem.term();
    let start = Instant::now();

    let mut x = x0.clone();
    let mut fx = finite(problem.objective(x.as_matrix()), "objective")?;
    let mut lam = PackedMultiplier::zeros(x.r());
    let mut stats = Vec::new();
    let mut status = Status::MaxIter;
    let mut ssn_total = 0usize;
    let mut ssn_solves = 0usize;
    let mut final_criterion = f64::INFINITY;

    if cfg.f_target.is_some_and(|target| fx <= target) {
        status = Status::TargetReached;
    }

    let mut k = 0;
    while status == Status::MaxIter && k < cfg.max_iter {
        let egrad = problem.grad_f(x.as_matrix());
        let inst = SubproblemInstance::new(&x, &egrad, t, term)?;
        let (sub, _, iters) = solve_subproblem(&inst, &lam, cfg.inner_cfg(t, eps));
        let sub = sub?;
        ssn_total += iters;
        ssn_solves += 1;
        if !sub.converged && !(sub.residual <= INNER_FALLBACK_TOL) {
            return Err(Error::InnerSolve {
                iteration: k,
                residual: sub.residual,
            });
        }
        lam = sub.multiplier;
        let v = sub.v;

        final_criterion = v.as_matrix().norm_squared() / (t * t);
        if final_criterion <= eps {
            status = Status::Converged;
            break;
        }

        let (alpha, x_next, f_next, backtracks) =
            armijo_search(problem, &x, fx, &v, t, cfg.gamma, cfg.max_backtracks, cfg.retraction)
                .map_err(|e| match e {
                    Error::BacktrackExhausted { backtracks, .. } => Error::BacktrackExhausted { iteration: k, backtracks },
                    other => other,
                })?;

        let it = IterateStats {
            iter: k,
            objective: fx,
            objective_next: f_next,
            v_norm: v.norm(),
            alpha,
            backtracks,
            ssn_iters: iters,
            ssn_residual: sub.residual,
            t,
            feasibility: x_next.feasibility_error(),
            elapsed_s: start.elapsed().as_secs_f64(),
        };
        observer(&IterationView {
            stats: &it,
            x: &x,
            egrad: &egrad,
            v: &v,
            x_next: &x_next,
        });
        stats.push(it);

        x = x_next;
        fx = f_next;
        k += 1;

        if adaptive {
            t = if backtracks == 0 { cfg.tau * t } else { (t / cfg.tau).max(t_min) };
        }
        if cfg.f_target.is_some_and(|target| fx <= target) {
            status = Status::TargetReached;
        }
    }

    let linesearch_total = stats.iter().map(|s| s.backtracks).sum();
    Ok(SolverResult {
        x,
        objective: fx,
        iterations: stats.len(),
        stats,
        status,
        linesearch_total,
        ssn_mean: if ssn_solves == 0 { 0.0 } else { ssn_total as f64 / ssn_solves as f64 },
        final_criterion,
        final_t: t,
    })
}

/// Solves the subproblem, re-solving with a tighter tolerance while the
/// returned V violates the decrease `g(V) - g(0) <= -||V||^2 / (2t)` that
/// every exact solution satisfies. Near stationarity `||V||^2 / t` falls
/// below what a fixed inner tolerance resolves, and an inexact V can then
/// fail to be a descent direction.
///
/// Returns the last result with the number of solves and total SSN iterations.
fn solve_subproblem(
    inst: &SubproblemInstance<'_>,
    lam0: &PackedMultiplier,
    mut cfg: SsnConfig,
) -> (Result<SsnResult>, usize, usize) {
    let zero = Mat::zeros(inst.point().n(), inst.point().r());
    let g0 = inst.objective(&zero);
    let (mut solves, mut iters) = (0, 0);
    let mut start = lam0.clone();
    loop {
        let sub = match ssn_solve(inst, &start, &cfg) {
            Ok(s) => s,
            Err(e) => return (Err(e), solves, iters),
        };
        solves += 1;
        iters += sub.iters;
        let v = sub.v.as_matrix();
        let model_ok = inst.objective(v) - g0 <= -v.norm_squared() / (2.0 * inst.t());
        if model_ok || cfg.tol <= INNER_TOL_FLOOR || !sub.converged {
            return (Ok(sub), solves, iters);
        }
        cfg.tol = (cfg.tol * INNER_TIGHTEN).max(INNER_TOL_FLOOR);
        start = sub.multiplier;
    }
}

/// Backtracking on `F(Retr_X(a V)) <= F(X) - a ||V||^2 / (2t)` over `a = 1, gamma, gamma^2, ...`.
///
/// Returns `(alpha, X_next, F(X_next), backtracks)`.
#[allow(clippy::too_many_arguments)]
pub fn armijo_search<P: ProblemOracle + ?Sized>(
    problem: &P,
    x: &StiefelPoint,
    fx: f64,
    v: &TangentVector,
    t: f64,
    gamma: f64,
    max_backtracks: usize,
    retraction: RetractionKind,
) -> Result<(f64, StiefelPoint, f64, usize)> {
    if !fx.is_finite() {
        return Err(Error::NonFinite("objective"));
    }
    let decrease = v.as_matrix().norm_squared() / (2.0 * t);
    let mut alpha = 1.0;
    for backtracks in 0..=max_backtracks {
        let trial = retract(x, &v.scaled(alpha), retraction)?;
        let f_trial = problem.objective(trial.as_matrix());
        if f_trial <= fx - alpha * decrease {
            return Ok((alpha, trial, f_trial, backtracks));
        }
        alpha *= gamma;
    }
    Err(Error::BacktrackExhausted {
        iteration: 0,
        backtracks: max_backtracks,
    })
}

/// Outcome of a Riemannian subgradient run.
#[derive(Clone, Debug)]
pub struct SubgradientResult {
    pub x: StiefelPoint,
    pub objective: f64,
    pub iterations: usize,
    pub reached_target: bool,
}

/// `X_{k+1} = Retr_{X_k}(-k^{-3/4} Proj_{T}(grad f(X_k) + dh(X_k)))`, k = 1, 2, ...
pub fn riemannian_subgradient<P: ProblemOracle + ?Sized>(
    problem: &P,
    x0: &StiefelPoint,
    iters: usize,
    retraction: RetractionKind,
) -> Result<StiefelPoint> {
    Ok(riemannian_subgradient_until(problem, x0, iters, None, retraction)?.x)
}

/// As [`riemannian_subgradient`], stopping early once `F(X_k) < target`.
pub fn riemannian_subgradient_until<P: ProblemOracle + ?Sized>(
    problem: &P,
    x0: &StiefelPoint,
    max_iters: usize,
    target: Option<f64>,
    retraction: RetractionKind,
) -> Result<SubgradientResult> {
    let mut x = x0.clone();
    let mut fx = problem.objective(x.as_matrix());
    let below = |f: f64| target.is_some_and(|t| f < t);
    let mut k = 0;
    while k < max_iters && !below(fx) {
        k += 1;
        let sub = tangent_project(&x, &problem.subgradient(x.as_matrix()))?;
        let step = -(k as f64).powf(-0.75);
        x = retract(&x, &sub.scaled(step), retraction)?;
        fx = finite(problem.objective(x.as_matrix()), "objective")?;
    }
    Ok(SubgradientResult {
        x,
        objective: fx,
        iterations: k,
        reached_target: below(fx),
    })
}

/// Solves one subproblem at `t = 1/L` and reports `(||V|| <= eps / L, ||V||)`.
pub fn check_stationarity<P: ProblemOracle + ?Sized>(
    problem: &P,
    x: &StiefelPoint,
    eps: f64,
    ssn: &SsnConfig,
) -> Result<(bool, f64)> {
    let lip = problem.lipschitz();
    let egrad = problem.grad_f(x.as_matrix());
    let inst = SubproblemInstance::new(x, &egrad, 1.0 / lip, problem.term())?;
    let sub = ssn_solve(&inst, &PackedMultiplier::zeros(x.r()), ssn)?;
    if !sub.converged {
        return Err(Error::InnerSolve {
            iteration: 0,
            residual: sub.residual,
        });
    }
    let norm = sub.v.norm();
    Ok((norm <= eps / lip, norm))
}

/// The Riemannian gradient step `-t grad f(X)` used by smooth problems.
pub fn riemannian_gradient_step(x: &StiefelPoint, egrad: &Mat, t: f64) -> Result<TangentVector> {
    Ok(riemannian_gradient(x, egrad)?.scaled(-t))
}

fn finite(v: f64, what: &'static str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(what))
    }
}
