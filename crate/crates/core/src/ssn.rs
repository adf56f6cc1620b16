//! Tangent-space proximal subproblem and its regularized semi-smooth Newton solver.
//!
//! At an iterate X with Euclidean gradient G and stepsize t the direction is
//!
//! ```text
//! V* = argmin <G, V> + ||V||^2 / (2t) + h(X + V)   s.t.  A(V) := V^T X + X^T V = 0.
//! ```
//!
//! Its Lagrangian is minimized in V by `V(L) = prox_{th}(B(L)) - X` with
//! `B(L) = X - t (G - A*(L))` and `A*(L) = 2 X L`, so the multiplier L solves
//! the monotone equation `E(L) = A(V(L)) = 0`. E is Lipschitz with constant
//! `4t` and is solved by Newton steps on `(G(L) + eta I) d = -vech(E(L))`
//! with a residual-decrease line search and a fixed-point safeguard.
//!
//! Multipliers live in packed lower-triangular coordinates (`vech`). The
//! packed Jacobian is not symmetric in those coordinates; it equals
//! `W^{-1} K` with K symmetric positive semidefinite and W the diagonal
//! weights (1 on the diagonal of L, 2 off it) that make `vech` an isometry
//! for the Frobenius inner product. Newton systems are therefore solved in
//! the symmetric form `(K + eta W) d = -W vech(E)`.

use nalgebra::DVector;

use crate::error::{check_shape, Error, Result};
use crate::manifold::{tangent_project, Mat, StiefelPoint, TangentVector};
use crate::prox::{NonsmoothTerm, ProxJacobian};

/// Frozen data of one subproblem.
#[derive(Clone, Copy, Debug)]
pub struct SubproblemInstance<'a> {
    x: &'a StiefelPoint,
    egrad: &'a Mat,
    t: f64,
    term: NonsmoothTerm,
}

impl<'a> SubproblemInstance<'a> {
    pub fn new(x: &'a StiefelPoint, egrad: &'a Mat, t: f64, term: NonsmoothTerm) -> Result<Self> {
        check_shape(x.shape(), egrad.shape())?;
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::InvalidParameter(format!("stepsize must be positive, got {t}")));
        }
        term.validate()?;
        Ok(Self { x, egrad, t, term })
    }

    pub fn point(&self) -> &StiefelPoint {
        self.x
    }

    pub fn egrad(&self) -> &Mat {
        self.egrad
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn term(&self) -> NonsmoothTerm {
        self.term
    }

    /// Subproblem objective `g(V) = <G, V> + ||V||^2 / (2t) + h(X + V)`.
    pub fn objective(&self, v: &Mat) -> f64 {
        self.egrad.dot(v) + v.norm_squared() / (2.0 * self.t) + self.term.eval(&(self.x.as_matrix() + v))
    }

    fn b_of(&self, lam: &Mat) -> Mat {
        let x = self.x.as_matrix();
        x - self.egrad * self.t + x * lam * (2.0 * self.t)
    }
}

/// A symmetric r x r multiplier stored as its packed lower triangle.
#[derive(Clone, Debug, PartialEq)]
pub struct PackedMultiplier {
    r: usize,
    data: DVector<f64>,
}

impl PackedMultiplier {
    pub fn zeros(r: usize) -> Self {
        Self {
            r,
            data: DVector::zeros(packed_len(r)),
        }
    }

    pub fn from_packed(r: usize, data: DVector<f64>) -> Result<Self> {
        if data.len() != packed_len(r) {
            return Err(Error::ShapeMismatch {
                expected: (packed_len(r), 1),
                got: (data.len(), 1),
            });
        }
        Ok(Self { r, data })
    }

    /// Packs a symmetric matrix; rejects asymmetric input.
    pub fn from_symmetric(m: &Mat) -> Result<Self> {
        check_symmetric(m)?;
        Ok(Self {
            r: m.nrows(),
            data: vech(m),
        })
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.data
    }

    pub fn to_matrix(&self) -> Mat {
        unvech(&self.data, self.r)
    }
}

pub fn packed_len(r: usize) -> usize {
    r * (r + 1) / 2
}

/// Lower triangle of `m`, column by column.
pub fn vech(m: &Mat) -> DVector<f64> {
    let r = m.nrows();
    let mut out = DVector::zeros(packed_len(r));
    let mut k = 0;
    for j in 0..r {
        for i in j..r {
            out[k] = m[(i, j)];
            k += 1;
        }
    }
    out
}

/// Inverse of [`vech`] on symmetric matrices.
pub fn unvech(v: &DVector<f64>, r: usize) -> Mat {
    let mut out = Mat::zeros(r, r);
    let mut k = 0;
    for j in 0..r {
        for i in j..r {
            out[(i, j)] = v[k];
            out[(j, i)] = v[k];
            k += 1;
        }
    }
    out
}

/// Weights making `vech` an isometry: `<A, B>_F = sum_k w_k vech(A)_k vech(B)_k`.
pub fn packed_weights(r: usize) -> DVector<f64> {
    let mut w = DVector::zeros(packed_len(r));
    let mut k = 0;
    for j in 0..r {
        for i in j..r {
            w[k] = if i == j { 1.0 } else { 2.0 };
            k += 1;
        }
    }
    w
}

fn check_symmetric(m: &Mat) -> Result<()> {
    if !m.is_square() {
        return Err(Error::ShapeMismatch {
            expected: (m.nrows(), m.nrows()),
            got: m.shape(),
        });
    }
    let asym = (m - m.transpose()).norm();
    if asym > 1e-12 * m.norm().max(1.0) {
        return Err(Error::NotSymmetric(asym));
    }
    Ok(())
}

/// `A(V) = V^T X + X^T V`.
pub fn apply_a(x: &StiefelPoint, v: &Mat) -> Result<Mat> {
    check_shape(x.shape(), v.shape())?;
    let xtv = x.as_matrix().tr_mul(v);
    Ok(&xtv + xtv.transpose())
}

/// `A*(L) = 2 X L` for symmetric L.
pub fn apply_a_adjoint(x: &StiefelPoint, lam: &Mat) -> Result<Mat> {
    check_shape((x.r(), x.r()), lam.shape())?;
    check_symmetric(lam)?;
    Ok(x.as_matrix() * lam * 2.0)
}

/// `V(L) = prox_{th}(B(L)) - X`.
pub fn compute_v(inst: &SubproblemInstance<'_>, lam: &PackedMultiplier) -> Mat {
    let b = inst.b_of(&lam.to_matrix());
    inst.term.prox(inst.t, &b) - inst.x.as_matrix()
}

/// `E(L) = A(V(L))`.
pub fn residual_e(inst: &SubproblemInstance<'_>, lam: &PackedMultiplier) -> Mat {
    let v = compute_v(inst, lam);
    let xtv = inst.x.as_matrix().tr_mul(&v);
    &xtv + xtv.transpose()
}

/// Generalized Jacobian of `vech(E)` in packed coordinates, `G = W^{-1} K`.
#[derive(Clone, Debug)]
pub struct PackedJacobian {
    k: Mat,
    weights: DVector<f64>,
}

impl PackedJacobian {
    /// Builds `G = W^{-1} K` from a symmetric K for multipliers of size r.
    pub fn from_symmetric_core(k: Mat, r: usize) -> Result<Self> {
        let p = packed_len(r);
        check_shape((p, p), k.shape())?;
        check_symmetric(&k)?;
        Ok(Self {
            k,
            weights: packed_weights(r),
        })
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    /// The symmetric core `K = W G`.
    pub fn core(&self) -> &Mat {
        &self.k
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    /// G as an explicit matrix.
    pub fn to_matrix(&self) -> Mat {
        let mut g = self.k.clone();
        for (i, mut row) in g.row_iter_mut().enumerate() {
            row.scale_mut(1.0 / self.weights[i]);
        }
        g
    }

    pub fn apply(&self, d: &DVector<f64>) -> DVector<f64> {
        (&self.k * d).component_div(&self.weights)
    }
}

/// Packed generalized Jacobian of E at L.
///
/// Column `(i, j)` is `vech(A(J (2t X S_ij)))` where `S_ij` is the symmetric
/// unit matrix with ones at `(i, j)` and `(j, i)` and J the prox Jacobian at
/// `B(L)`. For the l1 mask the products `X^T D_c X` over the r columns are
/// formed once and reused.
pub fn jacobian_g(inst: &SubproblemInstance<'_>, lam: &PackedMultiplier) -> PackedJacobian {
    let x = inst.x.as_matrix();
    let (n, r) = x.shape();
    let t2 = 2.0 * inst.t;
    let b = inst.b_of(&lam.to_matrix());
    let jac = inst.term.prox_jacobian(inst.t, &b);
    let p = packed_len(r);
    let mut g = Mat::zeros(p, p);

    match &jac {
        ProxJacobian::Mask(mask) => {
            // blocks[c] = X^T D_c X
            let blocks: Vec<Mat> = (0..r)
                .map(|c| {
                    let mut xc = x.clone();
                    for i in 0..n {
                        if mask[(i, c)] == 0.0 {
                            xc.row_mut(i).fill(0.0);
                        }
                    }
                    xc.tr_mul(x)
                })
                .collect();
            let mut q = 0;
            for j in 0..r {
                for i in j..r {
                    let mut c = Mat::zeros(r, r);
                    if i == j {
                        c.set_column(i, &(blocks[i].column(i) * t2));
                    } else {
                        c.set_column(j, &(blocks[j].column(i) * t2));
                        c.set_column(i, &(blocks[i].column(j) * t2));
                    }
                    let e = &c + c.transpose();
                    g.set_column(q, &vech(&e));
                    q += 1;
                }
            }
        }
        ProxJacobian::RowBlocks { .. } => {
            let mut q = 0;
            for j in 0..r {
                for i in j..r {
                    let mut xs = Mat::zeros(n, r);
                    xs.set_column(j, &(x.column(i) * t2));
                    if i != j {
                        xs.set_column(i, &(x.column(j) * t2));
                    }
                    let dv = jac.apply(&xs).expect("Jacobian built at B(L) has matching shape");
                    let c = x.tr_mul(&dv);
                    let e = &c + c.transpose();
                    g.set_column(q, &vech(&e));
                    q += 1;
                }
            }
        }
    }

    let weights = packed_weights(r);
    let mut k = g;
    for (i, mut row) in k.row_iter_mut().enumerate() {
        row.scale_mut(weights[i]);
    }
    let k = (&k + k.transpose()) * 0.5;
    PackedJacobian { k, weights }
}

/// Solves `(G + eta I) d = -e` through the symmetric form `(K + eta W) d = -W e`.
///
/// Dense Cholesky up to `dense_threshold` unknowns, conjugate gradients beyond.
pub fn newton_direction(
    g: &PackedJacobian,
    e: &DVector<f64>,
    eta: f64,
    dense_threshold: usize,
) -> Result<DVector<f64>> {
    if !(eta > 0.0) {
        return Err(Error::InvalidParameter(format!("regularization must be positive, got {eta}")));
    }
    let p = g.dim();
    if e.len() != p {
        return Err(Error::ShapeMismatch {
            expected: (p, 1),
            got: (e.len(), 1),
        });
    }
    let mut a = g.k.clone();
    for i in 0..p {
        a[(i, i)] += eta * g.weights[i];
    }
    let rhs = -e.component_mul(&g.weights);

    if p <= dense_threshold {
        if let Some(chol) = a.clone().cholesky() {
            return Ok(chol.solve(&rhs));
        }
        let mut shifted = g.to_matrix();
        for i in 0..p {
            shifted[(i, i)] += eta;
        }
        return shifted
            .lu()
            .solve(&(-e))
            .ok_or(Error::LinearSolve("regularized Newton system is singular"));
    }
    conjugate_gradient(&a, &rhs, 4e-11, 10 * p)
}

fn conjugate_gradient(a: &Mat, b: &DVector<f64>, rel_tol: f64, max_iter: usize) -> Result<DVector<f64>> {
    let bnorm = b.norm();
    let mut x = DVector::zeros(b.len());
    if bnorm == 0.0 {
        return Ok(x);
    }
    let mut r = b.clone();
    let mut p = r.clone();
    let mut rr = r.norm_squared();
    for _ in 0..max_iter {
        if rr.sqrt() <= rel_tol * bnorm {
            return Ok(x);
        }
        let ap = a * &p;
        let pap = p.dot(&ap);
        if !(pap > 0.0) {
            return Err(Error::LinearSolve("conjugate gradients broke down"));
        }
        let alpha = rr / pap;
        x.axpy(alpha, &p, 1.0);
        r.axpy(-alpha, &ap, 1.0);
        let rr_next = r.norm_squared();
        p = &r + &p * (rr_next / rr);
        rr = rr_next;
    }
    if rr.sqrt() <= rel_tol * bnorm {
        Ok(x)
    } else {
        Err(Error::LinearSolve("conjugate gradients did not converge"))
    }
}

/// Settings of the regularized semi-smooth Newton method.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SsnConfig {
    /// Stop once `||E(L)||_F^2 <= tol`.
    pub tol: f64,
    pub max_iter: usize,
    /// `eta = reg * ||E(L)||_F`, before any adaptive increase.
    pub reg: f64,
    /// After a failed line search eta grows by this factor and the step is retried.
    pub reg_growth: f64,
    /// Retries with a larger eta before falling back to the safeguard step.
    pub max_reg_raises: usize,
    /// Sufficient decrease `||E(L + a d)|| <= (1 - rho a) ||E(L)||`.
    pub rho: f64,
    pub shrink: f64,
    pub max_shrinks: usize,
    /// Safeguard fixed-point step; `None` means `1 / (4t)`.
    pub safeguard_step: Option<f64>,
    /// Largest packed dimension solved by dense factorization.
    pub dense_threshold: usize,
}

impl Default for SsnConfig {
    fn default() -> Self {
        Self {
            tol: 1e-13,
            max_iter: 100,
            reg: 0.2,
            reg_growth: 10.0,
            max_reg_raises: 3,
            rho: 1e-3,
            shrink: 0.5,
            max_shrinks: 10,
            safeguard_step: None,
            dense_threshold: 200,
        }
    }
}

impl SsnConfig {
    /// Inner tolerance coupled to the outer one:
    /// `max{1e-13, min{1e-11, 1e-3 t^2 eps}}`.
    pub fn coupled_tol(t: f64, eps_outer: f64) -> f64 {
        (1e-3 * t * t * eps_outer).clamp(1e-13, 1e-11)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.tol > 0.0
            && self.max_iter > 0
            && self.reg > 0.0
            && self.reg_growth >= 1.0
            && self.rho > 0.0
            && self.shrink > 0.0
            && self.shrink < 1.0
            && self.safeguard_step.is_none_or(|z| z > 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid SSN configuration {self:?}")))
        }
    }
}

#[derive(Clone, Debug)]
pub struct SsnResult {
    /// Tangent projection of `v_raw`; differs from it by at most `||E||_F / 2`.
    pub v: TangentVector,
    /// `V(L) = prox_{th}(B(L)) - X` at the returned multiplier.
    pub v_raw: Mat,
    pub multiplier: PackedMultiplier,
    /// Newton iterations performed.
    pub iters: usize,
    /// Final `||E(L)||_F`.
    pub residual: f64,
    pub converged: bool,
}

/// Adaptive regularized semi-smooth Newton method for `E(L) = 0`.
pub fn ssn_solve(inst: &SubproblemInstance<'_>, lam0: &PackedMultiplier, cfg: &SsnConfig) -> Result<SsnResult> {
    cfg.validate()?;
    let r = inst.x.r();
    if lam0.r() != r {
        return Err(Error::ShapeMismatch {
            expected: (packed_len(r), 1),
            got: (lam0.as_vector().len(), 1),
        });
    }
    if lam0.as_vector().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("initial multiplier"));
    }
    let zeta = cfg.safeguard_step.unwrap_or(1.0 / (4.0 * inst.t));

    let mut lam = lam0.clone();
    let mut e = residual_e(inst, &lam);
    let mut e_norm = finite_norm(&e)?;
    let mut best = (lam.clone(), e_norm);
    let mut iters = 0;
    let mut reg_scale = 1.0;

    while e_norm * e_norm > cfg.tol && iters < cfg.max_iter {
        iters += 1;
        let jac = jacobian_g(inst, &lam);
        let e_packed = vech(&e);

        let mut accepted = None;
        let mut scale = reg_scale;
        for _ in 0..=cfg.max_reg_raises {
            let eta = cfg.reg * scale * e_norm;
            if let Ok(d) = newton_direction(&jac, &e_packed, eta, cfg.dense_threshold) {
                accepted = line_search(inst, &lam, &d, e_norm, cfg);
            }
            if accepted.is_some() {
                break;
            }
            scale *= cfg.reg_growth;
        }
        reg_scale = if accepted.is_some() {
            (scale / cfg.reg_growth).max(1.0)
        } else {
            1.0
        };

        let (next, e_next, n_next) = match accepted {
            Some(v) => v,
            None => {
                let lam_m = lam.to_matrix() - &e * zeta;
                let next = PackedMultiplier {
                    r,
                    data: vech(&lam_m),
                };
                let e_next = residual_e(inst, &next);
                let n_next = finite_norm(&e_next)?;
                (next, e_next, n_next)
            }
        };
        lam = next;
        e = e_next;
        e_norm = n_next;
        if e_norm < best.1 {
            best = (lam.clone(), e_norm);
        }
    }

    let converged = e_norm * e_norm <= cfg.tol;
    if !converged && best.1 < e_norm {
        lam = best.0;
        e_norm = best.1;
    }
    let v_raw = compute_v(inst, &lam);
    let v = tangent_project(inst.x, &v_raw)?;
    Ok(SsnResult {
        v,
        v_raw,
        multiplier: lam,
        iters,
        residual: e_norm,
        converged,
    })
}

/// Backtracking `a = 1, shrink, ...` until `||E(L + a d)|| <= (1 - rho a) ||E(L)||`.
fn line_search(
    inst: &SubproblemInstance<'_>,
    lam: &PackedMultiplier,
    d: &DVector<f64>,
    e_norm: f64,
    cfg: &SsnConfig,
) -> Option<(PackedMultiplier, Mat, f64)> {
    let mut alpha = 1.0;
    for _ in 0..=cfg.max_shrinks {
        let trial = PackedMultiplier {
            r: lam.r,
            data: lam.as_vector() + d * alpha,
        };
        let e_trial = residual_e(inst, &trial);
        let n_trial = e_trial.norm();
        if n_trial.is_finite() && n_trial <= (1.0 - cfg.rho * alpha) * e_norm {
            return Some((trial, e_trial, n_trial));
        }
        alpha *= cfg.shrink;
    }
    None
}

fn finite_norm(m: &Mat) -> Result<f64> {
    let n = m.norm();
    if n.is_finite() {
        Ok(n)
    } else {
        Err(Error::NonFinite("subproblem residual"))
    }
}
