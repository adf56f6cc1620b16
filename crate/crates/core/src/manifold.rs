//! Geometry of the Stiefel manifold St(n, r) = { X in R^{n x r} : X^T X = I_r }.
//!
//! Points and tangent vectors are dense column-major matrices. The metric is
//! the Euclidean (Frobenius) one inherited from R^{n x r}, so the tangent
//! projection at X is
//!
//! ```text
//! P_X(Y) = (I - X X^T) Y + X skew(X^T Y),   skew(A) = (A - A^T) / 2
//! ```
//!
//! and the Riemannian gradient of a smooth function is the projection of its
//! Euclidean gradient.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_shape, Error, Result};

pub type Mat = DMatrix<f64>;

/// Largest orthonormality error accepted when wrapping a user matrix.
pub const ACCEPT_TOL: f64 = 1e-10;

/// Retracted points whose orthonormality error exceeds this are re-orthonormalized.
pub const DRIFT_TOL: f64 = 1e-12;

/// A point X on St(n, r).
#[derive(Clone, Debug, PartialEq)]
pub struct StiefelPoint {
    data: Mat,
}

impl StiefelPoint {
    /// Wraps `data` after checking `||X^T X - I||_F <= ACCEPT_TOL`.
    pub fn from_matrix(data: Mat) -> Result<Self> {
        if data.ncols() == 0 || data.ncols() > data.nrows() {
            return Err(Error::InvalidParameter(format!(
                "Stiefel point needs 1 <= r <= n, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        let err = orthonormality_error(&data);
        if !(err <= ACCEPT_TOL) {
            return Err(Error::NotOnManifold(err));
        }
        Ok(Self { data })
    }

    /// Nearest point on the manifold in Frobenius norm, `U V^T` from the thin SVD.
    pub fn project(m: &Mat) -> Result<Self> {
        if m.ncols() == 0 || m.ncols() > m.nrows() {
            return Err(Error::InvalidParameter(format!(
                "cannot project a {}x{} matrix onto St(n, r)",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Stiefel projection"));
        }
        let svd = m.clone().svd(true, true);
        let u = svd.u.expect("left singular vectors requested");
        let v_t = svd.v_t.expect("right singular vectors requested");
        Ok(Self { data: u * v_t })
    }

    /// Projection of an n x r standard normal matrix.
    pub fn random<R: Rng + ?Sized>(n: usize, r: usize, rng: &mut R) -> Result<Self> {
        let m = Mat::from_fn(n, r, |_, _| rng.sample(StandardNormal));
        Self::project(&m)
    }

    /// The first r columns of the identity.
    pub fn identity(n: usize, r: usize) -> Result<Self> {
        Self::from_matrix(Mat::identity(n, r))
    }

    pub(crate) fn from_matrix_unchecked(data: Mat) -> Self {
        Self { data }
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn r(&self) -> usize {
        self.data.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.data.shape()
    }

    pub fn as_matrix(&self) -> &Mat {
        &self.data
    }

    pub fn into_matrix(self) -> Mat {
        self.data
    }

    /// `||X^T X - I||_F`.
    pub fn feasibility_error(&self) -> f64 {
        orthonormality_error(&self.data)
    }
}

pub fn orthonormality_error(m: &Mat) -> f64 {
    let r = m.ncols();
    (m.tr_mul(m) - Mat::identity(r, r)).norm()
}

/// A matrix V with `V^T X + X^T V = 0` at some base point X.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentVector {
    data: Mat,
}

impl TangentVector {
    /// Wraps `data` after checking the tangency residual against the base point.
    pub fn new(x: &StiefelPoint, data: Mat) -> Result<Self> {
        check_shape(x.shape(), data.shape())?;
        let res = tangency_residual(x, &data);
        let scale = data.norm().max(1.0);
        if !(res <= 1e-10 * scale) {
            return Err(Error::InvalidParameter(format!(
                "matrix is not tangent at X: ||V^T X + X^T V||_F = {res:e}"
            )));
        }
        Ok(Self { data })
    }

    pub fn zeros(x: &StiefelPoint) -> Self {
        Self {
            data: Mat::zeros(x.n(), x.r()),
        }
    }

    pub fn as_matrix(&self) -> &Mat {
        &self.data
    }

    pub fn into_matrix(self) -> Mat {
        self.data
    }

    pub fn norm(&self) -> f64 {
        self.data.norm()
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            data: &self.data * alpha,
        }
    }
}

/// `||V^T X + X^T V||_F`.
pub fn tangency_residual(x: &StiefelPoint, v: &Mat) -> f64 {
    let xtv = x.as_matrix().tr_mul(v);
    (&xtv + xtv.transpose()).norm()
}

/// Orthogonal projection of `y` onto the tangent space at `x`.
pub fn tangent_project(x: &StiefelPoint, y: &Mat) -> Result<TangentVector> {
    check_shape(x.shape(), y.shape())?;
    let xm = x.as_matrix();
    let xty = xm.tr_mul(y);
    // Y - X sym(X^T Y), which equals (I - XX^T)Y + X skew(X^T Y).
    let sym = (&xty + xty.transpose()) * 0.5;
    Ok(TangentVector {
        data: y - xm * sym,
    })
}

/// Riemannian gradient under the embedded metric.
pub fn riemannian_gradient(x: &StiefelPoint, egrad: &Mat) -> Result<TangentVector> {
    tangent_project(x, egrad)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum RetractionKind {
    Exponential,
    #[default]
    Polar,
    Qr,
    Cayley,
}

impl RetractionKind {
    pub const ALL: [RetractionKind; 4] = [
        RetractionKind::Exponential,
        RetractionKind::Polar,
        RetractionKind::Qr,
        RetractionKind::Cayley,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RetractionKind::Exponential => "exp",
            RetractionKind::Polar => "polar",
            RetractionKind::Qr => "qr",
            RetractionKind::Cayley => "cayley",
        }
    }
}

impl fmt::Display for RetractionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RetractionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "exp" | "exponential" => Ok(RetractionKind::Exponential),
            "polar" => Ok(RetractionKind::Polar),
            "qr" => Ok(RetractionKind::Qr),
            "cayley" => Ok(RetractionKind::Cayley),
            other => Err(Error::InvalidParameter(format!(
                "unknown retraction '{other}'"
            ))),
        }
    }
}

/// Maps the tangent vector `xi` at `x` back onto the manifold.
///
/// A zero `xi` returns `x` unchanged for every kind. Outputs whose
/// orthonormality error exceeds [`DRIFT_TOL`] are re-orthonormalized by a
/// polar step.
pub fn retract(x: &StiefelPoint, xi: &TangentVector, kind: RetractionKind) -> Result<StiefelPoint> {
    check_shape(x.shape(), xi.as_matrix().shape())?;
    let xi = xi.as_matrix();
    if xi.iter().all(|&v| v == 0.0) {
        return Ok(x.clone());
    }
    if xi.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("retraction input"));
    }
    let out = match kind {
        RetractionKind::Polar => polar(&(x.as_matrix() + xi))?,
        RetractionKind::Qr => qf(&(x.as_matrix() + xi))?,
        RetractionKind::Cayley => cayley(x.as_matrix(), xi)?,
        RetractionKind::Exponential => exponential(x.as_matrix(), xi)?,
    };
    let out = if orthonormality_error(&out) > DRIFT_TOL {
        polar(&out)?
    } else {
        out
    };
    Ok(StiefelPoint::from_matrix_unchecked(out))
}

/// `Y (Y^T Y)^{-1/2}`. For `Y = X + xi` with tangent `xi`, `Y^T Y = I + xi^T xi`.
fn polar(y: &Mat) -> Result<Mat> {
    let gram = y.tr_mul(y);
    Ok(y * inv_sqrt_spd(gram)?)
}

pub(crate) fn inv_sqrt_spd(m: Mat) -> Result<Mat> {
    let eig = m.symmetric_eigen();
    let max = eig.eigenvalues.amax();
    if !(max.is_finite()) {
        return Err(Error::NonFinite("symmetric eigendecomposition"));
    }
    if eig.eigenvalues.iter().any(|&l| l <= max * 1e-14 || l <= 0.0) {
        return Err(Error::Retraction("Gram matrix is numerically singular"));
    }
    let q = &eig.eigenvectors;
    let scaled = Mat::from_fn(q.nrows(), q.ncols(), |i, j| q[(i, j)] / eig.eigenvalues[j].sqrt());
    Ok(scaled * q.transpose())
}

/// Q factor of the thin QR factorization with R having a positive diagonal.
fn qf(y: &Mat) -> Result<Mat> {
    let r_cols = y.ncols();
    let qr = y.clone().qr();
    let r = qr.r();
    let mut q = qr.q();
    let scale = y.norm().max(f64::MIN_POSITIVE);
    for j in 0..r_cols {
        let d = r[(j, j)];
        if d.abs() <= 1e-13 * scale {
            return Err(Error::Retraction("X + xi is rank deficient"));
        }
        if d < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    Ok(q)
}

/// `(I - W/2)^{-1} (I + W/2) X` with `W = P xi X^T - X xi^T P`, `P = I - XX^T/2`.
///
/// W has rank at most 2r, `W = U V^T` with `U = [a, X]`, `V = [X, -a]` and
/// `a = P xi`, so the n x n inverse is applied through the Woodbury identity
/// using a 2r x 2r solve.
fn cayley(x: &Mat, xi: &Mat) -> Result<Mat> {
    let (n, r) = x.shape();
    let a = xi - x * (x.tr_mul(xi) * 0.5);
    let mut u = Mat::zeros(n, 2 * r);
    u.columns_mut(0, r).copy_from(&a);
    u.columns_mut(r, r).copy_from(x);
    let mut v = Mat::zeros(n, 2 * r);
    v.columns_mut(0, r).copy_from(x);
    v.columns_mut(r, r).copy_from(&(-&a));

    // (I + W/2) X
    let y = x + &u * (v.tr_mul(x) * 0.5);
    // (I - U V^T / 2)^{-1} y = y + U (I - V^T U / 2)^{-1} (V^T y) / 2
    let core = Mat::identity(2 * r, 2 * r) - v.tr_mul(&u) * 0.5;
    let rhs = v.tr_mul(&y) * 0.5;
    let sol = core
        .lu()
        .solve(&rhs)
        .ok_or(Error::Retraction("Cayley system I - W/2 is singular"))?;
    Ok(y + u * sol)
}

/// Geodesic of the canonical metric:
/// `[X, Q] exp([[X^T xi, -R^T], [R, 0]]) [I; 0]` with `QR = (I - XX^T) xi`.
fn exponential(x: &Mat, xi: &Mat) -> Result<Mat> {
    let (n, r) = x.shape();
    let a = x.tr_mul(xi);
    let normal = xi - x * &a;
    let qr = normal.qr();
    let q = qr.q();
    let rf = qr.r();
    let mut block = Mat::zeros(2 * r, 2 * r);
    block.view_mut((0, 0), (r, r)).copy_from(&a);
    block.view_mut((0, r), (r, r)).copy_from(&(-rf.transpose()));
    block.view_mut((r, 0), (r, r)).copy_from(&rf);
    let e = block.exp();
    if e.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("matrix exponential"));
    }
    let mut basis = Mat::zeros(n, 2 * r);
    basis.columns_mut(0, r).copy_from(x);
    basis.columns_mut(r, r).copy_from(&q);
    Ok(basis * e.columns(0, r))
}

/// `||X X^T - Y Y^T||_F`, the distance between the column spaces.
pub fn subspace_distance(x: &StiefelPoint, y: &StiefelPoint) -> Result<f64> {
    check_shape(x.shape(), y.shape())?;
    let px = x.as_matrix() * x.as_matrix().transpose();
    let py = y.as_matrix() * y.as_matrix().transpose();
    Ok((px - py).norm())
}

/// Frobenius inner product.
pub fn inner(a: &Mat, b: &Mat) -> f64 {
    a.dot(b)
}
