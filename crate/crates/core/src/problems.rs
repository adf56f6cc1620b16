//! Concrete problems: sparse PCA, compressed modes and MCP-regularized sparse PCA.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::manifold::Mat;
use crate::prox::{mcp_smooth_grad, mcp_smooth_value, McpForm, NonsmoothTerm};

/// Domain length of the 1D free-electron model.
pub const FE_DOMAIN_LENGTH: f64 = 50.0;

/// Entries with magnitude strictly below this count as zeros.
pub const SPARSITY_THRESHOLD: f64 = 1e-5;

/// A composite objective `F = f + h` over St(n, r).
///
/// `f` is smooth with an L-Lipschitz gradient; `h` is described by
/// [`NonsmoothTerm`] so solvers can evaluate its proximal mapping.
pub trait ProblemOracle: Send + Sync {
    /// Ambient row dimension n.
    fn dim(&self) -> usize;

    fn f(&self, x: &Mat) -> f64;

    fn grad_f(&self, x: &Mat) -> Mat;

    fn term(&self) -> NonsmoothTerm;

    /// Upper bound on the Lipschitz constant of `grad_f`.
    fn lipschitz(&self) -> f64;

    fn h(&self, x: &Mat) -> f64 {
        self.term().eval(x)
    }

    fn objective(&self, x: &Mat) -> f64 {
        self.f(x) + self.h(x)
    }

    /// Euclidean subgradient selection `grad f + dh` with `sign(0) = 0`.
    fn subgradient(&self, x: &Mat) -> Mat {
        self.grad_f(x) + self.term().subgradient(x)
    }
}

/// `min -Tr(X^T A^T A X) + mu ||X||_1`.
#[derive(Clone, Debug)]
pub struct SpcaProblem {
    a: Mat,
    mu: f64,
    sigma_max_sq: f64,
}

impl SpcaProblem {
    pub fn new(a: Mat, mu: f64) -> Result<Self> {
        if mu < 0.0 || !mu.is_finite() {
            return Err(Error::InvalidParameter(format!("mu must be >= 0, got {mu}")));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("data matrix"));
        }
        let sigma = a.singular_values().max();
        Ok(Self {
            a,
            mu,
            sigma_max_sq: sigma * sigma,
        })
    }

    pub fn data(&self) -> &Mat {
        &self.a
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn sigma_max_sq(&self) -> f64 {
        self.sigma_max_sq
    }
}

impl ProblemOracle for SpcaProblem {
    fn dim(&self) -> usize {
        self.a.ncols()
    }

    fn f(&self, x: &Mat) -> f64 {
        -(&self.a * x).norm_squared()
    }

    fn grad_f(&self, x: &Mat) -> Mat {
        self.a.tr_mul(&(&self.a * x)) * -2.0
    }

    fn term(&self) -> NonsmoothTerm {
        NonsmoothTerm::L1 { mu: self.mu }
    }

    fn lipschitz(&self) -> f64 {
        2.0 * self.sigma_max_sq
    }
}

/// `min Tr(X^T H X) + mu ||X||_1` for a symmetric Hamiltonian H.
#[derive(Clone, Debug)]
pub struct CmProblem {
    h: Mat,
    mu: f64,
    lambda_max: f64,
    circulant: Option<Vec<f64>>,
}

impl CmProblem {
    /// The 1D free-electron model on `[0, 50]` with n periodic nodes.
    pub fn free_electron(n: usize, mu: f64) -> Result<Self> {
        let h = build_fe_hamiltonian(n)?;
        let first_col = h.column(0).iter().copied().collect();
        let nf = n as f64;
        Self::with_parts(h, mu, 2.0 * nf * nf / (FE_DOMAIN_LENGTH * FE_DOMAIN_LENGTH), Some(first_col))
    }

    /// A user-supplied symmetric H; circulant structure is detected.
    pub fn from_hamiltonian(h: Mat, mu: f64) -> Result<Self> {
        if !h.is_square() {
            return Err(Error::InvalidParameter("Hamiltonian must be square".into()));
        }
        let asym = (&h - h.transpose()).norm();
        if asym > 1e-12 * h.norm().max(1.0) {
            return Err(Error::NotSymmetric(asym));
        }
        let lambda_max = h.symmetric_eigenvalues().max();
        let circulant = is_circulant(&h).then(|| h.column(0).iter().copied().collect());
        Self::with_parts(h, mu, lambda_max, circulant)
    }

    fn with_parts(h: Mat, mu: f64, lambda_max: f64, circulant: Option<Vec<f64>>) -> Result<Self> {
        if mu < 0.0 || !mu.is_finite() {
            return Err(Error::InvalidParameter(format!("mu must be >= 0, got {mu}")));
        }
        Ok(Self {
            h,
            mu,
            lambda_max,
            circulant,
        })
    }

    pub fn hamiltonian(&self) -> &Mat {
        &self.h
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    /// First column of H when H is circulant.
    pub fn circulant_column(&self) -> Option<&[f64]> {
        self.circulant.as_deref()
    }
}

impl ProblemOracle for CmProblem {
    fn dim(&self) -> usize {
        self.h.nrows()
    }

    fn f(&self, x: &Mat) -> f64 {
        x.dot(&(&self.h * x))
    }

    fn grad_f(&self, x: &Mat) -> Mat {
        (&self.h * x) * 2.0
    }

    fn term(&self) -> NonsmoothTerm {
        NonsmoothTerm::L1 { mu: self.mu }
    }

    fn lipschitz(&self) -> f64 {
        2.0 * self.lambda_max
    }
}

/// Sparse PCA with the minimax concave penalty, split as
/// `f1 = -Tr(X^T A^T A X) + mu (sum P(X_ij) - lambda ||X||_1)` and `h = mu lambda ||X||_1`.
#[derive(Clone, Debug)]
pub struct McpSpcaProblem {
    spca: SpcaProblem,
    lambda: f64,
    gamma: f64,
    form: McpForm,
}

impl McpSpcaProblem {
    pub fn new(a: Mat, mu: f64, lambda: f64, gamma: f64, form: McpForm) -> Result<Self> {
        if !(lambda > 0.0 && gamma > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "MCP needs lambda > 0 and gamma > 0, got lambda={lambda}, gamma={gamma}"
            )));
        }
        Ok(Self {
            spca: SpcaProblem::new(a, mu)?,
            lambda,
            gamma,
            form,
        })
    }

    pub fn spca(&self) -> &SpcaProblem {
        &self.spca
    }
}

impl ProblemOracle for McpSpcaProblem {
    fn dim(&self) -> usize {
        self.spca.dim()
    }

    fn f(&self, x: &Mat) -> f64 {
        self.spca.f(x) + mcp_smooth_value(self.spca.mu, self.lambda, self.gamma, self.form, x)
    }

    fn grad_f(&self, x: &Mat) -> Mat {
        self.spca.grad_f(x) + mcp_smooth_grad(self.spca.mu, self.lambda, self.gamma, self.form, x)
    }

    fn term(&self) -> NonsmoothTerm {
        NonsmoothTerm::McpSplitL1 {
            mu: self.spca.mu,
            lambda: self.lambda,
            gamma: self.gamma,
            form: self.form,
        }
    }

    fn lipschitz(&self) -> f64 {
        let curvature = match self.form {
            McpForm::Standard => self.gamma,
            McpForm::Literal => self.lambda,
        };
        self.spca.lipschitz() + self.spca.mu / curvature
    }
}

/// Standard normal m x n matrix with columns centered and scaled to unit norm.
///
/// Entries are drawn column by column from ChaCha20 seeded with `seed`.
pub fn gen_spca(m: usize, n: usize, seed: u64) -> Result<Mat> {
    if m < 2 || n == 0 {
        return Err(Error::InvalidParameter(format!(
            "data matrix needs m >= 2 and n >= 1, got {m}x{n}"
        )));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut a = Mat::zeros(m, n);
    for j in 0..n {
        for i in 0..m {
            a[(i, j)] = rng.sample(StandardNormal);
        }
    }
    for mut col in a.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
        let nrm = col.norm();
        col.scale_mut(1.0 / nrm);
    }
    Ok(a)
}

/// Discretized `-1/2 d^2/dx^2` on `[0, 50]` with periodic boundary and the
/// three-point stencil: `H = -(1 / (2 h^2)) circ(1, -2, 1)`, `h = 50 / n`.
pub fn build_fe_hamiltonian(n: usize) -> Result<Mat> {
    if n < 3 {
        return Err(Error::InvalidParameter(format!("Hamiltonian needs n >= 3, got {n}")));
    }
    let step = FE_DOMAIN_LENGTH / n as f64;
    let c = 1.0 / (2.0 * step * step);
    let mut h = Mat::zeros(n, n);
    for i in 0..n {
        h[(i, i)] = 2.0 * c;
        h[(i, (i + 1) % n)] = -c;
        h[(i, (i + n - 1) % n)] = -c;
    }
    Ok(h)
}

fn is_circulant(h: &Mat) -> bool {
    let n = h.nrows();
    (0..n).all(|i| (0..n).all(|j| h[(i, j)] == h[((i + n - j) % n, 0)]))
}

/// Fraction of entries with `|x| < threshold`.
pub fn sparsity(x: &Mat, threshold: f64) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().filter(|v| v.abs() < threshold).count() as f64 / x.len() as f64
}
