//! Nonsmooth terms, their proximal mappings and generalized Jacobians.

use crate::error::{check_shape, Error, Result};
use crate::manifold::Mat;

/// How the minimax concave penalty is written on `|x| <= gamma * lambda`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum McpForm {
    /// `lambda |x| - x^2 / (2 gamma)`, continuous at the breakpoint.
    #[default]
    Standard,
    /// `lambda |x| - x^2 / (2 lambda)`, continuous only when `gamma == lambda`.
    Literal,
}

/// The part of the objective handled by the proximal mapping.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NonsmoothTerm {
    /// `mu * sum |X_ij|`
    L1 { mu: f64 },
    /// `mu * sum_i ||X(i, :)||_2`
    L21 { mu: f64 },
    /// MCP-regularized objective split as a smooth remainder plus
    /// `mu * lambda * ||X||_1`; only the latter is seen by the prox.
    McpSplitL1 {
        mu: f64,
        lambda: f64,
        gamma: f64,
        form: McpForm,
    },
}

impl NonsmoothTerm {
    /// Checks parameter signs. A zero weight is allowed and makes h vanish.
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            NonsmoothTerm::L1 { mu } | NonsmoothTerm::L21 { mu } => mu >= 0.0 && mu.is_finite(),
            NonsmoothTerm::McpSplitL1 { mu, lambda, gamma, .. } => {
                mu >= 0.0 && mu.is_finite() && lambda > 0.0 && gamma > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("invalid nonsmooth term {self:?}")))
        }
    }

    /// Weight of the l1-type norm seen by the prox.
    pub fn weight(&self) -> f64 {
        match *self {
            NonsmoothTerm::L1 { mu } | NonsmoothTerm::L21 { mu } => mu,
            NonsmoothTerm::McpSplitL1 { mu, lambda, .. } => mu * lambda,
        }
    }

    fn is_rowwise(&self) -> bool {
        matches!(self, NonsmoothTerm::L21 { .. })
    }

    /// h(X).
    pub fn eval(&self, x: &Mat) -> f64 {
        let w = self.weight();
        if self.is_rowwise() {
            w * row_norms(x).iter().sum::<f64>()
        } else {
            w * x.iter().map(|v| v.abs()).sum::<f64>()
        }
    }

    /// `prox_{t h}(Y)`.
    pub fn prox(&self, t: f64, y: &Mat) -> Mat {
        let thr = t * self.weight();
        if self.is_rowwise() {
            let mut out = y.clone();
            for (i, nrm) in row_norms(y).into_iter().enumerate() {
                let scale = if nrm > thr { 1.0 - thr / nrm } else { 0.0 };
                out.row_mut(i).scale_mut(scale);
            }
            out
        } else {
            y.map(|v| soft_threshold(v, thr))
        }
    }

    /// An element of the Clarke generalized Jacobian of `prox_{t h}` at `Y`.
    ///
    /// At kinks the zero element is chosen.
    pub fn prox_jacobian(&self, t: f64, y: &Mat) -> ProxJacobian {
        let thr = t * self.weight();
        if self.is_rowwise() {
            let r = y.ncols();
            let blocks = row_norms(y)
                .into_iter()
                .enumerate()
                .map(|(i, nrm)| {
                    if thr == 0.0 {
                        Some(Mat::identity(r, r))
                    } else if nrm <= thr {
                        None
                    } else {
                        let row = y.row(i).transpose();
                        let mut b = &row * row.transpose() * (thr / nrm.powi(3));
                        for k in 0..r {
                            b[(k, k)] += 1.0 - thr / nrm;
                        }
                        Some(b)
                    }
                })
                .collect();
            ProxJacobian::RowBlocks { blocks, cols: r }
        } else {
            let mask = if thr == 0.0 {
                Mat::from_element(y.nrows(), y.ncols(), 1.0)
            } else {
                y.map(|v| if v.abs() > thr { 1.0 } else { 0.0 })
            };
            ProxJacobian::Mask(mask)
        }
    }

    /// Euclidean subgradient selection of h, with `sign(0) = 0`.
    pub fn subgradient(&self, x: &Mat) -> Mat {
        let w = self.weight();
        if self.is_rowwise() {
            let mut out = x.clone();
            for (i, nrm) in row_norms(x).into_iter().enumerate() {
                let scale = if nrm > 0.0 { w / nrm } else { 0.0 };
                out.row_mut(i).scale_mut(scale);
            }
            out
        } else {
            x.map(|v| w * sign(v))
        }
    }
}

pub fn soft_threshold(v: f64, thr: f64) -> f64 {
    if v > thr {
        v - thr
    } else if v < -thr {
        v + thr
    } else {
        0.0
    }
}

/// Sign with `sign(0) = 0`.
pub fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn row_norms(x: &Mat) -> Vec<f64> {
    x.row_iter().map(|row| row.norm()).collect()
}

/// Generalized Jacobian element of a separable prox, stored compactly.
#[derive(Clone, Debug, PartialEq)]
pub enum ProxJacobian {
    /// Diagonal 0/1 mask, one entry per matrix entry.
    Mask(Mat),
    /// One r x r block per row; `None` is the zero block.
    RowBlocks { blocks: Vec<Option<Mat>>, cols: usize },
}

impl ProxJacobian {
    /// Applies the Jacobian to a direction `d` of the same shape as the evaluation point.
    pub fn apply(&self, d: &Mat) -> Result<Mat> {
        match self {
            ProxJacobian::Mask(mask) => {
                check_shape(mask.shape(), d.shape())?;
                Ok(mask.component_mul(d))
            }
            ProxJacobian::RowBlocks { blocks, cols } => {
                check_shape((blocks.len(), *cols), d.shape())?;
                let mut out = Mat::zeros(d.nrows(), d.ncols());
                for (i, b) in blocks.iter().enumerate() {
                    if let Some(b) = b {
                        let row = b * d.row(i).transpose();
                        out.row_mut(i).copy_from(&row.transpose());
                    }
                }
                Ok(out)
            }
        }
    }

    /// The Jacobian as an `(n r) x (n r)` matrix acting on column-major `vec(d)`.
    pub fn to_dense(&self) -> Mat {
        match self {
            ProxJacobian::Mask(mask) => {
                let diag = nalgebra::DVector::from_column_slice(mask.as_slice());
                Mat::from_diagonal(&diag)
            }
            ProxJacobian::RowBlocks { blocks, cols } => {
                let n = blocks.len();
                let mut out = Mat::zeros(n * cols, n * cols);
                for (i, b) in blocks.iter().enumerate() {
                    if let Some(b) = b {
                        for a in 0..*cols {
                            for c in 0..*cols {
                                out[(a * n + i, c * n + i)] = b[(a, c)];
                            }
                        }
                    }
                }
                out
            }
        }
    }
}

/// Gradient of the smooth MCP remainder `mu * (sum P(X_ij) - lambda ||X||_1)`.
pub fn mcp_smooth_grad(mu: f64, lambda: f64, gamma: f64, form: McpForm, x: &Mat) -> Mat {
    let curvature = match form {
        McpForm::Standard => gamma,
        McpForm::Literal => lambda,
    };
    x.map(|v| {
        if v.abs() <= gamma * lambda {
            -mu * v / curvature
        } else {
            -mu * lambda * sign(v)
        }
    })
}

/// `mu * (sum P(X_ij) - lambda ||X||_1)`.
pub fn mcp_smooth_value(mu: f64, lambda: f64, gamma: f64, form: McpForm, x: &Mat) -> f64 {
    let curvature = match form {
        McpForm::Standard => gamma,
        McpForm::Literal => lambda,
    };
    mu * x
        .iter()
        .map(|&v| {
            let a = v.abs();
            if a <= gamma * lambda {
                -v * v / (2.0 * curvature)
            } else {
                0.5 * gamma * lambda * lambda - lambda * a
            }
        })
        .sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn h_values() {
        let x = Mat::from_row_slice(2, 2, &[1.0, -1.0, 0.0, 3.0]);
        assert_eq!(NonsmoothTerm::L1 { mu: 2.0 }.eval(&x), 10.0);
        let x = Mat::from_row_slice(2, 2, &[3.0, 4.0, 0.0, 0.0]);
        assert_eq!(NonsmoothTerm::L21 { mu: 1.0 }.eval(&x), 5.0);
        assert_eq!(NonsmoothTerm::L1 { mu: 0.7 }.eval(&Mat::zeros(3, 2)), 0.0);
    }

    #[test]
    fn prox_values() {
        let l1 = NonsmoothTerm::L1 { mu: 1.0 };
        let p = l1.prox(0.3, &Mat::from_column_slice(2, 1, &[1.0, 0.2]));
        assert!((p[0] - 0.7).abs() < 1e-15);
        assert_eq!(p[1], 0.0);

        let l21 = NonsmoothTerm::L21 { mu: 1.0 };
        let p = l21.prox(1.0, &Mat::from_row_slice(1, 2, &[3.0, 4.0]));
        assert!((p[(0, 0)] - 2.4).abs() < 1e-15);
        assert!((p[(0, 1)] - 3.2).abs() < 1e-15);
    }

    #[test]
    fn jacobian_kink_convention() {
        let l1 = NonsmoothTerm::L1 { mu: 1.0 };
        let y = Mat::from_column_slice(3, 1, &[0.0, 0.5, -2.0]);
        let ProxJacobian::Mask(mask) = l1.prox_jacobian(0.5, &y) else {
            panic!("l1 gives a mask")
        };
        assert_eq!(mask.as_slice(), &[0.0, 0.0, 1.0]);

        let far = Mat::from_element(2, 2, 10.0);
        let ProxJacobian::Mask(mask) = l1.prox_jacobian(0.5, &far) else {
            panic!()
        };
        assert!(mask.iter().all(|&m| m == 1.0));

        // Zero weight: the prox is the identity everywhere, including y = 0.
        let ProxJacobian::Mask(mask) = NonsmoothTerm::L1 { mu: 0.0 }.prox_jacobian(1.0, &Mat::zeros(2, 2)) else {
            panic!()
        };
        assert!(mask.iter().all(|&m| m == 1.0));
    }

    #[test]
    fn mcp_remainder_is_continuous() {
        let (mu, lambda, gamma) = (1.3, 0.4, 2.5);
        let b = gamma * lambda;
        let at = |v: f64| mcp_smooth_grad(mu, lambda, gamma, McpForm::Standard, &Mat::from_element(1, 1, v))[0];
        assert_eq!(at(0.0), 0.0);
        assert!((at(b) - at(b + 1e-12)).abs() < 1e-10);
        assert!((at(-b) - at(-b - 1e-12)).abs() < 1e-10);
        assert!((at(b) + mu * lambda).abs() < 1e-14);
    }

    #[test]
    fn mcp_forms_agree_when_gamma_equals_lambda() {
        let x = Mat::from_column_slice(4, 1, &[-2.0, -0.3, 0.1, 0.9]);
        for (l, g) in [(1.0, 1.0), (0.6, 0.6)] {
            let a = mcp_smooth_grad(0.8, l, g, McpForm::Standard, &x);
            let b = mcp_smooth_grad(0.8, l, g, McpForm::Literal, &x);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(NonsmoothTerm::L1 { mu: -1.0 }.validate().is_err());
        assert!(NonsmoothTerm::McpSplitL1 { mu: 1.0, lambda: 0.0, gamma: 1.0, form: McpForm::Standard }
            .validate()
            .is_err());
        assert!(NonsmoothTerm::L21 { mu: 0.0 }.validate().is_ok());
    }

    #[test]
    fn row_block_apply_matches_dense() {
        let y = Mat::from_row_slice(3, 2, &[3.0, 4.0, 0.1, 0.1, -1.0, 2.0]);
        let jac = NonsmoothTerm::L21 { mu: 1.0 }.prox_jacobian(0.5, &y);
        let d = Mat::from_row_slice(3, 2, &[0.3, -0.2, 1.0, 2.0, 0.5, 0.5]);
        let applied = jac.apply(&d).unwrap();
        let dense = jac.to_dense() * nalgebra::DVector::from_column_slice(d.as_slice());
        assert!((nalgebra::DVector::from_column_slice(applied.as_slice()) - dense).norm() < 1e-15);
        // The middle row is inside the dead zone.
        assert_eq!(applied.row(1).norm(), 0.0);
    }
}
