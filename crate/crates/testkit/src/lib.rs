//! Reference computations for the test suites.
//!
//! Everything here is written from first principles and deliberately avoids
//! the library under test, so agreement between the two is meaningful.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type Mat = DMatrix<f64>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn randn<R: Rng>(n: usize, r: usize, rng: &mut R) -> Mat {
    Mat::from_fn(n, r, |_, _| rng.sample(StandardNormal))
}

/// Orthonormal columns by modified Gram-Schmidt on a Gaussian matrix, run twice.
pub fn random_stiefel<R: Rng>(n: usize, r: usize, rng: &mut R) -> Mat {
    let mut q = randn(n, r, rng);
    for _ in 0..2 {
        for j in 0..r {
            for k in 0..j {
                let c = q.column(k).dot(&q.column(j));
                let qk = q.column(k).clone_owned();
                q.column_mut(j).axpy(-c, &qk, 1.0);
            }
            let nrm = q.column(j).norm();
            q.column_mut(j).scale_mut(1.0 / nrm);
        }
    }
    q
}

/// `Y - X (X^T Y + Y^T X) / 2`.
pub fn tangent_part(x: &Mat, y: &Mat) -> Mat {
    let s = x.transpose() * y;
    y - x * ((&s + s.transpose()) * 0.5)
}

pub fn random_tangent<R: Rng>(x: &Mat, rng: &mut R) -> Mat {
    tangent_part(x, &randn(x.nrows(), x.ncols(), rng))
}

pub fn soft(v: f64, thr: f64) -> f64 {
    if v > thr {
        v - thr
    } else if v < -thr {
        v + thr
    } else {
        0.0
    }
}

pub fn l1(m: &Mat) -> f64 {
    m.iter().map(|v| v.abs()).sum()
}

/// Orthonormal basis (as columns of an nr x d matrix acting on column-major
/// vec) of the tangent space `{V : V^T X + X^T V = 0}`.
pub fn tangent_basis(x: &Mat) -> Mat {
    let (n, r) = x.shape();
    let p = r * (r + 1) / 2;
    // Row (i, j), i >= j, maps vec(V) to (V^T X + X^T V)_{ij}.
    let mut c = Mat::zeros(p, n * r);
    let mut row = 0;
    for j in 0..r {
        for i in j..r {
            for a in 0..n {
                // (V^T X)_{ij} = sum_a V_{a i} X_{a j}; (X^T V)_{ij} = sum_a X_{a i} V_{a j}
                c[(row, i * n + a)] += x[(a, j)];
                c[(row, j * n + a)] += x[(a, i)];
            }
            row += 1;
        }
    }
    // Null space of C: eigenvectors of C^T C with zero eigenvalue.
    let eig = (c.transpose() * &c).symmetric_eigen();
    let mut idx: Vec<usize> = (0..n * r).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let d = n * r - p;
    let u = eig.eigenvectors;
    Mat::from_fn(n * r, d, |i, k| u[(i, idx[k])])
}

fn vec_of(m: &Mat) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

fn mat_of(v: &DVector<f64>, n: usize, r: usize) -> Mat {
    Mat::from_column_slice(n, r, v.as_slice())
}

/// The subproblem objective `<G, V> + ||V||^2 / (2t) + mu ||X + V||_1`.
pub fn subproblem_objective(x: &Mat, g: &Mat, t: f64, mu: f64, v: &Mat) -> f64 {
    g.dot(v) + v.norm_squared() / (2.0 * t) + mu * l1(&(x + v))
}

/// r = 1 subproblem solved through its scalar dual by bisection.
///
/// The stationarity condition gives `V(l) = soft(x - t g + 2 t l x, t mu) - x`,
/// and `e(l) = 2 x^T V(l)` is nondecreasing; its root yields the solution.
pub fn scalar_dual_bisection(x: &DVector<f64>, g: &DVector<f64>, t: f64, mu: f64) -> DVector<f64> {
    let v_of = |l: f64| -> DVector<f64> {
        DVector::from_iterator(
            x.len(),
            x.iter().zip(g.iter()).map(|(&xi, &gi)| soft(xi - t * gi + 2.0 * t * l * xi, t * mu) - xi),
        )
    };
    let e = |l: f64| 2.0 * x.dot(&v_of(l));
    let (mut lo, mut hi) = (-1.0, 1.0);
    while e(lo) > 0.0 {
        lo *= 2.0;
    }
    while e(hi) < 0.0 {
        hi *= 2.0;
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if e(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // Interpolate inside the final bracket; e is affine between kinks.
    let (elo, ehi) = (e(lo), e(hi));
    let l = if ehi > elo { lo + (hi - lo) * (-elo / (ehi - elo)) } else { 0.5 * (lo + hi) };
    v_of(l)
}

/// Tangent subproblem with an l1 term solved in tangent coordinates by ADMM.
///
/// With `V = B z` and the split `w = vec(X) + B z` the iteration is
/// `(1/t + rho) z = -B^T g - rho B^T (x - w + u)`, `w = soft(x + B z + u, mu / rho)`,
/// `u <- u + x + B z - w`. Returns the feasible `V = B z`.
pub fn tangent_admm(x: &Mat, g: &Mat, t: f64, mu: f64, iters: usize) -> Mat {
    let (n, r) = x.shape();
    let b = tangent_basis(x);
    let xv = vec_of(x);
    let c = b.transpose() * vec_of(g);
    let rho = 1.0 / t;
    let mut z = DVector::zeros(b.ncols());
    let mut w = xv.clone();
    let mut u = DVector::zeros(n * r);
    for _ in 0..iters {
        let rhs = -&c - b.transpose() * ((&xv - &w + &u) * rho);
        z = rhs / (1.0 / t + rho);
        let bz = &b * &z;
        let pre = &xv + &bz + &u;
        w = pre.map(|v| soft(v, mu / rho));
        u += &xv + &bz - &w;
    }
    mat_of(&(&b * z), n, r)
}

/// Packed Jacobian of `L -> vech(A(V(L)))` for an l1 term from explicit duplication
/// and Kronecker matrices: `4t U^+ (I (x) X^T) diag(mask) (I (x) X) U`.
pub fn kron_packed_jacobian(x: &Mat, mask: &Mat, t: f64) -> Mat {
    let (n, r) = x.shape();
    let p = r * (r + 1) / 2;
    let mut u = Mat::zeros(r * r, p);
    let mut k = 0;
    for j in 0..r {
        for i in j..r {
            u[(j * r + i, k)] = 1.0;
            u[(i * r + j, k)] = 1.0;
            k += 1;
        }
    }
    let u_pinv = (u.transpose() * &u).try_inverse().unwrap() * u.transpose();
    let mut ix = Mat::zeros(n * r, r * r);
    for blk in 0..r {
        ix.view_mut((blk * n, blk * r), (n, r)).copy_from(x);
    }
    let d = Mat::from_diagonal(&vec_of(mask));
    u_pinv * ix.transpose() * d * ix * u * (4.0 * t)
}

/// Central-difference gradient of a scalar function of a matrix.
pub fn fd_gradient(f: impl Fn(&Mat) -> f64, x: &Mat, h: f64) -> Mat {
    let mut g = Mat::zeros(x.nrows(), x.ncols());
    for i in 0..x.nrows() {
        for j in 0..x.ncols() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[(i, j)] += h;
            xm[(i, j)] -= h;
            g[(i, j)] = (f(&xp) - f(&xm)) / (2.0 * h);
        }
    }
    g
}

/// Sum of the r largest eigenvalues of a symmetric matrix.
pub fn top_eigen_sum(m: &Mat, r: usize) -> f64 {
    let mut ev: Vec<f64> = m.clone().symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| b.partial_cmp(a).unwrap());
    ev[..r].iter().sum()
}

/// Orthonormal basis of the r-dimensional dominant eigenspace.
pub fn top_eigenvectors(m: &Mat, r: usize) -> Mat {
    let eig = m.clone().symmetric_eigen();
    let mut idx: Vec<usize> = (0..m.nrows()).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    Mat::from_fn(m.nrows(), r, |i, k| eig.eigenvectors[(i, idx[k])])
}

/// Eigenvalues `(1/h^2)(1 - cos(2 pi k / n))` of the periodic three-point
/// discretization of `-1/2 d^2/dx^2` on a domain of the given length.
pub fn fe_eigenvalues(n: usize, length: f64) -> Vec<f64> {
    let h = length / n as f64;
    (0..n)
        .map(|k| (1.0 - (2.0 * std::f64::consts::PI * k as f64 / n as f64).cos()) / (h * h))
        .collect()
}

/// `||X X^T - Y Y^T||_F^2` through the identity `2r - 2 ||X^T Y||_F^2`.
pub fn subspace_dist_sq(x: &Mat, y: &Mat) -> f64 {
    let r = x.ncols() as f64;
    (2.0 * r - 2.0 * (x.transpose() * y).norm_squared()).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tangent_basis_is_orthonormal_and_tangent() {
        let mut g = rng(1);
        let x = random_stiefel(5, 2, &mut g);
        let b = tangent_basis(&x);
        assert_eq!(b.ncols(), 10 - 3);
        assert!((b.transpose() * &b - Mat::identity(7, 7)).norm() < 1e-12);
        for k in 0..b.ncols() {
            let v = Mat::from_column_slice(5, 2, b.column(k).as_slice());
            let s = v.transpose() * &x;
            assert!((&s + s.transpose()).norm() < 1e-12);
        }
    }

    #[test]
    fn bisection_smooth_case_is_projected_gradient_step() {
        let mut g = rng(2);
        let x = random_stiefel(6, 1, &mut g);
        let grad = randn(6, 1, &mut g);
        let v = scalar_dual_bisection(&x.column(0).clone_owned(), &grad.column(0).clone_owned(), 0.3, 0.0);
        let expect = tangent_part(&x, &grad) * -0.3;
        assert!((Mat::from_column_slice(6, 1, v.as_slice()) - expect).norm() < 1e-12);
    }

    #[test]
    fn admm_agrees_with_bisection_at_r1() {
        let mut g = rng(3);
        let x = random_stiefel(7, 1, &mut g);
        let grad = randn(7, 1, &mut g);
        let (t, mu) = (0.4, 0.7);
        let v1 = scalar_dual_bisection(&x.column(0).clone_owned(), &grad.column(0).clone_owned(), t, mu);
        let v2 = tangent_admm(&x, &grad, t, mu, 20000);
        assert!((Mat::from_column_slice(7, 1, v1.as_slice()) - v2).norm() < 1e-9);
    }

    #[test]
    fn fd_gradient_of_quadratic() {
        let m = Mat::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let x = Mat::from_row_slice(2, 1, &[0.3, -0.7]);
        let g = fd_gradient(|y| (y.transpose() * &m * y)[(0, 0)], &x, 1e-5);
        assert!((g - &m * &x * 2.0).norm() < 1e-8);
    }

    #[test]
    fn fe_eigenvalue_formula_max_for_even_n() {
        let n = 64;
        let ev = fe_eigenvalues(n, 50.0);
        let top = ev.iter().cloned().fold(f64::MIN, f64::max);
        assert!((top - 2.0 * (n * n) as f64 / 2500.0).abs() < 1e-12);
    }
}
