use super::{dot, norm2, Matrix};
use crate::error::{Error, Result};

/// Closed-form SVD of a 2×2 matrix: `a = u · diag(sigma1, sigma2) · vᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Svd2x2 {
    pub u: Matrix,
    pub sigma1: f64,
    pub sigma2: f64,
    pub v: Matrix,
}

impl Svd2x2 {
    pub fn reconstruct(&self) -> Matrix {
        let s = Matrix::from_diag(&[self.sigma1, self.sigma2]);
        (&self.u * &s).matmul_tr(&self.v)
    }
}

fn rotation(angle: f64) -> Matrix {
    let (s, c) = angle.sin_cos();
    Matrix::from_rows(&[[c, -s], [s, c]])
}

/// Flips column pairs of `(u, v)` so that each column of `u` has a
/// nonnegative leading entry (falling back to the second entry when the
/// first is zero). The product `u Σ vᵀ` is unchanged.
fn fix_signs(u: &mut Matrix, v: &mut Matrix) {
    for j in 0..u.cols() {
        let lead = if u[(0, j)] != 0.0 { u[(0, j)] } else { u[(1, j)] };
        if lead < 0.0 {
            for i in 0..u.rows() {
                u[(i, j)] = -u[(i, j)];
            }
            for i in 0..v.rows() {
                v[(i, j)] = -v[(i, j)];
            }
        }
    }
}

/// SVD of a 2×2 matrix via the rotation-angle decomposition
/// `a = R(φ) · diag(q + r, q − r) · R(θ)`.
pub fn svd_2x2(a: &Matrix) -> Result<Svd2x2> {
    if a.shape() != (2, 2) {
        return Err(Error::dim(format!("svd_2x2 expects 2x2, got {:?}", a.shape())));
    }
    let (m00, m01, m10, m11) = (a[(0, 0)], a[(0, 1)], a[(1, 0)], a[(1, 1)]);
    let e = 0.5 * (m00 + m11);
    let f = 0.5 * (m00 - m11);
    let g = 0.5 * (m10 + m01);
    let h = 0.5 * (m10 - m01);
    let q = e.hypot(h);
    let r = f.hypot(g);
    let a1 = g.atan2(f);
    let a2 = h.atan2(e);
    let theta = 0.5 * (a2 - a1);
    let phi = 0.5 * (a2 + a1);

    let mut u = rotation(phi);
    // R(θ) = vᵀ
    let mut v = rotation(theta).transpose();
    let sigma1 = q + r;
    let mut sigma2 = q - r;
    if sigma2 < 0.0 {
        sigma2 = -sigma2;
        v[(0, 1)] = -v[(0, 1)];
        v[(1, 1)] = -v[(1, 1)];
    }
    fix_signs(&mut u, &mut v);
    Ok(Svd2x2 {
        u,
        sigma1,
        sigma2,
        v,
    })
}

/// Full SVD `a = u · diag(sigma) · vᵀ` with `sigma` nonincreasing.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Matrix,
    pub sigma: Vec<f64>,
    pub v: Matrix,
}

impl Svd {
    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.u.clone();
        for j in 0..us.cols() {
            for i in 0..us.rows() {
                us[(i, j)] *= self.sigma[j];
            }
        }
        us.matmul_tr(&self.v)
    }
}

const JACOBI_MAX_SWEEPS: usize = 80;

/// One-sided (Hestenes) Jacobi SVD of a square matrix.
///
/// Columns of a working copy are rotated pairwise until mutually orthogonal;
/// the column norms are the singular values and the accumulated rotations
/// form `v`.
pub fn jacobi_svd(a: &Matrix) -> Result<Svd> {
    let n = a.ensure_square("jacobi_svd input")?;
    // Work on columns stored as rows of the transpose for contiguous access.
    let mut w = a.transpose();
    let mut vt = Matrix::identity(n);
    // pairs hover at a few ulps once orthogonal; a bare eps threshold can cycle
    let tol = 4.0 * f64::EPSILON;
    // columns below roundoff of the whole matrix are numerically zero; their
    // mutual angles are noise and would never settle
    let floor = (f64::EPSILON * a.frobenius_norm()).powi(2);
    let mut converged = n < 2;
    let mut worst = 0.0;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        worst = 0.0f64;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = dot(w.row(p), w.row(p));
                let beta = dot(w.row(q), w.row(q));
                let gamma = dot(w.row(p), w.row(q));
                if gamma == 0.0 || alpha <= floor || beta <= floor {
                    continue;
                }
                let rel = gamma.abs() / (alpha * beta).sqrt();
                worst = worst.max(rel);
                if rel <= tol {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_rows(&mut w, p, q, c, s);
                rotate_rows(&mut vt, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            op: "jacobi_svd",
            iterations: JACOBI_MAX_SWEEPS,
            residual: worst,
        });
    }

    let mut order: Vec<usize> = (0..n).collect();
    let norms: Vec<f64> = (0..n).map(|j| norm2(w.row(j))).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));

    let mut u = Matrix::zeros(n, n);
    let mut v = Matrix::zeros(n, n);
    let mut sigma = Vec::with_capacity(n);
    let mut missing = Vec::new();
    for (k, &j) in order.iter().enumerate() {
        let s = norms[j];
        sigma.push(s);
        v.set_column(k, vt.row(j));
        if s > floor.sqrt() && s > 1e-300 {
            let col: Vec<f64> = w.row(j).iter().map(|x| x / s).collect();
            u.set_column(k, &col);
        } else {
            missing.push(k);
        }
    }
    if !missing.is_empty() {
        complete_basis(&mut u, &missing);
    }
    Ok(Svd { u, sigma, v })
}

fn rotate_rows(m: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    let cols = m.cols();
    for k in 0..cols {
        let x = m[(p, k)];
        let y = m[(q, k)];
        m[(p, k)] = c * x - s * y;
        m[(q, k)] = s * x + c * y;
    }
}

/// Fills the listed columns of `u` with unit vectors orthogonal to all
/// other columns: the standard basis vector with the largest residual after
/// two Gram–Schmidt passes wins.
fn complete_basis(u: &mut Matrix, missing: &[usize]) {
    let n = u.rows();
    let mut filled: Vec<usize> = (0..u.cols()).filter(|j| !missing.contains(j)).collect();
    for &k in missing {
        let cols: Vec<Vec<f64>> = filled.iter().map(|&j| u.column(j)).collect();
        let best = (0..n)
            .map(|e| {
                let mut x = vec![0.0; n];
                x[e] = 1.0;
                for _ in 0..2 {
                    for col in &cols {
                        let d = dot(&x, col);
                        x.iter_mut().zip(col).for_each(|(xi, ci)| *xi -= d * ci);
                    }
                }
                x
            })
            .max_by(|x, y| norm2(x).total_cmp(&norm2(y)))
            .expect("n > 0");
        let nb = norm2(&best);
        u.set_column(k, &best.iter().map(|v| v / nb).collect::<Vec<_>>());
        filled.push(k);
    }
}

/// Largest singular value with its singular vector pair.
#[derive(Debug, Clone)]
pub struct SpectralNormResult {
    pub value: f64,
    pub left_vec: Vec<f64>,
    pub right_vec: Vec<f64>,
    /// False when the iteration cap was reached; `value` is then the best
    /// estimate available.
    pub converged: bool,
    pub iterations: usize,
}

/// Power iteration on `aᵀa`, stopped once the singular-triplet residual
/// `‖aᵀu − σv‖` drops below `tol · σ`.
pub fn spectral_norm(a: &Matrix, tol: f64, max_iter: usize) -> SpectralNormResult {
    let (m, n) = a.shape();
    let unit = |len: usize| {
        let mut e = vec![0.0; len];
        e[0] = 1.0;
        e
    };
    // Start from the heaviest row: ‖a·r‖ ≥ ‖r‖² > 0 for any nonzero row r.
    let start = (0..m)
        .map(|i| (i, norm2(a.row(i))))
        .max_by(|x, y| x.1.total_cmp(&y.1))
        .filter(|&(_, nr)| nr > 0.0);
    let Some((i0, nr)) = start else {
        return SpectralNormResult {
            value: 0.0,
            left_vec: unit(m),
            right_vec: unit(n),
            converged: true,
            iterations: 0,
        };
    };
    let mut v: Vec<f64> = a.row(i0).iter().map(|x| x / nr).collect();
    let mut u = a.mul_vec(&v);
    let mut sigma = norm2(&u);
    u.iter_mut().for_each(|x| *x /= sigma);

    for it in 1..=max_iter {
        let z = a.tr_mul_vec(&u);
        let resid = z
            .iter()
            .zip(&v)
            .map(|(zi, vi)| (zi - sigma * vi).powi(2))
            .sum::<f64>()
            .sqrt();
        if resid <= tol * sigma {
            return SpectralNormResult {
                value: sigma,
                left_vec: u,
                right_vec: v,
                converged: true,
                iterations: it - 1,
            };
        }
        let nz = norm2(&z);
        v = z.iter().map(|x| x / nz).collect();
        u = a.mul_vec(&v);
        sigma = norm2(&u);
        u.iter_mut().for_each(|x| *x /= sigma);
    }
    SpectralNormResult {
        value: sigma,
        left_vec: u,
        right_vec: v,
        converged: false,
        iterations: max_iter,
    }
}
