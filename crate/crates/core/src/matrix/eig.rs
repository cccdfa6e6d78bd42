use super::Matrix;
use crate::error::{Error, Result};

/// Eigendecomposition of a symmetric matrix: `a = q · diag(lambda) · qᵀ`,
/// `lambda` sorted descending.
#[derive(Debug, Clone)]
pub struct SymEig {
    pub q: Matrix,
    pub lambda: Vec<f64>,
}

impl SymEig {
    pub fn reconstruct(&self) -> Matrix {
        let mut ql = self.q.clone();
        for j in 0..ql.cols() {
            for i in 0..ql.rows() {
                ql[(i, j)] *= self.lambda[j];
            }
        }
        ql.matmul_tr(&self.q)
    }
}

const MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi eigenvalue iteration.
pub fn sym_eig(a: &Matrix) -> Result<SymEig> {
    let n = a.ensure_square("sym_eig input")?;
    let norm = a.frobenius_norm();
    let asym = a.dist(&a.transpose());
    if asym > 1e-10 * norm {
        return Err(Error::Precondition(format!(
            "sym_eig needs a symmetric matrix, ‖a − aᵀ‖_F = {asym:e}"
        )));
    }
    let mut m = Matrix::from_fn(n, n, |i, j| 0.5 * (a[(i, j)] + a[(j, i)]));
    let mut q = Matrix::identity(n);

    let off = |m: &Matrix| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += m[(i, j)] * m[(i, j)];
                }
            }
        }
        s.sqrt()
    };

    let mut sweeps = 0;
    while off(&m) > f64::EPSILON * norm {
        sweeps += 1;
        if sweeps > MAX_SWEEPS {
            return Err(Error::NoConvergence {
                op: "sym_eig",
                iterations: MAX_SWEEPS,
                residual: off(&m),
            });
        }
        for p in 0..n {
            for r in p + 1..n {
                let apq = m[(p, r)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[(r, r)] - m[(p, p)]) / (2.0 * apq);
                let t = if theta == 0.0 {
                    1.0
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                // m ← Jᵀ m J with J the (p, r) rotation
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkr = m[(k, r)];
                    m[(k, p)] = c * mkp - s * mkr;
                    m[(k, r)] = s * mkp + c * mkr;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mrk = m[(r, k)];
                    m[(p, k)] = c * mpk - s * mrk;
                    m[(r, k)] = s * mpk + c * mrk;
                }
                m[(p, r)] = 0.0;
                m[(r, p)] = 0.0;
                for k in 0..n {
                    let qkp = q[(k, p)];
                    let qkr = q[(k, r)];
                    q[(k, p)] = c * qkp - s * qkr;
                    q[(k, r)] = s * qkp + c * qkr;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(j, j)].total_cmp(&m[(i, i)]));
    let lambda = order.iter().map(|&i| m[(i, i)]).collect();
    let q = Matrix::from_fn(n, n, |i, k| q[(i, order[k])]);
    Ok(SymEig { q, lambda })
}
