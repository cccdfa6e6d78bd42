#![allow(dead_code)]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use schurss::matrix::{qr_factor, Matrix};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| {
        let z: f64 = StandardNormal.sample(r);
        z
    })
}

pub fn random_orthogonal(r: &mut ChaCha8Rng, n: usize) -> Matrix {
    qr_factor(&gaussian(r, n, n)).unwrap().0
}

/// `U·diag(σ)·Vᵀ` with singular values log-uniform in `[1, cond]`.
pub fn with_condition(r: &mut ChaCha8Rng, n: usize, cond: f64) -> Matrix {
    use rand::Rng;
    let u = random_orthogonal(r, n);
    let v = random_orthogonal(r, n);
    let mut s: Vec<f64> = (0..n).map(|_| cond.powf(r.gen_range(0.0..1.0))).collect();
    s[0] = 1.0;
    if n > 1 {
        s[1] = cond;
    }
    u.matmul(&Matrix::from_diag(&s)).matmul_tr(&v)
}

/// Plain forward loss, written independently of the library's adjoint code.
pub fn reference_loss(a: &Matrix, b: &Matrix, c: &Matrix, d: &Matrix, u: &Matrix, y: &Matrix) -> f64 {
    let n = a.rows();
    let mut x = vec![0.0; n];
    let mut total = 0.0;
    for k in 0..u.rows() {
        for i in 0..c.rows() {
            let mut yk = 0.0;
            for j in 0..n {
                yk += c[(i, j)] * x[j];
            }
            for j in 0..u.cols() {
                yk += d[(i, j)] * u[(k, j)];
            }
            total += (yk - y[(k, i)]).powi(2);
        }
        let mut next = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                next[i] += a[(i, j)] * x[j];
            }
            for j in 0..u.cols() {
                next[i] += b[(i, j)] * u[(k, j)];
            }
        }
        x = next;
    }
    total / u.rows() as f64
}
