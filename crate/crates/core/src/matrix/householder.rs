use super::{norm2, Matrix};
use crate::error::{Error, Result};

/// Householder reflector `P = I − 2uuᵀ` mapping a vector onto a multiple of `e₁`.
#[derive(Debug, Clone, PartialEq)]
pub struct Reflector {
    /// Unit vector, or all zeros when no reflection is needed.
    pub u: Vec<f64>,
    /// First component of `P x`; every other component is zero.
    pub alpha: f64,
    /// Set when `x` is already a multiple of `e₁` and `P` is the identity.
    pub identity: bool,
}

/// Builds the reflector for `x`. The sign of `x₀` is copied into the shift so
/// that `u₀ = x₀ + sign(x₀)‖x‖` never cancels.
pub fn householder_reflector(x: &[f64]) -> Reflector {
    if x.iter().skip(1).all(|&v| v == 0.0) {
        return Reflector {
            u: vec![0.0; x.len()],
            alpha: x.first().copied().unwrap_or(0.0),
            identity: true,
        };
    }
    let nrm = norm2(x);
    let sign = if x[0] >= 0.0 { 1.0 } else { -1.0 };
    let mut v = x.to_vec();
    v[0] += sign * nrm;
    let vn = norm2(&v);
    for e in v.iter_mut() {
        *e /= vn;
    }
    Reflector {
        u: v,
        alpha: -sign * nrm,
        identity: false,
    }
}

impl Reflector {
    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    /// Applies `P` from the left to rows `r0..r0+len` of `m`, columns `c0..`.
    pub fn apply_left(&self, m: &mut Matrix, r0: usize, c0: usize) {
        if self.identity {
            return;
        }
        for j in c0..m.cols() {
            let s: f64 = self
                .u
                .iter()
                .enumerate()
                .map(|(k, uk)| uk * m[(r0 + k, j)])
                .sum();
            if s == 0.0 {
                continue;
            }
            for (k, uk) in self.u.iter().enumerate() {
                m[(r0 + k, j)] -= 2.0 * uk * s;
            }
        }
    }

    /// Applies `P` from the right to columns `c0..c0+len` of `m`, rows `r_lo..r_hi`.
    pub fn apply_right(&self, m: &mut Matrix, c0: usize, r_lo: usize, r_hi: usize) {
        if self.identity {
            return;
        }
        for i in r_lo..r_hi {
            let row = m.row_mut(i);
            let s: f64 = self
                .u
                .iter()
                .enumerate()
                .map(|(k, uk)| uk * row[c0 + k])
                .sum();
            if s == 0.0 {
                continue;
            }
            for (k, uk) in self.u.iter().enumerate() {
                row[c0 + k] -= 2.0 * uk * s;
            }
        }
    }
}

/// Householder QR of a square matrix. `r` has exact zeros below its diagonal.
pub fn qr_factor(a: &Matrix) -> Result<(Matrix, Matrix)> {
    let n = a.ensure_square("qr_factor input")?;
    let mut r = a.clone();
    let mut reflectors = Vec::with_capacity(n.saturating_sub(1));
    for k in 0..n.saturating_sub(1) {
        let x: Vec<f64> = (k..n).map(|i| r[(i, k)]).collect();
        let h = householder_reflector(&x);
        h.apply_left(&mut r, k, k);
        if !h.identity {
            r[(k, k)] = h.alpha;
        }
        for i in k + 1..n {
            r[(i, k)] = 0.0;
        }
        reflectors.push(h);
    }
    // Q = P₀ P₁ ⋯ applied to I, accumulated back to front.
    let mut q = Matrix::identity(n);
    for (k, h) in reflectors.iter().enumerate().rev() {
        h.apply_left(&mut q, k, k);
    }
    Ok((q, r))
}

/// Inverse of a square matrix through its Householder QR factors.
pub fn inverse(a: &Matrix) -> Result<Matrix> {
    let n = a.ensure_square("inverse input")?;
    let (q, r) = qr_factor(a)?;
    let scale = (0..n).fold(0.0f64, |m, i| m.max(r[(i, i)].abs()));
    for i in 0..n {
        if r[(i, i)].abs() <= 1e-14 * scale || scale == 0.0 {
            return Err(Error::Singular { value: r[(i, i)] });
        }
    }
    // solve R X = Qᵀ column by column
    let qt = q.transpose();
    let mut x = Matrix::zeros(n, n);
    for c in 0..n {
        for i in (0..n).rev() {
            let mut s = qt[(i, c)];
            for k in i + 1..n {
                s -= r[(i, k)] * x[(k, c)];
            }
            x[(i, c)] = s / r[(i, i)];
        }
    }
    Ok(x)
}
