//! Nearest orthogonal matrix in Frobenius norm.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{inverse, jacobi_svd, sym_eig, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrthoMethod {
    Svd,
    EigSqrt,
    Iterative,
}

impl fmt::Display for OrthoMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OrthoMethod::Svd => "svd",
            OrthoMethod::EigSqrt => "eig_sqrt",
            OrthoMethod::Iterative => "iterative",
        })
    }
}

impl FromStr for OrthoMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "svd" => Ok(OrthoMethod::Svd),
            "eig" | "eig_sqrt" | "eig-sqrt" => Ok(OrthoMethod::EigSqrt),
            "iter" | "iterative" => Ok(OrthoMethod::Iterative),
            other => Err(Error::Domain(format!("unknown orthogonalization method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrthoProjection {
    pub z_hat: Matrix,
    pub method: OrthoMethod,
    /// `‖ẑᵀẑ − I‖²_F / n`
    pub ortho_error: f64,
    /// `‖z − ẑ‖²_F / ‖z‖²_F`
    pub distance: f64,
}

impl OrthoProjection {
    fn new(z: &Matrix, z_hat: Matrix, method: OrthoMethod) -> Self {
        let n = z.rows() as f64;
        let ortho_error = z_hat.orthogonality_defect().powi(2) / n;
        let zn = z.frobenius_sq();
        let distance = if zn == 0.0 { 0.0 } else { z.dist_sq(&z_hat) / zn };
        OrthoProjection {
            z_hat,
            method,
            ortho_error,
            distance,
        }
    }
}

const RANK_TOL: f64 = 1e-12;

/// `ẑ = U·Vᵀ` from the singular value decomposition of `z`.
pub fn nearest_orthogonal_svd(z: &Matrix) -> Result<OrthoProjection> {
    z.ensure_square("nearest_orthogonal input")?;
    let s = jacobi_svd(z)?;
    let smax = s.sigma[0];
    let smin = *s.sigma.last().expect("nonempty");
    if smax == 0.0 || smin <= RANK_TOL * smax {
        return Err(Error::Singular { value: smin });
    }
    let z_hat = s.u.matmul_tr(&s.v);
    Ok(OrthoProjection::new(z, z_hat, OrthoMethod::Svd))
}

/// `ẑ = z·(zᵀz)^{-1/2}` with the inverse square root taken through the
/// symmetric eigendecomposition of `zᵀz`.
pub fn nearest_orthogonal_eig(z: &Matrix) -> Result<OrthoProjection> {
    let n = z.ensure_square("nearest_orthogonal input")?;
    let x = z.tr_matmul(z);
    let e = sym_eig(&x)?;
    let lmax = e.lambda[0];
    let lmin = e.lambda[n - 1];
    if lmax <= 0.0 || lmin <= RANK_TOL * RANK_TOL * lmax {
        return Err(Error::Singular { value: lmin });
    }
    let mut qs = e.q.clone();
    for j in 0..n {
        let f = 1.0 / e.lambda[j].sqrt();
        for i in 0..n {
            qs[(i, j)] *= f;
        }
    }
    let inv_sqrt = qs.matmul_tr(&e.q);
    Ok(OrthoProjection::new(z, z.matmul(&inv_sqrt), OrthoMethod::EigSqrt))
}

/// `ẑ = z·Ξ` where `Ξ` approximates `(zᵀz)^{-1/2}` after `iters` steps of
///
/// ```text
/// Ξ_{r+1} = Ξ_r (I + E_r),            Ξ_0 = I
/// E_{r+1} = E_r² (2I − E_r²)^{-1},    E_0 = (I − X)(I + X)^{-1}
/// ```
///
/// which keeps `Ξ_r² X = (I − E_r)(I + E_r)^{-1}` and converges quadratically
/// once `‖E_r‖ < 1`.
pub fn nearest_orthogonal_iter(z: &Matrix, iters: usize) -> Result<OrthoProjection> {
    let n = z.ensure_square("nearest_orthogonal input")?;
    let x = z.tr_matmul(z);
    let id = Matrix::identity(n);
    let mut e = (&id - &x).matmul(&inverse(&(&id + &x))?);
    let mut xi = id.clone();
    for _ in 0..iters {
        if e.max_abs() == 0.0 {
            break;
        }
        xi = xi.matmul(&(&id + &e));
        let e2 = e.matmul(&e);
        let denom = &id.scale(2.0) - &e2;
        e = e2.matmul(&inverse(&denom)?);
    }
    Ok(OrthoProjection::new(z, z.matmul(&xi), OrthoMethod::Iterative))
}

pub fn nearest_orthogonal(z: &Matrix, method: OrthoMethod, iters: Option<usize>) -> Result<OrthoProjection> {
    match method {
        OrthoMethod::Svd => nearest_orthogonal_svd(z),
        OrthoMethod::EigSqrt => nearest_orthogonal_eig(z),
        OrthoMethod::Iterative => nearest_orthogonal_iter(z, iters.unwrap_or(z.rows())),
    }
}
