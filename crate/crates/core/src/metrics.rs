//! Projection and identification error metrics.
//!
//! Sequences are stored as matrices with one row per time step and one
//! column per channel.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::schur::eigenvalues;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nsfe: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nssr: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub msvr: Option<f64>,
}

fn same_shape(a: &Matrix, x: &Matrix, what: &str) -> Result<()> {
    if a.shape() != x.shape() {
        return Err(Error::dim(format!(
            "{what}: shapes {:?} and {:?} differ",
            a.shape(),
            x.shape()
        )));
    }
    Ok(())
}

/// Normalized squared Frobenius error `‖a − x‖²_F / ‖a‖²_F`.
pub fn nsfe(a: &Matrix, x: &Matrix) -> Result<f64> {
    same_shape(a, x, "nsfe")?;
    let den = a.frobenius_sq();
    if den == 0.0 {
        return Err(Error::Domain("nsfe reference matrix is zero".into()));
    }
    Ok(a.dist_sq(x) / den)
}

/// Minimum-cost perfect matching on a square cost matrix (Hungarian method
/// with row/column potentials). `perm[i]` is the column assigned to row `i`.
pub fn assignment_min(cost: &Matrix) -> Result<(Vec<usize>, f64)> {
    let n = cost.ensure_square("assignment cost")?;
    if !cost.is_finite() {
        return Err(Error::Domain("assignment cost has non-finite entries".into()));
    }
    // 1-based arrays; index 0 is the virtual start column
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut perm = vec![0; n];
    for j in 1..=n {
        perm[owner[j] - 1] = j - 1;
    }
    let total = perm.iter().enumerate().map(|(i, &j)| cost[(i, j)]).sum();
    Ok((perm, total))
}

/// Spectral distance between two eigenvalue multisets under the best
/// one-to-one pairing, relative to the energy of `reference`.
pub fn spectral_distance(reference: &[Complex64], other: &[Complex64]) -> Result<f64> {
    if reference.len() != other.len() {
        return Err(Error::dim("spectra have different sizes"));
    }
    let den: f64 = reference.iter().map(|z| z.norm_sqr()).sum();
    if den == 0.0 {
        return Err(Error::Domain("nssr reference spectrum is zero".into()));
    }
    let n = reference.len();
    let cost = Matrix::from_fn(n, n, |i, j| (other[i] - reference[j]).norm_sqr());
    let (_, total) = assignment_min(&cost)?;
    Ok(total / den)
}

/// Normalized squared spectral residual between `a` and `x`.
pub fn nssr(a: &Matrix, x: &Matrix) -> Result<f64> {
    same_shape(a, x, "nssr")?;
    a.ensure_square("nssr input")?;
    let la = eigenvalues(a)?;
    let lx = eigenvalues(x)?;
    spectral_distance(&la.eigenvalues, &lx.eigenvalues)
}

/// Mean squared violation of the unit-circle bound over a spectrum.
pub fn msvr_of(spectrum: &[Complex64]) -> f64 {
    if spectrum.is_empty() {
        return 0.0;
    }
    let s: f64 = spectrum
        .iter()
        .map(|z| (z.norm() - 1.0).max(0.0).powi(2))
        .sum();
    s / spectrum.len() as f64
}

pub fn msvr(a: &Matrix) -> Result<f64> {
    a.ensure_square("msvr input")?;
    Ok(msvr_of(&eigenvalues(a)?.eigenvalues))
}

/// Output error normalized by the per-channel variance of the reference `y`.
pub fn nmse(y: &Matrix, y_hat: &Matrix) -> Result<f64> {
    same_shape(y, y_hat, "nmse")?;
    let (t, c) = y.shape();
    let mut num = 0.0;
    let mut den = 0.0;
    for j in 0..c {
        let mean = (0..t).map(|k| y[(k, j)]).sum::<f64>() / t as f64;
        for k in 0..t {
            num += (y[(k, j)] - y_hat[(k, j)]).powi(2);
            den += (y[(k, j)] - mean).powi(2);
        }
    }
    if den == 0.0 {
        return Err(Error::Domain("nmse reference sequence is constant".into()));
    }
    Ok(num / den)
}
