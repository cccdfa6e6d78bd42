//! Nearest Schur-stable 2×2 matrices and the truncated quasi-triangular
//! projection built on them.
//!
//! For a 2×2 block the nearest stable matrix lies in a finite candidate set of
//! at most 15 closed-form matrices. A full state matrix is stabilized by
//! projecting each diagonal block of its real Schur factor independently and
//! recomposing with the unchanged orthogonal factor.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{quartic_real_roots, svd_2x2, Matrix};
use crate::schur::{block_ranges, schur_decompose, SchurForm, BLOCK_2X2};

/// Relative slack on the stability inequalities, absorbing roundoff in
/// determinants and traces of candidates that sit exactly on the boundary.
pub const STABILITY_TOL: f64 = 1e-12;

/// Eigenvalues of a 2×2 matrix from its trace and determinant, larger real
/// part first; a conjugate pair has positive imaginary part first.
pub fn eig_2x2(a: &Matrix) -> Result<(Complex64, Complex64)> {
    if a.shape() != (2, 2) {
        return Err(Error::dim(format!("eig_2x2 needs a 2x2 matrix, got {:?}", a.shape())));
    }
    let half_tr = 0.5 * (a[(0, 0)] + a[(1, 1)]);
    // (tr/2)² − det written without cancellation in the diagonal part
    let half_diff = 0.5 * (a[(0, 0)] - a[(1, 1)]);
    let disc = half_diff * half_diff + a[(0, 1)] * a[(1, 0)];
    if disc >= 0.0 {
        let r = disc.sqrt();
        Ok((Complex64::new(half_tr + r, 0.0), Complex64::new(half_tr - r, 0.0)))
    } else {
        let r = (-disc).sqrt();
        Ok((Complex64::new(half_tr, r), Complex64::new(half_tr, -r)))
    }
}

fn rotation(alpha: f64) -> Matrix {
    let (s, c) = alpha.sin_cos();
    Matrix::from_rows(&[[c, -s], [s, c]])
}

/// Angle `α ∈ [0, π/2)` and rotation `g = U(α)` such that `gᵀ·a·g` has equal
/// diagonal entries.
pub fn equalizing_rotation(a: &Matrix) -> Result<(f64, Matrix)> {
    if a.shape() != (2, 2) {
        return Err(Error::dim(format!(
            "equalizing_rotation needs a 2x2 matrix, got {:?}",
            a.shape()
        )));
    }
    // (gᵀag)₁₁ − (gᵀag)₂₂ = cos2α·(a₁₁ − a₂₂) + sin2α·(a₁₂ + a₂₁)
    let d = a[(0, 0)] - a[(1, 1)];
    let e = a[(0, 1)] + a[(1, 0)];
    if d == 0.0 {
        return Ok((0.0, Matrix::identity(2)));
    }
    let mut two_alpha = (-d).atan2(e).rem_euclid(std::f64::consts::PI);
    if two_alpha >= std::f64::consts::PI {
        two_alpha = 0.0;
    }
    let alpha = 0.5 * two_alpha;
    Ok((alpha, rotation(alpha)))
}

/// Critical points `(t, 1/t)` of `(τ₁ − σ₁)² + (τ₂ − σ₂)²` on `τ₁τ₂ = 1`,
/// i.e. the real roots of `t⁴ − σ₁t³ + σ₂t − 1`.
pub fn critical_points(sigma1: f64, sigma2: f64) -> Vec<(f64, f64)> {
    quartic_real_roots(-sigma1, sigma2, -1.0)
        .into_iter()
        .map(|t| (t, 1.0 / t))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Original,
    APlus,
    AMinus,
    A0,
    PlusUpper,
    PlusLower,
    MinusUpper,
    MinusLower,
    AStar,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub matrix: Matrix,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub candidates: Vec<Candidate>,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }
}

/// Schur stability of a 2×2 matrix via `det ≤ 1` and `±tr ≤ 1 + det`.
///
/// Equivalent to both eigenvalues lying in the closed unit disk, but well
/// conditioned for defective matrices, whose eigenvalues move by the square
/// root of any perturbation.
pub fn is_stable_2x2(x: &Matrix) -> bool {
    let tr = x[(0, 0)] + x[(1, 1)];
    let det = x[(0, 0)] * x[(1, 1)] - x[(0, 1)] * x[(1, 0)];
    let tol = STABILITY_TOL * (1.0 + x.frobenius_sq());
    det <= 1.0 + tol && tr <= 1.0 + det + tol && -tr <= 1.0 + det + tol
}

fn rank_one_shift(a: &Matrix, shift: f64) -> Matrix {
    let mut m = a.clone();
    m[(0, 0)] -= shift;
    m[(1, 1)] -= shift;
    let s = svd_2x2(&m).expect("2x2 input");
    let mut out = Matrix::identity(2).scale(shift);
    out.add_outer(s.sigma1, &s.u.column(0), &s.v.column(0));
    out
}

/// The finite candidate set that contains a nearest Schur-stable matrix to `a`.
pub fn candidate_set(a: &Matrix) -> Result<CandidateSet> {
    if a.shape() != (2, 2) {
        return Err(Error::dim(format!("candidate_set needs a 2x2 matrix, got {:?}", a.shape())));
    }
    let mut candidates = Vec::with_capacity(15);
    let mut push = |matrix: Matrix, provenance| candidates.push(Candidate { matrix, provenance });

    push(a.clone(), Provenance::Original);
    // nearest matrices with an eigenvalue at +1 and at −1
    push(rank_one_shift(a, 1.0), Provenance::APlus);
    push(rank_one_shift(a, -1.0), Provenance::AMinus);

    // nearest matrices with determinant 1, in the SVD frame of a
    let s0 = svd_2x2(a)?;
    for (t1, t2) in critical_points(s0.sigma1, s0.sigma2) {
        let mut m = Matrix::zeros(2, 2);
        m.add_outer(t1, &s0.u.column(0), &s0.v.column(0));
        m.add_outer(t2, &s0.u.column(1), &s0.v.column(1));
        push(m, Provenance::A0);
    }

    // double eigenvalue ±1 and the ±1 pair, in the equal-diagonal frame
    let (_, g) = equalizing_rotation(a)?;
    let check = g.tr_matmul(a).matmul(&g);
    let (c12, c21) = (check[(0, 1)], check[(1, 0)]);
    let back = |x: Matrix| g.matmul(&x).matmul_tr(&g);
    for (sign, upper, lower) in [
        (1.0, Provenance::PlusUpper, Provenance::PlusLower),
        (-1.0, Provenance::MinusUpper, Provenance::MinusLower),
    ] {
        push(back(Matrix::from_rows(&[[sign, c12], [0.0, sign]])), upper);
        push(back(Matrix::from_rows(&[[sign, 0.0], [c21, sign]])), lower);
    }
    for (t1, t2) in critical_points(c12, c21) {
        push(back(Matrix::from_rows(&[[0.0, t1], [t2, 0.0]])), Provenance::AStar);
    }

    Ok(CandidateSet { candidates })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StableProjection {
    pub projected: Matrix,
    pub distance_sq: f64,
    pub changed: bool,
    pub provenance: Provenance,
}

/// Nearest Schur-stable 2×2 matrix. Equidistant candidates resolve to the
/// earliest in enumeration order.
pub fn project_block(a: &Matrix) -> Result<StableProjection> {
    if a.shape() != (2, 2) {
        return Err(Error::dim(format!("project_block needs a 2x2 matrix, got {:?}", a.shape())));
    }
    if is_stable_2x2(a) {
        return Ok(StableProjection {
            projected: a.clone(),
            distance_sq: 0.0,
            changed: false,
            provenance: Provenance::Original,
        });
    }
    let set = candidate_set(a)?;
    let mut best: Option<(f64, &Candidate)> = None;
    for c in set.candidates.iter().skip(1) {
        if !c.matrix.is_finite() || !is_stable_2x2(&c.matrix) {
            continue;
        }
        let d = c.matrix.dist_sq(a);
        if best.map_or(true, |(bd, _)| d < bd) {
            best = Some((d, c));
        }
    }
    let (distance_sq, c) = best.ok_or_else(|| {
        Error::Precondition("candidate set contains no stable member".into())
    })?;
    Ok(StableProjection {
        projected: c.matrix.clone(),
        distance_sq,
        changed: true,
        provenance: c.provenance,
    })
}

/// Clips a real eigenvalue into `[−1, 1]`.
pub fn project_scalar(t: f64) -> f64 {
    t / t.abs().max(1.0)
}

fn check_structure(t: &Matrix, b: &[u8]) -> Result<()> {
    let n = t.ensure_square("quasi-triangular factor")?;
    if b.len() != n {
        return Err(Error::Structure(format!(
            "block pattern has {} entries for a {n}x{n} factor",
            b.len()
        )));
    }
    for i in 0..n {
        for j in 0..i {
            let inside = i == j + 1 && b[j] == BLOCK_2X2;
            if !inside && t[(i, j)] != 0.0 {
                return Err(Error::Structure(format!(
                    "entry ({i}, {j}) lies below the declared block diagonal but is {}",
                    t[(i, j)]
                )));
            }
        }
    }
    Ok(())
}

/// Projects every diagonal block of a quasi-triangular `t` onto the stable
/// set, leaving off-diagonal blocks alone. Also reports whether any block moved.
pub fn project_quasi_triangular_flagged(t: &Matrix, b: &[u8]) -> Result<(Matrix, bool)> {
    check_structure(t, b)?;
    let mut out = t.clone();
    let mut changed = false;
    for blk in block_ranges(b)? {
        let k = blk.start;
        if blk.size == 1 {
            let v = project_scalar(t[(k, k)]);
            if v != t[(k, k)] {
                out[(k, k)] = v;
                changed = true;
            }
        } else {
            let p = project_block(&t.block(k, k, 2, 2))?;
            if p.changed {
                out.set_block(k, k, &p.projected);
                changed = true;
            }
        }
    }
    Ok((out, changed))
}

pub fn project_quasi_triangular(t: &Matrix, b: &[u8]) -> Result<Matrix> {
    project_quasi_triangular_flagged(t, b).map(|(m, _)| m)
}

/// Stabilizes a state matrix through its real Schur form, keeping the
/// orthogonal factor. Already-stable input is returned bitwise unchanged.
pub fn project_state_matrix(a: &Matrix) -> Result<(Matrix, SchurForm)> {
    let form = schur_decompose(a)?;
    let (t_hat, changed) = project_quasi_triangular_flagged(&form.t, &form.b)?;
    if !changed {
        return Ok((a.clone(), form));
    }
    let a_hat = form.z.matmul(&t_hat).matmul_tr(&form.z);
    Ok((a_hat, form))
}
