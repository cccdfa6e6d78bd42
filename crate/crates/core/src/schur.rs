//! Real Schur decomposition `a = z · t · zᵀ`.
//!
//! The decomposition runs in two stages: Householder reduction to upper
//! Hessenberg form, then the explicit Francis double-step QR iteration on a
//! shrinking active window. Deflation uses the Ahues–Tisseur test on each
//! subdiagonal 2×2 window. Deflated 2×2 blocks with real eigenvalues are
//! split by one extra rotation, so a `2` in the block pattern always marks a
//! complex-conjugate pair.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{householder_reflector, qr_factor, Matrix};
use crate::stable::eig_2x2;

/// Block-pattern tag: start of a 1×1 block.
pub const BLOCK_1X1: u8 = 1;
/// Block-pattern tag: first row of a 2×2 block.
pub const BLOCK_2X2: u8 = 2;
/// Block-pattern tag: second row of a 2×2 block.
pub const BLOCK_TAIL: u8 = 0;

pub const DEFAULT_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchurForm {
    pub z: Matrix,
    pub t: Matrix,
    pub b: Vec<u8>,
}

impl SchurForm {
    pub fn reconstruct(&self) -> Matrix {
        (&self.z * &self.t).matmul_tr(&self.z)
    }

    pub fn blocks(&self) -> Result<Vec<Block>> {
        block_ranges(&self.b)
    }
}

/// A diagonal block of a quasi-triangular matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Block {
    pub start: usize,
    pub size: usize,
}

/// Parses a block-pattern vector into diagonal blocks.
pub fn block_ranges(b: &[u8]) -> Result<Vec<Block>> {
    let mut out = Vec::with_capacity(b.len());
    let mut i = 0;
    while i < b.len() {
        match b[i] {
            BLOCK_1X1 => {
                out.push(Block { start: i, size: 1 });
                i += 1;
            }
            BLOCK_2X2 if b.get(i + 1) == Some(&BLOCK_TAIL) => {
                out.push(Block { start: i, size: 2 });
                i += 2;
            }
            BLOCK_2X2 => {
                return Err(Error::Structure(format!(
                    "2x2 block opened at row {i} is not followed by a 0 tag"
                )))
            }
            tag => {
                return Err(Error::Structure(format!(
                    "unexpected block tag {tag} at row {i}"
                )))
            }
        }
    }
    Ok(out)
}

/// Eigenvalues as a conjugate-closed multiset.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub eigenvalues: Vec<Complex64>,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn max_modulus(&self) -> f64 {
        self.eigenvalues.iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    /// Checks that every eigenvalue's conjugate is present with equal multiplicity.
    pub fn is_conjugate_closed(&self) -> bool {
        let mut pending: Vec<Complex64> = Vec::new();
        for z in &self.eigenvalues {
            if z.im == 0.0 {
                continue;
            }
            if let Some(k) = pending.iter().position(|w| *w == z.conj()) {
                pending.swap_remove(k);
            } else {
                pending.push(*z);
            }
        }
        pending.is_empty()
    }
}

/// Householder reduction `a = u · h · uᵀ` with `h` upper Hessenberg.
pub fn hessenberg_reduce(a: &Matrix) -> Result<(Matrix, Matrix)> {
    let n = a.ensure_square("hessenberg_reduce input")?;
    let mut h = a.clone();
    let mut reflectors = Vec::with_capacity(n.saturating_sub(2));
    for k in 0..n.saturating_sub(2) {
        let x: Vec<f64> = (k + 1..n).map(|i| h[(i, k)]).collect();
        let p = householder_reflector(&x);
        p.apply_left(&mut h, k + 1, k);
        p.apply_right(&mut h, k + 1, 0, n);
        if !p.identity {
            h[(k + 1, k)] = p.alpha;
        }
        for i in k + 2..n {
            h[(i, k)] = 0.0;
        }
        reflectors.push(p);
    }
    let mut u = Matrix::identity(n);
    for (k, p) in reflectors.iter().enumerate().rev() {
        p.apply_left(&mut u, k + 1, k + 1);
    }
    Ok((h, u))
}

/// Ahues–Tisseur negligibility test for the subdiagonal entry `t[l, l−1]`,
/// applied to the 2×2 window `t[l−1..=l, l−1..=l]`. An absolute floor of
/// machine precision relative to `norm` catches windows whose diagonal has
/// collapsed to zero.
fn negligible(t: &Matrix, l: usize, eps: f64, norm: f64) -> bool {
    let x11 = t[(l - 1, l - 1)];
    let x12 = t[(l - 1, l)];
    let x21 = t[(l, l - 1)];
    let x22 = t[(l, l)];
    if x21 == 0.0 || x21.abs() <= f64::EPSILON * norm {
        return true;
    }
    if x21.abs() > eps * (x11.abs() + x22.abs()) {
        return false;
    }
    // |x21||x12| ≤ eps |x22||x22 − x11|, evaluated in overflow-safe form
    let ab = x21.abs().max(x12.abs());
    let ba = x21.abs().min(x12.abs());
    let aa = x22.abs().max((x11 - x22).abs());
    let bb = x22.abs().min((x11 - x22).abs());
    let s = aa + ab;
    ba * (ab / s) <= f64::MIN_POSITIVE.max(eps * (bb * (aa / s)))
}

/// Applies the plane rotation with first column `(c, s)` as a similarity on
/// rows/columns `k, k+1` of `t` and accumulates it into `z`.
fn rotate_pair(t: &mut Matrix, z: &mut Matrix, k: usize, c: f64, s: f64) {
    let n = t.rows();
    for j in 0..n {
        let x = t[(k, j)];
        let y = t[(k + 1, j)];
        t[(k, j)] = c * x + s * y;
        t[(k + 1, j)] = -s * x + c * y;
    }
    for i in 0..n {
        let x = t[(i, k)];
        let y = t[(i, k + 1)];
        t[(i, k)] = c * x + s * y;
        t[(i, k + 1)] = -s * x + c * y;
        let x = z[(i, k)];
        let y = z[(i, k + 1)];
        z[(i, k)] = c * x + s * y;
        z[(i, k + 1)] = -s * x + c * y;
    }
}

/// Classifies the deflated 2×2 block at rows `k, k+1`, splitting it into two
/// 1×1 blocks when its eigenvalues are real.
fn settle_block(t: &mut Matrix, z: &mut Matrix, b: &mut [u8], k: usize) {
    let a = t[(k, k)];
    let bb = t[(k, k + 1)];
    let c = t[(k + 1, k)];
    let d = t[(k + 1, k + 1)];
    if c == 0.0 {
        b[k] = BLOCK_1X1;
        b[k + 1] = BLOCK_1X1;
        return;
    }
    let p = 0.5 * (a - d);
    let disc = p * p + bb * c;
    if disc < 0.0 {
        b[k] = BLOCK_2X2;
        b[k + 1] = BLOCK_TAIL;
        return;
    }
    // eigenvector (λ − d, c) for the eigenvalue farthest from d
    let sgn = if p >= 0.0 { 1.0 } else { -1.0 };
    let v1 = p + sgn * disc.sqrt();
    let nv = v1.hypot(c);
    rotate_pair(t, z, k, v1 / nv, c / nv);
    t[(k + 1, k)] = 0.0;
    b[k] = BLOCK_1X1;
    b[k + 1] = BLOCK_1X1;
}

/// Explicit Francis double-step QR on an upper Hessenberg matrix.
///
/// Returns `z` relative to `h`, i.e. `h = z · t · zᵀ`. Each sweep forms
/// `M = W² − sW + tI` on the active window `W` from the trailing 2×2 shift
/// pair, factors `M = QR`, and applies `Q` as a similarity. After ten sweeps
/// without a deflation an exceptional shift is used instead.
pub fn francis_qr(h: &Matrix, eps: f64, max_sweeps: usize) -> Result<SchurForm> {
    let n = h.ensure_square("francis_qr input")?;
    let mut t = h.clone();
    let mut z = Matrix::identity(n);
    let mut b = vec![BLOCK_1X1; n];
    let norm = h.frobenius_norm();
    let mut sweeps = 0usize;
    let mut stagnant = 0usize;
    let mut p = n;

    while p > 0 {
        if p == 1 {
            b[0] = BLOCK_1X1;
            break;
        }
        let mut lo = 0;
        for l in (1..p).rev() {
            if negligible(&t, l, eps, norm) {
                t[(l, l - 1)] = 0.0;
                lo = l;
                break;
            }
        }
        if lo == p - 1 {
            b[p - 1] = BLOCK_1X1;
            p -= 1;
            stagnant = 0;
            continue;
        }
        if lo == p - 2 {
            settle_block(&mut t, &mut z, &mut b, p - 2);
            p -= 2;
            stagnant = 0;
            continue;
        }

        sweeps += 1;
        if sweeps > max_sweeps {
            return Err(Error::SchurNoConvergence {
                active: p,
                partial: Box::new(SchurForm { z, t, b }),
            });
        }
        stagnant += 1;

        let (s, det) = if stagnant % 10 == 0 {
            let w = t[(p - 1, p - 2)].abs() + t[(p - 2, p - 3)].abs();
            let x = 0.75 * w + t[(p - 1, p - 1)];
            (2.0 * x, x * x + 0.4375 * w * w)
        } else {
            let (g11, g12, g21, g22) = (
                t[(p - 2, p - 2)],
                t[(p - 2, p - 1)],
                t[(p - 1, p - 2)],
                t[(p - 1, p - 1)],
            );
            (g11 + g22, g11 * g22 - g12 * g21)
        };

        let m = p - lo;
        let w = t.block(lo, lo, m, m);
        let mut shifted = w.matmul(&w);
        shifted.axpy(-s, &w);
        for i in 0..m {
            shifted[(i, i)] += det;
        }
        let (q, _) = qr_factor(&shifted)?;

        // rows lo..p ← Qᵀ · rows, columns lo..p ← columns · Q
        let rows = t.block(lo, 0, m, n);
        t.set_block(lo, 0, &q.tr_matmul(&rows));
        let cols = t.block(0, lo, n, m);
        t.set_block(0, lo, &cols.matmul(&q));
        let zc = z.block(0, lo, n, m);
        z.set_block(0, lo, &zc.matmul(&q));

        for i in lo + 2..p {
            for j in lo..i - 1 {
                t[(i, j)] = 0.0;
            }
        }
    }

    // Everything below the declared block diagonal is exactly zero.
    for i in 0..n {
        for j in 0..i {
            let inside = i == j + 1 && b[j] == BLOCK_2X2;
            if !inside {
                t[(i, j)] = 0.0;
            }
        }
    }
    Ok(SchurForm { z, t, b })
}

/// Real Schur decomposition with default tolerance and sweep budget.
pub fn schur_decompose(a: &Matrix) -> Result<SchurForm> {
    let n = a.ensure_square("schur_decompose input")?;
    schur_decompose_with(a, DEFAULT_EPS, 30 * n.max(1))
}

pub fn schur_decompose_with(a: &Matrix, eps: f64, max_sweeps: usize) -> Result<SchurForm> {
    let (h, u) = hessenberg_reduce(a)?;
    match francis_qr(&h, eps, max_sweeps) {
        Ok(form) => Ok(SchurForm {
            z: u.matmul(&form.z),
            t: form.t,
            b: form.b,
        }),
        Err(Error::SchurNoConvergence { active, partial }) => {
            let SchurForm { z, t, b } = *partial;
            Err(Error::SchurNoConvergence {
                active,
                partial: Box::new(SchurForm {
                    z: u.matmul(&z),
                    t,
                    b,
                }),
            })
        }
        Err(e) => Err(e),
    }
}

/// Eigenvalues read off the diagonal blocks of a Schur form.
pub fn spectrum_of(form: &SchurForm) -> Result<Spectrum> {
    let mut eigenvalues = Vec::with_capacity(form.t.rows());
    for blk in form.blocks()? {
        if blk.size == 1 {
            eigenvalues.push(Complex64::new(form.t[(blk.start, blk.start)], 0.0));
        } else {
            let (l1, l2) = eig_2x2(&form.t.block(blk.start, blk.start, 2, 2))?;
            eigenvalues.push(l1);
            eigenvalues.push(l2);
        }
    }
    Ok(Spectrum { eigenvalues })
}

/// Spectrum of an arbitrary square matrix.
pub fn eigenvalues(a: &Matrix) -> Result<Spectrum> {
    spectrum_of(&schur_decompose(a)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{gaussian_matrix, rng};

    fn assert_valid(a: &Matrix, f: &SchurForm) {
        let n = a.rows();
        let nsfe = f.reconstruct().dist_sq(a) / a.frobenius_sq().max(1e-300);
        assert!(nsfe < 1e-14, "reconstruction nsfe {nsfe:e}");
        assert!(f.z.orthogonality_defect() <= 1e-8 * n as f64);
        let blocks = f.blocks().unwrap();
        for blk in &blocks {
            if blk.size == 2 {
                let (l1, _) = eig_2x2(&f.t.block(blk.start, blk.start, 2, 2)).unwrap();
                assert!(l1.im != 0.0, "2x2 block at {} has real eigenvalues", blk.start);
            }
        }
        for i in 0..n {
            for j in 0..i {
                if !(i == j + 1 && f.b[j] == BLOCK_2X2) {
                    assert_eq!(f.t[(i, j)], 0.0, "nonzero below block diagonal at ({i},{j})");
                }
            }
        }
    }

    #[test]
    fn hessenberg_leaves_2x2_alone() {
        let a = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]);
        let (h, u) = hessenberg_reduce(&a).unwrap();
        assert_eq!(h, a);
        assert_eq!(u, Matrix::identity(2));
    }

    #[test]
    fn hessenberg_of_symmetric_is_tridiagonal() {
        let mut r = rng(1);
        let g = gaussian_matrix(&mut r, 6, 6);
        let a = &g + &g.transpose();
        let (h, u) = hessenberg_reduce(&a).unwrap();
        for i in 0..6 {
            for j in i + 2..6 {
                assert!(h[(i, j)].abs() < 1e-12, "h[{i},{j}] = {}", h[(i, j)]);
            }
        }
        assert!((&(&u * &h) * &u.transpose()).dist(&a) < 1e-9 * a.frobenius_norm());
    }

    #[test]
    fn hessenberg_random_reconstructs() {
        let mut r = rng(2);
        let a = gaussian_matrix(&mut r, 10, 10);
        let (h, u) = hessenberg_reduce(&a).unwrap();
        assert!((&(&u * &h) * &u.transpose()).dist(&a) < 1e-9 * a.frobenius_norm());
        assert!(u.orthogonality_defect() < 1e-9);
        for i in 2..10 {
            for j in 0..i - 1 {
                assert_eq!(h[(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn triangular_input_deflates_immediately() {
        let h = Matrix::from_rows(&[[1.0, 2.0, 3.0], [0.0, 4.0, 5.0], [0.0, 0.0, 6.0]]);
        let f = francis_qr(&h, DEFAULT_EPS, 90).unwrap();
        assert_eq!(f.t, h);
        assert_eq!(f.z, Matrix::identity(3));
        assert_eq!(f.b, vec![1, 1, 1]);
    }

    #[test]
    fn rotation_is_one_complex_block() {
        let h = Matrix::from_rows(&[[0.0, 1.0], [-1.0, 0.0]]);
        let f = francis_qr(&h, DEFAULT_EPS, 60).unwrap();
        assert_eq!(f.b, vec![2, 0]);
        let s = spectrum_of(&f).unwrap();
        assert_eq!(s.eigenvalues[0], Complex64::new(0.0, 1.0));
        assert_eq!(s.eigenvalues[1], Complex64::new(0.0, -1.0));
    }

    #[test]
    fn real_2x2_block_is_split() {
        let a = Matrix::from_rows(&[[1.0, 4.0], [1.0, 1.0]]);
        let f = schur_decompose(&a).unwrap();
        assert_eq!(f.b, vec![1, 1]);
        assert_valid(&a, &f);
        let mut d = f.t.diagonal();
        d.sort_by(f64::total_cmp);
        assert!((d[0] + 1.0).abs() < 1e-14 && (d[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn diagonal_input() {
        let a = Matrix::from_diag(&[1.0, 2.0, 3.0]);
        let f = schur_decompose(&a).unwrap();
        assert_eq!(f.b, vec![1, 1, 1]);
        let mut d = f.t.diagonal();
        d.sort_by(f64::total_cmp);
        assert_eq!(d, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn all_twos_spectrum() {
        let a = Matrix::filled(10, 10, 2.0);
        let f = schur_decompose(&a).unwrap();
        assert_valid(&a, &f);
        let s = spectrum_of(&f).unwrap();
        let mut re: Vec<f64> = s.eigenvalues.iter().map(|z| z.re).collect();
        re.sort_by(f64::total_cmp);
        assert!((re[9] - 20.0).abs() < 1e-12);
        assert!(re[..9].iter().all(|x| x.abs() < 1e-12));
        assert!(s.eigenvalues.iter().all(|z| z.im.abs() < 1e-12));
    }

    #[test]
    fn random_hessenberg_and_dense() {
        let mut r = rng(3);
        for n in [3, 4, 7, 10, 20] {
            for _ in 0..5 {
                let a = gaussian_matrix(&mut r, n, n);
                let f = schur_decompose(&a).unwrap();
                assert_valid(&a, &f);
                assert!(spectrum_of(&f).unwrap().is_conjugate_closed());
            }
        }
    }

    #[test]
    fn spectrum_of_examples() {
        let f = SchurForm {
            z: Matrix::identity(2),
            t: Matrix::from_diag(&[0.5, -0.5]),
            b: vec![1, 1],
        };
        let s = spectrum_of(&f).unwrap();
        assert_eq!(s.eigenvalues, vec![Complex64::new(0.5, 0.0), Complex64::new(-0.5, 0.0)]);

        let f = SchurForm {
            z: Matrix::identity(2),
            t: Matrix::from_rows(&[[1.0, 4.0], [1.0, 1.0]]),
            b: vec![2, 0],
        };
        let s = spectrum_of(&f).unwrap();
        assert_eq!(s.eigenvalues, vec![Complex64::new(3.0, 0.0), Complex64::new(-1.0, 0.0)]);
    }

    #[test]
    fn block_pattern_validation() {
        assert!(block_ranges(&[2, 0, 1]).is_ok());
        assert!(matches!(block_ranges(&[2, 1]), Err(Error::Structure(_))));
        assert!(matches!(block_ranges(&[0, 1]), Err(Error::Structure(_))));
        assert!(matches!(block_ranges(&[1, 2]), Err(Error::Structure(_))));
    }

    #[test]
    fn sweep_budget_exhaustion_reports_partial_form() {
        let mut r = rng(4);
        let a = gaussian_matrix(&mut r, 8, 8);
        match schur_decompose_with(&a, DEFAULT_EPS, 1) {
            Err(Error::SchurNoConvergence { active, partial }) => {
                assert!(active > 2);
                assert!(partial.reconstruct().dist(&a) < 1e-10 * a.frobenius_norm());
            }
            other => panic!("expected convergence failure, got {other:?}"),
        }
    }
}
