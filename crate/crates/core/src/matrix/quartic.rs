use super::Matrix;
use crate::schur::eigenvalues;

fn eval(c3: f64, c1: f64, c0: f64, t: f64) -> f64 {
    (((t + c3) * t) * t + c1) * t + c0
}

fn deriv(c3: f64, c1: f64, t: f64) -> f64 {
    ((4.0 * t + 3.0 * c3) * t) * t + c1
}

/// Real roots of `t⁴ + c3·t³ + c1·t + c0`, found as eigenvalues of the
/// companion matrix and polished by Newton steps. Roots closer than 1e-9 are
/// merged; the result is sorted ascending.
pub fn quartic_real_roots(c3: f64, c1: f64, c0: f64) -> Vec<f64> {
    if !(c3.is_finite() && c1.is_finite() && c0.is_finite()) {
        return Vec::new();
    }
    // companion matrix of t⁴ + c3 t³ + 0 t² + c1 t + c0
    let companion = Matrix::from_rows(&[
        [-c3, 0.0, -c1, -c0],
        [1.0, 0.0, 0.0, 0.0],
        [0.0, 1.0, 0.0, 0.0],
        [0.0, 0.0, 1.0, 0.0],
    ]);
    let spectrum = match eigenvalues(&companion) {
        Ok(s) => s.eigenvalues,
        Err(_) => return Vec::new(),
    };

    // A root of multiplicity k is perturbed by roughly eps^(1/k), which can
    // push a real multiple root off the real axis. Cluster first, then judge
    // each cluster by its centroid.
    let mut clusters: Vec<Vec<num_complex::Complex64>> = Vec::new();
    for z in spectrum {
        let tol = 1e-4 * (1.0 + z.norm());
        match clusters
            .iter_mut()
            .find(|c| c.iter().any(|w| (w - z).norm() <= tol))
        {
            Some(c) => c.push(z),
            None => clusters.push(vec![z]),
        }
    }

    let mut roots: Vec<f64> = Vec::new();
    for c in clusters {
        let centroid = c.iter().sum::<num_complex::Complex64>() / c.len() as f64;
        if centroid.im.abs() > 1e-6 * (1.0 + centroid.re.abs()) {
            continue;
        }
        let mut t = centroid.re;
        for _ in 0..50 {
            let d = deriv(c3, c1, t);
            if d == 0.0 {
                break;
            }
            let step = eval(c3, c1, c0, t) / d;
            let next = t - step;
            if !next.is_finite() || eval(c3, c1, c0, next).abs() > eval(c3, c1, c0, t).abs() {
                break;
            }
            t = next;
            if step.abs() <= f64::EPSILON * t.abs() {
                break;
            }
        }
        if eval(c3, c1, c0, t).abs() <= 1e-8 * (1.0 + t.powi(4)) {
            roots.push(t);
        }
    }

    roots.sort_by(f64::total_cmp);
    roots.dedup_by(|a, b| (*a - *b).abs() <= 1e-9);
    roots
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check(c3: f64, c1: f64, c0: f64, expected: &[f64]) {
        let r = quartic_real_roots(c3, c1, c0);
        assert_eq!(r.len(), expected.len(), "roots {r:?}, expected {expected:?}");
        for (a, b) in r.iter().zip(expected) {
            assert!((a - b).abs() < 1e-7, "roots {r:?}, expected {expected:?}");
        }
    }

    #[test]
    fn fourth_roots_of_unity() {
        check(0.0, 0.0, -1.0, &[-1.0, 1.0]);
    }

    #[test]
    fn triple_root() {
        check(-2.0, 2.0, -1.0, &[-1.0, 1.0]);
    }

    #[test]
    fn no_real_roots() {
        check(0.0, 0.0, 1.0, &[]);
    }

    /// Bisection on sign changes over a fine grid; finds every simple root.
    fn bracketed_roots(c3: f64, c1: f64, c0: f64) -> Vec<f64> {
        let bound = 1.0 + c3.abs().max(c1.abs()).max(c0.abs());
        let steps = 200_000;
        let h = 2.0 * bound / steps as f64;
        let mut out = Vec::new();
        for k in 0..steps {
            let (mut lo, mut hi) = (-bound + k as f64 * h, -bound + (k + 1) as f64 * h);
            let (flo, fhi) = (eval(c3, c1, c0, lo), eval(c3, c1, c0, hi));
            if flo == 0.0 {
                out.push(lo);
                continue;
            }
            if flo * fhi > 0.0 {
                continue;
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if eval(c3, c1, c0, mid) * eval(c3, c1, c0, lo) <= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            out.push(0.5 * (lo + hi));
        }
        out.dedup_by(|a, b| (*a - *b).abs() <= 1e-9);
        out
    }

    #[test]
    fn matches_bisection_on_target_family() {
        use rand::Rng;
        let mut r = crate::testutil::rng(8);
        for _ in 0..40 {
            let s1: f64 = r.gen_range(-5.0..5.0);
            let s2: f64 = r.gen_range(-5.0..5.0);
            let got = quartic_real_roots(-s1, s2, -1.0);
            let want = bracketed_roots(-s1, s2, -1.0);
            assert_eq!(got.len(), want.len(), "σ=({s1},{s2}): {got:?} vs {want:?}");
            for (a, b) in got.iter().zip(&want) {
                assert!((a - b).abs() < 1e-8, "σ=({s1},{s2}): {got:?} vs {want:?}");
            }
        }
    }
}
