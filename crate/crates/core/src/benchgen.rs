//! Synthetic systems, excitation signals, datasets and projection benchmark
//! matrices.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{qr_factor, Matrix};
use crate::sysid::{simulate, StateSpaceModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    pub n_x: usize,
    pub n_u: usize,
    pub n_y: usize,
    pub eig_bound: f64,
    pub seed: u64,
}

impl SystemSpec {
    /// Five states, three inputs, three outputs, eigenvalue bound 0.99.
    pub fn original(seed: u64) -> Self {
        SystemSpec {
            n_x: 5,
            n_u: 3,
            n_y: 3,
            eig_bound: 0.99,
            seed,
        }
    }
}

/// One input/output record; row `k` of each matrix is time step `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sequence {
    pub u: Matrix,
    pub y: Matrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<Sequence>,
    pub validation: Vec<Sequence>,
    pub test: Vec<Sequence>,
    pub noise_sigma: f64,
    pub gbn_p: f64,
}

/// `A = Q·blockdiag(r R(θ), …, ±r)·Qᵀ` with radii uniform in
/// `[0.1, eig_bound)`; always at least one rotation block when `n_x ≥ 2`.
pub fn random_stable_system(spec: &SystemSpec) -> Result<StateSpaceModel> {
    if !(spec.eig_bound > 0.0 && spec.eig_bound <= 1.0) {
        return Err(Error::Domain(format!("eigenvalue bound {} is outside (0, 1]", spec.eig_bound)));
    }
    if spec.n_x == 0 || spec.n_u == 0 || spec.n_y == 0 {
        return Err(Error::dim("system dimensions must be positive"));
    }
    let n = spec.n_x;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let lo = 0.1_f64.min(spec.eig_bound);
    let radius = |rng: &mut ChaCha8Rng| if lo < spec.eig_bound { rng.gen_range(lo..spec.eig_bound) } else { lo };

    // number of rotation blocks: at least one, at most n/2
    let pairs = if n >= 2 { rng.gen_range(1..=n / 2) } else { 0 };
    let mut t = Matrix::zeros(n, n);
    let mut k = 0;
    for _ in 0..pairs {
        let r = radius(&mut rng);
        let theta: f64 = rng.gen_range(0.0..std::f64::consts::PI);
        let (s, c) = theta.sin_cos();
        t.set_block(k, k, &Matrix::from_rows(&[[r * c, -r * s], [r * s, r * c]]));
        k += 2;
    }
    while k < n {
        let r = radius(&mut rng);
        t[(k, k)] = if rng.gen::<bool>() { r } else { -r };
        k += 1;
    }
    let g = Matrix::from_fn(n, n, |_, _| StandardNormal.sample(&mut rng));
    let (q, _) = qr_factor(&g)?;
    let a = q.matmul(&t).matmul_tr(&q);

    let scale = 1.0 / (n as f64).sqrt();
    let mut gauss = |r: usize, c: usize| Matrix::from_fn(r, c, |_, _| scale * Distribution::<f64>::sample(&StandardNormal, &mut rng));
    let b = gauss(n, spec.n_u);
    let c = gauss(spec.n_y, n);
    let d = gauss(spec.n_y, spec.n_u);
    StateSpaceModel::new(a, b, c, d)
}

/// Generalized binary noise: each channel starts at a random ±1 and flips
/// with probability `p` at every step.
pub fn gbn_sequence(length: usize, channels: usize, p: f64, seed: u64) -> Result<Matrix> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!("switching probability {p} is outside [0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u = Matrix::zeros(length, channels);
    for j in 0..channels {
        let mut level = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        for k in 0..length {
            if k > 0 && rng.gen_bool(p) {
                level = -level;
            }
            u[(k, j)] = level;
        }
    }
    Ok(u)
}

/// Simulates `m` from rest on fresh GBN inputs for each partition. Gaussian
/// noise of scale `noise_sigma` is added to the training outputs only.
pub fn make_dataset(
    m: &StateSpaceModel,
    samples_per_seq: usize,
    seqs_per_partition: usize,
    noise_sigma: f64,
    gbn_p: f64,
    seed: u64,
) -> Result<DatasetSplit> {
    if samples_per_seq == 0 || seqs_per_partition == 0 {
        return Err(Error::Domain("dataset lengths must be positive".into()));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::Domain(format!("noise scale {noise_sigma} must be finite and nonnegative")));
    }
    // independent streams so the noise level never changes the inputs
    let mut root = ChaCha8Rng::seed_from_u64(seed);
    let streams: [u64; 4] = root.gen();
    let noise = Normal::new(0.0, noise_sigma).map_err(|e| Error::Domain(e.to_string()))?;
    let mut noise_rng = ChaCha8Rng::seed_from_u64(streams[3]);
    let x0 = vec![0.0; m.n_x()];
    let mut partition = |stream: u64, noisy: bool| -> Result<Vec<Sequence>> {
        let mut rng = ChaCha8Rng::seed_from_u64(stream);
        (0..seqs_per_partition)
            .map(|_| {
                let u = gbn_sequence(samples_per_seq, m.n_u(), gbn_p, rng.gen())?;
                let (mut y, _) = simulate(m, &u, &x0)?;
                if noisy && noise_sigma > 0.0 {
                    for v in y.as_mut_slice() {
                        *v += noise.sample(&mut noise_rng);
                    }
                }
                Ok(Sequence { u, y })
            })
            .collect()
    };
    let train = partition(streams[0], true)?;
    let validation = partition(streams[1], false)?;
    let test = partition(streams[2], false)?;
    Ok(DatasetSplit {
        train,
        validation,
        test,
        noise_sigma,
        gbn_p,
    })
}

/// Projection benchmark matrices: 1 all twos, 2 the −1 band rule
/// `i − j = −1` or `j − i ∈ {0, 1, 2, 3}` (upper triangular as written),
/// 3 standard Gaussian, 4 uniform on `[0, 1)`.
pub fn appendix_b_matrix(case: u8, n: usize, seed: u64) -> Result<Matrix> {
    if n < 2 {
        return Err(Error::Domain(format!("benchmark size must be at least 2, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match case {
        1 => Ok(Matrix::filled(n, n, 2.0)),
        2 => Ok(Matrix::from_fn(n, n, |i, j| {
            let d = i as i64 - j as i64;
            // i − j = −1, or j − i ∈ {0, 1, 2, 3}
            if d == -1 || (-3..=0).contains(&d) {
                -1.0
            } else {
                0.0
            }
        })),
        3 => Ok(Matrix::from_fn(n, n, |_, _| StandardNormal.sample(&mut rng))),
        4 => Ok(Matrix::from_fn(n, n, |_, _| rng.gen_range(0.0..1.0))),
        other => Err(Error::Domain(format!("benchmark case must be 1..=4, got {other}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{msvr, nmse};
    use crate::schur::eigenvalues;

    #[test]
    fn scalar_system_respects_bound() {
        for seed in 0..20 {
            let m = random_stable_system(&SystemSpec {
                n_x: 1,
                n_u: 1,
                n_y: 1,
                eig_bound: 0.5,
                seed,
            })
            .unwrap();
            assert!(m.a[(0, 0)].abs() <= 0.5);
        }
    }

    #[test]
    fn original_systems_are_stable_with_a_conjugate_pair() {
        for seed in 0..50 {
            let m = random_stable_system(&SystemSpec::original(seed)).unwrap();
            let s = eigenvalues(&m.a).unwrap();
            assert_eq!(msvr(&m.a).unwrap(), 0.0);
            assert!(s.max_modulus() <= 0.99 + 1e-9);
            assert!(s.eigenvalues.iter().any(|z| z.im.abs() > 1e-12), "seed {seed}");
        }
        let a = random_stable_system(&SystemSpec::original(3)).unwrap();
        let b = random_stable_system(&SystemSpec::original(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_bound() {
        let mut s = SystemSpec::original(0);
        s.eig_bound = 1.5;
        assert!(random_stable_system(&s).is_err());
        s.eig_bound = 0.0;
        assert!(random_stable_system(&s).is_err());
    }

    #[test]
    fn gbn_extremes_and_rate() {
        let u = gbn_sequence(50, 3, 0.0, 1).unwrap();
        for j in 0..3 {
            assert!(u.column(j).iter().all(|&v| v == u[(0, j)]));
        }
        let u = gbn_sequence(50, 2, 1.0, 1).unwrap();
        for k in 1..50 {
            for j in 0..2 {
                assert_eq!(u[(k, j)], -u[(k - 1, j)]);
            }
        }
        let u = gbn_sequence(10_000, 1, 0.1, 7).unwrap();
        let flips = (1..10_000).filter(|&k| u[(k, 0)] != u[(k - 1, 0)]).count();
        let rate = flips as f64 / 9_999.0;
        assert!((0.09..=0.11).contains(&rate), "{rate}");
        assert!(gbn_sequence(5, 1, 1.5, 0).is_err());
    }

    #[test]
    fn dataset_shapes_noise_and_determinism() {
        let m = random_stable_system(&SystemSpec::original(11)).unwrap();
        let d = make_dataset(&m, 300, 1, 0.0, 0.1, 5).unwrap();
        for part in [&d.train, &d.validation, &d.test] {
            assert_eq!(part.len(), 1);
            assert_eq!(part[0].u.shape(), (300, 3));
            assert_eq!(part[0].y.shape(), (300, 3));
        }
        let (clean, _) = simulate(&m, &d.train[0].u, &[0.0; 5]).unwrap();
        assert_eq!(clean, d.train[0].y);
        assert_eq!(nmse(&d.train[0].y, &clean).unwrap(), 0.0);

        let noisy = make_dataset(&m, 300, 1, 0.25, 0.1, 5).unwrap();
        assert_ne!(noisy.train[0].y, d.train[0].y);
        assert_eq!(noisy.validation, d.validation);
        assert_eq!(noisy, make_dataset(&m, 300, 1, 0.25, 0.1, 5).unwrap());
    }

    #[test]
    fn benchmark_cases() {
        let a = appendix_b_matrix(1, 3, 0).unwrap();
        assert!(a.as_slice().iter().all(|&v| v == 2.0));

        let b = appendix_b_matrix(2, 4, 0).unwrap();
        for j in 0..4 {
            assert_eq!(b[(0, j)], -1.0);
        }
        assert_eq!(b[(2, 0)], 0.0);
        assert_eq!(b[(1, 0)], 0.0);
        assert_eq!(b[(0, 1)], -1.0);

        let c = appendix_b_matrix(3, 10, 9).unwrap();
        assert_eq!(c, appendix_b_matrix(3, 10, 9).unwrap());
        let mean = c.as_slice().iter().sum::<f64>() / 100.0;
        assert!(mean.abs() < 0.5);

        let u = appendix_b_matrix(4, 10, 9).unwrap();
        assert!(u.as_slice().iter().all(|&v| (0.0..1.0).contains(&v)));

        assert!(matches!(appendix_b_matrix(5, 4, 0), Err(Error::Domain(_))));
        assert!(appendix_b_matrix(1, 1, 0).is_err());
    }
}
