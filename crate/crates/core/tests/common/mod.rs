#![allow(dead_code)]

use mcckf::model::LtiModel;
use mcckf::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_mat(rng: &mut impl Rng, rows: usize, cols: usize) -> Mat {
    let data = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Mat::from_row_major(rows, cols, data).unwrap()
}

/// `B·Bᵀ + shift·I` with `B` of size n×rank.
pub fn random_psd(rng: &mut impl Rng, n: usize, rank: usize, shift: f64) -> Mat {
    let b = random_mat(rng, n, rank);
    let mut a = b.mul_t(&b).unwrap();
    a.add_scaled_assign(shift, &Mat::identity(n)).unwrap();
    a.symmetrized()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Prior {
    Full,
    /// Rank-deficient `Π₀`.
    Partial,
    Zero,
}

/// Random model with `n ≤ 5`, spectral radius below one and
/// well-conditioned noise covariances.
pub fn random_model(seed: u64, prior: Prior) -> LtiModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=5);
    let m = rng.gen_range(1..=3);
    let q = rng.gen_range(1..=n);
    let a = random_mat(&mut rng, n, n);
    let norm = (0..n)
        .map(|i| a.row(i).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let f = a.scale(rng.gen_range(0.5..0.98) / norm.max(1e-3));
    let g = random_mat(&mut rng, n, q);
    let h = random_mat(&mut rng, m, n);
    let qm = random_psd(&mut rng, q, q, 0.1);
    let r = random_psd(&mut rng, m, m, 0.5);
    let x0 = random_mat(&mut rng, n, 1);
    let pi0 = match prior {
        Prior::Full => random_psd(&mut rng, n, n, 0.05),
        Prior::Partial => random_psd(&mut rng, n, (n / 2).max(1), 0.0),
        Prior::Zero => Mat::zeros(n, n),
    };
    LtiModel::new(f, g, h, qm, r, x0, pi0).unwrap()
}
