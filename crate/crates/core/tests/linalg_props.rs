mod common;

use common::{random_mat, random_psd};
use mcckf::linalg::{
    default_rank_tol, dropped_mass, ldlt_bunch_kaufman, low_rank_trim, spd_solve,
    symmetric_inverse, Mat, SmallInverse,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn symmetric(n: usize) -> impl Strategy<Value = Mat> {
    prop::collection::vec(-10.0..10.0f64, n * n)
        .prop_map(move |v| Mat::from_row_major(n, n, v).unwrap().symmetrized())
}

fn any_symmetric() -> impl Strategy<Value = Mat> {
    (1usize..=10).prop_flat_map(symmetric)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 100, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn bunch_kaufman_reconstructs(a in any_symmetric()) {
        let f = ldlt_bunch_kaufman(&a).unwrap();
        let err = f.reconstruct().sub(&f.permute(&a)).unwrap().frobenius_norm();
        prop_assert!(err <= 1e-10 * (1.0 + a.frobenius_norm()), "err {err:e}");
        let mut sorted = f.permutation().to_vec();
        sorted.sort_unstable();
        prop_assert_eq!(sorted, (0..a.rows()).collect::<Vec<_>>());
        let l = f.unit_lower();
        for i in 0..a.rows() {
            prop_assert_eq!(l[(i, i)], 1.0);
            for j in i + 1..a.rows() {
                prop_assert_eq!(l[(i, j)], 0.0);
            }
        }
        prop_assert!(l.max_abs() <= 1.0 / (1.0 - mcckf::linalg::BK_ALPHA) + 1e-12);
        let d = f.block_diag();
        prop_assert_eq!(d.asymmetry(), 0.0);
        let mut in_block = vec![vec![false; a.rows()]; a.rows()];
        for b in f.blocks() {
            for row in &mut in_block[b.start..b.start + b.size] {
                row[b.start..b.start + b.size].fill(true);
            }
        }
        for (i, row) in in_block.iter().enumerate() {
            for (j, &inside) in row.iter().enumerate() {
                prop_assert!(inside || d[(i, j)] == 0.0);
            }
        }
    }

    #[test]
    fn trim_without_cancellation_is_exact(a in any_symmetric()) {
        let f = ldlt_bunch_kaufman(&a).unwrap();
        let t = low_rank_trim(&f, 0.0).unwrap();
        let err = t.product().sub(&a).unwrap().frobenius_norm();
        prop_assert!(err <= 1e-10 * (1.0 + a.frobenius_norm()));
        prop_assert_eq!(t.m.asymmetry(), 0.0);
    }

    #[test]
    fn trim_error_bounded_by_dropped_mass(a in any_symmetric(), tol in 0.0..0.5f64) {
        let f = ldlt_bunch_kaufman(&a).unwrap();
        let t = low_rank_trim(&f, tol).unwrap();
        let err = t.product().sub(&a).unwrap().frobenius_norm();
        // each dropped block enters through its columns of L, which are not
        // normalized: ‖L_b D_b L_bᵀ‖_F ≤ ‖L_b‖_F² · |D_b|
        let l = f.unit_lower();
        let growth = f
            .blocks()
            .iter()
            .map(|b| {
                (b.start..b.start + b.size)
                    .map(|j| (0..a.rows()).map(|i| l[(i, j)] * l[(i, j)]).sum::<f64>())
                    .sum::<f64>()
            })
            .fold(1.0, f64::max);
        let bound = growth * dropped_mass(&f, tol) + 1e-10 * a.frobenius_norm();
        prop_assert!(err <= bound * (1.0 + 1e-12) + 1e-300, "{err:e} > {bound:e}");
    }

    #[test]
    fn displacement_rank_matches_construction(
        seed in any::<u64>(), n in 1usize..=8, p in 0usize..=3, q in 0usize..=3,
    ) {
        prop_assume!(p + q <= n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = random_mat(&mut rng, n, p);
        let c = random_mat(&mut rng, n, q);
        let a = if p + q == 0 {
            Mat::zeros(n, n)
        } else {
            b.mul_t(&b).unwrap().sub(&c.mul_t(&c).unwrap()).unwrap()
        };
        let f = ldlt_bunch_kaufman(&a).unwrap();
        let t = low_rank_trim(&f, 1e-10).unwrap();
        prop_assert_eq!(t.alpha(), p + q);
        let err = t.product().sub(&a).unwrap().frobenius_norm();
        prop_assert!(err <= 1e-8 * (1.0 + a.frobenius_norm()));
    }

    #[test]
    fn spd_solve_residual(seed in any::<u64>(), n in 1usize..=8, k in 1usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_psd(&mut rng, n, n, 0.1);
        let b = random_mat(&mut rng, n, k);
        let x = spd_solve(&a, &b).unwrap();
        let res = a.mul(&x).unwrap().sub(&b).unwrap().frobenius_norm();
        prop_assert!(res <= 1e-10 * (1.0 + b.frobenius_norm()) * (1.0 + a.frobenius_norm()));
    }

    #[test]
    fn small_inverse_matches_pivoted_inverse(a in (1usize..=6).prop_flat_map(symmetric)) {
        let reference = symmetric_inverse(&a);
        let mut inv = SmallInverse::new(a.rows());
        let mut out = Mat::zeros(a.rows(), a.rows());
        if let (Ok(r), Ok(())) = (&reference, inv.invert_symmetric(&a, &mut out)) {
            let check = a.mul(&out).unwrap().sub(&Mat::identity(a.rows())).unwrap();
            let cond = a.frobenius_norm() * r.frobenius_norm();
            prop_assert!(check.max_abs() <= 1e-12 * cond.max(1.0), "{:e}", check.max_abs());
        }
    }
}

#[test]
fn default_tolerance_scales_with_dimension() {
    assert_eq!(default_rank_tol(4), 4e-12);
    assert_eq!(default_rank_tol(0), 1e-12);
}
