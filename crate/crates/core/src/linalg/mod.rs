//! Dense linear algebra: matrices, SPD solves, and pivoted symmetric
//! indefinite factorization.

mod cholesky;
mod inverse;
mod ldl;
mod mat;

pub use cholesky::{psd_sqrt, spd_inverse, spd_solve, Cholesky};
pub use inverse::SmallInverse;
pub use ldl::{
    default_rank_tol, dropped_mass, ldlt_bunch_kaufman, low_rank_trim, low_rank_trim_scaled,
    symmetric_inverse, Block, LdlFactorization, LowRankFactors, BK_ALPHA,
};
pub use mat::{Mat, SYMMETRY_TOL};
