//! Kalman-type filters: Riccati recursions and Chandrasekhar-type recursions.

pub mod chandrasekhar;
pub mod kernel;
pub mod riccati;
pub mod runner;

pub use chandrasekhar::{
    alg1_step, alg2_step, alg3_step, alg4_step, chandrasekhar_init, lemma1_residual,
    lemma1_residuals, reconstruct_covariance, ChandrasekharFilterState, ChandrasekharVariant,
};
pub use kernel::{gaussian_kernel, lambda_weight, KernelStrategy, ADAPTIVE_LAMBDA};
pub use riccati::{
    imcckf_riccati_step, imcckf_two_stage_step, kf_step, Posterior, RiccatiFilterState,
    TwoStageStep,
};
pub use runner::{run_filter, Filter, FilterKind, FilterOutput, FilterSpec, LambdaLabel};

use crate::error::Result;
use crate::linalg::{Cholesky, Mat};
use crate::model::LtiModel;

/// Model plus the quantities every step needs and that never change.
#[derive(Clone, Debug)]
pub struct PreparedModel {
    pub model: LtiModel,
    pub gqg: Mat,
    pub r_chol: Cholesky,
}

impl PreparedModel {
    pub fn new(model: &LtiModel) -> Result<Self> {
        model.validate()?;
        Ok(PreparedModel {
            model: model.clone(),
            gqg: model.process_cov(),
            r_chol: Cholesky::new(&model.r)?,
        })
    }
}

/// What a single step reports besides the new state.
#[derive(Clone, Debug)]
pub struct StepRecord {
    /// `e_k = y_k − H x̂_{k|k−1}`
    pub innovation: Mat,
    pub lambda: f64,
}
