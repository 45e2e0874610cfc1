//! Riccati-form filters: the classical Kalman filter and the improved
//! maximum-correntropy Kalman filter (IMCC-KF), in a priori and in
//! time/measurement-update form.

use crate::error::Result;
use crate::filters::kernel::{lambda_weight, KernelStrategy};
use crate::filters::{PreparedModel, StepRecord};
use crate::linalg::{Cholesky, Mat};
use crate::model::LtiModel;

/// A priori pair `(x̂_{k|k−1}, P_{k|k−1})`.
#[derive(Clone, Debug, PartialEq)]
pub struct RiccatiFilterState {
    pub x_pred: Mat,
    pub p_pred: Mat,
    pub k: usize,
}

impl RiccatiFilterState {
    /// `(x̄₀, Π₀)` at `k = 0`.
    pub fn initial(model: &LtiModel) -> Self {
        RiccatiFilterState {
            x_pred: model.x0_mean.clone(),
            p_pred: model.pi0.clone(),
            k: 0,
        }
    }

    /// Classical Kalman filter step:
    /// `R_e = R + HPHᵀ`, `K_p = FPHᵀR_e⁻¹`, `x̂ ← Fx̂ + K_p e`,
    /// `P ← FPFᵀ + GQGᵀ − K_p R_e K_pᵀ`.
    pub(crate) fn advance_kf(
        &mut self,
        y: &Mat,
        prep: &PreparedModel,
        ws: &mut RiccatiWorkspace,
    ) -> Result<f64> {
        self.advance_weighted(y, prep, ws, |_| Ok(1.0))
    }

    /// IMCC-KF a priori step:
    /// `R^λ_e = λHPHᵀ + R`, `K_p = FPHᵀ[R^λ_e]⁻¹`, `x̂ ← Fx̂ + λK_p e`,
    /// `P ← FPFᵀ + GQGᵀ − λK_p R^λ_e K_pᵀ`.
    pub(crate) fn advance_imcc(
        &mut self,
        y: &Mat,
        prep: &PreparedModel,
        strategy: KernelStrategy,
        ws: &mut RiccatiWorkspace,
    ) -> Result<f64> {
        self.advance_weighted(y, prep, ws, |e| lambda_weight(e, &prep.r_chol, strategy))
    }

    /// Shared a priori recursion; with λ = 1 it is exactly the classical
    /// filter. Leaves `e_k` in `ws.e` and returns λ_k.
    fn advance_weighted(
        &mut self,
        y: &Mat,
        prep: &PreparedModel,
        ws: &mut RiccatiWorkspace,
        weight: impl FnOnce(&Mat) -> Result<f64>,
    ) -> Result<f64> {
        let m = &prep.model;
        ws.e.copy_from(y)?;
        ws.e.mul_acc(-1.0, &m.h, &self.x_pred)?;
        let lambda = weight(&ws.e)?;

        ws.pht.mul_t_into(&self.p_pred, &m.h)?;
        ws.re.copy_from(&m.r)?;
        ws.re.mul_acc(lambda, &m.h, &ws.pht)?;
        ws.re.symmetrize();
        ws.chol.refactor(&ws.re)?;
        ws.kp.mul_into(&m.f, &ws.pht)?;
        ws.chol.solve_right_in_place(&mut ws.kp)?;

        ws.x_next.mul_into(&m.f, &self.x_pred)?;
        ws.x_next.mul_acc(lambda, &ws.kp, &ws.e)?;

        ws.fp.mul_into(&m.f, &self.p_pred)?;
        ws.p_next.copy_from(&prep.gqg)?;
        ws.p_next.mul_t_acc(1.0, &ws.fp, &m.f)?;
        ws.kre.mul_into(&ws.kp, &ws.re)?;
        ws.p_next.mul_t_acc(-lambda, &ws.kre, &ws.kp)?;
        ws.p_next.symmetrize();

        std::mem::swap(&mut self.x_pred, &mut ws.x_next);
        std::mem::swap(&mut self.p_pred, &mut ws.p_next);
        self.k += 1;
        Ok(lambda)
    }

    /// Measurement update with `y_k`, then time update. Returns the a
    /// posteriori pair; `self` becomes the next a priori pair.
    pub(crate) fn advance_two_stage(
        &mut self,
        y: &Mat,
        prep: &PreparedModel,
        strategy: KernelStrategy,
    ) -> Result<(Posterior, StepRecord)> {
        let m = &prep.model;
        let e = y.sub(&m.h.mul(&self.x_pred)?)?;
        let lambda = lambda_weight(&e, &prep.r_chol, strategy)?;
        let pht = self.p_pred.mul_t(&m.h)?;
        let mut re = m.h.mul(&pht)?.scale(lambda).add(&m.r)?;
        re.symmetrize();
        let re_chol = Cholesky::factor_unchecked(re)?;
        // K^λ = λ P Hᵀ [R^λ_e]⁻¹
        let gain = re_chol.solve_right(&pht)?.scale(lambda);

        let mut x_post = self.x_pred.clone();
        x_post.add_scaled_assign(1.0, &gain.mul(&e)?)?;
        // (I − K^λ H) P
        let mut p_post = self.p_pred.sub(&gain.mul(&m.h.mul(&self.p_pred)?)?)?;
        p_post.symmetrize();

        let x_next = m.f.mul(&x_post)?;
        let mut p_next = p_post.congruence(&m.f)?.add(&prep.gqg)?;
        p_next.symmetrize();

        self.x_pred = x_next;
        self.p_pred = p_next;
        self.k += 1;
        Ok((
            Posterior {
                x_filt: x_post,
                p_filt: p_post,
                gain,
            },
            StepRecord {
                innovation: e,
                lambda,
            },
        ))
    }
}

/// Scratch buffers for the a priori recursion, sized for one model.
#[derive(Clone, Debug)]
pub struct RiccatiWorkspace {
    pub(crate) e: Mat,
    pht: Mat,
    re: Mat,
    chol: Cholesky,
    kp: Mat,
    kre: Mat,
    fp: Mat,
    x_next: Mat,
    p_next: Mat,
}

impl RiccatiWorkspace {
    pub fn new(model: &LtiModel) -> Self {
        let (n, m) = (model.state_dim(), model.meas_dim());
        RiccatiWorkspace {
            e: Mat::zeros(m, 1),
            pht: Mat::zeros(n, m),
            re: Mat::zeros(m, m),
            chol: Cholesky::factor_unchecked(Mat::identity(m)).expect("identity is SPD"),
            kp: Mat::zeros(n, m),
            kre: Mat::zeros(n, m),
            fp: Mat::zeros(n, n),
            x_next: Mat::zeros(n, 1),
            p_next: Mat::zeros(n, n),
        }
    }
}

/// A posteriori pair `(x̂_{k|k}, P_{k|k})` and the gain `K^λ_k` that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct Posterior {
    pub x_filt: Mat,
    pub p_filt: Mat,
    pub gain: Mat,
}

/// Output of [`imcckf_two_stage_step`].
#[derive(Clone, Debug)]
pub struct TwoStageStep {
    pub posterior: Posterior,
    /// `(x̂_{k+1|k}, P_{k+1|k})`
    pub prior: RiccatiFilterState,
    pub record: StepRecord,
}

/// One classical Kalman filter step in a priori form.
pub fn kf_step(
    state: &RiccatiFilterState,
    y: &Mat,
    model: &LtiModel,
) -> Result<(RiccatiFilterState, StepRecord)> {
    let prep = PreparedModel::new(model)?;
    let mut ws = RiccatiWorkspace::new(model);
    let mut next = state.clone();
    let lambda = next
        .advance_kf(y, &prep, &mut ws)
        .map_err(|e| e.at_step(state.k))?;
    Ok((
        next,
        StepRecord {
            innovation: ws.e,
            lambda,
        },
    ))
}

/// One IMCC-KF step in a priori (Riccati-type recursion) form.
pub fn imcckf_riccati_step(
    state: &RiccatiFilterState,
    y: &Mat,
    model: &LtiModel,
    strategy: KernelStrategy,
) -> Result<(RiccatiFilterState, StepRecord)> {
    strategy.validate()?;
    let prep = PreparedModel::new(model)?;
    let mut ws = RiccatiWorkspace::new(model);
    let mut next = state.clone();
    let lambda = next
        .advance_imcc(y, &prep, strategy, &mut ws)
        .map_err(|e| e.at_step(state.k))?;
    Ok((
        next,
        StepRecord {
            innovation: ws.e,
            lambda,
        },
    ))
}

/// One IMCC-KF step in time/measurement-update form, starting from the a
/// priori pair at `k`.
pub fn imcckf_two_stage_step(
    state: &RiccatiFilterState,
    y: &Mat,
    model: &LtiModel,
    strategy: KernelStrategy,
) -> Result<TwoStageStep> {
    strategy.validate()?;
    let prep = PreparedModel::new(model)?;
    let mut prior = state.clone();
    let (posterior, record) = prior
        .advance_two_stage(y, &prep, strategy)
        .map_err(|e| e.at_step(state.k))?;
    Ok(TwoStageStep {
        posterior,
        prior,
        record,
    })
}
