//! Chandrasekhar-type IMCC-KF implementations.
//!
//! Instead of the full `P_{k+1|k}`, these filters propagate low-rank factors
//! of the covariance increment `ΔP_{k+1|k} = P_{k+1|k} − P_{k|k−1} = L_k M_k L_kᵀ`,
//! with `L_k` n×α and `M_k` α×α. The displacement rank α is fixed by the
//! factorization of `ΔP_{1|0}` at initialization. All four variants require a
//! constant adjusting weight λ and produce the same a priori estimates as the
//! Riccati IMCC-KF.
//!
//! | variant | `L_{k+1}` uses | `M` update            | inversions per step |
//! |---------|----------------|-----------------------|---------------------|
//! | `Alg1`  | `K_{p,k+1}`    | `+`, `R^λ_{e,k}`      | one m×m (cached)    |
//! | `Alg2`  | `K_{p,k}`      | `−`, `R^λ_{e,k+1}`    | one m×m             |
//! | `Alg3`  | `K_k R⁻¹_{e,k}`| `M⁻¹` update          | one α×α             |
//! | `Alg4`  | `K_{p,k}`      | `M⁻¹` update          | one m×m + one α×α   |

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::filters::{PreparedModel, StepRecord};
use crate::linalg::{
    default_rank_tol, ldlt_bunch_kaufman, low_rank_trim_scaled, symmetric_inverse, Cholesky,
    LowRankFactors, Mat, SmallInverse,
};
use crate::model::LtiModel;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ChandrasekharVariant {
    Alg1,
    Alg2,
    Alg3,
    Alg4,
}

impl ChandrasekharVariant {
    pub const ALL: [ChandrasekharVariant; 4] = [
        ChandrasekharVariant::Alg1,
        ChandrasekharVariant::Alg2,
        ChandrasekharVariant::Alg3,
        ChandrasekharVariant::Alg4,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ChandrasekharVariant::Alg1 => "alg1",
            ChandrasekharVariant::Alg2 => "alg2",
            ChandrasekharVariant::Alg3 => "alg3",
            ChandrasekharVariant::Alg4 => "alg4",
        }
    }

    fn propagates_m_inverse(self) -> bool {
        matches!(
            self,
            ChandrasekharVariant::Alg3 | ChandrasekharVariant::Alg4
        )
    }
}

impl fmt::Display for ChandrasekharVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ChandrasekharVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ChandrasekharVariant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown Chandrasekhar variant {s:?}")))
    }
}

/// State of a Chandrasekhar filter at time `k`.
///
/// What is stored depends on the variant:
/// - `factors.m` always holds `M_k`; Alg3/Alg4 also keep `m_inv = M_k⁻¹`,
///   which is what they propagate.
/// - `re` holds `R^λ_{e,k}` for Alg1/2/4; Alg3 propagates `re_inv` instead.
/// - `gain` is `K_{p,k}` for Alg1/2/4 and the unnormalized `K_k = K_{p,k} R^λ_{e,k}`
///   for Alg3.
#[derive(Clone, Debug)]
pub struct ChandrasekharFilterState {
    pub variant: ChandrasekharVariant,
    pub lambda: f64,
    pub k: usize,
    pub x_pred: Mat,
    pub factors: LowRankFactors,
    pub m_inv: Option<Mat>,
    pub re: Option<Mat>,
    pub re_inv: Option<Mat>,
    pub gain: Mat,
    re_chol: Option<Cholesky>,
}

impl ChandrasekharFilterState {
    pub fn alpha(&self) -> usize {
        self.factors.alpha()
    }

    /// `ΔP_{k+1|k} = L_k M_k L_kᵀ`
    pub fn delta_p(&self) -> Mat {
        self.factors.product()
    }

    /// `R^λ_{e,k}` (inverted from the propagated inverse for Alg3).
    pub fn innovation_cov(&self) -> Result<Mat> {
        match (&self.re, &self.re_inv) {
            (Some(re), _) => Ok(re.clone()),
            (None, Some(inv)) => crate::linalg::spd_inverse(inv),
            (None, None) => unreachable!("state always carries R^λ_e or its inverse"),
        }
    }

    /// `K_{p,k}`
    pub fn normalized_gain(&self) -> Result<Mat> {
        match self.variant {
            ChandrasekharVariant::Alg3 => self
                .gain
                .mul(self.re_inv.as_ref().expect("Alg3 carries [R^λ_e]⁻¹")),
            _ => Ok(self.gain.clone()),
        }
    }

    /// Advances from `k` to `k + 1` consuming `y_k`; `e_k` is left in `ws.e`.
    pub(crate) fn advance(
        &mut self,
        y: &Mat,
        prep: &PreparedModel,
        ws: &mut ChandrasekharWorkspace,
    ) -> Result<()> {
        let model = &prep.model;
        ws.e.copy_from(y)?;
        ws.e.mul_acc(-1.0, &model.h, &self.x_pred)?;
        if self.alpha() == 0 {
            // ΔP ≡ 0: gain and innovation covariance are already stationary
            let gain = match self.variant {
                ChandrasekharVariant::Alg3 => {
                    ws.kp.mul_into(
                        &self.gain,
                        self.re_inv.as_ref().expect("Alg3 carries [R^λ_e]⁻¹"),
                    )?;
                    &ws.kp
                }
                _ => &self.gain,
            };
            ws.x_next.mul_into(&model.f, &self.x_pred)?;
            ws.x_next.mul_acc(self.lambda, gain, &ws.e)?;
            std::mem::swap(&mut self.x_pred, &mut ws.x_next);
        } else {
            match self.variant {
                ChandrasekharVariant::Alg1 | ChandrasekharVariant::Alg2 => {
                    self.advance_direct(model, ws)?
                }
                ChandrasekharVariant::Alg3 => self.advance_inverse(model, ws)?,
                ChandrasekharVariant::Alg4 => self.advance_symmetric(model, ws)?,
            }
        }
        self.k += 1;
        Ok(())
    }

    /// Algorithms 1 and 2.
    fn advance_direct(&mut self, model: &LtiModel, ws: &mut ChandrasekharWorkspace) -> Result<()> {
        let lambda = self.lambda;
        let (f, h) = (&model.f, &model.h);
        let re = self.re.as_mut().expect("Alg1/Alg2 carry R^λ_e");
        let re_chol = self.re_chol.as_mut().expect("Alg1/Alg2 cache chol(R^λ_e)");

        // x̂_{k+1|k} = F x̂ + λ K_{p,k} e_k
        ws.x_next.mul_into(f, &self.x_pred)?;
        ws.x_next.mul_acc(lambda, &self.gain, &ws.e)?;

        ws.hl.mul_into(h, &self.factors.l)?;
        ws.hlm.mul_into(&ws.hl, &self.factors.m)?;
        ws.fl.mul_into(f, &self.factors.l)?;
        // R^λ_{e,k+1} = R^λ_{e,k} + λ H L M Lᵀ Hᵀ
        ws.re_next.copy_from(re)?;
        ws.re_next.mul_t_acc(lambda, &ws.hlm, &ws.hl)?;
        ws.re_next.symmetrize();
        ws.chol_next.refactor(&ws.re_next)?;
        // K_{p,k+1} = [K_{p,k} R^λ_{e,k} + F L M Lᵀ Hᵀ] [R^λ_{e,k+1}]⁻¹
        ws.kp_next.mul_into(&self.gain, re)?;
        ws.kp_next.mul_t_acc(1.0, &ws.fl, &ws.hlm)?;
        ws.chol_next.solve_right_in_place(&mut ws.kp_next)?;

        ws.l_next.copy_from(&ws.fl)?;
        ws.m_next.copy_from(&self.factors.m)?;
        ws.tmp.copy_from(&ws.hlm)?;
        if self.variant == ChandrasekharVariant::Alg1 {
            // L_{k+1} = (F − λ K_{p,k+1} H) L_k
            ws.l_next.mul_acc(-lambda, &ws.kp_next, &ws.hl)?;
            // M_{k+1} = M_k + λ M Lᵀ Hᵀ [R^λ_{e,k}]⁻¹ H L M
            re_chol.solve_in_place(&mut ws.tmp)?;
            ws.m_next.t_mul_acc(lambda, &ws.hlm, &ws.tmp)?;
        } else {
            // L_{k+1} = (F − λ K_{p,k} H) L_k
            ws.l_next.mul_acc(-lambda, &self.gain, &ws.hl)?;
            // M_{k+1} = M_k − λ M Lᵀ Hᵀ [R^λ_{e,k+1}]⁻¹ H L M
            ws.chol_next.solve_in_place(&mut ws.tmp)?;
            ws.m_next.t_mul_acc(-lambda, &ws.hlm, &ws.tmp)?;
        }
        ws.m_next.symmetrize();

        std::mem::swap(&mut self.x_pred, &mut ws.x_next);
        std::mem::swap(&mut self.factors.l, &mut ws.l_next);
        std::mem::swap(&mut self.factors.m, &mut ws.m_next);
        std::mem::swap(re, &mut ws.re_next);
        std::mem::swap(re_chol, &mut ws.chol_next);
        std::mem::swap(&mut self.gain, &mut ws.kp_next);
        Ok(())
    }

    /// Algorithm 3: propagates `M⁻¹` and `[R^λ_e]⁻¹`.
    fn advance_inverse(&mut self, model: &LtiModel, ws: &mut ChandrasekharWorkspace) -> Result<()> {
        let lambda = self.lambda;
        let (f, h) = (&model.f, &model.h);
        let m_inv = self.m_inv.as_mut().expect("Alg3 carries M⁻¹");
        let re_inv = self.re_inv.as_mut().expect("Alg3 carries [R^λ_e]⁻¹");

        // K_k [R^λ_{e,k}]⁻¹
        ws.kp.mul_into(&self.gain, re_inv)?;
        ws.x_next.mul_into(f, &self.x_pred)?;
        ws.x_next.mul_acc(lambda, &ws.kp, &ws.e)?;

        ws.hl.mul_into(h, &self.factors.l)?;
        ws.fl.mul_into(f, &self.factors.l)?;
        // L_{k+1} = (F − λ K_k [R^λ_{e,k}]⁻¹ H) L_k
        ws.l_next.copy_from(&ws.fl)?;
        ws.l_next.mul_acc(-lambda, &ws.kp, &ws.hl)?;
        // M_{k+1}⁻¹ = M_k⁻¹ + λ Lᵀ Hᵀ [R^λ_{e,k}]⁻¹ H L
        ws.tmp.mul_into(re_inv, &ws.hl)?;
        ws.m_inv_next.copy_from(m_inv)?;
        ws.m_inv_next.t_mul_acc(lambda, &ws.hl, &ws.tmp)?;
        ws.m_inv_next.symmetrize();
        ws.inverse
            .invert_symmetric(&ws.m_inv_next, &mut ws.m_next)
            .map_err(middle_factor_context)?;
        // [R^λ_{e,k+1}]⁻¹ = [R^λ_{e,k}]⁻¹ − λ [R^λ_{e,k}]⁻¹ H L M_{k+1} Lᵀ Hᵀ [R^λ_{e,k}]⁻¹
        ws.hlm.mul_into(&ws.tmp, &ws.m_next)?;
        ws.re_next.copy_from(re_inv)?;
        ws.re_next.mul_t_acc(-lambda, &ws.hlm, &ws.tmp)?;
        ws.re_next.symmetrize();
        // K_{k+1} = K_k + F L M_k Lᵀ Hᵀ
        ws.flm.mul_into(&ws.fl, &self.factors.m)?;
        self.gain.mul_t_acc(1.0, &ws.flm, &ws.hl)?;

        std::mem::swap(&mut self.x_pred, &mut ws.x_next);
        std::mem::swap(&mut self.factors.l, &mut ws.l_next);
        std::mem::swap(&mut self.factors.m, &mut ws.m_next);
        std::mem::swap(m_inv, &mut ws.m_inv_next);
        std::mem::swap(re_inv, &mut ws.re_next);
        Ok(())
    }

    /// Algorithm 4: `R^λ_e` update as Alg2, `M⁻¹` update as Alg3.
    fn advance_symmetric(
        &mut self,
        model: &LtiModel,
        ws: &mut ChandrasekharWorkspace,
    ) -> Result<()> {
        let lambda = self.lambda;
        let (f, h) = (&model.f, &model.h);
        let m_inv = self.m_inv.as_mut().expect("Alg4 carries M⁻¹");
        let re = self.re.as_mut().expect("Alg4 carries R^λ_e");
        let re_chol = self.re_chol.as_mut().expect("Alg4 caches chol(R^λ_e)");

        ws.x_next.mul_into(f, &self.x_pred)?;
        ws.x_next.mul_acc(lambda, &self.gain, &ws.e)?;

        ws.hl.mul_into(h, &self.factors.l)?;
        ws.hlm.mul_into(&ws.hl, &self.factors.m)?;
        ws.fl.mul_into(f, &self.factors.l)?;
        // R^λ_{e,k+1} = R^λ_{e,k} + λ H L M Lᵀ Hᵀ
        ws.re_next.copy_from(re)?;
        ws.re_next.mul_t_acc(lambda, &ws.hlm, &ws.hl)?;
        ws.re_next.symmetrize();
        ws.chol_next.refactor(&ws.re_next)?;
        // M_{k+1}⁻¹ = M_k⁻¹ + λ Lᵀ Hᵀ [R^λ_{e,k}]⁻¹ H L
        ws.tmp.copy_from(&ws.hl)?;
        re_chol.solve_in_place(&mut ws.tmp)?;
        ws.m_inv_next.copy_from(m_inv)?;
        ws.m_inv_next.t_mul_acc(lambda, &ws.hl, &ws.tmp)?;
        ws.m_inv_next.symmetrize();
        // K_{p,k+1} = [K_{p,k} R^λ_{e,k} + F L M Lᵀ Hᵀ] [R^λ_{e,k+1}]⁻¹
        ws.kp_next.mul_into(&self.gain, re)?;
        ws.kp_next.mul_t_acc(1.0, &ws.fl, &ws.hlm)?;
        ws.chol_next.solve_right_in_place(&mut ws.kp_next)?;
        // L_{k+1} = (F − λ K_{p,k} H) L_k
        ws.l_next.copy_from(&ws.fl)?;
        ws.l_next.mul_acc(-lambda, &self.gain, &ws.hl)?;
        ws.inverse
            .invert_symmetric(&ws.m_inv_next, &mut ws.m_next)
            .map_err(middle_factor_context)?;

        std::mem::swap(&mut self.x_pred, &mut ws.x_next);
        std::mem::swap(&mut self.factors.l, &mut ws.l_next);
        std::mem::swap(&mut self.factors.m, &mut ws.m_next);
        std::mem::swap(m_inv, &mut ws.m_inv_next);
        std::mem::swap(re, &mut ws.re_next);
        std::mem::swap(re_chol, &mut ws.chol_next);
        std::mem::swap(&mut self.gain, &mut ws.kp_next);
        Ok(())
    }
}

/// Scratch buffers for one filter; sizes follow `n`, `m` and α.
#[derive(Clone, Debug)]
pub struct ChandrasekharWorkspace {
    pub(crate) e: Mat,
    x_next: Mat,
    kp: Mat,
    kp_next: Mat,
    hl: Mat,
    hlm: Mat,
    tmp: Mat,
    fl: Mat,
    flm: Mat,
    l_next: Mat,
    m_next: Mat,
    m_inv_next: Mat,
    re_next: Mat,
    chol_next: Cholesky,
    inverse: SmallInverse,
}

impl ChandrasekharWorkspace {
    pub fn for_state(state: &ChandrasekharFilterState) -> Self {
        let n = state.x_pred.rows();
        let m = state.gain.cols();
        let a = state.alpha();
        ChandrasekharWorkspace {
            e: Mat::zeros(m, 1),
            x_next: Mat::zeros(n, 1),
            kp: Mat::zeros(n, m),
            kp_next: Mat::zeros(n, m),
            hl: Mat::zeros(m, a),
            hlm: Mat::zeros(m, a),
            tmp: Mat::zeros(m, a),
            fl: Mat::zeros(n, a),
            flm: Mat::zeros(n, a),
            l_next: Mat::zeros(n, a),
            m_next: Mat::zeros(a, a),
            m_inv_next: Mat::zeros(a, a),
            re_next: Mat::zeros(m, m),
            chol_next: Cholesky::factor_unchecked(Mat::identity(m)).expect("identity is SPD"),
            inverse: SmallInverse::new(a),
        }
    }
}

fn middle_factor_context(e: Error) -> Error {
    match e {
        Error::Singular { context } => Error::Singular {
            context: format!("middle factor M⁻¹: {context}"),
        },
        other => other,
    }
}

/// α×α inverse of the (indefinite) middle factor.
fn invert_factor_core(a: &Mat) -> Result<Mat> {
    symmetric_inverse(a).map_err(middle_factor_context)
}

/// Everything the one-time initialization produced, kept for inspection.
#[derive(Clone, Debug)]
pub struct ChandrasekharInit {
    pub state: ChandrasekharFilterState,
    /// `ΔP_{1|0}` before factorization.
    pub delta_p0: Mat,
}

/// One-time initialization: forms `ΔP_{1|0}`, factors it with Bunch-Kaufman
/// and trims it to displacement rank α.
pub fn chandrasekhar_init(
    model: &LtiModel,
    lambda: f64,
    variant: ChandrasekharVariant,
) -> Result<ChandrasekharFilterState> {
    let prep = PreparedModel::new(model)?;
    Ok(chandrasekhar_init_with(&prep, lambda, variant, None)?.state)
}

pub(crate) fn chandrasekhar_init_with(
    prep: &PreparedModel,
    lambda: f64,
    variant: ChandrasekharVariant,
    rank_tol: Option<f64>,
) -> Result<ChandrasekharInit> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "Chandrasekhar filters need a constant lambda > 0, got {lambda}"
        )));
    }
    let model = &prep.model;
    let (f, h, pi0) = (&model.f, &model.h, &model.pi0);
    let n = model.state_dim();

    // R^λ_{e,0} = R + λ H Π₀ Hᵀ
    let pi0_ht = pi0.mul_t(h)?;
    let mut re0 = model.r.add(&h.mul(&pi0_ht)?.scale(lambda))?;
    re0.symmetrize();
    let re0_chol = Cholesky::new(&re0)?;
    // K₀ = F Π₀ Hᵀ, K_{p,0} = K₀ [R^λ_{e,0}]⁻¹
    let k0 = f.mul(&pi0_ht)?;
    let kp0 = re0_chol.solve_right(&k0)?;

    let fpf = pi0.congruence(f)?;
    let gain_term = match variant {
        ChandrasekharVariant::Alg3 => k0.mul(&re0_chol.solve(&k0.transpose())?)?,
        _ => kp0.mul(&re0)?.mul_t(&kp0)?,
    };
    // ΔP_{1|0} = F Π₀ Fᵀ + G Q Gᵀ − λ K_{p,0} R^λ_{e,0} K_{p,0}ᵀ − Π₀
    let mut delta = fpf.add(&prep.gqg)?;
    delta.add_scaled_assign(-lambda, &gain_term)?;
    delta.add_scaled_assign(-1.0, pi0)?;
    delta.symmetrize();

    let scale = fpf
        .frobenius_norm()
        .max(prep.gqg.frobenius_norm())
        .max(pi0.frobenius_norm());
    let ldl = ldlt_bunch_kaufman(&delta)?;
    let factors = low_rank_trim_scaled(&ldl, rank_tol.unwrap_or(default_rank_tol(n)), scale)?;

    let (m_inv, re, re_inv, gain, re_chol) = match variant {
        ChandrasekharVariant::Alg1 | ChandrasekharVariant::Alg2 => {
            (None, Some(re0), None, kp0, Some(re0_chol))
        }
        ChandrasekharVariant::Alg3 => {
            let inv = re0_chol.inverse();
            (
                Some(invert_factor_core(&factors.m)?),
                None,
                Some(inv),
                k0,
                None,
            )
        }
        ChandrasekharVariant::Alg4 => (
            Some(invert_factor_core(&factors.m)?),
            Some(re0),
            None,
            kp0,
            Some(re0_chol),
        ),
    };
    debug_assert!(variant.propagates_m_inverse() == m_inv.is_some());

    Ok(ChandrasekharInit {
        state: ChandrasekharFilterState {
            variant,
            lambda,
            k: 0,
            x_pred: model.x0_mean.clone(),
            factors,
            m_inv,
            re,
            re_inv,
            gain,
            re_chol,
        },
        delta_p0: delta,
    })
}

fn step_with(
    state: &ChandrasekharFilterState,
    y: &Mat,
    model: &LtiModel,
    lambda: f64,
    variant: ChandrasekharVariant,
) -> Result<(ChandrasekharFilterState, StepRecord)> {
    if state.variant != variant {
        return Err(Error::InvalidArgument(format!(
            "state belongs to {}, not {variant}",
            state.variant
        )));
    }
    if lambda != state.lambda {
        return Err(Error::InvalidArgument(format!(
            "lambda {lambda} differs from the {} used at initialization",
            state.lambda
        )));
    }
    let prep = PreparedModel::new(model)?;
    let mut ws = ChandrasekharWorkspace::for_state(state);
    let mut next = state.clone();
    next.advance(y, &prep, &mut ws)
        .map_err(|e| e.at_step(state.k))?;
    Ok((
        next,
        StepRecord {
            innovation: ws.e,
            lambda,
        },
    ))
}

/// Algorithm 1 step (recursion with `K_{p,k+1}` in `L` and `R^λ_{e,k}` in `M`).
pub fn alg1_step(
    state: &ChandrasekharFilterState,
    y: &Mat,
    model: &LtiModel,
    lambda: f64,
) -> Result<(ChandrasekharFilterState, StepRecord)> {
    step_with(state, y, model, lambda, ChandrasekharVariant::Alg1)
}

/// Algorithm 2 step (recursion with `K_{p,k}` in `L` and `R^λ_{e,k+1}` in `M`).
pub fn alg2_step(
    state: &ChandrasekharFilterState,
    y: &Mat,
    model: &LtiModel,
    lambda: f64,
) -> Result<(ChandrasekharFilterState, StepRecord)> {
    step_with(state, y, model, lambda, ChandrasekharVariant::Alg2)
}

/// Algorithm 3 step (Sherman-Morrison-Woodbury propagation of `[R^λ_e]⁻¹`).
pub fn alg3_step(
    state: &ChandrasekharFilterState,
    y: &Mat,
    model: &LtiModel,
    lambda: f64,
) -> Result<(ChandrasekharFilterState, StepRecord)> {
    step_with(state, y, model, lambda, ChandrasekharVariant::Alg3)
}

/// Algorithm 4 step.
pub fn alg4_step(
    state: &ChandrasekharFilterState,
    y: &Mat,
    model: &LtiModel,
    lambda: f64,
) -> Result<(ChandrasekharFilterState, StepRecord)> {
    step_with(state, y, model, lambda, ChandrasekharVariant::Alg4)
}

/// `P_{k+1|k} = Π₀ + Σ_{j≤k} L_j M_j L_jᵀ`
pub fn reconstruct_covariance(history: &[LowRankFactors], pi0: &Mat) -> Result<Mat> {
    let mut p = pi0.clone();
    for f in history {
        if f.dim() != pi0.rows() {
            return Err(Error::shape(
                "reconstruct_covariance",
                pi0.shape(),
                f.l.shape(),
            ));
        }
        p.add_scaled_assign(1.0, &f.product())?;
    }
    p.symmetrize();
    Ok(p)
}

/// Checks both Chandrasekhar-type recursions between two consecutive states.
///
/// With `prev` at `k − 1` and `state` at `k`, evaluates
///
/// ```text
/// (F − λK_{p,k}H)   (ΔP_{k|k−1} + λ ΔP_{k|k−1} Hᵀ [R^λ_{e,k−1}]⁻¹ H ΔP_{k|k−1}) (·)ᵀ
/// (F − λK_{p,k−1}H) (ΔP_{k|k−1} − λ ΔP_{k|k−1} Hᵀ [R^λ_{e,k}]⁻¹   H ΔP_{k|k−1}) (·)ᵀ
/// ```
///
/// and returns the larger Frobenius distance to `ΔP_{k+1|k} = L_k M_k L_kᵀ`.
/// Inconsistent inputs (e.g. a non-SPD innovation covariance) yield `+∞`.
pub fn lemma1_residual(
    state: &ChandrasekharFilterState,
    prev: &ChandrasekharFilterState,
    model: &LtiModel,
    lambda: f64,
) -> f64 {
    lemma1_residuals(state, prev, model, lambda)
        .map(|(a, b)| a.max(b))
        .unwrap_or(f64::INFINITY)
}

/// Residuals of the first and second recursion separately.
pub fn lemma1_residuals(
    state: &ChandrasekharFilterState,
    prev: &ChandrasekharFilterState,
    model: &LtiModel,
    lambda: f64,
) -> Result<(f64, f64)> {
    let (f, h) = (&model.f, &model.h);
    let dp_prev = prev.delta_p();
    let dp = state.delta_p();
    let kp = state.normalized_gain()?;
    let kp_prev = prev.normalized_gain()?;
    let re = Cholesky::new(&state.innovation_cov()?)?;
    let re_prev = Cholesky::new(&prev.innovation_cov()?)?;

    let h_dp = h.mul(&dp_prev)?;
    let closed = |gain: &Mat, re: &Cholesky, sign: f64| -> Result<Mat> {
        let mut a = f.clone();
        a.add_scaled_assign(-lambda, &gain.mul(h)?)?;
        let mut mid = dp_prev.clone();
        mid.add_scaled_assign(sign * lambda, &h_dp.t_mul(&re.solve(&h_dp)?)?)?;
        mid.congruence(&a)
    };
    let first = closed(&kp, &re_prev, 1.0)?.sub(&dp)?.frobenius_norm();
    let second = closed(&kp_prev, &re, -1.0)?.sub(&dp)?.frobenius_norm();
    Ok((first, second))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::kernel::ADAPTIVE_LAMBDA;
    use crate::filters::riccati::{imcckf_riccati_step, RiccatiFilterState};
    use crate::filters::KernelStrategy;
    use crate::model::{satellite_model, satellite_model_with, Pi0Choice};

    fn step(s: &ChandrasekharFilterState, y: &Mat, m: &LtiModel) -> ChandrasekharFilterState {
        let f = match s.variant {
            ChandrasekharVariant::Alg1 => alg1_step,
            ChandrasekharVariant::Alg2 => alg2_step,
            ChandrasekharVariant::Alg3 => alg3_step,
            ChandrasekharVariant::Alg4 => alg4_step,
        };
        f(s, y, m, s.lambda).unwrap().0
    }

    #[test]
    fn zero_pi0_shortcut() {
        let model = satellite_model_with(0.63e-2, Pi0Choice::Zero).unwrap();
        let prep = PreparedModel::new(&model).unwrap();
        let init =
            chandrasekhar_init_with(&prep, ADAPTIVE_LAMBDA, ChandrasekharVariant::Alg2, None)
                .unwrap();
        assert_eq!(init.state.gain, Mat::zeros(4, 1));
        assert_eq!(init.state.re.as_ref().unwrap(), &model.r);
        assert_eq!(init.delta_p0, model.process_cov());
        assert_eq!(init.state.alpha(), 1);
        let p1 =
            reconstruct_covariance(std::slice::from_ref(&init.state.factors), &model.pi0).unwrap();
        assert_eq!(p1, Mat::diag(&[0.0, 0.0, 0.0, 0.63e-2]));
    }

    #[test]
    fn default_pi0_has_full_displacement_rank() {
        let model = satellite_model(0.63e-2).unwrap();
        for v in ChandrasekharVariant::ALL {
            let s = chandrasekhar_init(&model, ADAPTIVE_LAMBDA, v).unwrap();
            assert_eq!(s.alpha(), 4, "{v}");
        }
    }

    #[test]
    fn variants_match_riccati_short_run() {
        let model = satellite_model(0.63e-2).unwrap();
        let strategy = KernelStrategy::ConstantLambda(ADAPTIVE_LAMBDA);
        let ys: Vec<Mat> = (0..30)
            .map(|k| Mat::column(&[(k as f64).sin() * 5.0]))
            .collect();
        let mut reference = vec![RiccatiFilterState::initial(&model)];
        for y in &ys {
            let next = imcckf_riccati_step(reference.last().unwrap(), y, &model, strategy)
                .unwrap()
                .0;
            reference.push(next);
        }
        for v in ChandrasekharVariant::ALL {
            let mut s = chandrasekhar_init(&model, ADAPTIVE_LAMBDA, v).unwrap();
            let mut history = Vec::new();
            for (k, y) in ys.iter().enumerate() {
                history.push(s.factors.clone());
                let p = reconstruct_covariance(&history, &model.pi0).unwrap();
                let want = &reference[k + 1].p_pred;
                assert!(
                    p.sub(want).unwrap().max_abs() <= 1e-9 * want.max_abs(),
                    "{v} P at {k}"
                );
                s = step(&s, y, &model);
                let want = &reference[k + 1].x_pred;
                let err = s.x_pred.sub(want).unwrap().max_abs();
                assert!(err <= 1e-9 * (1.0 + want.max_abs()), "{v} x at {k}: {err}");
            }
        }
    }

    #[test]
    fn zero_rank_keeps_everything_constant() {
        // scalar random walk started at its steady state: ΔP_{1|0} = 0
        let lambda = 1.0;
        let q: f64 = 0.5;
        // P = P + q − P²/(P+1)  ⇒  P² − qP − q = 0
        let p = 0.5 * (q + (q * q + 4.0 * q).sqrt());
        let one = Mat::identity(1);
        let model = LtiModel::new(
            one.clone(),
            one.clone(),
            one.clone(),
            Mat::from_rows(&[[q]]).unwrap(),
            one.clone(),
            Mat::zeros(1, 1),
            Mat::from_rows(&[[p]]).unwrap(),
        )
        .unwrap();
        for v in ChandrasekharVariant::ALL {
            let s0 = chandrasekhar_init(&model, lambda, v).unwrap();
            assert_eq!(s0.alpha(), 0, "{v}");
            let mut s = s0.clone();
            for k in 0..5 {
                s = step(&s, &Mat::column(&[k as f64]), &model);
                assert_eq!(s.alpha(), 0);
                assert_eq!(s.gain, s0.gain);
                assert_eq!(s.re, s0.re);
                assert_eq!(s.re_inv, s0.re_inv);
            }
        }
    }

    #[test]
    fn recursion_residual_small_and_sensitive() {
        let model = satellite_model(0.63e-2).unwrap();
        for v in ChandrasekharVariant::ALL {
            let mut prev = chandrasekhar_init(&model, ADAPTIVE_LAMBDA, v).unwrap();
            for k in 0..20 {
                let cur = step(&prev, &Mat::column(&[k as f64 * 0.3]), &model);
                let r = lemma1_residual(&cur, &prev, &model, ADAPTIVE_LAMBDA);
                assert!(
                    r <= 1e-8 * (1.0 + prev.delta_p().frobenius_norm()),
                    "{v} {k}: {r}"
                );
                prev = cur;
            }
            let cur = step(&prev, &Mat::column(&[1.0]), &model);
            let mut bad = cur.clone();
            for i in 0..bad.alpha() {
                bad.factors.m[(i, i)] += 1e-3;
            }
            assert!(lemma1_residual(&bad, &prev, &model, ADAPTIVE_LAMBDA) > 1e-4);
        }
    }

    #[test]
    fn recursion_residual_scalar_exact_case() {
        // F = H = R = 1, Q = 0, Π₀ = 1, λ = 1: every quantity is a small rational
        let one = Mat::identity(1);
        let model = LtiModel::new(
            one.clone(),
            one.clone(),
            one.clone(),
            Mat::zeros(1, 1),
            one.clone(),
            Mat::zeros(1, 1),
            one,
        )
        .unwrap();
        let s0 = chandrasekhar_init(&model, 1.0, ChandrasekharVariant::Alg2).unwrap();
        let s1 = alg2_step(&s0, &Mat::column(&[0.0]), &model, 1.0).unwrap().0;
        assert!(lemma1_residual(&s1, &s0, &model, 1.0) < 1e-15);
    }

    #[test]
    fn step_rejects_mismatched_variant_or_lambda() {
        let model = satellite_model(0.63e-2).unwrap();
        let s = chandrasekhar_init(&model, 0.5, ChandrasekharVariant::Alg1).unwrap();
        let y = Mat::column(&[0.0]);
        assert!(alg2_step(&s, &y, &model, 0.5).is_err());
        assert!(alg1_step(&s, &y, &model, 0.6).is_err());
        assert!(chandrasekhar_init(&model, 0.0, ChandrasekharVariant::Alg1).is_err());
    }

    #[test]
    fn variant_names_roundtrip() {
        for v in ChandrasekharVariant::ALL {
            assert_eq!(v.name().parse::<ChandrasekharVariant>().unwrap(), v);
        }
        assert!("alg5".parse::<ChandrasekharVariant>().is_err());
    }
}
