//! Numerical cross-checks between the Riccati and Chandrasekhar filters.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::filters::chandrasekhar::{chandrasekhar_init_with, ChandrasekharWorkspace};
use crate::filters::riccati::RiccatiWorkspace;
use crate::filters::{
    lemma1_residuals, ChandrasekharVariant, KernelStrategy, PreparedModel, RiccatiFilterState,
    ADAPTIVE_LAMBDA,
};
use crate::linalg::{spd_inverse, Mat};
use crate::model::LtiModel;
use crate::sim::{simulate, ShotNoiseSpec};

#[derive(Clone, Debug)]
pub struct VerifyOptions {
    pub n_steps: usize,
    pub seed: u64,
    pub shot: Option<ShotNoiseSpec>,
    /// Constant λ used by the filters under test.
    pub lambda: f64,
    /// λ of the Riccati reference; differs from `lambda` only to inject a fault.
    pub oracle_lambda: Option<f64>,
    pub tol: f64,
    pub degeneracy_tol: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            n_steps: 300,
            seed: 0,
            shot: Some(ShotNoiseSpec::default()),
            lambda: ADAPTIVE_LAMBDA,
            oracle_lambda: None,
            tol: 1e-8,
            degeneracy_tol: 1e-12,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub max_value: f64,
    pub tolerance: f64,
    /// Step at which `max_value` occurred.
    pub worst_step: Option<usize>,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifyReport {
    pub alpha: usize,
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

/// Running maximum with the step where it was attained. NaN counts as a
/// failure.
struct Worst {
    value: f64,
    step: Option<usize>,
}

impl Worst {
    fn new() -> Self {
        Worst {
            value: 0.0,
            step: None,
        }
    }

    fn update(&mut self, v: f64, step: usize) {
        let v = if v.is_nan() { f64::INFINITY } else { v };
        if self.step.is_none() || v > self.value {
            self.value = v;
            self.step = Some(step);
        }
    }

    fn check(self, name: String, tolerance: f64) -> CheckResult {
        CheckResult {
            name,
            max_value: self.value,
            tolerance,
            worst_step: self.step,
            passed: self.value <= tolerance,
        }
    }
}

fn rel(diff: f64, scale: f64) -> f64 {
    if diff == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Relative vector error `‖a − b‖∞ / max(1, ‖b‖∞)`.
fn state_error(a: &Mat, b: &Mat) -> Result<f64> {
    Ok(a.sub(b)?.max_abs() / b.max_abs().max(1.0))
}

/// Stationary a priori covariance of the IMCC-KF with constant `lambda`,
/// obtained by iterating the Riccati recursion from zero.
pub fn steady_state_covariance(model: &LtiModel, lambda: f64) -> Result<Mat> {
    let prep = PreparedModel::new(
        &model
            .clone()
            .with_pi0(Mat::zeros(model.state_dim(), model.state_dim()))?,
    )?;
    let strategy = KernelStrategy::ConstantLambda(lambda);
    strategy.validate()?;
    let mut s = RiccatiFilterState::initial(&prep.model);
    let mut ws = RiccatiWorkspace::new(model);
    let y = Mat::zeros(model.meas_dim(), 1);
    for _ in 0..200_000 {
        let before = s.p_pred.clone();
        s.advance_imcc(&y, &prep, strategy, &mut ws)?;
        let change = s.p_pred.sub(&before)?.frobenius_norm();
        if change <= 1e-15 * s.p_pred.frobenius_norm() {
            return Ok(s.p_pred);
        }
    }
    Err(Error::InvalidModel(
        "Riccati recursion did not reach a steady state".into(),
    ))
}

/// Runs all cross-checks on one simulated trajectory.
pub fn verify_model(model: &LtiModel, opts: &VerifyOptions) -> Result<VerifyReport> {
    let prep = PreparedModel::new(model)?;
    let traj = simulate(model, opts.n_steps, opts.shot.as_ref(), opts.seed)?;
    let ys: Vec<Mat> = (0..=opts.n_steps).map(|k| traj.measurement(k)).collect();
    let oracle = KernelStrategy::ConstantLambda(opts.oracle_lambda.unwrap_or(opts.lambda));
    oracle.validate()?;

    // reference: x̂_{k|k−1}, P_{k|k−1} for k = 0..=N+1
    let mut reference = Vec::with_capacity(ys.len() + 1);
    let mut s = RiccatiFilterState::initial(model);
    let mut rws = RiccatiWorkspace::new(model);
    reference.push(s.clone());
    for (k, y) in ys.iter().enumerate() {
        s.advance_imcc(y, &prep, oracle, &mut rws)
            .map_err(|e| e.at_step(k))?;
        reference.push(s.clone());
    }

    let mut checks = Vec::new();
    let mut alpha = 0;
    for v in ChandrasekharVariant::ALL {
        let mut state = chandrasekhar_init_with(&prep, opts.lambda, v, None)?.state;
        alpha = state.alpha();
        let alpha0 = alpha;
        let mut ws = ChandrasekharWorkspace::for_state(&state);
        let gain0 = state.gain.clone();
        let mut p = model.pi0.clone();
        let mut x_err = Worst::new();
        let mut p_err = Worst::new();
        let mut recursion = Worst::new();
        let mut woodbury = Worst::new();
        let mut rank = Worst::new();
        for (k, y) in ys.iter().enumerate() {
            let r = &reference[k];
            x_err.update(state_error(&state.x_pred, &r.x_pred)?, k);
            p_err.update(
                rel(
                    p.sub(&r.p_pred)?.frobenius_norm(),
                    r.p_pred.frobenius_norm(),
                ),
                k,
            );
            if v == ChandrasekharVariant::Alg3 {
                let mut re = model.r.clone();
                re.add_scaled_assign(opts.lambda, &r.p_pred.congruence(&model.h)?)?;
                let direct = spd_inverse(&re.symmetrized())?;
                let propagated = state.re_inv.as_ref().expect("Alg3 carries the inverse");
                woodbury.update(
                    rel(
                        propagated.sub(&direct)?.frobenius_norm(),
                        direct.frobenius_norm(),
                    ),
                    k,
                );
            }
            if alpha0 == 0 {
                rank.update(state.gain.sub(&gain0)?.max_abs(), k);
            }
            rank.update((state.alpha() as f64 - alpha0 as f64).abs(), k);

            p.add_scaled_assign(1.0, &state.delta_p())?;
            p.symmetrize();
            let prev = state.clone();
            state.advance(y, &prep, &mut ws).map_err(|e| e.at_step(k))?;
            let scale = 1.0
                + prev
                    .delta_p()
                    .frobenius_norm()
                    .max(state.delta_p().frobenius_norm());
            let lemma_res = lemma1_residuals(&state, &prev, model, opts.lambda)
                .map_or(f64::INFINITY, |(a, b)| a.max(b));
            recursion.update(lemma_res / scale, k + 1);
        }
        let last = ys.len();
        x_err.update(state_error(&state.x_pred, &reference[last].x_pred)?, last);

        checks.push(x_err.check(format!("{v}: a priori state vs Riccati"), opts.tol));
        checks.push(p_err.check(format!("{v}: covariance vs Riccati"), opts.tol));
        checks.push(recursion.check(format!("{v}: Chandrasekhar recursions"), opts.tol));
        if v == ChandrasekharVariant::Alg3 {
            checks.push(woodbury.check(format!("{v}: propagated inverse vs direct"), opts.tol));
        }
        let name = if alpha0 == 0 {
            format!("{v}: factors constant (alpha = 0)")
        } else {
            format!("{v}: displacement rank constant (alpha = {alpha0})")
        };
        checks.push(rank.check(name, 0.0));
    }

    // λ = 1 must reproduce the classical filter
    let mut kf = RiccatiFilterState::initial(model);
    let mut one = kf.clone();
    let mut degen = Worst::new();
    for (k, y) in ys.iter().enumerate() {
        kf.advance_kf(y, &prep, &mut rws)
            .map_err(|e| e.at_step(k))?;
        one.advance_imcc(y, &prep, KernelStrategy::ConstantLambda(1.0), &mut rws)
            .map_err(|e| e.at_step(k))?;
        let dx = one.x_pred.sub(&kf.x_pred)?.max_abs();
        let dp = one.p_pred.sub(&kf.p_pred)?.max_abs();
        degen.update(dx.max(dp), k + 1);
    }
    checks.push(degen.check(
        "imcc (lambda = 1) vs classical KF".into(),
        opts.degeneracy_tol,
    ));

    Ok(VerifyReport { alpha, checks })
}
