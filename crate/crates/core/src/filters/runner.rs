//! Uniform driver over all filter implementations.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::chandrasekhar::{
    chandrasekhar_init_with, ChandrasekharFilterState, ChandrasekharVariant, ChandrasekharWorkspace,
};
use crate::filters::kernel::KernelStrategy;
use crate::filters::riccati::{RiccatiFilterState, RiccatiWorkspace};
use crate::filters::{PreparedModel, StepRecord};
use crate::linalg::Mat;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FilterKind {
    Kf,
    ImccRiccati,
    ImccTwoStage,
    Chandrasekhar(ChandrasekharVariant),
}

impl FilterKind {
    pub const ALL: [FilterKind; 7] = [
        FilterKind::Kf,
        FilterKind::ImccRiccati,
        FilterKind::ImccTwoStage,
        FilterKind::Chandrasekhar(ChandrasekharVariant::Alg1),
        FilterKind::Chandrasekhar(ChandrasekharVariant::Alg2),
        FilterKind::Chandrasekhar(ChandrasekharVariant::Alg3),
        FilterKind::Chandrasekhar(ChandrasekharVariant::Alg4),
    ];

    pub fn name(self) -> &'static str {
        match self {
            FilterKind::Kf => "kf",
            FilterKind::ImccRiccati => "imcc-riccati",
            FilterKind::ImccTwoStage => "imcc-two-stage",
            FilterKind::Chandrasekhar(v) => v.name(),
        }
    }

    pub fn is_chandrasekhar(self) -> bool {
        matches!(self, FilterKind::Chandrasekhar(_))
    }
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FilterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FilterKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = FilterKind::ALL.iter().map(|k| k.name()).collect();
                Error::Config(format!(
                    "unknown filter {s:?}; expected one of {}",
                    names.join(", ")
                ))
            })
    }
}

/// A filter together with its weighting strategy.
///
/// JSON form: `{"name": "alg2", "strategy": "adaptive"}`,
/// `{"name": "imcc-riccati", "strategy": "constant", "lambda": 0.5}` or
/// `{"name": "imcc-riccati", "strategy": "fixed_sigma", "sigma": 2.0}`.
/// The KF ignores the strategy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FilterSpecRepr", into = "FilterSpecRepr")]
pub struct FilterSpec {
    pub kind: FilterKind,
    pub strategy: KernelStrategy,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FilterSpecRepr {
    name: String,
    #[serde(default = "default_strategy_name")]
    strategy: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sigma: Option<f64>,
}

fn default_strategy_name() -> String {
    "adaptive".into()
}

impl TryFrom<FilterSpecRepr> for FilterSpec {
    type Error = Error;

    fn try_from(r: FilterSpecRepr) -> Result<Self> {
        let kind: FilterKind = r.name.parse()?;
        let need = |v: Option<f64>, what: &str| {
            v.ok_or_else(|| Error::Config(format!("strategy {:?} needs {what:?}", r.strategy)))
        };
        let strategy = match r.strategy.as_str() {
            "adaptive" => KernelStrategy::AdaptiveSigmaEqualsInnovationNorm,
            "constant" => KernelStrategy::ConstantLambda(need(r.lambda, "lambda")?),
            "fixed_sigma" => KernelStrategy::FixedSigma(need(r.sigma, "sigma")?),
            other => {
                return Err(Error::Config(format!(
                    "unknown strategy {other:?}; expected adaptive, constant or fixed_sigma"
                )))
            }
        };
        FilterSpec::new(kind, strategy)
    }
}

impl From<FilterSpec> for FilterSpecRepr {
    fn from(s: FilterSpec) -> Self {
        let (strategy, lambda, sigma) = match s.strategy {
            KernelStrategy::AdaptiveSigmaEqualsInnovationNorm => ("adaptive", None, None),
            KernelStrategy::ConstantLambda(l) => ("constant", Some(l), None),
            KernelStrategy::FixedSigma(sg) => ("fixed_sigma", None, Some(sg)),
        };
        FilterSpecRepr {
            name: s.kind.name().into(),
            strategy: strategy.into(),
            lambda,
            sigma,
        }
    }
}

impl FilterSpec {
    /// Rejects invalid strategies and varying weights on Chandrasekhar filters.
    pub fn new(kind: FilterKind, strategy: KernelStrategy) -> Result<Self> {
        strategy
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        if kind.is_chandrasekhar() && strategy.constant_lambda().is_none() {
            return Err(Error::Config(format!(
                "{kind} needs a constant adjusting weight; strategy {strategy} varies with the innovation"
            )));
        }
        Ok(FilterSpec { kind, strategy })
    }

    pub fn adaptive(kind: FilterKind) -> Self {
        FilterSpec {
            kind,
            strategy: KernelStrategy::AdaptiveSigmaEqualsInnovationNorm,
        }
    }

    pub fn label(&self) -> LambdaLabel {
        match self.strategy {
            KernelStrategy::ConstantLambda(l) => LambdaLabel::Value(l),
            other => LambdaLabel::Label(other.to_string()),
        }
    }
}

/// λ as reported in outputs: a number, `"adaptive"` or `"sigma=<σ>"`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LambdaLabel {
    Value(f64),
    Label(String),
}

impl fmt::Display for LambdaLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LambdaLabel::Value(v) => write!(f, "{v}"),
            LambdaLabel::Label(s) => f.write_str(s),
        }
    }
}

#[derive(Clone, Debug)]
#[allow(clippy::large_enum_variant)]
enum Engine {
    Riccati {
        state: RiccatiFilterState,
        ws: RiccatiWorkspace,
    },
    Chandrasekhar {
        state: ChandrasekharFilterState,
        ws: ChandrasekharWorkspace,
        /// `P_{k|k−1}` accumulated from the increments, when requested.
        covariance: Option<Mat>,
    },
}

/// A running filter instance.
#[derive(Clone, Debug)]
pub struct Filter {
    spec: FilterSpec,
    prep: PreparedModel,
    engine: Engine,
}

impl Filter {
    pub fn new(spec: FilterSpec, prep: PreparedModel) -> Result<Self> {
        let spec = FilterSpec::new(spec.kind, spec.strategy)?;
        let engine = match spec.kind {
            FilterKind::Chandrasekhar(v) => {
                let lambda = spec
                    .strategy
                    .constant_lambda()
                    .expect("checked by FilterSpec::new");
                let state = chandrasekhar_init_with(&prep, lambda, v, None)?.state;
                Engine::Chandrasekhar {
                    ws: ChandrasekharWorkspace::for_state(&state),
                    state,
                    covariance: None,
                }
            }
            _ => Engine::Riccati {
                state: RiccatiFilterState::initial(&prep.model),
                ws: RiccatiWorkspace::new(&prep.model),
            },
        };
        Ok(Filter { spec, prep, engine })
    }

    pub fn spec(&self) -> FilterSpec {
        self.spec
    }

    pub fn model(&self) -> &crate::model::LtiModel {
        &self.prep.model
    }

    /// Time index `k` of the current a priori estimate.
    pub fn k(&self) -> usize {
        match &self.engine {
            Engine::Riccati { state, .. } => state.k,
            Engine::Chandrasekhar { state, .. } => state.k,
        }
    }

    /// `x̂_{k|k−1}`
    pub fn prediction(&self) -> &Mat {
        match &self.engine {
            Engine::Riccati { state, .. } => &state.x_pred,
            Engine::Chandrasekhar { state, .. } => &state.x_pred,
        }
    }

    /// Displacement rank, for Chandrasekhar filters.
    pub fn alpha(&self) -> Option<usize> {
        match &self.engine {
            Engine::Riccati { .. } => None,
            Engine::Chandrasekhar { state, .. } => Some(state.alpha()),
        }
    }

    pub fn chandrasekhar_state(&self) -> Option<&ChandrasekharFilterState> {
        match &self.engine {
            Engine::Chandrasekhar { state, .. } => Some(state),
            Engine::Riccati { .. } => None,
        }
    }

    /// Starts accumulating `P_{k|k−1}` for Chandrasekhar filters. Only valid
    /// before the first step.
    pub fn track_covariance(&mut self) -> Result<()> {
        if let Engine::Chandrasekhar {
            state, covariance, ..
        } = &mut self.engine
        {
            if state.k != 0 {
                return Err(Error::InvalidArgument(
                    "covariance tracking must be enabled before the first step".into(),
                ));
            }
            *covariance = Some(self.prep.model.pi0.clone());
        }
        Ok(())
    }

    /// `P_{k|k−1}`, if available.
    pub fn covariance(&self) -> Option<&Mat> {
        match &self.engine {
            Engine::Riccati { state, .. } => Some(&state.p_pred),
            Engine::Chandrasekhar { covariance, .. } => covariance.as_ref(),
        }
    }

    /// Consumes `y_k` and moves to `x̂_{k+1|k}`.
    pub fn step(&mut self, y: &Mat) -> Result<StepRecord> {
        let lambda = self.advance(y)?;
        let innovation = match &self.engine {
            Engine::Riccati { ws, .. } => ws.e.clone(),
            Engine::Chandrasekhar { ws, .. } => ws.e.clone(),
        };
        Ok(StepRecord { innovation, lambda })
    }

    /// Like [`Filter::step`] but only returns λ_k.
    pub fn advance(&mut self, y: &Mat) -> Result<f64> {
        let k = self.k();
        let m = self.prep.model.meas_dim();
        if y.shape() != (m, 1) {
            return Err(Error::Data(format!(
                "measurement {k} has shape {:?}, model expects {m}x1",
                y.shape()
            ))
            .at_step(k));
        }
        let strategy = self.spec.strategy;
        let prep = &self.prep;
        let res = match &mut self.engine {
            Engine::Riccati { state, ws } => match self.spec.kind {
                FilterKind::Kf => state.advance_kf(y, prep, ws),
                FilterKind::ImccRiccati => state.advance_imcc(y, prep, strategy, ws),
                FilterKind::ImccTwoStage => state
                    .advance_two_stage(y, prep, strategy)
                    .map(|(_, rec)| rec.lambda),
                FilterKind::Chandrasekhar(_) => unreachable!(),
            },
            Engine::Chandrasekhar {
                state,
                ws,
                covariance,
            } => (|| {
                if let Some(p) = covariance {
                    p.add_scaled_assign(1.0, &state.delta_p())?;
                    p.symmetrize();
                }
                state.advance(y, prep, ws)?;
                Ok(state.lambda)
            })(),
        };
        res.map_err(|e| e.at_step(k))
    }
}

/// Result of running one filter over a measurement sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterOutput {
    pub filter: String,
    pub lambda: LambdaLabel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<usize>,
    /// `x̂_{k|k−1}` for `k = 0..=N`, each as a plain vector.
    pub x_pred: Vec<Vec<f64>>,
    pub innovations: Vec<Vec<f64>>,
    /// λ_k actually applied at each step.
    pub lambdas: Vec<f64>,
    /// Wall-clock time of the recursion loop.
    pub elapsed_ns: u64,
    /// Wall-clock time of the one-time initialization.
    pub init_ns: u64,
}

/// Runs `spec` over `measurements` (`y_0..y_N`), recording the a priori
/// estimate before each step.
pub fn run_filter(
    spec: FilterSpec,
    prep: &PreparedModel,
    measurements: &[Mat],
) -> Result<FilterOutput> {
    let t0 = Instant::now();
    let mut filter = Filter::new(spec, prep.clone())?;
    let init_ns = t0.elapsed().as_nanos() as u64;

    let n = measurements.len();
    let mut x_pred = Vec::with_capacity(n);
    let mut innovations = Vec::with_capacity(n);
    let mut lambdas = Vec::with_capacity(n);
    let t1 = Instant::now();
    for y in measurements {
        x_pred.push(filter.prediction().as_slice().to_vec());
        let rec = filter.step(y)?;
        innovations.push(rec.innovation.into_vec());
        lambdas.push(rec.lambda);
    }
    let elapsed_ns = t1.elapsed().as_nanos() as u64;

    Ok(FilterOutput {
        filter: spec.kind.name().into(),
        lambda: spec.label(),
        alpha: filter.alpha(),
        x_pred,
        innovations,
        lambdas,
        elapsed_ns,
        init_ns,
    })
}

/// Only the a priori estimates, with the loop time; used by the benchmark.
pub(crate) fn run_estimates(
    spec: FilterSpec,
    prep: &PreparedModel,
    measurements: &[Mat],
    out: &mut Vec<Mat>,
) -> Result<(u64, Option<usize>)> {
    let mut filter = Filter::new(spec, prep.clone())?;
    out.truncate(measurements.len());
    let t = Instant::now();
    for (k, y) in measurements.iter().enumerate() {
        match out.get_mut(k) {
            Some(slot) => slot.clone_from(filter.prediction()),
            None => out.push(filter.prediction().clone()),
        }
        filter.advance(y)?;
    }
    Ok((t.elapsed().as_nanos() as u64, filter.alpha()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::satellite_model;

    #[test]
    fn spec_json_forms() {
        let s: FilterSpec = serde_json::from_str(r#"{"name":"alg2"}"#).unwrap();
        assert_eq!(
            s,
            FilterSpec::adaptive(FilterKind::Chandrasekhar(ChandrasekharVariant::Alg2))
        );
        let s: FilterSpec =
            serde_json::from_str(r#"{"name":"imcc-riccati","strategy":"constant","lambda":0.5}"#)
                .unwrap();
        assert_eq!(s.strategy, KernelStrategy::ConstantLambda(0.5));
        let back = serde_json::to_string(&s).unwrap();
        assert_eq!(
            back,
            r#"{"name":"imcc-riccati","strategy":"constant","lambda":0.5}"#
        );
        assert!(serde_json::from_str::<FilterSpec>(r#"{"name":"ekf"}"#).is_err());
        assert!(
            serde_json::from_str::<FilterSpec>(r#"{"name":"kf","strategy":"constant"}"#).is_err()
        );
        let err = serde_json::from_str::<FilterSpec>(
            r#"{"name":"alg3","strategy":"fixed_sigma","sigma":2.0}"#,
        );
        assert!(err.is_err());
    }

    #[test]
    fn fixed_sigma_rejected_for_chandrasekhar() {
        let kind = FilterKind::Chandrasekhar(ChandrasekharVariant::Alg3);
        let e = FilterSpec::new(kind, KernelStrategy::FixedSigma(1.0)).unwrap_err();
        assert!(matches!(e, Error::Config(_)));
        assert!(FilterSpec::new(FilterKind::ImccRiccati, KernelStrategy::FixedSigma(1.0)).is_ok());
    }

    #[test]
    fn output_lengths_and_first_prediction() {
        let model = satellite_model(0.63e-2).unwrap();
        let prep = PreparedModel::new(&model).unwrap();
        let ys: Vec<Mat> = (0..11).map(|k| Mat::column(&[k as f64])).collect();
        for kind in FilterKind::ALL {
            let out = run_filter(FilterSpec::adaptive(kind), &prep, &ys).unwrap();
            assert_eq!(out.x_pred.len(), 11);
            assert_eq!(out.innovations.len(), 11);
            assert_eq!(out.x_pred[0], vec![0.0; 4]);
            assert_eq!(out.alpha.is_some(), kind.is_chandrasekhar());
        }
    }

    #[test]
    fn tracked_covariance_matches_riccati() {
        let model = satellite_model(0.63e-2).unwrap();
        let prep = PreparedModel::new(&model).unwrap();
        let mut ric =
            Filter::new(FilterSpec::adaptive(FilterKind::ImccRiccati), prep.clone()).unwrap();
        let mut ch = Filter::new(
            FilterSpec::adaptive(FilterKind::Chandrasekhar(ChandrasekharVariant::Alg4)),
            prep,
        )
        .unwrap();
        ch.track_covariance().unwrap();
        for k in 0..25 {
            let y = Mat::column(&[(k as f64 * 0.7).cos()]);
            let a = ric.covariance().unwrap();
            let b = ch.covariance().unwrap();
            assert!(a.sub(b).unwrap().max_abs() < 1e-9 * a.max_abs());
            ric.step(&y).unwrap();
            ch.step(&y).unwrap();
        }
        assert!(ch.track_covariance().is_err());
    }

    #[test]
    fn wrong_measurement_shape_is_data_error() {
        let model = satellite_model(0.63e-2).unwrap();
        let prep = PreparedModel::new(&model).unwrap();
        let ys = vec![Mat::column(&[1.0, 2.0])];
        let e = run_filter(FilterSpec::adaptive(FilterKind::Kf), &prep, &ys).unwrap_err();
        assert!(matches!(e.root(), Error::Data(_)), "{e}");
    }
}
