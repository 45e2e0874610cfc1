use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::{Cholesky, Mat};

/// `exp(−1/2)`: the adjusting weight produced when the kernel size equals the
/// innovation norm.
pub const ADAPTIVE_LAMBDA: f64 = 0.606_530_659_712_633_4;

/// How the scalar adjusting weight λ_k is chosen.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub enum KernelStrategy {
    ConstantLambda(f64),
    /// σ_k = ‖e_k‖_{R⁻¹}, which pins λ_k to `exp(−1/2)` for any nonzero
    /// innovation. A zero innovation gives λ_k = 1.
    #[default]
    AdaptiveSigmaEqualsInnovationNorm,
    /// Fixed kernel size; λ_k varies with the innovation, so only the
    /// Riccati-form filters accept it.
    FixedSigma(f64),
}

impl KernelStrategy {
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelStrategy::ConstantLambda(l) if !(l > 0.0 && l.is_finite()) => Err(
                Error::InvalidArgument(format!("constant lambda must be positive, got {l}")),
            ),
            KernelStrategy::FixedSigma(s) if !(s > 0.0 && s.is_finite()) => Err(
                Error::InvalidArgument(format!("kernel size must be positive, got {s}")),
            ),
            _ => Ok(()),
        }
    }

    /// The constant λ this strategy yields, if it yields one.
    pub fn constant_lambda(&self) -> Option<f64> {
        match *self {
            KernelStrategy::ConstantLambda(l) => Some(l),
            KernelStrategy::AdaptiveSigmaEqualsInnovationNorm => Some(ADAPTIVE_LAMBDA),
            KernelStrategy::FixedSigma(_) => None,
        }
    }
}

impl fmt::Display for KernelStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelStrategy::ConstantLambda(l) => write!(f, "{l}"),
            KernelStrategy::AdaptiveSigmaEqualsInnovationNorm => write!(f, "adaptive"),
            KernelStrategy::FixedSigma(s) => write!(f, "sigma={s}"),
        }
    }
}

/// Parses `adaptive`, a number (constant λ), or `sigma=<number>`.
impl FromStr for KernelStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let strategy = if s.eq_ignore_ascii_case("adaptive") {
            KernelStrategy::AdaptiveSigmaEqualsInnovationNorm
        } else if let Some(rest) = s.strip_prefix("sigma=") {
            KernelStrategy::FixedSigma(
                rest.parse()
                    .map_err(|_| Error::InvalidArgument(format!("bad kernel size in {s:?}")))?,
            )
        } else {
            KernelStrategy::ConstantLambda(s.parse().map_err(|_| {
                Error::InvalidArgument(format!(
                    "expected `adaptive`, a number, or `sigma=<number>`, got {s:?}"
                ))
            })?)
        };
        strategy.validate()?;
        Ok(strategy)
    }
}

/// Gaussian kernel `exp(−u² / (2σ²))`.
pub fn gaussian_kernel(u: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "kernel size must be positive, got {sigma}"
        )));
    }
    Ok((-(u * u) / (2.0 * sigma * sigma)).exp())
}

/// Adjusting weight λ_k for innovation `e_k`, with `r` the factored
/// measurement covariance.
///
/// For `FixedSigma` the denominator kernel is evaluated at
/// `‖x̂_{k|k−1} − F x̂_{k−1|k−1}‖`, which is identically zero because the a
/// priori estimate *is* `F x̂_{k−1|k−1}`; so λ_k = k_σ(‖e_k‖_{R⁻¹}) / k_σ(0).
pub fn lambda_weight(ek: &Mat, r: &Cholesky, strategy: KernelStrategy) -> Result<f64> {
    match strategy {
        KernelStrategy::ConstantLambda(l) => Ok(l),
        KernelStrategy::AdaptiveSigmaEqualsInnovationNorm => {
            let sigma = r.inv_quadratic_form(ek)?.sqrt();
            if sigma == 0.0 {
                Ok(1.0)
            } else {
                gaussian_kernel(sigma, sigma)
            }
        }
        KernelStrategy::FixedSigma(sigma) => {
            let norm = r.inv_quadratic_form(ek)?.sqrt();
            Ok(gaussian_kernel(norm, sigma)? / gaussian_kernel(0.0, sigma)?)
        }
    }
}
