use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{psd_sqrt, Cholesky, Mat};

/// Linear time-invariant state-space model
///
/// ```text
/// x_{k+1} = F x_k + G w_k,   w_k ~ (0, Q)
/// y_k     = H x_k + v_k,     v_k ~ (0, R)
/// x_0 ~ (x̄₀, Π₀)
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LtiModel {
    #[serde(rename = "F")]
    pub f: Mat,
    #[serde(rename = "G")]
    pub g: Mat,
    #[serde(rename = "H")]
    pub h: Mat,
    #[serde(rename = "Q")]
    pub q: Mat,
    #[serde(rename = "R")]
    pub r: Mat,
    pub x0_mean: Mat,
    #[serde(rename = "Pi0")]
    pub pi0: Mat,
}

/// Initial covariance choices used by the satellite benchmark.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pi0Choice {
    /// `diag(1, 1, 1, 10⁻²)`
    Paper,
    Zero,
}

pub const SATELLITE_PI0_DIAG: [f64; 4] = [1.0, 1.0, 1.0, 1e-2];

impl LtiModel {
    /// Validates dimensions and the covariance requirements
    /// (Q, Π₀ symmetric PSD; R symmetric PD).
    pub fn new(f: Mat, g: Mat, h: Mat, q: Mat, r: Mat, x0_mean: Mat, pi0: Mat) -> Result<Self> {
        let m = LtiModel {
            f,
            g,
            h,
            q,
            r,
            x0_mean,
            pi0,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn state_dim(&self) -> usize {
        self.f.rows()
    }

    pub fn meas_dim(&self) -> usize {
        self.h.rows()
    }

    pub fn noise_dim(&self) -> usize {
        self.g.cols()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.f.rows();
        let bad = |what: String| Err(Error::InvalidModel(what));
        if !self.f.is_square() {
            return bad(format!("F must be square, got {:?}", self.f.shape()));
        }
        if self.g.rows() != n {
            return bad(format!("G must have {n} rows, got {:?}", self.g.shape()));
        }
        let q = self.g.cols();
        if self.h.cols() != n {
            return bad(format!("H must have {n} columns, got {:?}", self.h.shape()));
        }
        let m = self.h.rows();
        if self.q.shape() != (q, q) {
            return bad(format!("Q must be {q}x{q}, got {:?}", self.q.shape()));
        }
        if self.r.shape() != (m, m) {
            return bad(format!("R must be {m}x{m}, got {:?}", self.r.shape()));
        }
        if self.x0_mean.shape() != (n, 1) {
            return bad(format!(
                "x0_mean must be {n}x1, got {:?}",
                self.x0_mean.shape()
            ));
        }
        if self.pi0.shape() != (n, n) {
            return bad(format!("Pi0 must be {n}x{n}, got {:?}", self.pi0.shape()));
        }
        psd_sqrt(&self.q, SAMPLING_ZERO_TOL).map_err(|e| Error::InvalidModel(format!("Q: {e}")))?;
        psd_sqrt(&self.pi0, SAMPLING_ZERO_TOL)
            .map_err(|e| Error::InvalidModel(format!("Pi0: {e}")))?;
        Cholesky::new(&self.r).map_err(|e| Error::InvalidModel(format!("R: {e}")))?;
        Ok(())
    }

    /// `G·Q·Gᵀ`
    pub fn process_cov(&self) -> Mat {
        self.q
            .congruence(&self.g)
            .expect("validated dimensions")
            .symmetrized()
    }

    pub fn with_pi0(mut self, pi0: Mat) -> Result<Self> {
        self.pi0 = pi0;
        self.validate()?;
        Ok(self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })?;
        let m: LtiModel = serde_json::from_str(&text).map_err(|source| Error::Json {
            context: format!("model file {}", path.display()),
            source,
        })?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("model serializes");
        std::fs::write(path, text).map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })
    }
}

/// Zero-pivot tolerance for semidefinite square roots used in sampling.
pub const SAMPLING_ZERO_TOL: f64 = 1e-12;

/// In-track motion of a satellite on a circular orbit: four states, position
/// measured with unit noise, process noise on the last state only.
pub fn satellite_model(q4: f64) -> Result<LtiModel> {
    satellite_model_with(q4, Pi0Choice::Paper)
}

pub fn satellite_model_with(q4: f64, pi0: Pi0Choice) -> Result<LtiModel> {
    if !(q4 > 0.0) || !q4.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "q4 must be positive, got {q4}"
        )));
    }
    let f = Mat::from_rows(&[
        [1.0, 1.0, 0.5, 0.5],
        [0.0, 1.0, 1.0, 1.0],
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 0.606],
    ])?;
    let pi0 = match pi0 {
        Pi0Choice::Paper => Mat::diag(&SATELLITE_PI0_DIAG),
        Pi0Choice::Zero => Mat::zeros(4, 4),
    };
    LtiModel::new(
        f,
        Mat::identity(4),
        Mat::from_rows(&[[1.0, 0.0, 0.0, 0.0]])?,
        Mat::diag(&[0.0, 0.0, 0.0, q4]),
        Mat::identity(1),
        Mat::zeros(4, 1),
        pi0,
    )
}
