//! Trajectory generation under Gaussian plus impulsive (shot) noise.
//!
//! Randomness comes from ChaCha20 (`rand_chacha`), seeded with
//! `seed_from_u64(seed)`. Stream 0 drives the Gaussian draws; stream 1 drives
//! the shot-noise schedule, so the corrupted instants and impulse magnitudes
//! depend only on `(seed, ShotNoiseSpec, N)` and not on the model.
//!
//! Gaussian draw order: `x₀` (n normals), then for each `k = 0..=N` the
//! measurement noise `v_k` (m normals) followed, for `k < N`, by the process
//! noise `w_k` (q normals).

use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{psd_sqrt, Cholesky, Mat};
use crate::model::{LtiModel, SAMPLING_ZERO_TOL};

/// Which process-noise channels receive impulses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProcessTargets {
    /// Channels whose `Q` diagonal entry is nonzero.
    NonzeroVariance,
    None,
    Channels(Vec<usize>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShotTargets {
    /// Every measurement component receives an impulse at a corrupted instant.
    pub measurement: bool,
    pub process: ProcessTargets,
}

impl Default for ShotTargets {
    fn default() -> Self {
        ShotTargets {
            measurement: true,
            process: ProcessTargets::NonzeroVariance,
        }
    }
}

/// Impulsive noise: a fraction of the instants in `[window_start, window_end]`
/// (sampled without replacement) get impulses whose magnitudes are drawn
/// uniformly from `magnitudes`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShotNoiseSpec {
    pub fraction: f64,
    pub window_start: usize,
    /// `None` means `N − 1`.
    pub window_end: Option<usize>,
    pub magnitudes: Vec<f64>,
    pub targets: ShotTargets,
}

impl Default for ShotNoiseSpec {
    fn default() -> Self {
        ShotNoiseSpec {
            fraction: 0.10,
            window_start: 21,
            window_end: None,
            magnitudes: vec![0.0, 1.0, 2.0, 3.0],
            targets: ShotTargets::default(),
        }
    }
}

impl ShotNoiseSpec {
    /// Inclusive window for a run of `n_steps`.
    pub fn window(&self, n_steps: usize) -> Result<(usize, usize)> {
        let end = match self.window_end {
            Some(e) => e,
            None => n_steps
                .checked_sub(1)
                .ok_or_else(|| Error::InvalidArgument("shot window needs N >= 1".into()))?,
        };
        if self.window_start > end || end >= n_steps {
            return Err(Error::InvalidArgument(format!(
                "shot window [{}, {end}] is outside [0, {}]",
                self.window_start,
                n_steps.saturating_sub(1)
            )));
        }
        Ok((self.window_start, end))
    }

    /// `round(fraction · window length)`.
    pub fn corrupted_count(&self, n_steps: usize) -> Result<usize> {
        let (start, end) = self.window(n_steps)?;
        Ok((self.fraction * (end - start + 1) as f64).round() as usize)
    }

    fn validate(&self, n_steps: usize, model: &LtiModel) -> Result<()> {
        if !(0.0..=1.0).contains(&self.fraction) {
            return Err(Error::InvalidArgument(format!(
                "shot fraction must lie in [0, 1], got {}",
                self.fraction
            )));
        }
        if self.magnitudes.is_empty() || self.magnitudes.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidArgument(
                "shot magnitudes must be a non-empty set of finite values".into(),
            ));
        }
        if let ProcessTargets::Channels(ch) = &self.targets.process {
            if let Some(&bad) = ch.iter().find(|&&c| c >= model.noise_dim()) {
                return Err(Error::InvalidArgument(format!(
                    "shot target channel {bad} out of range for q = {}",
                    model.noise_dim()
                )));
            }
        }
        self.window(n_steps).map(|_| ())
    }

    fn process_channels(&self, model: &LtiModel) -> Vec<usize> {
        match &self.targets.process {
            ProcessTargets::NonzeroVariance => (0..model.noise_dim())
                .filter(|&i| model.q[(i, i)] != 0.0)
                .collect(),
            ProcessTargets::None => Vec::new(),
            ProcessTargets::Channels(ch) => ch.clone(),
        }
    }
}

/// One simulated run: `states[k] = x_k` and `measurements[k] = y_k` for
/// `k = 0..=N`, plus the noise realizations that produced them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub seed: u64,
    #[serde(rename = "N")]
    pub n_steps: usize,
    pub states: Vec<Vec<f64>>,
    pub measurements: Vec<Vec<f64>>,
    /// `w_k` for `k = 0..N−1`.
    #[serde(default)]
    pub process_noise: Vec<Vec<f64>>,
    /// `v_k` for `k = 0..=N`.
    #[serde(default)]
    pub measurement_noise: Vec<Vec<f64>>,
    #[serde(default)]
    pub corrupted_instants: Vec<usize>,
}

impl Trajectory {
    pub fn state_dim(&self) -> usize {
        self.states.first().map_or(0, Vec::len)
    }

    pub fn meas_dim(&self) -> usize {
        self.measurements.first().map_or(0, Vec::len)
    }

    pub fn measurement(&self, k: usize) -> Mat {
        Mat::column(&self.measurements[k])
    }

    pub fn state(&self, k: usize) -> Mat {
        Mat::column(&self.states[k])
    }

    /// Structural checks applied on load: lengths consistent with `N` and
    /// every vector of one kind has the same length.
    pub fn validate(&self) -> Result<()> {
        let expect = self.n_steps + 1;
        let schema = |msg: String| Err(Error::Data(format!("trajectory schema: {msg}")));
        if self.states.len() != expect {
            return schema(format!(
                "{} states for N = {}",
                self.states.len(),
                self.n_steps
            ));
        }
        if self.measurements.len() != expect {
            return schema(format!(
                "{} measurements for N = {}",
                self.measurements.len(),
                self.n_steps
            ));
        }
        if !self.measurement_noise.is_empty() && self.measurement_noise.len() != expect {
            return schema("measurement_noise length".into());
        }
        if !self.process_noise.is_empty() && self.process_noise.len() != self.n_steps {
            return schema("process_noise length".into());
        }
        let uniform = |v: &[Vec<f64>]| v.windows(2).all(|w| w[0].len() == w[1].len());
        if !uniform(&self.states)
            || !uniform(&self.measurements)
            || !uniform(&self.process_noise)
            || !uniform(&self.measurement_noise)
        {
            return schema("ragged vectors".into());
        }
        if self.state_dim() == 0 || self.meas_dim() == 0 {
            return schema("empty state or measurement vectors".into());
        }
        let finite = |v: &[Vec<f64>]| v.iter().flatten().all(|x| x.is_finite());
        if !finite(&self.states) || !finite(&self.measurements) {
            return schema("non-finite values".into());
        }
        Ok(())
    }

    /// Checks that this trajectory has the dimensions `model` expects.
    pub fn check_compatible(&self, model: &LtiModel) -> Result<()> {
        if self.state_dim() != model.state_dim() || self.meas_dim() != model.meas_dim() {
            return Err(Error::Data(format!(
                "trajectory has n = {}, m = {} but model has n = {}, m = {}",
                self.state_dim(),
                self.meas_dim(),
                model.state_dim(),
                model.meas_dim()
            )));
        }
        Ok(())
    }

    /// Stable digest of the measurement sequence (FNV-1a over the bit
    /// patterns), used to confirm that filters consumed identical data.
    pub fn measurement_digest(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in self.measurements.iter().flatten() {
            for b in v.to_bits().to_le_bytes() {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }
}

pub fn save_trajectory(t: &Trajectory, path: &Path) -> Result<()> {
    let text = serde_json::to_string(t).expect("trajectory serializes");
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })
}

pub fn load_trajectory(path: &Path) -> Result<Trajectory> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })?;
    let t: Trajectory = serde_json::from_str(&text).map_err(|source| Error::Json {
        context: format!("trajectory file {}", path.display()),
        source,
    })?;
    t.validate()?;
    Ok(t)
}

/// Corrupted instants (sorted) and, per instant, the impulse magnitudes in
/// the order: measurement components, then targeted process channels.
#[derive(Clone, Debug, PartialEq)]
pub struct ShotSchedule {
    pub instants: Vec<usize>,
    pub impulses: Vec<Vec<f64>>,
}

pub fn shot_schedule(
    spec: &ShotNoiseSpec,
    n_steps: usize,
    slots: usize,
    seed: u64,
) -> Result<ShotSchedule> {
    let (start, end) = spec.window(n_steps)?;
    let count = spec.corrupted_count(n_steps)?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let mut instants: Vec<usize> = sample(&mut rng, end - start + 1, count)
        .into_iter()
        .map(|i| start + i)
        .collect();
    instants.sort_unstable();
    let impulses = instants
        .iter()
        .map(|_| {
            (0..slots)
                .map(|_| spec.magnitudes[rng.gen_range(0..spec.magnitudes.len())])
                .collect()
        })
        .collect();
    Ok(ShotSchedule { instants, impulses })
}

fn normals(rng: &mut ChaCha20Rng, k: usize) -> Mat {
    let z: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
    Mat::column(&z)
}

/// Simulates `N` transitions (`N + 1` states and measurements).
pub fn simulate(
    model: &LtiModel,
    n_steps: usize,
    shot: Option<&ShotNoiseSpec>,
    seed: u64,
) -> Result<Trajectory> {
    if n_steps < 1 {
        return Err(Error::InvalidArgument("N must be at least 1".into()));
    }
    model.validate()?;
    let r_sqrt = Cholesky::new(&model.r)
        .map_err(|e| Error::InvalidArgument(format!("R is not sampleable: {e}")))?
        .lower()
        .clone();
    let q_sqrt = psd_sqrt(&model.q, SAMPLING_ZERO_TOL)?;
    let pi0_sqrt = psd_sqrt(&model.pi0, SAMPLING_ZERO_TOL)?;
    let (n, m, q) = (model.state_dim(), model.meas_dim(), model.noise_dim());

    let (schedule, proc_channels) = match shot {
        Some(spec) => {
            spec.validate(n_steps, model)?;
            let channels = spec.process_channels(model);
            let slots = if spec.targets.measurement { m } else { 0 } + channels.len();
            (
                Some((spec, shot_schedule(spec, n_steps, slots, seed)?)),
                channels,
            )
        }
        None => (None, Vec::new()),
    };

    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut x = model.x0_mean.add(&pi0_sqrt.mul(&normals(&mut rng, n))?)?;

    let mut states = Vec::with_capacity(n_steps + 1);
    let mut measurements = Vec::with_capacity(n_steps + 1);
    let mut process_noise = Vec::with_capacity(n_steps);
    let mut measurement_noise = Vec::with_capacity(n_steps + 1);
    let mut next_shot = 0;

    for k in 0..=n_steps {
        let impulse = match &schedule {
            Some((_, s)) if s.instants.get(next_shot) == Some(&k) => {
                next_shot += 1;
                Some(&s.impulses[next_shot - 1])
            }
            _ => None,
        };
        let meas_hit = schedule
            .as_ref()
            .is_some_and(|(spec, _)| spec.targets.measurement);

        let mut v = r_sqrt.mul(&normals(&mut rng, m))?;
        if let (Some(imp), true) = (impulse, meas_hit) {
            for i in 0..m {
                v[(i, 0)] += imp[i];
            }
        }
        let y = model.h.mul(&x)?.add(&v)?;
        states.push(x.as_slice().to_vec());
        measurements.push(y.into_vec());
        measurement_noise.push(v.into_vec());

        if k < n_steps {
            let mut w = q_sqrt.mul(&normals(&mut rng, q))?;
            if let Some(imp) = impulse {
                let offset = if meas_hit { m } else { 0 };
                for (j, &ch) in proc_channels.iter().enumerate() {
                    w[(ch, 0)] += imp[offset + j];
                }
            }
            x = model.f.mul(&x)?.add(&model.g.mul(&w)?)?;
            process_noise.push(w.into_vec());
        }
    }

    Ok(Trajectory {
        seed,
        n_steps,
        states,
        measurements,
        process_noise,
        measurement_noise,
        corrupted_instants: schedule.map(|(_, s)| s.instants).unwrap_or_default(),
    })
}
