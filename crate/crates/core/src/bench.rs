//! Monte-Carlo accuracy and timing experiments.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filters::runner::run_estimates;
use crate::filters::{FilterKind, FilterSpec, LambdaLabel, PreparedModel};
use crate::linalg::Mat;
use crate::model::{satellite_model_with, LtiModel, Pi0Choice};
use crate::sim::{simulate, ShotNoiseSpec, Trajectory};

/// Where the model of an experiment comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
#[allow(clippy::large_enum_variant)]
pub enum ModelSource {
    Preset(ModelPreset),
    Inline(LtiModel),
    Path(PathBuf),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelPreset {
    pub preset: PresetName,
    pub q4: f64,
    #[serde(default = "default_pi0")]
    pub pi0: Pi0Choice,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PresetName {
    Satellite,
}

fn default_pi0() -> Pi0Choice {
    Pi0Choice::Paper
}

impl ModelSource {
    /// Builds the model; relative paths are taken from `base_dir`.
    pub fn resolve(&self, base_dir: Option<&Path>) -> Result<LtiModel> {
        match self {
            ModelSource::Preset(p) => match p.preset {
                PresetName::Satellite => {
                    satellite_model_with(p.q4, p.pi0).map_err(|e| Error::Config(e.to_string()))
                }
            },
            ModelSource::Inline(m) => {
                m.validate()?;
                Ok(m.clone())
            }
            ModelSource::Path(p) => {
                let full = match base_dir {
                    Some(d) if p.is_relative() => d.join(p),
                    _ => p.clone(),
                };
                LtiModel::load(&full)
            }
        }
    }
}

fn default_n_steps() -> usize {
    300
}

fn default_runs() -> usize {
    500
}

fn default_shot() -> Option<ShotNoiseSpec> {
    Some(ShotNoiseSpec::default())
}

fn default_filters() -> Vec<FilterSpec> {
    FilterKind::ALL
        .into_iter()
        .filter(|k| *k != FilterKind::ImccTwoStage)
        .map(FilterSpec::adaptive)
        .collect()
}

fn default_timing_repeats() -> usize {
    1
}

fn default_timing_warmup() -> usize {
    2
}

/// Experiment description, loadable from JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSource,
    /// `null` disables impulsive noise.
    #[serde(default = "default_shot")]
    pub shot: Option<ShotNoiseSpec>,
    #[serde(rename = "N", default = "default_n_steps")]
    pub n_steps: usize,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_filters")]
    pub filters: Vec<FilterSpec>,
    /// Timed repetitions of each filter per run; 0 skips timing.
    #[serde(default = "default_timing_repeats")]
    pub timing_repeats: usize,
    /// Untimed runs of each filter before timing starts.
    #[serde(default = "default_timing_warmup")]
    pub timing_warmup: usize,
}

impl ExperimentConfig {
    /// Default experiment on the satellite model.
    pub fn satellite(q4: f64, pi0: Pi0Choice) -> Self {
        ExperimentConfig {
            model: ModelSource::Preset(ModelPreset {
                preset: PresetName::Satellite,
                q4,
                pi0,
            }),
            shot: default_shot(),
            n_steps: default_n_steps(),
            runs: default_runs(),
            base_seed: 0,
            filters: default_filters(),
            timing_repeats: default_timing_repeats(),
            timing_warmup: default_timing_warmup(),
        }
    }

    /// Reads a config; a model given by path is loaded relative to the
    /// config file and stored inline.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_owned(),
            source,
        })?;
        let mut cfg: ExperimentConfig =
            serde_json::from_str(&text).map_err(|source| Error::Json {
                context: format!("experiment config {}", path.display()),
                source,
            })?;
        if let ModelSource::Path(_) = cfg.model {
            cfg.model = ModelSource::Inline(cfg.model.resolve(path.parent())?);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::Config("runs must be at least 1".into()));
        }
        if self.n_steps == 0 {
            return Err(Error::Config("N must be at least 1".into()));
        }
        if self.filters.is_empty() {
            return Err(Error::Config("no filters configured".into()));
        }
        for f in &self.filters {
            FilterSpec::new(f.kind, f.strategy)?;
        }
        Ok(())
    }

    pub fn resolve_model(&self) -> Result<LtiModel> {
        self.model.resolve(None)
    }
}

/// One filter's row of the report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub filter: String,
    pub lambda: LambdaLabel,
    #[serde(default)]
    pub alpha: Option<usize>,
    pub rmse_per_state: Vec<f64>,
    /// 2-norm of `rmse_per_state`.
    pub rmse_aggregate: f64,
    /// Mean time of one recursion over `N + 1` measurements.
    #[serde(default)]
    pub mean_cpu_seconds: Option<f64>,
    /// Speedup over the Riccati IMCC-KF, for Chandrasekhar rows.
    #[serde(default)]
    pub runtime_benefit_pct: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    #[serde(rename = "N")]
    pub n_steps: usize,
    pub runs: usize,
    pub base_seed: u64,
    pub rows: Vec<ReportRow>,
    /// Combined digest of all measurement sequences, in run order.
    pub trajectory_digest: String,
}

impl McReport {
    pub fn row(&self, filter: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.filter == filter)
    }
}

/// How to execute the accuracy pass.
#[derive(Clone, Copy, Debug, Default)]
pub struct ExecOptions {
    /// Worker threads for the accuracy pass; 0 or 1 runs serially.
    pub threads: usize,
}

/// `(1 − cpuChandra / cpuRiccati) · 100`
pub fn runtime_benefit(cpu_chandra: f64, cpu_riccati: f64) -> Result<f64> {
    if !(cpu_chandra > 0.0 && cpu_riccati > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "CPU times must be positive, got {cpu_chandra} and {cpu_riccati}"
        )));
    }
    Ok((1.0 - cpu_chandra / cpu_riccati) * 100.0)
}

struct RunResult {
    digest: u64,
    /// Per filter, per state: Σ_k (x̂ − x)².
    sq_err: Vec<Vec<f64>>,
    alpha: Vec<Option<usize>>,
}

fn run_one(
    cfg: &ExperimentConfig,
    prep: &PreparedModel,
    run: usize,
) -> Result<(Trajectory, Vec<Mat>, RunResult)> {
    let seed = cfg.base_seed.wrapping_add(run as u64);
    let traj = simulate(&prep.model, cfg.n_steps, cfg.shot.as_ref(), seed)?;
    let ys: Vec<Mat> = (0..=cfg.n_steps).map(|k| traj.measurement(k)).collect();
    let digest = traj.measurement_digest();
    let n = prep.model.state_dim();
    let mut est = Vec::with_capacity(ys.len());
    let mut sq_err = Vec::with_capacity(cfg.filters.len());
    let mut alpha = Vec::with_capacity(cfg.filters.len());
    for spec in &cfg.filters {
        let (_, a) = run_estimates(*spec, prep, &ys, &mut est).map_err(|e| Error::Run {
            run,
            filter: spec.kind.name().into(),
            source: Box::new(e),
        })?;
        let mut acc = vec![0.0; n];
        for (x_hat, x) in est.iter().zip(&traj.states) {
            for (j, (a, b)) in x_hat.as_slice().iter().zip(x).enumerate() {
                acc[j] += (a - b) * (a - b);
            }
        }
        sq_err.push(acc);
        alpha.push(a);
    }
    Ok((
        traj,
        ys,
        RunResult {
            digest,
            sq_err,
            alpha,
        },
    ))
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<McReport> {
    run_experiment_with(cfg, ExecOptions::default())
}

/// Runs the experiment. The accuracy pass may be parallel; its results are
/// reduced in run order, so the report does not depend on `opts`.
pub fn run_experiment_with(cfg: &ExperimentConfig, opts: ExecOptions) -> Result<McReport> {
    cfg.validate()?;
    let model = cfg.resolve_model()?;
    let prep = PreparedModel::new(&model)?;
    let n = model.state_dim();

    let accuracy = |run: usize| run_one(cfg, &prep, run).map(|r| r.2);
    let results: Vec<RunResult> = if opts.threads > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.threads)
            .build()
            .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
        pool.install(|| {
            (0..cfg.runs)
                .into_par_iter()
                .map(accuracy)
                .collect::<Result<_>>()
        })?
    } else {
        (0..cfg.runs).map(accuracy).collect::<Result<_>>()?
    };

    let nf = cfg.filters.len();
    let mut totals = vec![vec![0.0; n]; nf];
    let mut digest: u64 = 0xcbf2_9ce4_8422_2325;
    for r in &results {
        for (t, s) in totals.iter_mut().zip(&r.sq_err) {
            for (a, b) in t.iter_mut().zip(s) {
                *a += b;
            }
        }
        digest = (digest ^ r.digest).wrapping_mul(0x0100_0000_01b3);
    }
    let alphas = results[0].alpha.clone();

    let cpu = if cfg.timing_repeats > 0 {
        Some(time_filters(cfg, &prep)?)
    } else {
        None
    };

    let denom = (cfg.runs * (cfg.n_steps + 1)) as f64;
    let mut rows: Vec<ReportRow> = cfg
        .filters
        .iter()
        .enumerate()
        .map(|(i, spec)| {
            let rmse: Vec<f64> = totals[i].iter().map(|s| (s / denom).sqrt()).collect();
            let agg = rmse.iter().map(|v| v * v).sum::<f64>().sqrt();
            ReportRow {
                filter: spec.kind.name().into(),
                lambda: spec.label(),
                alpha: alphas[i],
                rmse_per_state: rmse,
                rmse_aggregate: agg,
                mean_cpu_seconds: cpu.as_ref().map(|c| c[i]),
                runtime_benefit_pct: None,
            }
        })
        .collect();

    if let Some(cpu) = &cpu {
        for (i, spec) in cfg.filters.iter().enumerate() {
            if !spec.kind.is_chandrasekhar() {
                continue;
            }
            let baseline = cfg
                .filters
                .iter()
                .position(|s| s.kind == FilterKind::ImccRiccati && s.label() == spec.label())
                .or_else(|| {
                    cfg.filters
                        .iter()
                        .position(|s| s.kind == FilterKind::ImccRiccati)
                });
            if let Some(b) = baseline {
                rows[i].runtime_benefit_pct = runtime_benefit(cpu[i], cpu[b]).ok();
            }
        }
    }

    Ok(McReport {
        n_steps: cfg.n_steps,
        runs: cfg.runs,
        base_seed: cfg.base_seed,
        rows,
        trajectory_digest: format!("{digest:016x}"),
    })
}

/// Serial timing pass: mean seconds per recursion for each filter. The
/// filter order rotates from run to run so no filter always goes first.
fn time_filters(cfg: &ExperimentConfig, prep: &PreparedModel) -> Result<Vec<f64>> {
    let nf = cfg.filters.len();
    let mut total_ns = vec![0u128; nf];
    let mut count = 0u64;
    let mut est = Vec::with_capacity(cfg.n_steps + 1);
    let run_err = |run: usize, spec: &FilterSpec| {
        let name = spec.kind.name().to_string();
        move |e| Error::Run {
            run,
            filter: name,
            source: Box::new(e),
        }
    };
    let (_, ys0, _) = run_one(cfg, prep, 0)?;
    for _ in 0..cfg.timing_warmup {
        for spec in &cfg.filters {
            run_estimates(*spec, prep, &ys0, &mut est).map_err(run_err(0, spec))?;
        }
    }
    for run in 0..cfg.runs {
        let seed = cfg.base_seed.wrapping_add(run as u64);
        let traj = simulate(&prep.model, cfg.n_steps, cfg.shot.as_ref(), seed)?;
        let ys: Vec<Mat> = (0..=cfg.n_steps).map(|k| traj.measurement(k)).collect();
        for rep in 0..cfg.timing_repeats {
            for j in 0..nf {
                let i = (j + run + rep) % nf;
                let spec = &cfg.filters[i];
                let (ns, _) =
                    run_estimates(*spec, prep, &ys, &mut est).map_err(run_err(run, spec))?;
                total_ns[i] += u128::from(ns);
            }
            count += 1;
        }
    }
    Ok(total_ns
        .into_iter()
        .map(|t| t as f64 / count as f64 * 1e-9)
        .collect())
}

/// Wall-clock seconds of `f`, for callers that want their own timing.
pub fn time_it<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let t = Instant::now();
    let v = f();
    (v, t.elapsed().as_secs_f64())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Table,
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "table" => Ok(ReportFormat::Table),
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::Config(format!(
                "unknown report format {other:?}; expected table, csv or json"
            ))),
        }
    }
}

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(String::new, |v| format!("{v:.digits$}"))
}

pub fn render_report(r: &McReport, format: ReportFormat) -> String {
    let n = r.rows.first().map_or(0, |row| row.rmse_per_state.len());
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(r).expect("report serializes");
            s.push('\n');
            s
        }
        ReportFormat::Csv => {
            let mut s = String::from("filter");
            for j in 1..=n {
                let _ = write!(s, ",rmse_x{j}");
            }
            s.push_str(",rmse_2norm,cpu_s,benefit_pct\n");
            for row in &r.rows {
                s.push_str(&row.filter);
                for v in &row.rmse_per_state {
                    let _ = write!(s, ",{v:e}");
                }
                let _ = writeln!(
                    s,
                    ",{:e},{},{}",
                    row.rmse_aggregate,
                    row.mean_cpu_seconds
                        .map_or_else(String::new, |v| format!("{v:e}")),
                    row.runtime_benefit_pct
                        .map_or_else(String::new, |v| format!("{v}")),
                );
            }
            s
        }
        ReportFormat::Table => {
            let mut head = vec![
                "filter".to_string(),
                "lambda".to_string(),
                "alpha".to_string(),
            ];
            head.extend((1..=n).map(|j| format!("RMSE_x{j}")));
            head.extend(["||RMSE||".into(), "CPU (s)".into(), "benefit %".into()]);
            let body: Vec<Vec<String>> = r
                .rows
                .iter()
                .map(|row| {
                    let mut cells = vec![
                        row.filter.clone(),
                        match &row.lambda {
                            LambdaLabel::Value(v) => format!("{v:.4}"),
                            LambdaLabel::Label(l) => l.clone(),
                        },
                        row.alpha.map_or_else(|| "-".into(), |a| a.to_string()),
                    ];
                    cells.extend(row.rmse_per_state.iter().map(|v| format!("{v:.2}")));
                    cells.push(format!("{:.2}", row.rmse_aggregate));
                    cells.push(opt(row.mean_cpu_seconds, 6));
                    cells.push(opt(row.runtime_benefit_pct, 1));
                    cells
                })
                .collect();
            let widths: Vec<usize> = (0..head.len())
                .map(|c| {
                    body.iter()
                        .map(|row| row[c].len())
                        .chain([head[c].len()])
                        .max()
                        .unwrap_or(0)
                })
                .collect();
            let line = |cells: &[String]| {
                let mut s = String::new();
                for (c, (cell, w)) in cells.iter().zip(&widths).enumerate() {
                    if c == 0 {
                        let _ = write!(s, "{cell:<w$}");
                    } else {
                        let _ = write!(s, "  {cell:>w$}");
                    }
                }
                s.push('\n');
                s
            };
            let mut s = format!(
                "Monte-Carlo runs M = {}, N = {}, base seed {}\n",
                r.runs, r.n_steps, r.base_seed
            );
            s.push_str(&line(&head));
            let total: usize = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
            s.push_str(&"-".repeat(total));
            s.push('\n');
            for row in &body {
                s.push_str(&line(row));
            }
            s
        }
    }
}
