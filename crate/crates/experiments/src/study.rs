//! Sample-size sweeps with repeated trials.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Instant;

use bstt::regression::{
    fit_augmented, fit_homogeneous, fit_linear, fit_sum, fit_tt, relative_error, split_seed,
    Evaluate, FitOptions, FitReport, SampleSet,
};
use bstt::{dof_count, Dictionary, SpaceDescriptor};
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::control::{are_residual, discretize_heat_equation, solve_are};
use crate::error::{Error, Result};
use crate::io::{read_samples, write_samples_csv, Format, RawSamples};
use crate::reference::{gaussian_rank_one_oracle, reference_dof, ReferenceDof};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Problem {
    Riccati,
    Gaussian,
    Ingest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: Problem,
    pub spaces: Vec<SpaceDescriptor>,
    pub sample_sizes: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    pub test_size: usize,
    pub options: FitOptions,
    /// Output prefix for [`crate::emit_study`].
    pub output: Option<PathBuf>,
    /// Control penalty `λ` of the Riccati problem.
    pub control_penalty: f64,
    /// `monomial` or `legendre`; defaults to monomial for Riccati and
    /// Legendre otherwise.
    pub dictionary: Option<String>,
    /// Sample file of the ingest problem.
    pub input: Option<PathBuf>,
    /// If set, every trial's training and test samples are written here.
    pub dump_dir: Option<PathBuf>,
    /// Wall-clock times make the JSONL output machine dependent, so they
    /// are left out unless asked for.
    pub record_seconds: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::riccati()
    }
}

fn spaces(list: &[&str]) -> Vec<SpaceDescriptor> {
    list.iter()
        .map(|s| s.parse().expect("built-in space strings parse"))
        .collect()
}

impl ExperimentConfig {
    pub fn riccati() -> Self {
        Self {
            problem: Problem::Riccati,
            spaces: spaces(&["W(d=8,g=2)", "B(rho=4;W(d=8,g=2))"]),
            sample_sizes: vec![100, 200, 500, 1000],
            trials: 20,
            seed: 0,
            test_size: 1000,
            options: FitOptions::default(),
            output: None,
            control_penalty: 1.0,
            dictionary: None,
            input: None,
            dump_dir: None,
            record_seconds: false,
        }
    }

    pub fn gaussian() -> Self {
        Self {
            problem: Problem::Gaussian,
            spaces: spaces(&["S(d=6,g=7,rho=1)", "T(r=1;V(d=6,p=8))"]),
            sample_sizes: vec![200, 500, 1000, 2000],
            ..Self::riccati()
        }
    }

    pub fn ingest(input: PathBuf) -> Self {
        Self {
            problem: Problem::Ingest,
            spaces: spaces(&["S(d=10,g=5,rho=3)"]),
            input: Some(input),
            ..Self::riccati()
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.sample_sizes.is_empty() {
            return bad("no sample sizes".into());
        }
        if self.sample_sizes.contains(&0) {
            return bad("sample size 0".into());
        }
        if self.sample_sizes.windows(2).any(|w| w[0] >= w[1]) {
            return bad("sample sizes must be strictly increasing".into());
        }
        if self.spaces.is_empty() {
            return bad("no spaces".into());
        }
        if self.test_size == 0 {
            return bad("test set is empty".into());
        }
        if self.control_penalty.is_nan() || self.control_penalty <= 0.0 {
            return bad(format!(
                "control penalty {} must be positive",
                self.control_penalty
            ));
        }
        if self.problem == Problem::Ingest && self.input.is_none() {
            return bad("ingest study needs an input file".into());
        }
        for s in &self.spaces {
            s.validate().map_err(Error::Core)?;
        }
        Dictionary::from_name(self.dictionary_name(), 1)?;
        Ok(())
    }

    pub fn dictionary_name(&self) -> &str {
        match (&self.dictionary, self.problem) {
            (Some(name), _) => name,
            (None, Problem::Riccati) => "monomial",
            (None, _) => "legendre",
        }
    }
}

/// Seeds of one trial, all derived from the study seed by splitting on the
/// sample-size index and then the trial index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialSeeds {
    pub trial: u64,
    pub train: u64,
    pub test: u64,
    pub fit: u64,
}

pub fn trial_seeds(seed: u64, m_index: usize, trial: usize) -> TrialSeeds {
    let t = split_seed(split_seed(seed, m_index as u64), trial as u64);
    TrialSeeds {
        trial: t,
        train: split_seed(t, 0),
        test: split_seed(t, 1),
        fit: split_seed(t, 2),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    #[serde(rename = "M")]
    pub m: usize,
    pub trial: usize,
    pub seed: u64,
    pub space: SpaceDescriptor,
    /// Relative test error; `None` if the fit failed.
    pub error: Option<f64>,
    pub sweeps: usize,
    pub seconds: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileRow {
    pub space: SpaceDescriptor,
    #[serde(rename = "M")]
    pub m: usize,
    pub q15: Option<f64>,
    pub median: Option<f64>,
    pub q85: Option<f64>,
    /// Trials without an error value.
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DofLine {
    pub space: SpaceDescriptor,
    pub dof: Option<u64>,
    pub reference: Option<ReferenceDof>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyResult {
    pub config: ExperimentConfig,
    pub records: Vec<TrialRecord>,
    pub quantiles: Vec<QuantileRow>,
    pub dof: Vec<DofLine>,
    pub metadata: BTreeMap<String, Value>,
}

impl StudyResult {
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn meta_document(&self) -> Value {
        json!({
            "config": self.config,
            "dof": self.dof,
            "quantiles": self.quantiles,
            "metadata": self.metadata,
        })
    }

    pub fn quantile_row(&self, space: &SpaceDescriptor, m: usize) -> Option<&QuantileRow> {
        self.quantiles
            .iter()
            .find(|q| &q.space == space && q.m == m)
    }
}

/// Empirical quantile of sorted data, linear interpolation between order
/// statistics at position `q (n - 1)`.
pub fn quantile(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let h = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    Some(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

/// Fits `train` in `space` with the matching solver: direct least squares
/// for `V`, `W` and `S`, ALS otherwise.
pub fn fit_space(
    space: &SpaceDescriptor,
    train: &SampleSet,
    opts: &FitOptions,
) -> Result<(Box<dyn Evaluate + Send + Sync>, FitReport)> {
    if train.dim() != space.d() || train.dictionary().size() != space.p() {
        return Err(Error::Core(bstt::Error::DimensionMismatch(format!(
            "space {space} for {}-dimensional samples with dictionary size {}",
            train.dim(),
            train.dictionary().size()
        ))));
    }
    Ok(match *space {
        SpaceDescriptor::V { .. } | SpaceDescriptor::W { .. } | SpaceDescriptor::S { .. } => {
            let (m, r) = fit_linear(train, space, opts)?;
            (Box::new(m), r)
        }
        SpaceDescriptor::T { r, .. } => {
            let (m, rep) = fit_tt(train, r, opts)?;
            (Box::new(m), rep)
        }
        SpaceDescriptor::B { rho, g, .. } => {
            let (m, r) = fit_homogeneous(train, g, rho, opts)?;
            (Box::new(m), r)
        }
        SpaceDescriptor::SRho {
            g, rho, aug: false, ..
        } => {
            let (m, r) = fit_sum(train, g, rho, opts)?;
            (Box::new(m), r)
        }
        SpaceDescriptor::SRho {
            g, rho, aug: true, ..
        } => {
            let (m, r) = fit_augmented(train, g, rho, opts)?;
            (Box::new(m), r)
        }
    })
}

enum Target {
    /// `x ↦ xᵀ P x`, keyed by dimension.
    Quadratic(BTreeMap<usize, DMatrix<f64>>),
    Gaussian,
    Data(RawSamples),
}

impl Target {
    fn value(&self, x: &[f64]) -> f64 {
        match self {
            Target::Quadratic(ps) => {
                let p = &ps[&x.len()];
                let mut s = 0.0;
                for i in 0..x.len() {
                    for j in 0..x.len() {
                        s += x[i] * p[(i, j)] * x[j];
                    }
                }
                s
            }
            Target::Gaussian => (-x.iter().map(|v| v * v).sum::<f64>()).exp(),
            Target::Data(_) => unreachable!("data targets are read, not evaluated"),
        }
    }

    /// Training and test samples of one trial in `d` variables.
    fn draw(
        &self,
        d: usize,
        m: usize,
        test_size: usize,
        seeds: TrialSeeds,
    ) -> (RawSamples, RawSamples) {
        match self {
            Target::Data(data) => {
                let mut order: Vec<usize> = (0..data.len()).collect();
                order.shuffle(&mut ChaCha8Rng::seed_from_u64(seeds.train));
                (
                    data.select(&order[..m]),
                    data.select(&order[m..m + test_size]),
                )
            }
            _ => {
                let gen = |n: usize, seed: u64| {
                    let points =
                        SampleSet::uniform_points(n, d, &mut ChaCha8Rng::seed_from_u64(seed));
                    let targets = (0..n)
                        .map(|i| self.value(&points.row(i).iter().copied().collect::<Vec<_>>()))
                        .collect();
                    RawSamples { points, targets }
                };
                (gen(m, seeds.train), gen(test_size, seeds.test))
            }
        }
    }
}

fn run_trial(
    cfg: &ExperimentConfig,
    target: &Target,
    space: &SpaceDescriptor,
    mi: usize,
    trial: usize,
) -> TrialRecord {
    let m = cfg.sample_sizes[mi];
    let seeds = trial_seeds(cfg.seed, mi, trial);
    let start = Instant::now();
    let outcome = (|| -> Result<(f64, usize)> {
        let (train, test) = target.draw(space.d(), m, cfg.test_size, seeds);
        let dict = Dictionary::from_name(cfg.dictionary_name(), space.p())?;
        let train = train.with_dictionary(dict.clone())?;
        let test = test.with_dictionary(dict)?;
        let opts = FitOptions {
            seed: seeds.fit,
            ..cfg.options.clone()
        };
        let (model, report) = fit_space(space, &train, &opts)?;
        Ok((relative_error(model.as_ref(), &test)?, report.sweeps))
    })();
    let seconds = cfg.record_seconds.then(|| start.elapsed().as_secs_f64());
    match outcome {
        Ok((error, sweeps)) => TrialRecord {
            m,
            trial,
            seed: seeds.trial,
            space: *space,
            error: Some(error),
            sweeps,
            seconds,
            failure: None,
        },
        Err(e) => TrialRecord {
            m,
            trial,
            seed: seeds.trial,
            space: *space,
            error: None,
            sweeps: 0,
            seconds,
            failure: Some(e.to_string()),
        },
    }
}

fn summarize(cfg: &ExperimentConfig, records: &[TrialRecord]) -> Vec<QuantileRow> {
    let mut rows = Vec::new();
    for space in &cfg.spaces {
        for &m in &cfg.sample_sizes {
            let group: Vec<&TrialRecord> = records
                .iter()
                .filter(|r| &r.space == space && r.m == m)
                .collect();
            let mut errors: Vec<f64> = group.iter().filter_map(|r| r.error).collect();
            errors.sort_by(f64::total_cmp);
            rows.push(QuantileRow {
                space: *space,
                m,
                q15: quantile(&errors, 0.15),
                median: quantile(&errors, 0.5),
                q85: quantile(&errors, 0.85),
                failed: group.len() - errors.len(),
            });
        }
    }
    rows
}

fn dump_samples(cfg: &ExperimentConfig, target: &Target, dir: &std::path::Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut dims: Vec<usize> = cfg.spaces.iter().map(|s| s.d()).collect();
    dims.sort_unstable();
    dims.dedup();
    for &d in &dims {
        for (mi, &m) in cfg.sample_sizes.iter().enumerate() {
            for t in 0..cfg.trials {
                let (train, test) = target.draw(d, m, cfg.test_size, trial_seeds(cfg.seed, mi, t));
                let name = |kind: &str| dir.join(format!("{kind}_d{d}_M{m}_trial{t}.csv"));
                write_samples_csv(&name("train"), &train.points, &train.targets)?;
                write_samples_csv(&name("test"), &test.points, &test.targets)?;
            }
        }
    }
    Ok(())
}

fn run(
    cfg: &ExperimentConfig,
    target: Target,
    mut metadata: BTreeMap<String, Value>,
) -> Result<StudyResult> {
    if let Some(dir) = &cfg.dump_dir {
        dump_samples(cfg, &target, dir)?;
    }
    let jobs: Vec<(usize, usize, usize)> = (0..cfg.spaces.len())
        .flat_map(|s| {
            (0..cfg.sample_sizes.len()).flat_map(move |mi| (0..cfg.trials).map(move |t| (s, mi, t)))
        })
        .collect();
    // trials are independent and collect() keeps job order
    let records: Vec<TrialRecord> = jobs
        .par_iter()
        .map(|&(s, mi, t)| run_trial(cfg, &target, &cfg.spaces[s], mi, t))
        .collect();
    let quantiles = summarize(cfg, &records);
    let dof = cfg
        .spaces
        .iter()
        .map(|s| DofLine {
            space: *s,
            dof: dof_count(s).ok(),
            reference: reference_dof(s),
        })
        .collect();
    metadata.insert("dictionary".into(), json!(cfg.dictionary_name()));
    metadata.insert(
        "thresholds".into(),
        json!("acceptance thresholds on these errors are set by this crate; no published numbers exist"),
    );
    Ok(StudyResult {
        config: cfg.clone(),
        records,
        quantiles,
        dof,
        metadata,
    })
}

fn check_problem(cfg: &ExperimentConfig, expected: Problem) -> Result<()> {
    cfg.validate()?;
    if cfg.problem != expected {
        return Err(Error::Config(format!(
            "config is for {:?}, not {expected:?}",
            cfg.problem
        )));
    }
    Ok(())
}

/// Recovers the value function `xᵀPx` of the heat control problem.
pub fn run_riccati_study(cfg: &ExperimentConfig) -> Result<StudyResult> {
    check_problem(cfg, Problem::Riccati)?;
    let mut ps = BTreeMap::new();
    let mut residuals = BTreeMap::new();
    for s in &cfg.spaces {
        let d = s.d();
        if ps.contains_key(&d) {
            continue;
        }
        let sys = discretize_heat_equation(d)?;
        let p = solve_are(&sys.a, &sys.b, &sys.q, cfg.control_penalty)?;
        residuals.insert(
            d.to_string(),
            are_residual(&sys.a, &sys.b, &sys.q, cfg.control_penalty, &p) / sys.q.norm(),
        );
        ps.insert(d, p);
    }
    let mut meta = BTreeMap::new();
    meta.insert(
        "target".into(),
        json!("x^T P x, P the stabilizing ARE solution"),
    );
    meta.insert(
        "discretization".into(),
        json!("heat equation on [-1,1], Neumann ghost nodes, h = 2/(d-1), Q = h I"),
    );
    meta.insert("control_region".into(), json!("|x| <= 0.4"));
    meta.insert("control_penalty".into(), json!(cfg.control_penalty));
    meta.insert("sampling".into(), json!("uniform on [-1,1]^d"));
    meta.insert("are_relative_residual".into(), json!(residuals));
    run(cfg, Target::Quadratic(ps), meta)
}

/// Recovers `exp(-‖x‖²)` from uniform samples.
pub fn run_gaussian_study(cfg: &ExperimentConfig) -> Result<StudyResult> {
    check_problem(cfg, Problem::Gaussian)?;
    let mut meta = BTreeMap::new();
    meta.insert("target".into(), json!("exp(-|x|^2)"));
    meta.insert("sampling".into(), json!("uniform on [-1,1]^d"));
    let oracles: BTreeMap<String, f64> = cfg
        .spaces
        .iter()
        .filter(|s| matches!(s, SpaceDescriptor::T { r: 1, .. }))
        .map(|s| (s.to_string(), gaussian_rank_one_oracle(s.d(), s.p())))
        .collect();
    meta.insert("rank_one_oracle".into(), json!(oracles));
    run(cfg, Target::Gaussian, meta)
}

/// Fits subsets of an external sample file; each trial draws a random
/// training set of size `M` and a disjoint test set.
pub fn run_ingest_study(cfg: &ExperimentConfig) -> Result<StudyResult> {
    check_problem(cfg, Problem::Ingest)?;
    let path = cfg.input.as_ref().expect("validated");
    let data = read_samples(path, Format::from_path(path))?;
    let need = cfg.sample_sizes.last().copied().unwrap_or(0) + cfg.test_size;
    if data.len() < need {
        return Err(Error::Config(format!(
            "{} has {} samples, the study needs {need}",
            path.display(),
            data.len()
        )));
    }
    if let Some(s) = cfg.spaces.iter().find(|s| s.d() != data.dim()) {
        return Err(Error::Config(format!(
            "space {s} does not match {}-dimensional samples",
            data.dim()
        )));
    }
    let mut meta = BTreeMap::new();
    meta.insert("input".into(), json!(path));
    meta.insert("samples_available".into(), json!(data.len()));
    run(cfg, Target::Data(data), meta)
}

pub fn run_study(cfg: &ExperimentConfig) -> Result<StudyResult> {
    match cfg.problem {
        Problem::Riccati => run_riccati_study(cfg),
        Problem::Gaussian => run_gaussian_study(cfg),
        Problem::Ingest => run_ingest_study(cfg),
    }
}
