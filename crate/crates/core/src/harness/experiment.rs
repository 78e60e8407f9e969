//! Experiment specifications, paired evaluation and result files.

use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{run_episode, Policy};
use crate::bayes::Weighting;
use crate::error::{Error, Result};
use crate::markov::{simulate_with, GEParams, InitialState};
use crate::pomdp::RewardConfig;
use crate::rng::{stream_id, stream_rng, StreamRng};

pub const RESULT_SCHEMA: &str = "harvest.experiment-result/v1";

const TAG_PATH: u16 = 1;
const TAG_RUN: u16 = 2;

/// Hidden chain parameters of the simulated paths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HiddenParams {
    Transition {
        p: f64,
        q: f64,
    },
    Burst {
        pi_g: f64,
        t_b: f64,
    },
    /// A fresh `(pi_g, t_b)` per path, uniform on the box, resampled until valid.
    UniformBurst {
        pi_g: [f64; 2],
        t_b: [f64; 2],
    },
}

impl HiddenParams {
    pub fn validate(&self) -> Result<()> {
        match *self {
            HiddenParams::Transition { p, q } => GEParams::new(p, q).map(|_| ()),
            HiddenParams::Burst { pi_g, t_b } => GEParams::from_burst_parameterization(pi_g, t_b).map(|_| ()),
            HiddenParams::UniformBurst { pi_g, t_b } => {
                if !(0.0 < pi_g[0] && pi_g[0] <= pi_g[1] && pi_g[1] < 1.0) {
                    return Err(Error::invalid("pi_g", pi_g[0], "range must satisfy 0 < lo <= hi < 1"));
                }
                if !(1.0 < t_b[0] && t_b[0] <= t_b[1] && t_b[1].is_finite()) {
                    return Err(Error::invalid("t_b", t_b[0], "range must satisfy 1 < lo <= hi"));
                }
                // The corner with the largest pi_g and t_b is always valid.
                GEParams::from_burst_parameterization(pi_g[1], t_b[1]).map(|_| ())
            }
        }
    }

    fn draw(&self, rng: &mut StreamRng) -> Result<GEParams> {
        match *self {
            HiddenParams::Transition { p, q } => GEParams::new(p, q),
            HiddenParams::Burst { pi_g, t_b } => GEParams::from_burst_parameterization(pi_g, t_b),
            HiddenParams::UniformBurst { pi_g, t_b } => {
                for _ in 0..10_000 {
                    let a = pi_g[0] + (pi_g[1] - pi_g[0]) * rng.random::<f64>();
                    let b = t_b[0] + (t_b[1] - t_b[0]) * rng.random::<f64>();
                    if let Ok(ge) = GEParams::from_burst_parameterization(a, b) {
                        return Ok(ge);
                    }
                }
                Err(Error::invalid("pi_g", pi_g[0], "range has almost no valid parameters"))
            }
        }
    }
}

/// Everything needed to reproduce an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    #[serde(default = "default_name")]
    pub name: String,
    pub hidden: HiddenParams,
    pub reward: RewardConfig,
    pub horizon: usize,
    pub paths: usize,
    pub runs_per_path: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub initial: InitialState,
    pub policies: Vec<Policy>,
}

fn default_name() -> String {
    "experiment".to_string()
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        self.hidden.validate()?;
        if self.horizon == 0 {
            return Err(Error::invalid("horizon", 0.0, "must be >= 1"));
        }
        if self.paths == 0 {
            return Err(Error::invalid("paths", 0.0, "must be >= 1"));
        }
        if self.runs_per_path == 0 {
            return Err(Error::invalid("runs_per_path", 0.0, "must be >= 1"));
        }
        if self.policies.is_empty() {
            return Err(Error::invalid("policies", 0.0, "at least one policy is required"));
        }
        self.policies.iter().try_for_each(Policy::validate)
    }

    /// Largest possible discounted contribution of the slots after the horizon.
    pub fn tail_bound(&self) -> f64 {
        let g = self.reward.gamma();
        g.powi(i32::try_from(self.horizon).unwrap_or(i32::MAX)) * self.reward.scale() / (1.0 - g)
    }

    pub fn from_toml(s: &str) -> Result<Self> {
        let spec: Self = toml::from_str(s)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Serialization(e.to_string()))
    }
}

/// Scale presets for the unknown-parameter comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    /// 300 paths x 100 runs x 500 slots.
    Full,
    /// 30 paths x 20 runs x 500 slots.
    Desk,
}

/// Learner against the three baselines on `pi_g = 0.6`, `t_b = 2.5`,
/// `r0 = r1 = 10`, `gamma = 0.99`, `K = 20`.
pub fn learning_comparison_spec(scale: Scale, seed: u64) -> ExperimentSpec {
    let (paths, runs) = match scale {
        Scale::Full => (300, 100),
        Scale::Desk => (30, 20),
    };
    ExperimentSpec {
        name: format!("learning-comparison-{}", if scale == Scale::Full { "full" } else { "desk" }),
        hidden: HiddenParams::Burst { pi_g: 0.6, t_b: 2.5 },
        reward: RewardConfig::new(10.0, 10.0, 0.99).expect("valid preset"),
        horizon: 500,
        paths,
        runs_per_path: runs,
        seed,
        initial: InitialState::Stationary,
        policies: vec![
            Policy::BayesLearner { k: 20, weighting: Weighting::AppearanceCount },
            Policy::ImpoverishedPosterior,
            Policy::RandomSampling,
            Policy::AlwaysHarvest,
        ],
    }
}

pub fn learning_comparison(scale: Scale, seed: u64) -> Result<ExperimentResult> {
    evaluate(&learning_comparison_spec(scale, seed))
}

/// Aggregate for one policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySummary {
    pub label: String,
    pub policy: Policy,
    /// Mean over paths of the per-path mean discounted reward.
    pub mean: f64,
    /// Standard error across path means; `None` with a single path.
    pub std_error: Option<f64>,
    pub path_means: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub schema: String,
    pub spec: ExperimentSpec,
    pub summaries: Vec<PolicySummary>,
}

/// Output file format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl ExperimentResult {
    pub fn summary(&self, policy: &Policy) -> Option<&PolicySummary> {
        self.summaries.iter().find(|s| &s.policy == policy)
    }

    /// Mean and standard error of the per-path difference `a - b`.
    pub fn paired_difference(&self, a: usize, b: usize) -> (f64, Option<f64>) {
        let d: Vec<f64> =
            self.summaries[a].path_means.iter().zip(&self.summaries[b].path_means).map(|(x, y)| x - y).collect();
        mean_and_se(&d)
    }

    /// Policy labels ordered by decreasing mean.
    pub fn ordering(&self) -> Vec<String> {
        let mut idx: Vec<usize> = (0..self.summaries.len()).collect();
        idx.sort_by(|&i, &j| self.summaries[j].mean.total_cmp(&self.summaries[i].mean));
        idx.into_iter().map(|i| self.summaries[i].label.clone()).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let r: Self = serde_json::from_str(s)?;
        if r.schema != RESULT_SCHEMA {
            return Err(Error::Serialization(format!("unexpected schema `{}`", r.schema)));
        }
        Ok(r)
    }

    /// One row per policy: `policy,mean,std_error,paths,runs_per_path,horizon,seed`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["policy", "mean", "std_error", "paths", "runs_per_path", "horizon", "seed"])?;
        for s in &self.summaries {
            w.write_record([
                s.label.clone(),
                s.mean.to_string(),
                s.std_error.map(|x| x.to_string()).unwrap_or_default(),
                self.spec.paths.to_string(),
                self.spec.runs_per_path.to_string(),
                self.spec.horizon.to_string(),
                self.spec.seed.to_string(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Serialization(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn render(&self, format: OutputFormat) -> Result<String> {
        match format {
            OutputFormat::Csv => self.to_csv(),
            OutputFormat::Json => self.to_json(),
        }
    }

    pub fn emit(&self, format: OutputFormat, path: &Path) -> Result<()> {
        std::fs::write(path, self.render(format)?)?;
        Ok(())
    }
}

/// Simulates every policy on `paths x runs_per_path` paired episodes.
///
/// Path `i` is drawn from its own random stream; run `r` of path `i` gives
/// every policy a fresh generator on the same `(i, r)` stream. Results do
/// not depend on the thread count.
pub fn evaluate(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    spec.validate()?;
    let cfg = spec.reward;
    let per_path: Vec<Vec<f64>> = (0..spec.paths)
        .into_par_iter()
        .map(|i| {
            let mut prng = stream_rng(spec.seed, stream_id(TAG_PATH, i as u64, 0, 0));
            let hidden = spec.hidden.draw(&mut prng)?;
            let states = simulate_with(&hidden, spec.horizon, spec.initial, &mut prng);
            spec.policies
                .iter()
                .map(|pol| {
                    let rewards = (0..spec.runs_per_path)
                        .map(|r| {
                            let mut rng = stream_rng(spec.seed, stream_id(TAG_RUN, i as u64, r as u64, 0));
                            let mut ctl = pol.controller(&hidden, &cfg, None)?;
                            run_episode(ctl.as_mut(), &states, &cfg, &mut rng, None)
                        })
                        .collect::<Result<Vec<f64>>>()?;
                    Ok(pairwise_sum(&rewards) / rewards.len() as f64)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;

    let summaries = spec
        .policies
        .iter()
        .enumerate()
        .map(|(k, pol)| {
            let path_means: Vec<f64> = per_path.iter().map(|row| row[k]).collect();
            let (mean, std_error) = mean_and_se(&path_means);
            PolicySummary { label: pol.to_string(), policy: pol.clone(), mean, std_error, path_means }
        })
        .collect();
    Ok(ExperimentResult { schema: RESULT_SCHEMA.to_string(), spec: spec.clone(), summaries })
}

fn mean_and_se(xs: &[f64]) -> (f64, Option<f64>) {
    let n = xs.len() as f64;
    let mean = pairwise_sum(xs) / n;
    if xs.len() < 2 {
        return (mean, None);
    }
    let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&dev) / (n - 1.0);
    (mean, Some((var / n).sqrt()))
}

/// Pairwise (cascade) summation; error grows like `log n` rather than `n`.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if xs.len() <= BLOCK {
        xs.iter().sum()
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}
