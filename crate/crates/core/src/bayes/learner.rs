//! Posterior-sampling learner: harvest until a failure, then sample a
//! parameter hypothesis and sleep for that hypothesis's optimal count.

use std::collections::HashMap;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::particles::{ParticleSet, StatePrior, Weighting};
use crate::error::{Error, Result};
use crate::harness::{run_episode, Controller, SlotRecord};
use crate::markov::{simulate_with, GEParams, InitialState};
use crate::pomdp::{Action, Observation, RewardConfig};
use crate::rng::{stream_rng, StreamRng};
use crate::threshold::{optimal_sleep_time, LookupTable, ThresholdPolicy};

/// Sleep count chosen for one sampled parameter pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub sleep: usize,
    pub p_hat: f64,
    pub q_hat: f64,
    /// True when the pair was outside the model (`1 - p <= q`) or its optimal
    /// policy never harvests, so the one-slot fallback was used.
    pub fallback: bool,
}

/// Maps parameter estimates to sleep counts: table lookup first, exact
/// computation on a miss, memoized per exact `(p, q)`.
#[derive(Debug, Clone)]
pub struct SleepPlanner {
    cfg: RewardConfig,
    table: Option<Arc<LookupTable>>,
    cache: HashMap<(u64, u64), ThresholdPolicy>,
}

/// Sleep length used when an estimate does not give a finite sleep count.
pub const FALLBACK_SLEEP: usize = 1;

impl SleepPlanner {
    pub fn new(cfg: RewardConfig, table: Option<Arc<LookupTable>>) -> Result<Self> {
        if let Some(t) = &table {
            if t.reward != cfg {
                return Err(Error::InvalidArgument(
                    "lookup table was built for a different reward configuration".into(),
                ));
            }
        }
        Ok(Self { cfg, table, cache: HashMap::new() })
    }

    pub fn reward(&self) -> &RewardConfig {
        &self.cfg
    }

    /// Optimal policy for `(p, q)`, or `None` outside the model.
    pub fn policy(&mut self, p: f64, q: f64) -> Option<ThresholdPolicy> {
        let params = GEParams::new(p, q).ok()?;
        if let Some(cell) = self.table.as_ref().and_then(|t| t.lookup(p, q)) {
            return cell.policy;
        }
        let key = (p.to_bits(), q.to_bits());
        if let Some(&pol) = self.cache.get(&key) {
            return Some(pol);
        }
        let pol = optimal_sleep_time(&params, &self.cfg, None).ok()?.0;
        self.cache.insert(key, pol);
        Some(pol)
    }

    pub fn plan(&mut self, p: f64, q: f64) -> Plan {
        match self.policy(p, q).and_then(|pol| pol.sleep_slots()) {
            Some(n) => Plan { sleep: n, p_hat: p, q_hat: q, fallback: false },
            None => Plan { sleep: FALLBACK_SLEEP, p_hat: p, q_hat: q, fallback: true },
        }
    }
}

/// Draws one hypothesis by weight and plans with its mean estimates.
pub fn sample_and_plan<R: Rng + ?Sized>(set: &ParticleSet, rng: &mut R, planner: &mut SleepPlanner) -> Result<Plan> {
    let (_, particle) = set.sample(rng)?;
    let c = particle.count;
    Ok(planner.plan(c.p_hat(), c.q_hat()))
}

/// Learner state: the truncated posterior and the remaining sleep timer.
#[derive(Debug, Clone)]
pub struct BayesLearner {
    set: ParticleSet,
    planner: SleepPlanner,
    timer: usize,
    last_plan: Option<Plan>,
}

impl BayesLearner {
    pub fn new(k: usize, planner: SleepPlanner) -> Result<Self> {
        Ok(Self { set: ParticleSet::new(StatePrior::Uninformed, Some(k))?, planner, timer: 0, last_plan: None })
    }

    pub fn with_weighting(mut self, weighting: Weighting) -> Self {
        self.set = self.set.with_weighting(weighting);
        self
    }

    pub fn posterior(&self) -> &ParticleSet {
        &self.set
    }

    pub fn last_plan(&self) -> Option<Plan> {
        self.last_plan
    }

    /// Weighted posterior means of `(p, q)` over the current particles.
    pub fn mean_estimate(&self) -> (f64, f64) {
        self.set.mean_estimate()
    }
}

impl Controller for BayesLearner {
    fn action(&self) -> Action {
        if self.timer == 0 {
            Action::Harvest
        } else {
            Action::Sleep
        }
    }

    fn update(&mut self, action: Action, obs: Observation, rng: &mut StreamRng) -> Result<()> {
        self.set.observe(obs)?;
        match (action, obs) {
            (Action::Harvest, Observation::G) => self.timer = 0,
            (Action::Harvest, Observation::B) => {
                let plan = sample_and_plan(&self.set, rng, &mut self.planner)?;
                self.timer = plan.sleep;
                self.last_plan = Some(plan);
            }
            (Action::Harvest, Observation::None) => return Err(Error::MissingHarvestOutcome),
            (Action::Sleep, _) => self.timer = self.timer.saturating_sub(1),
        }
        Ok(())
    }

    fn timer(&self) -> usize {
        self.timer
    }

    fn hypothesis_count(&self) -> usize {
        self.set.len()
    }
}

/// Full record of one learner episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerTrace {
    pub records: Vec<SlotRecord>,
    pub discounted_reward: f64,
    /// Posterior means of `(p, q)` at the end of the episode.
    pub final_estimate: (f64, f64),
}

impl LearnerTrace {
    /// One JSON object per slot, newline-terminated.
    pub fn to_json_lines(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        Ok(out)
    }
}

/// Runs the learner with `K = k` against a simulated chain for `horizon` slots.
///
/// The arrival path uses stream 0 of `seed` and the learner's sampling uses
/// stream 1.
pub fn run_learner(params: &GEParams, cfg: &RewardConfig, k: usize, horizon: usize, seed: u64) -> Result<LearnerTrace> {
    let learner = BayesLearner::new(k, SleepPlanner::new(*cfg, None)?)?;
    run_learner_with(params, horizon, seed, learner)
}

/// [`run_learner`] with a preconfigured learner (table, weighting).
pub fn run_learner_with(
    params: &GEParams,
    horizon: usize,
    seed: u64,
    mut learner: BayesLearner,
) -> Result<LearnerTrace> {
    let cfg = *learner.planner.reward();
    let states = simulate_with(params, horizon, InitialState::Stationary, &mut stream_rng(seed, 0));
    let mut rng = stream_rng(seed, 1);
    let mut records = Vec::with_capacity(horizon);
    let reward = run_episode(&mut learner, &states, &cfg, &mut rng, Some(&mut records))?;
    Ok(LearnerTrace { records, discounted_reward: reward, final_estimate: learner.mean_estimate() })
}
