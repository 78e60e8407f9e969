//! Policies compared by the harness and their per-episode controllers.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Controller;
use crate::bayes::{BayesLearner, PosteriorCount, SleepPlanner, Weighting};
use crate::error::{Error, Result};
use crate::markov::{ArrivalState, GEParams};
use crate::pomdp::{Action, Observation, RewardConfig};
use crate::rng::StreamRng;
use crate::threshold::{optimal_sleep_time, LookupTable, ThresholdPolicy};

/// A decision rule to evaluate. Every policy harvests in the first slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Policy {
    AlwaysHarvest,
    /// Harvest each later slot independently with probability `prob`
    /// (default: the stationary good-state probability of the hidden chain).
    RandomHarvest {
        #[serde(default)]
        prob: Option<f64>,
    },
    /// Threshold policy with a given sleep count, or the optimal one for the
    /// hidden parameters when `policy` is absent. `NeverHarvest` stops
    /// harvesting after the first failure.
    FixedThreshold {
        #[serde(default)]
        policy: Option<ThresholdPolicy>,
    },
    /// Truncated posterior sampling with `2 k` hypotheses.
    BayesLearner {
        k: usize,
        #[serde(default)]
        weighting: Weighting,
    },
    /// Single posterior count updated only from consecutive harvests; plans
    /// with its mean estimates after each failure.
    ImpoverishedPosterior,
    /// Plans with `(p, q)` drawn uniformly from the unit square after each failure.
    RandomSampling,
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Policy::AlwaysHarvest => f.write_str("always_harvest"),
            Policy::RandomHarvest { prob: None } => f.write_str("random_harvest"),
            Policy::RandomHarvest { prob: Some(p) } => write!(f, "random_harvest(p={p})"),
            Policy::FixedThreshold { policy: None } => f.write_str("fixed_threshold(optimal)"),
            Policy::FixedThreshold { policy: Some(p) } => write!(f, "fixed_threshold(N={p})"),
            Policy::BayesLearner { k, weighting: Weighting::AppearanceCount } => write!(f, "bayes_learner(K={k})"),
            Policy::BayesLearner { k, weighting: Weighting::Exact } => write!(f, "bayes_learner(K={k},exact)"),
            Policy::ImpoverishedPosterior => f.write_str("impoverished_posterior"),
            Policy::RandomSampling => f.write_str("random_sampling"),
        }
    }
}

impl Policy {
    pub fn validate(&self) -> Result<()> {
        match self {
            Policy::RandomHarvest { prob: Some(p) } if !(0.0..=1.0).contains(p) => {
                Err(Error::invalid("prob", *p, "must lie in [0, 1]"))
            }
            Policy::BayesLearner { k: 0, .. } => Err(Error::invalid("k", 0.0, "must be >= 1")),
            _ => Ok(()),
        }
    }

    /// Fresh controller for one episode against `hidden`.
    pub fn controller(
        &self,
        hidden: &GEParams,
        cfg: &RewardConfig,
        table: Option<&Arc<LookupTable>>,
    ) -> Result<Box<dyn Controller + Send>> {
        let planner = || SleepPlanner::new(*cfg, table.cloned());
        Ok(match self {
            Policy::AlwaysHarvest => Box::new(AlwaysHarvest),
            Policy::RandomHarvest { prob } => {
                Box::new(RandomHarvest { prob: prob.unwrap_or_else(|| hidden.pi_g()), next: Action::Harvest })
            }
            Policy::FixedThreshold { policy } => {
                let pol = match policy {
                    Some(p) => *p,
                    None => optimal_sleep_time(hidden, cfg, None)?.0,
                };
                Box::new(Timer::fixed(pol))
            }
            Policy::BayesLearner { k, weighting } => {
                Box::new(BayesLearner::new(*k, planner()?)?.with_weighting(*weighting))
            }
            Policy::ImpoverishedPosterior => {
                Box::new(Impoverished { count: PosteriorCount::uniform(), prev: None, timer: 0, planner: planner()? })
            }
            Policy::RandomSampling => Box::new(RandomSampling { timer: 0, planner: planner()? }),
        })
    }
}

struct AlwaysHarvest;

impl Controller for AlwaysHarvest {
    fn action(&self) -> Action {
        Action::Harvest
    }

    fn update(&mut self, _: Action, _: Observation, _: &mut StreamRng) -> Result<()> {
        Ok(())
    }
}

struct RandomHarvest {
    prob: f64,
    next: Action,
}

impl Controller for RandomHarvest {
    fn action(&self) -> Action {
        self.next
    }

    fn update(&mut self, _: Action, _: Observation, rng: &mut StreamRng) -> Result<()> {
        self.next = if rng.random::<f64>() < self.prob { Action::Harvest } else { Action::Sleep };
        Ok(())
    }
}

/// Harvest while the timer is zero; a failure sets it to `sleep`
/// (`None`: never wake up again).
struct Timer {
    sleep: Option<usize>,
    timer: usize,
    stopped: bool,
}

impl Timer {
    fn fixed(policy: ThresholdPolicy) -> Self {
        Self { sleep: policy.sleep_slots(), timer: 0, stopped: false }
    }
}

impl Controller for Timer {
    fn action(&self) -> Action {
        if self.timer == 0 && !self.stopped {
            Action::Harvest
        } else {
            Action::Sleep
        }
    }

    fn update(&mut self, action: Action, obs: Observation, _: &mut StreamRng) -> Result<()> {
        match (action, obs) {
            (Action::Harvest, Observation::B) => match self.sleep {
                Some(n) => self.timer = n,
                None => self.stopped = true,
            },
            (Action::Harvest, _) => self.timer = 0,
            (Action::Sleep, _) => self.timer = self.timer.saturating_sub(1),
        }
        Ok(())
    }

    fn timer(&self) -> usize {
        if self.stopped {
            usize::MAX
        } else {
            self.timer
        }
    }
}

struct Impoverished {
    count: PosteriorCount,
    /// State revealed in the previous slot, if that slot was harvested.
    prev: Option<ArrivalState>,
    timer: usize,
    planner: SleepPlanner,
}

impl Controller for Impoverished {
    fn action(&self) -> Action {
        if self.timer == 0 {
            Action::Harvest
        } else {
            Action::Sleep
        }
    }

    fn update(&mut self, action: Action, obs: Observation, _: &mut StreamRng) -> Result<()> {
        let seen = obs.state();
        if let (Some(from), Some(to)) = (self.prev, seen) {
            self.count = self.count.after(from, to);
        }
        self.prev = seen;
        match (action, seen) {
            (Action::Harvest, Some(ArrivalState::G)) => self.timer = 0,
            (Action::Harvest, Some(ArrivalState::B)) => {
                self.timer = self.planner.plan(self.count.p_hat(), self.count.q_hat()).sleep;
            }
            (Action::Harvest, None) => return Err(Error::MissingHarvestOutcome),
            (Action::Sleep, _) => self.timer = self.timer.saturating_sub(1),
        }
        Ok(())
    }

    fn timer(&self) -> usize {
        self.timer
    }

    fn hypothesis_count(&self) -> usize {
        1
    }
}

struct RandomSampling {
    timer: usize,
    planner: SleepPlanner,
}

impl Controller for RandomSampling {
    fn action(&self) -> Action {
        if self.timer == 0 {
            Action::Harvest
        } else {
            Action::Sleep
        }
    }

    fn update(&mut self, action: Action, obs: Observation, rng: &mut StreamRng) -> Result<()> {
        match (action, obs) {
            (Action::Harvest, Observation::G) => self.timer = 0,
            (Action::Harvest, Observation::B) => {
                let (p, q) = (rng.random::<f64>(), rng.random::<f64>());
                self.timer = self.planner.plan(p, q).sleep;
            }
            (Action::Harvest, Observation::None) => return Err(Error::MissingHarvestOutcome),
            (Action::Sleep, _) => self.timer = self.timer.saturating_sub(1),
        }
        Ok(())
    }

    fn timer(&self) -> usize {
        self.timer
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::run_episode;
    use crate::rng::stream_rng;
    use ArrivalState::{B, G};

    fn cfg() -> RewardConfig {
        RewardConfig::new(10.0, 1.0, 0.9).unwrap()
    }

    fn actions(policy: &Policy, states: &[ArrivalState]) -> Vec<Action> {
        let ge = GEParams::new(0.2, 0.3).unwrap();
        let mut ctl = policy.controller(&ge, &cfg(), None).unwrap();
        let mut rng = stream_rng(1, 0);
        let mut trace = Vec::new();
        run_episode(ctl.as_mut(), states, &cfg(), &mut rng, Some(&mut trace)).unwrap();
        trace.iter().map(|r| r.action).collect()
    }

    #[test]
    fn fixed_threshold_sleeps_n_after_failure() {
        use Action::{Harvest as H, Sleep as S};
        let pol = Policy::FixedThreshold { policy: Some(ThresholdPolicy::SleepAfterFailure(2)) };
        let acts = actions(&pol, &[G, B, G, G, G, G, B, B, B, B]);
        assert_eq!(acts, vec![H, H, S, S, H, H, H, S, S, H]);
    }

    #[test]
    fn never_harvest_stops_after_first_failure() {
        let pol = Policy::FixedThreshold { policy: Some(ThresholdPolicy::NeverHarvest) };
        let acts = actions(&pol, &[G, G, B, G, G]);
        assert_eq!(acts.iter().filter(|a| **a == Action::Harvest).count(), 3);
    }

    #[test]
    fn impoverished_counts_consecutive_harvests_only() {
        let mut ctl = Impoverished {
            count: PosteriorCount::uniform(),
            prev: None,
            timer: 0,
            planner: SleepPlanner::new(cfg(), None).unwrap(),
        };
        let mut rng = stream_rng(1, 0);
        ctl.update(Action::Harvest, Observation::G, &mut rng).unwrap();
        ctl.update(Action::Harvest, Observation::G, &mut rng).unwrap();
        assert_eq!(ctl.count, PosteriorCount::new(1, 2, 1, 1));
        ctl.update(Action::Harvest, Observation::B, &mut rng).unwrap();
        assert_eq!(ctl.count, PosteriorCount::new(2, 2, 1, 1));
        // Uniform-ish estimates (p = 0.5, q = 0.5) are outside the model: one-slot fallback.
        assert_eq!(ctl.timer, 1);
        ctl.update(Action::Sleep, Observation::None, &mut rng).unwrap();
        ctl.update(Action::Harvest, Observation::B, &mut rng).unwrap();
        // The sleep broke the chain of observations, so nothing was added.
        assert_eq!(ctl.count, PosteriorCount::new(2, 2, 1, 1));
    }

    #[test]
    fn labels_and_serde() {
        let pols = vec![
            Policy::AlwaysHarvest,
            Policy::RandomHarvest { prob: Some(0.3) },
            Policy::FixedThreshold { policy: Some(ThresholdPolicy::SleepAfterFailure(3)) },
            Policy::BayesLearner { k: 20, weighting: Weighting::AppearanceCount },
            Policy::ImpoverishedPosterior,
            Policy::RandomSampling,
        ];
        let s = serde_json::to_string(&pols).unwrap();
        let back: Vec<Policy> = serde_json::from_str(&s).unwrap();
        assert_eq!(pols, back);
        assert_eq!(pols[3].to_string(), "bayes_learner(K=20)");
        assert!(Policy::BayesLearner { k: 0, weighting: Weighting::Exact }.validate().is_err());
    }
}
