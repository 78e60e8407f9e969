//! Monte-Carlo policy evaluation with paired sample paths.
//!
//! Every policy in an experiment sees the same arrival path and the same
//! policy random stream within a `(path, run)` cell, so differences between
//! policies are not confounded by simulation noise.

mod experiment;
mod policies;

use serde::{Deserialize, Serialize};

pub use experiment::{
    evaluate, learning_comparison, learning_comparison_spec, pairwise_sum, ExperimentResult, ExperimentSpec,
    HiddenParams, OutputFormat, PolicySummary, Scale, RESULT_SCHEMA,
};
pub use policies::Policy;

use crate::error::Result;
use crate::markov::ArrivalState;
use crate::pomdp::{Action, Observation, RewardConfig};
use crate::rng::StreamRng;

/// A decision rule driven one slot at a time.
pub trait Controller {
    /// Action for the current slot.
    fn action(&self) -> Action;

    /// Feeds back the action taken and what it revealed.
    fn update(&mut self, action: Action, obs: Observation, rng: &mut StreamRng) -> Result<()>;

    /// Remaining sleep slots, for traces.
    fn timer(&self) -> usize {
        0
    }

    /// Number of posterior hypotheses held, for traces.
    fn hypothesis_count(&self) -> usize {
        0
    }
}

/// One slot of an episode trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub t: usize,
    pub action: Action,
    pub observation: Observation,
    /// Sleep timer after the update.
    pub timer: usize,
    pub reward: f64,
    pub hypothesis_count: usize,
}

/// Runs `ctl` over `states` and returns `sum_t gamma^t R_t`.
pub fn run_episode<C: Controller + ?Sized>(
    ctl: &mut C,
    states: &[ArrivalState],
    cfg: &RewardConfig,
    rng: &mut StreamRng,
    mut trace: Option<&mut Vec<SlotRecord>>,
) -> Result<f64> {
    let mut total = 0.0;
    let mut discount = 1.0;
    for (t, &s) in states.iter().enumerate() {
        let action = ctl.action();
        let reward = cfg.slot_reward(action, s);
        let obs = match action {
            Action::Harvest => Observation::of_state(s),
            Action::Sleep => Observation::None,
        };
        total += discount * reward;
        discount *= cfg.gamma();
        ctl.update(action, obs, rng)?;
        if let Some(tr) = trace.as_deref_mut() {
            tr.push(SlotRecord {
                t,
                action,
                observation: obs,
                timer: ctl.timer(),
                reward,
                hypothesis_count: ctl.hypothesis_count(),
            });
        }
    }
    Ok(total)
}
