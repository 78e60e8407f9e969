//! Belief-state model: rewards, actions, observations and belief transitions.
//!
//! The belief `b` is the probability that the current slot is in state `G`.
//! Harvesting reveals the state, so the next belief is `1 - p` after a
//! success and `q` after a failure. Sleeping reveals nothing and moves the
//! belief one step along the chain, `b' = q + (1 - p - q) b`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::markov::{ArrivalState, GEParams};

/// Absolute tolerance for belief and value comparisons.
pub const TOLERANCE: f64 = 1e-12;

/// Probability that the current arrival state is `G`.
pub type Belief = f64;

/// Reward for a successful harvest (`r1`), cost of a failed one (`r0`, applied
/// as `-r0`) and the discount factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RewardConfig {
    r1: f64,
    r0: f64,
    gamma: f64,
}

impl RewardConfig {
    pub fn new(r1: f64, r0: f64, gamma: f64) -> Result<Self> {
        if !(r1 > 0.0) || !r1.is_finite() {
            return Err(Error::invalid("r1", r1, "must be finite and > 0"));
        }
        if !(r0 > 0.0) || !r0.is_finite() {
            return Err(Error::invalid("r0", r0, "must be finite and > 0"));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::invalid("gamma", gamma, "must lie in [0, 1)"));
        }
        Ok(Self { r1, r0, gamma })
    }

    pub fn r1(&self) -> f64 {
        self.r1
    }

    pub fn r0(&self) -> f64 {
        self.r0
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// `max(r0, r1)`, the scale used for default error bounds.
    pub fn scale(&self) -> f64 {
        self.r0.max(self.r1)
    }

    /// Reward actually received in a slot.
    pub fn slot_reward(&self, action: Action, state: ArrivalState) -> f64 {
        match (action, state) {
            (Action::Sleep, _) => 0.0,
            (Action::Harvest, ArrivalState::G) => self.r1,
            (Action::Harvest, ArrivalState::B) => -self.r0,
        }
    }
}

impl<'de> Deserialize<'de> for RewardConfig {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            r1: f64,
            r0: f64,
            gamma: f64,
        }
        let raw = Raw::deserialize(d)?;
        RewardConfig::new(raw.r1, raw.r0, raw.gamma).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Harvest,
    Sleep,
}

/// What the node sees at the end of a slot. Sleeping yields `None`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Observation {
    G,
    B,
    None,
}

impl Observation {
    pub fn of_state(s: ArrivalState) -> Self {
        match s {
            ArrivalState::G => Observation::G,
            ArrivalState::B => Observation::B,
        }
    }

    pub fn state(self) -> Option<ArrivalState> {
        match self {
            Observation::G => Some(ArrivalState::G),
            Observation::B => Some(ArrivalState::B),
            Observation::None => None,
        }
    }
}

/// Expected one-slot reward at belief `b`: `(r0 + r1) b - r0` for harvesting, 0 for sleeping.
pub fn reward(b: Belief, a: Action, cfg: &RewardConfig) -> f64 {
    match a {
        Action::Harvest => (cfg.r0 + cfg.r1) * b - cfg.r0,
        Action::Sleep => 0.0,
    }
}

/// Belief after one unobserved slot.
pub fn sleep_update(b: Belief, params: &GEParams) -> Belief {
    params.q() + params.memory() * b
}

/// Belief for the next slot after a harvest revealed `outcome`.
pub fn harvest_update(outcome: Observation, params: &GEParams) -> Result<Belief> {
    match outcome {
        Observation::G => Ok(1.0 - params.p()),
        Observation::B => Ok(params.q()),
        Observation::None => Err(Error::MissingHarvestOutcome),
    }
}

/// Belief at the first harvest after a failure followed by `n` sleeping slots.
///
/// `q (1 - (1 - p - q)^(n + 1)) / (p + q)`, the closed form of applying
/// [`sleep_update`] `n` times to `q`.
pub fn belief_after_failure_and_sleep(n: usize, params: &GEParams) -> Belief {
    let (p, q) = (params.p(), params.q());
    let m = params.memory();
    let exp = i32::try_from(n + 1).unwrap_or(i32::MAX);
    q * (1.0 - m.powi(exp)) / (p + q)
}

/// Belief before any observation: the stationary `G` probability.
pub fn initial_belief(params: &GEParams) -> Belief {
    params.pi_g()
}

/// Smallest `n` with `belief_after_failure_and_sleep(n)` within `tol` of the stationary belief.
pub fn sleeps_to_stationarity(params: &GEParams, tol: f64) -> usize {
    let m = params.memory();
    let (p, q) = (params.p(), params.q());
    if m <= 0.0 {
        return 0;
    }
    // q m^(n+1) / (p + q) <= tol
    let target = tol * (p + q) / q;
    let n = (target.ln() / m.ln()).ceil() - 1.0;
    if n.is_finite() && n > 0.0 {
        n as usize
    } else {
        0
    }
}
