//! Two-state Gilbert-Elliott energy-arrival chain.
//!
//! State `G` means ambient energy is present in the slot, `B` means it is
//! absent. The chain moves `G -> B` with probability `p` and `B -> G` with
//! probability `q` at every slot boundary.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream_rng;

/// Hidden arrival state of a slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ArrivalState {
    G,
    B,
}

impl ArrivalState {
    pub fn is_good(self) -> bool {
        self == ArrivalState::G
    }
}

impl fmt::Display for ArrivalState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ArrivalState::G => f.write_str("G"),
            ArrivalState::B => f.write_str("B"),
        }
    }
}

/// Transition probabilities of the arrival chain.
///
/// Constructed through [`GEParams::new`], which enforces `0 < p, q < 1` and
/// positive correlation `1 - p > q`. The memoryless boundary `1 - p = q` is
/// only reachable through [`GEParams::memoryless`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GEParams {
    p: f64,
    q: f64,
}

impl GEParams {
    pub fn new(p: f64, q: f64) -> Result<Self> {
        Self::check_open_unit("p", p)?;
        Self::check_open_unit("q", q)?;
        if 1.0 - p <= q {
            return Err(Error::invalid("q", q, "positive correlation requires 1 - p > q"));
        }
        Ok(Self { p, q })
    }

    /// I.i.d. arrivals with success probability `success` (`p = 1 - success`, `q = success`).
    ///
    /// This sits on the `1 - p = q` boundary that [`GEParams::new`] rejects and
    /// is meant for degenerate-case oracles.
    pub fn memoryless(success: f64) -> Result<Self> {
        Self::check_open_unit("success", success)?;
        Ok(Self { p: 1.0 - success, q: success })
    }

    /// Parameters from the stationary good-state probability and mean bad-burst length.
    ///
    /// `q = 1 / t_b` and `p = q (1 - pi_g) / pi_g`.
    pub fn from_burst_parameterization(pi_g: f64, t_b: f64) -> Result<Self> {
        Self::check_open_unit("pi_g", pi_g)?;
        if !(t_b > 1.0) || !t_b.is_finite() {
            return Err(Error::invalid("t_b", t_b, "burst length must be finite and > 1"));
        }
        let q = 1.0 / t_b;
        let p = q * (1.0 - pi_g) / pi_g;
        Self::new(p, q)
    }

    fn check_open_unit(name: &'static str, v: f64) -> Result<()> {
        if v > 0.0 && v < 1.0 {
            Ok(())
        } else {
            Err(Error::invalid(name, v, "must lie in (0, 1)"))
        }
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    /// `1 - p - q`, the contraction factor of the belief dynamics.
    pub fn memory(&self) -> f64 {
        1.0 - self.p - self.q
    }

    /// `(pi_b, pi_g) = (p / (p + q), q / (p + q))`.
    pub fn stationary(&self) -> (f64, f64) {
        let s = self.p + self.q;
        (self.p / s, self.q / s)
    }

    pub fn pi_g(&self) -> f64 {
        self.stationary().1
    }

    /// Mean sojourn in `B`, `1 / q`.
    pub fn burst_length(&self) -> f64 {
        1.0 / self.q
    }

    /// One-step transition probability.
    pub fn transition(&self, from: ArrivalState, to: ArrivalState) -> f64 {
        use ArrivalState::*;
        match (from, to) {
            (G, G) => 1.0 - self.p,
            (G, B) => self.p,
            (B, G) => self.q,
            (B, B) => 1.0 - self.q,
        }
    }

    /// Draws the successor of `from`.
    pub fn step<R: Rng + ?Sized>(&self, from: ArrivalState, rng: &mut R) -> ArrivalState {
        let u: f64 = rng.random();
        match from {
            ArrivalState::G if u < self.p => ArrivalState::B,
            ArrivalState::G => ArrivalState::G,
            ArrivalState::B if u < self.q => ArrivalState::G,
            ArrivalState::B => ArrivalState::B,
        }
    }

    /// Draws a state from the stationary law.
    pub fn stationary_draw<R: Rng + ?Sized>(&self, rng: &mut R) -> ArrivalState {
        let u: f64 = rng.random();
        if u < self.pi_g() {
            ArrivalState::G
        } else {
            ArrivalState::B
        }
    }
}

impl<'de> Deserialize<'de> for GEParams {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw {
            p: f64,
            q: f64,
        }
        let raw = Raw::deserialize(d)?;
        // Accept the memoryless boundary on read so degenerate presets round-trip.
        if (1.0 - raw.p - raw.q).abs() < 1e-15 {
            GEParams::memoryless(raw.q).map_err(serde::de::Error::custom)
        } else {
            GEParams::new(raw.p, raw.q).map_err(serde::de::Error::custom)
        }
    }
}

/// Initial slot state for a simulated path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum InitialState {
    #[default]
    Stationary,
    Fixed(ArrivalState),
}

/// A realized arrival sequence, tagged with the seed that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePath {
    pub states: Vec<ArrivalState>,
    pub seed: u64,
}

impl SamplePath {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Simulates `horizon` slots of the chain using stream 0 of `seed`.
pub fn simulate(params: &GEParams, horizon: usize, seed: u64, initial: InitialState) -> SamplePath {
    let mut rng = stream_rng(seed, 0);
    SamplePath { states: simulate_with(params, horizon, initial, &mut rng), seed }
}

/// Simulates `horizon` slots drawing from an existing generator.
pub fn simulate_with<R: Rng + ?Sized>(
    params: &GEParams,
    horizon: usize,
    initial: InitialState,
    rng: &mut R,
) -> Vec<ArrivalState> {
    let mut states = Vec::with_capacity(horizon);
    if horizon == 0 {
        return states;
    }
    let mut s = match initial {
        InitialState::Stationary => params.stationary_draw(rng),
        InitialState::Fixed(s) => s,
    };
    states.push(s);
    for _ in 1..horizon {
        s = params.step(s, rng);
        states.push(s);
    }
    states
}
