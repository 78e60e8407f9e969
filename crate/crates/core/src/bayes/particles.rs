//! Posterior counts and the appearance-count particle set.
//!
//! A particle pairs a hypothesis about the arrival state of the current slot
//! with the Beta counts `phi` that hypothesis implies, weighted by the number
//! of hidden state histories that produce it. Each observation first moves
//! every particle one transition forward and then keeps the branches
//! consistent with what was observed.

use std::collections::BTreeMap;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::markov::ArrivalState;
use crate::pomdp::Observation;

/// Beta counts for `G -> B`, `G -> G`, `B -> G`, `B -> B`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PosteriorCount {
    pub phi1: u32,
    pub phi2: u32,
    pub phi3: u32,
    pub phi4: u32,
}

impl Default for PosteriorCount {
    fn default() -> Self {
        Self::uniform()
    }
}

impl PosteriorCount {
    /// `[1, 1, 1, 1]`: independent uniform priors on `p` and `q`.
    pub fn uniform() -> Self {
        Self::new(1, 1, 1, 1)
    }

    pub fn new(phi1: u32, phi2: u32, phi3: u32, phi4: u32) -> Self {
        Self { phi1, phi2, phi3, phi4 }
    }

    pub fn as_array(&self) -> [u32; 4] {
        [self.phi1, self.phi2, self.phi3, self.phi4]
    }

    /// Count after one more transition `from -> to`.
    pub fn after(&self, from: ArrivalState, to: ArrivalState) -> Self {
        use ArrivalState::*;
        let mut c = *self;
        match (from, to) {
            (G, B) => c.phi1 += 1,
            (G, G) => c.phi2 += 1,
            (B, G) => c.phi3 += 1,
            (B, B) => c.phi4 += 1,
        }
        c
    }

    /// Number of transitions recorded beyond the uniform prior.
    pub fn transitions(&self) -> u32 {
        self.phi1 + self.phi2 + self.phi3 + self.phi4 - 4
    }

    /// Posterior mean of `p`.
    pub fn p_hat(&self) -> f64 {
        self.phi1 as f64 / (self.phi1 + self.phi2) as f64
    }

    /// Posterior mean of `q`.
    pub fn q_hat(&self) -> f64 {
        self.phi3 as f64 / (self.phi3 + self.phi4) as f64
    }

    /// `ln [Gamma(phi1) Gamma(phi2) Gamma(phi3) Gamma(phi4) / (Gamma(phi1 + phi2) Gamma(phi3 + phi4))]`,
    /// the integral of `p^(phi1-1) (1-p)^(phi2-1) q^(phi3-1) (1-q)^(phi4-1)`.
    pub fn ln_beta_normalizer(&self) -> f64 {
        let [a, b, c, d] = self.as_array().map(f64::from);
        ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b) + ln_gamma(c) + ln_gamma(d) - ln_gamma(c + d)
    }
}

/// One weighted hypothesis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Particle {
    pub count: PosteriorCount,
    pub weight: BigUint,
}

impl Particle {
    pub fn new(count: PosteriorCount, weight: BigUint) -> Self {
        Self { count, weight }
    }
}

/// Children of one state list after a transition, split by the new state.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Branches {
    pub to_good: Vec<Particle>,
    pub to_bad: Vec<Particle>,
}

fn branch(from: ArrivalState, particles: &[Particle]) -> Branches {
    let step = |to| particles.iter().map(|pt| Particle::new(pt.count.after(from, to), pt.weight.clone())).collect();
    Branches { to_good: step(ArrivalState::G), to_bad: step(ArrivalState::B) }
}

/// Initial knowledge of the first slot's state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatePrior {
    /// Both states carry weight 1.
    #[default]
    Uninformed,
    Known(ArrivalState),
}

/// How particles are ranked for truncation and weighted when drawing or
/// averaging.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// The appearance count alone.
    #[default]
    AppearanceCount,
    /// Appearance count times the Beta normalizer of the particle's counts,
    /// i.e. the particle's exact posterior mass.
    Exact,
}

/// Truncated posterior over `(current state, counts)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleSet {
    good: Vec<Particle>,
    bad: Vec<Particle>,
    /// Keep at most `2 K` particles; `None` disables truncation.
    k: Option<usize>,
    /// True until the first observation, which refers to the prior's own slot.
    fresh: bool,
    #[serde(default)]
    weighting: Weighting,
}

impl ParticleSet {
    /// Prior over the first slot with uniform counts.
    pub fn new(prior: StatePrior, k: Option<usize>) -> Result<Self> {
        if k == Some(0) {
            return Err(Error::invalid("k", 0.0, "must be >= 1"));
        }
        let one = || vec![Particle::new(PosteriorCount::uniform(), BigUint::one())];
        let (good, bad) = match prior {
            StatePrior::Uninformed => (one(), one()),
            StatePrior::Known(ArrivalState::G) => (one(), Vec::new()),
            StatePrior::Known(ArrivalState::B) => (Vec::new(), one()),
        };
        Ok(Self { good, bad, k, fresh: true, weighting: Weighting::default() })
    }

    /// Set built from explicit lists; duplicates are merged. The next
    /// observation is treated as the following slot.
    pub fn from_lists(good: Vec<Particle>, bad: Vec<Particle>, k: Option<usize>) -> Self {
        let mut s = Self { good: Vec::new(), bad: Vec::new(), k, fresh: false, weighting: Weighting::default() };
        s.install(Branches { to_good: good, to_bad: bad });
        s
    }

    pub fn with_weighting(mut self, weighting: Weighting) -> Self {
        self.weighting = weighting;
        self
    }

    pub fn weighting(&self) -> Weighting {
        self.weighting
    }

    pub fn good(&self) -> &[Particle] {
        &self.good
    }

    pub fn bad(&self) -> &[Particle] {
        &self.bad
    }

    pub fn truncation(&self) -> Option<usize> {
        self.k
    }

    /// Number of hypotheses over both states.
    pub fn len(&self) -> usize {
        self.good.len() + self.bad.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn total_weight(&self) -> BigUint {
        self.good.iter().chain(&self.bad).map(|p| &p.weight).sum()
    }

    /// Transitions out of the good list.
    pub fn good_state_update(&self) -> Branches {
        branch(ArrivalState::G, &self.good)
    }

    /// Transitions out of the bad list. Counts are read from the bad-state
    /// hypotheses themselves.
    pub fn bad_state_update(&self) -> Branches {
        branch(ArrivalState::B, &self.bad)
    }

    /// Untruncated successors of every particle, merged.
    pub fn propagate(&self) -> Self {
        let g = self.good_state_update();
        let b = self.bad_state_update();
        let mut s = Self { good: Vec::new(), bad: Vec::new(), k: self.k, fresh: false, weighting: self.weighting };
        s.install(Branches {
            to_good: g.to_good.into_iter().chain(b.to_good).collect(),
            to_bad: g.to_bad.into_iter().chain(b.to_bad).collect(),
        });
        s
    }

    /// Incorporates the observation of the next slot: one transition, then
    /// conditioning on `z`, merge, and truncation to the top `2 K`.
    pub fn observe(&mut self, z: Observation) -> Result<()> {
        let mut next = if self.fresh { Self { fresh: false, ..self.clone() } } else { self.propagate() };
        match z {
            Observation::G => next.bad.clear(),
            Observation::B => next.good.clear(),
            Observation::None => {}
        }
        next.truncate();
        if next.is_empty() {
            return Err(Error::EmptyPosterior);
        }
        *self = next;
        Ok(())
    }

    fn install(&mut self, br: Branches) {
        self.good = merge(br.to_good);
        self.bad = merge(br.to_bad);
    }

    /// Log weight of `p` under the set's weighting.
    pub fn ln_weight(&self, p: &Particle) -> f64 {
        match self.weighting {
            Weighting::AppearanceCount => ln_biguint(&p.weight),
            Weighting::Exact => ln_biguint(&p.weight) + p.count.ln_beta_normalizer(),
        }
    }

    /// Keeps the `2 K` heaviest particles across both lists. Ties prefer the
    /// smaller `(state, counts)` with `G` before `B`.
    fn truncate(&mut self) {
        let Some(k) = self.k else { return };
        let cap = 2 * k;
        if self.len() <= cap {
            return;
        }
        let mut all: Vec<(ArrivalState, Particle)> = self
            .good
            .drain(..)
            .map(|p| (ArrivalState::G, p))
            .chain(self.bad.drain(..).map(|p| (ArrivalState::B, p)))
            .collect();
        let order = |a: &(ArrivalState, Particle), b: &(ArrivalState, Particle)| match self.weighting {
            Weighting::AppearanceCount => b.1.weight.cmp(&a.1.weight),
            Weighting::Exact => self.ln_weight(&b.1).total_cmp(&self.ln_weight(&a.1)),
        };
        all.sort_by(|a, b| order(a, b).then_with(|| (a.0, a.1.count).cmp(&(b.0, b.1.count))));
        all.truncate(cap);
        for (s, p) in all {
            match s {
                ArrivalState::G => self.good.push(p),
                ArrivalState::B => self.bad.push(p),
            }
        }
        self.good.sort_by_key(|p| p.count);
        self.bad.sort_by_key(|p| p.count);
    }

    /// Draws a hypothesis with probability proportional to its weight.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(ArrivalState, &Particle)> {
        let items: Vec<(ArrivalState, &Particle)> = self
            .good
            .iter()
            .map(|p| (ArrivalState::G, p))
            .chain(self.bad.iter().map(|p| (ArrivalState::B, p)))
            .collect();
        if items.is_empty() {
            return Err(Error::EmptyPosterior);
        }
        let logs: Vec<f64> = items.iter().map(|(_, p)| self.ln_weight(p)).collect();
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = w.iter().sum();
        let mut u = rng.random::<f64>() * total;
        for (item, wi) in items.iter().zip(&w) {
            if u < *wi {
                return Ok(*item);
            }
            u -= wi;
        }
        Ok(*items.last().expect("nonempty"))
    }
}

impl ParticleSet {
    /// Weight-averaged posterior means of `(p, q)` over the current particles.
    pub fn mean_estimate(&self) -> (f64, f64) {
        let items: Vec<&Particle> = self.good.iter().chain(&self.bad).collect();
        let logs: Vec<f64> = items.iter().map(|p| self.ln_weight(p)).collect();
        let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (mut sp, mut sq, mut sw) = (0.0, 0.0, 0.0);
        for (p, l) in items.iter().zip(&logs) {
            let w = (l - max).exp();
            sp += w * p.count.p_hat();
            sq += w * p.count.q_hat();
            sw += w;
        }
        (sp / sw, sq / sw)
    }
}

/// Sums weights of equal counts; output sorted by count.
fn merge(particles: Vec<Particle>) -> Vec<Particle> {
    let mut map: BTreeMap<PosteriorCount, BigUint> = BTreeMap::new();
    for p in particles {
        *map.entry(p.count).or_insert_with(BigUint::zero) += p.weight;
    }
    map.into_iter().map(|(count, weight)| Particle { count, weight }).collect()
}

/// Natural log of a positive big integer, accurate to double precision.
pub fn ln_biguint(x: &BigUint) -> f64 {
    let bits = x.bits();
    if bits <= 1000 {
        return x.to_f64().map_or(f64::INFINITY, f64::ln);
    }
    let shift = bits - 64;
    let top = (x >> shift).to_f64().unwrap_or(f64::INFINITY);
    top.ln() + shift as f64 * std::f64::consts::LN_2
}
