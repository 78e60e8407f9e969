//! Battery dynamics under a threshold policy as an absorbing Markov chain.
//!
//! The chain is embedded at harvest instants. Its state is the outcome of the
//! previous harvest and the battery level. From `(G, e)` the node harvests in
//! the next slot; from `(B, e)` it first sleeps `N` slots, so `N + 1` slots
//! elapse and the arrival chain advances `N + 1` steps. A success adds `gain`
//! units and a failure removes `loss`. Levels `0` (depleted) and `capacity`
//! (full) are absorbing.

use nalgebra::{DMatrix, DVector, Matrix2};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::markov::{ArrivalState, GEParams};
use crate::pomdp::RewardConfig;
use crate::rng::stream_rng;
use crate::threshold::{optimal_sleep_time, ThresholdPolicy};

/// Battery size and per-harvest energy changes, in integral units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatteryConfig {
    pub capacity: u32,
    pub gain: u32,
    pub loss: u32,
    pub initial: u32,
}

impl BatteryConfig {
    /// Unit gain and loss, starting at `initial`.
    pub fn new(capacity: u32, initial: u32) -> Result<Self> {
        let c = Self { capacity, gain: 1, loss: 1, initial };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.capacity < 1 {
            return Err(Error::invalid("capacity", self.capacity as f64, "must be >= 1"));
        }
        if self.gain < 1 {
            return Err(Error::invalid("gain", self.gain as f64, "must be >= 1"));
        }
        if self.loss < 1 {
            return Err(Error::invalid("loss", self.loss as f64, "must be >= 1"));
        }
        if self.initial > self.capacity {
            return Err(Error::invalid("initial", self.initial as f64, "must not exceed capacity"));
        }
        Ok(())
    }
}

/// Where the first embedded step starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartPhase {
    /// Just after a success: harvest next slot.
    AfterSuccess,
    /// Just after a failure: sleep `N` slots first.
    AfterFailure,
    /// No history: harvest next slot, arrival state drawn from the stationary law.
    #[default]
    Fresh,
}

/// Embedded chain over `(last outcome, level)`.
#[derive(Debug, Clone)]
pub struct BatteryChain {
    capacity: u32,
    gain: u32,
    loss: u32,
    sleep: usize,
    pi_g: f64,
    /// Success probability of the next harvest from `(G, .)` and `(B, .)`.
    success: [f64; 2],
    matrix: DMatrix<f64>,
    weights: Vec<f64>,
}

fn phase_index(s: ArrivalState) -> usize {
    match s {
        ArrivalState::G => 0,
        ArrivalState::B => 1,
    }
}

/// `k`-step transition matrix of the arrival chain, states ordered `(G, B)`.
pub fn arrival_matrix_power(params: &GEParams, k: usize) -> Matrix2<f64> {
    let m = Matrix2::new(1.0 - params.p(), params.p(), params.q(), 1.0 - params.q());
    let mut out = Matrix2::identity();
    let mut base = m;
    let mut e = k;
    while e > 0 {
        if e & 1 == 1 {
            out *= base;
        }
        base = base * base;
        e >>= 1;
    }
    out
}

/// Builds the embedded chain for a policy that sleeps `N` slots after failures.
pub fn build_chain(params: &GEParams, policy: ThresholdPolicy, battery: &BatteryConfig) -> Result<BatteryChain> {
    battery.validate()?;
    let n = policy.sleep_slots().ok_or(Error::PolicyNeverHarvests)?;
    let from_good = 1.0 - params.p();
    let from_bad = arrival_matrix_power(params, n + 1)[(1, 0)];
    let cap = battery.capacity;
    let size = 2 * (cap as usize + 1);
    let mut matrix = DMatrix::zeros(size, size);
    let mut weights = vec![0.0; size];
    let idx = |s: usize, e: u32| s * (cap as usize + 1) + e as usize;
    let success = [from_good, from_bad];
    for (s, &up_prob) in success.iter().enumerate() {
        for e in 0..=cap {
            let i = idx(s, e);
            if e == 0 || e == cap {
                matrix[(i, i)] = 1.0;
                continue;
            }
            let up = (e + battery.gain).min(cap);
            let down = e.saturating_sub(battery.loss);
            matrix[(i, idx(0, up))] += up_prob;
            matrix[(i, idx(1, down))] += 1.0 - up_prob;
            weights[i] = if s == 0 { 1.0 } else { (n + 1) as f64 };
        }
    }
    Ok(BatteryChain {
        capacity: cap,
        gain: battery.gain,
        loss: battery.loss,
        sleep: n,
        pi_g: params.pi_g(),
        success,
        matrix,
        weights,
    })
}

impl BatteryChain {
    pub fn capacity(&self) -> u32 {
        self.capacity
    }

    pub fn sleep_slots(&self) -> usize {
        self.sleep
    }

    /// Full transition matrix over `2 (capacity + 1)` states, `G` block first.
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Slots elapsed on leaving each state (0 for absorbing states).
    pub fn slot_weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn index(&self, s: ArrivalState, level: u32) -> usize {
        phase_index(s) * (self.capacity as usize + 1) + level as usize
    }

    /// Success probability of the next harvest from phase `s`.
    pub fn success_probability(&self, s: ArrivalState) -> f64 {
        self.success[phase_index(s)]
    }

    fn is_transient(&self, level: u32) -> bool {
        level > 0 && level < self.capacity
    }

    fn up(&self, e: u32) -> u32 {
        (e + self.gain).min(self.capacity)
    }

    fn down(&self, e: u32) -> u32 {
        e.saturating_sub(self.loss)
    }
}

/// Absorption quantities per chain state, indexed like [`BatteryChain::index`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbsorptionResult {
    pub full_charge_prob: Vec<f64>,
    pub depletion_prob: Vec<f64>,
    /// Expected slots to reach full charge given that it is reached; `None`
    /// where full charge is impossible.
    pub expected_slots_to_full: Vec<Option<f64>>,
    /// Expected slots until either absorbing level.
    pub expected_slots_to_absorption: Vec<f64>,
}

/// Absorption probabilities and times from the transient block `(I - Q)`.
///
/// With `h` the full-charge probabilities, `(I - Q) h = R_full`. The
/// conditional time `tau` solves `(I - Q)(h tau) = w h`, which is the
/// `h`-transformed chain written without dividing by `h`.
pub fn absorption_analysis(chain: &BatteryChain) -> Result<AbsorptionResult> {
    let cap = chain.capacity;
    let size = chain.matrix.nrows();
    let transient: Vec<usize> = (0..size).filter(|&i| chain.is_transient((i % (cap as usize + 1)) as u32)).collect();
    let mut full = vec![0.0; size];
    let mut slots_full = vec![None; size];
    let mut slots_any = vec![0.0; size];
    for s in [ArrivalState::G, ArrivalState::B] {
        full[chain.index(s, cap)] = 1.0;
        slots_full[chain.index(s, cap)] = Some(0.0);
    }

    let k = transient.len();
    if k > 0 {
        let mut a = DMatrix::zeros(k, k);
        let mut r_full = DVector::zeros(k);
        let mut w = DVector::zeros(k);
        for (ri, &i) in transient.iter().enumerate() {
            a[(ri, ri)] = 1.0;
            for (ci, &j) in transient.iter().enumerate() {
                a[(ri, ci)] -= chain.matrix[(i, j)];
            }
            r_full[ri] = (0..2).map(|s| chain.matrix[(i, s * (cap as usize + 1) + cap as usize)]).sum();
            w[ri] = chain.weights[i];
        }
        let lu = a.lu();
        let h = lu.solve(&r_full).ok_or(Error::SingularTransientBlock)?;
        let t_any = lu.solve(&w).ok_or(Error::SingularTransientBlock)?;
        let wh = w.component_mul(&h);
        let u = lu.solve(&wh).ok_or(Error::SingularTransientBlock)?;
        if h.iter().chain(t_any.iter()).any(|x| !x.is_finite()) {
            return Err(Error::SingularTransientBlock);
        }
        for (ri, &i) in transient.iter().enumerate() {
            full[i] = h[ri].clamp(0.0, 1.0);
            slots_any[i] = t_any[ri];
            slots_full[i] = (h[ri] > 0.0).then(|| u[ri] / h[ri]);
        }
    }
    let depletion = full.iter().map(|h| 1.0 - h).collect();
    Ok(AbsorptionResult {
        full_charge_prob: full,
        depletion_prob: depletion,
        expected_slots_to_full: slots_full,
        expected_slots_to_absorption: slots_any,
    })
}

/// Absorption summary for one starting level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelSummary {
    pub full_charge_prob: f64,
    pub depletion_prob: f64,
    pub expected_slots_conditional: Option<f64>,
}

impl AbsorptionResult {
    /// Summary when starting at `level` in the given phase.
    pub fn from_start(&self, chain: &BatteryChain, level: u32, phase: StartPhase) -> LevelSummary {
        let at = |s: ArrivalState, e: u32| {
            let i = chain.index(s, e);
            (self.full_charge_prob[i], self.expected_slots_to_full[i])
        };
        let (h, tau) = match phase {
            StartPhase::AfterSuccess => at(ArrivalState::G, level),
            StartPhase::AfterFailure => at(ArrivalState::B, level),
            StartPhase::Fresh if !chain.is_transient(level) => at(ArrivalState::G, level),
            StartPhase::Fresh => {
                // One harvest at the stationary belief, then continue from the outcome.
                let pg = chain.pi_g;
                let (h_up, t_up) = at(ArrivalState::G, chain.up(level));
                let (h_dn, t_dn) = at(ArrivalState::B, chain.down(level));
                let h = pg * h_up + (1.0 - pg) * h_dn;
                let u = h + pg * h_up * t_up.unwrap_or(0.0) + (1.0 - pg) * h_dn * t_dn.unwrap_or(0.0);
                (h, (h > 0.0).then(|| u / h))
            }
        };
        LevelSummary { full_charge_prob: h, depletion_prob: 1.0 - h, expected_slots_conditional: tau }
    }
}

/// One output row of a level sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatteryRow {
    pub initial_level: u32,
    pub burst_length: f64,
    pub full_charge_prob: f64,
    pub depletion_prob: f64,
    pub expected_slots_conditional: Option<f64>,
}

/// Absorption summary for every level in `levels`, in the given order.
pub fn sweep_initial_levels(
    params: &GEParams,
    policy: ThresholdPolicy,
    template: &BatteryConfig,
    levels: &[u32],
    phase: StartPhase,
) -> Result<Vec<BatteryRow>> {
    if let Some(&bad) = levels.iter().find(|&&l| l > template.capacity) {
        return Err(Error::invalid("level", bad as f64, "must not exceed capacity"));
    }
    let chain = build_chain(params, policy, template)?;
    let res = absorption_analysis(&chain)?;
    Ok(levels
        .iter()
        .map(|&level| {
            let s = res.from_start(&chain, level, phase);
            BatteryRow {
                initial_level: level,
                burst_length: params.burst_length(),
                full_charge_prob: s.full_charge_prob,
                depletion_prob: s.depletion_prob,
                expected_slots_conditional: s.expected_slots_conditional,
            }
        })
        .collect())
}

/// Level sweeps for several burst lengths at a fixed stationary good
/// probability, rows grouped by burst length in input order.
///
/// Each burst length uses `policy` if given, otherwise the optimal policy
/// for its parameters under `cfg`.
pub fn burst_length_sweep(
    pi_g: f64,
    burst_lengths: &[f64],
    cfg: &RewardConfig,
    policy: Option<ThresholdPolicy>,
    template: &BatteryConfig,
    levels: &[u32],
    phase: StartPhase,
) -> Result<Vec<BatteryRow>> {
    let per_burst: Vec<Vec<BatteryRow>> = burst_lengths
        .par_iter()
        .map(|&t_b| {
            let params = GEParams::from_burst_parameterization(pi_g, t_b)?;
            let pol = match policy {
                Some(p) => p,
                None => optimal_sleep_time(&params, cfg, None)?.0,
            };
            sweep_initial_levels(&params, pol, template, levels, phase)
        })
        .collect::<Result<_>>()?;
    Ok(per_burst.into_iter().flatten().collect())
}

/// CSV with header `initial_level,burst_length,full_charge_prob,depletion_prob,expected_slots_conditional`.
pub fn rows_to_csv(rows: &[BatteryRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "initial_level",
        "burst_length",
        "full_charge_prob",
        "depletion_prob",
        "expected_slots_conditional",
    ])?;
    for r in rows {
        w.write_record([
            r.initial_level.to_string(),
            r.burst_length.to_string(),
            r.full_charge_prob.to_string(),
            r.depletion_prob.to_string(),
            r.expected_slots_conditional.map(|x| x.to_string()).unwrap_or_default(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Serialization(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Serialization(e.to_string()))
}

/// Monte-Carlo estimate of absorption from `(start, level)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulatedAbsorption {
    pub episodes: usize,
    pub full_fraction: f64,
    /// Mean slots over episodes that reached full charge.
    pub mean_slots_given_full: Option<f64>,
}

/// Simulates the embedded chain directly from its success probabilities.
///
/// Episodes are split into fixed chunks with one random stream each, so the
/// estimate is reproducible for a given `seed` regardless of thread count.
pub fn simulate_absorption(
    chain: &BatteryChain,
    start: ArrivalState,
    level: u32,
    episodes: usize,
    seed: u64,
) -> SimulatedAbsorption {
    const CHUNK: usize = 4096;
    let chunks = episodes.div_ceil(CHUNK);
    let (hits, slot_sum) = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream_rng(seed, c as u64);
            let count = CHUNK.min(episodes - c * CHUNK);
            let mut hits = 0usize;
            let mut slots = 0.0f64;
            for _ in 0..count {
                let mut s = start;
                let mut e = level;
                let mut t = 0.0;
                while chain.is_transient(e) {
                    t += chain.weights[chain.index(s, e)];
                    if rng.random::<f64>() < chain.success_probability(s) {
                        s = ArrivalState::G;
                        e = chain.up(e);
                    } else {
                        s = ArrivalState::B;
                        e = chain.down(e);
                    }
                }
                if e == chain.capacity {
                    hits += 1;
                    slots += t;
                }
            }
            (hits, slots)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold((0usize, 0.0f64), |a, b| (a.0 + b.0, a.1 + b.1));
    SimulatedAbsorption {
        episodes,
        full_fraction: hits as f64 / episodes as f64,
        mean_slots_given_full: (hits > 0).then(|| slot_sum / hits as f64),
    }
}
