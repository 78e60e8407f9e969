//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use harvest_core::battery::{absorption_analysis, build_chain, BatteryConfig, StartPhase};
use harvest_core::bayes::{ParticleSet, PosteriorCount, StatePrior};
use harvest_core::rng::{stream_rng, StreamRng};
use harvest_core::{ArrivalState, GEParams, Observation, ThresholdPolicy};
use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;

use ArrivalState::{B, G};

/// Every hidden state sequence consistent with `history`, tallied by
/// (last state, transition counts on top of the uniform prior).
pub fn brute_force_counts(history: &[Observation]) -> BTreeMap<(ArrivalState, PosteriorCount), u64> {
    let t = history.len();
    let mut out = BTreeMap::new();
    for mask in 0u32..(1 << t) {
        let states: Vec<ArrivalState> = (0..t).map(|i| if mask >> i & 1 == 1 { B } else { G }).collect();
        let consistent = states.iter().zip(history).all(|(s, z)| z.state().map_or(true, |o| o == *s));
        if !consistent {
            continue;
        }
        let mut c = [1u32; 4];
        for w in states.windows(2) {
            let k = match (w[0], w[1]) {
                (G, B) => 0,
                (G, G) => 1,
                (B, G) => 2,
                (B, B) => 3,
            };
            c[k] += 1;
        }
        *out.entry((states[t - 1], PosteriorCount::new(c[0], c[1], c[2], c[3]))).or_insert(0) += 1;
    }
    out
}

/// Posterior marginals under a uniform prior on `(p, q)` and equal weight on
/// each initial state, by the forward algorithm on an `n x n` midpoint grid.
#[derive(Debug, Clone, Copy)]
pub struct Quadrature {
    pub mean_p: f64,
    pub mean_q: f64,
    pub prob_good: f64,
}

pub fn quadrature(history: &[Observation], n: usize) -> Quadrature {
    let allowed = |z: Observation, s: ArrivalState| z.state().map_or(true, |o| o == s);
    let (mut z_all, mut zp, mut zq, mut zg) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        let p = (i as f64 + 0.5) / n as f64;
        for j in 0..n {
            let q = (j as f64 + 0.5) / n as f64;
            let mut g = if allowed(history[0], G) { 1.0 } else { 0.0 };
            let mut b = if allowed(history[0], B) { 1.0 } else { 0.0 };
            for &z in &history[1..] {
                let ng = g * (1.0 - p) + b * q;
                let nb = g * p + b * (1.0 - q);
                g = if allowed(z, G) { ng } else { 0.0 };
                b = if allowed(z, B) { nb } else { 0.0 };
            }
            let l = g + b;
            z_all += l;
            zp += p * l;
            zq += q * l;
            zg += g;
        }
    }
    Quadrature { mean_p: zp / z_all, mean_q: zq / z_all, prob_good: zg / z_all }
}

/// Probability that a +-1 walk with up-probability `up` hits `cap` before 0 from `e`.
pub fn gamblers_ruin(up: f64, e: u32, cap: u32) -> f64 {
    let rho = (1.0 - up) / up;
    if (rho - 1.0).abs() < 1e-12 {
        return e as f64 / cap as f64;
    }
    (1.0 - rho.powi(e as i32)) / (1.0 - rho.powi(cap as i32))
}

/// Mean and standard error of a sample.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Discounted reward of a sleep-`n` threshold policy over `horizon` slots,
/// starting right after a success (first slot drawn from the `G` row).
pub fn threshold_episode(
    params: &GEParams,
    r1: f64,
    r0: f64,
    gamma: f64,
    n: usize,
    horizon: usize,
    rng: &mut StreamRng,
) -> f64 {
    let mut s = G;
    let mut timer = 0usize;
    let mut disc = 1.0;
    let mut total = 0.0;
    for _ in 0..horizon {
        s = params.step(s, rng);
        if timer == 0 {
            if s == G {
                total += disc * r1;
            } else {
                total -= disc * r0;
                timer = n;
            }
        } else {
            timer -= 1;
        }
        disc *= gamma;
    }
    total
}

/// Slot-level battery simulation with unit gain and loss; after a failure
/// the device sleeps `n` slots. Returns whether the
/// battery filled and the number of slots used.
pub fn battery_episode(
    params: &GEParams,
    policy: ThresholdPolicy,
    capacity: u32,
    level: u32,
    phase: StartPhase,
    rng: &mut StreamRng,
) -> (bool, u64) {
    let n = policy.sleep_slots().expect("finite sleep");
    let mut e = level as i64;
    let cap = capacity as i64;
    let mut slots = 0u64;
    let mut s = match phase {
        StartPhase::AfterSuccess => params.step(G, rng),
        StartPhase::AfterFailure => {
            let mut s = B;
            for _ in 0..=n {
                s = params.step(s, rng);
            }
            slots += n as u64;
            s
        }
        StartPhase::Fresh => params.stationary_draw(rng),
    };
    while e > 0 && e < cap {
        slots += 1;
        if s == G {
            e += 1;
            s = params.step(s, rng);
        } else {
            e -= 1;
            for _ in 0..=n {
                s = params.step(s, rng);
            }
            if e > 0 && e < cap {
                slots += n as u64;
            }
        }
    }
    (e >= cap, slots)
}

/// Seeded generator for picking random test parameters.
pub fn param_rng(seed: u64) -> rand_chacha::ChaCha8Rng {
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}

/// A random chain with `1 - p - q >= 0.05`.
pub fn random_params<R: Rng>(rng: &mut R) -> GEParams {
    let q: f64 = rng.random_range(0.05..0.6);
    let p = rng.random_range(0.02..(0.95 - q).min(0.6));
    GEParams::new(p, q).unwrap()
}

pub fn run_rng(seed: u64, stream: u64) -> StreamRng {
    stream_rng(seed, stream)
}

/// All sequences over {G, B, sleep} up to length 4, plus longer random ones.
pub fn scenario_set() -> Vec<Vec<Observation>> {
    use Observation::{None as S, B, G};
    let mut out = Vec::new();
    let mut layer: Vec<Vec<Observation>> = vec![vec![]];
    for _ in 0..4 {
        layer =
            layer.into_iter().flat_map(|h| [G, B, S].into_iter().map(move |z| [h.clone(), vec![z]].concat())).collect();
        out.extend(layer.iter().cloned());
    }
    let mut rng = param_rng(77);
    for _ in 0..40 {
        let len = rng.random_range(5..=10);
        out.push((0..len).map(|_| [G, B, S, S][rng.random_range(0..4)]).collect());
    }
    out
}

pub fn particle_counts(history: &[Observation]) -> BTreeMap<(ArrivalState, PosteriorCount), BigUint> {
    let mut set = ParticleSet::new(StatePrior::Uninformed, None).unwrap();
    for &z in history {
        set.observe(z).unwrap();
    }
    let mut out = BTreeMap::new();
    for (state, list) in [(ArrivalState::G, set.good()), (ArrivalState::B, set.bad())] {
        for p in list {
            assert!(out.insert((state, p.count), p.weight.clone()).is_none(), "duplicate hypothesis");
        }
    }
    out
}

/// Compares the analytic quantities with a slot-level simulation of the device.
pub fn slot_simulation_mismatch(
    ge: &GEParams,
    n: usize,
    cap: u32,
    level: u32,
    phase: StartPhase,
    episodes: usize,
    seed: u64,
) -> Vec<String> {
    let mut bad = Vec::new();
    let pol = ThresholdPolicy::SleepAfterFailure(n);
    let chain = build_chain(ge, pol, &BatteryConfig::new(cap, level).unwrap()).unwrap();
    let want = absorption_analysis(&chain).unwrap().from_start(&chain, level, phase);
    let outcomes: Vec<(bool, u64)> = (0..episodes)
        .into_par_iter()
        .map(|e| battery_episode(ge, pol, cap, level, phase, &mut run_rng(seed, e as u64)))
        .collect();
    let hits: Vec<f64> = outcomes.iter().filter(|o| o.0).map(|o| o.1 as f64).collect();
    let frac = hits.len() as f64 / episodes as f64;
    let h = want.full_charge_prob;
    let sd = (h * (1.0 - h) / episodes as f64).sqrt();
    if (frac - h).abs() > 3.0 * sd {
        bad.push(format!("{ge:?} n={n} level={level}: MC {frac} vs {h} (sd {sd})"));
    }
    let (m, se) = mean_se(&hits);
    let tau = want.expected_slots_conditional.unwrap();
    if (m - tau).abs() > 3.0 * se {
        bad.push(format!("{ge:?} n={n} level={level}: MC slots {m} +- {se} vs {tau}"));
    }
    bad
}
