//! Exact posterior by enumerating every hidden state history.
//!
//! Exponential in the number of unobserved slots, so it is only a reference
//! for checking the particle recursion on short histories.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::particles::{PosteriorCount, StatePrior};
use crate::error::{Error, Result};
use crate::markov::ArrivalState;
use crate::pomdp::Observation;

/// Longest history accepted by [`exact_posterior`].
pub const MAX_EXACT_HISTORY: usize = 25;

/// Weight of one `(state of the last slot, counts)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExactEntry {
    pub state: ArrivalState,
    pub count: PosteriorCount,
    /// Number of consistent histories ending in `state` with counts `count`.
    pub appearance: u64,
    /// `ln(appearance) + ln B(phi1, phi2) + ln B(phi3, phi4)`.
    pub log_weight: f64,
}

/// Exact joint posterior of the last slot's state and the counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactPosterior {
    pub entries: Vec<ExactEntry>,
    /// Log of the sum of all weights: the evidence up to the initial-state prior.
    pub log_evidence: f64,
}

impl ExactPosterior {
    /// Normalized probability of each entry, in entry order.
    pub fn probabilities(&self) -> Vec<f64> {
        self.entries.iter().map(|e| (e.log_weight - self.log_evidence).exp()).collect()
    }

    /// Posterior probability that the last slot was `G`.
    pub fn prob_good(&self) -> f64 {
        self.entries.iter().zip(self.probabilities()).filter(|(e, _)| e.state.is_good()).map(|(_, w)| w).sum()
    }

    /// Posterior means of `(p, q)`.
    pub fn mean_pq(&self) -> (f64, f64) {
        self.entries
            .iter()
            .zip(self.probabilities())
            .fold((0.0, 0.0), |(p, q), (e, w)| (p + w * e.count.p_hat(), q + w * e.count.q_hat()))
    }

    /// Appearance count for `(state, count)`, 0 if absent.
    pub fn appearance(&self, state: ArrivalState, count: PosteriorCount) -> u64 {
        self.entries.iter().find(|e| e.state == state && e.count == count).map_or(0, |e| e.appearance)
    }
}

/// Enumerates all state histories `s_0 .. s_{T-1}` agreeing with the observed
/// slots of `history` and tallies the counts they produce.
pub fn exact_posterior(history: &[Observation], initial: StatePrior) -> Result<ExactPosterior> {
    if history.len() > MAX_EXACT_HISTORY {
        return Err(Error::HistoryTooLong { len: history.len(), max: MAX_EXACT_HISTORY });
    }
    let allowed = |t: usize, s: ArrivalState| {
        let by_obs = history[t].state().map_or(true, |o| o == s);
        let by_prior = t > 0 || matches!(initial, StatePrior::Uninformed) || initial == StatePrior::Known(s);
        by_obs && by_prior
    };
    let mut tally: BTreeMap<(ArrivalState, PosteriorCount), u64> = BTreeMap::new();
    if history.is_empty() {
        for s in [ArrivalState::G, ArrivalState::B] {
            if matches!(initial, StatePrior::Uninformed) || initial == StatePrior::Known(s) {
                tally.insert((s, PosteriorCount::uniform()), 1);
            }
        }
    } else {
        let mut stack: Vec<(usize, ArrivalState, PosteriorCount)> = [ArrivalState::G, ArrivalState::B]
            .into_iter()
            .filter(|&s| allowed(0, s))
            .map(|s| (0, s, PosteriorCount::uniform()))
            .collect();
        while let Some((t, s, c)) = stack.pop() {
            if t + 1 == history.len() {
                *tally.entry((s, c)).or_insert(0) += 1;
                continue;
            }
            for next in [ArrivalState::G, ArrivalState::B] {
                if allowed(t + 1, next) {
                    stack.push((t + 1, next, c.after(s, next)));
                }
            }
        }
    }
    if tally.is_empty() {
        return Err(Error::EmptyPosterior);
    }
    let entries: Vec<ExactEntry> = tally
        .into_iter()
        .map(|((state, count), appearance)| ExactEntry {
            state,
            count,
            appearance,
            log_weight: (appearance as f64).ln() + count.ln_beta_normalizer(),
        })
        .collect();
    let max = entries.iter().map(|e| e.log_weight).fold(f64::NEG_INFINITY, f64::max);
    let log_evidence = max + entries.iter().map(|e| (e.log_weight - max).exp()).sum::<f64>().ln();
    Ok(ExactPosterior { entries, log_evidence })
}

#[cfg(test)]
mod tests {
    use super::*;
    use Observation::{None as Z, B, G};

    #[test]
    fn fully_observed_is_single_entry() {
        let h = [G, G, B, B, G, B];
        let post = exact_posterior(&h, StatePrior::Uninformed).unwrap();
        assert_eq!(post.entries.len(), 1);
        let e = post.entries[0];
        assert_eq!(e.state, ArrivalState::B);
        assert_eq!(e.count, PosteriorCount::new(3, 2, 2, 2));
        assert!((post.probabilities()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn conjugate_mean() {
        // Ten transitions out of G, five of them to B.
        let mut h = Vec::new();
        for _ in 0..5 {
            h.extend([G, G, B]);
        }
        h.push(G);
        let post = exact_posterior(&h, StatePrior::Uninformed).unwrap();
        assert_eq!(post.entries.len(), 1);
        let (p, q) = post.mean_pq();
        assert!((p - (1.0 + 5.0) / (2.0 + 10.0)).abs() < 1e-12);
        assert!((q - (1.0 + 5.0) / (2.0 + 5.0)).abs() < 1e-12);
    }

    #[test]
    fn sleep_branches_counted() {
        let h = [G, Z, B];
        let post = exact_posterior(&h, StatePrior::Uninformed).unwrap();
        assert_eq!(post.appearance(ArrivalState::B, PosteriorCount::new(2, 2, 1, 1)), 1);
        assert_eq!(post.appearance(ArrivalState::B, PosteriorCount::new(2, 1, 1, 2)), 1);
        assert_eq!(post.entries.len(), 2);
    }

    #[test]
    fn all_sleep_counts_histories() {
        let h = [Z; 6];
        let post = exact_posterior(&h, StatePrior::Uninformed).unwrap();
        let total: u64 = post.entries.iter().map(|e| e.appearance).sum();
        assert_eq!(total, 1 << 6);
    }

    #[test]
    fn too_long_rejected() {
        let h = vec![Z; MAX_EXACT_HISTORY + 1];
        assert!(matches!(exact_posterior(&h, StatePrior::Uninformed), Err(Error::HistoryTooLong { .. })));
    }

    #[test]
    fn inconsistent_prior_is_empty() {
        assert!(matches!(exact_posterior(&[G], StatePrior::Known(ArrivalState::B)), Err(Error::EmptyPosterior)));
    }
}
