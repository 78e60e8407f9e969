//! Learning unknown transition probabilities.
//!
//! `p` and `q` get independent Beta priors. Because sleeping hides the
//! arrival state, the posterior is a mixture over the counts implied by every
//! consistent state history, weighted by how many histories produce each one.
//! [`ParticleSet`] maintains that mixture, truncated to the heaviest `2 K`
//! entries, and [`BayesLearner`] acts on it by posterior sampling.

mod exact;
mod learner;
mod particles;

pub use exact::{exact_posterior, ExactEntry, ExactPosterior, MAX_EXACT_HISTORY};
pub use learner::{
    run_learner, run_learner_with, sample_and_plan, BayesLearner, LearnerTrace, Plan, SleepPlanner, FALLBACK_SLEEP,
};
pub use particles::{ln_biguint, Branches, Particle, ParticleSet, PosteriorCount, StatePrior, Weighting};
