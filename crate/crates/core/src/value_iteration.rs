//! Value iteration over the belief MDP.
//!
//! Two representations share one contract:
//!
//! * [`ValueFunction`] keeps `V_t` exactly as the upper envelope of a finite
//!   set of lines `alpha + beta * b`. A backup maps every line through the
//!   sleep transition and adds one harvesting line, so the exact form stays
//!   small once dominated lines are pruned.
//! * [`GridValueFunction`] tabulates `V_t` on a belief grid over `[q, 1 - p]`
//!   and interpolates linearly. It is the independent check on the exact
//!   solver.
//!
//! Reachable beliefs after the first observation live in `[q, 1 - p]`, and the
//! stationary belief lies inside it, so both solvers measure convergence and
//! prune on that interval. Action values at any `b` in `[0, 1]` only query the
//! value function inside the interval and are therefore exact everywhere.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::markov::GEParams;
use crate::pomdp::{reward, sleep_update, Action, Belief, RewardConfig, TOLERANCE};
use crate::threshold::{sleep_time_from_threshold, ThresholdPolicy};

/// One line `alpha + beta * b` of a piecewise-linear value function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaVector {
    pub alpha: f64,
    pub beta: f64,
}

impl AlphaVector {
    pub fn new(alpha: f64, beta: f64) -> Self {
        Self { alpha, beta }
    }

    #[inline]
    pub fn eval(&self, b: Belief) -> f64 {
        self.alpha + self.beta * b
    }
}

/// Anything that can be queried for a value at a belief.
pub trait BeliefValue {
    fn value(&self, b: Belief) -> f64;
}

/// Convex piecewise-linear value function `V(b) = max_i (alpha_i + beta_i b)`.
///
/// Lines are kept sorted by slope and every line is the strict maximizer on
/// part of the domain `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueFunction {
    lines: Vec<AlphaVector>,
    lo: f64,
    hi: f64,
}

impl ValueFunction {
    /// `V_0 = 0`, i.e. the single line `(0, 0)`, on `[q, 1 - p]`.
    pub fn zero(params: &GEParams) -> Self {
        Self { lines: vec![AlphaVector::new(0.0, 0.0)], lo: params.q(), hi: 1.0 - params.p() }
    }

    /// Builds a pruned value function from arbitrary lines.
    pub fn from_lines(lines: Vec<AlphaVector>, lo: f64, hi: f64) -> Self {
        Self { lines: prune(lines, lo, hi, TOLERANCE), lo, hi }
    }

    pub fn lines(&self) -> &[AlphaVector] {
        &self.lines
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    /// Beliefs where the maximizing line changes, plus the domain endpoints.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut pts = vec![self.lo];
        for w in self.lines.windows(2) {
            let x = intersect(&w[0], &w[1]);
            if x > self.lo && x < self.hi {
                pts.push(x);
            }
        }
        pts.push(self.hi);
        pts
    }

    /// `sup_b |self(b) - other(b)|` over the shared domain.
    ///
    /// The difference of two piecewise-linear functions is piecewise linear
    /// with kinks only at their breakpoints, so checking those is exact.
    pub fn sup_distance(&self, other: &ValueFunction) -> f64 {
        self.breakpoints()
            .into_iter()
            .chain(other.breakpoints())
            .map(|b| (self.value(b) - other.value(b)).abs())
            .fold(0.0, f64::max)
    }

    /// Exact crossover `min { b in [0, 1] : V(b, H) >= V(b, S) }`, or `None`
    /// when harvesting is never at least as good as sleeping.
    pub fn crossover_belief(&self, params: &GEParams, cfg: &RewardConfig) -> Option<Belief> {
        let parts = backup_components(self, params, cfg);
        let h = parts.harvest;
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for s in &parts.sleep {
            // h(b) - s(b) = a + c b >= -tol
            let a = h.alpha - s.alpha;
            let c = h.beta - s.beta;
            if c.abs() <= f64::EPSILON * (h.beta.abs() + s.beta.abs()).max(1.0) {
                if a < -TOLERANCE {
                    return None;
                }
            } else if c > 0.0 {
                lo = lo.max((-TOLERANCE - a) / c);
            } else {
                hi = hi.min((-TOLERANCE - a) / c);
            }
        }
        (lo <= hi).then_some(lo)
    }
}

impl BeliefValue for ValueFunction {
    fn value(&self, b: Belief) -> f64 {
        self.lines.iter().map(|l| l.eval(b)).fold(f64::NEG_INFINITY, f64::max)
    }
}

#[inline]
fn intersect(a: &AlphaVector, b: &AlphaVector) -> f64 {
    (a.alpha - b.alpha) / (b.beta - a.beta)
}

/// Upper envelope of `lines` restricted to `[lo, hi]`.
///
/// A line survives only if it beats every other surviving line by more than
/// `tol` somewhere in the interval. The result is sorted by slope.
pub fn prune(mut lines: Vec<AlphaVector>, lo: f64, hi: f64, tol: f64) -> Vec<AlphaVector> {
    if lines.len() <= 1 {
        return lines;
    }
    lines.sort_by(|a, b| a.beta.total_cmp(&b.beta).then(b.alpha.total_cmp(&a.alpha)));

    // Drop lines weakly dominated at both endpoints by their predecessor with
    // (almost) the same slope; those can never win by more than tol.
    let mut dedup: Vec<AlphaVector> = Vec::with_capacity(lines.len());
    for l in lines {
        if let Some(last) = dedup.last() {
            if l.eval(lo) <= last.eval(lo) + tol && l.eval(hi) <= last.eval(hi) + tol {
                continue;
            }
            if last.eval(lo) <= l.eval(lo) + tol && last.eval(hi) <= l.eval(hi) + tol {
                dedup.pop();
            }
        }
        dedup.push(l);
    }

    // Envelope over the real line, slopes increasing.
    let mut hull: Vec<AlphaVector> = Vec::with_capacity(dedup.len());
    for l in dedup {
        while let Some(top) = hull.last() {
            if top.beta == l.beta {
                if top.alpha >= l.alpha {
                    break;
                }
                hull.pop();
                continue;
            }
            if hull.len() >= 2 {
                let prev = &hull[hull.len() - 2];
                if intersect(prev, &l) <= intersect(prev, top) {
                    hull.pop();
                    continue;
                }
            }
            break;
        }
        if hull.last().is_some_and(|t| t.beta == l.beta && t.alpha >= l.alpha) {
            continue;
        }
        hull.push(l);
    }

    // Clip to the domain: keep lines whose winning interval meets [lo, hi].
    let mut kept: Vec<AlphaVector> = Vec::with_capacity(hull.len());
    for i in 0..hull.len() {
        let left = if i == 0 { f64::NEG_INFINITY } else { intersect(&hull[i - 1], &hull[i]) };
        let right = if i + 1 == hull.len() { f64::INFINITY } else { intersect(&hull[i], &hull[i + 1]) };
        if left.max(lo) < right.min(hi) || (hull.len() == 1) {
            kept.push(hull[i]);
        }
    }
    if kept.is_empty() {
        // Degenerate interval: keep the best line at lo.
        let best = hull.iter().copied().max_by(|a, b| a.eval(lo).total_cmp(&b.eval(lo))).expect("nonempty hull");
        return vec![best];
    }

    // Remove lines whose best margin over their neighbours is within tol,
    // one at a time so that near-coincident pairs keep one representative.
    loop {
        if kept.len() <= 1 {
            break;
        }
        let mut worst = None;
        let mut worst_margin = f64::INFINITY;
        for i in 0..kept.len() {
            let m = neighbour_margin(&kept, i, lo, hi);
            if m < worst_margin {
                worst_margin = m;
                worst = Some(i);
            }
        }
        match worst {
            Some(i) if worst_margin <= tol => {
                kept.remove(i);
            }
            _ => break,
        }
    }
    kept
}

fn neighbour_margin(kept: &[AlphaVector], i: usize, lo: f64, hi: f64) -> f64 {
    let line = kept[i];
    let left = (i > 0).then(|| kept[i - 1]);
    let right = kept.get(i + 1).copied();
    let a = match left {
        Some(l) => intersect(&l, &line).max(lo),
        None => lo,
    };
    let b = match right {
        Some(r) => intersect(&line, &r).min(hi),
        None => hi,
    };
    if !(a <= b) {
        return f64::NEG_INFINITY;
    }
    let others = |x: f64| {
        let mut m = f64::NEG_INFINITY;
        if let Some(l) = left {
            m = m.max(l.eval(x));
        }
        if let Some(r) = right {
            m = m.max(r.eval(x));
        }
        m
    };
    let mut pts = vec![a, b, 0.5 * (a + b)];
    if let (Some(l), Some(r)) = (left, right) {
        let x = intersect(&l, &r);
        if x > a && x < b {
            pts.push(x);
        }
    }
    pts.into_iter().map(|x| line.eval(x) - others(x)).fold(f64::NEG_INFINITY, f64::max)
}

/// The two halves of one exact backup before pruning.
#[derive(Debug, Clone)]
pub struct BackupComponents {
    /// `V_{t+1}(b, H)`.
    pub harvest: AlphaVector,
    /// Lines whose envelope is `V_{t+1}(b, S)`.
    pub sleep: Vec<AlphaVector>,
}

/// Harvest line `(-r0 + g V(q), r0 + r1 + g (V(1-p) - V(q)))` and sleep lines
/// `(g (alpha + beta q), g beta (1 - p - q))` for the current set.
pub fn backup_components(v: &ValueFunction, params: &GEParams, cfg: &RewardConfig) -> BackupComponents {
    let g = cfg.gamma();
    let (q, m) = (params.q(), params.memory());
    let v_fail = v.value(q);
    let v_succ = v.value(1.0 - params.p());
    let harvest = AlphaVector::new(-cfg.r0() + g * v_fail, cfg.r0() + cfg.r1() + g * (v_succ - v_fail));
    let sleep = v.lines.iter().map(|l| AlphaVector::new(g * (l.alpha + l.beta * q), g * l.beta * m)).collect();
    BackupComponents { harvest, sleep }
}

/// One exact Bellman backup, dominated lines pruned.
pub fn bellman_backup_alpha(v: &ValueFunction, params: &GEParams, cfg: &RewardConfig) -> ValueFunction {
    let BackupComponents { harvest, mut sleep } = backup_components(v, params, cfg);
    sleep.push(harvest);
    ValueFunction::from_lines(sleep, v.lo, v.hi)
}

/// Value function tabulated on a belief grid over `[q, 1 - p]`.
///
/// `q`, `1 - p` and the stationary belief are always grid points, so harvest
/// successors are read exactly; sleep successors are interpolated linearly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridValueFunction {
    grid: Vec<f64>,
    values: Vec<f64>,
}

impl GridValueFunction {
    /// `V_0 = 0` on a grid with spacing at most `resolution`.
    pub fn zero(params: &GEParams, resolution: f64) -> Self {
        let grid = belief_grid(params, resolution);
        let values = vec![0.0; grid.len()];
        Self { grid, values }
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `max` over grid points of `|self - other|`; both must share a grid.
    pub fn sup_distance(&self, other: &GridValueFunction) -> f64 {
        debug_assert_eq!(self.grid.len(), other.grid.len());
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    /// Smallest grid point where the greedy action is `Harvest`.
    pub fn crossover_belief(&self, params: &GEParams, cfg: &RewardConfig) -> Option<Belief> {
        self.grid.iter().copied().find(|&b| greedy_policy(self, params, cfg, b) == Action::Harvest)
    }

    fn locate(&self, b: f64) -> (usize, f64) {
        let n = self.grid.len();
        if b <= self.grid[0] {
            return (0, 0.0);
        }
        if b >= self.grid[n - 1] {
            return (n - 2, 1.0);
        }
        let j = self.grid.partition_point(|&x| x <= b);
        let i = j - 1;
        let w = (b - self.grid[i]) / (self.grid[j] - self.grid[i]);
        (i, w)
    }
}

impl BeliefValue for GridValueFunction {
    fn value(&self, b: Belief) -> f64 {
        if self.grid.len() == 1 {
            return self.values[0];
        }
        let (i, w) = self.locate(b);
        self.values[i] * (1.0 - w) + self.values[i + 1] * w
    }
}

/// Uniform grid over `[q, 1 - p]` with spacing `<= resolution`, plus the stationary belief.
pub fn belief_grid(params: &GEParams, resolution: f64) -> Vec<f64> {
    let (lo, hi) = (params.q(), 1.0 - params.p());
    let width = hi - lo;
    let cells = (width / resolution).ceil().max(1.0) as usize;
    let mut grid: Vec<f64> = (0..=cells).map(|i| lo + width * (i as f64) / (cells as f64)).collect();
    *grid.last_mut().expect("grid nonempty") = hi;
    let pi = params.pi_g();
    let pos = grid.partition_point(|&x| x < pi);
    if grid.get(pos).map_or(true, |&x| (x - pi).abs() > 1e-15) {
        grid.insert(pos, pi);
    }
    grid.dedup_by(|a, b| (*a - *b).abs() <= 1e-15);
    grid
}

/// One grid Bellman backup with linear interpolation of sleep successors.
pub fn bellman_backup_grid(v: &GridValueFunction, params: &GEParams, cfg: &RewardConfig) -> GridValueFunction {
    let g = cfg.gamma();
    let v_fail = v.values[0];
    let v_succ = *v.values.last().expect("grid nonempty");
    let values = v
        .grid
        .iter()
        .map(|&b| {
            let h = reward(b, Action::Harvest, cfg) + g * ((1.0 - b) * v_fail + b * v_succ);
            let s = g * v.value(sleep_update(b, params));
            h.max(s)
        })
        .collect();
    GridValueFunction { grid: v.grid.clone(), values }
}

/// Inputs to [`solve`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VISettings {
    /// Absolute error bound; the result is within `epsilon / 2` of `V*`.
    pub epsilon: f64,
    pub max_iterations: usize,
    pub grid_resolution: f64,
}

impl VISettings {
    /// Defaults scaled to the rewards: `epsilon = 1e-4 * max(r0, r1)`.
    pub fn for_rewards(cfg: &RewardConfig) -> Self {
        Self { epsilon: 1e-4 * cfg.scale(), ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::invalid("epsilon", self.epsilon, "must be > 0"));
        }
        if !(self.grid_resolution > 0.0) {
            return Err(Error::invalid("grid_resolution", self.grid_resolution, "must be > 0"));
        }
        if self.max_iterations == 0 {
            return Err(Error::invalid("max_iterations", 0.0, "must be >= 1"));
        }
        Ok(())
    }

    /// Sup-norm change that ends the iteration, `epsilon (1 - g) / (2 g)`.
    pub fn stopping_threshold(&self, gamma: f64) -> f64 {
        if gamma == 0.0 {
            f64::INFINITY
        } else {
            self.epsilon * (1.0 - gamma) / (2.0 * gamma)
        }
    }
}

impl Default for VISettings {
    fn default() -> Self {
        Self { epsilon: 1e-4, max_iterations: 1_000_000, grid_resolution: 1e-4 }
    }
}

/// Result of a converged value iteration.
#[derive(Debug, Clone)]
pub struct Solution<V> {
    pub value: V,
    pub iterations: usize,
    /// `sup_b |V_{t+1} - V_t|` for every performed backup.
    pub residuals: Vec<f64>,
}

/// Which representation [`solve`] should use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    #[default]
    Alpha,
    Grid,
}

/// A value function in either representation.
#[derive(Debug, Clone)]
pub enum SolvedValue {
    Alpha(ValueFunction),
    Grid(GridValueFunction),
}

impl BeliefValue for SolvedValue {
    fn value(&self, b: Belief) -> f64 {
        match self {
            SolvedValue::Alpha(v) => v.value(b),
            SolvedValue::Grid(v) => v.value(b),
        }
    }
}

impl SolvedValue {
    pub fn crossover_belief(&self, params: &GEParams, cfg: &RewardConfig) -> Option<Belief> {
        match self {
            SolvedValue::Alpha(v) => v.crossover_belief(params, cfg),
            SolvedValue::Grid(v) => v.crossover_belief(params, cfg),
        }
    }
}

/// Runs value iteration until the sup-norm change falls below the stopping threshold.
pub fn solve(
    params: &GEParams,
    cfg: &RewardConfig,
    settings: &VISettings,
    repr: Representation,
) -> Result<Solution<SolvedValue>> {
    Ok(match repr {
        Representation::Alpha => {
            let s = solve_alpha(params, cfg, settings)?;
            Solution { value: SolvedValue::Alpha(s.value), iterations: s.iterations, residuals: s.residuals }
        }
        Representation::Grid => {
            let s = solve_grid(params, cfg, settings)?;
            Solution { value: SolvedValue::Grid(s.value), iterations: s.iterations, residuals: s.residuals }
        }
    })
}

pub fn solve_alpha(params: &GEParams, cfg: &RewardConfig, settings: &VISettings) -> Result<Solution<ValueFunction>> {
    solve_alpha_observed(params, cfg, settings, |_, _| {})
}

/// [`solve_alpha`], calling `observe(t, &V_t)` on every iterate including `V_0`.
pub fn solve_alpha_observed(
    params: &GEParams,
    cfg: &RewardConfig,
    settings: &VISettings,
    mut observe: impl FnMut(usize, &ValueFunction),
) -> Result<Solution<ValueFunction>> {
    settings.validate()?;
    let threshold = settings.stopping_threshold(cfg.gamma());
    let mut v = ValueFunction::zero(params);
    observe(0, &v);
    let mut residuals = Vec::new();
    for t in 1..=settings.max_iterations {
        let next = bellman_backup_alpha(&v, params, cfg);
        let r = next.sup_distance(&v);
        residuals.push(r);
        v = next;
        observe(t, &v);
        if r <= threshold {
            return Ok(Solution { value: v, iterations: t, residuals });
        }
    }
    Err(Error::MaxIterationsExceeded {
        iterations: settings.max_iterations,
        residual: residuals.last().copied().unwrap_or(f64::INFINITY),
    })
}

pub fn solve_grid(params: &GEParams, cfg: &RewardConfig, settings: &VISettings) -> Result<Solution<GridValueFunction>> {
    settings.validate()?;
    let threshold = settings.stopping_threshold(cfg.gamma());
    let mut v = GridValueFunction::zero(params, settings.grid_resolution);

    // Sleep successors are fixed by the grid; locate them once.
    let g = cfg.gamma();
    let targets: Vec<(usize, f64)> = v.grid.iter().map(|&b| v.locate(sleep_update(b, params))).collect();
    let harvest_base: Vec<f64> = v.grid.iter().map(|&b| reward(b, Action::Harvest, cfg)).collect();

    let mut residuals = Vec::new();
    let mut next = vec![0.0; v.grid.len()];
    for t in 1..=settings.max_iterations {
        let v_fail = v.values[0];
        let v_succ = *v.values.last().expect("grid nonempty");
        let mut r = 0.0f64;
        for (k, &b) in v.grid.iter().enumerate() {
            let h = harvest_base[k] + g * ((1.0 - b) * v_fail + b * v_succ);
            let (i, w) = targets[k];
            let s =
                if v.values.len() == 1 { g * v.values[0] } else { g * (v.values[i] * (1.0 - w) + v.values[i + 1] * w) };
            next[k] = h.max(s);
            r = r.max((next[k] - v.values[k]).abs());
        }
        std::mem::swap(&mut v.values, &mut next);
        residuals.push(r);
        if r <= threshold {
            return Ok(Solution { value: v, iterations: t, residuals });
        }
    }
    Err(Error::MaxIterationsExceeded {
        iterations: settings.max_iterations,
        residual: residuals.last().copied().unwrap_or(f64::INFINITY),
    })
}

/// `(V(b, H), V(b, S))` under the one-step lookahead of `v`.
pub fn action_values<V: BeliefValue + ?Sized>(v: &V, params: &GEParams, cfg: &RewardConfig, b: Belief) -> (f64, f64) {
    let g = cfg.gamma();
    let h = reward(b, Action::Harvest, cfg) + g * ((1.0 - b) * v.value(params.q()) + b * v.value(1.0 - params.p()));
    let s = g * v.value(sleep_update(b, params));
    (h, s)
}

/// Greedy action at `b`; ties go to `Harvest`.
pub fn greedy_policy<V: BeliefValue + ?Sized>(v: &V, params: &GEParams, cfg: &RewardConfig, b: Belief) -> Action {
    let (h, s) = action_values(v, params, cfg, b);
    if h >= s - TOLERANCE {
        Action::Harvest
    } else {
        Action::Sleep
    }
}

/// Threshold policy implied by a greedy crossover belief.
pub fn implied_policy(crossover: Option<Belief>, params: &GEParams) -> ThresholdPolicy {
    match crossover {
        None => ThresholdPolicy::NeverHarvest,
        Some(bbar) => sleep_time_from_threshold(bbar, params),
    }
}

/// Summary of one value-iteration run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub p: f64,
    pub q: f64,
    pub reward: RewardConfig,
    pub representation: Representation,
    pub epsilon: f64,
    pub iterations: usize,
    /// `V(q)`, the value right after a failure.
    pub v_fail: f64,
    /// `V(1 - p)`, the value right after a success.
    pub v_good: f64,
    /// Smallest belief at which harvesting is optimal, if any in `[q, 1 - p]`.
    pub crossover: Option<Belief>,
    pub policy: ThresholdPolicy,
    pub n_or_never: String,
}

impl SolveReport {
    pub fn compute(params: &GEParams, cfg: &RewardConfig, settings: &VISettings, repr: Representation) -> Result<Self> {
        let sol = solve(params, cfg, settings, repr)?;
        let crossover = sol.value.crossover_belief(params, cfg);
        let policy = implied_policy(crossover, params);
        Ok(Self {
            p: params.p(),
            q: params.q(),
            reward: *cfg,
            representation: repr,
            epsilon: settings.epsilon,
            iterations: sol.iterations,
            v_fail: sol.value.value(params.q()),
            v_good: sol.value.value(1.0 - params.p()),
            crossover,
            policy,
            n_or_never: policy.to_string(),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn setup() -> (GEParams, RewardConfig) {
        (GEParams::new(0.2, 0.3).unwrap(), RewardConfig::new(10.0, 1.0, 0.9).unwrap())
    }

    #[test]
    fn first_backup_from_zero() {
        let (ge, cfg) = setup();
        let v1 = bellman_backup_alpha(&ValueFunction::zero(&ge), &ge, &cfg);
        let parts = backup_components(&ValueFunction::zero(&ge), &ge, &cfg);
        assert_eq!(parts.harvest, AlphaVector::new(-1.0, 11.0));
        assert_eq!(parts.sleep, vec![AlphaVector::new(0.0, 0.0)]);
        // Harvest line is positive on the whole domain [0.3, 0.8], so it alone survives.
        assert_eq!(v1.lines(), &[AlphaVector::new(-1.0, 11.0)]);
        for b in [0.3, 0.5, 0.8] {
            assert!((v1.value(b) - (11.0 * b - 1.0f64).max(0.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn first_backup_keeps_sleep_line_when_it_wins() {
        let ge = GEParams::new(0.2, 0.3).unwrap();
        let cfg = RewardConfig::new(1.0, 10.0, 0.9).unwrap();
        let v1 = bellman_backup_alpha(&ValueFunction::zero(&ge), &ge, &cfg);
        // Crossover at 10/11 lies beyond 1 - p = 0.8: only the sleep line is maximal on the domain.
        assert_eq!(v1.lines(), &[AlphaVector::new(0.0, 0.0)]);

        let ge = GEParams::new(0.05, 0.3).unwrap();
        let v1 = bellman_backup_alpha(&ValueFunction::zero(&ge), &ge, &cfg);
        assert_eq!(v1.lines(), &[AlphaVector::new(0.0, 0.0), AlphaVector::new(-10.0, 11.0)]);
    }

    #[test]
    fn prune_removes_dominated_and_coincident() {
        let lines = vec![
            AlphaVector::new(0.0, 0.0),
            AlphaVector::new(-1.0, 2.0),
            AlphaVector::new(-0.6, 1.0), // under the envelope of the other two
            AlphaVector::new(-1.0, 2.0 + 1e-15),
            AlphaVector::new(-5.0, 0.0),
        ];
        let kept = prune(lines, 0.0, 1.0, 1e-12);
        assert_eq!(kept.len(), 2);
        assert_eq!(kept[0], AlphaVector::new(0.0, 0.0));
        assert!((kept[1].beta - 2.0).abs() < 1e-12);
    }

    #[test]
    fn prune_drops_lines_winning_only_outside_domain() {
        let lines = vec![AlphaVector::new(0.0, 0.0), AlphaVector::new(-0.9, 1.0)];
        let kept = prune(lines, 0.2, 0.8, 1e-12);
        assert_eq!(kept, vec![AlphaVector::new(0.0, 0.0)]);
    }

    #[test]
    fn grid_backup_from_zero_is_one_step_reward() {
        let (ge, cfg) = setup();
        let v0 = GridValueFunction::zero(&ge, 1e-3);
        let v1 = bellman_backup_grid(&v0, &ge, &cfg);
        for (b, v) in v1.grid().iter().zip(v1.values()) {
            assert!((v - (11.0 * b - 1.0f64).max(0.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn grid_contains_special_beliefs() {
        let ge = GEParams::new(0.2667, 0.4).unwrap();
        let grid = belief_grid(&ge, 1e-3);
        assert_eq!(grid[0], 0.4);
        assert_eq!(*grid.last().unwrap(), 1.0 - 0.2667);
        assert!(grid.iter().any(|&x| x == ge.pi_g()));
        assert!(grid.windows(2).all(|w| w[1] > w[0] && w[1] - w[0] <= 1e-3 + 1e-15));
    }

    #[test]
    fn myopic_problem_converges_in_one_iteration() {
        let ge = GEParams::new(0.2, 0.3).unwrap();
        let cfg = RewardConfig::new(10.0, 10.0, 0.0).unwrap();
        let settings = VISettings::default();
        let sol = solve_alpha(&ge, &cfg, &settings).unwrap();
        assert_eq!(sol.iterations, 1);
        for b in [0.3, 0.4, 0.5, 0.6, 0.8] {
            assert!((sol.value.value(b) - (20.0 * b - 10.0f64).max(0.0)).abs() < 1e-12);
        }
        let grid = solve_grid(&ge, &cfg, &settings).unwrap();
        assert_eq!(grid.iterations, 1);
    }

    #[test]
    fn max_iterations_reported() {
        let (ge, _) = setup();
        let cfg = RewardConfig::new(10.0, 1.0, 0.999).unwrap();
        let settings = VISettings { max_iterations: 5, ..VISettings::default() };
        assert!(matches!(solve_alpha(&ge, &cfg, &settings), Err(Error::MaxIterationsExceeded { iterations: 5, .. })));
    }

    #[test]
    fn greedy_extremes() {
        let (ge, cfg) = setup();
        let sol = solve_alpha(&ge, &cfg, &VISettings::for_rewards(&cfg)).unwrap();
        assert_eq!(greedy_policy(&sol.value, &ge, &cfg, 1.0), Action::Harvest);

        let never = RewardConfig::new(1.0, 10.0, 0.9).unwrap();
        let sol = solve_alpha(&ge, &never, &VISettings::for_rewards(&never)).unwrap();
        assert_eq!(greedy_policy(&sol.value, &ge, &never, 0.0), Action::Sleep);
    }

    #[test]
    fn residuals_contract_at_rate_gamma() {
        let ge = GEParams::new(0.1, 0.2).unwrap();
        let cfg = RewardConfig::new(10.0, 10.0, 0.95).unwrap();
        let sol = solve_alpha(&ge, &cfg, &VISettings::for_rewards(&cfg)).unwrap();
        for w in sol.residuals.windows(2) {
            assert!(w[1] <= cfg.gamma() * w[0] + 1e-9, "{w:?}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn prune_preserves_envelope(
            raw in prop::collection::vec((-5.0f64..5.0, 0.0f64..10.0), 1..20),
            xs in prop::collection::vec(0.2f64..0.7, 10),
        ) {
            let lines: Vec<AlphaVector> = raw.iter().map(|&(a, b)| AlphaVector::new(a, b)).collect();
            let full = |x: f64| lines.iter().map(|l| l.eval(x)).fold(f64::NEG_INFINITY, f64::max);
            let kept = prune(lines.clone(), 0.2, 0.7, 1e-12);
            for x in xs {
                let pruned = kept.iter().map(|l| l.eval(x)).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!((pruned - full(x)).abs() < 1e-9);
            }
        }
    }
}
