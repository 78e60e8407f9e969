//! Closed-form threshold policies.
//!
//! The optimal policy keeps harvesting after a success and sleeps a fixed
//! number of slots `N` after a failure, or stops harvesting for good. This
//! module maps a belief threshold to `N`, evaluates every candidate `N`
//! exactly through a 3x3 linear system and builds lookup tables over
//! parameter grids.

use std::fmt;

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::markov::GEParams;
use crate::pomdp::{belief_after_failure_and_sleep, sleeps_to_stationarity, Belief, RewardConfig, TOLERANCE};

/// Schema tag written into serialized lookup tables.
pub const TABLE_SCHEMA: &str = "harvest.lookup-table/v1";

/// Sleep count after a failed harvest, or no further harvesting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdPolicy {
    NeverHarvest,
    SleepAfterFailure(usize),
}

impl ThresholdPolicy {
    pub fn sleep_slots(&self) -> Option<usize> {
        match self {
            ThresholdPolicy::NeverHarvest => None,
            ThresholdPolicy::SleepAfterFailure(n) => Some(*n),
        }
    }
}

impl fmt::Display for ThresholdPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ThresholdPolicy::NeverHarvest => f.write_str("never"),
            ThresholdPolicy::SleepAfterFailure(n) => write!(f, "{n}"),
        }
    }
}

/// Values of a threshold policy at the three beliefs it visits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyValue {
    /// Value at `1 - p`, right after a success.
    pub v_good: f64,
    /// Value at `q`, right after a failure.
    pub v_fail: f64,
    /// Value at the wake-up belief `b'` after the sleep.
    pub v_wake: f64,
}

/// Sleep count that first lifts the post-failure belief to `bbar`.
///
/// `NeverHarvest` when `bbar` is at or above the stationary belief, otherwise
/// `N = ceil(log_{1-p-q}((q - (p+q) bbar) / q)) - 1`, clamped at zero. The
/// logarithm is only a starting guess: the result is the smallest `n` whose
/// belief reaches `bbar` within [`TOLERANCE`], which removes rounding
/// artefacts at exact ties.
pub fn sleep_time_from_threshold(bbar: Belief, params: &GEParams) -> ThresholdPolicy {
    let (p, q) = (params.p(), params.q());
    if bbar >= q / (p + q) {
        return ThresholdPolicy::NeverHarvest;
    }
    let m = params.memory();
    let reaches = |n: usize| belief_after_failure_and_sleep(n, params) >= bbar - TOLERANCE;
    let mut n = if m > 0.0 && bbar > q {
        let ratio = (q - (p + q) * bbar) / q;
        let guess = (ratio.ln() / m.ln()).ceil() - 1.0;
        if guess.is_finite() && guess > 0.0 {
            guess as usize
        } else {
            0
        }
    } else {
        0
    };
    while n > 0 && reaches(n - 1) {
        n -= 1;
    }
    while !reaches(n) {
        n += 1;
    }
    ThresholdPolicy::SleepAfterFailure(n)
}

/// Exact value of the policy that sleeps `n` slots after each failure.
///
/// Solves for `(V(q), V(1-p), V(b'))`:
///
/// ```text
/// V(q)   = g^n V(b')
/// V(1-p) = (1-p)(r0+r1) - r0 + g p V(q) + g (1-p) V(1-p)
/// V(b')  = b'(r0+r1) - r0 + g (1-b') V(q) + g b' V(1-p)
/// ```
pub fn policy_value_linear_system(n: usize, params: &GEParams, cfg: &RewardConfig) -> Result<PolicyValue> {
    let (p, g) = (params.p(), cfg.gamma());
    let rr = cfg.r0() + cfg.r1();
    let wake = belief_after_failure_and_sleep(n, params);
    let gn = gamma_pow(g, n);
    let a = Matrix3::new(1.0, 0.0, -gn, -g * p, 1.0 - g * (1.0 - p), 0.0, -g * (1.0 - wake), -g * wake, 1.0);
    let rhs = Vector3::new(0.0, (1.0 - p) * rr - cfg.r0(), wake * rr - cfg.r0());
    let lu = a.lu();
    if lu.determinant().abs() < 1e-14 {
        return Err(Error::SingularSystem { n });
    }
    let x = lu.solve(&rhs).ok_or(Error::SingularSystem { n })?;
    Ok(PolicyValue { v_fail: x[0], v_good: x[1], v_wake: x[2] })
}

/// `V(1-p)` of the `n`-sleep policy as the ratio `F(n) / G(n)` with
///
/// ```text
/// F(n) = g^(n+1) r1 (b' - 1 + p) + r1 - p (r0 + r1)
/// G(n) = g^(n+1) (b'(1-g) - (1 - g + g p)) + 1 - g + g p
/// ```
///
/// This agrees with [`policy_value_linear_system`] (checked symbolically and in
/// the tests); the linear system remains the reference implementation.
pub fn policy_value_closed_form(n: usize, params: &GEParams, cfg: &RewardConfig) -> f64 {
    let (p, g) = (params.p(), cfg.gamma());
    let (r0, r1) = (cfg.r0(), cfg.r1());
    let wake = belief_after_failure_and_sleep(n, params);
    let g1 = gamma_pow(g, n) * g;
    let f = g1 * r1 * (wake - 1.0 + p) + r1 - p * (r0 + r1);
    let den = g1 * (wake * (1.0 - g) - (1.0 - g + g * p)) + 1.0 - g + g * p;
    f / den
}

fn gamma_pow(g: f64, n: usize) -> f64 {
    if n == 0 {
        1.0
    } else {
        g.powi(i32::try_from(n).unwrap_or(i32::MAX))
    }
}

/// Value of stopping after the first failure, the `n -> inf` limit of the
/// sleep family, floored at zero (never harvesting at all).
pub fn never_harvest_value(params: &GEParams, cfg: &RewardConfig) -> PolicyValue {
    let (p, g) = (params.p(), cfg.gamma());
    let limit = ((1.0 - p) * (cfg.r0() + cfg.r1()) - cfg.r0()) / (1.0 - g * (1.0 - p));
    PolicyValue { v_good: limit.max(0.0), v_fail: 0.0, v_wake: 0.0 }
}

/// Default search cap: beliefs are within 1e-12 of stationary beyond it.
pub fn default_sleep_cap(params: &GEParams) -> usize {
    sleeps_to_stationarity(params, 1e-12) + 16
}

/// Best policy in the sleep family by exhaustive search over `n in 0..=n_max`.
///
/// Ties go to the smaller `n`. The result is `NeverHarvest` unless the best
/// finite sleep strictly beats stopping after the first failure (or never
/// harvesting, whichever is larger).
pub fn optimal_sleep_time(
    params: &GEParams,
    cfg: &RewardConfig,
    n_max: Option<usize>,
) -> Result<(ThresholdPolicy, PolicyValue)> {
    let n_max = n_max.unwrap_or_else(|| default_sleep_cap(params)).max(1);
    let mut best: Option<(usize, PolicyValue)> = None;
    for n in 0..=n_max {
        let v = policy_value_linear_system(n, params, cfg)?;
        let better = match &best {
            None => true,
            Some((_, b)) => v.v_good > b.v_good + tie_tolerance(b.v_good),
        };
        if better {
            best = Some((n, v));
        }
    }
    let (n, v) = best.expect("at least one candidate");
    let never = never_harvest_value(params, cfg);
    if v.v_good > never.v_good + tie_tolerance(never.v_good) {
        Ok((ThresholdPolicy::SleepAfterFailure(n), v))
    } else {
        Ok((ThresholdPolicy::NeverHarvest, never))
    }
}

fn tie_tolerance(v: f64) -> f64 {
    TOLERANCE * v.abs().max(1.0)
}

/// Summary printed for a single parameter point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyReport {
    pub p: f64,
    pub q: f64,
    pub pi_g: f64,
    pub t_b: f64,
    pub reward: RewardConfig,
    pub policy: ThresholdPolicy,
    pub n_or_never: String,
    pub value: PolicyValue,
}

impl PolicyReport {
    pub fn compute(params: &GEParams, cfg: &RewardConfig) -> Result<Self> {
        let (policy, value) = optimal_sleep_time(params, cfg, None)?;
        Ok(Self {
            p: params.p(),
            q: params.q(),
            pi_g: params.pi_g(),
            t_b: params.burst_length(),
            reward: *cfg,
            policy,
            n_or_never: policy.to_string(),
            value,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

/// Grid axes of a lookup table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AxisSpec {
    /// Stationary good probability (outer) by mean bad-burst length (inner).
    Burst { pi_g: Vec<f64>, t_b: Vec<f64> },
    /// `p` (outer) by `q` (inner).
    Transition { p: Vec<f64>, q: Vec<f64> },
}

impl AxisSpec {
    pub fn burst_linspace(pi_g: (f64, f64, usize), t_b: (f64, f64, usize)) -> Self {
        AxisSpec::Burst { pi_g: linspace(pi_g.0, pi_g.1, pi_g.2), t_b: linspace(t_b.0, t_b.1, t_b.2) }
    }

    fn axes(&self) -> (&[f64], &[f64]) {
        match self {
            AxisSpec::Burst { pi_g, t_b } => (pi_g, t_b),
            AxisSpec::Transition { p, q } => (p, q),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        let (a, b) = self.axes();
        (a.len(), b.len())
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            AxisSpec::Burst { pi_g, t_b } => {
                if let Some(&x) = pi_g.iter().find(|&&x| !(x > 0.0 && x < 1.0)) {
                    return Err(Error::invalid("pi_g", x, "must lie in (0, 1)"));
                }
                if let Some(&x) = t_b.iter().find(|&&x| !(x > 1.0 && x.is_finite())) {
                    return Err(Error::invalid("t_b", x, "must be finite and > 1"));
                }
            }
            AxisSpec::Transition { p, q } => {
                if let Some(&x) = p.iter().chain(q).find(|&&x| !(x > 0.0 && x < 1.0)) {
                    return Err(Error::invalid("p/q", x, "must lie in (0, 1)"));
                }
            }
        }
        Ok(())
    }
}

/// `n` evenly spaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| {
                let t = i as f64 / (n - 1) as f64;
                lo * (1.0 - t) + hi * t
            })
            .collect(),
    }
}

/// One grid cell. `policy` and `value` are `None` where `1 - p <= q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableCell {
    pub pi_g: f64,
    pub t_b: f64,
    pub p: f64,
    pub q: f64,
    pub policy: Option<ThresholdPolicy>,
    pub value: Option<PolicyValue>,
}

impl TableCell {
    pub fn is_valid(&self) -> bool {
        self.policy.is_some()
    }

    pub fn n_or_never(&self) -> String {
        match self.policy {
            Some(p) => p.to_string(),
            None => "invalid".to_string(),
        }
    }
}

/// Optimal policies over a parameter grid, cells in row-major order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LookupTable {
    pub schema: String,
    pub reward: RewardConfig,
    pub axes: AxisSpec,
    pub cells: Vec<TableCell>,
}

/// Computes every cell of the grid in parallel; assembly order is row-major.
pub fn build_lookup_table(axes: &AxisSpec, cfg: &RewardConfig) -> Result<LookupTable> {
    axes.validate()?;
    let (outer, inner) = axes.axes();
    let coords: Vec<(f64, f64)> = outer.iter().flat_map(|&a| inner.iter().map(move |&b| (a, b))).collect();
    let cells = coords
        .par_iter()
        .map(|&(a, b)| {
            let (pi_g, t_b, p, q, params) = match axes {
                AxisSpec::Burst { .. } => {
                    let q = 1.0 / b;
                    let p = q * (1.0 - a) / a;
                    (a, b, p, q, GEParams::from_burst_parameterization(a, b).ok())
                }
                AxisSpec::Transition { .. } => (b / (a + b), 1.0 / b, a, b, GEParams::new(a, b).ok()),
            };
            let (policy, value) = match params {
                Some(ge) => {
                    let (pol, val) = optimal_sleep_time(&ge, cfg, None)?;
                    (Some(pol), Some(val))
                }
                None => (None, None),
            };
            Ok(TableCell { pi_g, t_b, p, q, policy, value })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LookupTable { schema: TABLE_SCHEMA.to_string(), reward: *cfg, axes: axes.clone(), cells })
}

impl LookupTable {
    /// Cell at `(outer, inner)` grid indices.
    pub fn cell(&self, i: usize, j: usize) -> &TableCell {
        let (_, n) = self.axes.shape();
        &self.cells[i * n + j]
    }

    /// CSV with header `pi_g,t_b,p,q,n_or_never,v_good`.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["pi_g", "t_b", "p", "q", "n_or_never", "v_good"])?;
        for c in &self.cells {
            let v = c.value.map(|v| v.v_good.to_string()).unwrap_or_default();
            w.write_record([
                c.pi_g.to_string(),
                c.t_b.to_string(),
                c.p.to_string(),
                c.q.to_string(),
                c.n_or_never(),
                v,
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Serialization(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)? + "\n")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let t: LookupTable = serde_json::from_str(s)?;
        if t.schema != TABLE_SCHEMA {
            return Err(Error::Serialization(format!("unsupported table schema `{}`", t.schema)));
        }
        let (a, b) = t.axes.shape();
        if t.cells.len() != a * b {
            return Err(Error::Serialization("cell count does not match axes".into()));
        }
        Ok(t)
    }

    /// Nearest valid cell to `(p, q)`, or `None` if the point falls outside
    /// the grid (beyond half a step from the edge) or on an invalid cell.
    pub fn lookup(&self, p: f64, q: f64) -> Option<&TableCell> {
        let (x, y) = match &self.axes {
            AxisSpec::Burst { .. } => (q / (p + q), 1.0 / q),
            AxisSpec::Transition { .. } => (p, q),
        };
        let (outer, inner) = self.axes.axes();
        let i = nearest_index(outer, x)?;
        let j = nearest_index(inner, y)?;
        let c = self.cell(i, j);
        c.is_valid().then_some(c)
    }
}

fn nearest_index(axis: &[f64], x: f64) -> Option<usize> {
    if axis.is_empty() || !x.is_finite() {
        return None;
    }
    let half = if axis.len() > 1 {
        0.5 * (axis[1] - axis[0]).abs().min((axis[axis.len() - 1] - axis[axis.len() - 2]).abs())
    } else {
        0.0
    };
    let lo = axis.iter().copied().fold(f64::INFINITY, f64::min) - half;
    let hi = axis.iter().copied().fold(f64::NEG_INFINITY, f64::max) + half;
    if x < lo - 1e-12 || x > hi + 1e-12 {
        return None;
    }
    axis.iter().enumerate().min_by(|a, b| (a.1 - x).abs().total_cmp(&(b.1 - x).abs())).map(|(i, _)| i)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ge() -> GEParams {
        GEParams::new(0.2, 0.3).unwrap()
    }

    #[test]
    fn threshold_examples() {
        let g = ge();
        assert_eq!(sleep_time_from_threshold(0.45, &g), ThresholdPolicy::SleepAfterFailure(1));
        assert_eq!(sleep_time_from_threshold(0.6, &g), ThresholdPolicy::NeverHarvest);
        assert_eq!(sleep_time_from_threshold(0.7, &g), ThresholdPolicy::NeverHarvest);
        assert_eq!(sleep_time_from_threshold(0.3, &g), ThresholdPolicy::SleepAfterFailure(0));
        assert_eq!(sleep_time_from_threshold(0.1, &g), ThresholdPolicy::SleepAfterFailure(0));
        // Just above the one-sleep belief needs a second sleep.
        assert_eq!(sleep_time_from_threshold(0.45 + 1e-9, &g), ThresholdPolicy::SleepAfterFailure(2));
    }

    #[test]
    fn myopic_policy_value() {
        let g = ge();
        let cfg = RewardConfig::new(10.0, 1.0, 0.0).unwrap();
        for n in 0..5 {
            let v = policy_value_linear_system(n, &g, &cfg).unwrap();
            assert!((v.v_good - (0.8 * 11.0 - 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn fail_value_is_discounted_wake_value() {
        let g = GEParams::new(0.2667, 0.4).unwrap();
        let cfg = RewardConfig::new(10.0, 10.0, 0.99).unwrap();
        for n in 0..60 {
            let v = policy_value_linear_system(n, &g, &cfg).unwrap();
            assert!((v.v_fail - 0.99f64.powi(n as i32) * v.v_wake).abs() < 1e-10);
        }
    }

    #[test]
    fn closed_form_ratio_matches_system() {
        for &(p, q, r1, r0, gamma) in &[
            (0.2667, 0.4, 10.0, 10.0, 0.99),
            (0.1, 0.3, 10.0, 1.0, 0.99),
            (0.05, 0.02, 1.0, 10.0, 0.95),
            (0.3, 0.6, 3.0, 2.0, 0.5),
        ] {
            let g = GEParams::new(p, q).unwrap();
            let cfg = RewardConfig::new(r1, r0, gamma).unwrap();
            for n in 0..80 {
                let sys = policy_value_linear_system(n, &g, &cfg).unwrap().v_good;
                let ratio = policy_value_closed_form(n, &g, &cfg);
                assert!((sys - ratio).abs() <= 1e-9 * sys.abs().max(1.0), "n={n}: {sys} vs {ratio}");
            }
        }
    }

    #[test]
    fn optimum_is_locally_optimal() {
        let g = GEParams::new(0.2667, 0.4).unwrap();
        let cfg = RewardConfig::new(10.0, 10.0, 0.99).unwrap();
        let (pol, val) = optimal_sleep_time(&g, &cfg, None).unwrap();
        let n = pol.sleep_slots().expect("harvests");
        let v0 = policy_value_linear_system(0, &g, &cfg).unwrap().v_good;
        assert!(val.v_good >= v0);
        if n > 0 {
            assert!(val.v_good >= policy_value_linear_system(n - 1, &g, &cfg).unwrap().v_good);
        }
        assert!(val.v_good >= policy_value_linear_system(n + 1, &g, &cfg).unwrap().v_good);
    }

    #[test]
    fn costly_failures_stop_harvesting() {
        // Stationary harvest reward is 11 * 0.2 - 10 < 0 and bursts are long.
        let g = GEParams::from_burst_parameterization(0.2, 20.0).unwrap();
        let cfg = RewardConfig::new(1.0, 10.0, 0.99).unwrap();
        let (pol, val) = optimal_sleep_time(&g, &cfg, None).unwrap();
        assert_eq!(pol, ThresholdPolicy::NeverHarvest);
        assert_eq!(val.v_fail, 0.0);
        assert!(val.v_good >= 0.0);
    }

    #[test]
    fn table_csv_and_invalid_mask() {
        let axes = AxisSpec::burst_linspace((0.3, 0.9, 3), (1.5, 6.0, 3));
        let cfg = RewardConfig::new(10.0, 1.0, 0.99).unwrap();
        let t = build_lookup_table(&axes, &cfg).unwrap();
        assert_eq!(t.cells.len(), 9);
        for c in &t.cells {
            assert_eq!(c.is_valid(), 1.0 - c.p > c.q, "{c:?}");
        }
        let csv = t.to_csv().unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "pi_g,t_b,p,q,n_or_never,v_good");
        assert_eq!(lines.len(), 10);
        let back = LookupTable::from_json(&t.to_json().unwrap()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn lookup_nearest_and_miss() {
        let axes = AxisSpec::burst_linspace((0.5, 0.9, 5), (2.0, 10.0, 5));
        let cfg = RewardConfig::new(10.0, 1.0, 0.99).unwrap();
        let t = build_lookup_table(&axes, &cfg).unwrap();
        let target = GEParams::from_burst_parameterization(0.71, 4.1).unwrap();
        let c = t.lookup(target.p(), target.q()).unwrap();
        assert!((c.pi_g - 0.7).abs() < 1e-12 && (c.t_b - 4.0).abs() < 1e-12);
        // Far outside the burst-length axis.
        let far = GEParams::from_burst_parameterization(0.7, 40.0).unwrap();
        assert!(t.lookup(far.p(), far.q()).is_none());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn threshold_count_is_minimal(p in 0.01f64..0.5, q in 0.01f64..0.5, frac in 0.0f64..0.999) {
            let g = GEParams::new(p, q).unwrap();
            let bbar = frac * g.pi_g();
            match sleep_time_from_threshold(bbar, &g) {
                ThresholdPolicy::SleepAfterFailure(n) => {
                    prop_assert!(belief_after_failure_and_sleep(n, &g) >= bbar - TOLERANCE);
                    if n > 0 {
                        prop_assert!(belief_after_failure_and_sleep(n - 1, &g) < bbar - TOLERANCE);
                    }
                }
                ThresholdPolicy::NeverHarvest => prop_assert!(false, "below stationary"),
            }
        }
    }
}
