//! Extended value iteration over an L1 confidence set of MDPs.
//!
//! Each sweep picks, for every state-action pair, the optimistic reward
//! `min(1, r_hat + conf_r)` and the transition row inside the L1 ball around
//! `p_hat` that maximizes the expected next value.

use thiserror::Error;

use crate::mdp::Policy;

pub const DEFAULT_MAX_SWEEPS: usize = 1_000_000;
/// Sweeps without a new minimum span before damping is switched on.
pub const STALL_SWEEPS: usize = 10_000;
const DAMPING: f64 = 0.5;
const SIMPLEX_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EviError {
    #[error("extended value iteration did not converge after {iterations} sweeps (span {achieved_span:e})")]
    NotConverged { iterations: usize, achieved_span: f64 },
    #[error("epsilon must be positive, got {0}")]
    InvalidEpsilon(f64),
    #[error("invalid plausible set: {0}")]
    InvalidSet(String),
}

/// Empirical estimates with confidence radii, stored flat: pair `(s, a)` is
/// index `s * num_actions + a`, and its transition row starts at
/// `(s * num_actions + a) * num_states`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlausibleSet {
    pub num_states: usize,
    pub num_actions: usize,
    pub r_hat: Vec<f64>,
    pub conf_r: Vec<f64>,
    pub p_hat: Vec<f64>,
    pub conf_p: Vec<f64>,
}

impl PlausibleSet {
    pub fn new(
        num_states: usize,
        num_actions: usize,
        r_hat: Vec<f64>,
        conf_r: Vec<f64>,
        p_hat: Vec<f64>,
        conf_p: Vec<f64>,
    ) -> Result<Self, EviError> {
        let ps = Self { num_states, num_actions, r_hat, conf_r, p_hat, conf_p };
        ps.check()?;
        Ok(ps)
    }

    /// Builds a set from nested `[s][a]` / `[s][a][s']` arrays.
    pub fn from_nested(
        r_hat: &[Vec<f64>],
        conf_r: &[Vec<f64>],
        p_hat: &[Vec<Vec<f64>>],
        conf_p: &[Vec<f64>],
    ) -> Result<Self, EviError> {
        let num_states = p_hat.len();
        let num_actions = p_hat.first().map_or(0, Vec::len);
        let flat2 = |x: &[Vec<f64>]| x.iter().flatten().copied().collect::<Vec<_>>();
        Self::new(
            num_states,
            num_actions,
            flat2(r_hat),
            flat2(conf_r),
            p_hat.iter().flatten().flatten().copied().collect(),
            flat2(conf_p),
        )
    }

    fn check(&self) -> Result<(), EviError> {
        let pairs = self.num_states * self.num_actions;
        if pairs == 0 {
            return Err(EviError::InvalidSet("empty state or action space".into()));
        }
        if self.r_hat.len() != pairs || self.conf_r.len() != pairs || self.conf_p.len() != pairs {
            return Err(EviError::InvalidSet("per-pair arrays have the wrong length".into()));
        }
        if self.p_hat.len() != pairs * self.num_states {
            return Err(EviError::InvalidSet("transition array has the wrong length".into()));
        }
        if let Some(i) = self.r_hat.iter().position(|r| !(0.0..=1.0).contains(r)) {
            return Err(EviError::InvalidSet(format!("r_hat[{i}] outside [0, 1]")));
        }
        if let Some(i) = self.conf_r.iter().chain(&self.conf_p).position(|c| !(*c >= 0.0)) {
            return Err(EviError::InvalidSet(format!("radius {i} is negative or NaN")));
        }
        for pair in 0..pairs {
            let row = self.p_row(pair);
            let sum: f64 = row.iter().sum();
            if row.iter().any(|p| !(*p >= 0.0)) || (sum - 1.0).abs() > SIMPLEX_TOL {
                return Err(EviError::InvalidSet(format!("p_hat row {pair} is not a distribution")));
            }
        }
        Ok(())
    }

    #[inline]
    pub fn pair(&self, s: usize, a: usize) -> usize {
        s * self.num_actions + a
    }

    #[inline]
    pub fn p_row(&self, pair: usize) -> &[f64] {
        &self.p_hat[pair * self.num_states..(pair + 1) * self.num_states]
    }

    #[inline]
    fn optimistic_reward(&self, pair: usize) -> f64 {
        (self.r_hat[pair] + self.conf_r[pair]).min(1.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EviResult {
    pub policy: Policy,
    pub rho_opt: f64,
    /// Value vector normalized so that its minimum is zero.
    pub w: Vec<f64>,
    pub iterations: usize,
    pub achieved_span: f64,
    pub damped: bool,
}

/// States ordered by `u` descending, ties by ascending index.
fn descending_order(u: &[f64], order: &mut Vec<usize>) {
    order.clear();
    order.extend(0..u.len());
    order.sort_by(|&i, &j| u[j].total_cmp(&u[i]).then(i.cmp(&j)));
}

/// Fills `out` with the optimistic row for a precomputed descending order.
fn inner_max_into(p_hat_row: &[f64], conf: f64, order: &[usize], out: &mut [f64]) {
    let best = order[0];
    let top = (p_hat_row[best] + 0.5 * conf).min(1.0);
    out[best] = top;
    let mut remaining = 1.0 - top;
    for &s in &order[1..] {
        let mass = p_hat_row[s].min(remaining.max(0.0));
        out[s] = mass;
        remaining -= mass;
    }
}

/// `max_p p · u` over the same rule as [`inner_max_into`], without allocating.
#[inline]
fn inner_max_value(p_hat_row: &[f64], conf: f64, order: &[usize], u: &[f64]) -> f64 {
    let best = order[0];
    let top = (p_hat_row[best] + 0.5 * conf).min(1.0);
    let mut value = top * u[best];
    let mut remaining = 1.0 - top;
    for &s in &order[1..] {
        if remaining <= 0.0 {
            break;
        }
        let mass = p_hat_row[s].min(remaining);
        value += mass * u[s];
        remaining -= mass;
    }
    value
}

/// The distribution within L1 distance `conf` of `p_hat_row` maximizing `p · u`.
///
/// The highest-valued state receives `min(1, p_hat + conf / 2)`; the excess is
/// removed from the lowest-valued states first. Among equal values the lower
/// index counts as better, so higher indices lose mass first.
pub fn inner_max(p_hat_row: &[f64], conf: f64, u: &[f64]) -> Vec<f64> {
    assert_eq!(p_hat_row.len(), u.len(), "row and value vector must have equal length");
    let mut order = Vec::with_capacity(u.len());
    descending_order(u, &mut order);
    let mut out = vec![0.0; u.len()];
    inner_max_into(p_hat_row, conf, &order, &mut out);
    out
}

pub fn extended_value_iteration(ps: &PlausibleSet, epsilon: f64) -> Result<EviResult, EviError> {
    extended_value_iteration_capped(ps, epsilon, DEFAULT_MAX_SWEEPS)
}

pub fn extended_value_iteration_capped(
    ps: &PlausibleSet,
    epsilon: f64,
    max_sweeps: usize,
) -> Result<EviResult, EviError> {
    if !(epsilon > 0.0) {
        return Err(EviError::InvalidEpsilon(epsilon));
    }
    let n = ps.num_states;
    let mut u = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut greedy = vec![0usize; n];
    let mut order = Vec::with_capacity(n);
    let reward: Vec<f64> = (0..n * ps.num_actions).map(|pair| ps.optimistic_reward(pair)).collect();

    let mut damped = false;
    let mut best_span = f64::INFINITY;
    let mut best_span_at = 0usize;
    let mut span = f64::INFINITY;

    for sweep in 1..=max_sweeps {
        descending_order(&u, &mut order);
        for s in 0..n {
            let mut best = f64::NEG_INFINITY;
            for a in 0..ps.num_actions {
                let pair = ps.pair(s, a);
                let q = reward[pair] + inner_max_value(ps.p_row(pair), ps.conf_p[pair], &order, &u);
                if q > best {
                    best = q;
                    greedy[s] = a;
                }
            }
            next[s] = best;
        }

        let (lo, hi) = next
            .iter()
            .zip(&u)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (nv, cv)| {
                let d = nv - cv;
                (lo.min(d), hi.max(d))
            });
        span = hi - lo;
        if span < epsilon {
            let floor = next.iter().copied().fold(f64::INFINITY, f64::min);
            return Ok(EviResult {
                policy: Policy::new(greedy),
                rho_opt: (0.5 * (lo + hi)).clamp(0.0, 1.0),
                w: next.iter().map(|v| v - floor).collect(),
                iterations: sweep,
                achieved_span: span,
                damped,
            });
        }

        if span < best_span {
            best_span = span;
            best_span_at = sweep;
        } else if !damped && sweep - best_span_at >= STALL_SWEEPS {
            damped = true;
        }

        if damped {
            for (cur, &nv) in u.iter_mut().zip(&next) {
                *cur += DAMPING * (nv - *cur);
            }
        } else {
            u.copy_from_slice(&next);
        }
        let floor = u.iter().copied().fold(f64::INFINITY, f64::min);
        u.iter_mut().for_each(|v| *v -= floor);
    }
    Err(EviError::NotConverged { iterations: max_sweeps, achieved_span: span })
}
