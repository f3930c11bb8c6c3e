use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use super::{Mdp, MdpSolution, Policy};

pub const DEFAULT_SOLVER_TOL: f64 = 1e-9;
pub const DEFAULT_RVI_MAX_ITERATIONS: usize = 10_000_000;
/// Stopping tolerance of the hitting-time value iteration.
pub const DIAMETER_TOL: f64 = 1e-9;
/// Hitting-time values above this are treated as divergent.
pub const DIAMETER_DIVERGENCE_THRESHOLD: f64 = 1e9;
const DIAMETER_MAX_ITERATIONS: usize = 10_000_000;
/// Damping weight of the aperiodicity transform used by relative value iteration.
const RVI_DAMPING: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("policy induces {classes} recurrent classes; only single-class chains are supported")]
    Multichain { classes: usize },
    #[error("relative value iteration did not converge after {iterations} sweeps (span {span:e})")]
    NotConverged { iterations: usize, span: f64 },
    #[error("agent {agent} out of range (MDP has {num_agents} agents)")]
    AgentOutOfRange { agent: usize, num_agents: usize },
    #[error("policy covers {found} states, MDP has {expected}")]
    PolicyShape { expected: usize, found: usize },
    #[error("tolerance must be positive, got {0}")]
    InvalidTolerance(f64),
    #[error("stationary distribution system is singular")]
    Singular,
}

/// Optimal gain, bias and greedy policy of one agent.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentSolution {
    pub rho_star: f64,
    /// Normalized so that its minimum is zero.
    pub bias: Vec<f64>,
    pub policy: Policy,
    pub iterations: usize,
}

fn check_agent(m: &Mdp, agent: usize) -> Result<(), SolveError> {
    if agent >= m.num_agents {
        return Err(SolveError::AgentOutOfRange { agent, num_agents: m.num_agents });
    }
    Ok(())
}

/// Forward reachability sets of the chain `rows[s]`.
fn reachable_sets(rows: &[&[f64]]) -> Vec<Vec<bool>> {
    let n = rows.len();
    (0..n)
        .map(|start| {
            let mut seen = vec![false; n];
            let mut stack = vec![start];
            seen[start] = true;
            while let Some(s) = stack.pop() {
                for (next, &p) in rows[s].iter().enumerate() {
                    if p > 0.0 && !seen[next] {
                        seen[next] = true;
                        stack.push(next);
                    }
                }
            }
            seen
        })
        .collect()
}

fn recurrent_class_count(rows: &[&[f64]]) -> usize {
    let reach = reachable_sets(rows);
    let n = rows.len();
    let mut classes: Vec<&Vec<bool>> = Vec::new();
    for s in 0..n {
        let recurrent = (0..n).all(|t| !reach[s][t] || reach[t][s]);
        if recurrent && !classes.iter().any(|c| c[s]) {
            classes.push(&reach[s]);
        }
    }
    classes.len()
}

/// Long-run average reward of `pi` for `agent`: stationary distribution of the
/// induced chain dotted with the agent's rewards.
pub fn average_reward_of_policy(m: &Mdp, pi: &Policy, agent: usize) -> Result<f64, SolveError> {
    check_agent(m, agent)?;
    if pi.num_states() != m.num_states {
        return Err(SolveError::PolicyShape { expected: m.num_states, found: pi.num_states() });
    }
    let n = m.num_states;
    let rows: Vec<&[f64]> = (0..n).map(|s| m.row(s, pi.action[s])).collect();
    let classes = recurrent_class_count(&rows);
    if classes != 1 {
        return Err(SolveError::Multichain { classes });
    }

    // mu (P - I) = 0 with the last balance equation replaced by sum(mu) = 1.
    let mut a = DMatrix::<f64>::zeros(n, n);
    for (s, row) in rows.iter().enumerate() {
        for (next, &p) in row.iter().enumerate() {
            a[(next, s)] += p;
        }
        a[(s, s)] -= 1.0;
    }
    for s in 0..n {
        a[(n - 1, s)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(n);
    b[n - 1] = 1.0;
    let mu = a.lu().solve(&b).ok_or(SolveError::Singular)?;
    Ok((0..n).map(|s| mu[s] * m.reward(agent, s, pi.action[s])).sum())
}

/// Optimal average reward of `agent` by damped relative value iteration.
///
/// Stops once the span of the Bellman increments drops below `tol`; the gain
/// is the midpoint of the final increments, so it lies within `tol / 2` of the
/// true optimum.
pub fn optimal_average_reward(m: &Mdp, agent: usize, tol: f64) -> Result<AgentSolution, SolveError> {
    optimal_average_reward_capped(m, agent, tol, DEFAULT_RVI_MAX_ITERATIONS)
}

pub fn optimal_average_reward_capped(
    m: &Mdp,
    agent: usize,
    tol: f64,
    max_iterations: usize,
) -> Result<AgentSolution, SolveError> {
    check_agent(m, agent)?;
    if !(tol > 0.0) {
        return Err(SolveError::InvalidTolerance(tol));
    }
    let n = m.num_states;
    let mut u = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut greedy = vec![0usize; n];
    let mut span = f64::INFINITY;

    for iteration in 1..=max_iterations {
        for s in 0..n {
            let mut best = f64::NEG_INFINITY;
            for a in 0..m.num_actions {
                let q = m.reward(agent, s, a) + dot(m.row(s, a), &u);
                if q > best {
                    best = q;
                    greedy[s] = a;
                }
            }
            next[s] = best;
        }
        let (lo, hi) = increment_range(&next, &u);
        span = hi - lo;
        if span < tol {
            let floor = min_of(&next);
            return Ok(AgentSolution {
                rho_star: (0.5 * (lo + hi)).clamp(0.0, 1.0),
                bias: next.iter().map(|v| v - floor).collect(),
                policy: Policy::new(greedy),
                iterations: iteration,
            });
        }
        for (cur, &nv) in u.iter_mut().zip(&next) {
            *cur += RVI_DAMPING * (nv - *cur);
        }
        let floor = min_of(&u);
        u.iter_mut().for_each(|v| *v -= floor);
    }
    Err(SolveError::NotConverged { iterations: max_iterations, span })
}

/// `max_{s,s'} min_pi T_pi(s, s')`, or `f64::INFINITY` if some state cannot be reached.
pub fn diameter(m: &Mdp) -> f64 {
    let n = m.num_states;
    let mut worst: f64 = 0.0;
    for target in 0..n {
        let h = hitting_times(m, target);
        for (s, &v) in h.iter().enumerate() {
            if s != target {
                worst = worst.max(v);
            }
        }
        if worst.is_infinite() {
            return f64::INFINITY;
        }
    }
    worst
}

/// Minimal expected hitting times of `target` from every state.
fn hitting_times(m: &Mdp, target: usize) -> Vec<f64> {
    let n = m.num_states;
    if !target_reachable_from_all(m, target) {
        return vec![f64::INFINITY; n];
    }

    let mut h = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut converged = false;
    for _ in 0..DIAMETER_MAX_ITERATIONS {
        let mut change: f64 = 0.0;
        for s in 0..n {
            next[s] = if s == target {
                0.0
            } else {
                1.0 + (0..m.num_actions)
                    .map(|a| dot(m.row(s, a), &h))
                    .fold(f64::INFINITY, f64::min)
            };
            change = change.max((next[s] - h[s]).abs());
        }
        std::mem::swap(&mut h, &mut next);
        if h.iter().any(|&v| v > DIAMETER_DIVERGENCE_THRESHOLD) {
            return vec![f64::INFINITY; n];
        }
        if change < DIAMETER_TOL {
            converged = true;
            break;
        }
    }
    if !converged && h.iter().any(|&v| v > DIAMETER_DIVERGENCE_THRESHOLD) {
        return vec![f64::INFINITY; n];
    }
    polish_hitting_times(m, target, h)
}

/// Graph test: is `target` reachable from every state under some action sequence?
fn target_reachable_from_all(m: &Mdp, target: usize) -> bool {
    let n = m.num_states;
    let mut reaches = vec![false; n];
    reaches[target] = true;
    let mut changed = true;
    while changed {
        changed = false;
        for s in 0..n {
            if reaches[s] {
                continue;
            }
            let hit = (0..m.num_actions)
                .any(|a| m.row(s, a).iter().enumerate().any(|(t, &p)| p > 0.0 && reaches[t]));
            if hit {
                reaches[s] = true;
                changed = true;
            }
        }
    }
    reaches.iter().all(|&r| r)
}

/// Policy-iteration refinement of value-iteration hitting times to the exact
/// fixed point. Falls back to `h` if an intermediate policy is improper.
fn polish_hitting_times(m: &Mdp, target: usize, h: Vec<f64>) -> Vec<f64> {
    let n = m.num_states;
    let mut policy: Vec<usize> = (0..n).map(|s| argmin_action(m, s, &h, None)).collect();
    let mut best = h;
    for _ in 0..(n * m.num_actions + 1) {
        let Some(exact) = evaluate_hitting_policy(m, target, &policy) else {
            return best;
        };
        best = exact;
        let mut changed = false;
        for s in (0..n).filter(|&s| s != target) {
            let a = argmin_action(m, s, &best, Some(policy[s]));
            if a != policy[s] {
                policy[s] = a;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    best
}

fn argmin_action(m: &Mdp, s: usize, h: &[f64], incumbent: Option<usize>) -> usize {
    let mut best_a = incumbent.unwrap_or(0);
    let mut best = dot(m.row(s, best_a), h);
    for a in 0..m.num_actions {
        let v = dot(m.row(s, a), h);
        if v < best - 1e-12 * best.abs().max(1.0) {
            best = v;
            best_a = a;
        }
    }
    best_a
}

fn evaluate_hitting_policy(m: &Mdp, target: usize, policy: &[usize]) -> Option<Vec<f64>> {
    let n = m.num_states;
    let mut a = DMatrix::<f64>::identity(n, n);
    let mut b = DVector::<f64>::zeros(n);
    for s in (0..n).filter(|&s| s != target) {
        for (next, &p) in m.row(s, policy[s]).iter().enumerate() {
            if next != target {
                a[(s, next)] -= p;
            }
        }
        b[s] = 1.0;
    }
    let x = a.lu().solve(&b)?;
    let out: Vec<f64> = x.iter().copied().collect();
    if out.iter().all(|v| v.is_finite() && *v >= -1e-9 && *v <= DIAMETER_DIVERGENCE_THRESHOLD) {
        Some(out)
    } else {
        None
    }
}

/// Exact reference solution for every agent.
pub fn solve(m: &Mdp, tol: f64) -> Result<MdpSolution, SolveError> {
    let mut rho_star = Vec::with_capacity(m.num_agents);
    let mut bias = Vec::with_capacity(m.num_agents);
    let mut opt_policy = Vec::with_capacity(m.num_agents);
    for agent in 0..m.num_agents {
        let sol = optimal_average_reward(m, agent, tol)?;
        rho_star.push(sol.rho_star);
        bias.push(sol.bias);
        opt_policy.push(sol.policy);
    }
    Ok(MdpSolution { rho_star, bias, opt_policy, diameter: diameter(m) })
}

#[inline]
pub(crate) fn dot(p: &[f64], u: &[f64]) -> f64 {
    p.iter().zip(u).map(|(a, b)| a * b).sum()
}

fn min_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::INFINITY, f64::min)
}

/// (min, max) of `next - cur`.
pub(crate) fn increment_range(next: &[f64], cur: &[f64]) -> (f64, f64) {
    next.iter().zip(cur).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (n, c)| {
        let d = n - c;
        (lo.min(d), hi.max(d))
    })
}
