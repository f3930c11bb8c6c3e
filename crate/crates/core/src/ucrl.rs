//! Multi-agent UCRL with shared observations.
//!
//! All agents act in one MDP. Transition counts are pooled across agents;
//! reward estimates stay individual unless every agent has the same reward
//! function ([`SharingMode::SharedAll`]). Episodes are global: when the
//! doubling criterion fires, every agent replans.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evi::{extended_value_iteration, EviError, PlausibleSet};
use crate::mdp::{sample_reward, sample_transition, validate_mdp, Mdp, Policy};
use crate::trace::{RunTrace, TraceConfig, TraceRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SharingMode {
    /// Pooled transition counts, individual rewards and termination.
    SharedTransitions,
    /// Pooled transitions and rewards; episodes end on pooled doubling.
    SharedAll,
    /// No sharing: every agent runs single-agent UCRL2 on its own data.
    Independent,
}

impl SharingMode {
    pub const ALL: [SharingMode; 3] =
        [SharingMode::SharedTransitions, SharingMode::SharedAll, SharingMode::Independent];

    pub fn as_str(self) -> &'static str {
        match self {
            SharingMode::SharedTransitions => "shared-transitions",
            SharingMode::SharedAll => "shared-all",
            SharingMode::Independent => "independent",
        }
    }
}

impl fmt::Display for SharingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SharingMode {
    type Err = UcrlError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SharingMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| UcrlError::UnknownMode(s.to_string()))
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UcrlError {
    #[error("delta must lie in (0, 1), got {0}")]
    InvalidDelta(f64),
    #[error("time step must be at least 1, got {0}")]
    InvalidStep(u64),
    #[error("horizon must be at least 1")]
    EmptyHorizon,
    #[error("shared-all mode requires identical reward functions for all agents")]
    RewardsNotShared,
    #[error("invalid MDP: {0}")]
    InvalidMdp(String),
    #[error("unknown sharing mode `{0}`")]
    UnknownMode(String),
    #[error("planning failed: {0}")]
    Planning(#[from] EviError),
}

fn check_args(delta: f64, t: u64) -> Result<(), UcrlError> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(UcrlError::InvalidDelta(delta));
    }
    if t < 1 {
        return Err(UcrlError::InvalidStep(t));
    }
    Ok(())
}

/// Reward radius of one agent from its own visit count n_alpha:
/// `sqrt(7 ln(2 S A N t / delta) / (2 max(1, n)))` with N agents.
pub fn conf_r_individual(
    num_states: usize,
    num_actions: usize,
    num_agents: usize,
    delta: f64,
    t: u64,
    n_alpha: u64,
) -> Result<f64, UcrlError> {
    check_args(delta, t)?;
    let log = (2.0 * num_states as f64 * num_actions as f64 * num_agents as f64 * t as f64 / delta).ln();
    Ok((7.0 * log / (2.0 * n_alpha.max(1) as f64)).sqrt())
}

/// L1 transition radius from the pooled count: `sqrt(14 S ln(2 A t / delta) / max(1, n))`.
pub fn conf_p_shared(
    num_states: usize,
    num_actions: usize,
    delta: f64,
    t: u64,
    n_total: u64,
) -> Result<f64, UcrlError> {
    check_args(delta, t)?;
    let log = (2.0 * num_actions as f64 * t as f64 / delta).ln();
    Ok((14.0 * num_states as f64 * log / n_total.max(1) as f64).sqrt())
}

/// Reward radius from the pooled count when all agents share one reward function.
pub fn conf_r_shared(
    num_states: usize,
    num_actions: usize,
    delta: f64,
    t: u64,
    n_total: u64,
) -> Result<f64, UcrlError> {
    check_args(delta, t)?;
    let log = (2.0 * num_states as f64 * num_actions as f64 * t as f64 / delta).ln();
    Ok((7.0 * log / (2.0 * n_total.max(1) as f64)).sqrt())
}

/// Visit counts and reward sums of all agents. Pair `(s, a)` is index
/// `s * num_actions + a`; transition counts are indexed `pair * num_states + s'`.
#[derive(Debug, Clone, PartialEq)]
pub struct SharedStatistics {
    num_states: usize,
    num_actions: usize,
    num_agents: usize,
    n_agent: Vec<Vec<u64>>,
    reward_sum: Vec<Vec<f64>>,
    trans_agent: Vec<Vec<u64>>,
    trans_count: Vec<u64>,
    t: u64,
}

impl SharedStatistics {
    pub fn new(num_states: usize, num_actions: usize, num_agents: usize) -> Self {
        let pairs = num_states * num_actions;
        Self {
            num_states,
            num_actions,
            num_agents,
            n_agent: vec![vec![0; pairs]; num_agents],
            reward_sum: vec![vec![0.0; pairs]; num_agents],
            trans_agent: vec![vec![0; pairs * num_states]; num_agents],
            trans_count: vec![0; pairs * num_states],
            t: 1,
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn num_agents(&self) -> usize {
        self.num_agents
    }

    #[inline]
    pub fn pair(&self, s: usize, a: usize) -> usize {
        s * self.num_actions + a
    }

    /// Current global step (starts at 1).
    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn set_t(&mut self, t: u64) {
        self.t = t;
    }

    /// `N_t^alpha(s, a)`.
    pub fn n_agent(&self, agent: usize, s: usize, a: usize) -> u64 {
        self.n_agent[agent][self.pair(s, a)]
    }

    /// `N_t(s, a)`, summed over agents.
    pub fn n_pooled(&self, s: usize, a: usize) -> u64 {
        let pair = self.pair(s, a);
        self.n_agent.iter().map(|n| n[pair]).sum()
    }

    pub fn reward_sum(&self, agent: usize, s: usize, a: usize) -> f64 {
        self.reward_sum[agent][self.pair(s, a)]
    }

    pub fn trans_count(&self, s: usize, a: usize, next: usize) -> u64 {
        self.trans_count[self.pair(s, a) * self.num_states + next]
    }

    /// Total visits of `agent` over all pairs.
    pub fn agent_total(&self, agent: usize) -> u64 {
        self.n_agent[agent].iter().sum()
    }

    pub fn record(&mut self, agent: usize, s: usize, a: usize, reward: f64, next: usize) {
        let pair = self.pair(s, a);
        self.n_agent[agent][pair] += 1;
        self.reward_sum[agent][pair] += reward;
        self.trans_agent[agent][pair * self.num_states + next] += 1;
        self.trans_count[pair * self.num_states + next] += 1;
    }

    /// Checks that pooled transition counts agree with the per-agent visits.
    pub fn is_consistent(&self) -> bool {
        let pairs = self.num_states * self.num_actions;
        (0..pairs).all(|pair| {
            let row = &self.trans_count[pair * self.num_states..(pair + 1) * self.num_states];
            let pooled: u64 = self.n_agent.iter().map(|n| n[pair]).sum();
            row.iter().sum::<u64>() == pooled
                && self.n_agent.iter().zip(&self.reward_sum).all(|(n, r)| r[pair] <= n[pair] as f64)
        })
    }
}

/// Estimates and radii seen by `agent` under `mode`.
///
/// Unvisited pairs get `r_hat = 0` and a uniform transition row. Whether
/// rewards really are shared in [`SharingMode::SharedAll`] is checked by
/// [`run`], since the statistics do not carry the true reward functions.
pub fn build_plausible_set(
    stats: &SharedStatistics,
    agent: usize,
    mode: SharingMode,
    delta: f64,
) -> Result<PlausibleSet, UcrlError> {
    let (n_s, n_a, k) = (stats.num_states, stats.num_actions, stats.num_agents);
    let t = stats.t;
    check_args(delta, t)?;
    let pairs = n_s * n_a;
    let mut r_hat = vec![0.0; pairs];
    let mut conf_r = vec![0.0; pairs];
    let mut p_hat = vec![0.0; pairs * n_s];
    let mut conf_p = vec![0.0; pairs];

    for pair in 0..pairs {
        let n_own = stats.n_agent[agent][pair];
        let n_pool: u64 = stats.n_agent.iter().map(|n| n[pair]).sum();
        let (reward_count, reward_total) = match mode {
            SharingMode::SharedAll => (n_pool, stats.reward_sum.iter().map(|r| r[pair]).sum::<f64>()),
            _ => (n_own, stats.reward_sum[agent][pair]),
        };
        r_hat[pair] = (reward_total / reward_count.max(1) as f64).clamp(0.0, 1.0);

        let (trans, trans_total) = match mode {
            SharingMode::Independent => (&stats.trans_agent[agent], n_own),
            _ => (&stats.trans_count, n_pool),
        };
        let row = &mut p_hat[pair * n_s..(pair + 1) * n_s];
        if trans_total == 0 {
            row.fill(1.0 / n_s as f64);
        } else {
            let counts = &trans[pair * n_s..(pair + 1) * n_s];
            for (p, &c) in row.iter_mut().zip(counts) {
                *p = c as f64 / trans_total as f64;
            }
        }

        conf_r[pair] = match mode {
            SharingMode::SharedTransitions => conf_r_individual(n_s, n_a, k, delta, t, n_own)?,
            SharingMode::SharedAll => conf_r_shared(n_s, n_a, delta, t, n_pool)?,
            SharingMode::Independent => conf_r_individual(n_s, n_a, 1, delta, t, n_own)?,
        };
        conf_p[pair] = conf_p_shared(n_s, n_a, delta, t, trans_total)?;
    }
    Ok(PlausibleSet::new(n_s, n_a, r_hat, conf_r, p_hat, conf_p)?)
}

/// Zero-radius set at the true model of `agent`; a test hook for planning
/// against the truth.
pub fn truth_plausible_set(m: &Mdp, agent: usize) -> PlausibleSet {
    let pairs = m.num_states * m.num_actions;
    let r_hat = (0..m.num_states)
        .flat_map(|s| (0..m.num_actions).map(move |a| (s, a)))
        .map(|(s, a)| m.reward(agent, s, a))
        .collect();
    let p_hat = m.transitions.iter().flatten().flatten().copied().collect();
    PlausibleSet::new(m.num_states, m.num_actions, r_hat, vec![0.0; pairs], p_hat, vec![0.0; pairs])
        .expect("a valid MDP yields a valid plausible set")
}

/// One planning epoch shared by all agents.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    /// 1-based episode counter.
    pub index: u32,
    /// `t_k`, the global step at which the episode starts.
    pub start_step: u64,
    pub policies: Vec<Policy>,
    pub rho_opt: Vec<f64>,
    /// `v_k^alpha(s, a)`, indexed `[agent][pair]`.
    pub visits: Vec<Vec<u64>>,
}

/// The doubling criterion, evaluated against the counts at the episode start.
pub fn episode_should_end(episode: &EpisodeRecord, at_start: &SharedStatistics, mode: SharingMode) -> bool {
    let pairs = at_start.num_states * at_start.num_actions;
    match mode {
        SharingMode::SharedTransitions | SharingMode::Independent => {
            episode.visits.iter().zip(&at_start.n_agent).any(|(v, n)| {
                v.iter().zip(n).any(|(&v, &n)| v >= n.max(1))
            })
        }
        SharingMode::SharedAll => (0..pairs).any(|pair| {
            let v: u64 = episode.visits.iter().map(|v| v[pair]).sum();
            let n: u64 = at_start.n_agent.iter().map(|n| n[pair]).sum();
            v >= n.max(1)
        }),
    }
}

/// Computes every agent's optimistic policy at the current statistics,
/// with accuracy `1 / sqrt(t_k)`.
pub fn plan_episode(
    stats: &SharedStatistics,
    mode: SharingMode,
    delta: f64,
    index: u32,
) -> Result<EpisodeRecord, UcrlError> {
    let sets = if mode == SharingMode::SharedAll {
        // identical for every agent
        vec![build_plausible_set(stats, 0, mode, delta)?]
    } else {
        (0..stats.num_agents)
            .map(|agent| build_plausible_set(stats, agent, mode, delta))
            .collect::<Result<Vec<_>, _>>()?
    };
    plan_from_sets(stats, &sets, index)
}

fn plan_from_sets(stats: &SharedStatistics, sets: &[PlausibleSet], index: u32) -> Result<EpisodeRecord, UcrlError> {
    let epsilon = 1.0 / (stats.t as f64).sqrt();
    let solved = sets
        .iter()
        .map(|ps| extended_value_iteration(ps, epsilon))
        .collect::<Result<Vec<_>, _>>()?;
    let k = stats.num_agents;
    let pick = |agent: usize| if solved.len() == 1 { &solved[0] } else { &solved[agent] };
    Ok(EpisodeRecord {
        index,
        start_step: stats.t,
        policies: (0..k).map(|agent| pick(agent).policy.clone()).collect(),
        rho_opt: (0..k).map(|agent| pick(agent).rho_opt).collect(),
        visits: vec![vec![0; stats.num_states * stats.num_actions]; k],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UcrlConfig {
    pub mode: SharingMode,
    pub delta: f64,
    /// Plan against the true MDP with zero radii instead of the estimates.
    #[serde(default)]
    pub pin_to_truth: bool,
}

impl UcrlConfig {
    pub fn new(mode: SharingMode, delta: f64) -> Self {
        Self { mode, delta, pin_to_truth: false }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub trace: RunTrace,
    pub statistics: SharedStatistics,
    pub episodes: Vec<EpisodeRecord>,
}

impl RunOutcome {
    pub fn num_episodes(&self) -> usize {
        self.episodes.len()
    }
}

/// Upper bound on the number of episodes after `horizon` steps,
/// `N S A log2(8 T / (S A))`, meaningful for `T >= S A`.
pub fn episode_count_bound(num_states: usize, num_actions: usize, num_agents: usize, horizon: u64) -> f64 {
    let sa = (num_states * num_actions) as f64;
    num_agents as f64 * sa * (8.0 * horizon as f64 / sa).log2()
}

/// Runs all agents for `horizon` global steps. Within a step agents move in
/// index order, each drawing its reward and then its next state from `rng`.
pub fn run<R: Rng + ?Sized>(m: &Mdp, cfg: &UcrlConfig, horizon: u64, rng: &mut R) -> Result<RunOutcome, UcrlError> {
    let violations = validate_mdp(m);
    if !violations.is_empty() {
        let text: Vec<String> = violations.iter().map(ToString::to_string).collect();
        return Err(UcrlError::InvalidMdp(text.join("; ")));
    }
    if horizon < 1 {
        return Err(UcrlError::EmptyHorizon);
    }
    check_args(cfg.delta, 1)?;
    if cfg.mode == SharingMode::SharedAll && !m.rewards_shared() {
        return Err(UcrlError::RewardsNotShared);
    }

    let k = m.num_agents;
    let truth_sets: Option<Vec<PlausibleSet>> =
        cfg.pin_to_truth.then(|| (0..k).map(|agent| truth_plausible_set(m, agent)).collect());
    let plan = |stats: &SharedStatistics, index: u32| match &truth_sets {
        Some(sets) => plan_from_sets(stats, sets, index),
        None => plan_episode(stats, cfg.mode, cfg.delta, index),
    };

    let mut stats = SharedStatistics::new(m.num_states, m.num_actions, k);
    let mut states = vec![m.initial_state; k];
    let mut rows = Vec::with_capacity(k * horizon as usize);
    let mut episodes = Vec::new();
    let mut episode = plan(&stats, 1)?;
    let mut at_start = stats.clone();

    for t in 1..=horizon {
        for (agent, state) in states.iter_mut().enumerate() {
            let s = *state;
            let a = episode.policies[agent].action[s];
            let reward = sample_reward(m, agent, s, a, rng);
            let next = sample_transition(m, s, a, rng);
            rows.push(TraceRow {
                t,
                agent: agent as u32,
                state: s as u32,
                action: a as u32,
                reward,
                episode: episode.index,
            });
            stats.record(agent, s, a, reward, next);
            episode.visits[agent][stats.pair(s, a)] += 1;
            *state = next;
        }
        stats.set_t(t + 1);
        if t < horizon && episode_should_end(&episode, &at_start, cfg.mode) {
            let index = episode.index + 1;
            episodes.push(std::mem::replace(&mut episode, plan(&stats, index)?));
            at_start.clone_from(&stats);
        }
    }
    episodes.push(episode);

    let trace = RunTrace {
        config: TraceConfig {
            num_states: m.num_states,
            num_actions: m.num_actions,
            num_agents: k,
            delta: cfg.delta,
            mode: cfg.mode,
            horizon,
            seed: None,
            env: None,
        },
        rows,
    };
    Ok(RunOutcome { trace, statistics: stats, episodes })
}
