//! Finite MDPs with a shared transition kernel and one mean-reward layer per
//! agent, plus the exact solvers used as ground truth for regret.

mod sample;
mod solve;

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use sample::{sample_reward, sample_transition};
pub use solve::{
    average_reward_of_policy, diameter, optimal_average_reward, optimal_average_reward_capped,
    solve, AgentSolution, SolveError, DEFAULT_RVI_MAX_ITERATIONS, DEFAULT_SOLVER_TOL,
    DIAMETER_DIVERGENCE_THRESHOLD, DIAMETER_TOL,
};

/// Tolerance on transition row sums.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// A finite MDP in which every agent shares `transitions` but owns a reward layer.
///
/// `transitions[s][a][s']` is `p(s' | s, a)`; `rewards[agent][s][a]` is the
/// mean reward of `agent` for taking `a` in `s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mdp {
    pub num_states: usize,
    pub num_actions: usize,
    pub num_agents: usize,
    pub initial_state: usize,
    pub transitions: Vec<Vec<Vec<f64>>>,
    pub rewards: Vec<Vec<Vec<f64>>>,
}

/// A stationary deterministic policy: one action per state.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Policy {
    pub action: Vec<usize>,
}

impl Policy {
    pub fn new(action: Vec<usize>) -> Self {
        Self { action }
    }

    pub fn constant(num_states: usize, action: usize) -> Self {
        Self {
            action: vec![action; num_states],
        }
    }

    pub fn num_states(&self) -> usize {
        self.action.len()
    }

    /// All `A^S` deterministic policies in lexicographic order (state 0 varies slowest).
    pub fn enumerate(num_states: usize, num_actions: usize) -> impl Iterator<Item = Policy> {
        let total = (num_actions as u64).checked_pow(num_states as u32).unwrap_or(u64::MAX);
        (0..total).map(move |mut code| {
            let mut action = vec![0; num_states];
            for slot in action.iter_mut().rev() {
                *slot = (code % num_actions as u64) as usize;
                code /= num_actions as u64;
            }
            Policy { action }
        })
    }
}

/// Exact reference quantities for one MDP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdpSolution {
    pub rho_star: Vec<f64>,
    pub bias: Vec<Vec<f64>>,
    pub opt_policy: Vec<Policy>,
    /// `f64::INFINITY` when the MDP is not communicating.
    pub diameter: f64,
}

/// One broken invariant found by [`validate_mdp`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    EmptySpace { what: &'static str },
    Shape { what: String, expected: usize, found: usize },
    InitialState { state: usize, num_states: usize },
    RowSum { state: usize, action: usize, sum: f64 },
    Probability { state: usize, action: usize, next: usize, value: f64 },
    RewardRange { agent: usize, state: usize, action: usize, value: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptySpace { what } => write!(f, "{what} must be positive"),
            Violation::Shape { what, expected, found } => {
                write!(f, "{what}: expected length {expected}, found {found}")
            }
            Violation::InitialState { state, num_states } => {
                write!(f, "initial state {state} outside [0, {num_states})")
            }
            Violation::RowSum { state, action, sum } => {
                write!(f, "transition row (s={state}, a={action}) sums to {sum}")
            }
            Violation::Probability { state, action, next, value } => write!(
                f,
                "transition p({next} | s={state}, a={action}) = {value} is not a probability"
            ),
            Violation::RewardRange { agent, state, action, value } => write!(
                f,
                "reward of agent {agent} at (s={state}, a={action}) = {value} outside [0, 1]"
            ),
        }
    }
}

#[derive(Debug, Error)]
pub enum MdpError {
    #[error("invalid MDP: {}", join_violations(.0))]
    Invalid(Vec<Violation>),
    #[error("failed to read MDP document: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed MDP document: {0}")]
    Json(#[from] serde_json::Error),
}

fn join_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

/// Returns every broken invariant of `m`; an empty list means the MDP is valid.
pub fn validate_mdp(m: &Mdp) -> Vec<Violation> {
    let mut out = Vec::new();
    if m.num_states == 0 {
        out.push(Violation::EmptySpace { what: "num_states" });
    }
    if m.num_actions == 0 {
        out.push(Violation::EmptySpace { what: "num_actions" });
    }
    if m.num_agents == 0 {
        out.push(Violation::EmptySpace { what: "num_agents" });
    }
    if m.initial_state >= m.num_states {
        out.push(Violation::InitialState {
            state: m.initial_state,
            num_states: m.num_states,
        });
    }

    if m.transitions.len() != m.num_states {
        out.push(Violation::Shape {
            what: "transitions".into(),
            expected: m.num_states,
            found: m.transitions.len(),
        });
    }
    for (s, per_action) in m.transitions.iter().enumerate() {
        if per_action.len() != m.num_actions {
            out.push(Violation::Shape {
                what: format!("transitions[{s}]"),
                expected: m.num_actions,
                found: per_action.len(),
            });
        }
        for (a, row) in per_action.iter().enumerate() {
            if row.len() != m.num_states {
                out.push(Violation::Shape {
                    what: format!("transitions[{s}][{a}]"),
                    expected: m.num_states,
                    found: row.len(),
                });
                continue;
            }
            for (next, &value) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&value) {
                    out.push(Violation::Probability { state: s, action: a, next, value });
                }
            }
            let sum: f64 = row.iter().sum();
            if !((sum - 1.0).abs() <= ROW_SUM_TOL) {
                out.push(Violation::RowSum { state: s, action: a, sum });
            }
        }
    }

    if m.rewards.len() != m.num_agents {
        out.push(Violation::Shape {
            what: "rewards".into(),
            expected: m.num_agents,
            found: m.rewards.len(),
        });
    }
    for (agent, layer) in m.rewards.iter().enumerate() {
        if layer.len() != m.num_states {
            out.push(Violation::Shape {
                what: format!("rewards[{agent}]"),
                expected: m.num_states,
                found: layer.len(),
            });
        }
        for (s, per_action) in layer.iter().enumerate() {
            if per_action.len() != m.num_actions {
                out.push(Violation::Shape {
                    what: format!("rewards[{agent}][{s}]"),
                    expected: m.num_actions,
                    found: per_action.len(),
                });
            }
            for (a, &value) in per_action.iter().enumerate() {
                if !(0.0..=1.0).contains(&value) {
                    out.push(Violation::RewardRange { agent, state: s, action: a, value });
                }
            }
        }
    }
    out
}

impl Mdp {
    /// Builds and validates an MDP.
    pub fn new(
        transitions: Vec<Vec<Vec<f64>>>,
        rewards: Vec<Vec<Vec<f64>>>,
        initial_state: usize,
    ) -> Result<Self, MdpError> {
        let num_states = transitions.len();
        let num_actions = transitions.first().map_or(0, Vec::len);
        let m = Mdp {
            num_states,
            num_actions,
            num_agents: rewards.len(),
            initial_state,
            transitions,
            rewards,
        };
        m.validated()
    }

    fn validated(self) -> Result<Self, MdpError> {
        let violations = validate_mdp(&self);
        if violations.is_empty() {
            Ok(self)
        } else {
            Err(MdpError::Invalid(violations))
        }
    }

    #[inline]
    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        &self.transitions[s][a]
    }

    #[inline]
    pub fn reward(&self, agent: usize, s: usize, a: usize) -> f64 {
        self.rewards[agent][s][a]
    }

    /// True when every agent has the same reward layer.
    pub fn rewards_shared(&self) -> bool {
        self.rewards.windows(2).all(|w| w[0] == w[1])
    }

    /// Copy of this MDP restricted to a single agent's reward layer.
    pub fn for_agent(&self, agent: usize) -> Mdp {
        Mdp {
            num_agents: 1,
            rewards: vec![self.rewards[agent].clone()],
            ..self.clone()
        }
    }

    /// Relabels states so that old state `s` becomes `perm[s]`.
    pub fn permute_states(&self, perm: &[usize]) -> Mdp {
        let n = self.num_states;
        assert_eq!(perm.len(), n, "permutation length must equal num_states");
        let mut transitions = vec![vec![vec![0.0; n]; self.num_actions]; n];
        let mut rewards = vec![vec![vec![0.0; self.num_actions]; n]; self.num_agents];
        for s in 0..n {
            for a in 0..self.num_actions {
                for next in 0..n {
                    transitions[perm[s]][a][perm[next]] = self.transitions[s][a][next];
                }
                for (agent, layer) in self.rewards.iter().enumerate() {
                    rewards[agent][perm[s]][a] = layer[s][a];
                }
            }
        }
        Mdp {
            initial_state: perm[self.initial_state],
            transitions,
            rewards,
            ..self.clone()
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("MDP serialization cannot fail")
    }

    /// Parses a JSON document and re-validates it.
    pub fn from_json(text: &str) -> Result<Self, MdpError> {
        let m: Mdp = serde_json::from_str(text)?;
        m.validated()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, MdpError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
