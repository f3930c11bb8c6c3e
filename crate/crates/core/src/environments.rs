//! Benchmark MDP constructors.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mdp::{Mdp, MdpError};

pub const RIVERSWIM_LEFT: usize = 0;
pub const RIVERSWIM_RIGHT: usize = 1;
const RIVERSWIM_P_RIGHT: f64 = 0.35;
const RIVERSWIM_P_STAY: f64 = 0.6;
const RIVERSWIM_P_LEFT: f64 = 0.05;
const RIVERSWIM_SMALL_REWARD: f64 = 0.005;
const RIVERSWIM_GOAL_REWARD: f64 = 1.0;
/// Weight of the permutation cycle blended into random transition rows.
const RANDOM_CYCLE_WEIGHT: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RewardMode {
    DistinctPerAgent,
    Shared,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvKind {
    Riverswim,
    Random,
    TwoState,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EnvError {
    #[error("{what} must be at least {min}, got {value}")]
    TooSmall { what: &'static str, min: usize, value: usize },
    #[error("riverswim has exactly 2 actions, got {0}")]
    RiverswimActions(usize),
    #[error("two-state fixture has exactly 2 states and 2 actions")]
    TwoStateShape,
    #[error("unknown {what} `{value}`")]
    Unknown { what: &'static str, value: String },
}

/// Complete description of a benchmark environment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub kind: EnvKind,
    pub num_states: usize,
    pub num_actions: usize,
    pub num_agents: usize,
    pub seed: u64,
    pub reward_mode: RewardMode,
}

impl EnvSpec {
    pub fn validate(&self) -> Result<(), EnvError> {
        if self.num_agents < 1 {
            return Err(EnvError::TooSmall { what: "num_agents", min: 1, value: self.num_agents });
        }
        match self.kind {
            EnvKind::Riverswim => {
                if self.num_states < 2 {
                    return Err(EnvError::TooSmall { what: "num_states", min: 2, value: self.num_states });
                }
                if self.num_actions != 2 {
                    return Err(EnvError::RiverswimActions(self.num_actions));
                }
            }
            EnvKind::Random => {
                if self.num_states < 1 {
                    return Err(EnvError::TooSmall { what: "num_states", min: 1, value: self.num_states });
                }
                if self.num_actions < 1 {
                    return Err(EnvError::TooSmall { what: "num_actions", min: 1, value: self.num_actions });
                }
            }
            EnvKind::TwoState => {
                if self.num_states != 2 || self.num_actions != 2 {
                    return Err(EnvError::TwoStateShape);
                }
            }
        }
        Ok(())
    }

    pub fn build(&self) -> Result<Mdp, EnvError> {
        self.validate()?;
        Ok(match self.kind {
            EnvKind::Riverswim => make_riverswim(self.num_states, self.num_agents, self.reward_mode)?,
            EnvKind::Random => make_random_communicating(
                self.num_states,
                self.num_actions,
                self.num_agents,
                self.seed,
                self.reward_mode,
            )?,
            EnvKind::TwoState => make_two_state_agents(self.num_agents),
        })
    }

    /// Short human-readable label, e.g. `riverswim-6`.
    pub fn label(&self) -> String {
        match self.kind {
            EnvKind::Riverswim => format!("riverswim-{}", self.num_states),
            EnvKind::Random => format!("random-{}x{}-seed{}", self.num_states, self.num_actions, self.seed),
            EnvKind::TwoState => "two-state".to_string(),
        }
    }
}

impl fmt::Display for RewardMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RewardMode::DistinctPerAgent => "distinct",
            RewardMode::Shared => "shared",
        })
    }
}

impl FromStr for RewardMode {
    type Err = EnvError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "distinct" | "distinct-per-agent" => Ok(RewardMode::DistinctPerAgent),
            "shared" => Ok(RewardMode::Shared),
            other => Err(EnvError::Unknown { what: "reward mode", value: other.into() }),
        }
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EnvKind::Riverswim => "riverswim",
            EnvKind::Random => "random",
            EnvKind::TwoState => "two-state",
        })
    }
}

impl FromStr for EnvKind {
    type Err = EnvError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "riverswim" => Ok(EnvKind::Riverswim),
            "random" => Ok(EnvKind::Random),
            "two-state" => Ok(EnvKind::TwoState),
            other => Err(EnvError::Unknown { what: "environment", value: other.into() }),
        }
    }
}

fn finish(transitions: Vec<Vec<Vec<f64>>>, rewards: Vec<Vec<Vec<f64>>>) -> Mdp {
    match Mdp::new(transitions, rewards, 0) {
        Ok(m) => m,
        Err(MdpError::Invalid(v)) => panic!("constructor produced an invalid MDP: {v:?}"),
        Err(e) => panic!("constructor produced an invalid MDP: {e}"),
    }
}

/// RiverSwim chain. `LEFT` moves left deterministically; `RIGHT` drifts right
/// against the current. In distinct mode agent `k` (0-based) is rewarded for
/// swimming at state `S - 1 - (k mod S)`.
pub fn make_riverswim(num_states: usize, num_agents: usize, reward_mode: RewardMode) -> Result<Mdp, EnvError> {
    if num_states < 2 {
        return Err(EnvError::TooSmall { what: "num_states", min: 2, value: num_states });
    }
    if num_agents < 1 {
        return Err(EnvError::TooSmall { what: "num_agents", min: 1, value: num_agents });
    }
    let n = num_states;
    let last = n - 1;
    let mut transitions = vec![vec![vec![0.0; n]; 2]; n];
    for s in 0..n {
        transitions[s][RIVERSWIM_LEFT][s.saturating_sub(1)] = 1.0;

        let right = &mut transitions[s][RIVERSWIM_RIGHT];
        right[s] += RIVERSWIM_P_STAY;
        if s == last {
            right[s] += RIVERSWIM_P_RIGHT;
        } else {
            right[s + 1] += RIVERSWIM_P_RIGHT;
        }
        if s == 0 {
            right[s] += RIVERSWIM_P_LEFT;
        } else {
            right[s - 1] += RIVERSWIM_P_LEFT;
        }
    }

    let rewards = (0..num_agents)
        .map(|agent| {
            let goal = match reward_mode {
                RewardMode::DistinctPerAgent => last - (agent % n),
                RewardMode::Shared => last,
            };
            let mut layer = vec![vec![0.0; 2]; n];
            layer[0][RIVERSWIM_LEFT] = RIVERSWIM_SMALL_REWARD;
            layer[goal][RIVERSWIM_RIGHT] = RIVERSWIM_GOAL_REWARD;
            layer
        })
        .collect();
    Ok(finish(transitions, rewards))
}

/// Random MDP guaranteed to be communicating: normalized uniform rows blended
/// with a random Hamiltonian cycle.
pub fn make_random_communicating(
    num_states: usize,
    num_actions: usize,
    num_agents: usize,
    seed: u64,
    reward_mode: RewardMode,
) -> Result<Mdp, EnvError> {
    if num_states < 1 {
        return Err(EnvError::TooSmall { what: "num_states", min: 1, value: num_states });
    }
    if num_actions < 1 {
        return Err(EnvError::TooSmall { what: "num_actions", min: 1, value: num_actions });
    }
    if num_agents < 1 {
        return Err(EnvError::TooSmall { what: "num_agents", min: 1, value: num_agents });
    }
    let n = num_states;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut successor = vec![0; n];
    for i in 0..n {
        successor[order[i]] = order[(i + 1) % n];
    }

    let mut transitions = vec![vec![vec![0.0; n]; num_actions]; n];
    for s in 0..n {
        for a in 0..num_actions {
            let draws: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
            let total: f64 = draws.iter().sum();
            let row = &mut transitions[s][a];
            for (next, d) in draws.iter().enumerate() {
                let base = if total > 0.0 { d / total } else { 1.0 / n as f64 };
                row[next] = (1.0 - RANDOM_CYCLE_WEIGHT) * base;
            }
            row[successor[s]] += RANDOM_CYCLE_WEIGHT;
            let sum: f64 = row.iter().sum();
            row.iter_mut().for_each(|p| *p /= sum);
        }
    }

    let draw_layer = |rng: &mut ChaCha8Rng| -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| (0..num_actions).map(|_| rng.gen::<f64>()).collect())
            .collect()
    };
    let rewards = match reward_mode {
        RewardMode::DistinctPerAgent => (0..num_agents).map(|_| draw_layer(&mut rng)).collect(),
        RewardMode::Shared => vec![draw_layer(&mut rng); num_agents],
    };
    Ok(finish(transitions, rewards))
}

/// Two states, action 0 stays (reward 0.2 in the first state, 0.8 in the
/// second), action 1 switches with reward 0.
pub fn make_two_state() -> Mdp {
    make_two_state_agents(1)
}

/// [`make_two_state`] with the reward layer copied for `num_agents` agents.
pub fn make_two_state_agents(num_agents: usize) -> Mdp {
    let transitions = vec![
        vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        vec![vec![0.0, 1.0], vec![1.0, 0.0]],
    ];
    let layer = vec![vec![0.2, 0.0], vec![0.8, 0.0]];
    finish(transitions, vec![layer; num_agents.max(1)])
}
