//! Multi-agent UCRL: optimistic agents that learn in one shared MDP
//! transition structure with individual reward functions, together with the
//! exact solvers and regret bounds used to evaluate them.

pub mod environments;
pub mod evi;
pub mod mdp;
pub mod regret;
pub mod seed;
pub mod trace;
pub mod ucrl;

pub use environments::{EnvKind, EnvSpec, RewardMode};
pub use evi::{extended_value_iteration, inner_max, EviResult, PlausibleSet};
pub use mdp::{Mdp, MdpSolution, Policy};
pub use regret::{RegretCurve, RunRegret};
pub use trace::{RunTrace, TraceConfig, TraceRow};
pub use ucrl::{run, RunOutcome, SharedStatistics, SharingMode, UcrlConfig};
