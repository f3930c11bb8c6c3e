//! Regret measurement against exact solutions, closed-form regret bounds and
//! cross-mode summaries.

use std::collections::BTreeMap;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mdp::MdpSolution;
use crate::trace::{RunTrace, TraceConfig};
use crate::ucrl::SharingMode;

pub const SUMMARY_HEADER: &str =
    "mode,checkpoint,median_per_agent_regret,iqr,total_regret_median,bound_value,bound_satisfied_fraction";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegretError {
    #[error("step {t} outside the trace horizon {horizon}")]
    StepOutOfRange { t: u64, horizon: u64 },
    #[error("agent {agent} out of range ({num_agents} agents)")]
    AgentOutOfRange { agent: usize, num_agents: usize },
    #[error("bound argument {name} = {value} outside its domain")]
    Domain { name: &'static str, value: f64 },
    #[error("runs do not share a configuration: {0}")]
    Mismatch(String),
    #[error("no runs to summarize")]
    Empty,
}

/// `t * rho_star[agent] - (rewards of agent through t)`. May be negative.
pub fn regret_per_agent(trace: &RunTrace, solution: &MdpSolution, agent: usize, t: u64) -> Result<f64, RegretError> {
    let k = trace.config.num_agents;
    if agent >= k || agent >= solution.rho_star.len() {
        return Err(RegretError::AgentOutOfRange { agent, num_agents: k });
    }
    let horizon = trace.horizon();
    if t > horizon {
        return Err(RegretError::StepOutOfRange { t, horizon });
    }
    let collected: f64 = trace.rows[..t as usize * k]
        .iter()
        .skip(agent)
        .step_by(k)
        .map(|r| r.reward)
        .sum();
    Ok(t as f64 * solution.rho_star[agent] - collected)
}

/// Powers of two up to `horizon`, plus `horizon` itself.
pub fn default_checkpoints(horizon: u64) -> Vec<u64> {
    let mut out: Vec<u64> = std::iter::successors(Some(1u64), |c| c.checked_mul(2))
        .take_while(|&c| c <= horizon)
        .collect();
    if out.last() != Some(&horizon) && horizon > 0 {
        out.push(horizon);
    }
    out
}

/// Regret trajectory of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretCurve {
    pub config: TraceConfig,
    pub checkpoints: Vec<u64>,
    /// `[checkpoint][agent]`
    pub per_agent: Vec<Vec<f64>>,
    pub total: Vec<f64>,
    pub bound: Vec<f64>,
}

impl RegretCurve {
    /// Average regret per agent at checkpoint index `i`.
    pub fn mean_per_agent(&self, i: usize) -> f64 {
        self.total[i] / self.config.num_agents as f64
    }

    /// True if the total regret stays at or below the bound at every checkpoint.
    pub fn within_bound(&self) -> bool {
        self.total.iter().zip(&self.bound).all(|(r, b)| r <= b)
    }
}

/// Evaluates the regret at each checkpoint in one pass over the trace, with
/// `bound(t)` recorded alongside.
pub fn regret_curve(
    trace: &RunTrace,
    solution: &MdpSolution,
    checkpoints: &[u64],
    bound: impl Fn(u64) -> f64,
) -> Result<RegretCurve, RegretError> {
    let k = trace.config.num_agents;
    if solution.rho_star.len() < k {
        return Err(RegretError::AgentOutOfRange { agent: k - 1, num_agents: solution.rho_star.len() });
    }
    let horizon = trace.horizon();
    let mut sums = vec![0.0; k];
    let mut per_agent = Vec::with_capacity(checkpoints.len());
    let mut consumed = 0u64;
    for &c in checkpoints {
        if c > horizon || c < consumed {
            return Err(RegretError::StepOutOfRange { t: c, horizon });
        }
        for row in &trace.rows[consumed as usize * k..c as usize * k] {
            sums[row.agent as usize] += row.reward;
        }
        consumed = c;
        per_agent.push((0..k).map(|a| c as f64 * solution.rho_star[a] - sums[a]).collect::<Vec<_>>());
    }
    let total = per_agent.iter().map(|r| r.iter().sum()).collect();
    Ok(RegretCurve {
        config: trace.config.clone(),
        checkpoints: checkpoints.to_vec(),
        per_agent,
        total,
        bound: checkpoints.iter().map(|&c| bound(c)).collect(),
    })
}

/// A bound of the form `coefficient * sqrt(radicand * ln(log_argument))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundFactors {
    pub coefficient: f64,
    pub radicand: f64,
    pub log_argument: f64,
}

impl BoundFactors {
    pub fn value(&self) -> f64 {
        self.value_with_log(self.log_argument.ln())
    }

    /// Evaluates with the logarithm fixed at `log`.
    pub fn value_with_log(&self, log: f64) -> f64 {
        self.coefficient * (self.radicand * log).sqrt()
    }
}

fn check_bound_domain(d: f64, s: usize, a: usize, k: usize, t: u64, delta: f64) -> Result<(), RegretError> {
    let positive = [("D", d), ("S", s as f64), ("A", a as f64), ("num_agents", k as f64), ("T", t as f64)];
    for (name, value) in positive {
        if !(value > 0.0) || !value.is_finite() {
            return Err(RegretError::Domain { name, value });
        }
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(RegretError::Domain { name: "delta", value: delta });
    }
    let log_arg = 8.0 * a as f64 * k as f64 * t as f64 / delta;
    if !(log_arg > 1.0) {
        return Err(RegretError::Domain { name: "8 A N T / delta", value: log_arg });
    }
    Ok(())
}

/// Factors of `15 (D sqrt(S) + sqrt(N)) sqrt(S A N T ln(8 A N T / delta))`.
pub fn theorem1_factors(d: f64, s: usize, a: usize, k: usize, t: u64, delta: f64) -> Result<BoundFactors, RegretError> {
    check_bound_domain(d, s, a, k, t, delta)?;
    let (s, a, k, t) = (s as f64, a as f64, k as f64, t as f64);
    Ok(BoundFactors {
        coefficient: 15.0 * (d * s.sqrt() + k.sqrt()),
        radicand: s * a * k * t,
        log_argument: 8.0 * a * k * t / delta,
    })
}

/// Total-regret bound for individual rewards with pooled transitions.
pub fn theorem1_bound(d: f64, s: usize, a: usize, k: usize, t: u64, delta: f64) -> Result<f64, RegretError> {
    Ok(theorem1_factors(d, s, a, k, t, delta)?.value())
}

/// Factors of `34 D S sqrt(A N T ln(8 A N T / delta))`.
pub fn theorem2_factors(d: f64, s: usize, a: usize, k: usize, t: u64, delta: f64) -> Result<BoundFactors, RegretError> {
    check_bound_domain(d, s, a, k, t, delta)?;
    let (s, a, k, t) = (s as f64, a as f64, k as f64, t as f64);
    Ok(BoundFactors {
        coefficient: 34.0 * d * s,
        radicand: a * k * t,
        log_argument: 8.0 * a * k * t / delta,
    })
}

/// Total-regret bound when all agents share one reward function.
pub fn theorem2_bound(d: f64, s: usize, a: usize, k: usize, t: u64, delta: f64) -> Result<f64, RegretError> {
    Ok(theorem2_factors(d, s, a, k, t, delta)?.value())
}

/// The bound that applies to a sharing mode. Independent agents are each a
/// single-agent run, so their total is bounded by `N` single-agent bounds.
pub fn bound_for_mode(
    mode: SharingMode,
    d: f64,
    s: usize,
    a: usize,
    k: usize,
    t: u64,
    delta: f64,
) -> Result<f64, RegretError> {
    match mode {
        SharingMode::SharedTransitions => theorem1_bound(d, s, a, k, t, delta),
        SharingMode::SharedAll => theorem2_bound(d, s, a, k, t, delta),
        SharingMode::Independent => Ok(k as f64 * theorem1_bound(d, s, a, 1, t, delta)?),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Corollary1Rate {
    /// `D S sqrt(A T) / sqrt(N)`, constants and logs dropped.
    pub rate: f64,
    /// Whether `N < D sqrt(S)`, the regime in which the rate is claimed.
    pub condition_holds: bool,
}

pub fn corollary1_rate(d: f64, s: usize, a: usize, t: u64, k: usize) -> Corollary1Rate {
    let (sf, af, tf, kf) = (s as f64, a as f64, t as f64, k as f64);
    Corollary1Rate {
        rate: d * sf * (af * tf).sqrt() / kf.sqrt(),
        condition_holds: kf < d * sf.sqrt(),
    }
}

/// One run's curve tagged with its mode and seed.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRegret {
    pub mode: SharingMode,
    pub seed: u64,
    pub curve: RegretCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub mode: SharingMode,
    pub checkpoint: u64,
    pub median_per_agent_regret: f64,
    pub iqr: f64,
    pub total_regret_median: f64,
    pub bound_value: f64,
    /// Fraction of runs whose total regret stayed within the bound at this and
    /// every earlier checkpoint.
    pub bound_satisfied_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeComparison {
    pub rows: Vec<SummaryRow>,
    /// Independent over shared-transitions median per-agent regret at each
    /// checkpoint, when both modes are present.
    pub median_ratio: Option<Vec<(u64, f64)>>,
}

/// Linear-interpolation quantile of sorted data.
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, 0.5)
}

/// (median, Q3 - Q1).
pub fn median_iqr(values: &[f64]) -> (f64, f64) {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    (quantile_sorted(&v, 0.5), quantile_sorted(&v, 0.75) - quantile_sorted(&v, 0.25))
}

fn same_config(a: &TraceConfig, b: &TraceConfig) -> Result<(), RegretError> {
    let mismatch = |what: &str| Err(RegretError::Mismatch(what.to_string()));
    if a.num_states != b.num_states || a.num_actions != b.num_actions {
        return mismatch("state/action space sizes differ");
    }
    if a.num_agents != b.num_agents {
        return mismatch("numbers of agents differ");
    }
    if a.delta != b.delta {
        return mismatch("confidence parameters differ");
    }
    if a.horizon != b.horizon {
        return mismatch("horizons differ");
    }
    if a.env != b.env {
        return mismatch("environments differ");
    }
    Ok(())
}

/// Summarizes already-computed curves, grouped by mode.
pub fn summarize_curves(runs: &[RunRegret]) -> Result<ModeComparison, RegretError> {
    let first = runs.first().ok_or(RegretError::Empty)?;
    for r in runs {
        same_config(&first.curve.config, &r.curve.config)?;
        if r.curve.checkpoints != first.curve.checkpoints {
            return Err(RegretError::Mismatch("checkpoint grids differ".into()));
        }
    }
    let checkpoints = &first.curve.checkpoints;

    let mut groups: BTreeMap<SharingMode, Vec<&RegretCurve>> = BTreeMap::new();
    for r in runs {
        groups.entry(r.mode).or_default().push(&r.curve);
    }

    let mut rows = Vec::new();
    let mut medians: BTreeMap<SharingMode, Vec<f64>> = BTreeMap::new();
    for (&mode, curves) in &groups {
        let mut still_within = vec![true; curves.len()];
        for (i, &c) in checkpoints.iter().enumerate() {
            let per_agent: Vec<f64> = curves.iter().map(|cv| cv.mean_per_agent(i)).collect();
            let totals: Vec<f64> = curves.iter().map(|cv| cv.total[i]).collect();
            for (flag, cv) in still_within.iter_mut().zip(curves) {
                *flag &= cv.total[i] <= cv.bound[i];
            }
            let (med, iqr) = median_iqr(&per_agent);
            medians.entry(mode).or_default().push(med);
            rows.push(SummaryRow {
                mode,
                checkpoint: c,
                median_per_agent_regret: med,
                iqr,
                total_regret_median: median(&totals),
                bound_value: curves[0].bound[i],
                bound_satisfied_fraction: still_within.iter().filter(|&&f| f).count() as f64
                    / curves.len() as f64,
            });
        }
    }

    let median_ratio = match (medians.get(&SharingMode::Independent), medians.get(&SharingMode::SharedTransitions)) {
        (Some(ind), Some(shared)) => Some(
            checkpoints
                .iter()
                .zip(ind.iter().zip(shared))
                .map(|(&c, (i, s))| (c, if i == s { 1.0 } else { i / s }))
                .collect(),
        ),
        _ => None,
    };
    Ok(ModeComparison { rows, median_ratio })
}

/// Computes regret curves for every trace and summarizes them by mode. Each
/// run is measured against the bound that applies to its mode.
pub fn compare_modes(
    traces: &[&RunTrace],
    solution: &MdpSolution,
    checkpoints: &[u64],
) -> Result<ModeComparison, RegretError> {
    let runs = traces
        .iter()
        .map(|tr| {
            let cfg = &tr.config;
            let bound = |t: u64| {
                bound_for_mode(cfg.mode, solution.diameter, cfg.num_states, cfg.num_actions, cfg.num_agents, t, cfg.delta)
                    .unwrap_or(f64::INFINITY)
            };
            Ok(RunRegret {
                mode: cfg.mode,
                seed: cfg.seed.unwrap_or(0),
                curve: regret_curve(tr, solution, checkpoints, bound)?,
            })
        })
        .collect::<Result<Vec<_>, RegretError>>()?;
    summarize_curves(&runs)
}

pub fn write_summary_csv<W: Write>(mut w: W, comparison: &ModeComparison, comment: Option<&str>) -> io::Result<()> {
    if let Some(c) = comment {
        writeln!(w, "# {c}")?;
    }
    writeln!(w, "{SUMMARY_HEADER}")?;
    for r in &comparison.rows {
        writeln!(
            w,
            "{},{},{:?},{:?},{:?},{:?},{:?}",
            r.mode,
            r.checkpoint,
            r.median_per_agent_regret,
            r.iqr,
            r.total_regret_median,
            r.bound_value,
            r.bound_satisfied_fraction
        )?;
    }
    w.flush()
}
