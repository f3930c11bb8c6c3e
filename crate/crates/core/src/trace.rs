//! Per-step run traces and their CSV form.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ucrl::SharingMode;

pub const TRACE_HEADER: &str = "t,agent,state,action,reward,episode";

/// Run parameters echoed alongside a trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceConfig {
    pub num_states: usize,
    pub num_actions: usize,
    pub num_agents: usize,
    pub delta: f64,
    pub mode: SharingMode,
    pub horizon: u64,
    pub seed: Option<u64>,
    pub env: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: u64,
    pub agent: u32,
    pub state: u32,
    pub action: u32,
    pub reward: f64,
    pub episode: u32,
}

/// Rows are ordered by `t`, then by agent; there are exactly `num_agents`
/// rows for every step.
#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub config: TraceConfig,
    pub rows: Vec<TraceRow>,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("trace inconsistency: {0}")]
    Inconsistent(String),
}

impl RunTrace {
    pub fn horizon(&self) -> u64 {
        self.rows.last().map_or(0, |r| r.t)
    }

    /// Rows of step `t` (1-based).
    pub fn step(&self, t: u64) -> &[TraceRow] {
        let k = self.config.num_agents;
        let start = (t as usize - 1) * k;
        &self.rows[start..start + k]
    }

    /// Checks shape invariants: `num_agents` rows per step, contiguous steps,
    /// agents in order, rewards in `[0, 1]`.
    pub fn check(&self) -> Result<(), TraceError> {
        let k = self.config.num_agents;
        if k == 0 || !self.rows.len().is_multiple_of(k) {
            return Err(TraceError::Inconsistent(format!(
                "{} rows is not a multiple of {k} agents",
                self.rows.len()
            )));
        }
        for (i, row) in self.rows.iter().enumerate() {
            let t = (i / k) as u64 + 1;
            let agent = (i % k) as u32;
            if row.t != t || row.agent != agent {
                return Err(TraceError::Inconsistent(format!(
                    "row {i} is (t={}, agent={}), expected (t={t}, agent={agent})",
                    row.t, row.agent
                )));
            }
            if !(0.0..=1.0).contains(&row.reward) {
                return Err(TraceError::Inconsistent(format!("row {i} reward {} outside [0, 1]", row.reward)));
            }
        }
        Ok(())
    }

    /// Writes the CSV form. The first line is a `#` comment carrying the
    /// config as JSON. With `stride > 1` only every `stride`-th step is kept,
    /// plus every step that opens an episode.
    pub fn write_csv<W: Write>(&self, mut w: W, stride: u64) -> io::Result<()> {
        let stride = stride.max(1);
        writeln!(w, "# config={}", serde_json::to_string(&self.config).map_err(io::Error::other)?)?;
        writeln!(w, "{TRACE_HEADER}")?;
        let k = self.config.num_agents.max(1);
        let mut prev_episode = None;
        for step in self.rows.chunks(k) {
            let t = step[0].t;
            let opens = prev_episode != Some(step[0].episode);
            prev_episode = Some(step[0].episode);
            if (t - 1) % stride != 0 && !opens {
                continue;
            }
            for r in step {
                writeln!(w, "{},{},{},{},{:?},{}", r.t, r.agent, r.state, r.action, r.reward, r.episode)?;
            }
        }
        w.flush()
    }

    pub fn to_csv_bytes(&self, stride: u64) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf, stride).expect("writing to memory cannot fail");
        buf
    }

    /// Parses the CSV form written by [`RunTrace::write_csv`].
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self, TraceError> {
        let mut config = None;
        let mut rows = Vec::new();
        let mut seen_header = false;
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            let parse_err = |message: String| TraceError::Parse { line: lineno, message };
            if let Some(rest) = line.strip_prefix("# config=") {
                config = Some(serde_json::from_str(rest).map_err(|e| parse_err(e.to_string()))?);
                continue;
            }
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            if !seen_header {
                if line != TRACE_HEADER {
                    return Err(parse_err(format!("expected header `{TRACE_HEADER}`")));
                }
                seen_header = true;
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 6 {
                return Err(parse_err(format!("expected 6 fields, got {}", fields.len())));
            }
            let int = |j: usize| fields[j].parse::<u64>().map_err(|e| parse_err(format!("field {j}: {e}")));
            rows.push(TraceRow {
                t: int(0)?,
                agent: int(1)? as u32,
                state: int(2)? as u32,
                action: int(3)? as u32,
                reward: fields[4].parse().map_err(|e| parse_err(format!("reward: {e}")))?,
                episode: int(5)? as u32,
            });
        }
        let config = config.ok_or_else(|| TraceError::Parse { line: 1, message: "missing config line".into() })?;
        Ok(RunTrace { config, rows })
    }
}
