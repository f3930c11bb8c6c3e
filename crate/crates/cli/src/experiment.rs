//! Seeded replications, trace files, summary and manifest.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use multi_ucrl::mdp::{solve, Mdp, MdpError, MdpSolution, SolveError, DEFAULT_SOLVER_TOL};
use multi_ucrl::regret::{
    bound_for_mode, corollary1_rate, default_checkpoints, regret_curve, summarize_curves, write_summary_csv,
    Corollary1Rate, ModeComparison, RegretError, RunRegret,
};
use multi_ucrl::seed::{replication_rng, replication_seed};
use multi_ucrl::ucrl::{run, SharingMode, UcrlConfig, UcrlError};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::config::{EnvSource, ExperimentConfig};

pub const SUMMARY_FILE: &str = "summary.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const PARTIAL_SUFFIX: &str = ".partial";

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("environment: {0}")]
    Env(String),
    #[error("loading MDP: {0}")]
    Mdp(#[from] MdpError),
    #[error("solving the environment: {0}")]
    Solve(#[from] SolveError),
    #[error("{mode} replication {replication}: {source}")]
    Run { mode: SharingMode, replication: u64, source: UcrlError },
    #[error("regret: {0}")]
    Regret(#[from] RegretError),
    #[error("worker pool: {0}")]
    Pool(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io { path: path.to_path_buf(), source }
}

/// Writes `path` through a `.partial` file renamed into place on success.
/// A failed write leaves only the `.partial` file behind.
fn write_atomic(path: &Path, fill: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>) -> Result<(), ExperimentError> {
    let mut partial = path.as_os_str().to_owned();
    partial.push(PARTIAL_SUFFIX);
    let partial = PathBuf::from(partial);
    let file = File::create(&partial).map_err(io_err(&partial))?;
    let mut w = BufWriter::new(file);
    fill(&mut w).and_then(|_| w.flush()).map_err(io_err(&partial))?;
    drop(w);
    fs::rename(&partial, path).map_err(io_err(path))
}

pub fn trace_file_name(mode: SharingMode, replication: u64) -> String {
    format!("trace-{mode}-{replication:03}.csv")
}

#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub mode: SharingMode,
    pub replication: u64,
    pub seed: u64,
    pub stream_seed: u64,
    pub trace_file: String,
    pub episodes: usize,
    pub final_total_regret: f64,
    pub within_bound: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub version: &'static str,
    pub config: ExperimentConfig,
    pub env_label: String,
    pub num_states: usize,
    pub num_actions: usize,
    pub num_agents: usize,
    /// Optimal gain of each agent.
    pub rho_star: Vec<f64>,
    pub diameter: f64,
    pub corollary1: Corollary1Rate,
    pub checkpoints: Vec<u64>,
    pub runs: Vec<RunRecord>,
    pub median_ratio: Option<Vec<(u64, f64)>>,
    pub wall_clock_seconds: f64,
}

#[derive(Debug)]
pub struct ExperimentOutput {
    pub manifest: Manifest,
    pub comparison: ModeComparison,
}

fn load_env(cfg: &ExperimentConfig) -> Result<(Mdp, String), ExperimentError> {
    match &cfg.env {
        EnvSource::Builtin(spec) => Ok((spec.build().map_err(|e| ExperimentError::Env(e.to_string()))?, spec.label())),
        EnvSource::File { path, num_agents } => {
            let m = Mdp::load(path)?;
            if m.num_agents != *num_agents && *num_agents != 1 {
                return Err(ExperimentError::Env(format!(
                    "{} defines {} agents but {num_agents} were requested",
                    path.display(),
                    m.num_agents
                )));
            }
            let label = path.file_stem().map_or("mdp".into(), |s| s.to_string_lossy().into_owned());
            Ok((m, label))
        }
    }
}

fn one_run(
    cfg: &ExperimentConfig,
    m: &Mdp,
    label: &str,
    solution: &MdpSolution,
    checkpoints: &[u64],
    mode: SharingMode,
    replication: u64,
) -> Result<(RunRecord, RunRegret), ExperimentError> {
    let seed = cfg.base_seed.wrapping_add(replication);
    let mut rng = replication_rng(cfg.base_seed, replication);
    let mut out = run(m, &UcrlConfig::new(mode, cfg.delta), cfg.horizon, &mut rng)
        .map_err(|source| ExperimentError::Run { mode, replication, source })?;
    out.trace.config.seed = Some(seed);
    out.trace.config.env = Some(label.to_string());

    let name = trace_file_name(mode, replication);
    let path = cfg.out.join(&name);
    let echo = cfg.to_json();
    write_atomic(&path, |w| {
        writeln!(w, "# experiment={echo}")?;
        out.trace.write_csv(w, cfg.trace_stride)
    })?;

    let (s, a, k) = (m.num_states, m.num_actions, m.num_agents);
    let bound = |t: u64| bound_for_mode(mode, solution.diameter, s, a, k, t, cfg.delta).unwrap_or(f64::INFINITY);
    let curve = regret_curve(&out.trace, solution, checkpoints, bound)?;
    let record = RunRecord {
        mode,
        replication,
        seed,
        stream_seed: replication_seed(cfg.base_seed, replication),
        trace_file: name,
        episodes: out.num_episodes(),
        final_total_regret: *curve.total.last().unwrap_or(&0.0),
        within_bound: curve.within_bound(),
    };
    Ok((record, RunRegret { mode, seed, curve }))
}

/// Runs every (mode, replication) pair and writes one trace per run, then
/// `summary.csv` and `manifest.json`. Replication `i` of every mode uses the
/// same random stream.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput, ExperimentError> {
    let started = Instant::now();
    fs::create_dir_all(&cfg.out).map_err(io_err(&cfg.out))?;
    let (m, label) = load_env(cfg)?;
    let solution = solve(&m, DEFAULT_SOLVER_TOL)?;
    let checkpoints = cfg.checkpoints.clone().unwrap_or_else(|| default_checkpoints(cfg.horizon));

    let jobs: Vec<(SharingMode, u64)> =
        cfg.modes.iter().flat_map(|&mode| (0..cfg.replications).map(move |r| (mode, r))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| ExperimentError::Pool(e.to_string()))?;
    let results: Vec<(RunRecord, RunRegret)> = pool.install(|| {
        jobs.par_iter()
            .map(|&(mode, r)| one_run(cfg, &m, &label, &solution, &checkpoints, mode, r))
            .collect::<Result<_, _>>()
    })?;
    let (records, curves): (Vec<RunRecord>, Vec<RunRegret>) = results.into_iter().unzip();

    let comparison = summarize_curves(&curves)?;
    let echo = format!("experiment={}", cfg.to_json());
    write_atomic(&cfg.out.join(SUMMARY_FILE), |w| write_summary_csv(w, &comparison, Some(&echo)))?;

    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION"),
        config: cfg.clone(),
        env_label: label,
        num_states: m.num_states,
        num_actions: m.num_actions,
        num_agents: m.num_agents,
        rho_star: solution.rho_star.clone(),
        diameter: solution.diameter,
        corollary1: corollary1_rate(solution.diameter, m.num_states, m.num_actions, cfg.horizon, m.num_agents),
        checkpoints,
        runs: records,
        median_ratio: comparison.median_ratio.clone(),
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    };
    write_atomic(&cfg.out.join(MANIFEST_FILE), |w| {
        serde_json::to_writer_pretty(&mut *w, &manifest).map_err(io::Error::other)?;
        writeln!(w)
    })?;
    Ok(ExperimentOutput { manifest, comparison })
}
