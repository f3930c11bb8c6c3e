//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails. Run with `cargo test -p multi-ucrl --test acceptance`.

mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::*;
use multi_ucrl::environments::{make_random_communicating, make_riverswim, RewardMode};
use multi_ucrl::evi::{extended_value_iteration, inner_max, PlausibleSet};
use multi_ucrl::mdp::{diameter, optimal_average_reward, solve, Mdp, MdpSolution};
use multi_ucrl::regret::{
    bound_for_mode, default_checkpoints, median, regret_curve, theorem1_bound, theorem2_bound,
};
use multi_ucrl::seed::replication_rng;
use multi_ucrl::ucrl::{
    conf_p_shared, conf_r_individual, conf_r_shared, episode_count_bound, run, SharingMode, UcrlConfig,
};
use multi_ucrl::RunOutcome;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

const HORIZON: u64 = 100_000;
const DELTA: f64 = 0.05;
const SEEDS: u64 = 20;
const BASE_SEED: u64 = 2024;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn solver_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut gain_err, mut diam_err) = (0.0f64, 0.0f64);
    for _ in 0..50 {
        let (s, a) = small_shape(&mut rng);
        let m = random_sparse_mdp(s, a, 1, &mut rng);
        let g = optimal_average_reward(&m, 0, 1e-10).unwrap().rho_star;
        gain_err = gain_err.max((g - enumerated_optimal_gain(&m, 0)).abs());
        diam_err = diam_err.max((diameter(&m) - brute_force_diameter(&m)).abs());
    }
    outcome(gain_err <= 1e-6 && diam_err <= 1e-6, format!("max gain error {gain_err:.2e}, max diameter error {diam_err:.2e}"))
}

fn inner_max_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.gen_range(1..=8);
        let p_hat = random_row(n, &mut rng);
        let conf = rng.gen_range(0.0..2.5);
        let u: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let p = inner_max(&p_hat, conf, &u);
        let value: f64 = p.iter().zip(&u).map(|(x, y)| x * y).sum();
        worst = worst.max((value - lp_inner_max_value(&p_hat, conf, &u)).abs());
    }
    outcome(worst <= 1e-9, format!("max |value - LP| {worst:.2e} over 1000 instances"))
}

fn containing_set(m: &Mdp, rng: &mut ChaCha8Rng) -> PlausibleSet {
    let (s, a) = (m.num_states, m.num_actions);
    let mut p_hat = vec![vec![vec![0.0; s]; a]; s];
    let mut conf_p = vec![vec![0.0; a]; s];
    let mut r_hat = vec![vec![0.0; a]; s];
    let mut conf_r = vec![vec![0.0; a]; s];
    for st in 0..s {
        for ac in 0..a {
            let truth = &m.transitions[st][ac];
            let noise = random_row(s, rng);
            let mix = rng.gen_range(0.0..0.7);
            let row: Vec<f64> = truth.iter().zip(&noise).map(|(p, q)| (1.0 - mix) * p + mix * q).collect();
            let dist: f64 = row.iter().zip(truth).map(|(x, y)| (x - y).abs()).sum();
            conf_p[st][ac] = dist + rng.gen_range(0.0..0.3);
            p_hat[st][ac] = row;
            let r = m.rewards[0][st][ac];
            r_hat[st][ac] = (r + rng.gen_range(-0.3..0.3)).clamp(0.0, 1.0);
            conf_r[st][ac] = (r - r_hat[st][ac]).abs() + rng.gen_range(0.0..0.2);
        }
    }
    PlausibleSet::from_nested(&r_hat, &conf_r, &p_hat, &conf_p).unwrap()
}

fn optimism() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut ok = 0;
    let mut worst = f64::INFINITY;
    for i in 0..200 {
        let s = rng.gen_range(2..=8);
        let a = rng.gen_range(1..=4);
        let m = random_sparse_mdp(s, a, 1, &mut rng);
        let rho = solve(&m, 1e-10).unwrap().rho_star[0];
        let eps = [1e-2, 1e-3, 1e-4][i % 3];
        let res = extended_value_iteration(&containing_set(&m, &mut rng), eps).unwrap();
        worst = worst.min(res.rho_opt - (rho - eps));
        ok += (res.rho_opt >= rho - eps) as usize;
    }
    outcome(ok == 200, format!("{ok}/200 optimistic, min margin {worst:.3e}"))
}

fn confidence_regression() -> Outcome {
    let got = [
        conf_r_individual(2, 2, 2, 0.1, 10, 5).unwrap(),
        conf_p_shared(2, 2, 0.1, 10, 20).unwrap(),
        conf_r_shared(2, 2, 0.1, 10, 20).unwrap(),
    ];
    let want = [2.2725, 2.8963, 1.0816];
    let pass = got.iter().zip(&want).all(|(g, w)| (g - w).abs() <= 1e-3);
    outcome(pass, format!("{:.4} {:.4} {:.4}", got[0], got[1], got[2]))
}

fn bound_regression() -> Outcome {
    let t1 = theorem1_bound(3.0, 4, 2, 4, 10_000, 0.05).unwrap();
    let t2 = theorem2_bound(3.0, 4, 2, 4, 10_000, 0.05).unwrap();
    let pass = (t1 - 2.746e5).abs() <= 1e2 && (t2 - 4.668e5).abs() <= 1e2;
    outcome(pass, format!("theorem1 {t1:.1}, theorem2 {t2:.1}"))
}

struct Env {
    label: String,
    mdp: Mdp,
    solution: MdpSolution,
}

fn env(label: String, mdp: Mdp) -> Env {
    let solution = solve(&mdp, 1e-9).unwrap();
    Env { label, mdp, solution }
}

/// RiverSwim-6 plus five random S=6 A=3 MDPs, each with `k` agents.
fn grid_envs(k: usize, rewards: RewardMode) -> Vec<Env> {
    let mut out = vec![env(format!("riverswim-6/{k}"), make_riverswim(6, k, rewards).unwrap())];
    for seed in 1..=5 {
        out.push(env(format!("random-{seed}/{k}"), make_random_communicating(6, 3, k, seed, rewards).unwrap()));
    }
    out
}

struct RunResult {
    env: String,
    mode: SharingMode,
    k: usize,
    within_bound: bool,
    per_agent_regret: f64,
    episodes_ok: bool,
    counts_ok: bool,
}

fn counts_conserved(out: &RunOutcome, horizon: u64) -> bool {
    let st = &out.statistics;
    let k = st.num_agents();
    let pooled: u64 = (0..st.num_states()).flat_map(|s| (0..st.num_actions()).map(move |a| (s, a))).map(|(s, a)| st.n_pooled(s, a)).sum();
    st.is_consistent() && (0..k).all(|a| st.agent_total(a) == horizon) && pooled == k as u64 * horizon
}

fn run_one(e: &Env, mode: SharingMode, replication: u64) -> RunResult {
    let m = &e.mdp;
    let mut rng = replication_rng(BASE_SEED, replication);
    let out = run(m, &UcrlConfig::new(mode, DELTA), HORIZON, &mut rng).unwrap();
    let (s, a, k) = (m.num_states, m.num_actions, m.num_agents);
    let d = e.solution.diameter;
    let bound = |t: u64| bound_for_mode(mode, d, s, a, k, t, DELTA).unwrap();
    let curve = regret_curve(&out.trace, &e.solution, &default_checkpoints(HORIZON), bound).unwrap();
    RunResult {
        env: e.label.clone(),
        mode,
        k,
        within_bound: curve.within_bound(),
        per_agent_regret: curve.mean_per_agent(curve.checkpoints.len() - 1),
        episodes_ok: out.num_episodes() as f64 <= episode_count_bound(s, a, k, HORIZON),
        counts_ok: counts_conserved(&out, HORIZON),
    }
}

fn run_grid(envs: &[Env], mode: SharingMode) -> Vec<RunResult> {
    envs.par_iter()
        .flat_map_iter(|e| (0..SEEDS).map(move |r| (e, r)))
        .map(|(e, r)| run_one(e, mode, r))
        .collect()
}

fn envelope(runs: &[RunResult]) -> Outcome {
    let ok = runs.iter().filter(|r| r.within_bound).count();
    let frac = ok as f64 / runs.len() as f64;
    outcome(frac >= 0.95, format!("{ok}/{} runs within bound at every checkpoint ({:.1}%)", runs.len(), 100.0 * frac))
}

fn median_regret(runs: &[RunResult], env: &str, mode: SharingMode, k: usize) -> f64 {
    let v: Vec<f64> = runs.iter().filter(|r| r.env == env && r.mode == mode && r.k == k).map(|r| r.per_agent_regret).collect();
    median(&v)
}

/// Least-squares slope of `ln y` against `ln x`.
fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (xs, ys): (Vec<f64>, Vec<f64>) = points.iter().map(|&(x, y)| (x.ln(), y.ln())).unzip();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    cov / var
}

fn determinism() -> Outcome {
    let m = make_random_communicating(6, 3, 4, 2, RewardMode::Shared).unwrap();
    let mut same = 0;
    for mode in SharingMode::ALL {
        let bytes = |rep| {
            let out = run(&m, &UcrlConfig::new(mode, DELTA), 20_000, &mut replication_rng(BASE_SEED, rep)).unwrap();
            out.trace.to_csv_bytes(1)
        };
        same += (bytes(3) == bytes(3) && bytes(3) != bytes(4)) as usize;
    }
    outcome(same == 3, format!("{same}/3 modes reproduce byte-identical traces"))
}

fn report(name: &str, start: Instant, o: Outcome, failures: &mut usize) {
    let elapsed: Duration = start.elapsed();
    println!("{} {name}: {} [{:.1}s]", if o.pass { "PASS" } else { "FAIL" }, o.detail, elapsed.as_secs_f64());
    *failures += !o.pass as usize;
}

fn main() -> ExitCode {
    let mut failures = 0;

    let t = Instant::now();
    report("solver oracle", t, solver_oracle(), &mut failures);
    let t = Instant::now();
    report("inner-max oracle", t, inner_max_oracle(), &mut failures);
    let t = Instant::now();
    report("optimism", t, optimism(), &mut failures);
    let t = Instant::now();
    report("confidence formula regression", t, confidence_regression(), &mut failures);
    let t = Instant::now();
    report("bound evaluator regression", t, bound_regression(), &mut failures);

    let t = Instant::now();
    let mut t1_runs = Vec::new();
    for k in [1, 2, 4] {
        t1_runs.extend(run_grid(&grid_envs(k, RewardMode::DistinctPerAgent), SharingMode::SharedTransitions));
    }
    report("shared-transition regret envelope", t, envelope(&t1_runs), &mut failures);

    let t = Instant::now();
    let mut t2_runs = Vec::new();
    for k in [1, 2, 4] {
        t2_runs.extend(run_grid(&grid_envs(k, RewardMode::Shared), SharingMode::SharedAll));
    }
    report("shared-reward regret envelope", t, envelope(&t2_runs), &mut failures);

    let t = Instant::now();
    let river4 = [env("riverswim-6/4".into(), make_riverswim(6, 4, RewardMode::DistinctPerAgent).unwrap())];
    let mut transfer_runs = run_grid(&river4, SharingMode::SharedTransitions);
    transfer_runs.extend(run_grid(&river4, SharingMode::Independent));
    let shared = median_regret(&transfer_runs, "riverswim-6/4", SharingMode::SharedTransitions, 4);
    let indep = median_regret(&transfer_runs, "riverswim-6/4", SharingMode::Independent, 4);
    let mut slope_runs = Vec::new();
    let mut points = Vec::new();
    for k in [1usize, 2, 4, 8] {
        let e = [env(format!("riverswim-6-shared/{k}"), make_riverswim(6, k, RewardMode::Shared).unwrap())];
        let runs = run_grid(&e, SharingMode::SharedAll);
        points.push((k as f64, median_regret(&runs, &e[0].label, SharingMode::SharedAll, k)));
        slope_runs.extend(runs);
    }
    let slope = log_log_slope(&points);
    let medians: Vec<String> = points.iter().map(|(k, r)| format!("{k}:{r:.0}")).collect();
    report(
        "transfer benefit",
        t,
        outcome(
            shared <= indep && slope <= -0.2,
            format!(
                "median per-agent regret shared {shared:.0} vs independent {indep:.0}; shared-all slope {slope:.3} (medians {})",
                medians.join(" ")
            ),
        ),
        &mut failures,
    );

    let all: Vec<&RunResult> = t1_runs.iter().chain(&t2_runs).chain(&transfer_runs).chain(&slope_runs).collect();
    let t = Instant::now();
    let ep_ok = all.iter().filter(|r| r.episodes_ok).count();
    report("episode-count invariant", t, outcome(ep_ok == all.len(), format!("{ep_ok}/{} runs", all.len())), &mut failures);
    let cnt_ok = all.iter().filter(|r| r.counts_ok).count();
    report("count conservation", t, outcome(cnt_ok == all.len(), format!("{cnt_ok}/{} runs", all.len())), &mut failures);

    let t = Instant::now();
    report("determinism", t, determinism(), &mut failures);

    if failures == 0 {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failures} criteria failed");
        ExitCode::FAILURE
    }
}
