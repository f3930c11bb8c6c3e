//! Independent oracles shared by the integration tests. Nothing here calls
//! the solvers under test.

#![allow(dead_code)]

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use multi_ucrl::mdp::{Mdp, Policy};
use rand::seq::SliceRandom;
use rand::Rng;

/// Dense Gaussian elimination with partial pivoting.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-14 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let tail: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row][row];
    }
    Some(x)
}

fn reach(m: &Mdp, pi: &Policy, from: usize) -> Vec<bool> {
    let mut seen = vec![false; m.num_states];
    let mut stack = vec![from];
    seen[from] = true;
    while let Some(s) = stack.pop() {
        for (t, &p) in m.transitions[s][pi.action[s]].iter().enumerate() {
            if p > 0.0 && !seen[t] {
                seen[t] = true;
                stack.push(t);
            }
        }
    }
    seen
}

/// Gain of every closed recurrent class of the chain induced by `pi`.
pub fn class_gains(m: &Mdp, pi: &Policy, agent: usize) -> Vec<f64> {
    let n = m.num_states;
    let r: Vec<Vec<bool>> = (0..n).map(|s| reach(m, pi, s)).collect();
    let mut done = vec![false; n];
    let mut gains = Vec::new();
    for s in 0..n {
        if done[s] || !(0..n).all(|t| !r[s][t] || r[t][s]) {
            continue;
        }
        let class: Vec<usize> = (0..n).filter(|&t| r[s][t]).collect();
        class.iter().for_each(|&t| done[t] = true);
        let k = class.len();
        // mu Q = mu on the class, last equation replaced by normalization
        let mut a = vec![vec![0.0; k]; k];
        for (j, &sj) in class.iter().enumerate() {
            for (i, &si) in class.iter().enumerate() {
                a[i][j] = m.transitions[sj][pi.action[sj]][si];
            }
            a[j][j] -= 1.0;
        }
        a[k - 1] = vec![1.0; k];
        let mut b = vec![0.0; k];
        b[k - 1] = 1.0;
        let mu = gauss_solve(a, b).expect("a closed class has a unique stationary law");
        gains.push(class.iter().zip(&mu).map(|(&c, w)| w * m.rewards[agent][c][pi.action[c]]).sum());
    }
    gains
}

/// `rho*` by enumerating every deterministic policy.
pub fn enumerated_optimal_gain(m: &Mdp, agent: usize) -> f64 {
    Policy::enumerate(m.num_states, m.num_actions)
        .flat_map(|pi| class_gains(m, &pi, agent))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Expected hitting times of `target` under `pi`, infinite where it is never reached.
pub fn policy_hitting_times(m: &Mdp, pi: &Policy, target: usize) -> Vec<f64> {
    let n = m.num_states;
    let hits: Vec<bool> = (0..n).map(|s| s == target || reach_set_contains_surely(m, pi, s, target)).collect();
    let idx: Vec<usize> = (0..n).filter(|&s| s != target && hits[s]).collect();
    let mut out = vec![f64::INFINITY; n];
    out[target] = 0.0;
    if idx.is_empty() {
        return out;
    }
    let pos = |s: usize| idx.iter().position(|&x| x == s);
    let k = idx.len();
    let mut a = vec![vec![0.0; k]; k];
    for (i, &s) in idx.iter().enumerate() {
        a[i][i] = 1.0;
        for (t, &p) in m.transitions[s][pi.action[s]].iter().enumerate() {
            if let Some(j) = pos(t) {
                a[i][j] -= p;
            }
        }
    }
    let h = gauss_solve(a, vec![1.0; k]).expect("proper states give a nonsingular system");
    for (i, &s) in idx.iter().enumerate() {
        out[s] = h[i];
    }
    out
}

/// True if, under `pi`, every state reachable from `s` can still reach `target`
/// (so `target` is hit with probability one).
fn reach_set_contains_surely(m: &Mdp, pi: &Policy, s: usize, target: usize) -> bool {
    let r = reach(m, pi, s);
    (0..m.num_states).filter(|&t| r[t]).all(|t| t == target || reach(m, pi, t)[target])
}

/// `max_{s != s'} min_pi T_pi(s, s')` by enumeration.
pub fn brute_force_diameter(m: &Mdp) -> f64 {
    let n = m.num_states;
    let mut worst: f64 = 0.0;
    for target in 0..n {
        let mut best = vec![f64::INFINITY; n];
        for pi in Policy::enumerate(n, m.num_actions) {
            for (b, h) in best.iter_mut().zip(policy_hitting_times(m, &pi, target)) {
                *b = b.min(h);
            }
        }
        for (s, b) in best.iter().enumerate() {
            if s != target {
                worst = worst.max(*b);
            }
        }
    }
    worst
}

/// `max p . u` over the simplex intersected with the L1 ball of radius `conf` around `p_hat`.
pub fn lp_inner_max_value(p_hat: &[f64], conf: f64, u: &[f64]) -> f64 {
    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let p: Vec<_> = u.iter().map(|&ui| lp.add_var(ui, (0.0, 1.0))).collect();
    let d: Vec<_> = u.iter().map(|_| lp.add_var(0.0, (0.0, f64::INFINITY))).collect();
    lp.add_constraint(p.iter().map(|&v| (v, 1.0)).collect::<Vec<_>>(), ComparisonOp::Eq, 1.0);
    for i in 0..u.len() {
        lp.add_constraint([(p[i], 1.0), (d[i], -1.0)], ComparisonOp::Le, p_hat[i]);
        lp.add_constraint([(p[i], -1.0), (d[i], -1.0)], ComparisonOp::Le, -p_hat[i]);
    }
    lp.add_constraint(d.iter().map(|&v| (v, 1.0)).collect::<Vec<_>>(), ComparisonOp::Le, conf);
    lp.solve().expect("the L1 ball around p_hat always meets the simplex").objective()
}

/// Random distribution with random support size.
pub fn random_row<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    let support = rng.gen_range(1..=n);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let mut row = vec![0.0; n];
    for &i in &idx[..support] {
        row[i] = rng.gen_range(0.01..1.0);
    }
    let total: f64 = row.iter().sum();
    row.iter_mut().for_each(|p| *p /= total);
    row
}

/// Sparse random communicating MDP: random-support rows blended with a
/// Hamiltonian cycle of random weight, and with several agents.
pub fn random_sparse_mdp<R: Rng>(n: usize, a: usize, agents: usize, rng: &mut R) -> Mdp {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut succ = vec![0; n];
    for i in 0..n {
        succ[order[i]] = order[(i + 1) % n];
    }
    let mut transitions = vec![vec![vec![0.0; n]; a]; n];
    for s in 0..n {
        // at least one action follows the cycle with positive weight
        for act in 0..a {
            let w = if act == 0 { rng.gen_range(0.05..1.0) } else { rng.gen_range(0.0..0.5) };
            let mut row: Vec<f64> = random_row(n, rng).into_iter().map(|p| (1.0 - w) * p).collect();
            row[succ[s]] += w;
            let sum: f64 = row.iter().sum();
            row.iter_mut().for_each(|p| *p /= sum);
            transitions[s][act] = row;
        }
    }
    let rewards = (0..agents)
        .map(|_| (0..n).map(|_| (0..a).map(|_| rng.gen::<f64>()).collect()).collect())
        .collect();
    Mdp::new(transitions, rewards, 0).expect("generator yields valid MDPs")
}

/// Random (S, A) with A^S <= 1024 and S >= 2.
pub fn small_shape<R: Rng>(rng: &mut R) -> (usize, usize) {
    loop {
        let s = rng.gen_range(2..=6);
        let a = rng.gen_range(1..=4);
        if (a as u64).pow(s as u32) <= 1024 {
            return (s, a);
        }
    }
}
