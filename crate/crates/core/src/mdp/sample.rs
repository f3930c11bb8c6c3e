use rand::Rng;

use super::Mdp;

/// Draws `s' ~ p(· | s, a)` by inverse CDF on a single uniform draw.
pub fn sample_transition<R: Rng + ?Sized>(m: &Mdp, s: usize, a: usize, rng: &mut R) -> usize {
    let row = m.row(s, a);
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (next, &p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return next;
        }
    }
    // Rounding left u above the accumulated mass: fall back to the last state with mass.
    row.iter().rposition(|&p| p > 0.0).unwrap_or(row.len() - 1)
}

/// Bernoulli reward with success probability `r^agent(s, a)`.
pub fn sample_reward<R: Rng + ?Sized>(
    m: &Mdp,
    agent: usize,
    s: usize,
    a: usize,
    rng: &mut R,
) -> f64 {
    let u: f64 = rng.gen();
    if u < m.reward(agent, s, a) {
        1.0
    } else {
        0.0
    }
}
