#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rrl_core::mdp::{GridWorld, GridWorldDoc};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn world(width: usize, height: usize, colors: Vec<u8>, horizon: usize, slip: f64, bonus: f64) -> GridWorld {
    GridWorld::from_doc(GridWorldDoc {
        width,
        height,
        colors,
        goal: [width - 1, height - 1],
        horizon,
        slip_prob: slip,
        completion_bonus: bonus,
    })
    .unwrap()
}

pub fn random_world(r: &mut ChaCha8Rng, size: usize, horizon: usize, slip: f64, bonus: f64) -> GridWorld {
    GridWorld::random(r, size, size, horizon, slip, bonus).unwrap()
}

pub fn random_theta(r: &mut ChaCha8Rng) -> [f64; 4] {
    let mut t = [0.0; 4];
    for x in &mut t {
        *x = r.random_range(-1.0..1.0);
    }
    t
}

/// Independent successor model: intended move with `1 - slip`, each other
/// direction with `slip / 3`, off-grid moves stay put. Order is up, down, left, right.
pub fn successors(w: &GridWorld, s: usize, a: usize) -> Vec<(usize, f64)> {
    let (width, height) = (w.width() as isize, w.height() as isize);
    let (x, y) = ((s as isize) % width, (s as isize) / width);
    let deltas = [(0, -1), (0, 1), (-1, 0), (1, 0)];
    let slip = w.slip_prob();
    let mut out = Vec::new();
    for (b, (dx, dy)) in deltas.iter().enumerate() {
        let p = if a == b { 1.0 - slip } else { slip / 3.0 };
        if p == 0.0 {
            continue;
        }
        let (nx, ny) = (x + dx, y + dy);
        let to = if nx < 0 || ny < 0 || nx >= width || ny >= height { s } else { (ny * width + nx) as usize };
        out.push((to, p));
    }
    out
}

/// Reward of landing on `to` from a live state.
pub fn landing_reward(w: &GridWorld, theta: &[f64; 4], to: usize) -> f64 {
    if to == w.goal_index() {
        w.completion_bonus()
    } else {
        theta[w.doc().colors[to] as usize]
    }
}

/// Soft backup computed by plain recursion over (t, s), independent of the
/// table-based solver.
pub fn brute_soft_q(w: &GridWorld, theta: &[f64; 4], beta: f64, t: usize, s: usize) -> [f64; 4] {
    let mut q = [0.0; 4];
    for (a, qa) in q.iter_mut().enumerate() {
        for (to, p) in successors(w, s, a) {
            *qa += p * (landing_reward(w, theta, to) + brute_soft_v(w, theta, beta, t + 1, to));
        }
    }
    q
}

pub fn brute_soft_v(w: &GridWorld, theta: &[f64; 4], beta: f64, t: usize, s: usize) -> f64 {
    if t == w.horizon() || s == w.goal_index() {
        return 0.0;
    }
    let q = brute_soft_q(w, theta, beta, t, s);
    let pi = softmax(beta, &q);
    (0..4).map(|a| pi[a] * (q[a] - pi[a].ln())).sum()
}

pub fn softmax(beta: f64, q: &[f64; 4]) -> [f64; 4] {
    let m = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = q.iter().map(|x| (beta * (x - m)).exp()).collect();
    let z: f64 = e.iter().sum();
    [e[0] / z, e[1] / z, e[2] / z, e[3] / z]
}
