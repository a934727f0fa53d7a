//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Every export takes plain numbers and returns a JSON string, which keeps
//! the JavaScript side free of generated glue types.

use rand::Rng;
use rrl_core::beta_fit::{fit_beta_mle, CalibrationItem, CalibrationSet};
use rrl_core::bias::{HumanModel, Responder};
use rrl_core::math::{log_space, ScalarSearch};
use rrl_core::mdp::{sample_trajectory, trajectory_return, Cell, GridWorld, GridWorldDoc, Trajectory};
use rrl_core::toy::{find_crossover_beta, sweep, CrossoverSearch, ToyEnvParams, ToySweepRow};
use rrl_core::{rng, BetaByKind, FeedbackQuery, RewardGrid};
use serde::Serialize;
use wasm_bindgen::prelude::*;

const SIZE: usize = 8;
const HORIZON: usize = 20;
const SLIP: f64 = 0.1;

fn world(seed: u64) -> Result<GridWorld, String> {
    GridWorld::random(&mut rng::stream(seed, &[0x64656d6f]), SIZE, SIZE, HORIZON, SLIP, 0.0).map_err(|e| e.to_string())
}

fn to_json<T: Serialize>(v: &T) -> Result<String, String> {
    serde_json::to_string(v).map_err(|e| e.to_string())
}

#[derive(Serialize)]
pub struct Rollout {
    pub world: GridWorldDoc,
    pub cells: Vec<Cell>,
    pub ret: f64,
}

/// One rollout of the β-soft-optimal policy for reward `theta` from the top-left
/// corner of the world generated by `seed`.
#[wasm_bindgen]
pub fn rollout(seed: u64, theta: Vec<f64>, beta: f64, rollout_seed: u64) -> Result<String, String> {
    let theta: [f64; 4] = theta.try_into().map_err(|_| "theta needs four entries".to_string())?;
    let w = world(seed)?;
    let sol = w.soft_solve(&theta, beta).map_err(|e| e.to_string())?;
    let traj = sample_trajectory(&w, &sol.policy, Cell::new(0, 0), &mut rng::stream(rollout_seed, &[]));
    let ret = trajectory_return(&w, &traj, &theta, 1.0).map_err(|e| e.to_string())?;
    to_json(&Rollout {
        world: w.doc().clone(),
        cells: traj.cells().to_vec(),
        ret,
    })
}

/// Rollout of a random grid reward's soft-optimal policy from a random start.
fn design(w: &GridWorld, grid: &RewardGrid, r: &mut impl Rng) -> Result<Trajectory, String> {
    let theta = grid.point(r.random_range(0..grid.len()));
    let pi = w.soft_solve(theta, 1.0).map_err(|e| e.to_string())?.policy;
    let starts = w.start_cells();
    let s = starts[r.random_range(0..starts.len())];
    Ok(sample_trajectory(w, &pi, s, r))
}

#[derive(Serialize)]
pub struct Fit {
    pub beta_hat: f64,
    pub at_boundary: bool,
    pub answered: usize,
}

/// Simulates `n` comparisons answered by a Boltzmann human at `true_beta`
/// under random known rewards, then fits β̂ by maximum likelihood.
#[wasm_bindgen]
pub fn fit_beta(seed: u64, true_beta: f64, n: usize) -> Result<String, String> {
    if n == 0 {
        return Err("need at least one comparison".into());
    }
    let w = world(seed)?;
    let grid = RewardGrid::with_size(seed, 200);
    let mut r = rng::stream(seed, &[0xf17]);
    let mut human = Responder::new(HumanModel::boltzmann(BetaByKind::uniform(true_beta)), r.random()).map_err(|e| e.to_string())?;
    let mut items = Vec::with_capacity(n);
    for _ in 0..n {
        let theta = *grid.point(r.random_range(0..grid.len()));
        let q = FeedbackQuery::Comparison(design(&w, &grid, &mut r)?, design(&w, &grid, &mut r)?);
        let response = human.respond(&w, &q, &theta).map_err(|e| e.to_string())?;
        items.push(CalibrationItem { theta, response });
    }
    let set = CalibrationSet::new(items).map_err(|e| e.to_string())?;
    let est = fit_beta_mle(&w, &set, &ScalarSearch::default()).map_err(|e| e.to_string())?;
    to_json(&Fit {
        beta_hat: est.value,
        at_boundary: est.at_boundary,
        answered: n,
    })
}

#[derive(Serialize)]
pub struct Crossover {
    pub rows: Vec<ToySweepRow>,
    pub crossover_beta: Option<f64>,
}

/// Expected posterior entropy of a demonstration and of a comparison in the
/// analytical toy model, on 41 log-spaced β values in [0.01, 100].
#[wasm_bindgen]
pub fn toy_crossover(n: usize, k: usize, r1: f64, r2: f64, r3: f64) -> Result<String, String> {
    let p = ToyEnvParams::new(n, k, r1, r2, r3).map_err(|e| e.to_string())?;
    let rows = sweep(&p, &log_space(1e-2, 1e2, 41)).map_err(|e| e.to_string())?;
    let search = CrossoverSearch {
        low: 1e-2,
        high: 1e2,
        ..Default::default()
    };
    let crossover_beta = find_crossover_beta(&p, &search).map_err(|e| e.to_string())?;
    to_json(&Crossover { rows, crossover_beta })
}
