mod common;

use approx::assert_abs_diff_eq;
use common::*;
use proptest::prelude::*;
use rand::Rng;
use rrl_core::mdp::{
    evaluate_policy, sample_trajectory, trajectory_return, Action, Cell, GridWorld, TabularPolicy, Trajectory,
};

#[test]
fn soft_policy_matches_brute_force_recursion() {
    let w = world(3, 3, vec![0, 1, 2, 3, 0, 1, 2, 3, 0], 4, 0.1, 5.0);
    let theta = [0.3, -0.5, 0.8, -0.1];
    let beta = 5.0;
    let sol = w.soft_solve(&theta, beta).unwrap();
    for t in 0..4 {
        for s in 0..9 {
            if s == w.goal_index() {
                continue;
            }
            let pi = softmax(beta, &brute_soft_q(&w, &theta, beta, t, s));
            for a in 0..4 {
                assert_abs_diff_eq!(sol.policy.prob(t, s, a), pi[a], epsilon = 1e-10);
            }
            assert_abs_diff_eq!(sol.value(t, s), brute_soft_v(&w, &theta, beta, t, s), epsilon = 1e-9);
        }
    }
}

#[test]
fn tiny_beta_gives_uniform_policy() {
    let mut r = rng(1);
    let w = random_world(&mut r, 4, 6, 0.1, 10.0);
    let sol = w.soft_solve(&[5.0, -5.0, 2.0, 0.0], 1e-8).unwrap();
    let max_dev = sol.policy.probs().iter().map(|p| (p - 0.25).abs()).fold(0.0, f64::max);
    assert!(max_dev < 1e-6, "deviation {max_dev}");
}

#[test]
fn large_beta_argmax_matches_hard_greedy() {
    // Soft values carry an entropy bonus of at most ln 4 per remaining step,
    // so the argmax is pinned wherever the optimal gap exceeds twice that total.
    let margin = 2.0 * 6.0 * 4f64.ln();
    let mut r = rng(2);
    let mut checked = 0;
    for _ in 0..20 {
        let w = random_world(&mut r, 4, 6, 0.1, 0.0);
        let theta = random_theta(&mut r).map(|x| 200.0 * x);
        let soft = w.soft_solve(&theta, 1e3).unwrap();
        let hard = w.hard_solve(&theta).unwrap();
        for t in 0..6 {
            for s in 0..16 {
                if s == w.goal_index() {
                    continue;
                }
                let row = &hard.q[(t * 16 + s) * 4..(t * 16 + s) * 4 + 4];
                let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut sorted = row.to_vec();
                sorted.sort_by(|a, b| b.total_cmp(a));
                if sorted[0] - sorted[1] < margin {
                    continue;
                }
                checked += 1;
                let hard_arg = row.iter().position(|&q| q == best).unwrap();
                let p = soft.policy.row(t, s);
                let soft_arg = (0..4).max_by(|&a, &b| p[a].total_cmp(&p[b])).unwrap();
                assert_eq!(soft_arg, hard_arg, "t={t} s={s}");
            }
        }
    }
    assert!(checked > 20 * 6 * 15 / 2, "only {checked} states had a clear optimum");
}

/// Best return over every action sequence from `start` without slip.
fn best_path(w: &GridWorld, theta: &[f64; 4], s: usize, steps_left: usize) -> f64 {
    if steps_left == 0 || s == w.goal_index() {
        return 0.0;
    }
    (0..4)
        .map(|a| {
            let to = successors(w, s, a)[0].0;
            landing_reward(w, theta, to) + best_path(w, theta, to, steps_left - 1)
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

#[test]
fn greedy_without_slip_matches_exhaustive_path_search() {
    let mut r = rng(3);
    let w = random_world(&mut r, 4, 7, 0.0, 3.0);
    let theta = [-0.2, 0.4, -0.6, 0.1];
    let hard = w.hard_solve(&theta).unwrap();
    for s in 0..16 {
        if s == w.goal_index() {
            continue;
        }
        let oracle = best_path(&w, &theta, s, 7);
        assert_abs_diff_eq!(hard.v[s], oracle, epsilon = 1e-9);
        // rolling the greedy policy realizes the optimum
        let traj = sample_trajectory(&w, &hard.policy, w.cell(s), &mut r);
        let ret: f64 = traj.step_rewards(&w, &theta).iter().sum();
        assert_abs_diff_eq!(ret, oracle, epsilon = 1e-9);
    }
    // all-negative tiles with a positive bonus: the greedy agent heads for the goal
    let costly = [-0.1; 4];
    let hard = w.hard_solve(&costly).unwrap();
    let traj = sample_trajectory(&w, &hard.policy, Cell::new(0, 0), &mut r);
    assert_eq!(traj.last(), w.goal());
    assert_eq!(traj.len(), 6, "shortest path from the corner is 6 moves");
}

fn random_policy(r: &mut impl Rng, w: &GridWorld) -> TabularPolicy {
    let (t, s) = (w.horizon(), w.n_states());
    let mut probs = Vec::with_capacity(t * s * 4);
    for _ in 0..t * s {
        let row: Vec<f64> = (0..4).map(|_| r.random::<f64>() + 1e-3).collect();
        let z: f64 = row.iter().sum();
        probs.extend(row.iter().map(|x| x / z));
    }
    TabularPolicy::new(t, s, 4, probs).unwrap()
}

#[test]
fn exact_evaluation_matches_monte_carlo() {
    let mut r = rng(4);
    let w = world(3, 3, vec![0, 1, 2, 3, 0, 1, 2, 3, 0], 4, 0.1, 2.0);
    let theta = [1.0, -0.5, 0.25, 0.0];
    let pi = random_policy(&mut r, &w);
    let exact = w.policy_return(&pi, &theta).unwrap();
    let starts = w.start_cells();
    let n = 1_000_000;
    let (mut sum, mut sq) = (0.0, 0.0);
    for _ in 0..n {
        let start = starts[r.random_range(0..starts.len())];
        let g: f64 = sample_trajectory(&w, &pi, start, &mut r).step_rewards(&w, &theta).iter().sum();
        sum += g;
        sq += g * g;
    }
    let mean = sum / n as f64;
    let se = ((sq / n as f64 - mean * mean) / n as f64).sqrt();
    assert!((mean - exact).abs() < 3.0 * se, "exact {exact}, mc {mean} ± {se}");
}

#[test]
fn stationary_table_evaluation_equals_start_averaged_value() {
    let mut r = rng(5);
    let w = random_world(&mut r, 4, 8, 0.1, 4.0);
    let theta = random_theta(&mut r);
    let d = w.dynamics();
    let expected = d.expected_rewards(&w.transition_rewards(&theta));
    let table: Vec<f64> = (0..w.horizon()).flat_map(|_| expected.iter().copied()).collect();
    let hard = w.hard_solve(&theta).unwrap();
    let v0: f64 = d.start().iter().zip(&hard.v).map(|(p, v)| p * v).sum();
    assert_abs_diff_eq!(evaluate_policy(d, &hard.policy, &table).unwrap(), v0, epsilon = 1e-9);

    // the soft value is the return plus the policy's entropy bonus
    let soft = w.soft_solve(&theta, 2.0).unwrap();
    let (ns, na) = (d.n_states(), 4);
    let entropy_table: Vec<f64> = (0..w.horizon() * ns * na)
        .map(|i| expected[i % (ns * na)] - soft.log_policy[i])
        .collect();
    let v0: f64 = d.start().iter().zip(&soft.v).map(|(p, v)| p * v).sum();
    assert_abs_diff_eq!(evaluate_policy(d, &soft.policy, &entropy_table).unwrap(), v0, epsilon = 1e-9);
    assert!(evaluate_policy(d, &soft.policy, &table[1..]).is_err());
}

#[test]
fn greedy_beats_random_policies() {
    let mut r = rng(6);
    let w = random_world(&mut r, 4, 8, 0.1, 2.0);
    let theta = random_theta(&mut r);
    let best = w.policy_return(&w.hard_solve(&theta).unwrap().policy, &theta).unwrap();
    for _ in 0..100 {
        let pi = random_policy(&mut r, &w);
        assert!(best >= w.policy_return(&pi, &theta).unwrap() - 1e-12);
    }
}

#[test]
fn trajectory_return_examples() {
    // corridor colored 0,1,2 then the goal
    let w = world(4, 1, vec![0, 1, 2, 3], 5, 0.0, 0.0);
    let traj = Trajectory::new(
        vec![Cell::new(0, 0), Cell::new(1, 0), Cell::new(2, 0), Cell::new(1, 0)],
        vec![Action::Right, Action::Right, Action::Left],
    )
    .unwrap();
    // landings: color 1, color 2, color 1
    let theta = [0.0, 2.0, 4.0, 0.0];
    assert_abs_diff_eq!(trajectory_return(&w, &traj, &theta, 1.0).unwrap(), 8.0);
    let theta = [0.0, 2.0, 8.0, 0.0];
    // 2 + 0.5 * 8 + 0.25 * 2
    assert_abs_diff_eq!(trajectory_return(&w, &traj, &theta, 0.5).unwrap(), 6.5);
    assert_eq!(trajectory_return(&w, &traj, &[0.0; 4], 0.7).unwrap(), 0.0);

    // rewards [2, 4, 8] at discount 0.5 sum to 2 + 2 + 2
    let w = world(5, 1, vec![0, 1, 2, 0, 0], 5, 0.0, 0.0);
    let traj = Trajectory::new(
        vec![Cell::new(0, 0), Cell::new(1, 0), Cell::new(2, 0), Cell::new(3, 0)],
        vec![Action::Right; 3],
    )
    .unwrap();
    assert_abs_diff_eq!(trajectory_return(&w, &traj, &[8.0, 2.0, 4.0, 0.0], 0.5).unwrap(), 6.0);

    // entering the goal pays the bonus
    let w = world(2, 1, vec![0, 0], 3, 0.0, 250.0);
    let traj = Trajectory::new(vec![Cell::new(0, 0), Cell::new(1, 0)], vec![Action::Right]).unwrap();
    assert_eq!(trajectory_return(&w, &traj, &[1.0; 4], 1.0).unwrap(), 250.0);
    assert!(trajectory_return(&w, &Trajectory::start_at(Cell::new(0, 0)), &[1.0; 4], 1.0).is_err());
    assert!(trajectory_return(&w, &traj, &[1.0; 4], 1.5).is_err());
}

#[test]
fn world_json_round_trip_uses_documented_fields() {
    let mut r = rng(7);
    let w = random_world(&mut r, 3, 4, 0.1, 250.0);
    let v: serde_json::Value = serde_json::to_value(&w).unwrap();
    let mut keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
    keys.sort();
    assert_eq!(keys, ["colors", "completion_bonus", "goal", "height", "horizon", "slip_prob", "width"]);
    let back: GridWorld = serde_json::from_value(v).unwrap();
    assert_eq!(back, w);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn soft_policy_rows_are_distributions(
        seed in any::<u64>(),
        beta in prop_oneof![Just(0.0), 1e-3f64..1e3],
        slip in 0.0f64..0.5,
    ) {
        let mut r = rng(seed);
        let w = random_world(&mut r, 3, 5, slip, 10.0);
        let theta = random_theta(&mut r);
        let sol = w.soft_solve(&theta, beta).unwrap();
        for row in sol.policy.probs().chunks(4) {
            prop_assert!(row.iter().all(|&p| p >= 0.0));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        prop_assert!(sol.v.iter().all(|v| v.is_finite()));
    }
}
