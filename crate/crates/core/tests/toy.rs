use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use rrl_core::toy::{
    comparison_expected_posterior_entropy, demo_expected_posterior_entropy, entropy_gap, find_crossover_beta, sweep,
    CrossoverSearch, ToyEnvParams,
};

fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|x| x * x.ln()).sum::<f64>()
}

/// Expected posterior entropy by enumerating every answer, with a uniform
/// prior and `P(answer | t)` a softmax over the offered choices.
fn enumerate(p: &ToyEnvParams, beta: f64, choices: &[usize]) -> f64 {
    let n_t = p.n_params();
    let lik: Vec<Vec<f64>> = (0..n_t)
        .map(|t| {
            let m = choices.iter().map(|&c| beta * p.reward(c, t)).fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = choices.iter().map(|&c| (beta * p.reward(c, t) - m).exp()).collect();
            let z: f64 = e.iter().sum();
            e.iter().map(|x| x / z).collect()
        })
        .collect();
    let mut total = 0.0;
    for y in 0..choices.len() {
        let joint: Vec<f64> = lik.iter().map(|row| row[y] / n_t as f64).collect();
        let py: f64 = joint.iter().sum();
        if py > 0.0 {
            total += py * entropy(&joint.iter().map(|j| j / py).collect::<Vec<_>>());
        }
    }
    total
}

fn demo_oracle(p: &ToyEnvParams, beta: f64) -> f64 {
    enumerate(p, beta, &(0..p.n_choices()).collect::<Vec<_>>())
}

/// Comparison of direction 0's two extreme choices.
fn comparison_oracle(p: &ToyEnvParams, beta: f64) -> f64 {
    enumerate(p, beta, &[0, 1])
}

#[test]
fn reward_table_layout() {
    let p = ToyEnvParams::new(2, 1, 3.0, 2.0, 1.0).unwrap();
    assert_eq!(p.n_choices(), 8);
    // direction 0 choices under θ_0^+ and θ_0^-
    let plus: Vec<f64> = (0..4).map(|c| p.reward(c, 0)).collect();
    let minus: Vec<f64> = (0..4).map(|c| p.reward(c, 1)).collect();
    assert_eq!(plus, [3.0, -3.0, 2.0, -2.0]);
    assert_eq!(minus, [-3.0, 3.0, -2.0, 2.0]);
    assert!((4..8).all(|c| p.reward(c, 0) == 1.0));
}

#[test]
fn documented_setting_matches_enumeration() {
    let p = ToyEnvParams::new(2, 5, 3.0, 2.0, 1.0).unwrap();
    assert_abs_diff_eq!(demo_expected_posterior_entropy(&p, 1.0).unwrap(), demo_oracle(&p, 1.0), epsilon = 1e-9);
    assert_abs_diff_eq!(comparison_expected_posterior_entropy(&p, 1.0).unwrap(), comparison_oracle(&p, 1.0), epsilon = 1e-9);
}

#[test]
fn no_conservative_choices_leaves_the_extreme_term() {
    let p = ToyEnvParams::new(3, 0, 3.0, 2.0, 1.0).unwrap();
    for beta in [0.1, 1.0, 5.0] {
        let b: f64 = beta;
        let w = [b * 3.0, -b * 3.0, b, b, b, b];
        let m = w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = w.iter().map(|x| (x - m).exp()).collect();
        let z: f64 = e.iter().sum();
        let h = entropy(&e.iter().map(|x| x / z).collect::<Vec<_>>());
        assert_abs_diff_eq!(demo_expected_posterior_entropy(&p, beta).unwrap(), h, epsilon = 1e-12);
    }
}

#[test]
fn single_direction_comparisons_always_win() {
    for k in [1, 3, 6] {
        let p = ToyEnvParams::new(1, k, 3.0, 2.0, 1.0).unwrap();
        for beta in [1e-3, 0.01, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0] {
            let d = demo_expected_posterior_entropy(&p, beta).unwrap();
            let c = comparison_expected_posterior_entropy(&p, beta).unwrap();
            assert!(c < d, "K={k} β={beta}: {c} vs {d}");
            let z = (3.0 * beta as f64).exp() + (-3.0 * beta as f64).exp();
            assert_abs_diff_eq!(c, entropy(&[(3.0 * beta).exp() / z, (-3.0 * beta).exp() / z]), epsilon = 1e-12);
        }
        assert_eq!(find_crossover_beta(&p, &CrossoverSearch::default()).unwrap(), None);
    }
    // identical choice sets
    let p = ToyEnvParams::new(1, 0, 3.0, 2.0, 1.0).unwrap();
    for beta in [0.0, 0.3, 3.0] {
        assert_abs_diff_eq!(entropy_gap(&p, beta).unwrap(), 0.0, epsilon = 1e-12);
    }
    assert_eq!(find_crossover_beta(&p, &CrossoverSearch::default()).unwrap(), None);
}

#[test]
fn crossover_matches_a_dense_scan() {
    let p = ToyEnvParams::new(3, 20, 4.0, 3.0, 0.5).unwrap();
    let found = find_crossover_beta(&p, &CrossoverSearch::default()).unwrap().expect("crossover");
    let n = 10_000;
    let grid: Vec<f64> = (0..n).map(|i| (-3.0 + 6.0 * i as f64 / (n - 1) as f64) * std::f64::consts::LN_10).map(f64::exp).collect();
    let sign = |b: f64| entropy_gap(&p, b).unwrap() > 0.0;
    let first = sign(grid[0]);
    let flip = grid.windows(2).find(|w| sign(w[1]) != first).map(|w| w[1]).expect("scan flip");
    assert!((found - flip).abs() < 1e-3, "{found} vs {flip}");
    assert!((0.1..=10.0).contains(&found));
}

#[test]
fn crossover_rejects_bad_ranges() {
    let p = ToyEnvParams::new(2, 5, 3.0, 2.0, 1.0).unwrap();
    let bad = CrossoverSearch {
        low: 1.0,
        high: 0.5,
        ..Default::default()
    };
    assert!(find_crossover_beta(&p, &bad).is_err());
    assert!(demo_expected_posterior_entropy(&p, -1.0).is_err());
}

#[test]
fn sweep_rows_carry_both_entropies() {
    let p = ToyEnvParams::new(2, 5, 3.0, 2.0, 1.0).unwrap();
    let rows = sweep(&p, &[0.0, 1.0]).unwrap();
    assert_abs_diff_eq!(rows[0].demo_entropy, 4f64.ln(), epsilon = 1e-12);
    assert_abs_diff_eq!(rows[1].comp_entropy, comparison_oracle(&p, 1.0), epsilon = 1e-9);
    let v = serde_json::to_value(rows[1]).unwrap();
    assert_eq!(v["beta"], 1.0);
}

fn params() -> impl Strategy<Value = ToyEnvParams> {
    (1usize..=4, 0usize..=6, 0.05f64..3.0, 0.05f64..3.0, 0.05f64..3.0).prop_map(|(n, k, r3, d2, d1)| {
        ToyEnvParams::new(n, k, r3 + d2 + d1, r3 + d2, r3).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn closed_forms_match_enumeration(p in params(), lb in -3.0f64..1.5) {
        let beta = 10f64.powf(lb);
        prop_assert!((demo_expected_posterior_entropy(&p, beta).unwrap() - demo_oracle(&p, beta)).abs() < 1e-9);
        prop_assert!((comparison_expected_posterior_entropy(&p, beta).unwrap() - comparison_oracle(&p, beta)).abs() < 1e-9);
    }

    #[test]
    fn entropies_are_bounded_and_non_increasing(p in params()) {
        let top = (2.0 * p.n() as f64).ln();
        prop_assert!((demo_expected_posterior_entropy(&p, 0.0).unwrap() - top).abs() < 1e-12);
        prop_assert!((comparison_expected_posterior_entropy(&p, 0.0).unwrap() - top).abs() < 1e-12);
        let mut prev = (top, top);
        for i in 0..=60 {
            let beta = 10f64.powf(-3.0 + 0.1 * i as f64);
            let d = demo_expected_posterior_entropy(&p, beta).unwrap();
            let c = comparison_expected_posterior_entropy(&p, beta).unwrap();
            prop_assert!((-1e-12..=top + 1e-12).contains(&d) && (-1e-12..=top + 1e-12).contains(&c));
            prop_assert!(d <= prev.0 + 1e-12 && c <= prev.1 + 1e-12, "β={} d={} c={} prev={:?}", beta, d, c, prev);
            prev = (d, c);
        }
    }
}
