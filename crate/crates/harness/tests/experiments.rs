use rrl_core::bias::Bias;
use rrl_core::FeedbackKind;
use rrl_harness::ablation::run_active_ablation;
use rrl_harness::config::{
    load_config, ActiveAblationConfig, BiasSweepConfig, BoltzmannSweepConfig, DiagnosticsConfig, ExperimentConfig,
    Method, SimSettings, ToyConfig,
};
use rrl_harness::diagnostics::run_diagnostics;
use rrl_harness::output::{write_csv, Manifest, SCHEMA};
use rrl_harness::queue::run_ordered;
use rrl_harness::sweeps::{beta_label, run_bias_sweep, run_boltzmann_sweep, SweepRow};
use rrl_harness::toy::run_toy;
use rrl_harness::HarnessError;

fn tiny_sim(threads: usize) -> SimSettings {
    SimSettings {
        width: 4,
        height: 4,
        horizon: 8,
        grid_size: 60,
        n_rewards: 2,
        run_seeds: vec![0, 1],
        calibration_rewards: 2,
        calibration_queries: 3,
        inference_queries: 3,
        threads,
        ..Default::default()
    }
}

fn tiny_sweep(threads: usize) -> BoltzmannSweepConfig {
    BoltzmannSweepConfig {
        sim: tiny_sim(threads),
        betas: vec![0.1, 1.0],
        ..Default::default()
    }
}

#[test]
fn sweeps_are_deterministic_and_thread_independent() {
    let mut streamed = Vec::new();
    let a = run_boltzmann_sweep(&tiny_sweep(1), &mut |rows| {
        streamed.extend_from_slice(rows);
        Ok(())
    })
    .unwrap();
    let b = run_boltzmann_sweep(&tiny_sweep(3), &mut |_| Ok(())).unwrap();
    assert!(a.failures.is_empty());
    assert_eq!(a.rows, b.rows);
    assert_eq!(a.rows, streamed);
    // 2 betas × 3 kinds × 2 rewards × 2 seeds, 3 methods each
    assert_eq!(a.cells, 24);
    assert_eq!(a.rows.len(), 72);

    let dir = tempfile::tempdir().unwrap();
    let (p, q) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    write_csv(&p, "runs", &a.rows).unwrap();
    write_csv(&q, "runs", &b.rows).unwrap();
    let (x, y) = (std::fs::read(&p).unwrap(), std::fs::read(&q).unwrap());
    assert_eq!(x, y);
    let text = String::from_utf8(x).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), format!("# {SCHEMA} runs"));
    assert!(lines.next().unwrap().starts_with("cell,kind,reward_index,seed,theta_index,method,beta_used,beta_hat"));
}

#[test]
fn default_and_oracle_coincide_at_unit_beta() {
    let r = run_boltzmann_sweep(&tiny_sweep(1), &mut |_| Ok(())).unwrap();
    for k in FeedbackKind::ALL {
        let d: Vec<&SweepRow> = r.select(&beta_label(1.0), k, Method::Default);
        let o: Vec<&SweepRow> = r.select(&beta_label(1.0), k, Method::Oracle);
        assert_eq!(d.len(), 4);
        for (d, o) in d.iter().zip(&o) {
            assert_eq!(d.regret.to_bits(), o.regret.to_bits());
        }
    }
    let summary = r.summary();
    assert_eq!(summary.len(), 18);
    assert!(summary.iter().all(|s| s.n == 4 && s.regret_mean.is_finite()));
}

#[test]
fn bias_sweep_separates_methods_only_where_bias_acts() {
    let cfg = BiasSweepConfig {
        sim: tiny_sim(1),
        biases: vec![Bias::Optimism(40.0)],
        ..Default::default()
    };
    let r = run_bias_sweep(&cfg, &mut |_| Ok(())).unwrap();
    // optimism leaves comparisons and e-stops untouched, so the oracle is the default
    for k in [FeedbackKind::Comparison, FeedbackKind::EStop] {
        let d = r.regret("optimism=40", k, Method::Default).mean;
        let o = r.regret("optimism=40", k, Method::Oracle).mean;
        assert_eq!(d.to_bits(), o.to_bits());
    }
    let bad = BiasSweepConfig {
        biases: vec![Bias::Myopia(2.0)],
        ..cfg
    };
    assert!(run_bias_sweep(&bad, &mut |_| Ok(())).is_err());
}

#[test]
fn sink_errors_abort_the_run() {
    let err = run_boltzmann_sweep(&tiny_sweep(1), &mut |_| Err(HarnessError::Config("disk full".into()))).unwrap_err();
    assert!(err.to_string().contains("disk full"));
}

#[test]
fn ablation_logs_every_round_of_every_cell() {
    let cfg = ActiveAblationConfig {
        sim: tiny_sim(1),
        seeds: vec![0, 1],
        rounds: 2,
        comparison_rollouts: 3,
        estop_rollouts: 3,
        ..Default::default()
    };
    let r = run_active_ablation(&cfg, &mut |_| Ok(())).unwrap();
    assert!(r.failures.is_empty(), "{:?}", r.failures);
    assert_eq!(r.rows.len(), 2 * 4 * 2);
    for s in r.summary() {
        assert_eq!(s.seeds, 2);
        assert!((s.frac_demonstration + s.frac_comparison + s.frac_estop - 1.0).abs() < 1e-12);
    }
    let again = run_active_ablation(&cfg, &mut |_| Ok(())).unwrap();
    assert_eq!(r.rows, again.rows);
}

#[test]
fn unbiased_diagnostics_recover_the_true_beta() {
    let cfg = DiagnosticsConfig {
        sim: tiny_sim(1),
        n_rewards: 3,
        biases: vec![Bias::None, Bias::Myopia(0.5)],
        kl_candidates: 10,
        ..Default::default()
    };
    let r = run_diagnostics(&cfg).unwrap();
    assert!(r.failures.is_empty());
    let none = &r.summary[0];
    assert!((none.beta_hat_mean - 1.0).abs() < 1e-3, "{none:?}");
    assert!(none.beta_hat_variance < 1e-6);
    assert_eq!(none.true_kl_rank, 0);
    assert_eq!(r.fits.len(), 6);
    assert_eq!(r.kl.iter().filter(|k| k.is_true).count(), 2);
}

#[test]
fn toy_experiment_finds_the_documented_crossover() {
    let (rows, s) = run_toy(&ToyConfig::default()).unwrap();
    assert_eq!(rows.len(), 41);
    assert!(s.crossover_beta.is_some_and(|b| (0.1..=10.0).contains(&b)));
    let bad = ToyConfig {
        beta_low: 0.0,
        ..Default::default()
    };
    assert!(matches!(run_toy(&bad), Err(HarnessError::Config(_))));
}

#[test]
fn configs_reject_unknown_or_invalid_settings() {
    assert!(load_config::<BoltzmannSweepConfig>(Some(r#"{"betaz": [1]}"#), &[]).is_err());
    assert!(load_config::<BoltzmannSweepConfig>(None, &["methods=[\"median\"]".into()]).is_err());
    assert!(load_config::<BoltzmannSweepConfig>(None, &["no_equals_sign".into()]).is_err());
    let c: BoltzmannSweepConfig = load_config(Some(r#"{"sim": {"grid_size": 1}}"#), &[]).unwrap();
    assert!(matches!(run_boltzmann_sweep(&c, &mut |_| Ok(())), Err(HarnessError::Config(_))));
    let c: BoltzmannSweepConfig = load_config(None, &["betas=[-1]".into()]).unwrap();
    assert!(run_boltzmann_sweep(&c, &mut |_| Ok(())).is_err());
    // defaults round-trip through JSON
    let d = ActiveAblationConfig::default();
    let back: ActiveAblationConfig = load_config(Some(&serde_json::to_string(&d).unwrap()), &[]).unwrap();
    assert_eq!(back, d);
}

#[test]
fn manifest_records_the_config_hash() {
    let cfg = ExperimentConfig::ToyCrossover(ToyConfig::default());
    let hash = cfg.hash();
    let mut m = Manifest::new(cfg, serde_json::json!({"ok": true}));
    m.outputs = vec!["entropy.csv".into()];
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("manifest.json");
    m.write(&p).unwrap();
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap();
    assert_eq!(v["config_hash"], hash);
    assert_eq!(v["experiment"], "toy-crossover");
    assert_eq!(v["config"]["experiment"], "toy-crossover");
    assert_eq!(v["summary"]["ok"], true);
}

#[test]
fn queue_preserves_job_order() {
    let jobs: Vec<u64> = (0..50).collect();
    for threads in [1, 4] {
        let mut seen = Vec::new();
        run_ordered(&jobs, threads, |_, j| j * j, |i, r| seen.push((i, r)));
        assert_eq!(seen, jobs.iter().map(|&j| (j as usize, j * j)).collect::<Vec<_>>());
    }
}
