mod common;

use std::fs;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use lrcssp::harness::{
    compute_regret, hpe_diagnostics, oracle_values, report, run_experiment, run_seed, seed_streams, summarize_dir,
    ExperimentConfig, RegretCurve, BLIND_VARIANT, LEARNER_VARIANT,
};
use lrcssp::learner::{run, ContextList, LearnerConfig};
use lrcssp::model::{context_sequence, generate_instance, induce_ssp, Context, ContextKind};
use lrcssp::Error;

fn small_run(episodes: usize, seed: u64) -> (lrcssp::model::LinearCsspModel, Vec<Context>, lrcssp::learner::RunLog) {
    let model = generate_instance(&common::spec(2, 3, 2, 4)).unwrap();
    let contexts = context_sequence(&ContextKind::Uniform, episodes, 2, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    let cfg = LearnerConfig { l_min: 0.1, ..LearnerConfig::default() };
    let log = run(&cfg, &model, &mut ContextList::new(contexts.clone()), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    (model, contexts, log)
}

#[test]
fn regret_arithmetic_on_a_hand_edited_log() {
    let (model, contexts, mut log) = small_run(3, 1);
    let oracle = oracle_values(&model, &contexts).unwrap();
    log.episodes[0].total_loss = 5.0;
    log.episodes[1].total_loss = 7.5;
    log.episodes[1].truncated = true;
    log.episodes[2].total_loss = 2.0;
    let curve = compute_regret(&log, &oracle).unwrap();
    let v: Vec<f64> = oracle.per_episode.iter().map(|o| o.v_star_init).collect();
    assert_eq!(curve.rows[0].regret, 5.0 - v[0]);
    assert_eq!(curve.rows[1].regret, f64::INFINITY);
    assert_eq!(curve.rows[1].cum_regret, 5.0 - v[0]);
    assert_eq!(curve.rows[2].cum_regret, (5.0 - v[0]) + (2.0 - v[2]));
    assert_eq!(curve.truncations, 1);
    assert_eq!(curve.finite_regrets(), vec![5.0 - v[0], 2.0 - v[2]]);

    for ep in &mut log.episodes {
        ep.truncated = true;
    }
    let curve = compute_regret(&log, &oracle).unwrap();
    assert!(curve.rows.iter().all(|r| r.cum_regret == f64::INFINITY));
    assert_eq!(curve.final_cum_regret(), f64::INFINITY);

    let short = oracle_values(&model, &contexts[..2]).unwrap();
    assert!(matches!(compute_regret(&log, &short), Err(Error::Dimension(_))));
}

#[test]
fn cumulative_regret_is_realized_minus_optimal() {
    let (model, contexts, log) = small_run(40, 2);
    let oracle = oracle_values(&model, &contexts).unwrap();
    let curve = compute_regret(&log, &oracle).unwrap();
    let realized: f64 = log.episodes.iter().filter(|e| !e.truncated).map(|e| e.total_loss).sum();
    let optimal: f64 =
        log.episodes.iter().zip(&oracle.per_episode).filter(|(e, _)| !e.truncated).map(|(_, o)| o.v_star_init).sum();
    assert!((curve.final_cum_regret() - (realized - optimal)).abs() < 1e-9);
    let back = RegretCurve::from_csv(&curve.to_csv()).unwrap();
    assert_eq!(back.rows.len(), curve.rows.len());
    for (a, b) in back.rows.iter().zip(&curve.rows) {
        assert!((a.cum_regret - b.cum_regret).abs() <= 1e-8 * b.cum_regret.abs().max(1.0));
        assert_eq!((a.episode, a.steps, a.truncated), (b.episode, b.steps, b.truncated));
    }
}

#[test]
fn one_step_problems_have_unit_hitting_time() {
    let mut sp = common::spec(2, 3, 2, 6);
    sp.gamma_goal = 1.0;
    let model = generate_instance(&sp).unwrap();
    let contexts = context_sequence(&ContextKind::Uniform, 5, 2, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let oracle = oracle_values(&model, &contexts).unwrap();
    assert!((oracle.t_star_emp - 1.0).abs() < 1e-12);
    for (c, opt) in contexts.iter().zip(&oracle.per_episode) {
        let ssp = induce_ssp(&model, c).unwrap();
        let best: Vec<f64> = (0..3).map(|s| (0..2).map(|a| ssp.loss(s, a)).fold(f64::INFINITY, f64::min)).collect();
        assert!((opt.v_star_init - best[opt.initial_state]).abs() < 1e-10);
        assert!((opt.v_star_max - best.iter().copied().fold(0.0, f64::max)).abs() < 1e-10);
    }
}

#[test]
fn oracle_agrees_with_enumeration_and_repeats_fixed_contexts() {
    let model = generate_instance(&common::spec(2, 3, 2, 7)).unwrap();
    let c = Context::new(vec![0.3, 0.7]).unwrap();
    let oracle = oracle_values(&model, &vec![c.clone(); 4]).unwrap();
    let exact = common::enumerated_optimum(&induce_ssp(&model, &c).unwrap());
    let first = &oracle.per_episode[0];
    assert!((first.v_star_init - exact[first.initial_state]).abs() < 1e-8);
    assert!((oracle.b_star_emp - exact.iter().copied().fold(0.0, f64::max)).abs() < 1e-8);
    assert!(oracle.per_episode.iter().all(|o| o == first));
}

#[test]
fn diagnostics_of_clean_runs() {
    let (model, contexts, log) = small_run(30, 3);
    let oracle = oracle_values(&model, &contexts).unwrap();
    let hpe = hpe_diagnostics(&log, &oracle, 0.1).unwrap();
    assert!(hpe.identities_hold());
    assert_eq!(hpe.violations, 0);
    assert_eq!(hpe.intervals, log.totals.intervals);
    assert_eq!(hpe.pair_triggers.iter().sum::<u64>(), log.episodes.iter().map(|e| e.unknown_triggers).sum::<u64>());

    let mut tampered = log.clone();
    let step = tampered.episodes.iter_mut().flat_map(|e| e.trace.iter_mut()).find(|s| s.known);
    match step {
        Some(s) => s.known = false,
        None => tampered.episodes[0].trace[0].known = !tampered.episodes[0].trace[0].known,
    }
    let hpe = hpe_diagnostics(&tampered, &oracle, 0.1).unwrap();
    assert!(hpe.known_mismatches >= 1);
    assert!(!hpe.identities_hold());
}

fn config_text(out: &str) -> String {
    format!(
        r#"
seeds = [0, 1]
output_dir = "{out}"

[generator]
d = 2
n_states = 3
n_actions = 2
gamma_goal = 0.2
l_min_target = 0.1
seed = 4

[contexts]
kind = "uniform"
episodes = 25

[learner]
l_min = 0.1

[baselines]
context_blind = true
"#
    )
}

#[test]
fn config_round_trip_and_rejections() {
    let cfg = ExperimentConfig::from_toml(&config_text("runs/x")).unwrap();
    let canonical = cfg.to_canonical_toml();
    let back = ExperimentConfig::from_toml(&canonical).unwrap();
    assert_eq!(back, cfg);
    assert_eq!(back.to_canonical_toml(), canonical);

    let unknown = config_text("runs/x").replace("[learner]", "[learner]\nbogus = 1");
    assert!(matches!(ExperimentConfig::from_toml(&unknown), Err(Error::Config(_))));
    let dup = config_text("runs/x").replace("seeds = [0, 1]", "seeds = [3, 3]");
    assert!(matches!(ExperimentConfig::from_toml(&dup), Err(Error::Config(_))));
    let fixed = config_text("runs/x").replace("kind = \"uniform\"", "kind = \"fixed\"");
    assert!(matches!(ExperimentConfig::from_toml(&fixed), Err(Error::Config(_))));

    let shifted = cfg.clone().with_seed_offset(10).unwrap();
    assert_eq!(shifted.seeds, vec![10, 11]);
    let huge = ExperimentConfig { seeds: vec![u64::MAX], ..cfg };
    assert!(huge.with_seed_offset(1).is_err());
}

#[test]
fn variants_of_a_seed_share_their_streams() {
    let cfg = ExperimentConfig::from_toml(&config_text("runs/x")).unwrap();
    let model = cfg.model().unwrap();
    let (oracle, outcomes) = run_seed(&cfg, &model, 5).unwrap();
    assert_eq!(oracle.seed, 5);
    let names: Vec<&str> = outcomes.iter().map(|o| o.variant.as_str()).collect();
    assert_eq!(names, vec![LEARNER_VARIANT, BLIND_VARIANT]);
    let opt = |o: &lrcssp::harness::RunOutcome| o.curve.rows.iter().map(|r| r.optimal_value).collect::<Vec<_>>();
    assert_eq!(opt(&outcomes[0]), opt(&outcomes[1]));

    let (mut ctx_a, mut env_a) = seed_streams(5);
    let (mut ctx_b, mut env_b) = seed_streams(5);
    use rand::Rng;
    assert_eq!(ctx_a.random::<u64>(), ctx_b.random::<u64>());
    assert_eq!(env_a.random::<u64>(), env_b.random::<u64>());
    assert_ne!(seed_streams(5).0.random::<u64>(), seed_streams(5).1.random::<u64>());
}

#[test]
fn experiment_artifacts_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("exp");
    let cfg = ExperimentConfig::from_toml(&config_text(out.to_str().unwrap())).unwrap();
    let summary = run_experiment(&cfg, &out).unwrap();
    assert_eq!(summary.variants.len(), 2);
    for v in &summary.variants {
        assert_eq!(v.runs.len(), 2);
        for r in &v.runs {
            let csv = fs::read_to_string(out.join(&v.variant).join(format!("seed_{}", r.seed)).join("regret.csv")).unwrap();
            let curve = RegretCurve::from_csv(&csv).unwrap();
            assert_eq!(curve.rows.len(), 25);
            let last = curve.rows.last().unwrap().cum_regret;
            assert_eq!(r.final_cum_regret, last.is_finite().then_some(last));
        }
    }
    assert_eq!(summarize_dir(&out).unwrap(), summary);
    assert_eq!(report(&out).unwrap(), summary);
    assert!(out.join("plot_lr_cssp.csv").is_file());
    assert_eq!(fs::read_to_string(out.join("model.sha256")).unwrap().trim(), cfg.model().unwrap().fingerprint());

    fs::write(out.join("summary.json"), "{}").unwrap();
    assert!(matches!(report(&out), Err(Error::Config(_))));
    let empty = dir.path().join("empty");
    fs::create_dir_all(&empty).unwrap();
    assert!(matches!(report(&empty), Err(Error::Config(_))));
}

#[test]
fn missing_model_path_is_a_config_error() {
    let text = config_text("runs/x").replace("seeds = [0, 1]", "seeds = [0]\nmodel_path = \"/nonexistent/model.json\"");
    let cfg = ExperimentConfig::from_toml(&text).unwrap();
    assert!(matches!(cfg.model(), Err(Error::Config(_))));
}
