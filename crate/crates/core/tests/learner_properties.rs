mod common;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use lrcssp::estimation::{ConfidenceShape, Estimates, SaStatistics};
use lrcssp::harness::oracle_values;
use lrcssp::learner::{
    auto_epsilon, evi_plan, min_over_l1_ball, run, run_with, AdaptiveContexts, ContextList, ContextMode,
    LearnerConfig, Trigger,
};
use lrcssp::model::{context_sequence, generate_instance, Context, ContextKind};
use lrcssp::Error;

/// `min qᵀv` over `{q ≥ 0, Σq ≤ 1, ‖q − center‖₁ ≤ r}` in three dimensions,
/// by enumerating the vertices of the polytope.
fn l1_ball_lp_oracle(center: [f64; 3], r: f64, v: [f64; 3]) -> f64 {
    let mut rows: Vec<([f64; 3], f64)> = Vec::new();
    for i in 0..3 {
        let mut a = [0.0; 3];
        a[i] = -1.0;
        rows.push((a, 0.0));
    }
    rows.push(([1.0; 3], 1.0));
    for signs in 0..8 {
        let sigma: Vec<f64> = (0..3).map(|i| if signs >> i & 1 == 1 { 1.0 } else { -1.0 }).collect();
        let a = [sigma[0], sigma[1], sigma[2]];
        let b = r + (0..3).map(|i| sigma[i] * center[i]).sum::<f64>();
        rows.push((a, b));
    }
    let feasible = |q: &Vector3<f64>| rows.iter().all(|(a, b)| a[0] * q[0] + a[1] * q[1] + a[2] * q[2] <= b + 1e-9);
    let mut best = f64::INFINITY;
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            for k in j + 1..rows.len() {
                let m = Matrix3::from_rows(&[
                    Vector3::from(rows[i].0).transpose(),
                    Vector3::from(rows[j].0).transpose(),
                    Vector3::from(rows[k].0).transpose(),
                ]);
                let rhs = Vector3::new(rows[i].1, rows[j].1, rows[k].1);
                if let Some(q) = m.lu().solve(&rhs) {
                    if q.iter().all(|x| x.is_finite()) && feasible(&q) {
                        best = best.min(q[0] * v[0] + q[1] * v[1] + q[2] * v[2]);
                    }
                }
            }
        }
    }
    best
}

proptest! {
    #[test]
    fn l1_ball_minimizer_matches_lp_oracle(
        w in proptest::collection::vec(0.0f64..1.0, 4),
        r in 0.0f64..1.5,
        v in proptest::collection::vec(0.0f64..5.0, 3),
    ) {
        let total: f64 = w.iter().sum::<f64>().max(1e-9);
        let center = [w[0] / total, w[1] / total, w[2] / total];
        let mut out = [0.0; 3];
        let mut order = Vec::new();
        min_over_l1_ball(&center, r, &v, &mut order, &mut out);
        let got: f64 = out.iter().zip(&v).map(|(q, x)| q * x).sum();
        let expect = l1_ball_lp_oracle(center, r, [v[0], v[1], v[2]]);
        prop_assert!((got - expect).abs() < 1e-9, "got {got}, oracle {expect}");
        prop_assert!(out.iter().all(|x| *x >= 0.0));
        prop_assert!(out.iter().zip(&center).map(|(a, b)| (a - b).abs()).sum::<f64>() <= r + 1e-12);
    }
}

/// Estimates of a `d = 1` problem with prescribed centres and radii. With
/// `V̄ = I` the context norm is one, so the radii are the betas themselves.
fn scalar_estimates(n: usize, m: usize, losses: &[f64], centers: &[Vec<f64>], loss_r: f64, dyn_r: f64) -> Estimates {
    let shape = ConfidenceShape { d: 1, n_states: n, n_actions: m };
    let stats: Vec<_> = (0..n * m).map(|_| SaStatistics::new(1, n, 1.0)).collect();
    let mut est = Estimates::compute(&stats, shape, 0.1).unwrap();
    for (i, pair) in est.pairs.iter_mut().enumerate() {
        pair.l_hat = DVector::from_element(1, losses[i]);
        pair.p_hat = DMatrix::from_column_slice(n, 1, &centers[i]);
        pair.beta_loss = loss_r;
        pair.beta_dyn = dyn_r;
    }
    est
}

/// Optimistic values by brute force: every state picks an action and a
/// transition vector from a grid of its L1 ball; values of each such
/// stationary choice come from a linear solve.
fn evi_grid_oracle(losses: &[f64], centers: &[Vec<f64>], loss_r: f64, dyn_r: f64) -> [f64; 2] {
    let step = 0.005;
    let k = (1.0 / step) as usize;
    let mut options: [Vec<(f64, [f64; 2])>; 2] = [Vec::new(), Vec::new()];
    for (s, opts) in options.iter_mut().enumerate() {
        for a in 0..2 {
            let i = s * 2 + a;
            let loss = (losses[i] - loss_r).clamp(0.0, 1.0);
            for x in 0..=k {
                for y in 0..=k - x {
                    let q = [x as f64 * step, y as f64 * step];
                    if (q[0] - centers[i][0]).abs() + (q[1] - centers[i][1]).abs() <= dyn_r + 1e-12 {
                        opts.push((loss, q));
                    }
                }
            }
        }
    }
    let mut best = [f64::INFINITY; 2];
    for (l0, q0) in &options[0] {
        for (l1, q1) in &options[1] {
            let m = nalgebra::Matrix2::new(1.0 - q0[0], -q0[1], -q1[0], 1.0 - q1[1]);
            if let Some(v) = m.lu().solve(&nalgebra::Vector2::new(*l0, *l1)) {
                if v.iter().all(|x| x.is_finite() && *x >= 0.0) {
                    best[0] = best[0].min(v[0]);
                    best[1] = best[1].min(v[1]);
                }
            }
        }
    }
    best
}

#[test]
fn evi_matches_brute_force_over_extended_policies() {
    let cases = [
        (vec![0.6, 0.9, 0.4, 0.8], vec![vec![0.5, 0.3], vec![0.1, 0.2], vec![0.6, 0.2], vec![0.0, 0.4]], 0.1, 0.15),
        (vec![0.9, 0.7, 0.5, 0.95], vec![vec![0.2, 0.6], vec![0.4, 0.4], vec![0.8, 0.1], vec![0.3, 0.3]], 0.0, 0.05),
        (vec![0.3, 0.8, 0.7, 0.2], vec![vec![0.0, 0.9], vec![0.5, 0.0], vec![0.45, 0.45], vec![0.7, 0.1]], 0.2, 0.3),
    ];
    let cfg = LearnerConfig { evi_tol: 1e-12, ..LearnerConfig::default() };
    for (losses, centers, loss_r, dyn_r) in cases {
        let est = scalar_estimates(2, 2, &losses, &centers, loss_r, dyn_r);
        let plan = evi_plan(&est, &Context::vertex(1, 0), 1e6, &cfg).unwrap();
        assert!(plan.converged);
        let oracle = evi_grid_oracle(&losses, &centers, loss_r, dyn_r);
        for (s, grid) in oracle.iter().enumerate() {
            // The grid can only overestimate the optimum.
            assert!(plan.values[s] <= grid + 1e-9, "state {s}: {} vs {grid}", plan.values[s]);
            assert!(grid - plan.values[s] < 0.05, "state {s}: {} vs {grid}", plan.values[s]);
        }
    }
}

proptest! {
    #[test]
    fn wider_confidence_sets_never_raise_optimistic_values(
        seed in any::<u64>(),
        loss_r in 0.0f64..0.5,
        dyn_r in 0.0f64..0.5,
        widen in 0.0f64..0.5,
    ) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let losses: Vec<f64> = (0..6).map(|_| rng.random()).collect();
        let centers: Vec<Vec<f64>> = (0..6)
            .map(|_| {
                let w: Vec<f64> = (0..4).map(|_| rng.random::<f64>()).collect();
                let total: f64 = w.iter().sum();
                w[..3].iter().map(|x| x / total).collect()
            })
            .collect();
        let cfg = LearnerConfig { evi_tol: 1e-10, ..LearnerConfig::default() };
        let c = Context::vertex(1, 0);
        let narrow = evi_plan(&scalar_estimates(3, 2, &losses, &centers, loss_r, dyn_r), &c, 50.0, &cfg).unwrap();
        let wide = evi_plan(&scalar_estimates(3, 2, &losses, &centers, loss_r + widen, dyn_r + widen), &c, 50.0, &cfg).unwrap();
        for s in 0..3 {
            prop_assert!(wide.values[s] <= narrow.values[s] + 1e-8);
            prop_assert!(narrow.values[s] >= 0.0 && narrow.values[s] <= 50.0);
        }
    }
}

fn reference() -> (lrcssp::model::LinearCsspModel, Vec<Context>) {
    let model = generate_instance(&common::spec(2, 4, 2, 8)).unwrap();
    let contexts = context_sequence(&ContextKind::Uniform, 60, 2, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    (model, contexts)
}

fn cfg() -> LearnerConfig {
    LearnerConfig { l_min: 0.1, ..LearnerConfig::default() }
}

#[test]
fn runs_replay_bit_for_bit() {
    let (model, contexts) = reference();
    let a = run(&cfg(), &model, &mut ContextList::new(contexts.clone()), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let b = run(&cfg(), &model, &mut ContextList::new(contexts), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.events_jsonl(), b.events_jsonl());
}

#[test]
fn observers_do_not_change_the_run() {
    let (model, contexts) = reference();
    let plain = run(&cfg(), &model, &mut ContextList::new(contexts.clone()), &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    let mut seen = 0;
    let mut observer = |view: &lrcssp::learner::IntervalView<'_>| {
        seen += 1;
        let _ = view.estimates.covers(&model);
        let _ = oracle_values(&model, std::slice::from_ref(view.context)).unwrap();
    };
    let watched = run_with(
        &cfg(),
        &model,
        &mut ContextList::new(contexts),
        &mut ChaCha8Rng::seed_from_u64(2),
        ContextMode::Aware,
        &mut observer,
    )
    .unwrap();
    assert_eq!(plain, watched);
    assert_eq!(seen as u64, plain.totals.intervals);
}

#[test]
fn run_accounting_and_triggers() {
    let (model, contexts) = reference();
    let log = run(&cfg(), &model, &mut ContextList::new(contexts), &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    assert_eq!(log.totals.steps, log.episodes.iter().map(|e| e.steps).sum::<u64>());
    assert_eq!(log.totals.intervals, log.episodes.iter().map(|e| e.intervals_started).sum::<u64>());
    assert_eq!(log.episodes[0].intervals[0].trigger, Trigger::Start);
    for ep in &log.episodes[1..] {
        assert_eq!(ep.intervals[0].trigger, Trigger::Goal);
        assert_eq!(ep.intervals_started, 1 + ep.unknown_triggers);
        assert!(ep.intervals[1..].iter().all(|iv| iv.trigger == Trigger::Unknown));
    }
    let indices: Vec<u64> = log.events().map(|e| e.interval).collect();
    assert_eq!(indices, (1..=log.totals.intervals).collect::<Vec<_>>());
}

#[test]
fn step_cap_truncates_and_restarts() {
    let (model, contexts) = reference();
    let cfg = LearnerConfig { episode_step_cap: 1, ..cfg() };
    let log = run(&cfg, &model, &mut ContextList::new(contexts), &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
    assert!(log.totals.truncations > 0);
    for pair in log.episodes.windows(2) {
        let expect = if pair[0].truncated { Trigger::Start } else { Trigger::Goal };
        assert_eq!(pair[1].intervals[0].trigger, expect);
        assert!(pair[1].steps <= 1);
    }
}

#[test]
fn perturbation_uses_the_formula_and_keeps_true_losses() {
    let expect = 5.0 * (2.0_f64 * 2.0 * 3.0 / 2000.0).cbrt();
    assert_eq!(auto_epsilon(5, 2, 3, 2000), expect);
    assert!((expect - 5.0 * (12.0_f64 / 2000.0).powf(1.0 / 3.0)).abs() < 1e-14);

    let mut sp = common::spec(2, 4, 2, 8);
    sp.l_min_target = 0.0;
    sp.zero_loss_pairs = 3;
    let model = generate_instance(&sp).unwrap();
    let contexts = context_sequence(&ContextKind::Uniform, 40, 2, &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
    let cfg = LearnerConfig { l_min: 0.0, ..LearnerConfig::default() };
    let log = run(&cfg, &model, &mut ContextList::new(contexts.clone()), &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
    let eps = auto_epsilon(4, 2, 2, 40);
    assert_eq!(log.epsilon, Some(eps));
    assert_eq!(log.l_min_effective, eps);
    for step in log.episodes.iter().flat_map(|e| &e.trace) {
        assert_eq!(step.observed_loss, step.loss.max(eps));
    }
    let total: f64 = log.episodes.iter().map(|e| e.total_loss).sum();
    assert_eq!(total, log.episodes.iter().flat_map(|e| &e.trace).map(|s| s.loss).sum::<f64>());

    let fixed = LearnerConfig { l_min: 0.0, epsilon_perturb: Some(0.05), ..LearnerConfig::default() };
    let log = run(&fixed, &model, &mut ContextList::new(contexts), &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
    assert_eq!(log.epsilon, Some(0.05));
}

#[test]
fn matching_l_min_leaves_losses_untouched() {
    let (model, contexts) = reference();
    let log = run(&cfg(), &model, &mut ContextList::new(contexts), &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
    assert_eq!(log.epsilon, None);
    assert!(log.episodes.iter().flat_map(|e| &e.trace).all(|s| s.observed_loss == s.loss));
}

#[test]
fn blind_equals_aware_when_contexts_carry_no_information() {
    let model = generate_instance(&common::spec(1, 3, 2, 2)).unwrap();
    let contexts = vec![Context::vertex(1, 0); 30];
    let run_mode = |model, contexts: &Vec<Context>, mode| {
        run_with(&cfg(), model, &mut ContextList::new(contexts.clone()), &mut ChaCha8Rng::seed_from_u64(9), mode, &mut |_| {})
            .unwrap()
    };
    assert_eq!(run_mode(&model, &contexts, ContextMode::Aware).episodes, run_mode(&model, &contexts, ContextMode::Blind).episodes);

    let model = generate_instance(&common::spec(3, 3, 2, 2)).unwrap();
    let contexts = vec![Context::uniform(3); 30];
    assert_eq!(run_mode(&model, &contexts, ContextMode::Aware).episodes, run_mode(&model, &contexts, ContextMode::Blind).episodes);
}

#[test]
fn adaptive_contexts_see_the_history() {
    let (model, _) = reference();
    let mut lengths = Vec::new();
    let mut provider = AdaptiveContexts::new(10, |history: &[lrcssp::learner::EpisodeLog]| {
        lengths.push(history.len());
        if history.last().is_some_and(|e| e.steps > 2) { vec![1.0, 0.0] } else { vec![0.0, 1.0] }
    });
    let log = run(&cfg(), &model, &mut provider, &mut ChaCha8Rng::seed_from_u64(10)).unwrap();
    assert_eq!(log.episodes.len(), 10);
    assert_eq!(lengths, (0..10).collect::<Vec<_>>());
    for pair in log.episodes.windows(2) {
        let expect = if pair[0].steps > 2 { 0 } else { 1 };
        assert_eq!(pair[1].context, Context::vertex(2, expect));
    }
}

#[test]
fn invalid_adaptive_context_is_a_protocol_error() {
    let (model, _) = reference();
    let mut provider = AdaptiveContexts::new(5, |history: &[lrcssp::learner::EpisodeLog]| {
        if history.len() < 2 { vec![0.5, 0.5] } else { vec![0.7, 0.7] }
    });
    let err = run(&cfg(), &model, &mut provider, &mut ChaCha8Rng::seed_from_u64(11)).unwrap_err();
    assert!(matches!(err, Error::Protocol(_)), "{err}");
}

#[test]
fn doublings_stay_logarithmic_in_the_optimal_value() {
    let mut sp = common::spec(2, 4, 2, 3);
    sp.gamma_goal = 0.05;
    sp.l_min_target = 0.6;
    let model = generate_instance(&sp).unwrap();
    for seed in 0..5 {
        let contexts = context_sequence(&ContextKind::Uniform, 80, 2, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let oracle = oracle_values(&model, &contexts).unwrap();
        let log = run(&cfg(), &model, &mut ContextList::new(contexts), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        assert!(oracle.b_star_emp > 2.0);
        assert!(log.totals.doublings as f64 <= oracle.b_star_emp.log2() + 1.0, "{} doublings", log.totals.doublings);
    }
}

#[test]
fn config_rejects_out_of_range_values() {
    for bad in [
        LearnerConfig { delta: 0.0, ..LearnerConfig::default() },
        LearnerConfig { lambda: 0.5, ..LearnerConfig::default() },
        LearnerConfig { b_star_init: 0.5, ..LearnerConfig::default() },
        LearnerConfig { l_min: -0.1, ..LearnerConfig::default() },
    ] {
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
    }
    let parsed: LearnerConfig = toml::from_str("delta = 0.2").unwrap();
    assert_eq!(parsed, LearnerConfig { delta: 0.2, ..LearnerConfig::default() });
    assert!(toml::from_str::<LearnerConfig>("gamma = 1").is_err());
}
