//! The episodic learner: interval bookkeeping, the known test, the B*
//! doubling trick and the perturbed-loss mode.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::{auto_epsilon, LearnerConfig};
use super::evi::{evi_plan, EviPlan};
use super::log::{EpisodeLog, IntervalRecord, RunLog, RunTotals, StepRecord, Trigger};
use crate::error::{Error, Result};
use crate::estimation::{known_threshold, ConfidenceShape, Estimates, PairEstimate, SaStatistics};
use crate::model::{sample_step, validate_model, Context, LinearCsspModel};
use crate::ssp::{Policy, ValueFunction};

/// Source of per-episode contexts.
pub trait ContextProvider {
    /// Number of episodes `K`.
    fn episodes(&self) -> usize;

    /// Context of the next episode, given the logs of all finished episodes.
    fn next_context(&mut self, history: &[EpisodeLog]) -> Result<Context>;
}

/// A context sequence fixed in advance.
#[derive(Debug, Clone)]
pub struct ContextList {
    contexts: Vec<Context>,
}

impl ContextList {
    pub fn new(contexts: Vec<Context>) -> Self {
        Self { contexts }
    }
}

impl ContextProvider for ContextList {
    fn episodes(&self) -> usize {
        self.contexts.len()
    }

    fn next_context(&mut self, history: &[EpisodeLog]) -> Result<Context> {
        self.contexts
            .get(history.len())
            .cloned()
            .ok_or_else(|| Error::Protocol("context list exhausted".into()))
    }
}

/// Contexts chosen on the fly by a callback that sees the full history.
pub struct AdaptiveContexts<F> {
    episodes: usize,
    callback: F,
}

impl<F> AdaptiveContexts<F>
where
    F: FnMut(&[EpisodeLog]) -> Vec<f64>,
{
    pub fn new(episodes: usize, callback: F) -> Self {
        Self { episodes, callback }
    }
}

impl<F> ContextProvider for AdaptiveContexts<F>
where
    F: FnMut(&[EpisodeLog]) -> Vec<f64>,
{
    fn episodes(&self) -> usize {
        self.episodes
    }

    fn next_context(&mut self, history: &[EpisodeLog]) -> Result<Context> {
        Context::new((self.callback)(history))
            .map_err(|e| Error::Protocol(format!("adaptive context rejected: {e}")))
    }
}

/// What the learner plans with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextMode {
    /// The true episode context.
    Aware,
    /// The simplex barycenter, whatever the environment does.
    Blind,
}

/// Read-only view handed to an observer at every interval start.
pub struct IntervalView<'a> {
    pub episode: usize,
    pub interval: u64,
    /// Context the environment runs under.
    pub context: &'a Context,
    pub initial_state: usize,
    pub estimates: &'a Estimates,
    pub plan: &'a EviPlan,
}

/// Mutable state of one run.
pub struct LearnerState {
    cfg: LearnerConfig,
    shape: ConfidenceShape,
    stats: Vec<SaStatistics>,
    estimates: Estimates,
    dirty: Vec<bool>,
    policy: Policy,
    values: ValueFunction,
    b_star_cur: f64,
    interval: u64,
    step_in_interval: u64,
    l_min: f64,
}

/// Facts about a freshly started interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalStart {
    pub evi_residual: f64,
    pub evi_converged: bool,
    pub v_tilde_init: f64,
    pub known_fraction: f64,
    pub doublings: u32,
}

impl LearnerState {
    /// Fresh state; `l_min` is the bound used by the known test.
    pub fn new(cfg: &LearnerConfig, shape: ConfidenceShape, l_min: f64) -> Result<Self> {
        cfg.validate()?;
        let stats: Vec<_> = (0..shape.n_states * shape.n_actions)
            .map(|_| SaStatistics::new(shape.d, shape.n_states, cfg.lambda))
            .collect();
        let estimates = Estimates::compute(&stats, shape, cfg.delta)?;
        Ok(Self {
            cfg: cfg.clone(),
            shape,
            dirty: vec![false; stats.len()],
            stats,
            estimates,
            policy: Policy::constant(shape.n_states, 0),
            values: ValueFunction::zeros(shape.n_states),
            b_star_cur: cfg.b_star_init,
            interval: 0,
            step_in_interval: 0,
            l_min,
        })
    }

    pub fn stats(&self, s: usize, a: usize) -> &SaStatistics {
        &self.stats[s * self.shape.n_actions + a]
    }

    pub fn estimates(&self) -> &Estimates {
        &self.estimates
    }

    pub fn policy(&self) -> &Policy {
        &self.policy
    }

    pub fn values(&self) -> &ValueFunction {
        &self.values
    }

    pub fn b_star(&self) -> f64 {
        self.b_star_cur
    }

    /// Current interval index `m` (0 before the first interval).
    pub fn interval(&self) -> u64 {
        self.interval
    }

    pub fn step_in_interval(&self) -> u64 {
        self.step_in_interval
    }

    fn refresh_estimates(&mut self) -> Result<()> {
        for (i, dirty) in self.dirty.iter_mut().enumerate() {
            if *dirty {
                self.estimates.pairs[i] = PairEstimate::compute(&self.stats[i], &self.shape, self.cfg.delta)?;
                *dirty = false;
            }
        }
        Ok(())
    }

    fn reset_statistics(&mut self) {
        for st in &mut self.stats {
            st.reset();
        }
        self.dirty.fill(true);
    }

    /// Known test for `(s, a)` under context `c`, using the design matrix and
    /// visit count frozen at the start of the current interval.
    pub fn is_known(&self, s: usize, a: usize, c: &Context) -> bool {
        let est = self.estimates.pair(s, a);
        let threshold = known_threshold(
            est.tau,
            &self.shape,
            self.cfg.lambda,
            self.l_min,
            self.b_star_cur,
            self.interval.max(1),
            self.cfg.delta,
        );
        est.context_norm(c) < threshold
    }

    fn known_fraction(&self, c: &Context) -> f64 {
        let pairs = self.shape.n_states * self.shape.n_actions;
        let known = (0..self.shape.n_states)
            .flat_map(|s| (0..self.shape.n_actions).map(move |a| (s, a)))
            .filter(|(s, a)| self.is_known(*s, *a, c))
            .count();
        known as f64 / pairs as f64
    }

    /// Opens interval `m + 1`: re-estimates every pair, plans optimistically
    /// with `b_cap = 2 B*`, and doubles `B*` (resetting all statistics) while
    /// the optimistic value of `s_init` exceeds it.
    pub fn start_interval(&mut self, c: &Context, s_init: usize) -> Result<(IntervalStart, EviPlan)> {
        self.interval += 1;
        self.step_in_interval = 0;
        let mut doublings = 0;
        let plan = loop {
            self.refresh_estimates()?;
            let plan = evi_plan(&self.estimates, c, 2.0 * self.b_star_cur, &self.cfg)?;
            if plan.values[s_init] > self.b_star_cur {
                self.b_star_cur *= 2.0;
                self.reset_statistics();
                doublings += 1;
                continue;
            }
            break plan;
        };
        self.policy = plan.policy.clone();
        self.values = plan.values.clone();
        let start = IntervalStart {
            evi_residual: plan.residual,
            evi_converged: plan.converged,
            v_tilde_init: plan.values[s_init],
            known_fraction: self.known_fraction(c),
            doublings,
        };
        Ok((start, plan))
    }

    fn record(&mut self, s: usize, a: usize, c: &Context, next: Option<usize>, loss: f64) {
        let i = s * self.shape.n_actions + a;
        self.stats[i].record_visit(c, next, loss);
        self.dirty[i] = true;
        self.step_in_interval += 1;
    }
}

/// Everything one episode needs from the surrounding run.
pub struct EpisodeInputs<'a> {
    pub episode: usize,
    /// Context the environment runs under.
    pub context: &'a Context,
    /// Context the learner estimates and plans with.
    pub planning_context: &'a Context,
    pub first_trigger: Trigger,
    /// Loss floor applied to observations.
    pub epsilon: Option<f64>,
}

/// Plays one episode until the goal or the step cap.
pub fn run_episode<R: Rng + ?Sized>(
    state: &mut LearnerState,
    inputs: &EpisodeInputs<'_>,
    model: &LinearCsspModel,
    rng: &mut R,
    observer: &mut dyn FnMut(&IntervalView<'_>),
) -> Result<EpisodeLog> {
    let c_env = inputs.context;
    let c_plan = inputs.planning_context;
    let s_init = model.initial_state(c_env);
    let cap = state.cfg.episode_step_cap;

    let mut log = EpisodeLog {
        episode: inputs.episode,
        context: c_env.clone(),
        initial_state: s_init,
        steps: 0,
        total_loss: 0.0,
        intervals_started: 0,
        unknown_triggers: 0,
        truncated: false,
        intervals: Vec::new(),
        trace: Vec::new(),
    };

    let mut open = |state: &mut LearnerState, log: &mut EpisodeLog, trigger, pair| -> Result<()> {
        let (start, plan) = state.start_interval(c_plan, s_init)?;
        observer(&IntervalView {
            episode: inputs.episode,
            interval: state.interval,
            context: c_env,
            initial_state: s_init,
            estimates: &state.estimates,
            plan: &plan,
        });
        log.intervals_started += 1;
        log.intervals.push(IntervalRecord {
            index: state.interval,
            trigger,
            trigger_pair: pair,
            steps: 0,
            loss: 0.0,
            evi_residual: start.evi_residual,
            evi_converged: start.evi_converged,
            v_tilde_init: start.v_tilde_init,
            b_star_cur: state.b_star_cur,
            known_fraction: start.known_fraction,
            doublings: start.doublings,
        });
        Ok(())
    };

    open(state, &mut log, inputs.first_trigger, None)?;
    let mut s = s_init;
    loop {
        if log.steps >= cap {
            log.truncated = true;
            break;
        }
        let a = state.policy.action(s);
        let step = sample_step(model, c_env, s, a, rng);
        let observed = match inputs.epsilon {
            Some(eps) => step.loss.max(eps),
            None => step.loss,
        };
        let known = state.is_known(s, a, c_plan);
        state.record(s, a, c_plan, step.next, observed);

        log.steps += 1;
        log.total_loss += step.loss;
        let current = log.intervals.last_mut().expect("an interval is open");
        current.steps += 1;
        current.loss += step.loss;
        log.trace.push(StepRecord { state: s, action: a, next: step.next, loss: step.loss, observed_loss: observed, known });

        match step.next {
            None => break,
            Some(next) => {
                if !known {
                    log.unknown_triggers += 1;
                    open(state, &mut log, Trigger::Unknown, Some((s, a)))?;
                }
                s = next;
            }
        }
    }
    Ok(log)
}

/// Runs the learner over every episode of `contexts`.
pub fn run<R: Rng + ?Sized>(
    cfg: &LearnerConfig,
    model: &LinearCsspModel,
    contexts: &mut dyn ContextProvider,
    rng: &mut R,
) -> Result<RunLog> {
    run_with(cfg, model, contexts, rng, ContextMode::Aware, &mut |_| {})
}

/// [`run`] with a choice of planning context and an interval observer.
///
/// With `l_min = 0` observed losses are floored at `ε` (from the config or
/// `|S|(d²|A|/K)^{1/3}`) and the known test uses `ε` as its `ℓ_min`; the
/// logged losses stay unperturbed.
pub fn run_with<R: Rng + ?Sized>(
    cfg: &LearnerConfig,
    model: &LinearCsspModel,
    contexts: &mut dyn ContextProvider,
    rng: &mut R,
    mode: ContextMode,
    observer: &mut dyn FnMut(&IntervalView<'_>),
) -> Result<RunLog> {
    cfg.validate()?;
    let violations = validate_model(model);
    if !violations.is_empty() {
        return Err(Error::Config(format!("model has {} invariant violations", violations.len())));
    }
    let k = contexts.episodes();
    if k == 0 {
        return Err(Error::Config("at least one episode is required".into()));
    }
    let shape = ConfidenceShape { d: model.d, n_states: model.n_states, n_actions: model.n_actions };
    let epsilon = if cfg.l_min == 0.0 {
        Some(cfg.epsilon_perturb.unwrap_or_else(|| auto_epsilon(model.n_states, model.d, model.n_actions, k)))
    } else {
        None
    };
    let l_min = epsilon.unwrap_or(cfg.l_min);
    let mut state = LearnerState::new(cfg, shape, l_min)?;
    let blind = Context::uniform(model.d);

    let mut episodes: Vec<EpisodeLog> = Vec::with_capacity(k);
    let mut totals = RunTotals::default();
    for episode in 1..=k {
        let c = contexts.next_context(&episodes)?;
        if c.dim() != model.d {
            return Err(Error::Dimension(format!("episode {episode} context has dimension {}", c.dim())));
        }
        let first_trigger = match episodes.last() {
            Some(prev) if !prev.truncated => Trigger::Goal,
            _ => Trigger::Start,
        };
        let planning = match mode {
            ContextMode::Aware => &c,
            ContextMode::Blind => &blind,
        };
        let inputs = EpisodeInputs { episode, context: &c, planning_context: planning, first_trigger, epsilon };
        let log = run_episode(&mut state, &inputs, model, rng, observer)?;
        totals.steps += log.steps;
        totals.intervals += log.intervals_started;
        totals.truncations += u64::from(log.truncated);
        totals.doublings += log.intervals.iter().map(|iv| u64::from(iv.doublings)).sum::<u64>();
        episodes.push(log);
    }
    Ok(RunLog {
        episodes,
        config: cfg.clone(),
        model_fingerprint: model.fingerprint(),
        shape,
        mode,
        epsilon,
        l_min_effective: l_min,
        totals,
    })
}
