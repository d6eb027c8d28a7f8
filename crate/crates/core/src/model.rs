//! Linear contextual SSP ground truth.
//!
//! Each state-action pair carries `d` component losses and `d` component
//! next-state sub-distributions; a context on the probability simplex mixes
//! them into one concrete SSP.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::ssp::{SspInstance, MASS_TOLERANCE};

/// Tolerance on the simplex constraint of a context.
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

/// A point of the probability simplex in `ℝ^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Context(Vec<f64>);

impl Context {
    pub fn new(c: Vec<f64>) -> Result<Self> {
        if c.is_empty() {
            return Err(Error::InvalidContext("empty context".into()));
        }
        if let Some(x) = c.iter().find(|x| **x < 0.0 || !x.is_finite()) {
            return Err(Error::InvalidContext(format!("entry {x} is not a non-negative number")));
        }
        let total: f64 = c.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(Error::InvalidContext(format!("entries sum to {total}, not 1")));
        }
        Ok(Self(c))
    }

    /// The simplex vertex `e_j`.
    pub fn vertex(d: usize, j: usize) -> Self {
        let mut c = vec![0.0; d];
        c[j] = 1.0;
        Self(c)
    }

    /// The barycenter `(1/d, …, 1/d)`.
    pub fn uniform(d: usize) -> Self {
        Self(vec![1.0 / d as f64; d])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Index of the largest coordinate (first on ties).
    pub fn dominant_component(&self) -> usize {
        let mut best = 0;
        for (j, x) in self.0.iter().enumerate() {
            if *x > self.0[best] {
                best = j;
            }
        }
        best
    }
}

impl TryFrom<Vec<f64>> for Context {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Context::new(v)
    }
}

impl From<Context> for Vec<f64> {
    fn from(c: Context) -> Self {
        c.0
    }
}

/// Distribution of an observed loss around its mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LossNoise {
    /// `1` with probability equal to the mean, else `0`.
    #[default]
    Bernoulli,
    /// Uniform on a window of at most `width` centred at the mean, shrunk so
    /// that it stays inside `[0, 1]`.
    TruncatedUniform { width: f64 },
}

/// Ground-truth embeddings `L*(s,a) ∈ [0,1]^d` and `P*(s,a) ∈ ℝ^{S×d}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearCsspModel {
    pub d: usize,
    pub n_states: usize,
    pub n_actions: usize,
    /// `loss_embed[(s * A + a) * d + j]` is the loss of component `j`.
    pub loss_embed: Vec<f64>,
    /// `trans_embed[((s * A + a) * S + s') * d + j]` is `p*_j(s' | s, a)`.
    pub trans_embed: Vec<f64>,
    pub s_init: usize,
    /// Optional initial state keyed by the dominant context component.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_init_by_component: Option<Vec<usize>>,
    #[serde(default)]
    pub loss_noise: LossNoise,
}

/// Outcome of one environment step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    /// `None` when the goal was reached.
    pub next: Option<usize>,
    pub loss: f64,
}

impl LinearCsspModel {
    #[inline]
    fn pair(&self, s: usize, a: usize) -> usize {
        s * self.n_actions + a
    }

    /// `L*(s,a)` as a `d`-vector.
    pub fn loss_vector(&self, s: usize, a: usize) -> &[f64] {
        let start = self.pair(s, a) * self.d;
        &self.loss_embed[start..start + self.d]
    }

    /// `P*(s,a)` as a row-major `S × d` block.
    pub fn trans_block(&self, s: usize, a: usize) -> &[f64] {
        let block = self.n_states * self.d;
        let start = self.pair(s, a) * block;
        &self.trans_embed[start..start + block]
    }

    /// `p*_j(s' | s, a)`.
    #[inline]
    pub fn component_trans(&self, s: usize, a: usize, next: usize, j: usize) -> f64 {
        self.trans_block(s, a)[next * self.d + j]
    }

    /// Residual goal mass of component `j` at `(s, a)`.
    pub fn component_goal_mass(&self, s: usize, a: usize, j: usize) -> f64 {
        1.0 - (0..self.n_states).map(|t| self.component_trans(s, a, t, j)).sum::<f64>()
    }

    /// Initial state of an episode played under context `c`.
    pub fn initial_state(&self, c: &Context) -> usize {
        match &self.s_init_by_component {
            Some(table) => table[c.dominant_component()],
            None => self.s_init,
        }
    }

    fn check_context(&self, c: &Context) -> Result<()> {
        if c.dim() != self.d {
            return Err(Error::Dimension(format!("context has dimension {}, model has d = {}", c.dim(), self.d)));
        }
        Ok(())
    }

    /// Expected loss `⟨c, L*(s,a)⟩`.
    pub fn mean_loss(&self, c: &Context, s: usize, a: usize) -> f64 {
        crate::ssp::dot(c.as_slice(), self.loss_vector(s, a))
    }

    /// Next-state probabilities `P*(s,a) c` over non-goal states.
    pub fn trans_probs(&self, c: &Context, s: usize, a: usize) -> Vec<f64> {
        self.trans_block(s, a).chunks_exact(self.d).map(|row| crate::ssp::dot(row, c.as_slice())).collect()
    }

    /// SHA-256 of the canonical JSON serialization.
    pub fn fingerprint(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("model serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

/// Mixes the components of `model` with weights `c`.
pub fn induce_ssp(model: &LinearCsspModel, c: &Context) -> Result<SspInstance> {
    model.check_context(c)?;
    let mut loss = Vec::with_capacity(model.n_states * model.n_actions);
    let mut trans = Vec::with_capacity(model.n_states * model.n_actions * model.n_states);
    for s in 0..model.n_states {
        for a in 0..model.n_actions {
            loss.push(model.mean_loss(c, s, a).clamp(0.0, 1.0));
            trans.extend(model.trans_probs(c, s, a));
        }
    }
    SspInstance::new(model.n_states, model.n_actions, loss, trans)
}

/// Samples the next state (goal on residual mass) and then the observed loss.
pub fn sample_step<R: Rng + ?Sized>(model: &LinearCsspModel, c: &Context, s: usize, a: usize, rng: &mut R) -> Step {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut next = None;
    for (t, row) in model.trans_block(s, a).chunks_exact(model.d).enumerate() {
        acc += crate::ssp::dot(row, c.as_slice());
        if u < acc {
            next = Some(t);
            break;
        }
    }
    let mean = model.mean_loss(c, s, a).clamp(0.0, 1.0);
    let loss = match model.loss_noise {
        LossNoise::Bernoulli => {
            if rng.random::<f64>() < mean {
                1.0
            } else {
                0.0
            }
        }
        LossNoise::TruncatedUniform { width } => {
            let half = (0.5 * width).min(mean).min(1.0 - mean);
            let u: f64 = rng.random();
            (mean + half * (2.0 * u - 1.0)).clamp(0.0, 1.0)
        }
    };
    Step { next, loss }
}

/// Structural family produced by the generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorVariant {
    /// Every component of every pair keeps at least `gamma_goal` goal mass.
    #[default]
    Uniform,
    /// Only action 0 leaks to the goal; the other actions shuffle between
    /// states. "Always play action 0" stays proper for every context.
    Trap,
}

/// Parameters of the random instance generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub d: usize,
    pub n_states: usize,
    pub n_actions: usize,
    /// Minimum goal mass of each component distribution, in `(0, 1]`.
    pub gamma_goal: f64,
    /// Minimum component loss; `0` disables the floor.
    #[serde(default)]
    pub l_min_target: f64,
    pub seed: u64,
    #[serde(default)]
    pub variant: GeneratorVariant,
    /// Number of state-action pairs whose loss is zero in every component.
    #[serde(default)]
    pub zero_loss_pairs: usize,
    #[serde(default)]
    pub loss_noise: LossNoise,
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.n_states == 0 || self.n_actions == 0 {
            return Err(Error::Config("d, n_states and n_actions must be positive".into()));
        }
        if !(self.gamma_goal > 0.0 && self.gamma_goal <= 1.0) {
            return Err(Error::Config(format!("gamma_goal must lie in (0, 1], got {}", self.gamma_goal)));
        }
        if !(0.0..1.0).contains(&self.l_min_target) {
            return Err(Error::Config(format!("l_min_target must lie in [0, 1), got {}", self.l_min_target)));
        }
        if self.zero_loss_pairs > self.n_states * self.n_actions {
            return Err(Error::Config("zero_loss_pairs exceeds the number of state-action pairs".into()));
        }
        if self.zero_loss_pairs > 0 && self.l_min_target > 0.0 {
            return Err(Error::Config("zero_loss_pairs requires l_min_target = 0".into()));
        }
        if self.variant == GeneratorVariant::Trap && self.n_actions < 2 {
            return Err(Error::Config("the trap variant needs at least two actions".into()));
        }
        if let LossNoise::TruncatedUniform { width } = self.loss_noise {
            if !(0.0..=1.0).contains(&width) {
                return Err(Error::Config(format!("truncated uniform width must lie in [0, 1], got {width}")));
            }
        }
        Ok(())
    }
}

/// Draws a point uniformly from the simplex of dimension `n`.
fn uniform_simplex(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

/// Random model satisfying the generator guarantees; deterministic in `spec.seed`.
pub fn generate_instance(spec: &GeneratorSpec) -> Result<LinearCsspModel> {
    spec.validate()?;
    let (d, n, m) = (spec.d, spec.n_states, spec.n_actions);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut loss_embed = vec![0.0; n * m * d];
    let mut trans_embed = vec![0.0; n * m * n * d];

    for s in 0..n {
        for a in 0..m {
            let pair = s * m + a;
            for j in 0..d {
                loss_embed[pair * d + j] = spec.l_min_target + (1.0 - spec.l_min_target) * rng.random::<f64>();
                let goal = match spec.variant {
                    GeneratorVariant::Trap if a != 0 => 0.0,
                    _ => spec.gamma_goal + (1.0 - spec.gamma_goal) * 0.5 * rng.random::<f64>(),
                };
                let spread = uniform_simplex(&mut rng, n);
                for (t, w) in spread.iter().enumerate() {
                    trans_embed[(pair * n + t) * d + j] = (1.0 - goal) * w;
                }
            }
        }
    }

    if spec.zero_loss_pairs > 0 {
        let mut pairs: Vec<usize> = (0..n * m).collect();
        for i in 0..spec.zero_loss_pairs {
            let k = rng.random_range(i..pairs.len());
            pairs.swap(i, k);
            let pair = pairs[i];
            loss_embed[pair * d..(pair + 1) * d].fill(0.0);
        }
    }

    Ok(LinearCsspModel {
        d,
        n_states: n,
        n_actions: m,
        loss_embed,
        trans_embed,
        s_init: 0,
        s_init_by_component: None,
        loss_noise: spec.loss_noise,
    })
}

/// What went wrong at one location of a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ViolationKind {
    Shape { detail: String },
    NegativeTransition { next: usize, value: f64 },
    ColumnMass { sum: f64 },
    LossRange { value: f64 },
    InitialState { value: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub state: usize,
    pub action: usize,
    pub component: usize,
    pub kind: ViolationKind,
}

/// Lists every invariant violation of `model`; an empty list means valid.
pub fn validate_model(model: &LinearCsspModel) -> Vec<Violation> {
    let (d, n, m) = (model.d, model.n_states, model.n_actions);
    let shape = |detail: String| Violation { state: 0, action: 0, component: 0, kind: ViolationKind::Shape { detail } };
    if d == 0 || n == 0 || m == 0 {
        return vec![shape("zero-sized dimension".into())];
    }
    if model.loss_embed.len() != n * m * d || model.trans_embed.len() != n * m * n * d {
        return vec![shape("embedding tables do not match (d, n_states, n_actions)".into())];
    }

    let mut out = Vec::new();
    if model.s_init >= n {
        out.push(Violation { state: 0, action: 0, component: 0, kind: ViolationKind::InitialState { value: model.s_init } });
    }
    if let Some(table) = &model.s_init_by_component {
        if table.len() != d {
            out.push(shape(format!("initial-state table has {} entries, expected {d}", table.len())));
        }
        for (j, s) in table.iter().enumerate() {
            if *s >= n {
                out.push(Violation { state: 0, action: 0, component: j, kind: ViolationKind::InitialState { value: *s } });
            }
        }
    }
    for s in 0..n {
        for a in 0..m {
            for j in 0..d {
                let at = |kind| Violation { state: s, action: a, component: j, kind };
                let l = model.loss_vector(s, a)[j];
                if !(0.0..=1.0).contains(&l) {
                    out.push(at(ViolationKind::LossRange { value: l }));
                }
                let mut sum = 0.0;
                for t in 0..n {
                    let p = model.component_trans(s, a, t, j);
                    if p.is_nan() || p < 0.0 {
                        out.push(at(ViolationKind::NegativeTransition { next: t, value: p }));
                    }
                    sum += p;
                }
                if sum.is_nan() || sum > 1.0 + MASS_TOLERANCE {
                    out.push(at(ViolationKind::ColumnMass { sum }));
                }
            }
        }
    }
    out
}

/// Non-adaptive context sequences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum ContextKind {
    /// Symmetric Dirichlet(1), i.e. uniform on the simplex.
    Uniform,
    /// `e_1, e_2, …, e_d, e_1, …`.
    CyclicVertices,
    /// The same context every episode.
    Fixed { context: Vec<f64> },
}

/// Draws `k` contexts of dimension `d`.
pub fn context_sequence<R: Rng + ?Sized>(kind: &ContextKind, k: usize, d: usize, rng: &mut R) -> Result<Vec<Context>> {
    if k == 0 {
        return Err(Error::Config("a context sequence needs at least one episode".into()));
    }
    if d == 0 {
        return Err(Error::Config("context dimension must be positive".into()));
    }
    match kind {
        ContextKind::Uniform => Ok((0..k)
            .map(|_| {
                let w: Vec<f64> = (0..d).map(|_| Exp1.sample(rng)).collect();
                let total: f64 = w.iter().sum();
                Context(w.into_iter().map(|x| x / total).collect())
            })
            .collect()),
        ContextKind::CyclicVertices => Ok((0..k).map(|i| Context::vertex(d, i % d)).collect()),
        ContextKind::Fixed { context } => {
            let c = Context::new(context.clone())?;
            if c.dim() != d {
                return Err(Error::Dimension(format!("fixed context has dimension {}, expected {d}", c.dim())));
            }
            Ok(vec![c; k])
        }
    }
}
