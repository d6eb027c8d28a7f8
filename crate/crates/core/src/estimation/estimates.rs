use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::projection::{project_to_stochastic, weighted_sq_norm};
use super::radius::{dynamics_radius, loss_radius, ConfidenceShape};
use super::stats::{inverse_norm, SaStatistics};
use crate::error::{Error, Result};
use crate::model::{Context, LinearCsspModel};

/// Format version written into estimate snapshots.
pub const SNAPSHOT_VERSION: u32 = 1;

/// Ridge estimates and confidence radii of one pair, frozen at an interval start.
#[derive(Debug, Clone, PartialEq)]
pub struct PairEstimate {
    pub tau: u64,
    pub l_hat: DVector<f64>,
    /// Unconstrained ridge solution, `|S| × d`.
    pub p_hat_raw: DMatrix<f64>,
    /// `p_hat_raw` projected onto sub-stochastic columns.
    pub p_hat: DMatrix<f64>,
    pub beta_loss: f64,
    pub beta_dyn: f64,
    pub v_bar: DMatrix<f64>,
    pub v_bar_inv: DMatrix<f64>,
}

impl PairEstimate {
    pub fn compute(stats: &SaStatistics, shape: &ConfidenceShape, delta: f64) -> Result<Self> {
        let p_hat_raw = stats.ridge_dynamics_estimate();
        let p_hat = project_to_stochastic(&p_hat_raw, stats.v_bar())?;
        Ok(Self {
            tau: stats.tau(),
            l_hat: stats.ridge_loss_estimate(),
            p_hat_raw,
            p_hat,
            beta_loss: loss_radius(stats.tau(), shape, stats.lambda(), delta),
            beta_dyn: dynamics_radius(stats.tau(), shape, stats.lambda(), delta),
            v_bar: stats.v_bar().clone(),
            v_bar_inv: stats.v_bar_inv().clone(),
        })
    }

    /// `‖c‖_{V̄⁻¹}` under the frozen design matrix.
    pub fn context_norm(&self, c: &Context) -> f64 {
        inverse_norm(&self.v_bar_inv, c.as_slice())
    }

    /// `⟨c, L̂⟩`.
    pub fn mean_loss(&self, c: &Context) -> f64 {
        self.l_hat.iter().zip(c.as_slice()).map(|(l, x)| l * x).sum()
    }

    /// `P̂ c`, the estimated next-state sub-distribution under `c`.
    pub fn trans_probs(&self, c: &Context) -> Vec<f64> {
        (&self.p_hat * DVector::from_column_slice(c.as_slice())).iter().map(|x| x.max(0.0)).collect()
    }

    /// `‖L − L̂‖_{V̄}`.
    pub fn loss_deviation(&self, l_true: &[f64]) -> f64 {
        let diff = DVector::from_column_slice(l_true) - &self.l_hat;
        (diff.transpose() * &self.v_bar * &diff)[(0, 0)].max(0.0).sqrt()
    }

    /// `‖P − P̂‖_{V̄}` with `P` given row-major as `|S| × d`.
    pub fn dynamics_deviation(&self, p_true: &[f64]) -> f64 {
        let p = DMatrix::from_row_slice(self.p_hat.nrows(), self.p_hat.ncols(), p_true);
        weighted_sq_norm(&(p - &self.p_hat), &self.v_bar).max(0.0).sqrt()
    }
}

/// Estimates for every pair, indexed `s * |A| + a`.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimates {
    pub shape: ConfidenceShape,
    pub lambda: f64,
    pub delta: f64,
    pub pairs: Vec<PairEstimate>,
}

impl Estimates {
    /// Solves the regressions and projections of every pair.
    pub fn compute(stats: &[SaStatistics], shape: ConfidenceShape, delta: f64) -> Result<Self> {
        if stats.len() != shape.n_states * shape.n_actions {
            return Err(Error::Dimension(format!(
                "{} statistics for {} pairs",
                stats.len(),
                shape.n_states * shape.n_actions
            )));
        }
        let lambda = stats.first().map(|s| s.lambda()).unwrap_or(1.0);
        let pairs = stats.iter().map(|st| PairEstimate::compute(st, &shape, delta)).collect::<Result<Vec<_>>>()?;
        Ok(Self { shape, lambda, delta, pairs })
    }

    pub fn pair(&self, s: usize, a: usize) -> &PairEstimate {
        &self.pairs[s * self.shape.n_actions + a]
    }

    /// Whether the true embeddings of `model` lie in every pair's ellipsoids.
    pub fn covers(&self, model: &LinearCsspModel) -> bool {
        (0..self.shape.n_states).all(|s| {
            (0..self.shape.n_actions).all(|a| {
                let est = self.pair(s, a);
                est.loss_deviation(model.loss_vector(s, a)) <= est.beta_loss
                    && est.dynamics_deviation(model.trans_block(s, a)) <= est.beta_dyn
            })
        })
    }

    pub fn to_snapshot(&self) -> EstimatesSnapshot {
        let rows = |m: &DMatrix<f64>| (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect();
        let mut pairs = Vec::with_capacity(self.pairs.len());
        for s in 0..self.shape.n_states {
            for a in 0..self.shape.n_actions {
                let e = self.pair(s, a);
                pairs.push(PairSnapshot {
                    state: s,
                    action: a,
                    tau: e.tau,
                    beta_loss: e.beta_loss,
                    beta_dyn: e.beta_dyn,
                    l_hat: e.l_hat.iter().copied().collect(),
                    p_hat_raw: rows(&e.p_hat_raw),
                    p_hat: rows(&e.p_hat),
                    v_bar: rows(&e.v_bar),
                });
            }
        }
        EstimatesSnapshot {
            version: SNAPSHOT_VERSION,
            d: self.shape.d,
            n_states: self.shape.n_states,
            n_actions: self.shape.n_actions,
            lambda: self.lambda,
            delta: self.delta,
            pairs,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_snapshot()).expect("snapshot serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let snap: EstimatesSnapshot =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("bad estimates snapshot: {e}")))?;
        Self::try_from(snap)
    }
}

/// Serialized form of [`Estimates`]; matrices are lists of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatesSnapshot {
    pub version: u32,
    pub d: usize,
    pub n_states: usize,
    pub n_actions: usize,
    pub lambda: f64,
    pub delta: f64,
    pub pairs: Vec<PairSnapshot>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairSnapshot {
    pub state: usize,
    pub action: usize,
    pub tau: u64,
    pub beta_loss: f64,
    pub beta_dyn: f64,
    pub l_hat: Vec<f64>,
    pub p_hat_raw: Vec<Vec<f64>>,
    pub p_hat: Vec<Vec<f64>>,
    pub v_bar: Vec<Vec<f64>>,
}

fn from_rows(rows: &[Vec<f64>], nrows: usize, ncols: usize, what: &str) -> Result<DMatrix<f64>> {
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Dimension(format!("{what} must be {nrows}x{ncols}")));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

impl TryFrom<EstimatesSnapshot> for Estimates {
    type Error = Error;

    fn try_from(snap: EstimatesSnapshot) -> Result<Self> {
        if snap.version != SNAPSHOT_VERSION {
            return Err(Error::Config(format!("unsupported snapshot version {}", snap.version)));
        }
        let shape = ConfidenceShape { d: snap.d, n_states: snap.n_states, n_actions: snap.n_actions };
        if snap.pairs.len() != shape.n_states * shape.n_actions {
            return Err(Error::Dimension("snapshot does not cover every pair".into()));
        }
        let mut pairs = Vec::with_capacity(snap.pairs.len());
        for (i, p) in snap.pairs.iter().enumerate() {
            if p.state * shape.n_actions + p.action != i {
                return Err(Error::Config(format!("pair {i} is out of order")));
            }
            if p.l_hat.len() != shape.d {
                return Err(Error::Dimension("l_hat length".into()));
            }
            let v_bar = from_rows(&p.v_bar, shape.d, shape.d, "v_bar")?;
            let v_bar_inv = v_bar
                .clone()
                .cholesky()
                .ok_or_else(|| Error::Config("v_bar is not positive definite".into()))?
                .inverse();
            pairs.push(PairEstimate {
                tau: p.tau,
                l_hat: DVector::from_vec(p.l_hat.clone()),
                p_hat_raw: from_rows(&p.p_hat_raw, shape.n_states, shape.d, "p_hat_raw")?,
                p_hat: from_rows(&p.p_hat, shape.n_states, shape.d, "p_hat")?,
                beta_loss: p.beta_loss,
                beta_dyn: p.beta_dyn,
                v_bar,
                v_bar_inv,
            });
        }
        Ok(Self { shape, lambda: snap.lambda, delta: snap.delta, pairs })
    }
}
