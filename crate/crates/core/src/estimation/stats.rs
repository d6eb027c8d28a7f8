use nalgebra::{DMatrix, DVector};

use crate::model::Context;

/// Number of rank-one inverse updates between two full re-inversions.
pub const REINVERT_EVERY: u32 = 1024;

/// Sufficient statistics of the ridge regressions at one state-action pair.
///
/// `v_bar = λI + Σ c cᵀ`, `xty_loss = Σ c ℓ` and `xty_trans = Σ e_{s'} cᵀ`
/// (goal arrivals add no row). The inverse of `v_bar` is kept up to date by
/// Sherman–Morrison and rebuilt from scratch every [`REINVERT_EVERY`] visits.
#[derive(Debug, Clone, PartialEq)]
pub struct SaStatistics {
    lambda: f64,
    tau: u64,
    v_bar: DMatrix<f64>,
    v_bar_inv: DMatrix<f64>,
    xty_loss: DVector<f64>,
    xty_trans: DMatrix<f64>,
    since_reinversion: u32,
}

impl SaStatistics {
    pub fn new(d: usize, n_states: usize, lambda: f64) -> Self {
        assert!(lambda > 0.0, "ridge parameter must be positive");
        Self {
            lambda,
            tau: 0,
            v_bar: DMatrix::identity(d, d) * lambda,
            v_bar_inv: DMatrix::identity(d, d) / lambda,
            xty_loss: DVector::zeros(d),
            xty_trans: DMatrix::zeros(n_states, d),
            since_reinversion: 0,
        }
    }

    /// Adds one observed transition `(c, next, loss)`; `next = None` is the goal.
    pub fn record_visit(&mut self, c: &Context, next: Option<usize>, loss: f64) {
        let x = DVector::from_column_slice(c.as_slice());
        self.tau += 1;
        self.v_bar.ger(1.0, &x, &x, 1.0);

        self.since_reinversion += 1;
        if self.since_reinversion >= REINVERT_EVERY {
            self.reinvert();
        } else {
            let vx = &self.v_bar_inv * &x;
            let denom = 1.0 + x.dot(&vx);
            self.v_bar_inv.ger(-1.0 / denom, &vx, &vx, 1.0);
        }

        self.xty_loss.axpy(loss, &x, 1.0);
        if let Some(s) = next {
            let mut row = self.xty_trans.row_mut(s);
            row += x.transpose();
        }
    }

    /// Rebuilds `v_bar_inv` by a Cholesky factorization of `v_bar`.
    pub fn reinvert(&mut self) {
        self.v_bar_inv = self.v_bar.clone().cholesky().expect("design matrix is positive definite").inverse();
        self.since_reinversion = 0;
    }

    /// Forgets every observation.
    pub fn reset(&mut self) {
        *self = Self::new(self.dim(), self.n_states(), self.lambda);
    }

    /// Closed-form ridge solution `V̄⁻¹ Σ c ℓ`.
    pub fn ridge_loss_estimate(&self) -> DVector<f64> {
        &self.v_bar_inv * &self.xty_loss
    }

    /// One ridge regression per next state, sharing `V̄⁻¹`: row `s''` is
    /// `(V̄⁻¹ xty_trans[s'']ᵀ)ᵀ`.
    pub fn ridge_dynamics_estimate(&self) -> DMatrix<f64> {
        &self.xty_trans * &self.v_bar_inv
    }

    /// `‖c‖_{V̄⁻¹} = √(cᵀ V̄⁻¹ c)`.
    pub fn context_norm(&self, c: &Context) -> f64 {
        inverse_norm(&self.v_bar_inv, c.as_slice())
    }

    pub fn tau(&self) -> u64 {
        self.tau
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn dim(&self) -> usize {
        self.v_bar.nrows()
    }

    pub fn n_states(&self) -> usize {
        self.xty_trans.nrows()
    }

    pub fn v_bar(&self) -> &DMatrix<f64> {
        &self.v_bar
    }

    pub fn v_bar_inv(&self) -> &DMatrix<f64> {
        &self.v_bar_inv
    }

    pub fn xty_loss(&self) -> &DVector<f64> {
        &self.xty_loss
    }

    pub fn xty_trans(&self) -> &DMatrix<f64> {
        &self.xty_trans
    }
}

/// `√(cᵀ M c)` for a symmetric positive semi-definite `M`.
pub(crate) fn inverse_norm(m: &DMatrix<f64>, c: &[f64]) -> f64 {
    let d = c.len();
    let mut q = 0.0;
    for i in 0..d {
        for j in 0..d {
            q += c[i] * m[(i, j)] * c[j];
        }
    }
    q.max(0.0).sqrt()
}
