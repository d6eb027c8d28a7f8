//! Weighted projection of a raw dynamics estimate onto matrices whose
//! columns are sub-distributions.
//!
//! The objective `tr((P − R) V (P − R)ᵀ)` couples the rows of `P` through `V`,
//! while the feasible set is a product of capped simplices, one per column.
//! We solve it with accelerated projected gradient (restarted on any increase
//! of the objective); each step projects every column exactly, and the
//! Frank–Wolfe gap certifies the objective accuracy.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::ssp::MASS_TOLERANCE;

/// Stopping rule and budget of the projection solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionOptions {
    /// Relative bound on the objective gap, scaled by `max(1, objective)`.
    pub gap_tol: f64,
    pub max_iter: usize,
    pub power_iterations: usize,
}

impl Default for ProjectionOptions {
    fn default() -> Self {
        Self { gap_tol: 1e-9, max_iter: 10_000, power_iterations: 100 }
    }
}

/// Euclidean projection of `x` onto `{y ≥ 0, Σ y ≤ 1}`, in place.
pub fn project_capped_simplex(x: &mut [f64]) {
    let clipped: f64 = x.iter().map(|v| v.max(0.0)).sum();
    if clipped <= 1.0 {
        x.iter_mut().for_each(|v| *v = v.max(0.0));
        return;
    }
    // The constraint Σ y ≤ 1 is active: project onto the simplex.
    let mut u: Vec<f64> = x.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, uj) in u.iter().enumerate() {
        cumsum += uj;
        let t = (cumsum - 1.0) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        }
    }
    x.iter_mut().for_each(|v| *v = (*v - theta).max(0.0));
}

/// Projects every column of `p` onto the capped simplex.
pub fn project_columns(p: &mut DMatrix<f64>) {
    for mut col in p.column_iter_mut() {
        project_capped_simplex(col.as_mut_slice());
    }
}

/// Whether every column is non-negative with mass at most `1 + 1e-9`.
pub fn is_substochastic(p: &DMatrix<f64>) -> bool {
    p.column_iter().all(|col| col.iter().all(|x| *x >= 0.0) && col.sum() <= 1.0 + MASS_TOLERANCE)
}

/// `‖M‖²_V = tr(M V Mᵀ)`.
pub fn weighted_sq_norm(m: &DMatrix<f64>, v: &DMatrix<f64>) -> f64 {
    (m * v).component_mul(m).sum()
}

/// Largest eigenvalue of a symmetric positive-definite matrix by power iteration.
pub fn power_iteration(v: &DMatrix<f64>, steps: usize) -> f64 {
    let n = v.nrows();
    let mut x = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut rayleigh = 0.0;
    for _ in 0..steps {
        let y = v * &x;
        let norm = y.norm();
        if norm == 0.0 {
            return 0.0;
        }
        rayleigh = x.dot(&y);
        x = y / norm;
    }
    rayleigh.max((&x.transpose() * v * &x)[(0, 0)])
}

/// `max_{Q ∈ Ψ} ⟨∇f(P), P − Q⟩`, an upper bound on `f(P) − min f` for convex `f`.
fn frank_wolfe_gap(p: &DMatrix<f64>, grad: &DMatrix<f64>) -> f64 {
    p.column_iter()
        .zip(grad.column_iter())
        .map(|(pc, gc)| pc.dot(&gc) - gc.min().min(0.0))
        .sum::<f64>()
        .max(0.0)
}

fn is_scaled_identity(v: &DMatrix<f64>) -> bool {
    let first = v[(0, 0)];
    (0..v.nrows()).all(|i| (0..v.ncols()).all(|j| if i == j { v[(i, j)] == first } else { v[(i, j)] == 0.0 }))
}

/// `argmin_{P ∈ Ψ} tr((P − p_raw) v_bar (P − p_raw)ᵀ)` with default options.
pub fn project_to_stochastic(p_raw: &DMatrix<f64>, v_bar: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    project_to_stochastic_with(p_raw, v_bar, &ProjectionOptions::default())
}

pub fn project_to_stochastic_with(
    p_raw: &DMatrix<f64>,
    v_bar: &DMatrix<f64>,
    opts: &ProjectionOptions,
) -> Result<DMatrix<f64>> {
    if v_bar.nrows() != v_bar.ncols() || v_bar.nrows() != p_raw.ncols() {
        return Err(Error::Dimension(format!(
            "cannot project a {}x{} matrix under a {}x{} weight",
            p_raw.nrows(),
            p_raw.ncols(),
            v_bar.nrows(),
            v_bar.ncols()
        )));
    }
    if is_substochastic(p_raw) {
        return Ok(p_raw.clone());
    }
    let mut p = p_raw.clone();
    project_columns(&mut p);
    if is_scaled_identity(v_bar) {
        // The objective separates over columns.
        return Ok(p);
    }

    let objective = |x: &DMatrix<f64>| weighted_sq_norm(&(x - p_raw), v_bar);
    let gradient = |x: &DMatrix<f64>| (x - p_raw) * v_bar * 2.0;
    let lipschitz = 2.0 * power_iteration(v_bar, opts.power_iterations) * 1.01;

    let mut y = p.clone();
    let mut f_prev = objective(&p);
    let mut t = 1.0_f64;
    let mut restarted = true;
    let mut gap = frank_wolfe_gap(&p, &gradient(&p));
    for _ in 0..opts.max_iter {
        let mut next = &y - gradient(&y) / lipschitz;
        project_columns(&mut next);
        let f_next = objective(&next);
        if f_next > f_prev {
            if restarted {
                // A plain gradient step no longer decreases the objective in
                // floating point: `p` is optimal to working precision.
                return Ok(p);
            }
            // Momentum overshot: restart from the last accepted iterate.
            y.copy_from(&p);
            t = 1.0;
            restarted = true;
            continue;
        }
        gap = frank_wolfe_gap(&next, &gradient(&next));
        if gap <= opts.gap_tol * f_next.max(1.0) {
            return Ok(next);
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        y = &next + (&next - &p) * ((t - 1.0) / t_next);
        p = next;
        t = t_next;
        f_prev = f_next;
        restarted = false;
    }
    Err(Error::Projection { iterations: opts.max_iter, gap })
}
