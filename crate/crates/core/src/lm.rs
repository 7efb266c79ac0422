//! Levenberg-Marquardt with central-difference Jacobians.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LmConfig {
    pub max_iterations: usize,
    /// Stop when `‖Jᵀ r‖_∞` falls below this.
    pub gradient_tol: f64,
    /// Stop when `‖δ‖ ≤ step_tol (‖θ‖ + step_tol)`.
    pub step_tol: f64,
    /// Relative finite-difference step.
    pub fd_step: f64,
    pub max_rejections: usize,
    pub initial_damping: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            gradient_tol: 1e-10,
            step_tol: 1e-12,
            fd_step: 1e-6,
            max_rejections: 25,
            initial_damping: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// The starting cost was already below `1e-16`.
    AlreadyConverged,
    Gradient,
    Step,
    MaxIterations,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LmIteration {
    pub iteration: usize,
    /// `Σ r²` after the iteration.
    pub cost: f64,
    pub damping: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmReport {
    pub initial_cost: f64,
    pub final_cost: f64,
    pub iterations: Vec<LmIteration>,
    pub stop: StopReason,
}

impl LmReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("iteration,cost,damping,accepted\n");
        for it in &self.iterations {
            s.push_str(&format!("{},{:.16e},{:.16e},{}\n", it.iteration, it.cost, it.damping, it.accepted as u8));
        }
        s
    }
}

/// Central-difference Jacobian; the step for parameter `j` is `h max(|θ_j|, 1)`.
pub fn numeric_jacobian<F>(f: &F, x: &DVector<f64>, h: f64) -> DMatrix<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let cols: Vec<DVector<f64>> = (0..x.len())
        .map(|j| {
            let step = h * x[j].abs().max(1.0);
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[j] += step;
            xm[j] -= step;
            (f(&xp) - f(&xm)) / (xp[j] - xm[j])
        })
        .collect();
    DMatrix::from_columns(&cols)
}

/// Minimizes `Σ r(θ)²` with Marquardt's diagonal damping.
pub fn minimize<F>(f: F, x0: &DVector<f64>, cfg: &LmConfig) -> Result<(DVector<f64>, LmReport)>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let mut x = x0.clone();
    let mut r = f(&x);
    let mut cost = r.norm_squared();
    let initial_cost = cost;
    let mut iterations = Vec::new();
    if cost < 1e-16 {
        return Ok((x, LmReport { initial_cost, final_cost: cost, iterations, stop: StopReason::AlreadyConverged }));
    }
    let mut lambda = cfg.initial_damping;
    let mut stop = StopReason::MaxIterations;
    let mut iter = 0;
    'outer: while iter < cfg.max_iterations {
        let j = numeric_jacobian(&f, &x, cfg.fd_step);
        let g = j.transpose() * &r;
        if g.amax() < cfg.gradient_tol {
            stop = StopReason::Gradient;
            break;
        }
        let h = j.transpose() * &j;
        let mut rejections = 0;
        loop {
            iter += 1;
            let mut a = h.clone();
            for k in 0..a.nrows() {
                a[(k, k)] += lambda * h[(k, k)].max(1e-12);
            }
            let Some(delta) = a.cholesky().map(|c| c.solve(&(-&g))) else {
                lambda *= 10.0;
                rejections += 1;
                if rejections >= cfg.max_rejections {
                    return Err(Error::DivergedLM);
                }
                continue;
            };
            let small = delta.norm() <= cfg.step_tol * (x.norm() + cfg.step_tol);
            let x_new = &x + &delta;
            let r_new = f(&x_new);
            let c_new = r_new.norm_squared();
            let accepted = c_new.is_finite() && c_new < cost;
            if accepted {
                x = x_new;
                r = r_new;
                cost = c_new;
                lambda = (lambda / 10.0).max(1e-15);
            } else {
                lambda *= 10.0;
                rejections += 1;
            }
            iterations.push(LmIteration { iteration: iter, cost, damping: lambda, accepted });
            if small {
                stop = StopReason::Step;
                break 'outer;
            }
            if accepted {
                break;
            }
            if rejections >= cfg.max_rejections {
                return Err(Error::DivergedLM);
            }
            if iter >= cfg.max_iterations {
                break 'outer;
            }
        }
    }
    Ok((x, LmReport { initial_cost, final_cost: cost, iterations, stop }))
}
