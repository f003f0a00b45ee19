//! Damped least squares for small dense problems.
//!
//! Both the kaleidoscopic bundle adjustment (8 parameters) and the PnP pose
//! refinement (6 parameters) run through this solver. Jacobians default to
//! forward finite differences.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::Result;

pub trait LeastSquaresProblem {
    fn residuals(&self, params: &DVector<f64>) -> Result<DVector<f64>>;

    fn jacobian(
        &self,
        params: &DVector<f64>,
        residuals: &DVector<f64>,
        step: f64,
    ) -> Result<DMatrix<f64>> {
        forward_difference_jacobian(self, params, residuals, step)
    }
}

/// Forward differences `(r(x + h·eₖ) − r(x)) / h`, one column per parameter.
pub fn forward_difference_jacobian<P: LeastSquaresProblem + ?Sized>(
    problem: &P,
    params: &DVector<f64>,
    residuals: &DVector<f64>,
    step: f64,
) -> Result<DMatrix<f64>> {
    let mut jac = DMatrix::zeros(residuals.len(), params.len());
    let mut x = params.clone();
    for k in 0..params.len() {
        x[k] = params[k] + step;
        let r = problem.residuals(&x)?;
        jac.set_column(k, &((r - residuals) / step));
        x[k] = params[k];
    }
    Ok(jac)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LmConfig {
    pub initial_damping: f64,
    pub damping_increase: f64,
    pub damping_decrease: f64,
    pub max_damping: f64,
    pub max_iterations: usize,
    /// Stop when `(c_old − c_new) / c_old` falls below this.
    pub cost_tolerance: f64,
    /// Stop when `‖Jᵀr‖∞` falls below this.
    pub gradient_tolerance: f64,
    /// Stop when `‖δ‖ ≤ tol · (‖x‖ + tol)`.
    pub step_tolerance: f64,
    pub jacobian_step: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            initial_damping: 1e-3,
            damping_increase: 10.0,
            damping_decrease: 10.0,
            max_damping: 1e16,
            max_iterations: 100,
            cost_tolerance: 1e-12,
            gradient_tolerance: 1e-10,
            step_tolerance: 1e-12,
            jacobian_step: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    CostTolerance,
    GradientTolerance,
    StepTolerance,
    ZeroCost,
    MaxIterations,
    /// No decreasing step found even at maximum damping.
    DampingExhausted,
}

impl Termination {
    pub fn converged(self) -> bool {
        !matches!(self, Termination::MaxIterations | Termination::DampingExhausted)
    }
}

#[derive(Debug, Clone)]
pub struct LmOutcome {
    pub params: DVector<f64>,
    pub residuals: DVector<f64>,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub iterations: usize,
    pub accepted_steps: usize,
    pub termination: Termination,
}

/// Minimizes `‖r(x)‖²` from `init`.
///
/// Steps solve `(JᵀJ + λ·diag(JᵀJ)) δ = −Jᵀr` and are only accepted when
/// they strictly decrease the cost, so the returned cost never exceeds the
/// initial one. A step whose residual evaluation fails counts as rejected.
pub fn minimize<P: LeastSquaresProblem + ?Sized>(
    problem: &P,
    init: DVector<f64>,
    config: &LmConfig,
) -> Result<LmOutcome> {
    let mut x = init;
    let mut r = problem.residuals(&x)?;
    let mut cost = r.norm_squared();
    let initial_cost = cost;
    let mut lambda = config.initial_damping;
    let mut iterations = 0;
    let mut accepted_steps = 0;

    let termination = 'outer: loop {
        if cost == 0.0 {
            break Termination::ZeroCost;
        }
        if iterations >= config.max_iterations {
            break Termination::MaxIterations;
        }
        iterations += 1;

        let jac = problem.jacobian(&x, &r, config.jacobian_step)?;
        let gradient = jac.transpose() * &r;
        if gradient.amax() < config.gradient_tolerance {
            break Termination::GradientTolerance;
        }
        let jtj = jac.transpose() * &jac;
        let diag_floor = jtj.diagonal().max() * 1e-12;

        loop {
            let mut damped = jtj.clone();
            for i in 0..damped.nrows() {
                damped[(i, i)] += lambda * jtj[(i, i)].max(diag_floor);
            }
            let step = damped.cholesky().map(|c| c.solve(&(-&gradient)));
            if let Some(step) = step {
                if step.norm() <= config.step_tolerance * (x.norm() + config.step_tolerance) {
                    break 'outer Termination::StepTolerance;
                }
                let candidate = &x + &step;
                if let Ok(r_new) = problem.residuals(&candidate) {
                    let new_cost = r_new.norm_squared();
                    if new_cost < cost {
                        let relative = (cost - new_cost) / cost;
                        x = candidate;
                        r = r_new;
                        cost = new_cost;
                        accepted_steps += 1;
                        lambda = (lambda / config.damping_decrease).max(f64::MIN_POSITIVE);
                        if relative < config.cost_tolerance {
                            break 'outer Termination::CostTolerance;
                        }
                        continue 'outer;
                    }
                }
            }
            lambda *= config.damping_increase;
            if lambda > config.max_damping {
                break 'outer Termination::DampingExhausted;
            }
        }
    };

    Ok(LmOutcome {
        params: x,
        residuals: r,
        initial_cost,
        final_cost: cost,
        iterations,
        accepted_steps,
        termination,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Rosenbrock as residuals (1 − x, 10(y − x²)).
    struct Rosenbrock;

    impl LeastSquaresProblem for Rosenbrock {
        fn residuals(&self, p: &DVector<f64>) -> Result<DVector<f64>> {
            Ok(DVector::from_vec(vec![1.0 - p[0], 10.0 * (p[1] - p[0] * p[0])]))
        }
    }

    #[test]
    fn solves_rosenbrock() {
        let out = minimize(&Rosenbrock, DVector::from_vec(vec![-1.2, 1.0]), &LmConfig::default())
            .unwrap();
        assert!(out.termination.converged(), "{:?}", out.termination);
        assert_relative_eq!(out.params[0], 1.0, epsilon = 1e-6);
        assert_relative_eq!(out.params[1], 1.0, epsilon = 1e-6);
        assert!(out.final_cost <= out.initial_cost);
    }

    #[test]
    fn already_optimal() {
        let out = minimize(&Rosenbrock, DVector::from_vec(vec![1.0, 1.0]), &LmConfig::default())
            .unwrap();
        assert_eq!(out.termination, Termination::ZeroCost);
        assert_eq!(out.iterations, 0);
    }

    #[test]
    fn forward_jacobian_of_linear_map() {
        struct Linear;
        impl LeastSquaresProblem for Linear {
            fn residuals(&self, p: &DVector<f64>) -> Result<DVector<f64>> {
                Ok(DVector::from_vec(vec![2.0 * p[0] - p[1], 3.0 * p[1]]))
            }
        }
        let x = DVector::from_vec(vec![0.5, -0.25]);
        let r = Linear.residuals(&x).unwrap();
        let j = Linear.jacobian(&x, &r, 1e-6).unwrap();
        assert_relative_eq!(j, DMatrix::from_row_slice(2, 2, &[2.0, -1.0, 0.0, 3.0]), epsilon = 1e-8);
    }
}
