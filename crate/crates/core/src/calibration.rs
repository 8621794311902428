//! Least-squares calibration of the thermal models against a measured
//! air-temperature trajectory.
//!
//! The model is simulated from the first measurement with zero-order-hold
//! inputs and compared with every sample. The unweighted sum of squared
//! residuals is minimized with Levenberg–Marquardt using a forward-difference
//! Jacobian and clipping to parameter bounds.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::thermal::{Model, ModelAParams, ModelBParams, ThermalState, Trajectory, DEFAULT_SUBSTEP};
use crate::{Error, Result};

/// Residual reported for every sample when the simulation blows up.
pub const DIVERGENCE_RESIDUAL: f64 = 1e6;
pub const MIN_SAMPLES: usize = 10;

const MAX_ITERATIONS: usize = 200;
const REL_COST_TOL: f64 = 1e-10;
const GRAD_TOL: f64 = 1e-8;
const FD_REL_STEP: f64 = 1e-6;
const LAMBDA_INIT: f64 = 1e-3;
const LAMBDA_MAX: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    A,
    B,
}

impl ModelKind {
    pub fn n_params(self) -> usize {
        match self {
            ModelKind::A => 2,
            ModelKind::B => 4,
        }
    }

    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            ModelKind::A => &["c_air", "g_box"],
            ModelKind::B => &["c_air", "g_box", "c_heater", "g_heater"],
        }
    }

    /// Capacities in [1e-3, 1e5] J/K, conductances in [1e-4, 1e3] J/(K·s).
    pub fn default_bounds(self) -> (Vec<f64>, Vec<f64>) {
        match self {
            ModelKind::A => (vec![1e-3, 1e-4], vec![1e5, 1e3]),
            ModelKind::B => (vec![1e-3, 1e-4, 1e-3, 1e-4], vec![1e5, 1e3, 1e5, 1e3]),
        }
    }

    pub fn default_theta0(self) -> Vec<f64> {
        match self {
            ModelKind::A => ModelAParams::CALIBRATED.to_vec(),
            ModelKind::B => ModelBParams::CALIBRATED.to_vec(),
        }
    }

    pub fn model(self, theta: &[f64]) -> Result<Model> {
        Ok(match self {
            ModelKind::A => Model::A(ModelAParams::from_slice(theta)?),
            ModelKind::B => Model::B(ModelBParams::from_slice(theta)?),
        })
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "a" => Ok(ModelKind::A),
            "b" => Ok(ModelKind::B),
            other => Err(Error::InvalidArgument(format!("unknown model '{other}', expected a or b"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CalibrationProblem {
    pub kind: ModelKind,
    /// Measured air temperature (`state.t_bair`) with the inputs applied
    /// after each sample.
    pub data: Trajectory,
    pub theta0: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl CalibrationProblem {
    /// Problem with default bounds.
    pub fn new(kind: ModelKind, data: Trajectory, theta0: Vec<f64>) -> Result<Self> {
        let (lower, upper) = kind.default_bounds();
        let p = CalibrationProblem { kind, data, theta0, lower, upper };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.kind.n_params();
        if self.data.len() < MIN_SAMPLES {
            return Err(Error::InvalidProblem(format!(
                "need at least {MIN_SAMPLES} samples, got {}",
                self.data.len()
            )));
        }
        if self.theta0.len() != n || self.lower.len() != n || self.upper.len() != n {
            return Err(Error::InvalidProblem(format!("model {:?} takes {n} parameters", self.kind)));
        }
        for i in 0..n {
            let (lo, hi, x) = (self.lower[i], self.upper[i], self.theta0[i]);
            if !(lo > 0.0 && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidProblem(format!("bounds for parameter {i} must satisfy 0 < lo < hi")));
            }
            if !(lo..=hi).contains(&x) {
                return Err(Error::InvalidProblem(format!("initial guess {x} outside [{lo}, {hi}]")));
            }
        }
        for s in self.data.samples() {
            if !(s.state.t_bair.is_finite() && s.input.t_room.is_finite() && s.input.power_w.is_finite()) {
                return Err(Error::InvalidProblem(format!("non-finite measurement at t={}", s.t)));
            }
        }
        Ok(())
    }

    fn within_bounds(&self, theta: &[f64]) -> bool {
        theta.len() == self.kind.n_params()
            && theta.iter().zip(&self.lower).zip(&self.upper).all(|((x, lo), hi)| (*lo..=*hi).contains(x))
    }

    fn clip(&self, theta: &mut [f64]) {
        for ((x, lo), hi) in theta.iter_mut().zip(&self.lower).zip(&self.upper) {
            *x = x.clamp(*lo, *hi);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub kind: ModelKind,
    pub theta: Vec<f64>,
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
    pub residuals: Vec<f64>,
    /// Cost after the initial guess and after every accepted step.
    pub cost_history: Vec<f64>,
}

/// Simulated air temperature at every sample time for parameters `theta`.
/// The heatbed starts at the first air measurement.
pub fn simulate(kind: ModelKind, theta: &[f64], data: &Trajectory) -> Result<Vec<f64>> {
    let model = kind.model(theta)?;
    let samples = data.samples();
    let mut out = Vec::with_capacity(samples.len());
    let Some(first) = samples.first() else {
        return Ok(out);
    };
    let mut state = ThermalState::uniform(first.state.t_bair);
    out.push(state.t_bair);
    for w in samples.windows(2) {
        state = model.advance(&state, &w[0].input, w[1].t - w[0].t, DEFAULT_SUBSTEP);
        out.push(state.t_bair);
    }
    Ok(out)
}

/// `y_i - T_sim(t_i)` for every sample; every entry is
/// [`DIVERGENCE_RESIDUAL`] if the simulation leaves the finite range.
pub fn residuals(theta: &[f64], problem: &CalibrationProblem) -> Result<Vec<f64>> {
    if !problem.within_bounds(theta) {
        return Err(Error::InvalidArgument(format!("parameters {theta:?} outside bounds")));
    }
    Ok(residuals_unchecked(theta, problem))
}

fn residuals_unchecked(theta: &[f64], problem: &CalibrationProblem) -> Vec<f64> {
    let n = problem.data.len();
    match simulate(problem.kind, theta, &problem.data) {
        Ok(sim) if sim.iter().all(|v| v.is_finite()) => {
            problem.data.samples().iter().zip(sim).map(|(s, t)| s.state.t_bair - t).collect()
        }
        _ => vec![DIVERGENCE_RESIDUAL; n],
    }
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|x| x * x).sum()
}

fn jacobian(problem: &CalibrationProblem, theta: &[f64], r0: &[f64]) -> DMatrix<f64> {
    let m = r0.len();
    let n = theta.len();
    let mut jac = DMatrix::zeros(m, n);
    for j in 0..n {
        let mut step = FD_REL_STEP * theta[j].abs().max(problem.lower[j]);
        let mut probe = theta.to_vec();
        if probe[j] + step > problem.upper[j] {
            step = -step;
        }
        probe[j] += step;
        let step = probe[j] - theta[j];
        let r1 = residuals_unchecked(&probe, problem);
        for i in 0..m {
            jac[(i, j)] = (r1[i] - r0[i]) / step;
        }
    }
    jac
}

/// Fits the model parameters by Levenberg–Marquardt.
///
/// Stops when an accepted step lowers the cost by a relative amount below
/// 1e-10, when the gradient norm drops below 1e-8, when the damping grows so
/// large that no step can improve the cost, or after 200 iterations. Only the
/// last case reports `converged = false`; the best parameters seen are
/// returned either way.
pub fn calibrate(problem: &CalibrationProblem) -> Result<CalibrationResult> {
    problem.validate()?;
    let mut theta = problem.theta0.clone();
    let mut r = residuals_unchecked(&theta, problem);
    let mut cost = sum_sq(&r);
    let mut history = vec![cost];
    let mut lambda = LAMBDA_INIT;
    let mut converged = cost == 0.0;
    let mut iterations = 0;

    while !converged && iterations < MAX_ITERATIONS {
        iterations += 1;
        let jac = jacobian(problem, &theta, &r);
        let rv = DVector::from_column_slice(&r);
        let grad = jac.transpose() * &rv;
        if grad.norm() < GRAD_TOL {
            converged = true;
            break;
        }
        let jtj = jac.transpose() * &jac;
        let diag_floor = jtj.diagonal().max() * 1e-12;
        loop {
            let mut damped = jtj.clone();
            for k in 0..theta.len() {
                damped[(k, k)] += lambda * jtj[(k, k)].max(diag_floor);
            }
            let step = damped.lu().solve(&(-&grad));
            let Some(step) = step.filter(|s| s.iter().all(|v| v.is_finite())) else {
                lambda *= 10.0;
                if lambda > LAMBDA_MAX {
                    converged = true;
                    break;
                }
                continue;
            };
            let mut candidate: Vec<f64> = theta.iter().zip(step.iter()).map(|(x, d)| x + d).collect();
            problem.clip(&mut candidate);
            let r_new = residuals_unchecked(&candidate, problem);
            let cost_new = sum_sq(&r_new);
            if cost_new < cost {
                let rel = (cost - cost_new) / cost;
                theta = candidate;
                r = r_new;
                cost = cost_new;
                history.push(cost);
                lambda = (lambda / 10.0).max(1e-12);
                if rel < REL_COST_TOL || cost == 0.0 {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
            if lambda > LAMBDA_MAX {
                converged = true;
                break;
            }
        }
    }

    Ok(CalibrationResult {
        kind: problem.kind,
        theta,
        cost: sum_sq(&r),
        iterations,
        converged,
        residuals: r,
        cost_history: history,
    })
}
