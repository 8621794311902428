//! Kalman filter over Model B estimating the unmeasured heatbed temperature,
//! with a windowed normalized-innovation anomaly detector.
//!
//! State is `(t_bair, t_heater)`, input is `(heat_in, t_room)` and only the
//! air temperature is measured. Model B is linear, so the plain filter is
//! exact. The transition matrices compose `dt / substep` euler substeps,
//! which reproduces the fixed-step integrator used everywhere else.

use std::collections::VecDeque;

use nalgebra::{Matrix2, RowVector2, Vector2};
use serde::{Deserialize, Serialize};

use crate::thermal::{ModelBParams, PlantInput, DEFAULT_SUBSTEP};
use crate::{Error, Result};

/// Number of most recent steps the anomaly rule looks at.
pub const ANOMALY_HISTORY: usize = 10;
/// Initial variance of both state components, K².
pub const INITIAL_VARIANCE: f64 = 25.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KalmanConfig {
    pub params: ModelBParams,
    /// Sample period, s.
    pub dt: f64,
    /// Euler substep used to build the transition matrices, s.
    pub substep: f64,
    /// Process noise covariance, row-major, K².
    pub q: [[f64; 2]; 2],
    /// Measurement noise variance, K².
    pub r: f64,
    /// Threshold on |innovation| / sqrt(S).
    pub tau: f64,
    /// Exceedances among the last 10 steps needed to raise the flag.
    pub window: usize,
}

impl Default for KalmanConfig {
    fn default() -> Self {
        KalmanConfig {
            params: ModelBParams::CALIBRATED,
            dt: 3.0,
            substep: DEFAULT_SUBSTEP,
            q: [[1e-4, 0.0], [0.0, 1e-4]],
            r: 0.25,
            tau: 3.0,
            window: 5,
        }
    }
}

impl KalmanConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.substep.is_finite() && self.substep > 0.0) {
            return Err(Error::InvalidArgument(format!("substep must be positive, got {}", self.substep)));
        }
        if !(self.r.is_finite() && self.r > 0.0) {
            return Err(Error::InvalidArgument(format!("R must be positive, got {}", self.r)));
        }
        let q = self.q_matrix();
        let sym = (q[(0, 1)] - q[(1, 0)]).abs() <= 1e-12;
        let psd = q[(0, 0)] >= 0.0 && q[(1, 1)] >= 0.0 && q.determinant() >= -1e-18;
        if !(q.iter().all(|v| v.is_finite()) && sym && psd) {
            return Err(Error::InvalidArgument("Q must be symmetric positive semi-definite".into()));
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(Error::InvalidArgument("tau must be positive".into()));
        }
        if self.window == 0 || self.window > ANOMALY_HISTORY {
            return Err(Error::InvalidArgument(format!("window must be in 1..={ANOMALY_HISTORY}")));
        }
        Ok(())
    }

    fn q_matrix(&self) -> Matrix2<f64> {
        Matrix2::new(self.q[0][0], self.q[0][1], self.q[1][0], self.q[1][1])
    }
}

/// Discrete transition `x+ = A x + B u` for one sample period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Discretization {
    pub a: Matrix2<f64>,
    pub b: Matrix2<f64>,
}

impl Discretization {
    pub fn new(params: &ModelBParams, dt: f64, substep: f64) -> Self {
        let p = params;
        // state (air, heater); input (heat_in, t_room)
        let f = Matrix2::new(
            -(p.g_heater + p.g_box) / p.c_air,
            p.g_heater / p.c_air,
            p.g_heater / p.c_heater,
            -p.g_heater / p.c_heater,
        );
        let g = Matrix2::new(0.0, p.g_box / p.c_air, 1.0 / p.c_heater, 0.0);
        let mut a = Matrix2::identity();
        let mut b = Matrix2::zeros();
        let mut remaining = dt;
        while remaining > 1e-12 {
            let h = remaining.min(substep);
            let step = Matrix2::identity() + f * h;
            a = step * a;
            b = step * b + g * h;
            remaining -= h;
        }
        Discretization { a, b }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorState {
    /// Posterior mean `(t_bair, t_heater)`.
    pub mean: Vector2<f64>,
    pub p: Matrix2<f64>,
    pub innovation: f64,
    pub s: f64,
    pub anomaly: bool,
    exceedances: VecDeque<bool>,
}

impl EstimatorState {
    /// Both temperatures at the first measurement, P = diag(25, 25).
    pub fn initial(first_measurement: f64, config: &KalmanConfig) -> Self {
        let p = Matrix2::from_diagonal_element(INITIAL_VARIANCE);
        EstimatorState {
            mean: Vector2::new(first_measurement, first_measurement),
            p,
            innovation: 0.0,
            s: p[(0, 0)] + config.r,
            anomaly: false,
            exceedances: VecDeque::with_capacity(ANOMALY_HISTORY),
        }
    }

    pub fn t_bair(&self) -> f64 {
        self.mean[0]
    }

    pub fn t_heater(&self) -> f64 {
        self.mean[1]
    }

    pub fn normalized_innovation(&self) -> f64 {
        self.innovation / self.s.sqrt()
    }

    /// Forgets past exceedances and lowers the anomaly flag.
    pub fn reset_anomaly(&mut self) {
        self.exceedances.clear();
        self.anomaly = false;
    }

    pub fn p_rows(&self) -> [[f64; 2]; 2] {
        [[self.p[(0, 0)], self.p[(0, 1)]], [self.p[(1, 0)], self.p[(1, 1)]]]
    }
}

fn input_vector(input: &PlantInput) -> Vector2<f64> {
    Vector2::new(input.heat_in(), input.t_room)
}

fn advance(
    state: &EstimatorState,
    disc: &Discretization,
    config: &KalmanConfig,
    input: &PlantInput,
    z: f64,
) -> EstimatorState {
    let q = config.q_matrix();
    let x_prior = disc.a * state.mean + disc.b * input_vector(input);
    let p_prior = disc.a * state.p * disc.a.transpose() + q;
    let mut next = state.clone();
    if !z.is_finite() {
        next.mean = x_prior;
        next.p = symmetrize(p_prior);
        return next;
    }
    let h = RowVector2::new(1.0, 0.0);
    let innovation = z - x_prior[0];
    let s = p_prior[(0, 0)] + config.r;
    let k: Vector2<f64> = p_prior * h.transpose() / s;
    let i_kh = Matrix2::identity() - k * h;
    let p_post = i_kh * p_prior * i_kh.transpose() + k * config.r * k.transpose();
    next.mean = x_prior + k * innovation;
    next.p = symmetrize(p_post);
    next.innovation = innovation;
    next.s = s;
    if next.exceedances.len() == ANOMALY_HISTORY {
        next.exceedances.pop_front();
    }
    next.exceedances.push_back(innovation.abs() / s.sqrt() > config.tau);
    next.anomaly = next.exceedances.iter().filter(|e| **e).count() >= config.window;
    next
}

fn symmetrize(p: Matrix2<f64>) -> Matrix2<f64> {
    (p + p.transpose()) * 0.5
}

/// Predicts over one sample period with `input` held constant, then corrects
/// with the air measurement `z`. A non-finite `z` skips the correction.
pub fn kf_step(state: &EstimatorState, config: &KalmanConfig, input: &PlantInput, z: f64) -> EstimatorState {
    let disc = Discretization::new(&config.params, config.dt, config.substep);
    advance(state, &disc, config, input, z)
}

/// Filter with cached transition matrices. The first measurement only
/// initializes the state.
#[derive(Debug, Clone)]
pub struct KalmanFilter {
    config: KalmanConfig,
    disc: Discretization,
    state: Option<EstimatorState>,
}

impl KalmanFilter {
    pub fn new(config: KalmanConfig) -> Result<Self> {
        config.validate()?;
        let disc = Discretization::new(&config.params, config.dt, config.substep);
        Ok(KalmanFilter { config, disc, state: None })
    }

    pub fn config(&self) -> &KalmanConfig {
        &self.config
    }

    pub fn state(&self) -> Option<&EstimatorState> {
        self.state.as_ref()
    }

    /// Replaces the model parameters, keeping the current estimate and
    /// clearing the anomaly history.
    pub fn reconfigure(&mut self, params: ModelBParams) -> Result<()> {
        params.validate()?;
        self.config.params = params;
        self.disc = Discretization::new(&params, self.config.dt, self.config.substep);
        if let Some(s) = self.state.as_mut() {
            s.reset_anomaly();
        }
        Ok(())
    }

    /// `input` is what was applied since the previous measurement.
    pub fn update(&mut self, input: &PlantInput, z: f64) -> &EstimatorState {
        let next = match &self.state {
            None if z.is_finite() => EstimatorState::initial(z, &self.config),
            None => return self.state.get_or_insert_with(|| EstimatorState::initial(f64::NAN, &self.config)),
            Some(s) => advance(s, &self.disc, &self.config, input, z),
        };
        self.state.insert(next)
    }
}
