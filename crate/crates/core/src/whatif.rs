//! Closed-loop what-if simulation and exhaustive controller-parameter search.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controller::{self, ControllerConfig, ControllerMode};
use crate::thermal::{Model, ModelBParams, PlantInput, Sample, ThermalState, Trajectory, DEFAULT_SUBSTEP};
use crate::{Error, Result};

/// Objective = alpha · energy_used + beta · band_violation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveWeights {
    /// Per joule.
    pub alpha: f64,
    /// Per K²·s.
    pub beta: f64,
}

impl Default for ObjectiveWeights {
    fn default() -> Self {
        ObjectiveWeights { alpha: 0.001, beta: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub params: ModelBParams,
    pub initial: ThermalState,
    pub t_room: f64,
    pub power_w: f64,
    pub controller: ControllerConfig,
    /// Simulated time, s.
    pub horizon: f64,
    /// Control period, s.
    pub dt: f64,
    /// Band the violation is measured against; the candidate's own
    /// `(ll, ul)` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_band: Option<(f64, f64)>,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.controller.validate()?;
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::InvalidArgument(format!("horizon must be positive, got {}", self.horizon)));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.power_w.is_finite() && self.power_w >= 0.0 && self.t_room.is_finite() && self.initial.is_finite()) {
            return Err(Error::InvalidArgument("power, room and initial temperatures must be finite".into()));
        }
        if let Some((lo, hi)) = self.target_band {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::InvalidArgument(format!("target band ({lo}, {hi}) is not ordered")));
            }
        }
        Ok(())
    }

    pub fn with_controller(&self, controller: ControllerConfig) -> Scenario {
        Scenario { controller, ..self.clone() }
    }

    fn band(&self) -> (f64, f64) {
        self.target_band.unwrap_or((self.controller.ll, self.controller.ul))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioResult {
    pub controller: ControllerConfig,
    pub trajectory: Trajectory,
    pub objective: f64,
    /// J.
    pub energy_used: f64,
    /// K²·s.
    pub band_violation: f64,
}

/// Deterministic closed-loop run: noise-free Model B plant and the bang-bang
/// controller sampled every `dt`, the command held until the next sample.
/// The plant is integrated with euler substeps of at most 0.5 s.
pub fn run_scenario(scenario: &Scenario, weights: &ObjectiveWeights) -> Result<ScenarioResult> {
    scenario.validate()?;
    let model = Model::B(scenario.params);
    let (lo, hi) = scenario.band();
    let n_steps = (scenario.horizon / scenario.dt).ceil() as usize;
    let mut traj = Trajectory::new(true);
    let mut state = scenario.initial;
    let mut mode = ControllerMode::Cooling;
    let mut energy = 0.0;
    let mut violation = 0.0;
    let mut t = 0.0;
    for k in 0..n_steps {
        let (next_mode, heater_on) = controller::step(mode, &scenario.controller, state.t_bair, t);
        mode = next_mode;
        let input = PlantInput::new(scenario.power_w, heater_on, scenario.t_room);
        traj.push(Sample { t, state, input })?;
        let t_next = ((k + 1) as f64 * scenario.dt).min(scenario.horizon);
        let h = t_next - t;
        let excess = (lo - state.t_bair).max(state.t_bair - hi).max(0.0);
        violation += excess * excess * h;
        energy += input.heat_in() * h;
        state = model.advance(&state, &input, h, DEFAULT_SUBSTEP.min(h));
        t = t_next;
    }
    let last_input = traj.last().map(|s| s.input).unwrap_or(PlantInput::new(scenario.power_w, false, scenario.t_room));
    traj.push(Sample { t, state, input: last_input })?;
    Ok(ScenarioResult {
        controller: scenario.controller,
        trajectory: traj,
        objective: weights.alpha * energy + weights.beta * violation,
        energy_used: energy,
        band_violation: violation,
    })
}

/// Axes of a candidate grid; the candidates are their cartesian product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub ll: Vec<f64>,
    pub ul: Vec<f64>,
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl Grid {
    pub fn candidates(&self) -> Vec<ControllerConfig> {
        let mut out = Vec::with_capacity(self.ll.len() * self.ul.len() * self.h.len() * self.c.len());
        for &ll in &self.ll {
            for &ul in &self.ul {
                for &h in &self.h {
                    for &c in &self.c {
                        out.push(ControllerConfig { ll, ul, h, c });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct Optimization {
    pub best: ControllerConfig,
    /// Best first.
    pub ranked: Vec<ScenarioResult>,
}

fn rank(a: &ScenarioResult, b: &ScenarioResult) -> std::cmp::Ordering {
    a.objective
        .total_cmp(&b.objective)
        .then(a.energy_used.total_cmp(&b.energy_used))
        .then_with(|| {
            let (ka, kb) = (a.controller.key(), b.controller.key());
            ka.iter().zip(kb.iter()).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
        })
}

/// Evaluates every candidate on `base` and returns the one with the lowest
/// objective, ties going to lower energy and then to the lexicographically
/// smaller `(ll, ul, h, c)`.
pub fn optimize_controller(
    base: &Scenario,
    candidates: &[ControllerConfig],
    weights: &ObjectiveWeights,
) -> Result<Optimization> {
    if candidates.is_empty() {
        return Err(Error::InvalidArgument("candidate grid is empty".into()));
    }
    for cand in candidates {
        cand.validate().map_err(|e| {
            Error::InvalidArgument(format!(
                "candidate (ll={}, ul={}, h={}, c={}) invalid: {e}",
                cand.ll, cand.ul, cand.h, cand.c
            ))
        })?;
    }
    let mut ranked = candidates
        .par_iter()
        .map(|cand| run_scenario(&base.with_controller(*cand), weights))
        .collect::<Result<Vec<_>>>()?;
    ranked.sort_by(rank);
    Ok(Optimization { best: ranked[0].controller, ranked })
}
