//! Topics and JSON bodies exchanged by the twin services.
//!
//! Request/reply pairs that share a topic (controller, estimator and
//! orchestrator state topics, plant disturbances) are told apart by a
//! `request` tag on requests and a `status` field on acknowledgements.

use incubator_core::calibration::ModelKind;
use incubator_core::controller::ControllerConfig;
use incubator_core::whatif::{Grid, ObjectiveWeights};
use incubator_core::{ModelBParams, ThermalState};
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub mod topics {
    pub const DRIVER_STATE: &str = "incubator.driver.state";
    pub const DRIVER_COMMAND: &str = "incubator.driver.command";
    pub const CONTROLLER_STATE: &str = "incubator.controller.state";
    pub const PLANT_DISTURBANCE: &str = "incubator.plant.disturbance";
    pub const CALIBRATION_REQUEST: &str = "incubator.calibration.request";
    pub const CALIBRATION_RESULT: &str = "incubator.calibration.result";
    pub const ESTIMATOR_STATE: &str = "incubator.estimator.state";
    pub const WHATIF_REQUEST: &str = "incubator.whatif.request";
    pub const WHATIF_RESULT: &str = "incubator.whatif.result";
    pub const ORCHESTRATOR_STATE: &str = "incubator.orchestrator.state";
    pub const ALL: &str = "incubator.#";
}

/// One sensor sweep published by the plant driver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriverState {
    /// Seconds since the Unix epoch on the plant clock.
    pub time: f64,
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
    /// Mean of t1 and t3.
    pub average_temperature: f64,
    pub t_room: f64,
    /// Heater state from this sample until the next one.
    pub heater_on: bool,
    pub fan_on: bool,
    /// Sample period, s.
    pub execution_interval: f64,
    /// Simulated seconds since the plant started.
    pub elapsed: f64,
    pub power_w: f64,
    pub seq: u64,
}

/// Heater (and optionally fan) command for the driver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriverCommand {
    pub heater_on: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fan_on: Option<bool>,
    /// Driver sample this command answers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seq: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisturbanceKind {
    LidOpen,
    ColdObject,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Disturbance {
    pub kind: DisturbanceKind,
    /// lid_open: conductance multiplier (>= 1); cold_object: heat capacity, J/K.
    #[serde(default)]
    pub magnitude: f64,
    /// Simulated seconds.
    pub duration: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisturbanceStatus {
    Applied,
    Busy,
    Invalid,
    Reverted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceAck {
    pub status: DisturbanceStatus,
    pub disturbance: Disturbance,
    /// Simulated seconds since plant start.
    pub elapsed: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerStateBody {
    pub mode: String,
    pub ll: f64,
    pub ul: f64,
    pub h: f64,
    pub c: f64,
    pub heater_on: bool,
    pub ts: f64,
    /// True while an override replaces the statechart.
    #[serde(default)]
    pub suspended: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rejected: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "request", rename_all = "snake_case")]
pub enum ControllerRequest {
    Configure { config: ControllerConfig },
    /// Hold the heater at `heater_on` regardless of temperature.
    Suspend { heater_on: bool },
    Resume,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorStateBody {
    pub t_bair_hat: f64,
    pub t_heater_hat: f64,
    pub p: [[f64; 2]; 2],
    pub innovation: f64,
    pub s: f64,
    pub normalized_innovation: f64,
    pub anomaly: bool,
    pub ts: f64,
    pub params: ModelBParams,
    pub seq: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "request", rename_all = "snake_case")]
pub enum EstimatorRequest {
    Configure { params: ModelBParams },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRequest {
    #[serde(default)]
    pub id: String,
    pub model: ModelKind,
    pub from_ts: f64,
    pub to_ts: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta0: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResultBody {
    pub id: String,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub model: ModelKind,
    #[serde(default)]
    pub theta: Vec<f64>,
    #[serde(default)]
    pub cost: f64,
    #[serde(default)]
    pub iterations: usize,
    #[serde(default)]
    pub converged: bool,
    #[serde(default)]
    pub n_samples: usize,
    #[serde(default)]
    pub residuals: Vec<f64>,
}

/// Scenario as sent over the bus; missing fields fall back to service defaults
/// and the latest estimator state.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<ModelBParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<ThermalState>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_room: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power_w: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub controller: Option<ControllerConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_band: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Candidates {
    Grid(Grid),
    List(Vec<ControllerConfig>),
}

impl Candidates {
    pub fn expand(&self) -> Vec<ControllerConfig> {
        match self {
            Candidates::Grid(g) => g.candidates(),
            Candidates::List(l) => l.clone(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WhatifRequest {
    #[serde(default)]
    pub id: String,
    #[serde(default)]
    pub scenario: ScenarioSpec,
    /// Absent: run `scenario` alone.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Candidates>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<ObjectiveWeights>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSummary {
    pub controller: ControllerConfig,
    pub objective: f64,
    pub energy_used: f64,
    pub band_violation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WhatifResultBody {
    pub id: String,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best: Option<ControllerConfig>,
    /// Best first.
    #[serde(default)]
    pub results: Vec<ScenarioSummary>,
    /// Predicted `[t, t_bair, t_heater, heater_on]` rows of the best run.
    #[serde(default)]
    pub trajectory: Vec<[f64; 4]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrchestratorStateBody {
    pub state: String,
    pub since: f64,
    #[serde(default)]
    pub last_result: Value,
    pub propose: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alert: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "request", rename_all = "snake_case")]
pub enum OrchestratorRequest {
    SetMode { propose: bool },
    /// Apply the pending controller proposal.
    Confirm,
    /// Drop the pending proposal and resume the current controller.
    Reject,
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn controller_requests_are_tagged() {
        let r: ControllerRequest = serde_json::from_value(json!({"request": "suspend", "heater_on": true})).unwrap();
        assert_eq!(r, ControllerRequest::Suspend { heater_on: true });
        // a controller state body is not a request
        let state = json!({"mode": "cooling", "ll": 35.0, "ul": 40.0, "h": 30.0, "c": 20.0, "heater_on": false, "ts": 0.0});
        assert!(serde_json::from_value::<ControllerRequest>(state.clone()).is_err());
        assert!(serde_json::from_value::<ControllerStateBody>(state).is_ok());
    }

    #[test]
    fn disturbance_kinds_are_snake_case() {
        let d: Disturbance =
            serde_json::from_value(json!({"kind": "lid_open", "magnitude": 2.0, "duration": 60.0})).unwrap();
        assert_eq!(d.kind, DisturbanceKind::LidOpen);
        assert!(serde_json::from_value::<DisturbanceAck>(json!({"kind": "lid_open", "duration": 1.0})).is_err());
    }

    #[test]
    fn candidates_accept_grid_or_list() {
        let g: Candidates =
            serde_json::from_value(json!({"ll": [34, 35], "ul": [40], "h": [30], "c": [20]})).unwrap();
        assert_eq!(g.expand().len(), 2);
        let l: Candidates = serde_json::from_value(json!([{"ll": 34, "ul": 40, "h": 30, "c": 20}])).unwrap();
        assert_eq!(l.expand().len(), 1);
    }
}
