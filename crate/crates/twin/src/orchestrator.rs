//! Self-adaptation supervisor.
//!
//! ```text
//! Monitoring -> CoolingDown -> Experimenting -> Calibrating -> Reconfiguring
//!      ^                                                             |
//!      +------------------ Applying <------------ Optimizing <-------+
//! ```
//!
//! Any failure or timeout resumes the controller and returns to Monitoring.
//! The experiment, cool-down and their timeouts run on the plant clock; the
//! waits for other services use wall-clock timeouts.

use std::time::Duration;

use incubator_bus::{BusClient, Message};
use incubator_core::calibration::ModelKind;
use incubator_core::controller::ControllerConfig;
use incubator_core::whatif::{Grid, ObjectiveWeights};
use incubator_core::{ModelBParams, ThermalState};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::task::JoinHandle;
use tokio::time::Instant;
use tracing::{info, warn};

use crate::messages::{
    topics, CalibrationRequest, CalibrationResultBody, Candidates, ControllerRequest, ControllerStateBody,
    DriverState, EstimatorRequest, EstimatorStateBody, OrchestratorRequest, OrchestratorStateBody, ScenarioSpec,
    WhatifRequest, WhatifResultBody,
};
use crate::plant::publish_or_warn;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OrchestratorConfig {
    /// Wait for operator confirmation before applying a new controller.
    pub propose: bool,
    /// Cool-down ends at room temperature plus this, K.
    pub safe_margin: f64,
    /// Heater-on part of the experiment, simulated s.
    pub heat_duration: f64,
    /// Heater-off part of the experiment, simulated s.
    pub rest_duration: f64,
    /// Simulated s.
    pub cooldown_timeout: f64,
    /// Simulated s.
    pub experiment_timeout: f64,
    /// Wall seconds allowed for each of calibration, estimator
    /// reconfiguration, optimization and controller reconfiguration.
    pub service_timeout: f64,
    /// Wall seconds an unconfirmed proposal is kept.
    pub confirm_timeout: f64,
    /// Candidates for the optimization step; a 27-point grid around the
    /// current configuration when absent.
    pub grid: Option<Grid>,
    pub horizon: f64,
    pub dt: f64,
    pub weights: ObjectiveWeights,
}

impl Default for OrchestratorConfig {
    fn default() -> Self {
        OrchestratorConfig {
            propose: false,
            safe_margin: 2.0,
            heat_duration: 300.0,
            rest_duration: 300.0,
            cooldown_timeout: 5400.0,
            experiment_timeout: 1800.0,
            service_timeout: 30.0,
            confirm_timeout: 900.0,
            grid: None,
            horizon: 4000.0,
            dt: 3.0,
            weights: ObjectiveWeights::default(),
        }
    }
}

/// ll and ul shifted by one kelvin either way, h halved and doubled.
pub fn default_grid(current: &ControllerConfig) -> Grid {
    Grid {
        ll: vec![current.ll - 1.0, current.ll, current.ll + 1.0],
        ul: vec![current.ul - 1.0, current.ul, current.ul + 1.0],
        h: vec![current.h / 2.0, current.h, current.h * 2.0],
        c: vec![current.c],
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Phase {
    Monitoring,
    CoolingDown,
    Experimenting { started_at: f64, heating: bool },
    Calibrating { id: String },
    Reconfiguring { params: ModelBParams },
    Optimizing { id: String, params: ModelBParams },
    Applying { config: ControllerConfig, confirmed: bool },
}

impl Phase {
    fn name(&self) -> &'static str {
        match self {
            Phase::Monitoring => "monitoring",
            Phase::CoolingDown => "cooling_down",
            Phase::Experimenting { .. } => "experimenting",
            Phase::Calibrating { .. } => "calibrating",
            Phase::Reconfiguring { .. } => "reconfiguring",
            Phase::Optimizing { .. } => "optimizing",
            Phase::Applying { .. } => "applying",
        }
    }
}

/// Names of the cycle states in order, starting and ending with monitoring.
pub const CYCLE: [&str; 8] =
    ["monitoring", "cooling_down", "experimenting", "calibrating", "reconfiguring", "optimizing", "applying", "monitoring"];

/// True if `states` (as published) is a run of complete or aborted cycles:
/// each cycle follows [`CYCLE`] and may return to monitoring early.
pub fn follows_cycle_grammar(states: &[&str]) -> bool {
    if states.first() != Some(&"monitoring") {
        return false;
    }
    let mut pos = 0;
    for s in &states[1..] {
        if *s == "monitoring" {
            pos = 0;
            continue;
        }
        if CYCLE.get(pos + 1) != Some(s) {
            return false;
        }
        pos += 1;
    }
    true
}

struct Supervisor {
    bus: BusClient,
    config: OrchestratorConfig,
    phase: Phase,
    since: f64,
    entered: Instant,
    last_result: Value,
    driver: Option<DriverState>,
    estimate: Option<EstimatorStateBody>,
    controller: Option<ControllerStateBody>,
    cycles: u64,
}

impl Supervisor {
    fn now(&self) -> f64 {
        self.driver.as_ref().map_or_else(incubator_bus::now, |d| d.time)
    }

    fn publish_state(&self) {
        let body = OrchestratorStateBody {
            state: self.phase.name().to_owned(),
            since: self.since,
            last_result: self.last_result.clone(),
            propose: self.config.propose,
            alert: None,
        };
        publish_or_warn(&self.bus, topics::ORCHESTRATOR_STATE, self.now(), &body);
    }

    fn enter(&mut self, phase: Phase) {
        info!(from = self.phase.name(), to = phase.name(), "adaptation state change");
        self.phase = phase;
        self.since = self.now();
        self.entered = Instant::now();
        self.publish_state();
    }

    fn controller_request(&self, req: ControllerRequest) {
        publish_or_warn(&self.bus, topics::CONTROLLER_STATE, self.now(), &req);
    }

    fn fail(&mut self, reason: String) {
        warn!(state = self.phase.name(), %reason, "adaptation aborted");
        self.controller_request(ControllerRequest::Resume);
        self.last_result = json!({"ok": false, "state": self.phase.name(), "error": reason});
        self.enter(Phase::Monitoring);
    }

    fn current_controller(&self) -> ControllerConfig {
        self.controller
            .as_ref()
            .map(|c| ControllerConfig { ll: c.ll, ul: c.ul, h: c.h, c: c.c })
            .unwrap_or_default()
    }

    fn next_id(&mut self, what: &str) -> String {
        self.cycles += 1;
        format!("orchestrator-{what}-{}", self.cycles)
    }

    fn on_driver_state(&mut self, s: DriverState) {
        self.driver = Some(s.clone());
        let elapsed = s.time - self.since;
        match self.phase.clone() {
            Phase::CoolingDown => {
                if s.average_temperature <= s.t_room + self.config.safe_margin {
                    self.controller_request(ControllerRequest::Suspend { heater_on: true });
                    self.enter(Phase::Experimenting { started_at: s.time, heating: true });
                } else if elapsed > self.config.cooldown_timeout {
                    self.fail(format!("cool-down exceeded {} s", self.config.cooldown_timeout));
                }
            }
            Phase::Experimenting { started_at, heating } => {
                let run = s.time - started_at;
                if elapsed > self.config.experiment_timeout {
                    self.fail(format!("experiment exceeded {} s", self.config.experiment_timeout));
                } else if run >= self.config.heat_duration + self.config.rest_duration {
                    let id = self.next_id("calibration");
                    let theta0 = self.estimate.as_ref().map(|e| e.params.to_vec());
                    let req = CalibrationRequest { id: id.clone(), model: ModelKind::B, from_ts: started_at, to_ts: s.time, theta0 };
                    self.enter(Phase::Calibrating { id });
                    publish_or_warn(&self.bus, topics::CALIBRATION_REQUEST, s.time, &req);
                } else if heating && run >= self.config.heat_duration {
                    self.controller_request(ControllerRequest::Suspend { heater_on: false });
                    self.phase = Phase::Experimenting { started_at, heating: false };
                }
            }
            _ => {}
        }
    }

    fn on_estimate(&mut self, e: EstimatorStateBody) {
        self.estimate = Some(e.clone());
        match self.phase.clone() {
            Phase::Monitoring if e.anomaly && e.ts >= self.since => {
                self.controller_request(ControllerRequest::Suspend { heater_on: false });
                self.enter(Phase::CoolingDown);
            }
            Phase::Reconfiguring { params } if e.params == params => {
                let id = self.next_id("whatif");
                let current = self.current_controller();
                let req = WhatifRequest {
                    id: id.clone(),
                    scenario: ScenarioSpec {
                        params: Some(params),
                        initial: Some(ThermalState::new(e.t_bair_hat, e.t_heater_hat)),
                        t_room: self.driver.as_ref().map(|d| d.t_room),
                        power_w: self.driver.as_ref().map(|d| d.power_w),
                        controller: Some(current),
                        horizon: Some(self.config.horizon),
                        dt: Some(self.config.dt),
                        target_band: Some((current.ll, current.ul)),
                    },
                    grid: Some(Candidates::Grid(self.config.grid.clone().unwrap_or_else(|| default_grid(&current)))),
                    weights: Some(self.config.weights),
                };
                self.enter(Phase::Optimizing { id, params });
                publish_or_warn(&self.bus, topics::WHATIF_REQUEST, self.now(), &req);
            }
            _ => {}
        }
    }

    fn on_calibration(&mut self, r: CalibrationResultBody) {
        let Phase::Calibrating { id } = &self.phase else { return };
        if r.id != *id {
            return;
        }
        if !r.ok || !r.converged {
            let why = r.error.clone().unwrap_or_else(|| format!("not converged after {} iterations", r.iterations));
            self.fail(format!("calibration failed: {why}"));
            return;
        }
        match ModelBParams::from_slice(&r.theta) {
            Ok(params) => {
                self.last_result = json!({"ok": true, "theta": r.theta, "cost": r.cost, "n_samples": r.n_samples});
                self.enter(Phase::Reconfiguring { params });
                publish_or_warn(&self.bus, topics::ESTIMATOR_STATE, self.now(), &EstimatorRequest::Configure { params });
            }
            Err(e) => self.fail(format!("calibration returned invalid parameters: {e}")),
        }
    }

    fn apply(&self, config: ControllerConfig) {
        self.controller_request(ControllerRequest::Configure { config });
        self.controller_request(ControllerRequest::Resume);
    }

    fn on_whatif(&mut self, r: WhatifResultBody) {
        let Phase::Optimizing { id, params } = self.phase.clone() else { return };
        if r.id != id {
            return;
        }
        let Some(best) = r.best.filter(|_| r.ok) else {
            self.fail(format!("optimization failed: {}", r.error.unwrap_or_default()));
            return;
        };
        self.last_result = json!({
            "ok": true,
            "theta": params.to_vec(),
            "controller": best,
            "objective": r.results.first().map(|s| s.objective),
        });
        let confirmed = !self.config.propose;
        self.enter(Phase::Applying { config: best, confirmed });
        if confirmed {
            self.apply(best);
        }
    }

    fn on_controller(&mut self, c: ControllerStateBody) {
        self.controller = Some(c.clone());
        if let Phase::Applying { config, confirmed: true } = self.phase {
            let applied = ControllerConfig { ll: c.ll, ul: c.ul, h: c.h, c: c.c };
            if !c.suspended && applied == config {
                self.enter(Phase::Monitoring);
            }
        }
    }

    fn on_request(&mut self, req: OrchestratorRequest) {
        match (req, self.phase.clone()) {
            (OrchestratorRequest::SetMode { propose }, _) => {
                self.config.propose = propose;
                self.publish_state();
            }
            (OrchestratorRequest::Confirm, Phase::Applying { config, confirmed: false }) => {
                self.phase = Phase::Applying { config, confirmed: true };
                self.apply(config);
            }
            (OrchestratorRequest::Reject, Phase::Applying { confirmed: false, .. }) => {
                let current = self.current_controller();
                self.last_result["rejected"] = json!(true);
                self.phase = Phase::Applying { config: current, confirmed: true };
                self.controller_request(ControllerRequest::Resume);
            }
            (other, phase) => warn!(request = ?other, state = phase.name(), "ignoring orchestrator request"),
        }
    }

    fn on_wall_tick(&mut self) {
        let waited = self.entered.elapsed();
        let limit = match &self.phase {
            Phase::Calibrating { .. } | Phase::Reconfiguring { .. } | Phase::Optimizing { .. } => self.config.service_timeout,
            Phase::Applying { confirmed: true, .. } => self.config.service_timeout,
            Phase::Applying { confirmed: false, .. } => self.config.confirm_timeout,
            _ => return,
        };
        if waited > Duration::from_secs_f64(limit) {
            if let Phase::Reconfiguring { .. } = self.phase {
                // put back what the estimator had before
                if let Some(e) = &self.estimate {
                    publish_or_warn(&self.bus, topics::ESTIMATOR_STATE, self.now(), &EstimatorRequest::Configure { params: e.params });
                }
            }
            self.fail(format!("no answer within {limit} s"));
        }
    }

    fn dispatch(&mut self, m: Message) {
        let is_request = m.body.contains_key("request");
        match m.topic.as_str() {
            topics::DRIVER_STATE => {
                if let Ok(s) = m.parse() {
                    self.on_driver_state(s);
                }
            }
            topics::ESTIMATOR_STATE if !is_request => {
                if let Ok(e) = m.parse() {
                    self.on_estimate(e);
                }
            }
            topics::CONTROLLER_STATE if !is_request => {
                if let Ok(c) = m.parse() {
                    self.on_controller(c);
                }
            }
            topics::CALIBRATION_RESULT => {
                if let Ok(r) = m.parse() {
                    self.on_calibration(r);
                }
            }
            topics::WHATIF_RESULT => {
                if let Ok(r) = m.parse() {
                    self.on_whatif(r);
                }
            }
            topics::ORCHESTRATOR_STATE if is_request => match m.parse() {
                Ok(r) => self.on_request(r),
                Err(e) => warn!(error = %e, "malformed orchestrator request"),
            },
            _ => {}
        }
    }
}

/// Runs the supervisor over a single `incubator.#` subscription so every
/// input is seen in routing order.
pub async fn orchestrator_run(config: OrchestratorConfig, bus: BusClient) -> anyhow::Result<JoinHandle<()>> {
    let mut sub = bus.subscribe(topics::ALL).await?;
    let mut sup = Supervisor {
        bus: bus.clone(),
        config,
        phase: Phase::Monitoring,
        since: incubator_bus::now(),
        entered: Instant::now(),
        last_result: Value::Null,
        driver: None,
        estimate: None,
        controller: None,
        cycles: 0,
    };
    Ok(tokio::spawn(async move {
        let mut tick = tokio::time::interval(Duration::from_millis(100));
        let mut announced = false;
        loop {
            tokio::select! {
                m = sub.recv() => match m {
                    Some(m) => {
                        // the first state is stamped on the plant clock once it is known
                        if !announced && m.topic == topics::DRIVER_STATE {
                            if let Ok(s) = m.parse::<DriverState>() {
                                sup.driver = Some(s);
                                sup.since = sup.now();
                                sup.publish_state();
                                announced = true;
                            }
                        }
                        sup.dispatch(m);
                    }
                    None => return,
                },
                _ = tick.tick() => sup.on_wall_tick(),
            }
        }
    }))
}
