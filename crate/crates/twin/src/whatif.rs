//! What-if service: closed-loop scenario runs and controller grid search.

use incubator_bus::BusClient;
use incubator_core::controller::ControllerConfig;
use incubator_core::whatif::{optimize_controller, run_scenario, Scenario, ScenarioResult};
use incubator_core::thermal::DEFAULT_POWER_W;
use incubator_core::{ModelBParams, ThermalState};
use tokio::task::JoinHandle;
use tracing::warn;

use crate::messages::{
    topics, DriverState, EstimatorStateBody, ScenarioSummary, WhatifRequest, WhatifResultBody,
};
use crate::plant::publish_or_warn;

pub const DEFAULT_HORIZON: f64 = 4000.0;
pub const DEFAULT_DT: f64 = 3.0;
pub const DEFAULT_T_ROOM: f64 = 21.0;

/// Latest live data used to fill in unspecified scenario fields.
#[derive(Debug, Clone, Default)]
pub struct LiveContext {
    pub estimate: Option<EstimatorStateBody>,
    pub driver: Option<DriverState>,
}

/// Resolves a request's scenario against the live context.
pub fn resolve(req: &WhatifRequest, live: &LiveContext) -> Result<Scenario, String> {
    let spec = &req.scenario;
    let initial = match (spec.initial, &live.estimate) {
        (Some(s), _) => s,
        (None, Some(e)) => ThermalState::new(e.t_bair_hat, e.t_heater_hat),
        (None, None) => return Err("no estimator state yet and no initial state given".into()),
    };
    let params = spec
        .params
        .or_else(|| live.estimate.as_ref().map(|e| e.params))
        .unwrap_or(ModelBParams::CALIBRATED);
    let scenario = Scenario {
        params,
        initial,
        t_room: spec.t_room.or(live.driver.as_ref().map(|d| d.t_room)).unwrap_or(DEFAULT_T_ROOM),
        power_w: spec.power_w.or(live.driver.as_ref().map(|d| d.power_w)).unwrap_or(DEFAULT_POWER_W),
        controller: spec.controller.unwrap_or_default(),
        horizon: spec.horizon.unwrap_or(DEFAULT_HORIZON),
        dt: spec.dt.unwrap_or(DEFAULT_DT),
        target_band: spec.target_band,
    };
    Ok(scenario)
}

fn summary(r: &ScenarioResult) -> ScenarioSummary {
    ScenarioSummary {
        controller: r.controller,
        objective: r.objective,
        energy_used: r.energy_used,
        band_violation: r.band_violation,
    }
}

fn rows(r: &ScenarioResult) -> Vec<[f64; 4]> {
    r.trajectory
        .samples()
        .iter()
        .map(|s| [s.t, s.state.t_bair, s.state.t_heater, if s.input.heater_on { 1.0 } else { 0.0 }])
        .collect()
}

fn failure(id: String, error: String) -> WhatifResultBody {
    WhatifResultBody { id, ok: false, error: Some(error), best: None, results: Vec::new(), trajectory: Vec::new() }
}

/// Evaluates a request synchronously.
pub fn evaluate(req: &WhatifRequest, live: &LiveContext) -> WhatifResultBody {
    let id = req.id.clone();
    let scenario = match resolve(req, live) {
        Ok(s) => s,
        Err(e) => return failure(id, e),
    };
    let weights = req.weights.unwrap_or_default();
    match &req.grid {
        None => match run_scenario(&scenario, &weights) {
            Ok(r) => WhatifResultBody {
                id,
                ok: true,
                error: None,
                best: Some(r.controller),
                results: vec![summary(&r)],
                trajectory: rows(&r),
            },
            Err(e) => failure(id, e.to_string()),
        },
        Some(grid) => {
            let candidates: Vec<ControllerConfig> = grid.expand();
            match optimize_controller(&scenario, &candidates, &weights) {
                Ok(opt) => WhatifResultBody {
                    id,
                    ok: true,
                    error: None,
                    best: Some(opt.best),
                    results: opt.ranked.iter().map(summary).collect(),
                    trajectory: opt.ranked.first().map(rows).unwrap_or_default(),
                },
                Err(e) => failure(id, e.to_string()),
            }
        }
    }
}


/// Serves `incubator.whatif.request` one request at a time.
pub async fn whatif_service(bus: BusClient) -> anyhow::Result<JoinHandle<()>> {
    let mut requests = bus.subscribe(topics::WHATIF_REQUEST).await?;
    let mut estimates = bus.subscribe(topics::ESTIMATOR_STATE).await?;
    let mut drivers = bus.subscribe(topics::DRIVER_STATE).await?;
    Ok(tokio::spawn(async move {
        let mut live = LiveContext::default();
        loop {
            tokio::select! {
                Some(m) = estimates.recv() => {
                    if let Ok(e) = m.parse::<EstimatorStateBody>() {
                        live.estimate = Some(e);
                    }
                }
                Some(m) = drivers.recv() => {
                    if let Ok(d) = m.parse::<DriverState>() {
                        live.driver = Some(d);
                    }
                }
                m = requests.recv() => {
                    let Some(m) = m else { return };
                    // estimates routed before the request are already queued
                    while let Some(e) = estimates.try_recv() {
                        if let Ok(e) = e.parse::<EstimatorStateBody>() {
                            live.estimate = Some(e);
                        }
                    }
                    let result = match m.parse::<WhatifRequest>() {
                        Ok(req) => {
                            let ctx = live.clone();
                            tokio::task::spawn_blocking(move || evaluate(&req, &ctx))
                                .await
                                .unwrap_or_else(|e| failure(String::new(), format!("what-if task failed: {e}")))
                        }
                        Err(e) => {
                            warn!(error = %e, "malformed what-if request");
                            let id = m.body.get("id").and_then(|v| v.as_str()).unwrap_or_default().to_owned();
                            failure(id, format!("malformed request: {e}"))
                        }
                    };
                    publish_or_warn(&bus, topics::WHATIF_RESULT, m.ts, &result);
                }
            }
        }
    }))
}
