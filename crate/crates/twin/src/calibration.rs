//! Calibration service: fits a model to a window of recorded driver states.

use std::time::Duration;

use incubator_bus::{BusClient, Message};
use anyhow::Context;
use incubator_core::calibration::{calibrate, simulate, CalibrationProblem, ModelKind, MIN_SAMPLES};
use incubator_core::Trajectory;
use tokio::task::JoinHandle;
use tracing::{info, warn};

use crate::datalog::{driver_trajectory, read_messages, Datalog};
use crate::messages::{topics, CalibrationRequest, CalibrationResultBody};
use crate::plant::publish_or_warn;

/// Reads calibration data from a trajectory JSONL file, a recorded
/// driver-state JSONL file, or a run directory.
pub fn load_input(path: &std::path::Path) -> anyhow::Result<Trajectory> {
    let file = if path.is_dir() { path.join(crate::datalog::topic_file_name(topics::DRIVER_STATE)) } else { path.to_path_buf() };
    let text = std::fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?;
    let recorded = text
        .lines()
        .find(|l| !l.trim().is_empty())
        .and_then(|l| serde_json::from_str::<serde_json::Value>(l).ok())
        .is_some_and(|v| v.get("topic").is_some() && v.get("body").is_some());
    if recorded {
        let (messages, corrupt) = read_messages(&file)?;
        if corrupt > 0 {
            warn!(corrupt, "skipped unreadable lines");
        }
        let states: Vec<Message> = messages.into_iter().filter(|m| m.topic == topics::DRIVER_STATE).collect();
        Ok(driver_trajectory(&states))
    } else {
        Ok(Trajectory::from_jsonl(&text)?)
    }
}

/// `t,measured,simulated` rows for plotting a fit.
pub fn fit_csv(kind: ModelKind, theta: &[f64], data: &Trajectory) -> anyhow::Result<String> {
    let sim = simulate(kind, theta, data)?;
    let mut out = String::from("t,measured,simulated\n");
    for (s, y) in data.samples().iter().zip(sim) {
        out.push_str(&format!("{},{},{}\n", s.t, s.state.t_bair, y));
    }
    Ok(out)
}

/// How long to wait for the recorder to catch up with `to_ts`.
pub const DATA_WAIT: Duration = Duration::from_secs(2);

fn failure(id: String, model: ModelKind, error: String) -> CalibrationResultBody {
    CalibrationResultBody {
        id,
        ok: false,
        error: Some(error),
        model,
        theta: Vec::new(),
        cost: 0.0,
        iterations: 0,
        converged: false,
        n_samples: 0,
        residuals: Vec::new(),
    }
}

/// Driver states in `[from_ts, to_ts]`, waiting briefly if the recording has
/// not reached `to_ts` yet.
async fn load_window(log: &Datalog, from_ts: f64, to_ts: f64) -> Result<Vec<Message>, String> {
    let deadline = tokio::time::Instant::now() + DATA_WAIT;
    loop {
        let window = log.query(topics::DRIVER_STATE, from_ts, to_ts).map_err(|e| e.to_string())?;
        let caught_up = !log
            .query(topics::DRIVER_STATE, to_ts, f64::INFINITY)
            .map_err(|e| e.to_string())?
            .is_empty();
        if caught_up || tokio::time::Instant::now() >= deadline {
            return Ok(window);
        }
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
}

pub async fn handle_request(log: &Datalog, req: CalibrationRequest) -> CalibrationResultBody {
    let CalibrationRequest { id, model, from_ts, to_ts, theta0 } = req;
    if !(from_ts.is_finite() && to_ts.is_finite()) || to_ts < from_ts {
        return failure(id, model, format!("invalid window [{from_ts}, {to_ts}]"));
    }
    let window = match load_window(log, from_ts, to_ts).await {
        Ok(w) => w,
        Err(e) => return failure(id, model, e),
    };
    let data = driver_trajectory(&window);
    if data.len() < MIN_SAMPLES {
        return failure(id, model, format!("window holds {} samples, need at least {MIN_SAMPLES}", data.len()));
    }
    let n_samples = data.len();
    let theta0 = theta0.unwrap_or_else(|| model.default_theta0());
    let problem = match CalibrationProblem::new(model, data, theta0) {
        Ok(p) => p,
        Err(e) => return failure(id, model, e.to_string()),
    };
    match tokio::task::spawn_blocking(move || calibrate(&problem)).await {
        Ok(Ok(r)) => CalibrationResultBody {
            id,
            ok: true,
            error: None,
            model,
            theta: r.theta,
            cost: r.cost,
            iterations: r.iterations,
            converged: r.converged,
            n_samples,
            residuals: r.residuals,
        },
        Ok(Err(e)) => failure(id, model, e.to_string()),
        Err(e) => failure(id, model, format!("calibration task failed: {e}")),
    }
}

/// Answers requests one at a time, in arrival order.
pub async fn calibration_service(bus: BusClient, log: Datalog) -> anyhow::Result<JoinHandle<()>> {
    let mut requests = bus.subscribe(topics::CALIBRATION_REQUEST).await?;
    Ok(tokio::spawn(async move {
        while let Some(m) = requests.recv().await {
            let result = match m.parse::<CalibrationRequest>() {
                Ok(req) => {
                    info!(id = %req.id, model = ?req.model, "calibration requested");
                    handle_request(&log, req).await
                }
                Err(e) => {
                    warn!(error = %e, "malformed calibration request");
                    let id = m.body.get("id").and_then(|v| v.as_str()).unwrap_or_default().to_owned();
                    failure(id, ModelKind::B, format!("malformed request: {e}"))
                }
            };
            // stamped with the requester's clock
            publish_or_warn(&bus, topics::CALIBRATION_RESULT, m.ts, &result);
        }
    }))
}
