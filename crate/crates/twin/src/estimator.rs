//! Estimator service: one Kalman update and one published estimate per
//! driver state.

use incubator_bus::{BusClient, Message};
use incubator_core::estimator::{KalmanConfig, KalmanFilter};
use incubator_core::PlantInput;
use tokio::task::JoinHandle;
use tracing::warn;

use crate::messages::{topics, DriverState, EstimatorRequest, EstimatorStateBody};
use crate::plant::publish_or_warn;

fn parse_request(msg: &Message) -> Option<EstimatorRequest> {
    if !msg.body.contains_key("request") {
        return None;
    }
    msg.parse().map_err(|e| warn!(error = %e, "ignoring malformed estimator request")).ok()
}

/// The input used for each prediction is the heater state the driver
/// reported with the previous sample, i.e. what was actually applied.
pub async fn estimator_run(config: KalmanConfig, bus: BusClient) -> anyhow::Result<JoinHandle<()>> {
    let mut kf = KalmanFilter::new(config)?;
    let mut states = bus.subscribe(topics::DRIVER_STATE).await?;
    let mut requests = bus.subscribe(topics::ESTIMATOR_STATE).await?;
    Ok(tokio::spawn(async move {
        let mut prev_input: Option<PlantInput> = None;
        loop {
            tokio::select! {
                biased;
                Some(m) = requests.recv() => match parse_request(&m) {
                    Some(EstimatorRequest::Configure { params }) => {
                        if let Err(e) = kf.reconfigure(params) {
                            warn!(error = %e, "rejected estimator parameters");
                        }
                    }
                    None => {}
                },
                m = states.recv() => {
                    let Some(m) = m else { return };
                    let s = match m.parse::<DriverState>() {
                        Ok(s) => s,
                        Err(e) => {
                            warn!(error = %e, "ignoring malformed driver state");
                            continue;
                        }
                    };
                    let input = prev_input.unwrap_or(PlantInput::new(s.power_w, false, s.t_room));
                    let est = kf.update(&input, s.average_temperature).clone();
                    prev_input = Some(PlantInput::new(s.power_w, s.heater_on, s.t_room));
                    let body = EstimatorStateBody {
                        t_bair_hat: est.t_bair(),
                        t_heater_hat: est.t_heater(),
                        p: est.p_rows(),
                        innovation: est.innovation,
                        s: est.s,
                        normalized_innovation: est.normalized_innovation(),
                        anomaly: est.anomaly,
                        ts: s.time,
                        params: kf.config().params,
                        seq: s.seq,
                    };
                    publish_or_warn(&bus, topics::ESTIMATOR_STATE, s.time, &body);
                }
            }
        }
    }))
}
