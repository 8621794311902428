//! Controller service: answers every driver state with a heater command.

use incubator_bus::{BusClient, Message};
use incubator_core::controller::{Controller, ControllerConfig};
use tokio::task::JoinHandle;
use tracing::warn;

use crate::messages::{topics, ControllerRequest, ControllerStateBody, DriverCommand, DriverState};
use crate::plant::publish_or_warn;

struct Service {
    controller: Controller,
    /// Heater override while suspended.
    hold: Option<bool>,
    heater_on: bool,
    last_time: f64,
}

impl Service {
    fn state_body(&self, rejected: Option<String>) -> ControllerStateBody {
        let cfg = self.controller.config();
        ControllerStateBody {
            mode: self.controller.mode().name().to_owned(),
            ll: cfg.ll,
            ul: cfg.ul,
            h: cfg.h,
            c: cfg.c,
            heater_on: self.heater_on,
            ts: self.last_time,
            suspended: self.hold.is_some(),
            rejected,
        }
    }

    fn on_driver_state(&mut self, bus: &BusClient, s: &DriverState) {
        self.last_time = s.time;
        self.heater_on = match self.hold {
            Some(on) => on,
            None => self.controller.update(s.average_temperature, s.time),
        };
        let cmd = DriverCommand { heater_on: self.heater_on, fan_on: None, seq: Some(s.seq) };
        publish_or_warn(bus, topics::DRIVER_COMMAND, s.time, &cmd);
        publish_or_warn(bus, topics::CONTROLLER_STATE, s.time, &self.state_body(None));
    }

    fn on_request(&mut self, bus: &BusClient, req: ControllerRequest) {
        let mut rejected = None;
        match req {
            ControllerRequest::Configure { config } => {
                if let Err(e) = self.controller.reconfigure(config) {
                    warn!(error = %e, "rejected controller configuration");
                    rejected = Some(e.to_string());
                }
            }
            ControllerRequest::Suspend { heater_on } => {
                self.hold = Some(heater_on);
                self.controller = Controller::new(*self.controller.config()).expect("current config is valid");
            }
            ControllerRequest::Resume => self.hold = None,
        }
        self.heater_on = self.hold.unwrap_or_else(|| self.controller.mode().heater_on());
        publish_or_warn(bus, topics::CONTROLLER_STATE, self.last_time, &self.state_body(rejected));
    }
}

fn parse_request(msg: &Message) -> Option<ControllerRequest> {
    if !msg.body.contains_key("request") {
        return None;
    }
    msg.parse().map_err(|e| warn!(error = %e, "ignoring malformed controller request")).ok()
}

/// Subscribes to driver states and controller requests. While suspended the
/// statechart is reset and the held heater state is sent instead.
pub async fn controller_run(config: ControllerConfig, bus: BusClient) -> anyhow::Result<JoinHandle<()>> {
    let controller = Controller::new(config)?;
    let mut states = bus.subscribe(topics::DRIVER_STATE).await?;
    let mut requests = bus.subscribe(topics::CONTROLLER_STATE).await?;
    let mut svc = Service { controller, hold: None, heater_on: false, last_time: incubator_bus::now() };
    Ok(tokio::spawn(async move {
        loop {
            tokio::select! {
                biased;
                Some(m) = requests.recv() => if let Some(r) = parse_request(&m) { svc.on_request(&bus, r) },
                m = states.recv() => match m {
                    Some(m) => match m.parse::<DriverState>() {
                        Ok(s) => svc.on_driver_state(&bus, &s),
                        Err(e) => warn!(error = %e, "ignoring malformed driver state"),
                    },
                    None => return,
                },
            }
        }
    }))
}
